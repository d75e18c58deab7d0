//! Serde adapter writing a matrix as a row-major array of arrays.

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(a: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
    a.rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect::<Vec<_>>()
        .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(serde::de::Error::custom("ragged matrix"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .map_err(serde::de::Error::custom)
}
