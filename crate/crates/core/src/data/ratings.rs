use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Ratings with dense user and item indices, assigned in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsDataset {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub ratings: Vec<Rating>,
    /// Per-user protected class, when the file has a `group` column.
    pub groups: Option<Vec<u8>>,
}

impl RatingsDataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

/// Reads a ratings CSV with header `user,item,rating[,group]`.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<RatingsDataset, DataError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_ratings(file)
}

pub fn parse_ratings(reader: impl Read) -> Result<RatingsDataset, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| DataError::ParseError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let has_group = match names.as_slice() {
        ["user", "item", "rating"] => false,
        ["user", "item", "rating", "group"] => true,
        _ => {
            return Err(DataError::ParseError {
                line: 1,
                message: format!("expected header user,item,rating[,group], got {}", names.join(",")),
            })
        }
    };

    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Option<u8>> = Vec::new();
    let mut seen = HashSet::new();
    let mut ratings = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| DataError::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| DataError::ParseError { line, message };
        let value: f64 = record[2]
            .parse()
            .map_err(|_| bad(format!("rating {:?} is not a number", &record[2])))?;
        if !value.is_finite() {
            return Err(bad(format!("rating {value} is not finite")));
        }
        let user = *user_index.entry(record[0].to_string()).or_insert_with(|| {
            users.push(record[0].to_string());
            groups.push(None);
            users.len() - 1
        });
        let item = *item_index.entry(record[1].to_string()).or_insert_with(|| {
            items.push(record[1].to_string());
            items.len() - 1
        });
        if has_group {
            let label = match &record[3] {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("group {other:?} is not 0 or 1"))),
            };
            match groups[user] {
                Some(g) if g != label => {
                    return Err(bad(format!("user {} changes group", &record[0])))
                }
                _ => groups[user] = Some(label),
            }
        }
        if !seen.insert((user, item)) {
            return Err(DataError::DuplicateRating {
                user: record[0].to_string(),
                item: record[1].to_string(),
            });
        }
        ratings.push(Rating { user, item, value });
    }
    Ok(RatingsDataset {
        users,
        items,
        ratings,
        groups: has_group.then(|| groups.into_iter().map(|g| g.unwrap_or(0)).collect()),
    })
}
