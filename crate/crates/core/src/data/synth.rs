use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, VALUATION_FLOOR};
use crate::market::MarketInstance;

/// Balanced synthetic market. Buyers `0..n/2` are group 0 with valuations
/// uniform in `[0.01, 1]`; buyer `n/2 + k` is group 1 and copies buyer `k`,
/// plus `group_shift` on the first `m/2` items. With a zero shift the two
/// classes are exact copies of each other.
pub fn synth_market(n: usize, m: usize, group_shift: f64, seed: u64) -> Result<MarketInstance, DataError> {
    if n == 0 || n % 2 == 1 {
        return Err(DataError::OddN(n));
    }
    if m < 2 {
        return Err(DataError::InvalidParameter("synthetic markets need at least two items"));
    }
    if !(group_shift >= 0.0 && group_shift.is_finite()) {
        return Err(DataError::InvalidParameter("group_shift must be finite and nonnegative"));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Array2::from_shape_fn((half, m), |_| rng.gen_range(VALUATION_FLOOR..=1.0));
    let v = Array2::from_shape_fn((n, m), |(i, j)| {
        if i < half {
            base[[i, j]]
        } else if j < m / 2 {
            base[[i - half, j]] + group_shift
        } else {
            base[[i - half, j]]
        }
    });
    let groups = (0..n).map(|i| u8::from(i >= half)).collect();
    Ok(MarketInstance::new(v, vec![1.0; n], vec![1.0; m], groups)?)
}

/// Copy of `base` with every group-1 valuation row multiplied by `group_scale`.
pub fn make_biased_market(base: &MarketInstance, group_scale: f64) -> Result<MarketInstance, DataError> {
    if !(group_scale > 0.0 && group_scale <= 1.0) {
        return Err(DataError::InvalidParameter("group_scale must lie in (0, 1]"));
    }
    let mut v = base.valuations().to_owned();
    for i in base.group_members(1) {
        v.row_mut(i).mapv_inplace(|x| x * group_scale);
    }
    Ok(base.with_valuations(v)?)
}
