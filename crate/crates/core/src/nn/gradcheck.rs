use alloc::collections::BTreeSet;
use alloc::format;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ParamStore;
use crate::error::{Error, Result};

/// Compares the gradients already accumulated in `params` against central
/// differences of `loss_fn` on `coords` randomly chosen scalar coordinates
/// (all of them if the store is smaller).
///
/// Returns the largest `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
/// Parameter values are restored before returning.
pub fn finite_diff_check<F>(params: &mut ParamStore, mut loss_fn: F, step: f64, coords: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&ParamStore) -> f64,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let total = params.num_scalars();
    let picks: BTreeSet<usize> = if coords >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = BTreeSet::new();
        while set.len() < coords {
            set.insert(rng.random_range(0..total));
        }
        set
    };
    let mut worst: f64 = 0.0;
    for k in picks {
        let (id, off) = params.locate(k).expect("coordinate in range");
        let analytic = params.grad(id).data()[off];
        let orig = params.value(id).data()[off];
        params.value_mut(id).data_mut()[off] = orig + step;
        let plus = loss_fn(params);
        params.value_mut(id).data_mut()[off] = orig - step;
        let minus = loss_fn(params);
        params.value_mut(id).data_mut()[off] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss while perturbing `{}`", params.name(id))));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
