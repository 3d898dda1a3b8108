use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample budget from Kac's recurrence lemma: the mean return time to an
/// `epsilon`-ball scales as `epsilon^-d`, so covering the attractor at that
/// resolution needs about `prefactor * epsilon^-d` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KacBudget {
    pub epsilon: f64,
    pub d_attr: f64,
    pub prefactor: f64,
    pub n_samples: u64,
}

fn check(epsilon: f64, d_attr: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(d_attr > 0.0 && d_attr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "attractor dimension must be > 0, got {d_attr}"
        )));
    }
    Ok(())
}

pub fn kac_sample_estimate(epsilon: f64, d_attr: f64, prefactor: f64) -> Result<KacBudget> {
    check(epsilon, d_attr)?;
    if !(prefactor > 0.0 && prefactor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "prefactor must be > 0, got {prefactor}"
        )));
    }
    let n = prefactor * epsilon.powf(-d_attr);
    if !n.is_finite() || n > u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!("budget overflows: {n:e}")));
    }
    Ok(KacBudget {
        epsilon,
        d_attr,
        prefactor,
        n_samples: n.round() as u64,
    })
}

/// The prefactor for which the estimate equals `target` samples.
pub fn kac_prefactor_for(target: u64, epsilon: f64, d_attr: f64) -> Result<f64> {
    check(epsilon, d_attr)?;
    Ok(target as f64 * epsilon.powf(d_attr))
}
