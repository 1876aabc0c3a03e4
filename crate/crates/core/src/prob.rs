//! Probability algebra shared by the generating and missingness models.

use crate::error::{Error, Result};

/// Logistic function.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of `p`. Infinite at the endpoints.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Constant weekly probability whose `n_weeks`-fold complement product equals
/// `1 - p_marginal`.
///
/// ```
/// use pregsim::prob::weekly_from_marginal;
///
/// let weekly = weekly_from_marginal(0.20, 34).unwrap();
/// assert!((1.0 - (1.0 - weekly).powi(34) - 0.20).abs() < 1e-12);
/// ```
pub fn weekly_from_marginal(p_marginal: f64, n_weeks: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&p_marginal) || n_weeks == 0 {
        return Err(Error::Domain {
            what: "weekly_from_marginal",
            value: p_marginal,
        });
    }
    // 1 - (1 - p)^(1/n), written to stay accurate for small p.
    Ok(-((-p_marginal).ln_1p() / f64::from(n_weeks)).exp_m1())
}

/// Intercept of a logistic model whose covariate-centered subject has
/// probability `p_marginal`: `-ln(1/p - 1)`.
pub fn balancing_intercept(p_marginal: f64) -> Result<f64> {
    if !(p_marginal > 0.0 && p_marginal < 1.0) {
        return Err(Error::Domain {
            what: "balancing_intercept",
            value: p_marginal,
        });
    }
    Ok(-(1.0 / p_marginal - 1.0).ln())
}

/// Clamp a modeled probability into `[0, 1]`, reporting whether it moved.
pub(crate) fn clamp_unit(p: f64) -> (f64, bool) {
    if p > 1.0 {
        (1.0, true)
    } else if p < 0.0 {
        (0.0, true)
    } else {
        (p, false)
    }
}
