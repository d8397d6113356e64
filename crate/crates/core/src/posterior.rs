//! Posterior mode of the per-cluster integrand.
//!
//! For a cluster with s successes out of m and linear-predictor mean mu, the
//! unnormalized posterior of eta is
//!
//!   g(eta) = Phi(eta)^s (1 - Phi(eta))^(m-s) phi((eta - mu)/sigma) / sigma.
//!
//! log g is strictly concave in eta (probit log-concavity plus the Gaussian
//! prior), so the mode is the unique root of the gradient. The mode and the
//! curvature at the mode center the likelihood quadrature rule and feed the
//! Laplace machinery.

use crate::error::{Error, Result};
use crate::special::{inv_mills, log_norm_cdf, LN_SQRT_2PI};

/// log g(eta) for the cluster posterior (includes all constants).
pub(crate) fn log_g(eta: f64, mu: f64, sigma: f64, s: usize, m: usize) -> f64 {
    let z = (eta - mu) / sigma;
    s as f64 * log_norm_cdf(eta) + (m - s) as f64 * log_norm_cdf(-eta)
        - 0.5 * z * z
        - sigma.ln()
        - LN_SQRT_2PI
}

/// d/d eta log g.
pub(crate) fn dlog_g(eta: f64, mu: f64, sigma: f64, s: usize, m: usize) -> f64 {
    let r = inv_mills(eta);
    let q = inv_mills(-eta);
    s as f64 * r - (m - s) as f64 * q - (eta - mu) / (sigma * sigma)
}

/// d^2/d eta^2 log g; strictly negative for sigma > 0 (and independent of
/// mu, which only shifts the prior).
pub(crate) fn d2log_g(eta: f64, _mu: f64, sigma: f64, s: usize, m: usize) -> f64 {
    let r = inv_mills(eta);
    let q = inv_mills(-eta);
    // d/d eta of inv_mills(eta) = -eta r - r^2; of inv_mills(-eta) = -eta q + q^2
    s as f64 * (-eta * r - r * r) + (m - s) as f64 * (eta * q - q * q)
        - 1.0 / (sigma * sigma)
}

pub(crate) struct Mode {
    pub eta_hat: f64,
    /// -d^2/d eta^2 log g at the mode; > 0 by strict concavity.
    pub neg_curvature: f64,
    pub newton_iters: usize,
}

/// Newton search for the mode with a shrinking bisection bracket as the
/// safeguard (log g is concave, so the gradient is strictly decreasing and
/// the sign at any point tells which side of the mode we are on).
pub(crate) fn mode_and_curvature(mu: f64, sigma: f64, s: usize, m: usize) -> Result<Mode> {
    debug_assert!(sigma > 0.0);
    let span = 60.0f64.max(mu.abs() + 10.0);
    let mut lo = -span;
    let mut hi = span;

    let mut eta = mu;
    let mut iters = 0usize;
    let mut grad = dlog_g(eta, mu, sigma, s, m);
    while grad.abs() > 1e-11 {
        iters += 1;
        if iters > 200 {
            return Err(Error::NewtonDivergence { grad });
        }
        if grad > 0.0 {
            lo = lo.max(eta);
        } else {
            hi = hi.min(eta);
        }
        let curv = d2log_g(eta, mu, sigma, s, m);
        let step = -grad / curv;
        let mut next = eta + step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if next == eta {
            break;
        }
        eta = next;
        grad = dlog_g(eta, mu, sigma, s, m);
    }
    let neg_curvature = -d2log_g(eta, mu, sigma, s, m);
    if !(neg_curvature > 0.0) {
        return Err(Error::ZeroCurvature(eta));
    }
    Ok(Mode {
        eta_hat: eta,
        neg_curvature,
        newton_iters: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_cluster_mode_is_zero() {
        // s = m/2 and mu = 0: everything is symmetric about zero
        let m = mode_and_curvature(0.0, 0.7, 5, 10).unwrap();
        assert_abs_diff_eq!(m.eta_hat, 0.0, epsilon = 1e-11);
        assert!(m.neg_curvature > 1.0 / (0.7 * 0.7));
    }

    #[test]
    fn gradient_residual_below_contract() {
        for (mu, sigma, s, m) in [
            (1.5, 0.5, 0, 40),
            (-2.0, 1.5, 39, 40),
            (0.3, 0.1, 3, 7),
            (0.0, 2.0, 1, 1),
            (4.0, 0.05, 200, 400),
        ] {
            let mode = mode_and_curvature(mu, sigma, s, m).unwrap();
            let g = dlog_g(mode.eta_hat, mu, sigma, s, m);
            assert!(g.abs() < 1e-10, "residual {g} at mu={mu} sigma={sigma} s={s} m={m}");
        }
    }

    #[test]
    fn all_failures_shrink_below_prior_mean() {
        // s = 0 pulls the mode below mu, but the prior keeps it finite
        let mu = 1.0;
        let mode = mode_and_curvature(mu, 0.5, 0, 50).unwrap();
        assert!(mode.eta_hat < mu);
        assert!(mode.eta_hat.is_finite());
    }
}
