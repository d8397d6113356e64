//! Posterior-mode profiling, Laplace approximation, and the score-gap
//! diagnostics that tie the mixed-model score to the linear-model score in
//! the true linear predictor as m grows.
//!
//! None of this sits on the fitting path (quadrature is the production
//! integrator); it exists to verify the large-m behaviour numerically.

use crate::error::{Error, Result};
use crate::exec;
use crate::likelihood::score_counts;
use crate::model::{ClusterData, Params, SigmaMode};
use crate::posterior::{self, mode_and_curvature};
use crate::quadrature::QuadratureRule;
use crate::sim::{derive_seed, sample_covariate, sample_law};
use crate::special::LN_SQRT_2PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asymptotics::Truth;

/// Mode of the unnormalized posterior g of the linear predictor, with the
/// curvature there.
#[derive(Debug, Clone, Copy)]
pub struct ProfilePoint {
    /// Maximizer of log g.
    pub eta_hat: f64,
    /// -(d^2/d eta^2) log g at the mode; strictly positive.
    pub neg_curvature: f64,
    pub newton_iters: usize,
}

/// Newton maximization of log g(eta) = s log Phi(eta) +
/// (m-s) log(1-Phi(eta)) + log phi_sigma(eta - alpha - beta x), with a
/// bisection safeguard on the gradient.
pub fn profile_eta(params: &Params, cluster: &ClusterData) -> Result<ProfilePoint> {
    params.validate()?;
    if params.sigma <= 0.0 {
        return Err(Error::BoundaryPoint);
    }
    let mu = params.linear_predictor(cluster.x());
    let mode = mode_and_curvature(mu, params.sigma, cluster.successes(), cluster.m())?;
    Ok(ProfilePoint {
        eta_hat: mode.eta_hat,
        neg_curvature: mode.neg_curvature,
        newton_iters: mode.newton_iters,
    })
}

/// Laplace approximation to the cluster log-likelihood:
/// log g(eta-hat) - log(neg curvature)/2 + log(2 pi)/2.
pub fn laplace_loglik(params: &Params, cluster: &ClusterData) -> Result<f64> {
    let point = profile_eta(params, cluster)?;
    let mu = params.linear_predictor(cluster.x());
    let lg = posterior::log_g(
        point.eta_hat,
        mu,
        params.sigma,
        cluster.successes(),
        cluster.m(),
    );
    Ok(lg - 0.5 * point.neg_curvature.ln() + LN_SQRT_2PI)
}

/// Score of the linear model eta0 = alpha + beta x + b with b ~ N(0,
/// sigma^2), observed at the true linear predictor eta0, in the free
/// coordinates of `params`.
pub fn linear_model_score(params: &Params, eta0: f64, x: f64) -> Vec<f64> {
    let sigma = params.sigma;
    let resid = eta0 - params.linear_predictor(x);
    let s2 = sigma * sigma;
    match params.sigma_mode {
        SigmaMode::Fixed(_) => vec![resid / s2, x * resid / s2],
        SigmaMode::Free => vec![
            resid / s2,
            x * resid / s2,
            resid * resid / (s2 * sigma) - 1.0 / sigma,
        ],
    }
}

/// One row of the score-gap table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub m: usize,
    pub median_gap: f64,
    pub p90_gap: f64,
    pub n_rep: usize,
    pub seed: u64,
}

/// For each m, simulate `n_rep` clusters from the truth and measure the
/// Euclidean distance between the mixed-model score and the linear-model
/// score at the true linear predictor; reports the median and the 90th
/// percentile per m.
///
/// Replicates run on independently seeded streams and aggregate in
/// replicate order, so the table is bit-reproducible for a given seed.
pub fn lemma1_gap(
    params: &Params,
    truth: &Truth,
    m_values: &[usize],
    n_rep: usize,
    seed: u64,
    rule: &QuadratureRule,
) -> Result<Vec<GapRow>> {
    params.validate()?;
    if n_rep == 0 {
        return Err(Error::InvalidInput("n_rep must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(m_values.len());
    for (mi, &m) in m_values.iter().enumerate() {
        let gaps = exec::map_indexed(n_rep, |r| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, (mi * n_rep + r) as u64));
            let x = sample_covariate(&truth.cov, &mut rng);
            let b = sample_law(&truth.law, &mut rng);
            let eta0 = truth.params0.linear_predictor(x) + b;
            let prob = crate::special::norm_cdf(eta0);
            let s = (0..m).filter(|_| rng.random::<f64>() < prob).count();

            let eval = score_counts(params, x, s, m, rule)?;
            let mixed = match params.sigma_mode {
                SigmaMode::Fixed(_) => vec![eval.dalpha, eval.dbeta],
                SigmaMode::Free => vec![eval.dalpha, eval.dbeta, eval.dsigma],
            };
            let linear = linear_model_score(params, eta0, x);
            let gap = mixed
                .iter()
                .zip(&linear)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            Ok(gap)
        });
        let mut gaps = gaps.into_iter().collect::<Result<Vec<f64>>>()?;
        gaps.sort_by(f64::total_cmp);
        rows.push(GapRow {
            m,
            median_gap: quantile_sorted(&gaps, 0.5),
            p90_gap: quantile_sorted(&gaps, 0.9),
            n_rep,
            seed,
        });
    }
    Ok(rows)
}

/// One row of the Laplace-error table: absolute gap between the Laplace and
/// quadrature cluster log-likelihoods across simulated clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceErrRow {
    pub m: usize,
    pub median_abs_err: f64,
    pub p90_abs_err: f64,
    pub n_rep: usize,
    pub seed: u64,
}

/// Median/p90 of |laplace_loglik - cluster_loglik| over simulated clusters,
/// per m.
pub fn laplace_error_table(
    params: &Params,
    truth: &Truth,
    m_values: &[usize],
    n_rep: usize,
    seed: u64,
    rule: &QuadratureRule,
) -> Result<Vec<LaplaceErrRow>> {
    params.validate()?;
    if n_rep == 0 {
        return Err(Error::InvalidInput("n_rep must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(m_values.len());
    for (mi, &m) in m_values.iter().enumerate() {
        let errs = exec::map_indexed(n_rep, |r| -> Result<f64> {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0x9e37, (mi * n_rep + r) as u64));
            let x = sample_covariate(&truth.cov, &mut rng);
            let b = sample_law(&truth.law, &mut rng);
            let prob = crate::special::norm_cdf(truth.params0.linear_predictor(x) + b);
            let s = (0..m).filter(|_| rng.random::<f64>() < prob).count();
            let cluster = ClusterData::from_counts(x, s, m)?;
            let lap = laplace_loglik(params, &cluster)?;
            let quad = crate::likelihood::cluster_loglik(params, &cluster, rule)?;
            Ok((lap - quad).abs())
        });
        let mut errs = errs.into_iter().collect::<Result<Vec<f64>>>()?;
        errs.sort_by(f64::total_cmp);
        rows.push(LaplaceErrRow {
            m,
            median_abs_err: quantile_sorted(&errs, 0.5),
            p90_abs_err: quantile_sorted(&errs, 0.9),
            n_rep,
            seed,
        });
    }
    Ok(rows)
}

/// Ratio H_2(eta) / H_1(eta) of the curvatures of log g at the same eta
/// under two parameter points.
pub fn h_ratio(
    params1: &Params,
    params2: &Params,
    cluster: &ClusterData,
    eta: f64,
) -> Result<f64> {
    params1.validate()?;
    params2.validate()?;
    let curv = |p: &Params| {
        posterior::d2log_g(
            eta,
            p.linear_predictor(cluster.x()),
            p.sigma,
            cluster.successes(),
            cluster.m(),
        )
    };
    let h1 = curv(params1);
    let h2 = curv(params2);
    if h1 == 0.0 || h2 == 0.0 {
        return Err(Error::ZeroCurvature(eta));
    }
    Ok(h2 / h1)
}

/// Nearest-rank quantile of an ascending-sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gh_rule;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn rule() -> QuadratureRule {
        gh_rule(60).unwrap()
    }

    #[test]
    fn symmetric_cluster_profiles_to_zero() {
        let p = Params::free(0.0, 0.0, 0.8);
        let c = ClusterData::from_counts(0.0, 4, 8).unwrap();
        let pt = profile_eta(&p, &c).unwrap();
        assert_abs_diff_eq!(pt.eta_hat, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn all_failures_mode_sits_below_prior_mean() {
        let p = Params::free(0.5, 1.0, 0.5);
        let c = ClusterData::from_counts(1.0, 0, 100).unwrap();
        let pt = profile_eta(&p, &c).unwrap();
        assert!(pt.eta_hat < p.linear_predictor(1.0));
    }

    #[test]
    fn profile_matches_golden_section_oracle() {
        let p = Params::free(0.3, -0.6, 0.9);
        let c = ClusterData::from_counts(1.0, 7, 23).unwrap();
        let pt = profile_eta(&p, &c).unwrap();

        // derivative-free golden-section maximization of log g
        let mu = p.linear_predictor(1.0);
        let f = |eta: f64| posterior::log_g(eta, mu, p.sigma, 7, 23);
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (-20.0, 20.0);
        let (mut c1, mut c2) = (b - phi * (b - a), a + phi * (b - a));
        let (mut f1, mut f2) = (f(c1), f(c2));
        while b - a > 1e-13 {
            if f1 > f2 {
                b = c2;
                c2 = c1;
                f2 = f1;
                c1 = b - phi * (b - a);
                f1 = f(c1);
            } else {
                a = c1;
                c1 = c2;
                f1 = f2;
                c2 = a + phi * (b - a);
                f2 = f(c2);
            }
        }
        assert_abs_diff_eq!(pt.eta_hat, 0.5 * (a + b), epsilon = 1e-10);
    }

    #[test]
    fn laplace_close_to_quadrature_at_moderate_m() {
        let p = Params::free(0.5, 1.0, 0.5);
        let c = ClusterData::from_counts(1.0, 31, 50).unwrap();
        let lap = laplace_loglik(&p, &c).unwrap();
        let quad = crate::likelihood::cluster_loglik(&p, &c, &rule()).unwrap();
        assert_abs_diff_eq!(lap, quad, epsilon = 1e-3);
    }

    #[test]
    fn laplace_error_shrinks_with_m_on_matched_clusters() {
        // matched success fraction, growing m
        let p = Params::free(0.2, 0.5, 0.7);
        let err = |m: usize| {
            let c = ClusterData::from_counts(1.0, (2 * m) / 5, m).unwrap();
            let lap = laplace_loglik(&p, &c).unwrap();
            let quad = crate::likelihood::cluster_loglik(&p, &c, &rule()).unwrap();
            (lap - quad).abs()
        };
        assert!(err(200) < err(10));
    }

    #[test]
    fn linear_model_score_zero_at_exact_residual() {
        let p = Params::fixed(0.5, 1.0, 0.5);
        let g = linear_model_score(&p, p.linear_predictor(1.0), 1.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_model_score_matches_finite_differences() {
        let (eta0, x) = (1.3, 1.0);
        let p = Params::free(0.4, 0.7, 0.6);
        let ell = |alpha: f64, beta: f64, sigma: f64| {
            let r = eta0 - alpha - beta * x;
            -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
                - 0.5 * r * r / (sigma * sigma)
        };
        let h = 1e-6;
        let g = linear_model_score(&p, eta0, x);
        let fd = [
            (ell(p.alpha + h, p.beta, p.sigma) - ell(p.alpha - h, p.beta, p.sigma)) / (2.0 * h),
            (ell(p.alpha, p.beta + h, p.sigma) - ell(p.alpha, p.beta - h, p.sigma)) / (2.0 * h),
            (ell(p.alpha, p.beta, p.sigma + h) - ell(p.alpha, p.beta, p.sigma - h)) / (2.0 * h),
        ];
        for (gi, fdi) in g.iter().zip(fd) {
            assert_abs_diff_eq!(gi, &fdi, epsilon = 1e-8);
        }
    }

    #[test]
    fn doubling_sigma_quarters_the_location_score() {
        let (eta0, x) = (2.0, 1.0);
        let p1 = Params::fixed(0.5, 1.0, 0.5);
        let p2 = Params::fixed(0.5, 1.0, 1.0);
        let g1 = linear_model_score(&p1, eta0, x);
        let g2 = linear_model_score(&p2, eta0, x);
        assert_relative_eq!(g2[0], g1[0] / 4.0, max_relative = 1e-14);
        assert_relative_eq!(g2[1], g1[1] / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn h_ratio_identity_and_limits() {
        let c = ClusterData::from_counts(1.0, 250, 500).unwrap();
        let p1 = Params::fixed(0.5, 1.0, 0.4);
        assert_eq!(h_ratio(&p1, &p1, &c, 0.3).unwrap(), 1.0);

        // m = 500: data curvature dominates, ratio near one
        let p2 = Params::fixed(0.2, 1.3, 0.7);
        let r = h_ratio(&p1, &p2, &c, 0.3).unwrap();
        assert!((r - 1.0).abs() < 0.02, "ratio {r}");

        // m = 2 with wildly different sigma: prior dominates, ratio far from one
        let tiny = ClusterData::from_counts(1.0, 1, 2).unwrap();
        let q1 = Params::fixed(0.5, 1.0, 0.1);
        let q2 = Params::fixed(0.5, 1.0, 2.0);
        let r2 = h_ratio(&q1, &q2, &tiny, 0.0).unwrap();
        assert!((r2 - 1.0).abs() > 0.5, "ratio {r2}");
    }

    #[test]
    fn lemma1_gap_is_reproducible() {
        let truth = Truth::default_example();
        let p = Params::fixed(0.5, 1.0, 1.0);
        let a = lemma1_gap(&p, &truth, &[4, 16], 20, 7, &rule()).unwrap();
        let b = lemma1_gap(&p, &truth, &[4, 16], 20, 7, &rule()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.0);
        assert_eq!(quantile_sorted(&v, 0.9), 4.0);
        assert_eq!(quantile_sorted(&[5.0], 0.5), 5.0);
    }
}
