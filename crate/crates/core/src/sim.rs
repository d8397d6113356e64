//! Reproducible synthetic-data experiments.
//!
//! Every replicate draws from its own counter-derived ChaCha stream, so
//! replicates are independent, order-insensitive, and bit-reproducible
//! whether they run sequentially or in parallel.

use crate::asymptotics::{kwise_limit, solve_limit, Truth};
use crate::error::{Error, Result};
use crate::exec;
use crate::likelihood::{fit_auto, Dataset, FitResult};
use crate::model::{ClusterData, CovariateLaw, SigmaMode, SubsetScheme, TrueLaw};
use crate::quadrature::{gh_rule, DEFAULT_INNER_ORDER};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

/// Which objective a replicate maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Full marginal likelihood.
    Full,
    /// k-wise composite likelihood.
    Kwise(usize),
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::Full => "full".to_string(),
            Estimator::Kwise(k) => format!("kwise{k}"),
        }
    }
}

/// Configuration of one repeated-fit experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub truth: Truth,
    /// Clusters per dataset.
    pub n: usize,
    /// Cluster size.
    pub m: usize,
    pub estimators: Vec<Estimator>,
    pub replicates: usize,
    pub seed: u64,
    /// Sigma handling of the fitted (assumed) model. `Fixed` mirrors the
    /// misspecification experiments; `Free` estimates sigma jointly.
    pub sigma_fit: SigmaMode,
    /// Quadrature order for the fits.
    pub quad_order: usize,
}

impl SimConfig {
    pub fn new(
        truth: Truth,
        n: usize,
        m: usize,
        estimators: Vec<Estimator>,
        replicates: usize,
        seed: u64,
        sigma_fit: SigmaMode,
    ) -> Result<Self> {
        if n < 1 || m < 1 || replicates < 1 {
            return Err(Error::InvalidInput(
                "n, m, and replicates must all be >= 1".into(),
            ));
        }
        if estimators.is_empty() {
            return Err(Error::InvalidInput("need at least one estimator".into()));
        }
        for e in &estimators {
            if let Estimator::Kwise(k) = e {
                if *k < 1 || *k > m {
                    return Err(Error::InvalidInput(format!(
                        "k-wise subset size {k} must lie in 1..={m}"
                    )));
                }
            }
        }
        if let SigmaMode::Fixed(st) = sigma_fit {
            if !(st > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "fixed sigma-tilde must be positive, got {st}"
                )));
            }
        }
        Ok(SimConfig {
            truth,
            n,
            m,
            estimators,
            replicates,
            seed,
            sigma_fit,
            quad_order: DEFAULT_INNER_ORDER,
        })
    }
}

/// Per-estimator aggregate over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// Replicate means of (alpha, beta, sigma).
    pub mean: [f64; 3],
    /// Replicate sample SDs.
    pub sd: [f64; 3],
    /// Monte Carlo SEs: sd / sqrt(replicates).
    pub se: [f64; 3],
    /// Theoretical (alpha, beta) limit from the asymptotics module, when
    /// sigma is fixed.
    pub limit: Option<(f64, f64)>,
    /// Per-replicate estimates in replicate order.
    pub estimates: Vec<[f64; 3]>,
    /// Per-replicate convergence flags.
    pub converged: Vec<bool>,
}

/// Results of `run_experiment`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub config: SimConfig,
    pub summaries: Vec<EstimatorSummary>,
}

/// SplitMix64 step; derives independent per-replicate seeds from
/// (seed, counter).
pub(crate) fn derive_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn sample_covariate(cov: &CovariateLaw, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(x, p) in cov.support() {
        acc += p;
        if u < acc {
            return x;
        }
    }
    cov.support().last().unwrap().0
}

pub(crate) fn sample_law(law: &TrueLaw, rng: &mut impl Rng) -> f64 {
    match *law {
        TrueLaw::Normal { sd } => rand_distr::Normal::new(0.0, sd).unwrap().sample(rng),
        TrueLaw::TwoPointMixture { p, a, b } => {
            if rng.random::<f64>() < p {
                a
            } else {
                b
            }
        }
        TrueLaw::StudentT { df, scale } => {
            scale * rand_distr::StudentT::new(df).unwrap().sample(rng)
        }
        TrueLaw::Uniform { halfwidth } => rng.random_range(-halfwidth..halfwidth),
    }
}

/// Draw a dataset of `n` clusters of size `m` from the truth. Cluster `i`
/// uses ChaCha stream `i` of the given seed, so the dataset is identical
/// however the clusters are generated.
pub fn simulate_dataset(truth: &Truth, n: usize, m: usize, seed: u64) -> Result<Dataset> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidInput("n and m must be >= 1".into()));
    }
    let clusters = exec::map_indexed(n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let x = sample_covariate(&truth.cov, &mut rng);
        let b = sample_law(&truth.law, &mut rng);
        let prob = crate::special::norm_cdf(truth.params0.linear_predictor(x) + b);
        let y: Vec<u8> = (0..m)
            .map(|_| u8::from(rng.random::<f64>() < prob))
            .collect();
        ClusterData::new(x, y).expect("simulated cluster is valid")
    });
    Dataset::new(clusters)
}

/// Run replicated fits for every configured estimator and attach the
/// theoretical limits for comparison.
pub fn run_experiment(config: &SimConfig) -> Result<SimReport> {
    config.truth.params0.validate()?;
    let rule = gh_rule(config.quad_order)?;

    // replicate r: one dataset, one fit per estimator
    let per_rep: Vec<Vec<FitResult>> = {
        let fits = exec::map_indexed(config.replicates, |r| -> Result<Vec<FitResult>> {
            let data = simulate_dataset(
                &config.truth,
                config.n,
                config.m,
                derive_seed(config.seed, r as u64),
            )?;
            config
                .estimators
                .iter()
                .map(|est| {
                    let scheme = match est {
                        Estimator::Full => None,
                        Estimator::Kwise(k) => Some(SubsetScheme::kwise(*k)?),
                    };
                    fit_auto(&data, scheme.as_ref(), config.sigma_fit, &rule)
                })
                .collect()
        });
        fits.into_iter().collect::<Result<_>>()?
    };

    let mut summaries = Vec::with_capacity(config.estimators.len());
    for (ei, est) in config.estimators.iter().enumerate() {
        let estimates: Vec<[f64; 3]> = per_rep
            .iter()
            .map(|fits| {
                let p = &fits[ei].params;
                [p.alpha, p.beta, p.sigma]
            })
            .collect();
        let converged: Vec<bool> = per_rep.iter().map(|fits| fits[ei].converged).collect();

        let reps = config.replicates as f64;
        let mut mean = [0.0; 3];
        let mut sd = [0.0; 3];
        for c in 0..3 {
            mean[c] = estimates.iter().map(|e| e[c]).sum::<f64>() / reps;
            if config.replicates > 1 {
                let ss: f64 = estimates.iter().map(|e| (e[c] - mean[c]).powi(2)).sum();
                sd[c] = (ss / (reps - 1.0)).sqrt();
            }
        }
        let se = [
            sd[0] / reps.sqrt(),
            sd[1] / reps.sqrt(),
            sd[2] / reps.sqrt(),
        ];

        let limit = match config.sigma_fit {
            SigmaMode::Fixed(st) => {
                let lim = match est {
                    Estimator::Full => solve_limit(&config.truth, config.m, st, None),
                    Estimator::Kwise(k) => kwise_limit(&config.truth, *k, st),
                };
                lim.ok().map(|p| (p.alpha, p.beta))
            }
            SigmaMode::Free => None,
        };

        summaries.push(EstimatorSummary {
            estimator: *est,
            mean,
            sd,
            se,
            limit,
            estimates,
            converged,
        });
    }
    Ok(SimReport {
        config: config.clone(),
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Params;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dataset_is_deterministic_given_seed() {
        let truth = Truth::default_example();
        let a = simulate_dataset(&truth, 50, 4, 99).unwrap();
        let b = simulate_dataset(&truth, 50, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_dataset(&truth, 50, 4, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_observation_frequency_matches_closed_form() {
        // P(Y=1 | x=0) = Phi(alpha0 / sqrt(1 + sigma0^2))
        let truth = Truth::default_example();
        let n = 100_000;
        let data = simulate_dataset(&truth, n, 1, 2024).unwrap();
        let (mut count_x0, mut hits_x0) = (0.0, 0.0);
        for c in data.clusters() {
            if c.x() == 0.0 {
                count_x0 += 1.0;
                hits_x0 += c.successes() as f64;
            }
        }
        let p_hat = hits_x0 / count_x0;
        let p = crate::special::norm_cdf(0.5 / 1.25f64.sqrt());
        let se = (p * (1.0 - p) / count_x0).sqrt();
        assert!(
            (p_hat - p).abs() < 4.0 * se,
            "p_hat {p_hat} vs {p} (se {se})"
        );
    }

    #[test]
    fn sigma_zero_limit_gives_iid_bernoulli_rate() {
        // degenerate law is not constructible; approximate with a tiny sd
        let truth = Truth::new(
            Params::free(0.5, 1.0, 1e-8),
            TrueLaw::normal(1e-8).unwrap(),
            CovariateLaw::bernoulli_half(),
        )
        .unwrap();
        let data = simulate_dataset(&truth, 20_000, 2, 5).unwrap();
        let mut hits = 0.0;
        let mut total = 0.0;
        for c in data.clusters() {
            if c.x() == 1.0 {
                hits += c.successes() as f64;
                total += 2.0;
            }
        }
        let p = crate::special::norm_cdf(1.5);
        let se = (p * (1.0 - p) / total).sqrt();
        assert!((hits / total - p).abs() < 4.0 * se);
    }

    #[test]
    fn experiment_is_bit_reproducible() {
        let truth = Truth::default_example();
        let config = SimConfig::new(
            truth,
            60,
            4,
            vec![Estimator::Full, Estimator::Kwise(2)],
            3,
            31,
            SigmaMode::Fixed(0.5),
        )
        .unwrap();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summaries[0].estimates.len(), 3);
        for s in &a.summaries {
            for c in 0..3 {
                assert_abs_diff_eq!(
                    s.se[c],
                    s.sd[c] / 3.0f64.sqrt(),
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn kwise_k_equals_m_matches_full_fit() {
        let truth = Truth::default_example();
        let config = SimConfig::new(
            truth,
            80,
            3,
            vec![Estimator::Full, Estimator::Kwise(3)],
            2,
            11,
            SigmaMode::Fixed(0.5),
        )
        .unwrap();
        let report = run_experiment(&config).unwrap();
        for (full, kw) in report.summaries[0]
            .estimates
            .iter()
            .zip(&report.summaries[1].estimates)
        {
            for c in 0..3 {
                assert_abs_diff_eq!(full[c], kw[c], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn config_validation_rejects_oversized_k() {
        let truth = Truth::default_example();
        assert!(SimConfig::new(
            truth,
            10,
            2,
            vec![Estimator::Kwise(3)],
            1,
            0,
            SigmaMode::Fixed(0.5)
        )
        .is_err());
    }
}
