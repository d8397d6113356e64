//! Domain types for the two-level random-intercept probit model.
//!
//! All types here are immutable value objects after construction; they are
//! freely shared across threads. Validation happens at construction so that
//! downstream numerics can assume the invariants (mean-zero laws, consistent
//! cluster sizes, sigma tied to its fixed value).

use crate::error::{Error, Result};

/// Whether the random-effect SD is estimated or pinned at a known value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// sigma is a free parameter (optimized on the log scale).
    Free,
    /// sigma is held at the given sigma-tilde > 0.
    Fixed(f64),
}

/// Model parameter point theta = (alpha, beta, sigma).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Intercept.
    pub alpha: f64,
    /// Slope on the item covariate.
    pub beta: f64,
    /// Assumed random-effect SD, >= 0.
    pub sigma: f64,
    pub sigma_mode: SigmaMode,
}

impl Params {
    /// Parameter point with free sigma.
    pub fn free(alpha: f64, beta: f64, sigma: f64) -> Self {
        Params {
            alpha,
            beta,
            sigma,
            sigma_mode: SigmaMode::Free,
        }
    }

    /// Parameter point with sigma pinned at `sigma_tilde`.
    pub fn fixed(alpha: f64, beta: f64, sigma_tilde: f64) -> Self {
        Params {
            alpha,
            beta,
            sigma: sigma_tilde,
            sigma_mode: SigmaMode::Fixed(sigma_tilde),
        }
    }

    /// Check the invariants: sigma >= 0, and sigma == sigma-tilde when fixed.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::NegativeSigma(self.sigma));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite parameter point ({}, {}, {})",
                self.alpha, self.beta, self.sigma
            )));
        }
        if let SigmaMode::Fixed(st) = self.sigma_mode {
            if !(st > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "fixed sigma-tilde must be positive, got {st}"
                )));
            }
            if self.sigma != st {
                return Err(Error::FixedSigmaMismatch {
                    sigma: self.sigma,
                    fixed: st,
                });
            }
        }
        Ok(())
    }

    /// Number of free coordinates: (alpha, beta) plus sigma when free.
    pub fn n_free(&self) -> usize {
        match self.sigma_mode {
            SigmaMode::Free => 3,
            SigmaMode::Fixed(_) => 2,
        }
    }

    /// Linear predictor mean alpha + beta * x.
    #[inline]
    pub fn linear_predictor(&self, x: f64) -> f64 {
        self.beta.mul_add(x, self.alpha)
    }
}

/// Validate a parameter point (free-function form of `Params::validate`).
pub fn validate(params: &Params) -> Result<()> {
    params.validate()
}

/// The data-generating random-effect distribution: mean zero, finite
/// variance. The mixture's mean-zero constraint is enforced here, at
/// construction, so downstream code may assume E(b) = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrueLaw {
    Normal { sd: f64 },
    TwoPointMixture { p: f64, a: f64, b: f64 },
    StudentT { df: f64, scale: f64 },
    Uniform { halfwidth: f64 },
}

impl TrueLaw {
    pub fn normal(sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::InvalidInput(format!(
                "normal law needs sd > 0, got {sd}"
            )));
        }
        Ok(TrueLaw::Normal { sd })
    }

    /// Two-point mixture taking value `a` with probability `p`, else `b`;
    /// requires p a + (1-p) b = 0.
    pub fn two_point(p: f64, a: f64, b: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInput(format!(
                "mixture probability must lie in (0,1), got {p}"
            )));
        }
        let mean = p * a + (1.0 - p) * b;
        let scale = a.abs().max(b.abs()).max(1.0);
        if mean.abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "two-point mixture must have mean zero: p a + (1-p) b = {mean}"
            )));
        }
        if a == b {
            return Err(Error::InvalidInput(
                "two-point mixture needs distinct atoms".into(),
            ));
        }
        Ok(TrueLaw::TwoPointMixture { p, a, b })
    }

    /// Mean-zero two-point mixture from `p` and the first atom; the second
    /// atom is solved from the mean constraint.
    pub fn two_point_balanced(p: f64, a: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInput(format!(
                "mixture probability must lie in (0,1), got {p}"
            )));
        }
        Self::two_point(p, a, -p * a / (1.0 - p))
    }

    /// Scaled Student t with df > 2 (finite variance).
    pub fn student_t(df: f64, scale: f64) -> Result<Self> {
        if !(df > 2.0) {
            return Err(Error::InvalidInput(format!(
                "student t law needs df > 2, got {df}"
            )));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "student t law needs scale > 0, got {scale}"
            )));
        }
        Ok(TrueLaw::StudentT { df, scale })
    }

    pub fn uniform(halfwidth: f64) -> Result<Self> {
        if !(halfwidth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "uniform law needs halfwidth > 0, got {halfwidth}"
            )));
        }
        Ok(TrueLaw::Uniform { halfwidth })
    }

    /// Closed-form variance of the law.
    pub fn variance(&self) -> f64 {
        match *self {
            TrueLaw::Normal { sd } => sd * sd,
            TrueLaw::TwoPointMixture { p, a, b } => p * a * a + (1.0 - p) * b * b,
            TrueLaw::StudentT { df, scale } => scale * scale * df / (df - 2.0),
            TrueLaw::Uniform { halfwidth } => halfwidth * halfwidth / 3.0,
        }
    }
}

/// Closed-form variance (free-function form of `TrueLaw::variance`).
pub fn law_variance(law: &TrueLaw) -> f64 {
    law.variance()
}

/// Finite discrete law of the item covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateLaw {
    support: Vec<(f64, f64)>,
}

impl CovariateLaw {
    /// Support points (x, prob); probabilities must be positive and sum to
    /// one within 1e-12.
    pub fn new(support: Vec<(f64, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidInput("covariate law needs support".into()));
        }
        let mut total = 0.0;
        for &(x, p) in &support {
            if !x.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "covariate support point {x} not finite"
                )));
            }
            if !(p > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "covariate probability must be positive, got {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "covariate probabilities sum to {total}, expected 1"
            )));
        }
        Ok(CovariateLaw { support })
    }

    /// Bernoulli(1/2) covariate on {0, 1}.
    pub fn bernoulli_half() -> Self {
        CovariateLaw {
            support: vec![(0.0, 0.5), (1.0, 0.5)],
        }
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }
}

/// One item's covariate and its binary responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterData {
    x: f64,
    y: Vec<u8>,
}

impl ClusterData {
    pub fn new(x: f64, y: Vec<u8>) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("covariate {x} not finite")));
        }
        if y.is_empty() {
            return Err(Error::InvalidInput("cluster needs at least one response".into()));
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidInput(format!(
                "responses must be 0 or 1, got {bad}"
            )));
        }
        Ok(ClusterData { x, y })
    }

    /// Build a cluster with `s` successes out of `m` responses. Responses
    /// are exchangeable given the linear predictor, so the ordering carries
    /// no information.
    pub fn from_counts(x: f64, s: usize, m: usize) -> Result<Self> {
        if s > m {
            return Err(Error::InvalidInput(format!(
                "success count {s} exceeds cluster size {m}"
            )));
        }
        let mut y = vec![1u8; s];
        y.resize(m, 0);
        Self::new(x, y)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn responses(&self) -> &[u8] {
        &self.y
    }

    /// Cluster size m.
    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// Success count s = sum of the responses.
    pub fn successes(&self) -> usize {
        self.y.iter().map(|&v| v as usize).sum()
    }
}

/// The composite-likelihood index scheme: all size-k subsets, unit weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetScheme {
    pub k: usize,
    pub weight: f64,
}

impl SubsetScheme {
    /// k-wise scheme with unit weight (the only shipped configuration).
    pub fn kwise(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidInput("subset size k must be >= 1".into()));
        }
        Ok(SubsetScheme { k, weight: 1.0 })
    }
}
