//! Pseudo-true limits of the full-ML and k-wise composite estimators under
//! a misspecified random-effect distribution.
//!
//! As n grows with m fixed, the (composite) ML estimator converges to the
//! parameter point solving the expected-score equation under the truth. We
//! compute that point by maximizing the expected log-(composite-)likelihood
//! (whose stationary point is the score root, avoiding saddle points) and
//! report the residual expected-score norm as the solver contract.
//!
//! The expectation has three nested layers, none of them Monte Carlo:
//! an exact finite sum over the covariate support, a quadrature expectation
//! over the true random-effect law, and an exact binomial sum over the
//! success count given the true linear predictor.

use crate::error::{Error, Result};
use crate::exec;
use crate::likelihood::{binomial, loglik_counts, score_counts, CellEval};
use crate::model::{CovariateLaw, Params, SigmaMode, SubsetScheme, TrueLaw};
use crate::optim::{inf_norm, minimize_bfgs, nelder_mead};
use crate::quadrature::{gh_rule, LawRule, QuadratureRule, DEFAULT_INNER_ORDER, DEFAULT_OUTER_ORDER};
use crate::special::log_norm_cdf;

/// The data-generating configuration: true parameter point, true
/// random-effect law, and covariate law.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub params0: Params,
    pub law: TrueLaw,
    pub cov: CovariateLaw,
}

impl Truth {
    pub fn new(params0: Params, law: TrueLaw, cov: CovariateLaw) -> Result<Self> {
        params0.validate()?;
        Ok(Truth { params0, law, cov })
    }

    /// The default setting used throughout the CLI: alpha0 = 0.5,
    /// beta0 = 1, normal random effects with sigma0 = 0.5, Bernoulli(1/2)
    /// covariate.
    pub fn default_example() -> Self {
        Truth {
            params0: Params::free(0.5, 1.0, 0.5),
            law: TrueLaw::Normal { sd: 0.5 },
            cov: CovariateLaw::bernoulli_half(),
        }
    }
}

/// Quadrature configuration for the expected-objective computations: the
/// inner rule integrates the model's random-effect integral, the outer rule
/// discretizes the expectation over the true law.
#[derive(Debug, Clone)]
pub struct Rules {
    inner: QuadratureRule,
    outer: LawRule,
}

impl Rules {
    /// Default orders: 60 inner, 100 outer.
    pub fn for_truth(truth: &Truth) -> Result<Self> {
        Self::with_orders(truth, DEFAULT_INNER_ORDER, DEFAULT_OUTER_ORDER)
    }

    pub fn with_orders(truth: &Truth, inner_order: usize, outer_order: usize) -> Result<Self> {
        Ok(Rules {
            inner: gh_rule(inner_order)?,
            outer: LawRule::new(&truth.law, outer_order)?,
        })
    }

    pub fn inner(&self) -> &QuadratureRule {
        &self.inner
    }
}

/// Expected per-cluster log-(composite-)likelihood at `fit_params` when the
/// data are generated by `truth` with cluster size `m`.
pub fn expected_loglik(
    fit_params: &Params,
    truth: &Truth,
    m: usize,
    scheme: Option<&SubsetScheme>,
    rules: &Rules,
) -> Result<f64> {
    fit_params.validate()?;
    let table = |x: f64| -> Result<Vec<f64>> {
        match scheme {
            None => (0..=m)
                .map(|s| loglik_counts(fit_params, x, s, m, &rules.inner))
                .collect(),
            Some(sch) => {
                if sch.k > m {
                    return Err(Error::SubsetTooLarge { k: sch.k, m });
                }
                let lk: Vec<f64> = (0..=sch.k)
                    .map(|j| loglik_counts(fit_params, x, j, sch.k, &rules.inner))
                    .collect::<Result<_>>()?;
                Ok((0..=m)
                    .map(|s| {
                        let mut acc = 0.0;
                        for (j, &v) in lk.iter().enumerate() {
                            acc += binomial(s, j) * binomial(m - s, sch.k - j) * v;
                        }
                        sch.weight * acc
                    })
                    .collect())
            }
        }
    };
    outer_expectation(truth, m, rules, table)
}

/// Expected log-(composite-)likelihood together with its gradient in the
/// free coordinates of `fit_params`.
pub(crate) fn expected_score(
    fit_params: &Params,
    truth: &Truth,
    m: usize,
    scheme: Option<&SubsetScheme>,
    rules: &Rules,
) -> Result<(f64, Vec<f64>)> {
    fit_params.validate()?;
    let k_full = scheme.map_or(m, |sch| sch.k);
    let eval_table = |x: f64| -> Result<Vec<CellEval>> {
        if let Some(sch) = scheme {
            if sch.k > m {
                return Err(Error::SubsetTooLarge { k: sch.k, m });
            }
        }
        let base: Vec<CellEval> = (0..=k_full)
            .map(|j| score_counts(fit_params, x, j, k_full, &rules.inner))
            .collect::<Result<_>>()?;
        match scheme {
            None => Ok(base),
            Some(sch) => Ok((0..=m)
                .map(|s| {
                    let mut acc = CellEval::default();
                    for (j, e) in base.iter().enumerate() {
                        let c = sch.weight * binomial(s, j) * binomial(m - s, sch.k - j);
                        acc.loglik += c * e.loglik;
                        acc.dalpha += c * e.dalpha;
                        acc.dbeta += c * e.dbeta;
                        acc.dsigma += c * e.dsigma;
                    }
                    acc
                })
                .collect()),
        }
    };

    let lcs = log_binomials(m);
    let mut value = 0.0;
    let mut grad = [0.0f64; 3];
    for &(x, px) in truth.cov.support() {
        let table = eval_table(x)?;
        let mu0 = truth.params0.linear_predictor(x);
        let mut vx = 0.0;
        let mut gx = [0.0f64; 3];
        for (&b, &w) in rules.outer.nodes().iter().zip(rules.outer.weights()) {
            let eta0 = mu0 + b;
            let lp = log_norm_cdf(eta0);
            let lq = log_norm_cdf(-eta0);
            for (s, e) in table.iter().enumerate() {
                let pmf = (lcs[s] + s as f64 * lp + (m - s) as f64 * lq).exp();
                let ww = w * pmf;
                vx += ww * e.loglik;
                gx[0] += ww * e.dalpha;
                gx[1] += ww * e.dbeta;
                gx[2] += ww * e.dsigma;
            }
        }
        value += px * vx;
        for (g, gxi) in grad.iter_mut().zip(gx) {
            *g += px * gxi;
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    let g = match fit_params.sigma_mode {
        SigmaMode::Free => vec![grad[0], grad[1], grad[2]],
        SigmaMode::Fixed(_) => vec![grad[0], grad[1]],
    };
    Ok((value, g))
}

fn outer_expectation(
    truth: &Truth,
    m: usize,
    rules: &Rules,
    table: impl Fn(f64) -> Result<Vec<f64>>,
) -> Result<f64> {
    let lcs = log_binomials(m);
    let mut total = 0.0;
    for &(x, px) in truth.cov.support() {
        let tab = table(x)?;
        let mu0 = truth.params0.linear_predictor(x);
        let ex = rules.outer.integrate(|b| {
            let eta0 = mu0 + b;
            let lp = log_norm_cdf(eta0);
            let lq = log_norm_cdf(-eta0);
            let mut acc = 0.0;
            for (s, &v) in tab.iter().enumerate() {
                let pmf = (lcs[s] + s as f64 * lp + (m - s) as f64 * lq).exp();
                acc += pmf * v;
            }
            acc
        })?;
        total += px * ex;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(total));
    }
    Ok(total)
}

fn log_binomials(m: usize) -> Vec<f64> {
    (0..=m).map(|s| binomial(m, s).ln()).collect()
}

/// Residual contract for `solve_limit`: expected-score inf-norm at the
/// returned point.
pub const LIMIT_SCORE_TOL: f64 = 1e-8;

/// Pseudo-true limit for cluster size `m` with sigma pinned at
/// `sigma_tilde`: the maximizer of the expected log-(composite-)likelihood
/// over (alpha, beta).
pub fn solve_limit(
    truth: &Truth,
    m: usize,
    sigma_tilde: f64,
    scheme: Option<&SubsetScheme>,
) -> Result<Params> {
    let rules = Rules::for_truth(truth)?;
    let init = (truth.params0.alpha, truth.params0.beta);
    solve_limit_with(truth, m, sigma_tilde, scheme, &rules, init).map(|(p, _)| p)
}

/// Limit solver with explicit rules and warm start; returns the limit and
/// the residual expected-score inf-norm.
pub fn solve_limit_with(
    truth: &Truth,
    m: usize,
    sigma_tilde: f64,
    scheme: Option<&SubsetScheme>,
    rules: &Rules,
    init: (f64, f64),
) -> Result<(Params, f64)> {
    if m < 1 {
        return Err(Error::InvalidInput("cluster size m must be >= 1".into()));
    }
    if !(sigma_tilde > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sigma-tilde must be positive, got {sigma_tilde}"
        )));
    }
    let eval = |v: &[f64]| -> (f64, Vec<f64>) {
        let p = Params::fixed(v[0], v[1], sigma_tilde);
        match expected_score(&p, truth, m, scheme, rules) {
            Ok((val, g)) => (-val, g.into_iter().map(|x| -x).collect()),
            Err(_) => (f64::INFINITY, vec![0.0, 0.0]),
        }
    };
    let mut out = minimize_bfgs(eval, &[init.0, init.1], 1e-9, 300);
    if !(out.converged && out.grad_inf_norm < LIMIT_SCORE_TOL) {
        let (x_nm, _) = nelder_mead(|v| eval(v).0, &out.x, 0.2, 400);
        out = minimize_bfgs(eval, &x_nm, 1e-9, 300);
    }
    let p = Params::fixed(out.x[0], out.x[1], sigma_tilde);
    let (_, g) = expected_score(&p, truth, m, scheme, rules)?;
    let residual = inf_norm(&g);
    if residual > LIMIT_SCORE_TOL {
        return Err(Error::SolverFailure(format!(
            "expected-score residual {residual:.3e} above {LIMIT_SCORE_TOL:.0e} \
             at m={m}, sigma_tilde={sigma_tilde}"
        )));
    }
    Ok((p, residual))
}

/// Limit of the k-wise composite estimator: by the auxiliary-model
/// construction this is the full-ML limit at cluster size k, independent of
/// the original m.
pub fn kwise_limit(truth: &Truth, k: usize, sigma_tilde: f64) -> Result<Params> {
    solve_limit(truth, k, sigma_tilde, None)
}

/// Grid of pseudo-true limits over (m, sigma-tilde).
#[derive(Debug, Clone)]
pub struct LimitSurface {
    m_values: Vec<usize>,
    sigma_tilde_values: Vec<f64>,
    /// Row-major over (m, sigma-tilde); None marks a failed cell.
    limits: Vec<Option<Params>>,
    /// Expected-score inf-norm per cell; NaN for failed cells.
    residual_score_norm: Vec<f64>,
}

impl LimitSurface {
    pub fn m_values(&self) -> &[usize] {
        &self.m_values
    }

    pub fn sigma_tilde_values(&self) -> &[f64] {
        &self.sigma_tilde_values
    }

    pub fn limit(&self, i_m: usize, j_sigma: usize) -> Option<&Params> {
        self.limits[i_m * self.sigma_tilde_values.len() + j_sigma].as_ref()
    }

    pub fn residual(&self, i_m: usize, j_sigma: usize) -> f64 {
        self.residual_score_norm[i_m * self.sigma_tilde_values.len() + j_sigma]
    }

    pub fn n_failed(&self) -> usize {
        self.limits.iter().filter(|c| c.is_none()).count()
    }
}

/// Solve the limit on every grid cell, warm-starting each sigma-tilde sweep
/// within its m-row. Rows are independent and run concurrently; failed
/// cells are flagged rather than fatal.
pub fn limit_surface(
    truth: &Truth,
    m_values: &[usize],
    sigma_tilde_values: &[f64],
) -> Result<LimitSurface> {
    if m_values.is_empty() || sigma_tilde_values.is_empty() {
        return Err(Error::InvalidInput("surface grids must be nonempty".into()));
    }
    let rules = Rules::for_truth(truth)?;
    let rows = exec::map_collect(m_values, |&m| {
        let mut row: Vec<(Option<Params>, f64)> = Vec::with_capacity(sigma_tilde_values.len());
        let mut init = (truth.params0.alpha, truth.params0.beta);
        for &st in sigma_tilde_values {
            match solve_limit_with(truth, m, st, None, &rules, init) {
                Ok((p, res)) => {
                    init = (p.alpha, p.beta);
                    row.push((Some(p), res));
                }
                Err(_) => row.push((None, f64::NAN)),
            }
        }
        row
    });
    let mut limits = Vec::with_capacity(m_values.len() * sigma_tilde_values.len());
    let mut residuals = Vec::with_capacity(limits.capacity());
    for row in rows {
        for (p, r) in row {
            limits.push(p);
            residuals.push(r);
        }
    }
    Ok(LimitSurface {
        m_values: m_values.to_vec(),
        sigma_tilde_values: sigma_tilde_values.to_vec(),
        limits,
        residual_score_norm: residuals,
    })
}
