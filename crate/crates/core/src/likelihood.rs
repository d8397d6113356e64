//! Full marginal log-likelihood, k-wise composite log-likelihood, their
//! scores, and maximization.
//!
//! Responses within a cluster are exchangeable given the linear predictor,
//! so every per-cluster quantity depends on the data only through the
//! success count s. Two reductions follow:
//!
//! * the composite likelihood over all size-k subsets collapses to a sum
//!   over the subset success count j with weight C(s,j) C(m-s,k-j), costing
//!   O(k) likelihood evaluations instead of O(C(m,k)) subset enumerations
//!   (enumeration survives only as a test oracle);
//! * a dataset collapses to counts over distinct (x, s) cells, so one
//!   objective evaluation costs O(#cells * order) regardless of n.
//!
//! The random-effect integral is evaluated with the Gauss-Hermite rule
//! recentered at the posterior mode of eta and rescaled by the curvature
//! there. The prior-centered rule loses several digits once m is large
//! (the integrand concentrates far from alpha + beta x at a width much
//! smaller than sigma); the mode-centered rule is exact to machine
//! precision at order 60 for every cluster size this crate touches.

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{ClusterData, Params, SigmaMode, SubsetScheme};
use crate::optim::{inf_norm, minimize_bfgs, nelder_mead, OptimOutcome};
use crate::posterior::{log_g, mode_and_curvature};
use crate::quadrature::QuadratureRule;
use crate::special::{inv_mills, log_norm_cdf, log_sum_exp, LN_SQRT_2PI};

/// A set of independent clusters sharing a common cluster size m.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    clusters: Vec<ClusterData>,
    m: usize,
}

impl Dataset {
    pub fn new(clusters: Vec<ClusterData>) -> Result<Self> {
        let Some(first) = clusters.first() else {
            return Err(Error::InvalidInput("dataset must be nonempty".into()));
        };
        let m = first.m();
        if let Some(bad) = clusters.iter().find(|c| c.m() != m) {
            return Err(Error::InvalidInput(format!(
                "all clusters must share m = {m}, found {}",
                bad.m()
            )));
        }
        Ok(Dataset { clusters, m })
    }

    pub fn clusters(&self) -> &[ClusterData] {
        &self.clusters
    }

    /// Common cluster size.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of clusters n.
    pub fn n(&self) -> usize {
        self.clusters.len()
    }
}

/// Outcome of a likelihood (or composite-likelihood) maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Params,
    /// Maximized log-(composite-)likelihood.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set by multi-start fitting when distinct local maxima were found.
    pub multimodal: bool,
}

/// Per-cluster log-likelihood value and gradient in (alpha, beta, sigma).
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CellEval {
    pub loglik: f64,
    pub dalpha: f64,
    pub dbeta: f64,
    pub dsigma: f64,
}

/// Binomial coefficient as f64 (exact below 2^53, correctly rounded scale
/// above).
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 1..=k {
        acc = acc * (n - k + i) as f64 / i as f64;
    }
    acc
}

/// log of the marginal probability of one response sequence with `s`
/// successes out of `m`, covariate `x`:
/// log Integral Phi(eta)^s (1-Phi(eta))^(m-s) phi_sigma(eta - mu) d eta.
pub(crate) fn loglik_counts(
    params: &Params,
    x: f64,
    s: usize,
    m: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    let mu = params.linear_predictor(x);
    let sigma = params.sigma;
    if sigma == 0.0 {
        return Ok(s as f64 * log_norm_cdf(mu) + (m - s) as f64 * log_norm_cdf(-mu));
    }
    let mode = mode_and_curvature(mu, sigma, s, m)?;
    let tau = mode.neg_curvature.sqrt().recip();
    let mut terms = Vec::with_capacity(rule.order());
    for (&z, &lw) in rule.nodes().iter().zip(rule.log_weights()) {
        let eta = tau.mul_add(z, mode.eta_hat);
        terms.push(lw + log_g(eta, mu, sigma, s, m) + 0.5 * z * z);
    }
    let ll = tau.ln() + LN_SQRT_2PI + log_sum_exp(&terms);
    if ll.is_nan() || ll == f64::INFINITY {
        return Err(Error::NonFinite(ll));
    }
    Ok(ll)
}

/// Log-likelihood and its gradient for one (x, s, m) cell.
///
/// On the mode-centered grid the parameter dependence of the integrand sits
/// entirely in the Gaussian prior factor, so the score components are
/// posterior moments of (eta - mu).
pub(crate) fn score_counts(
    params: &Params,
    x: f64,
    s: usize,
    m: usize,
    rule: &QuadratureRule,
) -> Result<CellEval> {
    let sigma = params.sigma;
    if sigma == 0.0 {
        return Err(Error::BoundaryPoint);
    }
    let mu = params.linear_predictor(x);
    let mode = mode_and_curvature(mu, sigma, s, m)?;
    let tau = mode.neg_curvature.sqrt().recip();

    let n = rule.order();
    let mut terms = Vec::with_capacity(n);
    let mut devs = Vec::with_capacity(n);
    for (&z, &lw) in rule.nodes().iter().zip(rule.log_weights()) {
        let eta = tau.mul_add(z, mode.eta_hat);
        terms.push(lw + log_g(eta, mu, sigma, s, m) + 0.5 * z * z);
        devs.push(eta - mu);
    }
    let lse = log_sum_exp(&terms);
    let loglik = tau.ln() + LN_SQRT_2PI + lse;
    if loglik.is_nan() || loglik == f64::INFINITY {
        return Err(Error::NonFinite(loglik));
    }

    // posterior-weighted first and second moments of eta - mu
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (t, d) in terms.iter().zip(&devs) {
        let w = (t - lse).exp();
        m1 += w * d;
        m2 += w * d * d;
    }
    let s2 = sigma * sigma;
    Ok(CellEval {
        loglik,
        dalpha: m1 / s2,
        dbeta: x * m1 / s2,
        dsigma: m2 / (s2 * sigma) - 1.0 / sigma,
    })
}

/// Range of subset success counts j with nonzero reduction weight.
#[inline]
fn j_range(s: usize, m: usize, k: usize) -> std::ops::RangeInclusive<usize> {
    k.saturating_sub(m - s)..=k.min(s)
}

/// Composite log-likelihood value for one (x, s, m) cell under a k-wise
/// scheme: sum over j of C(s,j) C(m-s,k-j) * loglik(j successes of k).
fn composite_counts(
    params: &Params,
    x: f64,
    s: usize,
    m: usize,
    scheme: &SubsetScheme,
    rule: &QuadratureRule,
) -> Result<f64> {
    let k = scheme.k;
    if k > m {
        return Err(Error::SubsetTooLarge { k, m });
    }
    let mut total = 0.0;
    for j in j_range(s, m, k) {
        let coeff = binomial(s, j) * binomial(m - s, k - j);
        total += coeff * loglik_counts(params, x, j, k, rule)?;
    }
    Ok(scheme.weight * total)
}

fn composite_score_counts(
    params: &Params,
    x: f64,
    s: usize,
    m: usize,
    scheme: &SubsetScheme,
    rule: &QuadratureRule,
) -> Result<CellEval> {
    let k = scheme.k;
    if k > m {
        return Err(Error::SubsetTooLarge { k, m });
    }
    let mut acc = CellEval::default();
    for j in j_range(s, m, k) {
        let coeff = scheme.weight * binomial(s, j) * binomial(m - s, k - j);
        let e = score_counts(params, x, j, k, rule)?;
        acc.loglik += coeff * e.loglik;
        acc.dalpha += coeff * e.dalpha;
        acc.dbeta += coeff * e.dbeta;
        acc.dsigma += coeff * e.dsigma;
    }
    Ok(acc)
}

/// Log marginal likelihood of one cluster's response vector.
pub fn cluster_loglik(
    params: &Params,
    cluster: &ClusterData,
    rule: &QuadratureRule,
) -> Result<f64> {
    params.validate()?;
    loglik_counts(params, cluster.x(), cluster.successes(), cluster.m(), rule)
}

/// k-wise composite log-likelihood of one cluster: the sum of the log
/// marginal likelihoods of all size-k response subsets.
pub fn composite_loglik(
    params: &Params,
    cluster: &ClusterData,
    scheme: &SubsetScheme,
    rule: &QuadratureRule,
) -> Result<f64> {
    params.validate()?;
    composite_counts(
        params,
        cluster.x(),
        cluster.successes(),
        cluster.m(),
        scheme,
        rule,
    )
}

/// Distinct (x, s) cells of a dataset with multiplicities.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell {
    pub x: f64,
    pub s: usize,
    pub count: f64,
}

pub(crate) fn collapse(data: &Dataset) -> Vec<Cell> {
    let mut keyed: Vec<(f64, usize)> = data
        .clusters()
        .iter()
        .map(|c| (c.x(), c.successes()))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cells: Vec<Cell> = Vec::new();
    for (x, s) in keyed {
        match cells.last_mut() {
            Some(last) if last.x == x && last.s == s => last.count += 1.0,
            _ => cells.push(Cell { x, s, count: 1.0 }),
        }
    }
    cells
}

fn cell_value(
    params: &Params,
    cell: &Cell,
    m: usize,
    scheme: Option<&SubsetScheme>,
    rule: &QuadratureRule,
) -> Result<f64> {
    match scheme {
        None => loglik_counts(params, cell.x, cell.s, m, rule),
        Some(sch) => composite_counts(params, cell.x, cell.s, m, sch, rule),
    }
}

fn cell_score(
    params: &Params,
    cell: &Cell,
    m: usize,
    scheme: Option<&SubsetScheme>,
    rule: &QuadratureRule,
) -> Result<CellEval> {
    match scheme {
        None => score_counts(params, cell.x, cell.s, m, rule),
        Some(sch) => composite_score_counts(params, cell.x, cell.s, m, sch, rule),
    }
}

/// Total log-likelihood over the dataset: the sum of `cluster_loglik`
/// (no scheme) or `composite_loglik` (scheme present) over clusters.
///
/// Cells are evaluated concurrently and reduced in a fixed order, so the
/// result is bit-identical across thread counts and across the
/// parallel/sequential builds.
pub fn total_loglik(
    params: &Params,
    data: &Dataset,
    scheme: Option<&SubsetScheme>,
    rule: &QuadratureRule,
) -> Result<f64> {
    params.validate()?;
    let cells = collapse(data);
    let m = data.m();
    let vals = exec::map_collect(&cells, |cell| {
        cell_value(params, cell, m, scheme, rule).map(|v| cell.count * v)
    });
    let mut total = 0.0;
    for v in vals {
        total += v?;
    }
    Ok(total)
}

/// Gradient of `total_loglik` in the free coordinates: (alpha, beta) and,
/// when sigma is free, sigma.
pub fn score(
    params: &Params,
    data: &Dataset,
    scheme: Option<&SubsetScheme>,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    params.validate()?;
    if params.sigma == 0.0 {
        return Err(Error::BoundaryPoint);
    }
    let cells = collapse(data);
    let m = data.m();
    let evals = exec::map_collect(&cells, |cell| {
        cell_score(params, cell, m, scheme, rule).map(|e| (cell.count, e))
    });
    let mut da = 0.0;
    let mut db = 0.0;
    let mut ds = 0.0;
    for e in evals {
        let (count, e) = e?;
        da += count * e.dalpha;
        db += count * e.dbeta;
        ds += count * e.dsigma;
    }
    Ok(match params.sigma_mode {
        SigmaMode::Free => vec![da, db, ds],
        SigmaMode::Fixed(_) => vec![da, db],
    })
}

const FIT_GRAD_TOL: f64 = 1e-8;
const FIT_MAX_ITER: usize = 500;
/// Objectives of converged local maxima further apart than this are flagged
/// as multimodal.
const MULTIMODAL_OBJ_GAP: f64 = 1e-4;

struct FreeCoords {
    mode: SigmaMode,
}

impl FreeCoords {
    fn pack(&self, p: &Params) -> Vec<f64> {
        match self.mode {
            SigmaMode::Fixed(_) => vec![p.alpha, p.beta],
            // optimize log sigma so sigma > 0 without box constraints
            SigmaMode::Free => vec![p.alpha, p.beta, p.sigma.max(1e-4).ln()],
        }
    }

    fn unpack(&self, v: &[f64]) -> Params {
        match self.mode {
            SigmaMode::Fixed(st) => Params::fixed(v[0], v[1], st),
            SigmaMode::Free => Params::free(v[0], v[1], v[2].exp()),
        }
    }

    /// Map a (dalpha, dbeta, dsigma) score into optimizer coordinates.
    fn grad(&self, p: &Params, g: &[f64; 3]) -> Vec<f64> {
        match self.mode {
            SigmaMode::Fixed(_) => vec![g[0], g[1]],
            SigmaMode::Free => vec![g[0], g[1], p.sigma * g[2]],
        }
    }
}

fn objective_eval(
    coords: &FreeCoords,
    v: &[f64],
    cells: &[Cell],
    m: usize,
    scheme: Option<&SubsetScheme>,
    rule: &QuadratureRule,
) -> (f64, Vec<f64>) {
    let params = coords.unpack(v);
    let evals = exec::map_collect(cells, |cell| cell_score(&params, cell, m, scheme, rule));
    let mut ll = 0.0;
    let mut g = [0.0; 3];
    for (cell, e) in cells.iter().zip(evals) {
        match e {
            Ok(e) => {
                ll += cell.count * e.loglik;
                g[0] += cell.count * e.dalpha;
                g[1] += cell.count * e.dbeta;
                g[2] += cell.count * e.dsigma;
            }
            Err(_) => return (f64::INFINITY, vec![0.0; v.len()]),
        }
    }
    if !ll.is_finite() {
        return (f64::INFINITY, vec![0.0; v.len()]);
    }
    let grad = coords.grad(&params, &g);
    (-ll, grad.into_iter().map(|x| -x).collect())
}

/// Maximize the (composite) log-likelihood from the given starting point.
///
/// Quasi-Newton with the analytic score and a backtracking line search;
/// falls back to a derivative-free simplex pass plus a quasi-Newton polish
/// when the curvature update degenerates. Convergence means gradient
/// inf-norm below 1e-8 within 500 iterations; otherwise the best point is
/// returned with `converged = false` (e.g. separated data drifting to the
/// boundary).
pub fn fit(
    data: &Dataset,
    scheme: Option<&SubsetScheme>,
    init: &Params,
    rule: &QuadratureRule,
) -> Result<FitResult> {
    init.validate()?;
    if let Some(sch) = scheme {
        if sch.k > data.m() {
            return Err(Error::SubsetTooLarge {
                k: sch.k,
                m: data.m(),
            });
        }
    }
    let cells = collapse(data);
    let m = data.m();
    let coords = FreeCoords {
        mode: init.sigma_mode,
    };
    let x0 = coords.pack(init);
    let eval = |v: &[f64]| objective_eval(&coords, v, &cells, m, scheme, rule);

    let mut out = minimize_bfgs(eval, &x0, FIT_GRAD_TOL, FIT_MAX_ITER);
    if !out.converged {
        let (x_nm, _) = nelder_mead(|v| eval(v).0, &out.x, 0.25, 400);
        let polish = minimize_bfgs(eval, &x_nm, FIT_GRAD_TOL, 200);
        if polish.value <= out.value {
            let iterations = out.iterations + polish.iterations;
            out = OptimOutcome {
                iterations,
                ..polish
            };
        }
    }

    let params = coords.unpack(&out.x);
    Ok(FitResult {
        params,
        objective: -out.value,
        converged: out.converged && out.value.is_finite(),
        iterations: out.iterations,
        multimodal: false,
    })
}

/// Best-of-several-starts fit; flags multimodality when converged starts
/// reach distinct optima with objectives further apart than 1e-4.
pub fn fit_multistart(
    data: &Dataset,
    scheme: Option<&SubsetScheme>,
    inits: &[Params],
    rule: &QuadratureRule,
) -> Result<FitResult> {
    if inits.is_empty() {
        return Err(Error::InvalidInput("fit needs at least one start".into()));
    }
    let results = exec::map_collect(inits, |init| fit(data, scheme, init, rule));
    let mut fits = Vec::with_capacity(results.len());
    for r in results {
        fits.push(r?);
    }
    let best_idx = (0..fits.len())
        .max_by(|&a, &b| {
            let key = |r: &FitResult| (r.converged, r.objective);
            key(&fits[a]).partial_cmp(&key(&fits[b])).unwrap()
        })
        .unwrap();
    let best = fits[best_idx].clone();
    let multimodal = fits.iter().enumerate().any(|(i, r)| {
        i != best_idx
            && r.converged
            && best.converged
            && (r.objective - best.objective).abs() > MULTIMODAL_OBJ_GAP
            && params_distance(&r.params, &best.params) > 1e-3
    });
    Ok(FitResult { multimodal, ..best })
}

fn params_distance(a: &Params, b: &Params) -> f64 {
    inf_norm(&[a.alpha - b.alpha, a.beta - b.beta, a.sigma - b.sigma])
}

/// Pooled probit fit ignoring the random effect; the default (alpha, beta)
/// initializer.
pub fn probit_init(data: &Dataset) -> (f64, f64) {
    let cells = collapse(data);
    let m = data.m() as f64;
    let mut a = 0.0;
    let mut b = 0.0;
    for _ in 0..60 {
        let mut g = [0.0; 2];
        let mut hess = [[0.0; 2]; 2];
        for cell in &cells {
            let eta = a + b * cell.x;
            let s = cell.s as f64;
            let r = inv_mills(eta);
            let q = inv_mills(-eta);
            let dh = s * r - (m - s) * q;
            let d2h = s * (-eta * r - r * r) + (m - s) * (eta * q - q * q);
            let w = cell.count;
            g[0] += w * dh;
            g[1] += w * dh * cell.x;
            hess[0][0] += w * d2h;
            hess[0][1] += w * d2h * cell.x;
            hess[1][1] += w * d2h * cell.x * cell.x;
        }
        hess[1][0] = hess[0][1];
        let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
        if det.abs() < 1e-12 || !det.is_finite() {
            break;
        }
        let da = (hess[1][1] * g[0] - hess[0][1] * g[1]) / det;
        let db = (hess[0][0] * g[1] - hess[1][0] * g[0]) / det;
        // Newton step for a maximum: x <- x - H^{-1} g
        a -= da;
        b -= db;
        // keep separation drift bounded
        a = a.clamp(-10.0, 10.0);
        b = b.clamp(-10.0, 10.0);
        if da.abs().max(db.abs()) < 1e-10 {
            break;
        }
    }
    (a, b)
}

/// The default three-start ladder used by the simulation harness and CLI.
pub fn default_starts(data: &Dataset, sigma_mode: SigmaMode) -> Vec<Params> {
    let (a, b) = probit_init(data);
    match sigma_mode {
        SigmaMode::Fixed(st) => vec![
            Params::fixed(a, b, st),
            Params::fixed(a + 0.3, b - 0.3, st),
            Params::fixed(0.0, 0.0, st),
        ],
        SigmaMode::Free => vec![
            Params::free(a, b, 0.5),
            Params::free(a, b, 1.0),
            Params::free(a, b, 0.25),
        ],
    }
}

/// Multi-start fit from the default initializer ladder.
pub fn fit_auto(
    data: &Dataset,
    scheme: Option<&SubsetScheme>,
    sigma_mode: SigmaMode,
    rule: &QuadratureRule,
) -> Result<FitResult> {
    let starts = default_starts(data, sigma_mode);
    fit_multistart(data, scheme, &starts, rule)
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
    fn degenerate_probit_single_observation() {
        let p = Params::free(0.0, 0.0, 0.0);
        let c = ClusterData::new(0.0, vec![1]).unwrap();
        let ll = cluster_loglik(&p, &c, &rule()).unwrap();
        assert_abs_diff_eq!(ll, 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn single_observation_closed_form() {
        // m=1, y=1: L = E[Phi(mu + sigma Z)] = Phi(mu / sqrt(1 + sigma^2))
        let p = Params::free(0.5, 0.0, 0.5);
        let c = ClusterData::new(0.0, vec![1]).unwrap();
        let ll = cluster_loglik(&p, &c, &rule()).unwrap();
        assert_abs_diff_eq!(ll, 0.6726395769907115f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn pair_cluster_matches_independent_quadrature_value() {
        // reference computed by adaptive quadrature of
        // Phi(1.5+b)(1-Phi(1.5+b)) phi(b/0.5)/0.5
        let p = Params::free(0.5, 1.0, 0.5);
        let c = ClusterData::new(1.0, vec![1, 0]).unwrap();
        let ll = cluster_loglik(&p, &c, &rule()).unwrap();
        assert_abs_diff_eq!(ll, -2.5830282366868857, epsilon = 1e-11);
    }

    #[test]
    fn loglik_invariant_to_response_permutation() {
        let p = Params::free(0.2, -0.4, 0.7);
        let a = ClusterData::new(1.0, vec![1, 1, 0, 0, 1]).unwrap();
        let b = ClusterData::new(1.0, vec![0, 1, 0, 1, 1]).unwrap();
        let la = cluster_loglik(&p, &a, &rule()).unwrap();
        let lb = cluster_loglik(&p, &b, &rule()).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn reduction_weights_for_m4_s2_k2() {
        // weights over j: {1, 4, 1}, totalling C(4,2) = 6
        let coeffs: Vec<f64> = j_range(2, 4, 2)
            .map(|j| binomial(2, j) * binomial(2, 2 - j))
            .collect();
        assert_eq!(coeffs, vec![1.0, 4.0, 1.0]);
        assert_eq!(coeffs.iter().sum::<f64>(), binomial(4, 2));
    }

    #[test]
    fn composite_with_k_equal_m_is_the_full_loglik() {
        let p = Params::free(0.5, 1.0, 0.5);
        let c = ClusterData::new(1.0, vec![1, 0, 1, 1, 0]).unwrap();
        let scheme = SubsetScheme::kwise(5).unwrap();
        let full = cluster_loglik(&p, &c, &rule()).unwrap();
        let comp = composite_loglik(&p, &c, &scheme, &rule()).unwrap();
        assert_eq!(comp, full);
    }

    #[test]
    fn composite_rejects_oversized_subsets() {
        let p = Params::free(0.0, 0.0, 0.5);
        let c = ClusterData::new(0.0, vec![1, 0]).unwrap();
        let scheme = SubsetScheme::kwise(3).unwrap();
        assert!(matches!(
            composite_loglik(&p, &c, &scheme, &rule()),
            Err(Error::SubsetTooLarge { k: 3, m: 2 })
        ));
    }

    #[test]
    fn total_loglik_is_additive() {
        let p = Params::free(0.3, 0.8, 0.6);
        let c = ClusterData::new(1.0, vec![1, 0, 1]).unwrap();
        let single = Dataset::new(vec![c.clone()]).unwrap();
        let double = Dataset::new(vec![c.clone(), c.clone()]).unwrap();
        let r = rule();
        let one = total_loglik(&p, &single, None, &r).unwrap();
        assert_eq!(one, cluster_loglik(&p, &c, &r).unwrap());
        let two = total_loglik(&p, &double, None, &r).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn score_matches_central_finite_differences() {
        let r = rule();
        let clusters = vec![
            ClusterData::new(0.0, vec![1, 0, 1, 1]).unwrap(),
            ClusterData::new(1.0, vec![0, 0, 1, 0]).unwrap(),
            ClusterData::new(1.0, vec![1, 1, 1, 0]).unwrap(),
        ];
        let data = Dataset::new(clusters).unwrap();
        for scheme in [None, Some(SubsetScheme::kwise(2).unwrap())] {
            let p = Params::free(0.4, 0.9, 0.6);
            let g = score(&p, &data, scheme.as_ref(), &r).unwrap();
            let h = 1e-5;
            let fd = |lo: Params, hi: Params| {
                (total_loglik(&hi, &data, scheme.as_ref(), &r).unwrap()
                    - total_loglik(&lo, &data, scheme.as_ref(), &r).unwrap())
                    / (2.0 * h)
            };
            let fd_a = fd(
                Params::free(p.alpha - h, p.beta, p.sigma),
                Params::free(p.alpha + h, p.beta, p.sigma),
            );
            let fd_b = fd(
                Params::free(p.alpha, p.beta - h, p.sigma),
                Params::free(p.alpha, p.beta + h, p.sigma),
            );
            let fd_s = fd(
                Params::free(p.alpha, p.beta, p.sigma - h),
                Params::free(p.alpha, p.beta, p.sigma + h),
            );
            assert_relative_eq!(g[0], fd_a, max_relative = 1e-4);
            assert_relative_eq!(g[1], fd_b, max_relative = 1e-4);
            assert_relative_eq!(g[2], fd_s, max_relative = 1e-4);
        }
    }

    #[test]
    fn score_sign_symmetry_under_response_flip() {
        // flipping y and negating (alpha, beta) negates the (alpha, beta) score
        let r = rule();
        let data = Dataset::new(vec![
            ClusterData::new(0.0, vec![1, 0, 1]).unwrap(),
            ClusterData::new(1.0, vec![1, 1, 0]).unwrap(),
        ])
        .unwrap();
        let flipped = Dataset::new(
            data.clusters()
                .iter()
                .map(|c| {
                    ClusterData::new(c.x(), c.responses().iter().map(|&v| 1 - v).collect())
                        .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let p = Params::free(0.4, 0.7, 0.5);
        let pn = Params::free(-0.4, -0.7, 0.5);
        let g = score(&p, &data, None, &r).unwrap();
        let gf = score(&pn, &flipped, None, &r).unwrap();
        assert_relative_eq!(g[0], -gf[0], max_relative = 1e-9);
        assert_relative_eq!(g[1], -gf[1], max_relative = 1e-9);
    }

    #[test]
    fn score_at_boundary_is_an_error() {
        let data = Dataset::new(vec![ClusterData::new(0.0, vec![1]).unwrap()]).unwrap();
        let p = Params::free(0.0, 0.0, 0.0);
        assert!(matches!(
            score(&p, &data, None, &rule()),
            Err(Error::BoundaryPoint)
        ));
    }

    #[test]
    fn fit_drives_score_to_zero() {
        let r = rule();
        // small, well-behaved dataset with both covariate levels and mixed outcomes
        let mut clusters = Vec::new();
        for (x, pats) in [
            (0.0, [[1u8, 0, 1, 0], [0, 0, 1, 0], [1, 1, 0, 0]]),
            (1.0, [[1, 1, 1, 0], [1, 0, 1, 1], [0, 1, 1, 1]]),
        ] {
            for pat in pats {
                clusters.push(ClusterData::new(x, pat.to_vec()).unwrap());
            }
        }
        let data = Dataset::new(clusters).unwrap();
        let fit = fit(&data, None, &Params::fixed(0.0, 0.0, 0.5), &r).unwrap();
        assert!(fit.converged);
        let g = score(&fit.params, &data, None, &r).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-6), "score at optimum: {g:?}");
    }

    #[test]
    fn separated_data_is_flagged_not_converged() {
        let r = rule();
        let data = Dataset::new(
            (0..6)
                .map(|i| ClusterData::new((i % 2) as f64, vec![1, 1, 1]).unwrap())
                .collect(),
        )
        .unwrap();
        let out = fit(&data, None, &Params::fixed(0.0, 0.0, 0.5), &r).unwrap();
        // all-ones responses: the likelihood increases in alpha without bound
        assert!(!out.converged || out.params.alpha > 5.0);
    }

    #[test]
    fn binomial_small_values_exact() {
        assert_eq!(binomial(6, 2), 15.0);
        assert_eq!(binomial(4, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(binomial(64, 2), 2016.0);
    }
}
