//! Gauss quadrature rules and 1-D integrators.
//!
//! The Gauss-Hermite rule here uses the probabilists' convention: the weight
//! function is the standard normal density, so weights sum to one and
//! `integrate_gaussian(f, mu, sd, rule)` is directly E[f(mu + sd Z)] for
//! Z ~ N(0,1). Rules are built with the Golub-Welsch algorithm (eigenvalues
//! of the Jacobi matrix of the orthogonal-polynomial recurrence); only the
//! first eigenvector component is accumulated since that is all the weights
//! need.

use crate::error::{Error, Result};
use crate::model::TrueLaw;
use crate::special::log_sum_exp;

/// Largest supported rule order.
pub const MAX_ORDER: usize = 200;

/// Default order for the random-effect (inner likelihood) integral.
pub const DEFAULT_INNER_ORDER: usize = 60;

/// Default order for the outer expectation over the true random-effect law.
pub const DEFAULT_OUTER_ORDER: usize = 100;

/// A Gauss-Hermite rule in the probabilists' convention.
///
/// Nodes are symmetric about zero, weights are positive and sum to one, and
/// the rule integrates polynomials of degree up to `2 * order - 1` exactly
/// against the standard normal density.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Natural logs of the weights, for log-space accumulation.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Gauss-Hermite rule of the given order (probabilists' convention).
pub fn gh_rule(order: usize) -> Result<QuadratureRule> {
    if order < 1 || order > MAX_ORDER {
        return Err(Error::OrderOutOfRange(order));
    }
    // He_{n+1}(x) = x He_n(x) - n He_{n-1}(x): Jacobi diagonal 0,
    // off-diagonal sqrt(k).
    let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
    let diag = vec![0.0; order];
    let (mut nodes, first_row) = tridiag_eigen(diag, off);
    // mu_0 = integral of the weight function = 1
    let mut weights: Vec<f64> = first_row.iter().map(|v| v * v).collect();
    sort_rule(&mut nodes, &mut weights);
    symmetrize(&mut nodes, &mut weights);
    normalize(&mut weights);
    Ok(finish_rule(nodes, weights, order))
}

/// Gauss-Legendre rule of the given order on [-1, 1], weight function 1/2
/// (so the weights sum to one and the rule computes a uniform average).
pub fn gl_rule(order: usize) -> Result<QuadratureRule> {
    if order < 1 || order > MAX_ORDER {
        return Err(Error::OrderOutOfRange(order));
    }
    // Legendre recurrence: off-diagonal b_k = k / sqrt(4k^2 - 1).
    let off: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let diag = vec![0.0; order];
    let (mut nodes, first_row) = tridiag_eigen(diag, off);
    let mut weights: Vec<f64> = first_row.iter().map(|v| v * v).collect();
    sort_rule(&mut nodes, &mut weights);
    symmetrize(&mut nodes, &mut weights);
    normalize(&mut weights);
    Ok(finish_rule(nodes, weights, order))
}

fn finish_rule(nodes: Vec<f64>, weights: Vec<f64>, order: usize) -> QuadratureRule {
    let log_weights = weights.iter().map(|w| w.ln()).collect();
    QuadratureRule {
        nodes,
        weights,
        log_weights,
        order,
    }
}

fn sort_rule(nodes: &mut [f64], weights: &mut [f64]) {
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|&a, &b| nodes[a].partial_cmp(&nodes[b]).unwrap());
    let n: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
    let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    nodes.copy_from_slice(&n);
    weights.copy_from_slice(&w);
}

/// Force exact +/- node symmetry and matching weights; pins the middle node
/// of an odd rule to zero. Makes odd moments vanish identically.
fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}

fn normalize(weights: &mut [f64]) {
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
}

/// Symmetric tridiagonal eigensolver (implicit QL with Wilkinson shifts),
/// accumulating only the first row of the eigenvector matrix.
///
/// Returns (eigenvalues, first components of the normalized eigenvectors).
fn tridiag_eigen(mut d: Vec<f64>, mut e: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = d.len();
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    if n == 1 {
        return (d, z);
    }
    e.push(0.0); // sentinel

    for l in 0..n {
        let mut iter = 0;
        loop {
            // find the first small off-diagonal at or after l
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 80, "tridiagonal QL failed to converge");

            // Wilkinson shift from the leading 2x2 of the active block
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let sign_r = if g >= 0.0 { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + sign_r);

            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // first-row eigenvector update
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}

/// E[f(mean + sd * Z)] under the rule; `sd = 0` short-circuits to `f(mean)`.
pub fn integrate_gaussian(
    f: impl Fn(f64) -> f64,
    mean: f64,
    sd: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    if sd < 0.0 {
        return Err(Error::NegativeSigma(sd));
    }
    if sd == 0.0 {
        let v = f(mean);
        return check_finite(v, mean);
    }
    let mut acc = 0.0;
    for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
        let node = sd.mul_add(z, mean);
        let v = f(node);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { node });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// log E[exp(log_f(mean + sd * Z))], accumulated with log-sum-exp.
///
/// `log_f` may return -inf (a zero integrand slice); NaN or +inf is an error.
pub fn log_integrate_gaussian(
    log_f: impl Fn(f64) -> f64,
    mean: f64,
    sd: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    if sd < 0.0 {
        return Err(Error::NegativeSigma(sd));
    }
    if sd == 0.0 {
        let v = log_f(mean);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteIntegrand { node: mean });
        }
        return Ok(v);
    }
    let mut terms = Vec::with_capacity(rule.order);
    for (&z, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
        let node = sd.mul_add(z, mean);
        let v = log_f(node);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteIntegrand { node });
        }
        terms.push(lw + v);
    }
    Ok(log_sum_exp(&terms))
}

fn check_finite(v: f64, node: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteIntegrand { node })
    }
}

/// A discretized expectation rule for a `TrueLaw`: E[f(b)] ~ sum w_i f(b_i).
///
/// Built once per (law, order) and reused across integrand evaluations, as
/// the asymptotics sweeps do.
#[derive(Debug, Clone)]
pub struct LawRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LawRule {
    pub fn new(law: &TrueLaw, order: usize) -> Result<Self> {
        match *law {
            TrueLaw::Normal { sd } => {
                let gh = gh_rule(order)?;
                Ok(LawRule {
                    nodes: gh.nodes.iter().map(|z| sd * z).collect(),
                    weights: gh.weights.clone(),
                })
            }
            TrueLaw::TwoPointMixture { p, a, b } => Ok(LawRule {
                nodes: vec![a, b],
                weights: vec![p, 1.0 - p],
            }),
            TrueLaw::Uniform { halfwidth } => {
                let gl = gl_rule(order)?;
                Ok(LawRule {
                    nodes: gl.nodes.iter().map(|t| halfwidth * t).collect(),
                    weights: gl.weights.clone(),
                })
            }
            TrueLaw::StudentT { df, scale } => student_t_rule(df, scale, order),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// E[f(b)] under the discretized law.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&b, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(b);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { node: b });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// Heavy tails defeat a single global rule, so the scaled-t expectation is
/// integrated against the density over a domain truncated at tail mass 1e-10
/// per side, with Gauss-Legendre panels graded toward the endpoints.
fn student_t_rule(df: f64, scale: f64, order: usize) -> Result<LawRule> {
    use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

    const TAIL: f64 = 1e-10;
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidInput(format!("student t: {e}")))?;
    let upper = t.inverse_cdf(1.0 - TAIL);

    // Panel breakpoints on the positive half, geometric toward the tail.
    let mut breaks = vec![0.0, 0.5, 1.0, 2.0, 4.0];
    let mut b = 8.0;
    while b < upper {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(upper);

    let panel = gl_rule(order.clamp(8, 48))?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (&z, &wq) in panel.nodes.iter().zip(&panel.weights) {
            let x = half.mul_add(z, mid);
            let dens = t.pdf(x);
            // mirror across zero; gl weights sum to 1 so the panel length
            // reappears as 2 * half
            let wgt = wq * 2.0 * half * dens;
            nodes.push(scale * x);
            weights.push(wgt);
            nodes.push(-scale * x);
            weights.push(wgt);
        }
    }
    // renormalize away the truncated tail mass
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok(LawRule { nodes, weights })
}

/// Expectation of `f` under a `TrueLaw`.
///
/// Normal laws use the Gauss-Hermite rule directly; bounded laws use
/// Gauss-Legendre or exact summation; scaled-t uses the truncated panel
/// scheme. The `rule` argument supplies the order.
pub fn integrate_law(f: impl Fn(f64) -> f64, law: &TrueLaw, rule: &QuadratureRule) -> Result<f64> {
    LawRule::new(law, rule.order())?.integrate(f)
}
