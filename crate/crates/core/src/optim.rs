//! Quasi-Newton minimization for the 2-3 dimensional smooth objectives in
//! this crate, with a derivative-free simplex fallback for the rare case
//! where the curvature update degenerates (e.g. separated data).

pub(crate) struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// BFGS (inverse-Hessian form) with backtracking line search.
///
/// `f` returns (value, gradient); non-finite values are treated as +inf by
/// the line search so the iterate never leaves the finite region.
pub(crate) fn minimize_bfgs<F>(
    mut f: F,
    x0: &[f64],
    grad_tol: f64,
    max_iter: usize,
) -> OptimOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut h = identity(n);
    let mut iterations = 0;

    loop {
        let gnorm = inf_norm(&g);
        if gnorm < grad_tol && fx.is_finite() {
            return OptimOutcome {
                x,
                value: fx,
                grad_inf_norm: gnorm,
                iterations,
                converged: true,
            };
        }
        if iterations >= max_iter {
            return OptimOutcome {
                x,
                value: fx,
                grad_inf_norm: gnorm,
                iterations,
                converged: false,
            };
        }
        iterations += 1;

        let mut dir = neg_mat_vec(&h, &g);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // curvature information unusable; restart from steepest descent
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
            if !(slope < 0.0) {
                return OptimOutcome {
                    x,
                    value: fx,
                    grad_inf_norm: gnorm,
                    iterations,
                    converged: gnorm < grad_tol,
                };
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&xt);
            if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope {
                accepted = Some((xt, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xt, ft, gt)) = accepted else {
            // no progress possible along this direction
            return OptimOutcome {
                x,
                value: fx,
                grad_inf_norm: gnorm,
                iterations,
                converged: false,
            };
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm2(&s) * norm2(&yv) {
            bfgs_update(&mut h, &s, &yv, sy);
        }
        x = xt;
        fx = ft;
        g = gt;
    }
}

/// Inverse BFGS update: H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    let c = (sy + yhy) / (sy * sy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += c * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]) / sy;
        }
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn neg_mat_vec(h: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    h.iter().map(|row| -dot(row, g)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Nelder-Mead simplex for value-only objectives; used when BFGS stalls.
pub(crate) fn nelder_mead<F>(mut f: F, x0: &[f64], scale: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let clean = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), clean(f(x0))));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += scale;
        let v = clean(f(&p));
        simplex.push((p, v));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-12 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        // centroid of all but the worst
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(c, w)| 2.0 * c - w)
            .collect();
        let fr = clean(f(&reflect));
        if fr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| 3.0 * c - 2.0 * w)
                .collect();
            let fe = clean(f(&expand));
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| 0.5 * (c + w))
                .collect();
            let fc = clean(f(&contract));
            if fc < worst.1 {
                simplex[n] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = entry
                        .0
                        .iter()
                        .zip(&best)
                        .map(|(v, b)| 0.5 * (v + b))
                        .collect();
                    let fv = clean(f(&p));
                    *entry = (p, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bfgs_minimizes_rosenbrock_2d() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (v, g)
        };
        let out = minimize_bfgs(f, &[-1.2, 1.0], 1e-10, 500);
        assert!(out.converged);
        assert_abs_diff_eq!(out.x[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(out.x[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn bfgs_handles_quadratic_in_three_dims() {
        let f = |x: &[f64]| {
            let v = 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1] + 9.0 * (x[2] - 1.0).powi(2));
            (v, vec![x[0], 4.0 * x[1], 9.0 * (x[2] - 1.0)])
        };
        let out = minimize_bfgs(f, &[3.0, -2.0, 5.0], 1e-12, 200);
        assert!(out.converged);
        assert_abs_diff_eq!(out.x[2], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (x, v) = nelder_mead(
            |x| (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2),
            &[0.0, 0.0],
            0.5,
            2000,
        );
        assert!(v < 1e-10);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(x[1], -1.0, epsilon = 1e-4);
    }
}
