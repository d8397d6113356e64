//! Standard-normal special functions.
//!
//! Everything downstream (probit likelihoods, posterior modes, Laplace
//! curvatures) reduces to `Phi`, `log Phi`, and the inverse Mills ratio
//! `phi/Phi`. The cluster log-likelihood raises `Phi` to powers up to the
//! cluster size, so `log_norm_cdf` has to stay accurate far into the left
//! tail; we route through `erfc` while it is representable and switch to the
//! Mills-ratio asymptotic series beyond that.

/// ln sqrt(2 pi)
pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Log of the standard normal density.
#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF, Phi(x) = erfc(-x / sqrt 2) / 2.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Log of the standard normal CDF.
///
/// Three regimes: direct log for x > -1, log(erfc) while erfc is
/// representable, and the Mills-ratio series
/// Phi(x) ~ phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - ...) for the far tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -1.0 {
        norm_cdf(x).ln()
    } else if x > -36.0 {
        // erfc(|x|/sqrt2) stays normal down to about x = -37.5
        std::f64::consts::LN_2.mul_add(-1.0, libm::erfc(-x / SQRT_2).ln())
    } else {
        let inv_x2 = 1.0 / (x * x);
        // 1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8 - 945/x^10 + 10395/x^12
        let series = 1.0
            + inv_x2
                * (-1.0
                    + inv_x2
                        * (3.0 + inv_x2 * (-15.0 + inv_x2 * (105.0 + inv_x2 * (-945.0 + inv_x2 * 10395.0)))));
        -0.5 * x * x - LN_SQRT_2PI - (-x).ln() + series.ln()
    }
}

/// Inverse Mills ratio phi(x) / Phi(x).
///
/// Diverges like |x| as x -> -inf and decays to zero as x -> +inf; computed
/// as exp(log phi - log Phi) so both tails come out right.
#[inline]
pub fn inv_mills(x: f64) -> f64 {
    (log_norm_pdf(x) - log_norm_cdf(x)).exp()
}

/// Numerically stable log(sum(exp(v))) over a slice.
///
/// Empty input and all -inf both return -inf.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}
