//! Statistical-linearization machinery: conditional moments of the SINR
//! numerator and denominator, the approximate mean, the lower-bound
//! gradient in the error norms, the first-order variance, and Monte
//! Carlo oracles for all of them.
//!
//! Two constant families appear. The moment formulas carry `P sigma2`
//! terms (direct expectations over the error matrices); the lower-bound
//! formulas carry `P M N sigma2` terms because they are evaluated at the
//! mean error norm `theta = M N sigma2`.

use num_complex::Complex64;

use crate::covariance::ErrorNormVector;
use crate::error::{Error, Result};
use crate::linalg::{real_quad_form, vdot, vnorm, ComplexMatrix};
use crate::model::{gaussian_matrix_with, FilterSet, NetworkConfig, RngStream};
use crate::sinr::sinr_lower_bound;

/// Conditional means of the SINR numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    /// Mean of the numerator: `u^H [T + P sigma2 I] u`.
    pub mu1: f64,
    /// Mean of the denominator:
    /// `u^H [S - T + (P sigma2 sum_j D^j - P sigma2 + N0) I] u`.
    pub mu2: f64,
    /// `mu1 / mu2`.
    pub ratio: f64,
}

/// Conditional moments of numerator and denominator given the estimated
/// covariances `S`, `T` and receive vector `u`.
pub fn conditional_moments(
    s: &ComplexMatrix,
    t: &ComplexMatrix,
    u: &[Complex64],
    config: &NetworkConfig,
) -> Result<MomentPair> {
    let ps2 = config.p * config.sigma2;
    let mu1 = real_quad_form(&t.shifted(ps2), u)?;
    let den_shift = ps2 * config.total_streams() as f64 - ps2 + config.n0;
    let mu2 = real_quad_form(&s.sub(t).shifted(den_shift), u)?;
    if mu2 <= 0.0 {
        return Err(Error::NumericFailure(format!(
            "nonpositive denominator mean mu2 = {mu2:.3e}"
        )));
    }
    Ok(MomentPair {
        mu1,
        mu2,
        ratio: mu1 / mu2,
    })
}

/// First-order approximation of the conditional mean SINR.
pub fn approx_mean_sinr(moments: &MomentPair) -> f64 {
    moments.ratio
}

/// The three quadratic forms entering the lower-bound derivative at
/// `theta`, for receiver `k`.
pub(crate) fn lb_quadratic_forms(
    k: usize,
    s: &ComplexMatrix,
    t: &ComplexMatrix,
    u: &[Complex64],
    config: &NetworkConfig,
) -> Result<(f64, f64, f64)> {
    let pmns2 = config.p * (config.m * config.n) as f64 * config.sigma2;
    let dk = config.d[k] as f64;
    let streams_other: f64 = config
        .d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &dj)| dj as f64)
        .sum();
    let a_mat = s.add(&t.scaled(dk - 2.0)).shifted(pmns2 * streams_other + config.n0);
    let a = real_quad_form(&a_mat, u)?;
    let b = real_quad_form(&t.shifted(-pmns2), u)?;
    let total_streams = config.total_streams() as f64;
    let c = real_quad_form(&s.sub(t).shifted(pmns2 * total_streams - pmns2 + config.n0), u)?;
    Ok((a, b, c))
}

/// Gradient of the SINR lower bound with respect to the error-norm
/// vector, evaluated at the mean `theta`. Component `j` is
/// `-P D^j (u^H u) b / c^2` for `j != k` and `-P (u^H u) a / c^2` for
/// the own-channel component.
pub fn lb_gradient(
    k: usize,
    s: &ComplexMatrix,
    t: &ComplexMatrix,
    u: &[Complex64],
    config: &NetworkConfig,
) -> Result<Vec<f64>> {
    let (a, b, c) = lb_quadratic_forms(k, s, t, u, config)?;
    if c == 0.0 {
        return Err(Error::NumericFailure("zero lower-bound denominator".into()));
    }
    let uu = vnorm(u).powi(2);
    let c2 = c * c;
    let grad: Vec<f64> = (0..config.k)
        .map(|j| {
            if j == k {
                -config.p * uu * a / c2
            } else {
                -config.p * config.d[j] as f64 * uu * b / c2
            }
        })
        .collect();
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericFailure("non-finite lower-bound gradient".into()));
    }
    Ok(grad)
}

/// First-order variance of the SINR lower bound with its building
/// blocks. `variance` is the normative gradient assembly
/// `grad^T Cov(e) grad` with the diagonal covariance `M N sigma2^2 I`;
/// `closed_form_all_users` evaluates a closed-form variant whose sums
/// run over all users where the gradient assembly sums the cross terms
/// over `j != k` only; the two disagree whenever `sigma2 > 0` and the
/// gap is reported as a cross-check.
#[derive(Debug, Clone)]
pub struct VarianceBreakdown {
    /// Lower-bound gradient at `theta`, one component per user.
    pub grad: Vec<f64>,
    /// `grad^T Cov(e) grad`.
    pub variance: f64,
    /// Quadratic form of the own-channel derivative numerator.
    pub a: f64,
    /// `u^H [T - P M N sigma2 I] u`.
    pub b: f64,
    /// Denominator quadratic form at `theta`.
    pub c: f64,
    /// Closed-form variant with all-users sums, kept as a cross-check.
    pub closed_form_all_users: f64,
}

impl VarianceBreakdown {
    /// Relative disagreement between the assembly and the all-users form.
    pub fn closed_form_relative_gap(&self) -> f64 {
        let scale = self.variance.abs().max(self.closed_form_all_users.abs()).max(f64::MIN_POSITIVE);
        (self.variance - self.closed_form_all_users).abs() / scale
    }
}

/// First-order variance of the SINR lower bound at `theta`.
pub fn approx_variance(
    k: usize,
    s: &ComplexMatrix,
    t: &ComplexMatrix,
    u: &[Complex64],
    config: &NetworkConfig,
) -> Result<VarianceBreakdown> {
    let grad = lb_gradient(k, s, t, u, config)?;
    let (a, b, c) = lb_quadratic_forms(k, s, t, u, config)?;
    let mn = (config.m * config.n) as f64;
    let cov_diag = mn * config.sigma2 * config.sigma2;
    // grad^T diag(cov) grad, kept as an explicit bilinear loop.
    let variance: f64 = grad.iter().map(|g| g * cov_diag * g).sum();

    // Closed-form variant: both sums run over all users.
    let pmns2 = config.p * mn * config.sigma2;
    let dk = config.d[k] as f64;
    let all_streams = config.total_streams() as f64;
    let sq_streams: f64 = config.d.iter().map(|&dj| (dj * dj) as f64).sum();
    let uu = vnorm(u).powi(2);
    let first = real_quad_form(
        &s.add(&t.scaled(dk - 2.0)).shifted(pmns2 * all_streams + config.n0),
        u,
    )?;
    let closed_form_all_users = mn * config.p * config.p * config.sigma2.powi(2) * uu * uu
        * (first * first + sq_streams * b * b)
        / (c * c * c * c);

    Ok(VarianceBreakdown {
        grad,
        variance,
        a,
        b,
        c,
        closed_form_all_users,
    })
}

/// Moment kinds the Monte Carlo oracle can estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMomentKind {
    /// Mean of `num / den` over error draws.
    MeanSinr,
    /// Mean of the numerator quadratic form.
    MeanNum,
    /// Mean of the denominator quadratic form.
    MeanDen,
    /// Variance of the SINR lower bound over realized error norms.
    VarLb,
}

/// Monte Carlo estimate of a conditional moment at receiver `k`, stream
/// `d`: fresh error matrices are drawn on the fixed estimate and the
/// requested statistic is averaged. Deterministic for a given stream.
pub fn mc_oracle(
    kind: McMomentKind,
    k: usize,
    d: usize,
    channels_est: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
    config: &NetworkConfig,
    draws: usize,
    stream: &RngStream,
) -> Result<f64> {
    if draws < 1 {
        return Err(Error::InvalidArgument("draws must be >= 1".into()));
    }
    let mut rng = stream.rng();
    let u = filters.u_col(k, d);
    let uu = vnorm(&u).powi(2);
    let p = config.p;

    let mut acc = 0.0;
    let mut acc_sq = 0.0;
    for _ in 0..draws {
        // Fresh errors for every transmitter heard by receiver k.
        let errors: Vec<ComplexMatrix> = (0..config.k)
            .map(|_| gaussian_matrix_with(config.n, config.m, config.sigma2, &mut rng))
            .collect();
        let value = match kind {
            McMomentKind::VarLb => {
                let e = ErrorNormVector::with_norms(
                    errors.iter().map(|e| e.frobenius_norm().powi(2)).collect(),
                    config,
                );
                sinr_lower_bound(channels_est, k, d, filters, &e, p, config.n0)?
            }
            _ => {
                let mut desired = 0.0;
                let mut total = 0.0;
                for j in 0..config.k {
                    let g = channels_est[k][j].add(&errors[j]);
                    for m in 0..filters.v(j).cols() {
                        let power = p * vdot(&u, &g.matvec(&filters.v_col(j, m))).norm_sqr();
                        total += power;
                        if j == k && m == d {
                            desired = power;
                        }
                    }
                }
                let den = total - desired + config.n0 * uu;
                match kind {
                    McMomentKind::MeanNum => desired,
                    McMomentKind::MeanDen => den,
                    McMomentKind::MeanSinr => desired / den,
                    McMomentKind::VarLb => unreachable!(),
                }
            }
        };
        acc += value;
        acc_sq += value * value;
    }
    let n = draws as f64;
    let mean = acc / n;
    Ok(match kind {
        McMomentKind::VarLb => {
            if draws < 2 {
                return Err(Error::InvalidArgument("variance oracle needs draws >= 2".into()));
            }
            (acc_sq - n * mean * mean) / (n - 1.0)
        }
        _ => mean,
    })
}
