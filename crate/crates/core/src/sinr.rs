//! Per-stream SINR evaluation — exact (true or estimated CSI), the
//! error-norm lower bound, rates, approximate capacity and the
//! interference-leakage diagnostic.
//!
//! Rates are base-2 logarithms (b/s/Hz) throughout.

use crate::covariance::{covariance_pair, stream_covariance, total_covariance, ErrorNormVector};
use crate::error::{Error, Result};
use crate::linalg::{real_quad_form, vdot, vnorm, ComplexMatrix};
use crate::model::{ChannelSet, FilterSet, NetworkConfig};
use crate::stats::conditional_moments;

/// Exact SINR of stream `d` at receiver `k` for the given channel grid.
///
/// The caller chooses the CSI by passing either the true or the
/// estimated channel matrices. Evaluated literally as desired power over
/// (total received power minus desired power plus noise).
pub fn sinr(
    channels: &[Vec<ComplexMatrix>],
    k: usize,
    d: usize,
    filters: &FilterSet,
    p: f64,
    n0: f64,
) -> Result<f64> {
    let u = filters.u_col(k, d);
    let desired = p * vdot(&u, &channels[k][k].matvec(&filters.v_col(k, d))).norm_sqr();
    let mut total = 0.0;
    for (j, row) in channels[k].iter().enumerate() {
        for m in 0..filters.v(j).cols() {
            total += p * vdot(&u, &row.matvec(&filters.v_col(j, m))).norm_sqr();
        }
    }
    let den = total - desired + n0 * vnorm(&u).powi(2);
    let value = desired / den;
    if !value.is_finite() {
        return Err(Error::NumericFailure(format!(
            "non-finite SINR at receiver {k} stream {d} (den = {den:.3e})"
        )));
    }
    Ok(value)
}

/// Error-norm lower bound on the SINR of stream `d` at receiver `k`,
/// evaluated at the given error-norm vector. The value is returned
/// unclamped and may be negative when the error term exceeds the
/// desired power.
pub fn sinr_lower_bound(
    channels_est: &[Vec<ComplexMatrix>],
    k: usize,
    d: usize,
    filters: &FilterSet,
    e: &ErrorNormVector,
    p: f64,
    n0: f64,
) -> Result<f64> {
    if e.e.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidArgument("error norms must be nonnegative".into()));
    }
    let u = filters.u_col(k, d);
    let uu = vnorm(&u).powi(2);
    let desired = p * vdot(&u, &channels_est[k][k].matvec(&filters.v_col(k, d))).norm_sqr();
    let mut total = 0.0;
    let mut err_weight = 0.0;
    for (j, row) in channels_est[k].iter().enumerate() {
        let dj = filters.v(j).cols();
        for m in 0..dj {
            total += p * vdot(&u, &row.matvec(&filters.v_col(j, m))).norm_sqr();
        }
        err_weight += e.e[j] * dj as f64;
    }
    let num = desired - p * e.e[k] * uu;
    let den = total + p * uu * err_weight - desired - p * e.e[k] * uu + n0 * uu;
    if den.abs() < 1e-300 || !den.is_finite() {
        return Err(Error::NumericFailure(format!(
            "degenerate lower-bound denominator at receiver {k} stream {d}"
        )));
    }
    Ok(num / den)
}

/// Sum rate over precomputed SINR values: `sum log2(1 + sinr)`.
pub fn sum_rate_from(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|&s| (1.0 + s).log2()).sum()
}

/// Sum rate over all streams for the given channel grid.
pub fn sum_rate(
    channels: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
    config: &NetworkConfig,
) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..config.k {
        for d in 0..config.d[k] {
            acc += (1.0 + sinr(channels, k, d, filters, config.p, config.n0)?).log2();
        }
    }
    Ok(acc)
}

/// Approximate conditional capacity: `sum log2(1 + mu1/mu2)` over all
/// streams, with the moment pair built from the estimated channels.
pub fn approx_capacity(
    config: &NetworkConfig,
    channels_est: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..config.k {
        let pair = covariance_pair(k, channels_est, filters, config.p)?;
        for d in 0..config.d[k] {
            let u = filters.u_col(k, d);
            let m = conditional_moments(&pair.s, &pair.t[d], &u, config)?;
            acc += (1.0 + m.ratio).log2();
        }
    }
    Ok(acc)
}

/// Sum over all streams of the interference fraction at the receive
/// filter output, using true channels: interference energy over total
/// received energy (including noise).
pub fn leakage_fraction(
    channels_true: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
    config: &NetworkConfig,
) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..config.k {
        let b = total_covariance(k, channels_true, filters, config.p)?;
        for d in 0..config.d[k] {
            let own = stream_covariance(k, d, channels_true, filters, config.p)?;
            let u = filters.u_col(k, d);
            let interference = real_quad_form(&b.sub(&own), &u)?;
            let received = real_quad_form(&b.shifted(config.n0), &u)?;
            if received <= 0.0 {
                return Err(Error::NumericFailure(
                    "nonpositive received power in leakage fraction".into(),
                ));
            }
            acc += interference / received;
        }
    }
    Ok(acc)
}

/// Snapshot of all per-stream metrics for one (channels, filters) state.
#[derive(Debug, Clone)]
pub struct MetricRecord {
    /// Exact SINR with true channels, per `[k][d]`.
    pub sinr_true: Vec<Vec<f64>>,
    /// Exact SINR with estimated channels, per `[k][d]`.
    pub sinr_est: Vec<Vec<f64>>,
    /// Per-stream rate `log2(1 + sinr_est)`, per `[k][d]`.
    pub rate: Vec<Vec<f64>>,
    /// Total rate in b/s/Hz.
    pub sum_rate: f64,
    /// Leakage diagnostic (true channels).
    pub leakage_fraction: f64,
}

impl MetricRecord {
    pub fn compute(channels: &ChannelSet, filters: &FilterSet, config: &NetworkConfig) -> Result<Self> {
        let mut sinr_true = Vec::with_capacity(config.k);
        let mut sinr_est = Vec::with_capacity(config.k);
        let mut rate = Vec::with_capacity(config.k);
        let mut sum = 0.0;
        for k in 0..config.k {
            let mut st = Vec::with_capacity(config.d[k]);
            let mut se = Vec::with_capacity(config.d[k]);
            let mut rk = Vec::with_capacity(config.d[k]);
            for d in 0..config.d[k] {
                let true_val = sinr(channels.true_channels(), k, d, filters, config.p, config.n0)?;
                let est_val = sinr(channels.estimated_channels(), k, d, filters, config.p, config.n0)?;
                let r = (1.0 + est_val).log2();
                sum += r;
                st.push(true_val);
                se.push(est_val);
                rk.push(r);
            }
            sinr_true.push(st);
            sinr_est.push(se);
            rate.push(rk);
        }
        Ok(MetricRecord {
            sinr_true,
            sinr_est,
            rate,
            sum_rate: sum,
            leakage_fraction: leakage_fraction(channels.true_channels(), filters, config)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_filters, sample_network, RngStream};
    use num_complex::Complex64;

    fn setup(sigma2: f64, seed: u64) -> (NetworkConfig, ChannelSet, FilterSet) {
        let cfg = NetworkConfig::symmetric(4, 3, 3, 1, 1.0, 1.0, sigma2).unwrap();
        let ch = sample_network(&cfg, &RngStream::new(seed, 0)).unwrap();
        let f = init_filters(&cfg, &RngStream::new(seed, 1)).unwrap();
        (cfg, ch, f)
    }

    #[test]
    fn scalar_network_example() {
        // K = 1, M = N = 1, G = [1], v = u = 1, P = 2, N0 = 1: den = N0.
        let g = vec![vec![ComplexMatrix::identity(1)]];
        let one = ComplexMatrix::identity(1);
        let f = FilterSet::new(vec![one.clone()], vec![one]);
        let val = sinr(&g, 0, 0, &f, 2.0, 1.0).unwrap();
        assert!((val - 2.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_receive_filter_gives_zero() {
        let mut g = ComplexMatrix::zeros(2, 2);
        g[(0, 0)] = Complex64::ONE;
        let grid = vec![vec![g]];
        let mut v = ComplexMatrix::zeros(2, 1);
        v[(0, 0)] = Complex64::ONE;
        let mut u = ComplexMatrix::zeros(2, 1);
        u[(1, 0)] = Complex64::ONE; // orthogonal to G v = e1
        let f = FilterSet::new(vec![v], vec![u]);
        let val = sinr(&grid, 0, 0, &f, 1.0, 1.0).unwrap();
        assert_eq!(val, 0.0);
    }

    /// Fully unrolled re-computation of the SINR with scalar loops.
    fn brute_sinr(
        channels: &[Vec<ComplexMatrix>],
        k: usize,
        d: usize,
        filters: &FilterSet,
        p: f64,
        n0: f64,
    ) -> f64 {
        let u = filters.u_col(k, d);
        let project = |j: usize, m: usize| -> Complex64 {
            let v = filters.v_col(j, m);
            let h = &channels[k][j];
            let mut acc = Complex64::ZERO;
            for a in 0..h.rows() {
                for b in 0..h.cols() {
                    acc += u[a].conj() * h[(a, b)] * v[b];
                }
            }
            acc
        };
        let desired = p * project(k, d).norm_sqr();
        let mut total = 0.0;
        for j in 0..channels.len() {
            for m in 0..filters.v(j).cols() {
                total += p * project(j, m).norm_sqr();
            }
        }
        let uu: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        desired / (total - desired + n0 * uu)
    }

    #[test]
    fn sinr_matches_brute_force() {
        let (cfg, ch, f) = setup(0.1, 9);
        for k in 0..cfg.k {
            let a = sinr(ch.true_channels(), k, 0, &f, cfg.p, cfg.n0).unwrap();
            let b = brute_sinr(ch.true_channels(), k, 0, &f, cfg.p, cfg.n0);
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn sinr_matches_covariance_form() {
        // u^H (B - bb^H + N0 I) u as the denominator must agree with the
        // norm-squared evaluation.
        let (cfg, ch, f) = setup(0.1, 13);
        for k in 0..cfg.k {
            let b = total_covariance(k, ch.true_channels(), &f, cfg.p).unwrap();
            let own = stream_covariance(k, 0, ch.true_channels(), &f, cfg.p).unwrap();
            let u = f.u_col(k, 0);
            let num = real_quad_form(&own, &u).unwrap();
            let den = real_quad_form(&b.sub(&own).shifted(cfg.n0), &u).unwrap();
            let via_cov = num / den;
            let direct = sinr(ch.true_channels(), k, 0, &f, cfg.p, cfg.n0).unwrap();
            assert!((via_cov - direct).abs() < 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn lower_bound_reduces_to_estimated_sinr_without_error() {
        let (cfg, ch, f) = setup(0.1, 21);
        let zero = ErrorNormVector::with_norms(vec![0.0; cfg.k], &cfg);
        for k in 0..cfg.k {
            let lb = sinr_lower_bound(ch.estimated_channels(), k, 0, &f, &zero, cfg.p, cfg.n0).unwrap();
            let est = sinr(ch.estimated_channels(), k, 0, &f, cfg.p, cfg.n0).unwrap();
            assert!((lb - est).abs() <= 1e-14 * est.max(1.0));
        }
    }

    #[test]
    fn sum_rate_examples() {
        assert!((sum_rate_from(&[1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(sum_rate_from(&[0.0, 0.0]), 0.0);
        assert!((sum_rate_from(&[3.0; 4]) - 8.0).abs() < 1e-12);
        // Monotone in each argument.
        assert!(sum_rate_from(&[2.0, 5.0]) > sum_rate_from(&[2.0, 4.0]));
    }

    #[test]
    fn approx_capacity_reduces_at_zero_sigma() {
        let (mut cfg, ch, f) = setup(0.0, 33);
        cfg.sigma2 = 0.0;
        let approx = approx_capacity(&cfg, ch.estimated_channels(), &f).unwrap();
        let exact = sum_rate(ch.estimated_channels(), &f, &cfg).unwrap();
        assert!((approx - exact).abs() < 1e-12 * exact.max(1.0));
    }

    #[test]
    fn leakage_zero_for_isolated_aligned_user() {
        // No cross channels, receive filter aligned with the desired
        // direction: every leakage numerator vanishes.
        let cfg = NetworkConfig::symmetric(2, 2, 2, 1, 1.0, 1.0, 0.0).unwrap();
        let mut g11 = ComplexMatrix::zeros(2, 2);
        g11[(0, 0)] = Complex64::new(2.0, 0.0);
        let zero = ComplexMatrix::zeros(2, 2);
        let grid = vec![
            vec![g11.clone(), zero.clone()],
            vec![zero.clone(), g11.clone()],
        ];
        let mut v = ComplexMatrix::zeros(2, 1);
        v[(0, 0)] = Complex64::ONE;
        let u = v.clone(); // aligned with G v = 2 e1
        let f = FilterSet::new(vec![v.clone(), v.clone()], vec![u.clone(), u]);
        let leak = leakage_fraction(&grid, &f, &cfg).unwrap();
        assert!(leak.abs() < 1e-14);
    }

    #[test]
    fn leakage_term_is_one_when_orthogonal_and_noise_negligible() {
        // Receive filters orthogonal to the desired direction and aligned
        // with the (orthogonal) cross channel: each per-stream term tends
        // to 1 as noise vanishes.
        let mut cfg = NetworkConfig::symmetric(2, 2, 2, 1, 1.0, 1.0, 0.0).unwrap();
        cfg.n0 = 1e-15;
        let mut g_own = ComplexMatrix::zeros(2, 2);
        g_own[(0, 0)] = Complex64::ONE;
        let mut g_cross = ComplexMatrix::zeros(2, 2);
        g_cross[(1, 0)] = Complex64::ONE; // interference arrives along e2
        let grid = vec![
            vec![g_own.clone(), g_cross.clone()],
            vec![g_cross, g_own],
        ];
        let mut v = ComplexMatrix::zeros(2, 1);
        v[(0, 0)] = Complex64::ONE;
        let mut u = ComplexMatrix::zeros(2, 1);
        u[(1, 0)] = Complex64::ONE; // all received energy is interference
        let f = FilterSet::new(vec![v.clone(), v], vec![u.clone(), u]);
        let leak = leakage_fraction(&grid, &f, &cfg).unwrap();
        assert!((leak - 2.0).abs() < 1e-9, "leak = {leak}");
    }

    #[test]
    fn leakage_terms_bounded_by_stream_count() {
        let (cfg, ch, f) = setup(0.1, 55);
        let leak = leakage_fraction(ch.true_channels(), &f, &cfg).unwrap();
        assert!(leak >= 0.0 && leak <= cfg.total_streams() as f64);
    }

    #[test]
    fn metric_record_consistency() {
        let (cfg, ch, f) = setup(0.1, 77);
        let rec = MetricRecord::compute(&ch, &f, &cfg).unwrap();
        let total: f64 = rec.rate.iter().flatten().sum();
        assert!((rec.sum_rate - total).abs() < 1e-12);
        assert!(rec.sinr_true.iter().flatten().all(|&x| x >= 0.0));
        assert!(rec.sinr_est.iter().flatten().all(|&x| x >= 0.0));
    }
}
