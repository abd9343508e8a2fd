//! Covariance builders for the receive-side quadratic forms: the
//! all-streams covariance `S^k`, the per-stream desired covariance
//! `T_d^k`, the empirical received-signal autocorrelation, and the
//! error-norm statistics used by the variance machinery.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::model::{
    gaussian_matrix_with, gaussian_vector_with, ChannelSet, FilterSet, NetworkConfig, RngStream,
};

/// `S^k` together with the per-stream `T_d^k` for one receiver.
#[derive(Debug, Clone)]
pub struct CovariancePair {
    /// All-streams covariance at the receiver (N x N, Hermitian PSD).
    pub s: ComplexMatrix,
    /// Desired-stream covariance per own stream (rank <= 1 each).
    pub t: Vec<ComplexMatrix>,
}

/// Covariance of the `d`-th desired stream at receiver `k`:
/// `T = P * (H^{kk} v) (H^{kk} v)^H` for the given channel grid.
pub fn stream_covariance(
    k: usize,
    d: usize,
    channels: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
    p: f64,
) -> Result<ComplexMatrix> {
    let grid_len = channels.len();
    if k >= grid_len || d >= filters.v(k).cols() {
        return Err(Error::InvalidArgument(format!(
            "stream_covariance index out of range (k = {k}, d = {d})"
        )));
    }
    let hv = channels[k][k].matvec(&filters.v_col(k, d));
    let n = hv.len();
    let mut t = ComplexMatrix::zeros(n, n);
    t.acc_outer(p, &hv);
    Ok(t)
}

/// All-streams covariance at receiver `k`:
/// `S = P * sum_j sum_m (H^{kj} v_m^j)(H^{kj} v_m^j)^H`.
pub fn total_covariance(
    k: usize,
    channels: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
    p: f64,
) -> Result<ComplexMatrix> {
    if k >= channels.len() {
        return Err(Error::InvalidArgument(format!("receiver {k} out of range")));
    }
    let n = channels[k][k].rows();
    let mut s = ComplexMatrix::zeros(n, n);
    for (j, row) in channels[k].iter().enumerate() {
        for m in 0..filters.v(j).cols() {
            let hv = row.matvec(&filters.v_col(j, m));
            s.acc_outer(p, &hv);
        }
    }
    Ok(s)
}

/// Both covariances for one receiver in a single pass.
pub fn covariance_pair(
    k: usize,
    channels: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
    p: f64,
) -> Result<CovariancePair> {
    let s = total_covariance(k, channels, filters, p)?;
    let t = (0..filters.v(k).cols())
        .map(|d| stream_covariance(k, d, channels, filters, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(CovariancePair { s, t })
}

/// One sampled network use: symbols, transmit vectors, received vectors
/// and noise for every user, propagated through the true channels.
#[derive(Debug, Clone)]
pub struct SignalSample {
    /// Symbol vector per transmitter, `s[j]` of length `D^j`.
    pub symbols: Vec<Vec<Complex64>>,
    /// Transmit vector per transmitter, `x[j] = V[j] s[j]`.
    pub transmitted: Vec<Vec<Complex64>>,
    /// Received vector per receiver.
    pub received: Vec<Vec<Complex64>>,
    /// Noise vector per receiver.
    pub noise: Vec<Vec<Complex64>>,
}

impl SignalSample {
    /// Draw symbols (CN(0, P)), noise (CN(0, N0)) and propagate through
    /// the true channels of `channels`.
    pub fn draw(
        channels: &ChannelSet,
        filters: &FilterSet,
        config: &NetworkConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let k_users = config.k;
        let mut symbols = Vec::with_capacity(k_users);
        let mut transmitted = Vec::with_capacity(k_users);
        for j in 0..k_users {
            let s = gaussian_vector_with(config.d[j], config.p, rng);
            let x = filters.v(j).matvec(&s);
            symbols.push(s);
            transmitted.push(x);
        }
        let mut received = Vec::with_capacity(k_users);
        let mut noise = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let z = gaussian_vector_with(config.n, config.n0, rng);
            let mut y = z.clone();
            for j in 0..k_users {
                let gx = channels.g(k, j).matvec(&transmitted[j]);
                for (yi, gi) in y.iter_mut().zip(&gx) {
                    *yi += gi;
                }
            }
            received.push(y);
            noise.push(z);
        }
        SignalSample {
            symbols,
            transmitted,
            received,
            noise,
        }
    }
}

/// Empirical autocorrelation `mean(Y^k Y^{k H})` at receiver `k`.
///
/// Each sample draws fresh symbols, fresh error matrices on the fixed
/// estimate `H` of `channels`, and fresh noise. In expectation this
/// equals `S^k + (P sigma2 sum_j D^j + N0) I`.
pub fn estimate_received_autocorrelation(
    k: usize,
    channels: &ChannelSet,
    filters: &FilterSet,
    config: &NetworkConfig,
    samples: usize,
    stream: &RngStream,
) -> Result<ComplexMatrix> {
    if samples < 1 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let mut rng = stream.rng();
    let mut acc = ComplexMatrix::zeros(config.n, config.n);
    let mut y = vec![Complex64::ZERO; config.n];
    for _ in 0..samples {
        let z = gaussian_vector_with(config.n, config.n0, &mut rng);
        y.copy_from_slice(&z);
        for j in 0..config.k {
            let s = gaussian_vector_with(config.d[j], config.p, &mut rng);
            let x = filters.v(j).matvec(&s);
            let e = gaussian_matrix_with(config.n, config.m, config.sigma2, &mut rng);
            let gx = channels.h(k, j).add(&e).matvec(&x);
            for (yi, gi) in y.iter_mut().zip(&gx) {
                *yi += gi;
            }
        }
        acc.acc_outer(1.0, &y);
    }
    Ok(acc.scaled(1.0 / samples as f64))
}

/// Squared Frobenius norms of the error matrices seen by receiver `k`,
/// with their theoretical mean and (diagonal) covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorNormVector {
    /// `e[j] = |E^{kj}|_F^2`.
    pub e: Vec<f64>,
    /// Theoretical mean of each component: `M N sigma2`.
    pub theta: Vec<f64>,
    /// Diagonal of the covariance matrix: `M N sigma2^2` per component.
    pub cov_diag: f64,
}

impl ErrorNormVector {
    /// Build directly from an error-norm vector (used by oracles that
    /// perturb individual components).
    pub fn with_norms(e: Vec<f64>, config: &NetworkConfig) -> Self {
        let mn = (config.m * config.n) as f64;
        ErrorNormVector {
            theta: vec![mn * config.sigma2; e.len()],
            cov_diag: mn * config.sigma2 * config.sigma2,
            e,
        }
    }

    /// The mean vector itself, for evaluating quantities "at theta".
    pub fn at_theta(config: &NetworkConfig) -> Self {
        let mn = (config.m * config.n) as f64;
        ErrorNormVector {
            e: vec![mn * config.sigma2; config.k],
            theta: vec![mn * config.sigma2; config.k],
            cov_diag: mn * config.sigma2 * config.sigma2,
        }
    }
}

/// Error norms realized at receiver `k` of a sampled channel set.
pub fn error_norm_vector(channels: &ChannelSet, k: usize, config: &NetworkConfig) -> Result<ErrorNormVector> {
    if k >= config.k {
        return Err(Error::InvalidArgument(format!("receiver {k} out of range")));
    }
    let e = (0..config.k)
        .map(|j| channels.e(k, j).frobenius_norm().powi(2))
        .collect();
    Ok(ErrorNormVector::with_norms(e, config))
}
