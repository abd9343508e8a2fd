//! Scenario configuration, seeded sampling of channels, errors and
//! filters, and the original/reciprocal network mapping.
//!
//! Sampling convention: true channels `G` have i.i.d. CN(0,1) entries,
//! error matrices `E` have i.i.d. CN(0, sigma2) entries, and the
//! estimate is `H = G - E`, so `G = H + E` holds exactly. CN(0, v) means
//! independent real and imaginary parts, each N(0, v/2). An alternative
//! convention that draws `H` at unit variance and sets `G = H + E` is
//! available for comparison runs.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{vnormalize, ComplexMatrix};

/// Scenario parameters for a K-user interference network.
///
/// Transmitters have `m` antennas, receivers `n`; user `j` carries
/// `d[j]` streams at per-stream symbol power `p`; `n0` is the noise
/// power and `sigma2` the per-entry CSI error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub d: Vec<usize>,
    pub p: f64,
    pub n0: f64,
    pub sigma2: f64,
}

impl NetworkConfig {
    /// All users carry the same stream count.
    pub fn symmetric(k: usize, m: usize, n: usize, d: usize, p: f64, n0: f64, sigma2: f64) -> Result<Self> {
        let cfg = NetworkConfig {
            k,
            m,
            n,
            d: vec![d; k],
            p,
            n0,
            sigma2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if self.m < 1 || self.n < 1 {
            return Err(Error::InvalidArgument("M and N must be at least 1".into()));
        }
        if self.d.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "stream list has {} entries for K = {}",
                self.d.len(),
                self.k
            )));
        }
        let dmax = self.m.min(self.n);
        for (j, &dj) in self.d.iter().enumerate() {
            if dj < 1 || dj > dmax {
                return Err(Error::InvalidArgument(format!(
                    "D^{j} = {dj} outside 1..=min(M, N) = {dmax}"
                )));
            }
        }
        if !self.p.is_finite() || self.p <= 0.0 || !self.n0.is_finite() || self.n0 <= 0.0 {
            return Err(Error::InvalidArgument("P and N0 must be positive and finite".into()));
        }
        if !self.sigma2.is_finite() || self.sigma2 < 0.0 {
            return Err(Error::InvalidArgument("sigma2 must be nonnegative and finite".into()));
        }
        Ok(())
    }

    /// Total stream count over all users.
    pub fn total_streams(&self) -> usize {
        self.d.iter().sum()
    }

    /// Same network seen from the reciprocal direction (antenna roles swap).
    pub fn reciprocal(&self) -> NetworkConfig {
        NetworkConfig {
            k: self.k,
            m: self.n,
            n: self.m,
            d: self.d.clone(),
            p: self.p,
            n0: self.n0,
            sigma2: self.sigma2,
        }
    }
}

/// How the (true, estimated, error) channel triple is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorConvention {
    /// `G` at unit entry variance, `H = G - E`.
    TrueMinusError,
    /// `H` at unit entry variance, `G = H + E` (errors independent of the
    /// estimate).
    EstimatePlusError,
}

/// Deterministic, order-independent random stream.
///
/// Identical `(master_seed, stream)` pairs produce identical sample
/// sequences on any platform; distinct stream indices are statistically
/// independent for practical purposes. Substreams are derived by mixing,
/// so concurrent trials never share generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    stream: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        RngStream { master_seed, stream }
    }

    /// Stream for a nested index path, e.g. (snr, channel, error, role).
    pub fn derive(master_seed: u64, path: &[u64]) -> Self {
        let mut stream = 0u64;
        for &p in path {
            stream = splitmix(stream ^ splitmix(p));
        }
        RngStream { master_seed, stream }
    }

    /// Child stream with one more path component.
    pub fn substream(&self, index: u64) -> Self {
        RngStream {
            master_seed: self.master_seed,
            stream: splitmix(self.stream ^ splitmix(index)),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream
    }

    /// Fresh generator at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix(splitmix(self.master_seed) ^ self.stream))
    }
}

/// Stream-index roles used when deriving substreams.
pub mod stream_role {
    pub const TRUE_CHANNEL: u64 = 1;
    pub const ERROR: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const FILTER_INIT: u64 = 4;
    pub const SYMBOLS: u64 = 5;
    pub const MONTE_CARLO: u64 = 6;
}

/// Draw a `rows x cols` matrix with i.i.d. CN(0, variance) entries.
///
/// Entries are drawn in row-major order, real part before imaginary
/// part; this order is part of the determinism contract.
pub fn sample_gaussian_matrix(
    rows: usize,
    cols: usize,
    variance: f64,
    stream: &RngStream,
) -> Result<ComplexMatrix> {
    if variance < 0.0 {
        return Err(Error::InvalidArgument("variance must be nonnegative".into()));
    }
    let mut rng = stream.rng();
    Ok(gaussian_matrix_with(rows, cols, variance, &mut rng))
}

/// Same as [`sample_gaussian_matrix`] but drawing from a live generator.
pub fn gaussian_matrix_with(rows: usize, cols: usize, variance: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let scale = (variance / 2.0).sqrt();
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        entries.push(Complex64::new(re * scale, im * scale));
    }
    ComplexMatrix::from_entries(rows, cols, entries).expect("sized above")
}

/// Complex Gaussian vector with i.i.d. CN(0, variance) entries.
pub fn gaussian_vector_with(len: usize, variance: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let scale = (variance / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect()
}

/// True, estimated and error channels for every (receiver, transmitter)
/// pair; `g[k][j] = h[k][j] + e[k][j]` holds to within one rounding per
/// entry (the derived member of the triple is a single subtraction or
/// addition of the other two). True channels stay bitwise identical
/// across error resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    g: Vec<Vec<ComplexMatrix>>,
    h: Vec<Vec<ComplexMatrix>>,
    e: Vec<Vec<ComplexMatrix>>,
}

impl ChannelSet {
    pub fn from_true_and_error(g: Vec<Vec<ComplexMatrix>>, e: Vec<Vec<ComplexMatrix>>) -> Self {
        let h = g
            .iter()
            .zip(&e)
            .map(|(grow, erow)| grow.iter().zip(erow).map(|(gm, em)| gm.sub(em)).collect())
            .collect();
        ChannelSet { g, h, e }
    }

    pub fn from_estimate_and_error(h: Vec<Vec<ComplexMatrix>>, e: Vec<Vec<ComplexMatrix>>) -> Self {
        let g = h
            .iter()
            .zip(&e)
            .map(|(hrow, erow)| hrow.iter().zip(erow).map(|(hm, em)| hm.add(em)).collect())
            .collect();
        ChannelSet { g, h, e }
    }

    pub fn users(&self) -> usize {
        self.g.len()
    }

    /// True channel from transmitter `j` to receiver `k`.
    pub fn g(&self, k: usize, j: usize) -> &ComplexMatrix {
        &self.g[k][j]
    }

    /// Estimated channel from transmitter `j` to receiver `k`.
    pub fn h(&self, k: usize, j: usize) -> &ComplexMatrix {
        &self.h[k][j]
    }

    /// Error matrix from transmitter `j` to receiver `k`.
    pub fn e(&self, k: usize, j: usize) -> &ComplexMatrix {
        &self.e[k][j]
    }

    pub fn true_channels(&self) -> &Vec<Vec<ComplexMatrix>> {
        &self.g
    }

    pub fn estimated_channels(&self) -> &Vec<Vec<ComplexMatrix>> {
        &self.h
    }

    /// Fresh error realizations on the same true channel.
    pub fn resample_errors(&self, config: &NetworkConfig, stream: &RngStream) -> Result<ChannelSet> {
        let e = sample_error_grid(config, stream)?;
        Ok(ChannelSet::from_true_and_error(self.g.clone(), e))
    }
}

fn sample_error_grid(config: &NetworkConfig, stream: &RngStream) -> Result<Vec<Vec<ComplexMatrix>>> {
    let mut rng = stream.rng();
    let mut e = Vec::with_capacity(config.k);
    for _k in 0..config.k {
        let mut row = Vec::with_capacity(config.k);
        for _j in 0..config.k {
            row.push(gaussian_matrix_with(config.n, config.m, config.sigma2, &mut rng));
        }
        e.push(row);
    }
    Ok(e)
}

/// Sample a full channel set under the given convention.
pub fn sample_network_with(
    config: &NetworkConfig,
    convention: ErrorConvention,
    stream: &RngStream,
) -> Result<ChannelSet> {
    config.validate()?;
    let mut base_rng = stream.substream(stream_role::TRUE_CHANNEL).rng();
    let mut base = Vec::with_capacity(config.k);
    for _k in 0..config.k {
        let mut row = Vec::with_capacity(config.k);
        for _j in 0..config.k {
            row.push(gaussian_matrix_with(config.n, config.m, 1.0, &mut base_rng));
        }
        base.push(row);
    }
    let e = sample_error_grid(config, &stream.substream(stream_role::ERROR))?;
    Ok(match convention {
        ErrorConvention::TrueMinusError => ChannelSet::from_true_and_error(base, e),
        ErrorConvention::EstimatePlusError => ChannelSet::from_estimate_and_error(base, e),
    })
}

/// Sample a full channel set: `G` at unit variance, `H = G - E`.
pub fn sample_network(config: &NetworkConfig, stream: &RngStream) -> Result<ChannelSet> {
    sample_network_with(config, ErrorConvention::TrueMinusError, stream)
}

/// Precoders `V[j]` (M x D^j) and interference suppression matrices
/// `U[k]` (N x D^k); every column has unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet {
    v: Vec<ComplexMatrix>,
    u: Vec<ComplexMatrix>,
}

impl FilterSet {
    pub fn new(v: Vec<ComplexMatrix>, u: Vec<ComplexMatrix>) -> Self {
        FilterSet { v, u }
    }

    pub fn v(&self, j: usize) -> &ComplexMatrix {
        &self.v[j]
    }

    pub fn u(&self, k: usize) -> &ComplexMatrix {
        &self.u[k]
    }

    pub fn v_col(&self, j: usize, d: usize) -> Vec<Complex64> {
        self.v[j].col(d)
    }

    pub fn u_col(&self, k: usize, d: usize) -> Vec<Complex64> {
        self.u[k].col(d)
    }

    pub fn set_v_col(&mut self, j: usize, d: usize, col: &[Complex64]) {
        self.v[j].set_col(d, col);
    }

    pub fn set_u_col(&mut self, k: usize, d: usize, col: &[Complex64]) {
        self.u[k].set_col(d, col);
    }

    /// Largest deviation of any column norm from 1.
    pub fn max_unit_norm_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in self.v.iter().chain(&self.u) {
            for d in 0..m.cols() {
                worst = worst.max((crate::linalg::vnorm(&m.col(d)) - 1.0).abs());
            }
        }
        worst
    }
}

/// Random unit-norm starting filters: columns i.i.d. CN(0,1), normalized.
pub fn init_filters(config: &NetworkConfig, stream: &RngStream) -> Result<FilterSet> {
    config.validate()?;
    let mut rng = stream.substream(stream_role::FILTER_INIT).rng();
    let mut v = Vec::with_capacity(config.k);
    let mut u = Vec::with_capacity(config.k);
    for &dj in &config.d {
        let mut m = gaussian_matrix_with(config.m, dj, 1.0, &mut rng);
        for d in 0..dj {
            let col = vnormalize(&m.col(d))?;
            m.set_col(d, &col);
        }
        v.push(m);
    }
    for &dk in &config.d {
        let mut m = gaussian_matrix_with(config.n, dk, 1.0, &mut rng);
        for d in 0..dk {
            let col = vnormalize(&m.col(d))?;
            m.set_col(d, &col);
        }
        u.push(m);
    }
    Ok(FilterSet::new(v, u))
}

/// Map a (channels, filters) state into the reciprocal network.
///
/// Reciprocal channels are the conjugate transposes of the forward ones;
/// reciprocal precoders are the forward suppression matrices and vice
/// versa. Applying the map twice returns the original state.
pub fn reciprocal_view(channels: &ChannelSet, filters: &FilterSet) -> (ChannelSet, FilterSet) {
    let k_users = channels.users();
    let map = |grid: &Vec<Vec<ComplexMatrix>>| -> Vec<Vec<ComplexMatrix>> {
        (0..k_users)
            .map(|j| (0..k_users).map(|k| grid[k][j].adjoint()).collect())
            .collect()
    };
    let channels_r = ChannelSet {
        g: map(&channels.g),
        h: map(&channels.h),
        e: map(&channels.e),
    };
    let filters_r = FilterSet::new(
        (0..k_users).map(|k| filters.u(k).clone()).collect(),
        (0..k_users).map(|j| filters.v(j).clone()).collect(),
    );
    (channels_r, filters_r)
}
