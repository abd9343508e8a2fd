//! Iterative transceiver designs: expected-SINR maximization (EM),
//! SINR-variance minimization (VM) and the Max-SINR baseline.
//!
//! All three share the same alternating structure. Within one
//! iteration, every receive-filter column in the original network is
//! updated from the current precoders; the updated receive filters then
//! act as precoders in the reciprocal network, whose receive filters
//! are updated in turn and become the new precoders. Filter design only
//! ever sees the estimated channels; true channels are used for
//! evaluation traces.
//!
//! Every column update solves a shifted system `(S + shift I)^{-1} h`
//! and normalizes. The algorithms differ only in the shift: the EM
//! scalar, the VM scalar `psi = beta / alpha`, or plain `N0`.

use num_complex::Complex64;

use crate::covariance::covariance_pair;
use crate::error::{Error, Result};
use crate::linalg::{real_quad_form, vnorm, vnormalize, ComplexMatrix};
use crate::model::{init_filters, reciprocal_view, ChannelSet, FilterSet, NetworkConfig, RngStream};
use crate::sinr::{leakage_fraction, sinr};
use crate::stats::{approx_mean_sinr, conditional_moments, lb_quadratic_forms, MomentPair};

/// Transceiver design algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Em,
    Vm,
    MaxSinr,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Em, SolverKind::Vm, SolverKind::MaxSinr];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Em => "EM",
            SolverKind::Vm => "VM",
            SolverKind::MaxSinr => "MaxSINR",
        }
    }

    pub fn parse(text: &str) -> Option<SolverKind> {
        match text.to_ascii_lowercase().as_str() {
            "em" => Some(SolverKind::Em),
            "vm" => Some(SolverKind::Vm),
            "maxsinr" | "max-sinr" | "max_sinr" => Some(SolverKind::MaxSinr),
            _ => None,
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-column scalars produced by one half-iteration; entries are NaN
/// where the algorithm does not define them (e.g. `psi` for EM).
#[derive(Debug, Clone)]
pub struct SolverScalars {
    pub omega: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    /// `u^H Q u` at the updated column.
    pub lambda: Vec<Vec<f64>>,
}

impl SolverScalars {
    fn nan_shaped(d: &[usize]) -> Self {
        let shape: Vec<Vec<f64>> = d.iter().map(|&dk| vec![f64::NAN; dk]).collect();
        SolverScalars {
            omega: shape.clone(),
            psi: shape.clone(),
            alpha: shape.clone(),
            beta: shape.clone(),
            zeta: shape.clone(),
            lambda: shape,
        }
    }
}

/// Scalars from both halves of one iteration (original network first).
#[derive(Debug, Clone)]
pub struct IterationScalars {
    pub forward: SolverScalars,
    pub reverse: SolverScalars,
}

/// EM shift scalar from the current moment pair.
pub fn em_omega(moments: &MomentPair, config: &NetworkConfig) -> Result<f64> {
    if moments.mu1 <= 0.0 {
        return Err(Error::DegenerateStream(format!(
            "numerator mean mu1 = {:.3e} not positive",
            moments.mu1
        )));
    }
    let ps2 = config.p * config.sigma2;
    Ok(ps2 * config.total_streams() as f64 - ps2 * (moments.mu1 + moments.mu2) / moments.mu1
        + config.n0)
}

/// VM scalar coefficients for one column.
#[derive(Debug, Clone, Copy)]
pub struct VmCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
}

impl VmCoefficients {
    /// The degeneracy rule: `psi = beta / alpha` is unusable when alpha
    /// vanishes (in particular for sigma2 = 0, where the variance is
    /// identically zero and every column is stationary).
    pub fn is_degenerate(&self) -> bool {
        self.alpha.abs() < 1e-12 * (self.beta.abs() + 1.0)
    }

    pub fn psi(&self) -> f64 {
        self.beta / self.alpha
    }
}

/// Scalar coefficients of the variance-stationarity equation
/// `alpha S u + beta u = zeta T u` for receiver `k`.
///
/// The quadratic forms `a`, `b`, `c` are shared with the lower-bound
/// gradient; the coefficients carry the overall `M N P^2 sigma2^2`
/// variance scale so that the degeneracy rule reacts to `sigma2 = 0`.
pub fn vm_coefficients(
    k: usize,
    s: &ComplexMatrix,
    t: &ComplexMatrix,
    u: &[Complex64],
    config: &NetworkConfig,
) -> Result<VmCoefficients> {
    let (a, b, c) = lb_quadratic_forms(k, s, t, u, config)?;
    let mn = (config.m * config.n) as f64;
    let pmns2 = config.p * mn * config.sigma2;
    let dk = config.d[k] as f64;
    let sq_other: f64 = config
        .d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &dj)| (dj * dj) as f64)
        .sum();
    let streams_other: f64 = config
        .d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &dj)| dj as f64)
        .sum();
    let a0 = pmns2 * streams_other + config.n0;
    let c0 = pmns2 * config.total_streams() as f64 - pmns2 + config.n0;
    let kappa = mn * config.p * config.p * config.sigma2 * config.sigma2;

    let alpha = kappa * (2.0 * a * c - 4.0 * a * a - 4.0 * sq_other * b * b);
    let beta = kappa
        * (2.0 * a * a * c + 2.0 * sq_other * b * b * c + 2.0 * a0 * a * c
            - 2.0 * sq_other * pmns2 * b * c
            - 4.0 * (a * a + sq_other * b * b) * c0);
    let zeta = -kappa
        * (2.0 * (dk - 2.0) * a * c + 2.0 * sq_other * b * c + 4.0 * a * a + 4.0 * sq_other * b * b);
    Ok(VmCoefficients {
        a,
        b,
        c,
        alpha,
        beta,
        zeta,
    })
}

fn shifted_condition(eigvals: &[f64], shift: f64) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &v in eigvals {
        let m = (v + shift).abs();
        lo = lo.min(m);
        hi = hi.max(m);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve `(S + shift I) x = steering` and normalize, adding a small
/// diagonal loading when the shifted matrix is ill-conditioned.
/// `eigvals` are the (real) eigenvalues of `S`.
fn regularized_update(
    s: &ComplexMatrix,
    eigvals: &[f64],
    shift: f64,
    steering: &[Complex64],
) -> Result<Vec<Complex64>> {
    if vnorm(steering) < 1e-150 {
        return Err(Error::DegenerateStream("zero steering vector".into()));
    }
    if !shift.is_finite() {
        return Err(Error::NumericFailure(format!("non-finite shift {shift}")));
    }
    let mut total_shift = shift;
    if shifted_condition(eigvals, shift) > 1e12 {
        let eps = 1e-9 * s.trace().re / s.rows() as f64;
        total_shift += eps;
        log::debug!("ill-conditioned shifted system; loading diagonal by {eps:.3e}");
    }
    let x = s.shifted(total_shift).solve(steering)?;
    vnormalize(&x)
}

/// EM column update: `normalize((S + Omega I)^{-1} steering)`.
pub fn em_update(s: &ComplexMatrix, steering: &[Complex64], omega: f64) -> Result<Vec<Complex64>> {
    let eigvals = s.hermitian_eigenvalues()?;
    regularized_update(s, &eigvals, omega, steering)
}

/// VM column update; identical kernel with the shift `psi`.
pub fn vm_update(s: &ComplexMatrix, steering: &[Complex64], psi: f64) -> Result<Vec<Complex64>> {
    let eigvals = s.hermitian_eigenvalues()?;
    regularized_update(s, &eigvals, psi, steering)
}

/// Max-SINR column update: `normalize((B + N0 I)^{-1} steering)` for the
/// all-streams covariance `B` the caller built from its design CSI.
pub fn max_sinr_update(b: &ComplexMatrix, steering: &[Complex64], n0: f64) -> Result<Vec<Complex64>> {
    let eigvals = b.hermitian_eigenvalues()?;
    regularized_update(b, &eigvals, n0, steering)
}

/// Objective the EM iteration ascends, summed over all streams:
/// `u^H Q u + lambda (1 - u^H F u)` with `Q = T + P sigma2 I`,
/// `F = S - T + (P sigma2 sum D - P sigma2 + N0) I` and `lambda`
/// evaluated as `u^H Q u` at the current filters.
pub fn convergence_metric(
    channels_est: &[Vec<ComplexMatrix>],
    filters: &FilterSet,
    config: &NetworkConfig,
) -> Result<f64> {
    let ps2 = config.p * config.sigma2;
    let f_shift = ps2 * config.total_streams() as f64 - ps2 + config.n0;
    let mut acc = 0.0;
    for k in 0..config.k {
        let pair = covariance_pair(k, channels_est, filters, config.p)?;
        for d in 0..config.d[k] {
            let u = filters.u_col(k, d);
            let lambda = real_quad_form(&pair.t[d].shifted(ps2), &u)?;
            let f_form = real_quad_form(&pair.s.sub(&pair.t[d]).shifted(f_shift), &u)?;
            acc += lambda * (2.0 - f_form);
        }
    }
    if !acc.is_finite() {
        return Err(Error::NumericFailure("non-finite convergence metric".into()));
    }
    Ok(acc)
}

/// One evaluation snapshot in an [`IterationTrace`].
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub leakage_fraction: f64,
    pub metric: f64,
    /// Sum rate from estimated-CSI SINRs at the current filters.
    pub sum_rate_est: f64,
    /// Approximate mean SINR per stream, flattened in (receiver, stream)
    /// order.
    pub approx_mean: Vec<f64>,
}

/// Per-iteration evaluation of a solver run, including the initial
/// state, so a run of `n` iterations yields `n + 1` records.
#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

/// Alternating solver state for one (channels, kind) instance.
pub struct Solver {
    config: NetworkConfig,
    rev_config: NetworkConfig,
    channels: ChannelSet,
    rev_channels: ChannelSet,
    filters: FilterSet,
    kind: SolverKind,
}

impl Solver {
    pub fn new(
        config: &NetworkConfig,
        channels: &ChannelSet,
        kind: SolverKind,
        stream: &RngStream,
    ) -> Result<Self> {
        config.validate()?;
        let filters = init_filters(config, stream)?;
        let (rev_channels, _) = reciprocal_view(channels, &filters);
        Ok(Solver {
            config: config.clone(),
            rev_config: config.reciprocal(),
            channels: channels.clone(),
            rev_channels,
            filters,
            kind,
        })
    }

    pub fn filters(&self) -> &FilterSet {
        &self.filters
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    /// One full iteration: update receive filters in the original
    /// network, then in the reciprocal network (which rewrites the
    /// precoders).
    pub fn step(&mut self) -> Result<IterationScalars> {
        let k_users = self.config.k;
        // Forward half: U columns from current V.
        let mut u_side: Vec<ComplexMatrix> = (0..k_users).map(|k| self.filters.u(k).clone()).collect();
        let v_side: Vec<ComplexMatrix> = (0..k_users).map(|j| self.filters.v(j).clone()).collect();
        let forward = update_receive_filters(
            self.channels.estimated_channels(),
            &v_side,
            &mut u_side,
            &self.config,
            self.kind,
        )?;
        for k in 0..k_users {
            for d in 0..self.config.d[k] {
                self.filters.set_u_col(k, d, &u_side[k].col(d));
            }
        }

        // Reverse half: the updated U act as precoders, the old V as the
        // columns being updated.
        let rev_v: Vec<ComplexMatrix> = (0..k_users).map(|k| self.filters.u(k).clone()).collect();
        let mut rev_u: Vec<ComplexMatrix> = (0..k_users).map(|j| self.filters.v(j).clone()).collect();
        let reverse = update_receive_filters(
            self.rev_channels.estimated_channels(),
            &rev_v,
            &mut rev_u,
            &self.rev_config,
            self.kind,
        )?;
        for j in 0..k_users {
            for d in 0..self.config.d[j] {
                self.filters.set_v_col(j, d, &rev_u[j].col(d));
            }
        }
        Ok(IterationScalars { forward, reverse })
    }

    /// Evaluation snapshot of the current state.
    pub fn trace_record(&self, iteration: usize) -> Result<IterationRecord> {
        let est = self.channels.estimated_channels();
        let mut sum_rate_est = 0.0;
        let mut approx_mean = Vec::with_capacity(self.config.total_streams());
        for k in 0..self.config.k {
            let pair = covariance_pair(k, est, &self.filters, self.config.p)?;
            for d in 0..self.config.d[k] {
                let u = self.filters.u_col(k, d);
                sum_rate_est +=
                    (1.0 + sinr(est, k, d, &self.filters, self.config.p, self.config.n0)?).log2();
                let moments = conditional_moments(&pair.s, &pair.t[d], &u, &self.config)?;
                approx_mean.push(approx_mean_sinr(&moments));
            }
        }
        Ok(IterationRecord {
            iteration,
            leakage_fraction: leakage_fraction(self.channels.true_channels(), &self.filters, &self.config)?,
            metric: convergence_metric(est, &self.filters, &self.config)?,
            sum_rate_est,
            approx_mean,
        })
    }
}

/// Update every receive-filter column in one network direction.
///
/// `v_side` holds the fixed precoders, `u_side` the columns being
/// rewritten; each column's shift scalar is computed from that column's
/// value before its update. Degenerate or singular columns keep their
/// previous value (logged) and the pass continues.
pub fn update_receive_filters(
    channels_est: &[Vec<ComplexMatrix>],
    v_side: &[ComplexMatrix],
    u_side: &mut [ComplexMatrix],
    config: &NetworkConfig,
    kind: SolverKind,
) -> Result<SolverScalars> {
    let mut scalars = SolverScalars::nan_shaped(&config.d);
    let ps2 = config.p * config.sigma2;
    for k in 0..config.k {
        // S depends only on the fixed precoder side; build it once per
        // receiver, along with its eigenvalues for the conditioning rule.
        let n = channels_est[k][k].rows();
        let mut s = ComplexMatrix::zeros(n, n);
        for (j, vj) in v_side.iter().enumerate() {
            for m in 0..vj.cols() {
                let hv = channels_est[k][j].matvec(&vj.col(m));
                s.acc_outer(config.p, &hv);
            }
        }
        let eigvals = s.hermitian_eigenvalues()?;

        for d in 0..config.d[k] {
            let steering = channels_est[k][k].matvec(&v_side[k].col(d));
            let mut t = ComplexMatrix::zeros(n, n);
            t.acc_outer(config.p, &steering);
            let u_cur = u_side[k].col(d);

            let shift = match kind {
                SolverKind::MaxSinr => {
                    scalars.omega[k][d] = config.n0;
                    Some(config.n0)
                }
                SolverKind::Em => match conditional_moments(&s, &t, &u_cur, config)
                    .and_then(|m| em_omega(&m, config))
                {
                    Ok(omega) => {
                        scalars.omega[k][d] = omega;
                        Some(omega)
                    }
                    Err(err) => {
                        log::warn!("EM column ({k},{d}) kept: {err}");
                        None
                    }
                },
                SolverKind::Vm => match vm_coefficients(k, &s, &t, &u_cur, config) {
                    Ok(coeffs) => {
                        scalars.alpha[k][d] = coeffs.alpha;
                        scalars.beta[k][d] = coeffs.beta;
                        scalars.zeta[k][d] = coeffs.zeta;
                        if coeffs.is_degenerate() {
                            log::debug!("VM column ({k},{d}) kept: degenerate alpha");
                            None
                        } else {
                            scalars.psi[k][d] = coeffs.psi();
                            Some(coeffs.psi())
                        }
                    }
                    Err(err) => {
                        log::warn!("VM column ({k},{d}) kept: {err}");
                        None
                    }
                },
            };

            if let Some(shift) = shift {
                match regularized_update(&s, &eigvals, shift, &steering) {
                    Ok(u_new) => u_side[k].set_col(d, &u_new),
                    Err(err) => log::warn!("column ({k},{d}) kept after failed update: {err}"),
                }
            }
            let u_now = u_side[k].col(d);
            scalars.lambda[k][d] = real_quad_form(&t.shifted(ps2), &u_now)?;
        }
    }
    Ok(scalars)
}

/// Run `iterations` alternating iterations from random starting filters
/// and record the evaluation trace (including the initial state).
pub fn alternate_solve(
    config: &NetworkConfig,
    channels: &ChannelSet,
    kind: SolverKind,
    iterations: usize,
    stream: &RngStream,
) -> Result<(FilterSet, IterationTrace)> {
    if iterations < 1 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let mut solver = Solver::new(config, channels, kind, stream)?;
    let mut trace = IterationTrace::default();
    trace.records.push(solver.trace_record(0)?);
    for it in 1..=iterations {
        solver.step()?;
        trace.records.push(solver.trace_record(it)?);
    }
    Ok((solver.filters.clone(), trace))
}
