//! Seeded Monte Carlo experiment harness: sum-rate SNR sweeps,
//! SINR-variance tables, approximation-accuracy curves and convergence
//! traces, persisted as CSV.
//!
//! Every trial owns an RNG stream keyed by (master seed, SNR index,
//! channel index, error index), so results do not depend on execution
//! order and trials parallelize freely; aggregation always runs in
//! trial-index order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{sample_network_with, ChannelSet, ErrorConvention, NetworkConfig, RngStream};
use crate::sinr::{approx_capacity, sinr, sum_rate};
use crate::solver::{alternate_solve, SolverKind};

/// Statistic names used in result rows.
pub mod statistic {
    pub const AVG_SUM_RATE: &str = "avg_sum_rate";
    pub const AVG_SINR_VARIANCE: &str = "avg_sinr_variance";
    pub const APPROX_CAPACITY: &str = "approx_capacity";
    pub const NUMERICAL_CAPACITY: &str = "numerical_capacity";
    pub const PCT_ERROR: &str = "pct_error";
    pub const LEAKAGE_FRACTION: &str = "leakage_fraction";
}

/// One experiment scenario: a network configuration plus the sweep and
/// averaging protocol.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    /// Base configuration; `p` is overridden per SNR point.
    pub config: NetworkConfig,
    pub snr_grid_db: Vec<f64>,
    pub channels_per_point: usize,
    pub errors_per_channel: usize,
    pub iterations: usize,
    pub master_seed: u64,
    pub convention: ErrorConvention,
}

impl Scenario {
    /// Scenario with the standard averaging protocol (20 true channels,
    /// 20 error draws each, 100 iterations).
    pub fn new(label: impl Into<String>, config: NetworkConfig, snr_grid_db: Vec<f64>, master_seed: u64) -> Self {
        Scenario {
            label: label.into(),
            config,
            snr_grid_db,
            channels_per_point: 20,
            errors_per_channel: 20,
            iterations: 100,
            master_seed,
            convention: ErrorConvention::TrueMinusError,
        }
    }

    /// Built-in named scenarios.
    pub fn preset(name: &str, master_seed: u64) -> Result<Scenario> {
        let default_grid: Vec<f64> = (0..=6).map(|i| 4.0 * i as f64).collect();
        let (label, k, m, n, d) = match name {
            "3x3_1_4" => ("(3x3,1)^4", 4, 3, 3, 1),
            "4x4_2_3" => ("(4x4,2)^3", 3, 4, 4, 2),
            "10x10_5_3" => ("(10x10,5)^3", 3, 10, 10, 5),
            "6x8_4_2" => ("(6x8,4)^2", 2, 6, 8, 4),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown scenario preset '{other}' (expected 3x3_1_4, 4x4_2_3, 10x10_5_3 or 6x8_4_2)"
                )))
            }
        };
        let config = NetworkConfig::symmetric(k, m, n, d, 1.0, 1.0, 0.1)?;
        Ok(Scenario::new(label, config, default_grid, master_seed))
    }

    pub const PRESET_NAMES: [&'static str; 4] = ["3x3_1_4", "4x4_2_3", "10x10_5_3", "6x8_4_2"];

    /// Configuration at one SNR point: `P = N0 * 10^(dB/10)`.
    pub fn config_at(&self, snr_db: f64) -> NetworkConfig {
        let mut cfg = self.config.clone();
        cfg.p = cfg.n0 * 10f64.powf(snr_db / 10.0);
        cfg
    }

    pub fn trials_per_point(&self) -> usize {
        self.channels_per_point * self.errors_per_channel
    }
}

/// One aggregated statistic row.
#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub scenario: String,
    pub algorithm: String,
    pub snr_db: f64,
    pub statistic: String,
    pub value: f64,
    pub trials: usize,
}

/// One convergence-trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub scenario: String,
    pub algorithm: String,
    pub iteration: usize,
    pub leakage_fraction: f64,
}

/// Tabular experiment output. Sweep-style experiments fill `rows`;
/// convergence runs fill `traces`.
#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<StatRow>,
    pub traces: Vec<TraceRow>,
}

fn fmt9(value: f64) -> String {
    format!("{value:.8e}")
}

impl ExperimentResult {
    pub fn merge(&mut self, other: ExperimentResult) {
        self.rows.extend(other.rows);
        self.traces.extend(other.traces);
    }

    /// Write `scenario,algorithm,snr_db,statistic,value,trials` rows.
    pub fn write_stats_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "algorithm", "snr_db", "statistic", "value", "trials"])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.as_str(),
                r.algorithm.as_str(),
                &fmt9(r.snr_db),
                r.statistic.as_str(),
                &fmt9(r.value),
                &r.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write `scenario,algorithm,iteration,leakage_fraction` rows.
    pub fn write_traces_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "algorithm", "iteration", "leakage_fraction"])?;
        for r in &self.traces {
            w.write_record([
                r.scenario.as_str(),
                r.algorithm.as_str(),
                &r.iteration.to_string(),
                &fmt9(r.leakage_fraction),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn stats_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_stats_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::NumericFailure(e.to_string()))
    }

    pub fn traces_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_traces_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::NumericFailure(e.to_string()))
    }
}

/// Channels and design for one (snr, channel, error) trial.
fn trial_channels(scenario: &Scenario, cfg: &NetworkConfig, si: usize, ci: usize, ei: usize) -> Result<ChannelSet> {
    // The true channel is shared by all error draws of one channel index.
    let base = sample_network_with(
        cfg,
        scenario.convention,
        &RngStream::derive(scenario.master_seed, &[si as u64, ci as u64, 0]),
    )?;
    if ei == 0 {
        return Ok(base);
    }
    base.resample_errors(
        cfg,
        &RngStream::derive(scenario.master_seed, &[si as u64, ci as u64, ei as u64, 1]),
    )
}

// Starting filters are keyed per (snr, channel) so that error draws on
// one true channel differ only through the CSI error; with sigma2 = 0
// every draw then reproduces the same design exactly.
fn filter_stream(scenario: &Scenario, si: usize, ci: usize) -> RngStream {
    RngStream::derive(scenario.master_seed, &[si as u64, ci as u64, 2])
}

/// Design filters for every requested algorithm on one trial and hand
/// the per-kind outcome to `eval`.
fn run_trial<T: Send>(
    scenario: &Scenario,
    cfg: &NetworkConfig,
    si: usize,
    ci: usize,
    ei: usize,
    kinds: &[SolverKind],
    eval: impl Fn(SolverKind, &ChannelSet, &crate::model::FilterSet) -> Result<T>,
) -> Vec<Option<T>> {
    let channels = match trial_channels(scenario, cfg, si, ci, ei) {
        Ok(c) => c,
        Err(err) => {
            log::warn!("trial (snr {si}, channel {ci}, error {ei}) skipped: {err}");
            return kinds.iter().map(|_| None).collect();
        }
    };
    let fstream = filter_stream(scenario, si, ci);
    kinds
        .iter()
        .map(|&kind| {
            match alternate_solve(cfg, &channels, kind, scenario.iterations, &fstream)
                .and_then(|(filters, _)| eval(kind, &channels, &filters))
            {
                Ok(v) => Some(v),
                Err(err) => {
                    log::warn!(
                        "{kind} trial (snr {si}, channel {ci}, error {ei}) excluded: {err}"
                    );
                    None
                }
            }
        })
        .collect()
}

/// Average sum rate per algorithm per SNR point.
///
/// Filters are designed from each trial's estimated channels; the rate
/// is the delivered one, i.e. evaluated with the trial's true channels.
pub fn run_sum_rate_sweep(scenario: &Scenario, kinds: &[SolverKind]) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::default();
    for (si, &snr_db) in scenario.snr_grid_db.iter().enumerate() {
        let cfg = scenario.config_at(snr_db);
        let trials: Vec<(usize, usize)> = (0..scenario.channels_per_point)
            .flat_map(|ci| (0..scenario.errors_per_channel).map(move |ei| (ci, ei)))
            .collect();
        let per_trial: Vec<Vec<Option<f64>>> = trials
            .par_iter()
            .map(|&(ci, ei)| {
                run_trial(scenario, &cfg, si, ci, ei, kinds, |_, channels, filters| {
                    sum_rate(channels.true_channels(), filters, &cfg)
                })
            })
            .collect();
        for (kidx, &kind) in kinds.iter().enumerate() {
            let values: Vec<f64> = per_trial.iter().filter_map(|t| t[kidx]).collect();
            if values.is_empty() {
                return Err(Error::NumericFailure(format!(
                    "all trials failed for {kind} at {snr_db} dB"
                )));
            }
            result.rows.push(StatRow {
                scenario: scenario.label.clone(),
                algorithm: kind.name().to_string(),
                snr_db,
                statistic: statistic::AVG_SUM_RATE.to_string(),
                value: values.iter().sum::<f64>() / values.len() as f64,
                trials: values.len(),
            });
        }
    }
    Ok(result)
}

/// Average SINR variance per algorithm per SNR point: the variance of
/// the estimated-CSI per-stream sinr (the design-side quantity
/// conditioned on the channel estimate) is taken across error draws
/// separately for every (true channel, stream), then averaged over
/// channels and streams.
pub fn run_variance_table(scenario: &Scenario, kinds: &[SolverKind]) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::default();
    let streams = scenario.config.total_streams();
    for (si, &snr_db) in scenario.snr_grid_db.iter().enumerate() {
        let cfg = scenario.config_at(snr_db);
        let trials: Vec<(usize, usize)> = (0..scenario.channels_per_point)
            .flat_map(|ci| (0..scenario.errors_per_channel).map(move |ei| (ci, ei)))
            .collect();
        // Per-stream design-side sinr values for each trial.
        let per_trial: Vec<Vec<Option<Vec<f64>>>> = trials
            .par_iter()
            .map(|&(ci, ei)| {
                run_trial(scenario, &cfg, si, ci, ei, kinds, |_, channels, filters| {
                    let mut vals = Vec::with_capacity(streams);
                    for k in 0..cfg.k {
                        for d in 0..cfg.d[k] {
                            vals.push(sinr(channels.estimated_channels(), k, d, filters, cfg.p, cfg.n0)?);
                        }
                    }
                    Ok(vals)
                })
            })
            .collect();
        for (kidx, &kind) in kinds.iter().enumerate() {
            let mut variances = Vec::new();
            let mut used_trials = 0;
            for ci in 0..scenario.channels_per_point {
                for stream_idx in 0..streams {
                    let samples: Vec<f64> = (0..scenario.errors_per_channel)
                        .filter_map(|ei| {
                            per_trial[ci * scenario.errors_per_channel + ei][kidx]
                                .as_ref()
                                .map(|v| v[stream_idx])
                        })
                        .collect();
                    if stream_idx == 0 {
                        used_trials += samples.len();
                    }
                    if samples.len() < 2 {
                        continue;
                    }
                    let n = samples.len() as f64;
                    let mean = samples.iter().sum::<f64>() / n;
                    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    variances.push(var);
                }
            }
            if variances.is_empty() {
                return Err(Error::NumericFailure(format!(
                    "no usable variance samples for {kind} at {snr_db} dB"
                )));
            }
            result.rows.push(StatRow {
                scenario: scenario.label.clone(),
                algorithm: kind.name().to_string(),
                snr_db,
                statistic: statistic::AVG_SINR_VARIANCE.to_string(),
                value: variances.iter().sum::<f64>() / variances.len() as f64,
                trials: used_trials,
            });
        }
    }
    Ok(result)
}

/// Approximation-accuracy experiment for EM-designed filters: the
/// moment-ratio capacity against a Monte Carlo average of the true
/// mutual information over fresh error draws on each trial's estimate.
pub fn run_approx_accuracy(scenario: &Scenario) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::default();
    let mc_draws = scenario.errors_per_channel.max(2);
    for (si, &snr_db) in scenario.snr_grid_db.iter().enumerate() {
        let cfg = scenario.config_at(snr_db);
        let trials: Vec<(usize, usize)> = (0..scenario.channels_per_point)
            .flat_map(|ci| (0..scenario.errors_per_channel).map(move |ei| (ci, ei)))
            .collect();
        let per_trial: Vec<Vec<Option<(f64, f64)>>> = trials
            .par_iter()
            .map(|&(ci, ei)| {
                run_trial(
                    scenario,
                    &cfg,
                    si,
                    ci,
                    ei,
                    &[SolverKind::Em],
                    |_, channels, filters| {
                        let theoretical = approx_capacity(&cfg, channels.estimated_channels(), filters)?;
                        // Fresh errors on the fixed estimate; the true
                        // channel for each draw is H + E'.
                        let mut rng = RngStream::derive(
                            scenario.master_seed,
                            &[si as u64, ci as u64, ei as u64, 3],
                        )
                        .rng();
                        let mut numerical = 0.0;
                        for _ in 0..mc_draws {
                            let mut grid = Vec::with_capacity(cfg.k);
                            for k in 0..cfg.k {
                                let mut row = Vec::with_capacity(cfg.k);
                                for j in 0..cfg.k {
                                    let e = crate::model::gaussian_matrix_with(
                                        cfg.n, cfg.m, cfg.sigma2, &mut rng,
                                    );
                                    row.push(channels.h(k, j).add(&e));
                                }
                                grid.push(row);
                            }
                            numerical += sum_rate(&grid, filters, &cfg)?;
                        }
                        Ok((theoretical, numerical / mc_draws as f64))
                    },
                )
            })
            .collect();
        let pairs: Vec<(f64, f64)> = per_trial.iter().filter_map(|t| t[0]).collect();
        if pairs.is_empty() {
            return Err(Error::NumericFailure(format!(
                "all approximation trials failed at {snr_db} dB"
            )));
        }
        let n = pairs.len() as f64;
        let theoretical = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let numerical = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let pct_error = (theoretical - numerical).abs() / numerical * 100.0;
        for (stat, value) in [
            (statistic::APPROX_CAPACITY, theoretical),
            (statistic::NUMERICAL_CAPACITY, numerical),
            (statistic::PCT_ERROR, pct_error),
        ] {
            result.rows.push(StatRow {
                scenario: scenario.label.clone(),
                algorithm: SolverKind::Em.name().to_string(),
                snr_db,
                statistic: stat.to_string(),
                value,
                trials: pairs.len(),
            });
        }
    }
    Ok(result)
}

/// Convergence traces: leakage fraction per iteration, averaged over
/// trials, at the single SNR point given by the first grid entry.
pub fn run_convergence(scenario: &Scenario, kinds: &[SolverKind]) -> Result<ExperimentResult> {
    let snr_db = *scenario
        .snr_grid_db
        .first()
        .ok_or_else(|| Error::InvalidArgument("convergence needs one SNR point".into()))?;
    let cfg = scenario.config_at(snr_db);
    let trials: Vec<(usize, usize)> = (0..scenario.channels_per_point)
        .flat_map(|ci| (0..scenario.errors_per_channel).map(move |ei| (ci, ei)))
        .collect();
    let mut result = ExperimentResult::default();
    for &kind in kinds {
        let traces: Vec<Option<Vec<f64>>> = trials
            .par_iter()
            .map(|&(ci, ei)| {
                let channels = match trial_channels(scenario, &cfg, 0, ci, ei) {
                    Ok(c) => c,
                    Err(err) => {
                        log::warn!("trial (channel {ci}, error {ei}) skipped: {err}");
                        return None;
                    }
                };
                match alternate_solve(&cfg, &channels, kind, scenario.iterations, &filter_stream(scenario, 0, ci))
                {
                    Ok((_, trace)) => {
                        Some(trace.records.iter().map(|r| r.leakage_fraction).collect())
                    }
                    Err(err) => {
                        log::warn!("{kind} trial (channel {ci}, error {ei}) excluded: {err}");
                        None
                    }
                }
            })
            .collect();
        let used: Vec<&Vec<f64>> = traces.iter().flatten().collect();
        if used.is_empty() {
            return Err(Error::NumericFailure(format!("all convergence trials failed for {kind}")));
        }
        for it in 0..=scenario.iterations {
            let avg = used.iter().map(|t| t[it]).sum::<f64>() / used.len() as f64;
            result.traces.push(TraceRow {
                scenario: scenario.label.clone(),
                algorithm: kind.name().to_string(),
                iteration: it,
                leakage_fraction: avg,
            });
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scenario(sigma2: f64, grid: Vec<f64>, seed: u64) -> Scenario {
        let mut config = NetworkConfig::symmetric(4, 3, 3, 1, 1.0, 1.0, sigma2).unwrap();
        config.sigma2 = sigma2;
        let mut s = Scenario::new("(3x3,1)^4", config, grid, seed);
        s.channels_per_point = 3;
        s.errors_per_channel = 3;
        s.iterations = 10;
        s
    }

    #[test]
    fn presets_cover_paper_scenarios() {
        for name in Scenario::PRESET_NAMES {
            let s = Scenario::preset(name, 1).unwrap();
            assert_eq!(s.channels_per_point, 20);
            assert_eq!(s.errors_per_channel, 20);
            assert_eq!(s.iterations, 100);
            assert!((s.config.n0 - 1.0).abs() < 1e-15);
        }
        assert!(Scenario::preset("5x5", 1).is_err());
        let s = Scenario::preset("6x8_4_2", 1).unwrap();
        assert_eq!((s.config.m, s.config.n, s.config.d[0], s.config.k), (6, 8, 4, 2));
    }

    #[test]
    fn snr_mapping_is_decibel() {
        let s = Scenario::preset("3x3_1_4", 1).unwrap();
        assert!((s.config_at(0.0).p - 1.0).abs() < 1e-12);
        assert!((s.config_at(10.0).p - 10.0).abs() < 1e-12);
        assert!((s.config_at(24.0).p - 251.188_643_150_958).abs() < 1e-9);
    }

    #[test]
    fn sweep_rows_are_deterministic() {
        let s = small_scenario(0.1, vec![0.0, 8.0], 42);
        let kinds = [SolverKind::Em, SolverKind::MaxSinr];
        let a = run_sum_rate_sweep(&s, &kinds).unwrap();
        let b = run_sum_rate_sweep(&s, &kinds).unwrap();
        assert_eq!(a.stats_csv_string().unwrap(), b.stats_csv_string().unwrap());
        assert_eq!(a.rows.len(), 4);
        assert!(a.rows.iter().all(|r| r.trials == 9));
    }

    #[test]
    fn sweep_em_equals_max_sinr_without_error() {
        let s = small_scenario(0.0, vec![4.0], 7);
        let res = run_sum_rate_sweep(&s, &[SolverKind::Em, SolverKind::MaxSinr]).unwrap();
        let em = res.rows.iter().find(|r| r.algorithm == "EM").unwrap();
        let ms = res.rows.iter().find(|r| r.algorithm == "MaxSINR").unwrap();
        assert!(
            (em.value - ms.value).abs() < 1e-6,
            "EM {} vs MaxSINR {}",
            em.value,
            ms.value
        );
    }

    #[test]
    fn variance_zero_without_error() {
        let s = small_scenario(0.0, vec![8.0], 9);
        let res = run_variance_table(&s, &[SolverKind::Em]).unwrap();
        assert!(res.rows[0].value.abs() < 1e-18);
    }

    #[test]
    fn variance_positive_with_error() {
        let s = small_scenario(0.1, vec![8.0], 9);
        let res = run_variance_table(&s, &[SolverKind::Em]).unwrap();
        assert!(res.rows[0].value > 0.0);
    }

    #[test]
    fn approx_accuracy_limit_small_sigma() {
        let mut s = small_scenario(0.001, vec![0.0], 11);
        s.iterations = 20;
        let res = run_approx_accuracy(&s).unwrap();
        let pct = res
            .rows
            .iter()
            .find(|r| r.statistic == statistic::PCT_ERROR)
            .unwrap();
        assert!(pct.value < 2.0, "pct_error {} at sigma2 = 0.001", pct.value);
    }

    #[test]
    fn convergence_traces_have_full_length_and_decrease() {
        let mut s = small_scenario(0.1, vec![10.0], 13);
        s.iterations = 30;
        let res = run_convergence(&s, &[SolverKind::Em]).unwrap();
        assert_eq!(res.traces.len(), 31);
        assert_eq!(res.traces[0].iteration, 0);
        let first = res.traces.first().unwrap().leakage_fraction;
        let last = res.traces.last().unwrap().leakage_fraction;
        assert!(last <= first, "leakage should not grow: {first} -> {last}");
    }

    #[test]
    fn trial_values_independent_of_execution_order() {
        let s = small_scenario(0.1, vec![6.0], 21);
        let cfg = s.config_at(6.0);
        let trials: Vec<(usize, usize)> = (0..3).flat_map(|ci| (0..3).map(move |ei| (ci, ei))).collect();
        let eval = |ci: usize, ei: usize| -> f64 {
            let res = run_trial(&s, &cfg, 0, ci, ei, &[SolverKind::Em], |_, channels, filters| {
                sum_rate(channels.estimated_channels(), filters, &cfg)
            });
            res[0].unwrap()
        };
        let forward: Vec<f64> = trials.iter().map(|&(ci, ei)| eval(ci, ei)).collect();
        let mut reversed: Vec<f64> = trials.iter().rev().map(|&(ci, ei)| eval(ci, ei)).collect();
        reversed.reverse();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn csv_schema_and_digits() {
        let mut res = ExperimentResult::default();
        res.rows.push(StatRow {
            scenario: "(3x3,1)^4".into(),
            algorithm: "EM".into(),
            snr_db: 8.0,
            statistic: statistic::AVG_SUM_RATE.into(),
            value: 12.345_678_987_6,
            trials: 400,
        });
        let text = res.stats_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "scenario,algorithm,snr_db,statistic,value,trials");
        let row = lines.next().unwrap();
        // The label contains a comma, so it must be quoted.
        assert!(row.starts_with("\"(3x3,1)^4\",EM,"));
        assert!(row.contains("1.23456790e1"));

        res.traces.push(TraceRow {
            scenario: "(3x3,1)^4".into(),
            algorithm: "VM".into(),
            iteration: 3,
            leakage_fraction: 0.25,
        });
        let text = res.traces_csv_string().unwrap();
        assert!(text.starts_with("scenario,algorithm,iteration,leakage_fraction\n"));
        assert!(text.contains("VM,3,2.50000000e-1"));
    }
}
