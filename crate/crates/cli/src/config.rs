//! Line-oriented `key = value` scenario configuration.
//!
//! A document describes one scenario, or several when `[label]` section
//! headers are present. Keys may share a line (`K=4 M=3 N=3 D=1`);
//! `#` starts a comment. Unknown keys are rejected with their line
//! number. Omitted fields fall back to the standard protocol: 20 true
//! channels, 20 error draws, 100 iterations, N0 = 1, SNR grid
//! 0,4,...,24 dB, sigma2 = 0.1.

use std::collections::BTreeMap;

use icsim_core::error::{Error, Result};
use icsim_core::experiment::Scenario;
use icsim_core::model::ErrorConvention;
use icsim_core::solver::SolverKind;
use icsim_core::NetworkConfig;

const KNOWN_KEYS: &[&str] = &[
    "label",
    "k",
    "m",
    "n",
    "d",
    "n0",
    "sigma2",
    "snr",
    "channels",
    "errors",
    "iters",
    "seed",
    "convention",
    "algorithms",
    "out",
    "workers",
];

/// One raw assignment with its source line (1-based).
#[derive(Debug, Clone)]
struct Assignment {
    line: usize,
    value: String,
}

#[derive(Debug, Default, Clone)]
struct RawSection {
    label: Option<String>,
    keys: BTreeMap<String, Assignment>,
}

/// Extra settings a config file may carry beyond the scenario itself.
#[derive(Debug, Clone, Default)]
pub struct FileSettings {
    pub algorithms: Option<Vec<SolverKind>>,
    pub out: Option<String>,
    pub workers: Option<usize>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<RawSection>> {
    let mut sections: Vec<RawSection> = Vec::new();
    let mut current = RawSection::default();
    let mut any_content = false;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(parse_err(line_no, "unterminated section header"));
            }
            if any_content {
                sections.push(current);
            }
            current = RawSection {
                label: Some(line[1..line.len() - 1].trim().to_string()),
                keys: BTreeMap::new(),
            };
            any_content = true;
            continue;
        }
        // Collapse whitespace around '=' so "k = v" and "k=v" agree,
        // then split the remaining whitespace-separated pairs.
        let mut normalized = String::with_capacity(line.len());
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            if c.is_whitespace() {
                while chars.peek().is_some_and(|n| n.is_whitespace()) {
                    chars.next();
                }
                if chars.peek() == Some(&'=') {
                    continue;
                }
                normalized.push(' ');
            } else if c == '=' {
                normalized.push('=');
                while chars.peek().is_some_and(|n| n.is_whitespace()) {
                    chars.next();
                }
            } else {
                normalized.push(c);
            }
        }
        for token in normalized.split_whitespace() {
            let Some((key, value)) = token.split_once('=') else {
                return Err(parse_err(line_no, format!("expected key=value, found '{token}'")));
            };
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() || value.is_empty() {
                return Err(parse_err(line_no, format!("malformed assignment '{token}'")));
            }
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(parse_err(line_no, format!("unknown key '{key}'")));
            }
            current.keys.insert(
                key,
                Assignment {
                    line: line_no,
                    value: value.to_string(),
                },
            );
            any_content = true;
        }
    }
    if any_content {
        sections.push(current);
    }
    if sections.is_empty() {
        return Err(parse_err(0, "empty configuration"));
    }
    Ok(sections)
}

fn get_parsed<T: std::str::FromStr>(section: &RawSection, key: &str) -> Result<Option<(usize, T)>> {
    match section.keys.get(key) {
        None => Ok(None),
        Some(a) => a
            .value
            .parse::<T>()
            .map(|v| Some((a.line, v)))
            .map_err(|_| parse_err(a.line, format!("invalid value '{}' for key '{key}'", a.value))),
    }
}

fn get_list_f64(section: &RawSection, key: &str) -> Result<Option<(usize, Vec<f64>)>> {
    match section.keys.get(key) {
        None => Ok(None),
        Some(a) => {
            let mut vals = Vec::new();
            for part in a.value.split(',') {
                vals.push(part.trim().parse::<f64>().map_err(|_| {
                    parse_err(a.line, format!("invalid number '{part}' in list for '{key}'"))
                })?);
            }
            Ok(Some((a.line, vals)))
        }
    }
}

fn build_scenario(section: &RawSection) -> Result<Scenario> {
    let require = |key: &str| -> Result<(usize, usize)> {
        get_parsed::<usize>(section, key)?
            .ok_or_else(|| parse_err(0, format!("missing required key '{key}'")))
    };
    let (_, k) = require("k")?;
    let (m_line, m) = require("m")?;
    let (n_line, n) = require("n")?;

    let d_assignment = section
        .keys
        .get("d")
        .ok_or_else(|| parse_err(0, "missing required key 'd'"))?;
    let d_line = d_assignment.line;
    let mut d_list = Vec::new();
    for part in d_assignment.value.split(',') {
        d_list.push(part.trim().parse::<usize>().map_err(|_| {
            parse_err(d_line, format!("invalid stream count '{part}' for key 'd'"))
        })?);
    }
    let d = if d_list.len() == 1 {
        vec![d_list[0]; k]
    } else {
        d_list
    };

    let n0 = get_parsed::<f64>(section, "n0")?.map_or(1.0, |(_, v)| v);
    let sigma2 = get_parsed::<f64>(section, "sigma2")?.map_or(0.1, |(_, v)| v);

    let config = NetworkConfig {
        k,
        m,
        n,
        d,
        p: 1.0,
        n0,
        sigma2,
    };
    config.validate().map_err(|e| {
        let line = match &e {
            Error::InvalidArgument(msg) if msg.contains("D^") => d_line,
            Error::InvalidArgument(msg) if msg.contains("M and N") => m_line.max(n_line),
            _ => d_line,
        };
        parse_err(line, format!("constraint violation: {e}"))
    })?;

    let snr = get_list_f64(section, "snr")?
        .map(|(_, v)| v)
        .unwrap_or_else(|| (0..=6).map(|i| 4.0 * i as f64).collect());
    let label = match (&section.label, section.keys.get("label")) {
        (_, Some(a)) => a.value.clone(),
        (Some(l), None) if !l.is_empty() => l.clone(),
        _ => {
            let uniform = section.keys.get("d").map(|a| a.value.clone()).unwrap_or_default();
            format!("({m}x{n},{uniform})^{k}")
        }
    };

    let mut scenario = Scenario::new(label, config, snr, 0);
    if let Some((_, v)) = get_parsed::<usize>(section, "channels")? {
        scenario.channels_per_point = v;
    }
    if let Some((_, v)) = get_parsed::<usize>(section, "errors")? {
        scenario.errors_per_channel = v;
    }
    if let Some((_, v)) = get_parsed::<usize>(section, "iters")? {
        scenario.iterations = v;
    }
    if let Some((_, v)) = get_parsed::<u64>(section, "seed")? {
        scenario.master_seed = v;
    }
    if let Some(a) = section.keys.get("convention") {
        scenario.convention = match a.value.to_ascii_lowercase().as_str() {
            "true-minus-error" | "true_minus_error" => ErrorConvention::TrueMinusError,
            "estimate-plus-error" | "estimate_plus_error" => ErrorConvention::EstimatePlusError,
            other => {
                return Err(parse_err(
                    a.line,
                    format!("unknown convention '{other}' (true-minus-error or estimate-plus-error)"),
                ))
            }
        };
    }
    Ok(scenario)
}

fn file_settings(section: &RawSection) -> Result<FileSettings> {
    let mut settings = FileSettings::default();
    if let Some(a) = section.keys.get("algorithms") {
        let mut kinds = Vec::new();
        for part in a.value.split(',') {
            let kind = SolverKind::parse(part.trim())
                .ok_or_else(|| parse_err(a.line, format!("unknown algorithm '{part}'")))?;
            kinds.push(kind);
        }
        settings.algorithms = Some(kinds);
    }
    if let Some(a) = section.keys.get("out") {
        settings.out = Some(a.value.clone());
    }
    if let Some((_, v)) = get_parsed::<usize>(section, "workers")? {
        settings.workers = Some(v);
    }
    Ok(settings)
}

/// Parse a configuration document into its first scenario.
#[cfg_attr(not(test), allow(dead_code))]
pub fn parse_config(text: &str) -> Result<Scenario> {
    let sections = tokenize(text)?;
    build_scenario(&sections[0])
}

/// Parse every scenario section plus file-level settings (taken from the
/// first section).
pub fn parse_config_all(text: &str) -> Result<(Vec<Scenario>, FileSettings)> {
    let sections = tokenize(text)?;
    let settings = file_settings(&sections[0])?;
    let scenarios = sections.iter().map(build_scenario).collect::<Result<Vec<_>>>()?;
    Ok((scenarios, settings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let s = parse_config("K=4 M=3 N=3 D=1 sigma2=0.1").unwrap();
        assert_eq!(s.config.k, 4);
        assert_eq!(s.config.m, 3);
        assert_eq!(s.config.d, vec![1; 4]);
        assert_eq!(s.channels_per_point, 20);
        assert_eq!(s.errors_per_channel, 20);
        assert_eq!(s.iterations, 100);
        assert!((s.config.n0 - 1.0).abs() < 1e-15);
        assert_eq!(s.snr_grid_db.len(), 7);
        assert_eq!(s.label, "(3x3,1)^4");
    }

    #[test]
    fn paper_second_scenario() {
        let s = parse_config("D=2 M=4 N=4 K=3").unwrap();
        assert_eq!(s.config.d, vec![2, 2, 2]);
        assert_eq!(s.label, "(4x4,2)^3");
    }

    #[test]
    fn infeasible_stream_count_names_line() {
        let err = parse_config("K=2 M=3 N=3\nD=5").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("D^"), "message: {message}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = parse_config("K=4 M=3 N=3 D=1\nbogus=7").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"));
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn spaced_assignments_and_comments() {
        let text = "# scenario\nK = 4\nM =3\nN= 3\nD = 1  # one stream\nsnr = 0,10,20\nseed = 9";
        let s = parse_config(text).unwrap();
        assert_eq!(s.snr_grid_db, vec![0.0, 10.0, 20.0]);
        assert_eq!(s.master_seed, 9);
    }

    #[test]
    fn sections_give_multiple_scenarios() {
        let text = "[a]\nK=4 M=3 N=3 D=1\n[b]\nK=3 M=4 N=4 D=2 iters=50";
        let (scenarios, _) = parse_config_all(text).unwrap();
        assert_eq!(scenarios.len(), 2);
        assert_eq!(scenarios[0].label, "a");
        assert_eq!(scenarios[1].label, "b");
        assert_eq!(scenarios[1].iterations, 50);
        // parse_config returns the first
        assert_eq!(parse_config(text).unwrap().label, "a");
    }

    #[test]
    fn per_user_stream_lists() {
        let s = parse_config("K=3 M=4 N=4 D=2,1,2").unwrap();
        assert_eq!(s.config.d, vec![2, 1, 2]);
    }

    #[test]
    fn file_level_settings() {
        let (scenarios, settings) =
            parse_config_all("K=4 M=3 N=3 D=1 algorithms=EM,MaxSINR workers=2 out=runs").unwrap();
        assert_eq!(scenarios.len(), 1);
        assert_eq!(
            settings.algorithms,
            Some(vec![SolverKind::Em, SolverKind::MaxSinr])
        );
        assert_eq!(settings.workers, Some(2));
        assert_eq!(settings.out.as_deref(), Some("runs"));
    }
}
