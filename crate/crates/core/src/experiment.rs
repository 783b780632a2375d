//! Experiment runner: config parsing, parameter sweeps and result files.
//!
//! Config files are line oriented:
//!
//! ```text
//! # comment
//! n_nodes = 200
//! beta = 2.0
//! failure = sentinel@1000     # or a node id: failure = 17@2500
//! replications = 5
//! output_dir = results
//!
//! [energy]
//! p_active = 0.015
//!
//! [sweep]
//! beta = 1.5, 2.0, 3.0
//! protocol = sentinel, peas
//! ```
//!
//! Sweep keys use the same names as top-level keys; energy fields are swept
//! as `energy.<field>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{compare_runs, summarize, SummaryReport};
use crate::metrics::MetricsLog;
use crate::sim::{simulate, FailureInjection, FailureTarget, ProtocolKind, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("run {point}/{replication} failed: {source}")]
    Run { point: String, replication: u32, source: SimError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit code: 1 for configuration errors, 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } => 1,
            ExperimentError::Run { .. } | ExperimentError::Io { .. } => 2,
        }
    }

    fn config(line: usize, message: impl Into<String>) -> Self {
        ExperimentError::Config { line, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    /// Raw values, applied with the same rules as the top-level key.
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub sweep: Vec<SweepAxis>,
    pub protocol: ProtocolKind,
    pub replications: u32,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: SimConfig::default(),
            sweep: Vec::new(),
            protocol: ProtocolKind::Sentinel,
            replications: 1,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Directory name, `base` when nothing is swept.
    pub name: String,
    pub assignments: Vec<(String, String)>,
    pub config: SimConfig,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{key}` expects a number, got `{value}`"))
}

fn parse_failure(value: &str) -> Result<FailureInjection, String> {
    let (target, time) =
        value.split_once('@').ok_or_else(|| format!("failure must look like `<node|sentinel>@<time>`, got `{value}`"))?;
    let target = match target.trim() {
        "sentinel" => FailureTarget::RandomSentinel,
        id => FailureTarget::Node(parse_num("failure", id)?),
    };
    Ok(FailureInjection { target, time: parse_num("failure", time.trim())? })
}

fn set_energy(cfg: &mut SimConfig, field: &str, value: &str) -> Result<(), String> {
    let e = &mut cfg.energy;
    let slot = match field {
        "p_sleep" => &mut e.p_sleep,
        "p_probe_listen" => &mut e.p_probe_listen,
        "p_active" => &mut e.p_active,
        "e_tx" => &mut e.e_tx,
        "e_rx" => &mut e.e_rx,
        "initial_energy" => &mut e.initial_energy,
        _ => return Err(format!("unknown energy key `{field}`")),
    };
    *slot = parse_num(field, value)?;
    Ok(())
}

/// Assigns one `SimConfig` field from its textual value.
pub fn set_field(cfg: &mut SimConfig, key: &str, value: &str) -> Result<(), String> {
    if let Some(field) = key.strip_prefix("energy.") {
        return set_energy(cfg, field, value);
    }
    macro_rules! num {
        ($field:ident) => {
            cfg.$field = parse_num(key, value)?
        };
    }
    match key {
        "field_width" => num!(field_width),
        "field_height" => num!(field_height),
        "n_nodes" => num!(n_nodes),
        "r_s" => num!(r_s),
        "r_c" => num!(r_c),
        "delta" => num!(delta),
        "duration" => num!(duration),
        "seed" => num!(seed),
        "beta" => num!(beta),
        "lambda_init" => num!(lambda_init),
        "t_w" => num!(t_w),
        "k_probes" => num!(k_probes),
        "msg_size" => num!(msg_size),
        "bitrate" => num!(bitrate),
        "loss_probability" => num!(loss_probability),
        "metrics_interval" => num!(metrics_interval),
        "ts_initial_max" => num!(ts_initial_max),
        "reply_jitter" => num!(reply_jitter),
        "wake_jitter" => num!(wake_jitter),
        "t_s_min" => num!(t_s_min),
        "t_s_max_factor" => num!(t_s_max_factor),
        "lambda_min" => num!(lambda_min),
        "lambda_max" => num!(lambda_max),
        "grid_resolution" => num!(grid_resolution),
        "peas_lambda" => cfg.peas_lambda = Some(parse_num(key, value)?),
        "peas_probing_range" => cfg.peas_probing_range = Some(parse_num(key, value)?),
        "protocol" => cfg.protocol = value.parse()?,
        "failure" => cfg.failure_injections.push(parse_failure(value)?),
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Top,
    Energy,
    Sweep,
}

/// Parses and validates an experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ExperimentError> {
    let mut spec = ExperimentSpec::default();
    let mut section = Section::Top;
    // key -> last line that set it, for locating validation errors
    let mut set_at: BTreeMap<String, usize> = BTreeMap::new();
    let mut sweep_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "energy" => Section::Energy,
                "sweep" => Section::Sweep,
                other => return Err(ExperimentError::config(line, format!("unknown section `[{other}]`"))),
            };
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ExperimentError::config(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), unquote(value.trim()));
        if key.is_empty() || value.is_empty() {
            return Err(ExperimentError::config(line, "empty key or value"));
        }
        let err = |m: String| ExperimentError::config(line, m);
        match section {
            Section::Top => match key {
                "replications" => {
                    spec.replications = parse_num(key, value).map_err(err)?;
                    if spec.replications < 1 {
                        return Err(ExperimentError::config(line, "replications must be at least 1"));
                    }
                }
                "output_dir" => spec.output_dir = PathBuf::from(value),
                _ => set_field(&mut spec.base, key, value).map_err(err)?,
            },
            Section::Energy => set_energy(&mut spec.base, key, value).map_err(err)?,
            Section::Sweep => {
                if spec.sweep.iter().any(|a| a.name == key) {
                    return Err(ExperimentError::config(line, format!("`{key}` swept twice")));
                }
                if key == "failure" {
                    return Err(ExperimentError::config(line, "failures cannot be swept"));
                }
                let values: Vec<String> = value.split(',').map(|v| unquote(v.trim()).to_string()).collect();
                if values.iter().any(String::is_empty) {
                    return Err(ExperimentError::config(line, "empty sweep value"));
                }
                // type-check every value up front
                for v in &values {
                    set_field(&mut spec.base.clone(), key, v).map_err(err)?;
                }
                spec.sweep.push(SweepAxis { name: key.to_string(), values });
                sweep_lines.push(line);
            }
        }
        let qualified = if section == Section::Energy { format!("energy.{key}") } else { key.to_string() };
        if section != Section::Sweep {
            set_at.insert(qualified, line);
        }
    }
    spec.protocol = spec.base.protocol;

    let locate = |message: &str| {
        set_at
            .iter()
            .filter(|(k, _)| message.contains(k.trim_start_matches("energy.")))
            .map(|(_, &l)| l)
            .max()
            .unwrap_or(0)
    };
    spec.base.validate().map_err(|e| {
        let message = e.to_string();
        ExperimentError::config(locate(&message), message)
    })?;
    let points = spec.points().map_err(|(axis, m)| ExperimentError::config(sweep_lines[axis], m))?;
    for p in &points {
        p.config.validate().map_err(|e| {
            let axis = spec.sweep.iter().position(|a| e.to_string().contains(a.name.as_str())).unwrap_or(0);
            let line = sweep_lines.get(axis).copied().unwrap_or(0);
            ExperimentError::config(line, format!("sweep point {}: {e}", p.name))
        })?;
    }
    Ok(spec)
}

impl ExperimentSpec {
    /// Cartesian product of the sweep axes, in axis order with the last axis
    /// varying fastest. Errors carry the index of the offending axis.
    pub fn points(&self) -> Result<Vec<SweepPoint>, (usize, String)> {
        let mut base = self.base.clone();
        base.protocol = self.protocol;
        let mut points = vec![SweepPoint { name: String::new(), assignments: Vec::new(), config: base }];
        for (axis_idx, axis) in self.sweep.iter().enumerate() {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for p in &points {
                for v in &axis.values {
                    let mut config = p.config.clone();
                    set_field(&mut config, &axis.name, v).map_err(|m| (axis_idx, m))?;
                    let mut assignments = p.assignments.clone();
                    assignments.push((axis.name.clone(), v.clone()));
                    next.push(SweepPoint { name: String::new(), assignments, config });
                }
            }
            points = next;
        }
        for p in &mut points {
            p.name = if p.assignments.is_empty() {
                "base".to_string()
            } else {
                p.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
            };
        }
        Ok(points)
    }
}

/// Seed for replication `rep`: a SplitMix64 step away from the base seed, so
/// replications are decorrelated while paired protocols share seeds.
pub fn replication_seed(base: u64, rep: u32) -> u64 {
    if rep == 0 {
        return base;
    }
    let mut z = base.wrapping_add(u64::from(rep).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: String,
    pub replication: u32,
    pub summary: SummaryReport,
    pub csv: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunResult>,
    pub sweep_summary: String,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Key identifying a protocol pair: every swept assignment except `protocol`.
fn pair_key(point: &SweepPoint) -> String {
    point.assignments.iter().filter(|(k, _)| k != "protocol").map(|(k, v)| format!("{k}={v};")).collect()
}

const SUMMARY_HEADER: &str = "point,replication,seed,protocol,n_nodes,beta,total_energy,avg_energy_per_node,\
mean_coverage,mean_active_count,false_activation_fraction,energy_ratio_vs_baseline";

fn summary_row(out: &mut String, run: &RunResult) {
    let s = &run.summary;
    let ratio = s.energy_ratio_vs_baseline.map(|r| format!("{r:.6}")).unwrap_or_default();
    let _ = writeln!(
        out,
        "\"{}\",{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        run.point,
        run.replication,
        s.seed,
        s.protocol.as_str(),
        s.n_nodes,
        s.beta,
        s.total_energy,
        s.avg_energy_per_node,
        s.mean_coverage,
        s.mean_active_count,
        s.false_activation_fraction,
        ratio
    );
}

/// Runs every sweep point and replication, then writes
/// `<output_dir>/<point>/<rep>/{metrics.csv,summary.json}` and
/// `<output_dir>/sweep_summary.csv`.
///
/// Sentinel runs whose sweep point and seed match a PEAS run get the
/// relative energy saving filled in. A point whose run fails leaves no
/// files behind.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    let points = spec.points().map_err(|(_, m)| ExperimentError::config(0, m))?;
    let jobs: Vec<(usize, u32)> =
        (0..points.len()).flat_map(|p| (0..spec.replications).map(move |r| (p, r))).collect();

    let outcomes: Vec<Result<(usize, u32, MetricsLog), ExperimentError>> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let mut config = points[p].config.clone();
            config.seed = replication_seed(config.seed, r);
            simulate(config)
                .map(|log| (p, r, log))
                .map_err(|source| ExperimentError::Run { point: points[p].name.clone(), replication: r, source })
        })
        .collect();
    let mut logs = Vec::with_capacity(outcomes.len());
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(l) => logs.push(l),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        // nothing has been written yet; clear stale results of the failed point
        if let ExperimentError::Run { point, .. } = &e {
            let _ = fs::remove_dir_all(spec.output_dir.join(point));
        }
        return Err(e);
    }

    let mut runs: Vec<RunResult> = logs
        .iter()
        .map(|(p, r, log)| RunResult {
            point: points[*p].name.clone(),
            replication: *r,
            summary: summarize(log),
            csv: log.to_csv(),
        })
        .collect();

    let mut peas_by_key: BTreeMap<(String, u32), usize> = BTreeMap::new();
    for (i, (p, r, _)) in logs.iter().enumerate() {
        if points[*p].config.protocol == ProtocolKind::Peas {
            peas_by_key.insert((pair_key(&points[*p]), *r), i);
        }
    }
    for (i, (p, r, _)) in logs.iter().enumerate() {
        if points[*p].config.protocol != ProtocolKind::Sentinel {
            continue;
        }
        if let Some(&j) = peas_by_key.get(&(pair_key(&points[*p]), *r)) {
            let baseline = runs[j].summary.clone();
            runs[i].summary.energy_ratio_vs_baseline = compare_runs(&runs[i].summary, &baseline).ok();
        }
    }

    let mut sweep_summary = String::from(SUMMARY_HEADER);
    sweep_summary.push('\n');
    for run in &runs {
        summary_row(&mut sweep_summary, run);
    }

    fs::create_dir_all(&spec.output_dir).map_err(io_err(&spec.output_dir))?;
    for point in &points {
        let dir = spec.output_dir.join(&point.name);
        let written = runs.iter().filter(|r| r.point == point.name).try_for_each(|run| {
            let rep_dir = dir.join(run.replication.to_string());
            fs::create_dir_all(&rep_dir).map_err(io_err(&rep_dir))?;
            let csv = rep_dir.join("metrics.csv");
            fs::write(&csv, &run.csv).map_err(io_err(&csv))?;
            let json = rep_dir.join("summary.json");
            fs::write(&json, run.summary.to_json()).map_err(io_err(&json))
        });
        if let Err(e) = written {
            let _ = fs::remove_dir_all(&dir);
            return Err(e);
        }
    }
    let path = spec.output_dir.join("sweep_summary.csv");
    fs::write(&path, &sweep_summary).map_err(io_err(&path))?;
    Ok(ExperimentReport { runs, sweep_summary })
}
