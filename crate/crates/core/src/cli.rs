//! Command-line front end for the `sing` binary.
//!
//! Every subcommand writes its outputs plus a `manifest.json` into one run
//! directory. Options may come from a JSON file passed with `--config`;
//! flags given on the command line take precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::benchmark::{self, BenchmarkConfig, Regime, Scheme, SchemeMetrics};
use crate::contrast::ContrastConfig;
use crate::error::{Result, SingError};
use crate::lngca::{derive_seed, fit_lngca, fit_saturated, LngcaFit, MultiStartConfig};
use crate::matching::{joint_rank_test, MatchResult};
use crate::metrics::{mse_joint, pmse, pmse_mixing};
use crate::preprocess::{double_center, whiten, WhitenedData};
use crate::simulate::{setting1_components, setting1_generate_from, setting1_sparse_components, DEFAULT_SUBJECTS, SPARSE_THRESHOLD};
use crate::sing::{default_rho, fit_sing, init_from_separate, separate_as_joint, JointFit, SingConfig};
use crate::{io, linalg, DataMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Written when the joint-rank test finds no shared component.
pub const NO_JOINT_MARKER: &str = "NO_JOINT_STRUCTURE";

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "sing", version, about = "Simultaneous non-Gaussian component analysis")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SING_JOBS")]
    pub jobs: Option<usize>,

    /// JSON file with option values; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose one data matrix into non-Gaussian components.
    Lngca(LngcaArgs),
    /// Joint decomposition of two subject-aligned data matrices.
    Sing(SingArgs),
    /// Generate simulated data with known truth.
    Simulate(SimulateArgs),
    /// Compare estimation schemes on simulated data.
    Benchmark(BenchmarkArgs),
    /// Score an estimate against a truth, or check component orthogonality.
    Evaluate(EvaluateArgs),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct LngcaArgs {
    /// Subjects × features matrix (CSV, or `.bin` with a JSON sidecar).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of components.
    #[arg(short = 'r', long)]
    pub components: Option<usize>,
    /// Use as many components as the data rank.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub saturated: bool,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Skewness weight of the JB contrast.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SingArgs {
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Components for X (data rank when omitted).
    #[arg(long)]
    pub rx: Option<usize>,
    /// Components for Y (data rank when omitted).
    #[arg(long)]
    pub ry: Option<usize>,
    /// Number of joint components, or `test` for the permutation test.
    #[arg(long)]
    pub rj: Option<String>,
    /// Penalty weight, or `auto` for the joint JB sum over ten.
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Permutations for the joint-rank test.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Level of the joint-rank test.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lngca_max_iter: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    /// `1` (dense components) or `1-sparse`.
    #[arg(long)]
    pub setting: Option<String>,
    #[arg(long)]
    pub snr_x: Option<f64>,
    #[arg(long)]
    pub snr_y: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Threshold for the sparse setting.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkArgs {
    /// Comma-separated: sing, sing-avg, jointica, mcca, or single scheme names.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated SNR regimes such as `low/low,high/low`, or `all`.
    #[arg(long)]
    pub regimes: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Use the sparsified components.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub sparse: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// `components` (rows are loadings), `mixing` (columns are scores) or `signal`.
    #[arg(long)]
    pub kind: Option<String>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one run; enough to repeat it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub converged: BTreeMap<String, bool>,
    pub warnings: Vec<String>,
    pub summary: Value,
}

struct Run {
    command: &'static str,
    dir: PathBuf,
    started: Instant,
    config: Value,
    seeds: Vec<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    converged: BTreeMap<String, bool>,
    warnings: Vec<String>,
    summary: Value,
}

impl Run {
    fn new(command: &'static str, dir: &Path, config: Value) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            command,
            dir: dir.to_path_buf(),
            started: Instant::now(),
            config,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            converged: BTreeMap::new(),
            warnings: Vec::new(),
            summary: Value::Null,
        })
    }

    fn input(&mut self, path: &Path) -> Result<DMatrix<f64>> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex(&Sha256::digest(&bytes)) });
        io::read_matrix(path)
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<()> {
        if m.ncols() == 0 || m.nrows() == 0 {
            return Ok(());
        }
        let file = format!("{name}.csv");
        io::write_csv(&self.dir.join(&file), m)?;
        self.outputs.push(file);
        Ok(())
    }

    fn vector(&mut self, name: &str, column: &str, v: &[f64]) -> Result<()> {
        let file = format!("{name}.csv");
        io::write_vector_csv(&self.dir.join(&file), column, v)?;
        self.outputs.push(file);
        Ok(())
    }

    fn converged(&mut self, what: &str, ok: bool) {
        if !ok {
            self.warnings.push(format!("{what} did not converge"));
        }
        self.converged.insert(what.to_string(), ok);
    }

    fn finish(self) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            converged: self.converged,
            warnings: self.warnings,
            summary: self.summary,
        };
        std::fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Overlays flags that were given onto the config file values. A run
/// manifest works as a config file too.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Value>) -> Result<T> {
    let mut base = match config {
        Some(Value::Object(o)) => match o.get("config") {
            Some(Value::Object(inner)) if o.contains_key("command") => inner.clone(),
            _ => o.clone(),
        },
        Some(_) => return Err(SingError::InvalidConfig("config file must hold a JSON object".into())),
        None => serde_json::Map::new(),
    };
    if let Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| SingError::InvalidConfig(format!("config: {e}")))
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| SingError::InvalidConfig(format!("--{flag} is required")))
}

fn contrast_from(alpha: Option<f64>) -> Result<ContrastConfig> {
    match alpha {
        Some(a) => ContrastConfig::new(a).map_err(|e| SingError::InvalidConfig(e.to_string())),
        None => Ok(ContrastConfig::default()),
    }
}

fn load_data(run: &mut Run, path: &Path) -> Result<WhitenedData> {
    let x = DataMatrix::new(run.input(path)?)?;
    whiten(&double_center(&x)?, RANK_TOL)
}

fn write_lngca(run: &mut Run, prefix: &str, fit: &LngcaFit) -> Result<()> {
    run.matrix(&format!("{prefix}U"), fit.u.values())?;
    run.matrix(&format!("{prefix}M"), fit.m.values())?;
    run.matrix(&format!("{prefix}S"), fit.s.values())?;
    run.vector(&format!("{prefix}jb_values"), "jb", &fit.jb_values)
}

pub fn cmd_lngca(a: &LngcaArgs) -> Result<RunManifest> {
    let input = required(&a.input, "input")?;
    let out = required(&a.out, "out")?;
    if a.saturated == a.components.is_some() {
        return Err(SingError::InvalidConfig("give exactly one of --components and --saturated".into()));
    }
    let seed = a.seed.unwrap_or(0);
    let mut cfg = MultiStartConfig::from_seed(seed, a.restarts.unwrap_or(20));
    if let Some(m) = a.max_iter {
        cfg = cfg.with_max_iter(m);
    }
    if let Some(t) = a.tol {
        cfg = cfg.with_tol(t);
    }
    cfg.validate().map_err(|e| SingError::InvalidConfig(e.to_string()))?;
    let contrast = contrast_from(a.alpha)?;
    let mut run = Run::new("lngca", &out, serde_json::to_value(a)?)?;
    run.seeds.push(seed);
    let w = load_data(&mut run, &input)?;
    let fit = if a.saturated {
        fit_saturated(&w, &cfg, &contrast)?
    } else {
        fit_lngca(&w, a.components.expect("checked"), &cfg, &contrast)?
    };
    write_lngca(&mut run, "", &fit)?;
    run.converged("lngca", fit.converged);
    run.summary = json!({ "components": fit.r(), "objective": fit.objective, "best_seed": fit.best_seed });
    run.finish()
}

fn write_matching(run: &mut Run, pairs: &[(usize, usize)], distances: &[f64], p_values: Option<&[f64]>) -> Result<()> {
    let file = "matching.csv";
    let mut w = csv::Writer::from_path(run.dir.join(file))?;
    w.write_record(["pair", "x_component", "y_component", "distance", "p_value"])?;
    for (k, ((i, j), d)) in pairs.iter().zip(distances).enumerate() {
        let p = p_values.map_or(String::new(), |p| p[k].to_string());
        w.write_record([(k + 1).to_string(), (i + 1).to_string(), (j + 1).to_string(), d.to_string(), p])?;
    }
    w.flush()?;
    run.outputs.push(file.into());
    Ok(())
}

fn write_joint(run: &mut Run, fit: &JointFit) -> Result<()> {
    run.matrix("M_J", fit.m_jx.values())?;
    run.matrix("M_Jy", fit.m_jy.values())?;
    run.vector("D_x", "d", &fit.d_x)?;
    run.vector("D_y", "d", &fit.d_y)?;
    run.matrix("S_Jx", fit.s_jx.values())?;
    run.matrix("S_Jy", fit.s_jy.values())?;
    run.matrix("M_Ix", fit.m_ix.values())?;
    run.matrix("M_Iy", fit.m_iy.values())?;
    run.matrix("S_Ix", fit.s_ix.values())?;
    run.matrix("S_Iy", fit.s_iy.values())?;
    run.matrix("U_x", fit.u_x.values())?;
    run.matrix("U_y", fit.u_y.values())?;
    run.vector("objective_trace", "objective", &fit.objective_trace)
}

enum RjChoice {
    Fixed(usize),
    Test,
}

fn parse_rj(s: &str) -> Result<RjChoice> {
    if s == "test" {
        return Ok(RjChoice::Test);
    }
    s.parse()
        .map(RjChoice::Fixed)
        .map_err(|_| SingError::InvalidConfig(format!("--rj must be a count or 'test', got '{s}'")))
}

fn parse_rho(s: &str) -> Result<Option<f64>> {
    if s == "auto" {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(Some(v)),
        _ => Err(SingError::InvalidConfig(format!("--rho must be a non-negative number or 'auto', got '{s}'"))),
    }
}

pub fn cmd_sing(a: &SingArgs) -> Result<RunManifest> {
    let xp = required(&a.x, "x")?;
    let yp = required(&a.y, "y")?;
    let out = required(&a.out, "out")?;
    let rj = parse_rj(a.rj.as_deref().unwrap_or("test"))?;
    let rho_choice = parse_rho(a.rho.as_deref().unwrap_or("auto"))?;
    let seed = a.seed.unwrap_or(0);
    let restarts = a.restarts.unwrap_or(20);
    let mut fit_cfg = MultiStartConfig::from_seed(derive_seed(seed, 1), restarts);
    if let Some(m) = a.lngca_max_iter {
        fit_cfg = fit_cfg.with_max_iter(m);
    }
    fit_cfg.validate().map_err(|e| SingError::InvalidConfig(e.to_string()))?;
    let mut sing_cfg = SingConfig::default();
    if let Some(m) = a.max_iter {
        sing_cfg.max_iter = m;
    }
    if let Some(e) = a.epsilon {
        sing_cfg.epsilon = e;
    }
    sing_cfg.validate().map_err(|e| SingError::InvalidConfig(e.to_string()))?;
    let permutations = a.permutations.unwrap_or(200);
    let level = a.level.unwrap_or(0.01);
    let contrast = contrast_from(a.alpha)?;

    let mut run = Run::new("sing", &out, serde_json::to_value(a)?)?;
    run.seeds.push(seed);
    let wx = load_data(&mut run, &xp)?;
    let wy = load_data(&mut run, &yp)?;
    if wx.n() != wy.n() {
        return Err(SingError::DimensionMismatch(format!("X has {} subjects, Y has {}", wx.n(), wy.n())));
    }
    let cfg_x = fit_cfg.clone();
    let mut cfg_y = fit_cfg.clone();
    cfg_y.seeds = cfg_y.seeds.iter().map(|&s| derive_seed(s, 2)).collect();
    let rx = a.rx.unwrap_or(wx.retained_rank());
    let ry = a.ry.unwrap_or(wy.retained_rank());
    let fit_x = fit_lngca(&wx, rx, &cfg_x, &contrast)?;
    let fit_y = fit_lngca(&wy, ry, &cfg_y, &contrast)?;
    run.converged("lngca_x", fit_x.converged);
    run.converged("lngca_y", fit_y.converged);

    let tested: Option<MatchResult> = match rj {
        RjChoice::Fixed(_) => None,
        RjChoice::Test => {
            // the test runs on saturated fits
            let sat_x = if rx == wx.retained_rank() { fit_x.clone() } else { fit_saturated(&wx, &cfg_x, &contrast)? };
            let sat_y = if ry == wy.retained_rank() { fit_y.clone() } else { fit_saturated(&wy, &cfg_y, &contrast)? };
            Some(joint_rank_test(sat_x.m.values(), sat_y.m.values(), permutations, level, derive_seed(seed, 5))?)
        }
    };
    let r_j = match (&rj, &tested) {
        (RjChoice::Fixed(r), _) => *r,
        (RjChoice::Test, Some(m)) => m.r_j,
        _ => unreachable!(),
    };
    if let Some(m) = &tested {
        write_matching(&mut run, &m.matching.pairs, &m.matching.distances, Some(&m.p_values))?;
        if m.non_monotone {
            run.warnings.push("a matched pair below the selected joint rank was not significant".into());
        }
    }
    if r_j == 0 {
        std::fs::write(run.dir.join(NO_JOINT_MARKER), "no joint structure\n")?;
        run.outputs.push(NO_JOINT_MARKER.into());
        write_lngca(&mut run, "x_", &fit_x)?;
        write_lngca(&mut run, "y_", &fit_y)?;
        run.summary = json!({ "r_j": 0, "no_joint_structure": true });
        println!("no joint structure");
        return run.finish();
    }
    if r_j > rx.min(ry) {
        return Err(SingError::InvalidConfig(format!("r_J = {r_j} exceeds min(r_x, r_y) = {}", rx.min(ry))));
    }
    let init = init_from_separate(&fit_x, &fit_y, r_j)?;
    if tested.is_none() {
        write_matching(&mut run, &init.matching.pairs, &init.matching.distances, None)?;
    }
    let rho = match rho_choice {
        Some(v) => v,
        None => default_rho(&init.jb_joint)?,
    };
    let fit = if rho == 0.0 {
        separate_as_joint(&wx, &wy, &init.u_x, &init.u_y, r_j, &contrast)?
    } else {
        sing_cfg.rho = rho;
        fit_sing(&wx, &wy, &init.u_x, &init.u_y, r_j, &sing_cfg, &contrast)?
    };
    run.converged("sing", fit.converged);
    write_joint(&mut run, &fit)?;
    run.summary = json!({
        "r_x": rx,
        "r_y": ry,
        "r_j": r_j,
        "rho": rho,
        "iterations": fit.iterations,
        "stop_reason": format!("{:?}", fit.stop_reason),
        "matched_distances": fit.matched_distances,
        "final_objective": fit.final_objective(),
    });
    println!("r_J = {r_j}, rho = {rho}");
    run.finish()
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<RunManifest> {
    let out = required(&a.out, "out")?;
    let seed = a.seed.unwrap_or(0);
    let snr_x = a.snr_x.unwrap_or(crate::simulate::SNR_LOW);
    let snr_y = a.snr_y.unwrap_or(crate::simulate::SNR_LOW);
    let subjects = a.subjects.unwrap_or(DEFAULT_SUBJECTS);
    let comp = match a.setting.as_deref().unwrap_or("1") {
        "1" => setting1_components()?,
        "1-sparse" => setting1_sparse_components(a.threshold.unwrap_or(SPARSE_THRESHOLD))?.0,
        other => return Err(SingError::InvalidConfig(format!("unknown setting '{other}'"))),
    };
    let t = setting1_generate_from(&comp, snr_x, snr_y, seed, subjects).map_err(|e| match e {
        SingError::InvalidInput(m) => SingError::InvalidConfig(m),
        other => other,
    })?;
    let mut run = Run::new("simulate", &out, serde_json::to_value(a)?)?;
    run.seeds.push(seed);
    let truth = t.write_dir(&out)?;
    run.outputs.extend(truth.files.iter().cloned());
    run.summary = serde_json::to_value(&truth)?;
    // the truth manifest keeps its own file name
    std::fs::rename(out.join("manifest.json"), out.join("truth.json"))?;
    run.outputs.push("truth.json".into());
    run.finish()
}

fn parse_regimes(s: &str) -> Result<Vec<Regime>> {
    if s == "all" {
        return Ok(Regime::CROSSED.to_vec());
    }
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match Regime::CROSSED.iter().find(|g| g.label() == tok) {
            Some(g) => out.push(*g),
            None => return Err(SingError::InvalidConfig(format!("unknown regime '{tok}'"))),
        }
    }
    if out.is_empty() {
        return Err(SingError::InvalidConfig("empty regime list".into()));
    }
    Ok(out)
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<RunManifest> {
    let out = required(&a.out, "out")?;
    let cfg = BenchmarkConfig {
        reps: a.reps.unwrap_or(20),
        seed: a.seed.unwrap_or(1),
        schemes: Scheme::parse_list(a.methods.as_deref().unwrap_or("all"))?,
        regimes: parse_regimes(a.regimes.as_deref().unwrap_or("all"))?,
        restarts: a.restarts.unwrap_or(20),
        sparse_threshold: a.sparse.then_some(SPARSE_THRESHOLD),
        ..Default::default()
    };
    cfg.validate()?;
    let mut run = Run::new("benchmark", &out, serde_json::to_value(a)?)?;
    run.seeds.push(cfg.seed);
    let results = benchmark::run_benchmark(&cfg)?;
    benchmark::write_long_csv(&run.dir.join("results.csv"), &results)?;
    run.outputs.push("results.csv".into());

    let mut w = csv::Writer::from_path(run.dir.join("summary.csv"))?;
    w.write_record(["method", "regime", "metric", "median"])?;
    for g in &cfg.regimes {
        for s in &cfg.schemes {
            for m in SchemeMetrics::NAMES {
                let med = benchmark::median(&benchmark::collect_metric(&results, *g, *s, m));
                w.write_record([s.name().to_string(), g.label(), m.to_string(), format!("{med:.6}")])?;
            }
        }
    }
    w.flush()?;
    run.outputs.push("summary.csv".into());
    for r in &results {
        for o in &r.outcomes {
            run.converged(&format!("{}/{}/{}", o.scheme.name(), r.regime.label(), r.rep), o.converged);
        }
    }
    run.summary = json!({ "replicates": results.len(), "rows": results.len() * cfg.schemes.len() * 6 });
    run.finish()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: usize,
    pub cols: usize,
    /// `max |SSᵀ/p − I|` for component matrices.
    pub scaled_gram_error: Option<f64>,
    /// `‖UUᵀ − I‖_F` for component matrices rescaled to unit rows.
    pub orthogonality_error: Option<f64>,
    pub root_pmse: Option<f64>,
    pub root_mse: Option<f64>,
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<EvaluationReport> {
    let est = io::read_matrix(&required(&a.estimate, "estimate")?)?;
    let kind = a.kind.clone().unwrap_or_else(|| "components".into());
    let truth = a.truth.as_ref().map(|p| io::read_matrix(p)).transpose()?;
    let mut report = EvaluationReport {
        rows: est.nrows(),
        cols: est.ncols(),
        scaled_gram_error: None,
        orthogonality_error: None,
        root_pmse: None,
        root_mse: None,
    };
    match kind.as_str() {
        "components" => {
            report.scaled_gram_error = Some(linalg::scaled_gram_error(&est));
            let unit = &est / (est.ncols() as f64).sqrt();
            report.orthogonality_error = Some(linalg::orthogonality_error(&unit));
            if let Some(t) = &truth {
                report.root_pmse = Some(pmse(t, &est)?.root());
            }
        }
        "mixing" => {
            let t = truth.as_ref().ok_or_else(|| SingError::InvalidConfig("--truth is required for mixing".into()))?;
            report.root_pmse = Some(pmse_mixing(t, &est)?.root());
        }
        "signal" => {
            let t = truth.as_ref().ok_or_else(|| SingError::InvalidConfig("--truth is required for signal".into()))?;
            report.root_mse = Some(mse_joint(t, &est)?);
        }
        other => return Err(SingError::InvalidConfig(format!("unknown kind '{other}'"))),
    }
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        std::fs::write(out, &text)?;
    }
    println!("{text}");
    Ok(report)
}

pub fn exit_code(e: &SingError) -> i32 {
    match e {
        SingError::InvalidConfig(_) => EXIT_CONFIG,
        SingError::Io(_)
        | SingError::Parse(_)
        | SingError::DimensionMismatch(_)
        | SingError::InvalidInput(_)
        | SingError::NonFinite { .. }
        | SingError::Constraint(_) => EXIT_INPUT,
        SingError::Numerical(_) | SingError::NotConverged { .. } => EXIT_FAILURE,
    }
}

fn read_config(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| SingError::InvalidConfig(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| SingError::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(SingError::InvalidConfig("--jobs must be at least 1".into()));
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let config = cli.config.as_deref().map(read_config).transpose()?;
    let config = config.as_ref();
    match &cli.command {
        Command::Lngca(a) => cmd_lngca(&merge(a, config)?).map(drop),
        Command::Sing(a) => cmd_sing(&merge(a, config)?).map(drop),
        Command::Simulate(a) => cmd_simulate(&merge(a, config)?).map(drop),
        Command::Benchmark(a) => cmd_benchmark(&merge(a, config)?).map(drop),
        Command::Evaluate(a) => cmd_evaluate(&merge(a, config)?).map(drop),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_values() {
        let flags = LngcaArgs { restarts: Some(3), ..Default::default() };
        let config = json!({ "restarts": 9, "seed": 7, "saturated": true });
        let merged = merge(&flags, Some(&config)).unwrap();
        assert_eq!(merged.restarts, Some(3));
        assert_eq!(merged.seed, Some(7));
        assert!(merged.saturated);
    }

    #[test]
    fn manifests_work_as_config_files() {
        let manifest = json!({ "command": "lngca", "config": { "seed": 11, "components": 2 } });
        let merged = merge(&LngcaArgs::default(), Some(&manifest)).unwrap();
        assert_eq!(merged.seed, Some(11));
        assert_eq!(merged.components, Some(2));
    }

    #[test]
    fn bad_config_values_are_configuration_errors() {
        let config = json!({ "restarts": "many" });
        let err = merge(&LngcaArgs::default(), Some(&config)).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONFIG);
        assert!(merge(&LngcaArgs::default(), Some(&json!([1, 2]))).is_err());
    }

    #[test]
    fn rho_and_rank_parsing() {
        assert_eq!(parse_rho("auto").unwrap(), None);
        assert_eq!(parse_rho("0.5").unwrap(), Some(0.5));
        assert!(parse_rho("-1").is_err());
        assert!(matches!(parse_rj("test").unwrap(), RjChoice::Test));
        assert!(matches!(parse_rj("2").unwrap(), RjChoice::Fixed(2)));
        assert!(parse_rj("two").is_err());
    }

    #[test]
    fn regime_parsing() {
        assert_eq!(parse_regimes("all").unwrap().len(), 4);
        assert_eq!(parse_regimes("low/high, high/high").unwrap(), vec![Regime::LOW_HIGH, Regime::HIGH_HIGH]);
        assert!(parse_regimes("mid/low").is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&SingError::InvalidConfig("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&SingError::Parse("x".into())), EXIT_INPUT);
        assert_eq!(exit_code(&SingError::DimensionMismatch("x".into())), EXIT_INPUT);
        assert_eq!(exit_code(&SingError::Numerical("x".into())), EXIT_FAILURE);
    }
}
