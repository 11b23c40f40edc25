//! Declarative experiments: TOML configs, validation with field
//! diagnostics, and a runner that writes CSV/JSON artifacts atomically
//! together with a hashed manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::critical_points::linear_gap_bound;
use crate::critical_points::{
    auto_region, estimate_constants, find_critical_points, newton_kantorovich_solve, stereotype_gap, GapReport,
    GradientField, NewtonOptions, RegionBox, RegionConstants, SearchOptions, MAX_GRID_POINTS,
};
use crate::error::{Error, Result};
use crate::flow::{
    adverse_cover_check, adverse_fraction, boundary_membership_check, classify_zone, curve_distance_bound,
    integrate_flow, lyapunov_minority_check, minority_adverse_ball, FlowOptions, Integrator, StoppingRule,
};
use crate::harness::{
    debias_protocol, generate_dataset, kaiming_normal, overcost_trend, DatasetSpec, DebiasOptions, Optimizer,
    TrainConfig, Trainable,
};
use crate::linalg::distance;
use crate::loss_models::{
    make_double_well, make_quadratic, make_toy, DoubleWellLoss, GroupedDataset, MlpArchitecture, MlpClassifierLoss,
    Part, QuadraticSplitLoss, SplitLoss, ToyScalarLoss,
};
use crate::rng::{self, streams};
use crate::spectral::rho_max;
use crate::timing::{catchup_by_minority_loss, timing_report, toy_tables, TimingOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GapAnalysis,
    ZoneMap,
    FlowTiming,
    ToyTables,
    LinearBounds,
    TrainOvercost,
    DebiasProtocol,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::GapAnalysis,
        ExperimentKind::ZoneMap,
        ExperimentKind::FlowTiming,
        ExperimentKind::ToyTables,
        ExperimentKind::LinearBounds,
        ExperimentKind::TrainOvercost,
        ExperimentKind::DebiasProtocol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GapAnalysis => "gap-analysis",
            ExperimentKind::ZoneMap => "zone-map",
            ExperimentKind::FlowTiming => "flow-timing",
            ExperimentKind::ToyTables => "toy-tables",
            ExperimentKind::LinearBounds => "linear-bounds",
            ExperimentKind::TrainOvercost => "train-overcost",
            ExperimentKind::DebiasProtocol => "debias-protocol",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::GapAnalysis => {
                "region constants, critical points of L1 and L, and the certified stereotype gap"
            }
            ExperimentKind::ZoneMap => "grid map of the majority/minority zones with the adverse-zone cover check",
            ExperimentKind::FlowTiming => {
                "full-loss trajectory with stereotype and catch-up times against their lower bounds"
            }
            ExperimentKind::ToyTables => "stereotype and catch-up step tables of the scalar toy loss",
            ExperimentKind::LinearBounds => {
                "closed-form gap bound, curve-distance bound and minority-adverse ball for least squares"
            }
            ExperimentKind::TrainOvercost => {
                "imbalanced blob classification with catch-up overcost per imbalance ratio"
            }
            ExperimentKind::DebiasProtocol => "stereotype from the majority flow, then debiasing under the full flow",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Toy {
        delta: f64,
        #[serde(default = "one")]
        c: f64,
    },
    DoubleWell {
        delta: f64,
        #[serde(default = "one")]
        c: f64,
    },
    Quadratic {
        #[serde(default)]
        dataset: Option<DatasetSpec>,
        /// CSV with columns `x_0.., y, a`, relative to the config file.
        #[serde(default)]
        csv: Option<PathBuf>,
        #[serde(default)]
        gamma: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Mlp {
        dataset: DatasetSpec,
        hidden: usize,
        #[serde(default)]
        gamma: f64,
    },
}

fn default_grid() -> usize {
    21
}

fn default_ladder() -> usize {
    6
}

fn default_base() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid_per_axis: usize,
    #[serde(default)]
    pub c: Option<f64>,
    /// Number of doublings tried when no box is given.
    #[serde(default = "default_ladder")]
    pub ladder_steps: usize,
    #[serde(default = "default_base")]
    pub ladder_base: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            lower: None,
            upper: None,
            center: None,
            half_width: None,
            grid_per_axis: default_grid(),
            c: None,
            ladder_steps: default_ladder(),
            ladder_base: default_base(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub n_starts: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SearchOptions::default();
        Self {
            n_starts: d.n_starts,
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default)]
    pub method: Integrator,
    pub step: f64,
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub grad_tol: f64,
    #[serde(default)]
    pub theta_init: Option<Vec<f64>>,
}

fn default_stride() -> usize {
    1
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            method: Integrator::Euler,
            step: 1e-2,
            horizon: 50.0,
            stride: 1,
            grad_tol: 1e-10,
            theta_init: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSpec {
    pub eta: f64,
    pub x_init_multiplier: f64,
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub pass_tol: f64,
    pub minority_epsilons: Vec<f64>,
}

impl Default for TimingSpec {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            x_init_multiplier: -2.0,
            deltas: vec![1e-2, 1e-3, 1e-4],
            epsilons: vec![1e-1, 1e-2, 1e-3],
            pass_tol: 0.0,
            minority_epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Imbalance ratios; defaults to the dataset's own.
    #[serde(default)]
    pub imbalances: Option<Vec<f64>>,
    /// Seeds of the independent runs; defaults to the run seed.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            train: TrainConfig::new(
                Optimizer::Sgd {
                    lr: 0.02,
                    batch: 16,
                    seed: 0,
                },
                1000,
            )
            .stop_when_crossed(),
            imbalances: None,
            seeds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebiasSpec {
    pub step: f64,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for DebiasSpec {
    fn default() -> Self {
        let d = DebiasOptions::default();
        Self {
            step: d.step,
            tol: d.tol,
            max_steps: d.max_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub integrator: Option<IntegratorSpec>,
    #[serde(default)]
    pub timing: Option<TimingSpec>,
    #[serde(default)]
    pub training: Option<TrainingSpec>,
    #[serde(default)]
    pub debias: Option<DebiasSpec>,
}

/// One problem found in a config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
    pub line: Option<usize>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config ({} problem(s))", .0.len())]
    Config(Vec<Diagnostic>),
    #[error(transparent)]
    Runtime(#[from] Error),
}

fn diag(field: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        field: field.into(),
        message: message.into(),
        line: None,
    }
}

fn field_in_message(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Parses a TOML document into a config, reporting syntax and schema
/// problems with line numbers.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, Vec<Diagnostic>> {
    toml::from_str::<ExperimentConfig>(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let message = e.message().trim().to_string();
        vec![Diagnostic {
            field: field_in_message(&message).unwrap_or_else(|| "config".into()),
            message,
            line,
        }]
    })
}

/// Reads, parses and validates a config file. Relative dataset paths are
/// resolved against the file's directory.
pub fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ExperimentError::Config(vec![diag("config", format!("cannot read {}: {e}", path.display()))]))?;
    let mut cfg = parse_config(&text).map_err(ExperimentError::Config)?;
    if let Some(ModelSpec::Quadratic { csv: Some(p), .. }) = &mut cfg.model {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    let diags = cfg.validate();
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(ExperimentError::Config(diags))
    }
}

enum Built {
    Toy(ToyScalarLoss),
    DoubleWell(DoubleWellLoss),
    Quadratic(QuadraticSplitLoss),
    Mlp(MlpClassifierLoss),
}

impl Built {
    fn split(&self) -> &dyn SplitLoss {
        match self {
            Built::Toy(m) => m,
            Built::DoubleWell(m) => m,
            Built::Quadratic(m) => m,
            Built::Mlp(m) => m,
        }
    }
}

fn load_dataset(dataset: &Option<DatasetSpec>, csv: &Option<PathBuf>, seed: u64) -> Result<GroupedDataset> {
    match (dataset, csv) {
        (Some(spec), None) => generate_dataset(spec, seed),
        (None, Some(path)) => GroupedDataset::read_csv(path),
        _ => Err(crate::error::invalid(
            "dataset",
            "give exactly one of `dataset` or `csv`",
        )),
    }
}

fn build_model(spec: &ModelSpec, seed: u64) -> Result<Built> {
    Ok(match spec {
        ModelSpec::Toy { delta, c } => Built::Toy(make_toy(*delta, *c)?),
        ModelSpec::DoubleWell { delta, c } => Built::DoubleWell(make_double_well(*delta, *c)?),
        ModelSpec::Quadratic {
            dataset,
            csv,
            gamma,
            center,
        } => {
            let ds = load_dataset(dataset, csv, seed)?;
            let center = center.clone().unwrap_or_else(|| vec![0.0; ds.dim()]);
            Built::Quadratic(make_quadratic(ds, *gamma, center)?)
        }
        ModelSpec::Mlp { dataset, hidden, gamma } => {
            let ds = generate_dataset(dataset, seed)?;
            let classes = ds.targets().iter().fold(0.0f64, |m, &y| m.max(y)) as usize + 1;
            let arch = MlpArchitecture {
                input: ds.dim(),
                hidden: *hidden,
                classes: classes.max(2),
            };
            Built::Mlp(MlpClassifierLoss::new(arch, ds, *gamma)?)
        }
    })
}

fn error_diag(prefix: &str, e: &Error) -> Diagnostic {
    match e {
        Error::InvalidArgument { name, reason } => diag(format!("{prefix}.{name}"), reason.clone()),
        other => diag(prefix, other.to_string()),
    }
}

fn positive(out: &mut Vec<Diagnostic>, field: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        out.push(diag(field, format!("must be a positive number, got {v}")));
    }
}

fn check_precisions(out: &mut Vec<Diagnostic>, field: &str, eps: &[f64]) {
    for &e in eps {
        if !(e > 0.0 && e < 1.0) {
            out.push(diag(
                field,
                format!("relative precision ε must lie in the open interval (0, 1), got {e}"),
            ));
        }
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        out.push(diag(field, "must be strictly decreasing"));
    }
}

impl ExperimentConfig {
    /// Fills every section the experiment uses with its defaults.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut c = self.clone();
        let kind = c.kind;
        use ExperimentKind::*;
        if matches!(kind, GapAnalysis | ZoneMap | DebiasProtocol) || (kind == FlowTiming && c.region.is_some()) {
            c.region.get_or_insert_with(RegionSpec::default);
        }
        if matches!(kind, GapAnalysis | ZoneMap | DebiasProtocol) {
            c.solver.get_or_insert_with(SolverSpec::default);
        }
        if matches!(kind, FlowTiming | LinearBounds) {
            c.integrator.get_or_insert_with(IntegratorSpec::default);
        }
        if matches!(kind, FlowTiming | ToyTables) {
            c.timing.get_or_insert_with(TimingSpec::default);
        }
        if kind == TrainOvercost {
            let t = c.training.get_or_insert_with(TrainingSpec::default);
            t.seeds.get_or_insert_with(|| vec![self.seed]);
            if t.imbalances.is_none() {
                if let Some(ModelSpec::Mlp {
                    dataset: DatasetSpec::GaussianBlobs(b),
                    ..
                }) = &c.model
                {
                    t.imbalances = Some(vec![b.imbalance]);
                }
            }
        }
        if kind == DebiasProtocol {
            c.debias.get_or_insert_with(DebiasSpec::default);
        }
        c
    }

    /// Schema and cross-field checks; nothing is executed beyond building
    /// the model.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let cfg = self.resolved();
        let mut out = Vec::new();
        use ExperimentKind::*;
        let needs_model = !matches!(cfg.kind, ToyTables);
        let built = match (&cfg.model, needs_model) {
            (None, true) => {
                out.push(diag("model", format!("required for {}", cfg.kind)));
                None
            }
            (Some(spec), true) => match build_model(spec, cfg.seed) {
                Ok(b) => Some(b),
                Err(e) => {
                    out.push(error_diag("model", &e));
                    None
                }
            },
            _ => None,
        };
        match (cfg.kind, &cfg.model) {
            (LinearBounds, Some(m)) if !matches!(m, ModelSpec::Quadratic { .. }) => {
                out.push(diag("model.type", "linear-bounds needs a quadratic model"));
            }
            (TrainOvercost, Some(m)) => {
                if !matches!(
                    m,
                    ModelSpec::Mlp {
                        dataset: DatasetSpec::GaussianBlobs(_),
                        ..
                    }
                ) {
                    out.push(diag(
                        "model",
                        "train-overcost needs an mlp model on a gaussian-blobs dataset",
                    ));
                }
            }
            (ZoneMap | GapAnalysis, Some(_)) => {
                if let Some(b) = &built {
                    let d = b.split().dim();
                    if cfg.kind == ZoneMap && d > 2 {
                        out.push(diag(
                            "model",
                            format!("zone maps need a 1-D or 2-D model, got dimension {d}"),
                        ));
                    }
                }
            }
            _ => {}
        }
        if let Some(r) = &cfg.region {
            if r.grid_per_axis < 3 {
                out.push(diag("region.grid_per_axis", "must be at least 3"));
            }
            let dim = built.as_ref().map(|b| b.split().dim());
            if let Some(d) = dim {
                if (r.grid_per_axis as f64).powi(d as i32) > MAX_GRID_POINTS as f64 {
                    out.push(diag(
                        "region.grid_per_axis",
                        format!("grid of {}^{d} points exceeds {MAX_GRID_POINTS}", r.grid_per_axis),
                    ));
                }
            }
            match (&r.lower, &r.upper, &r.center, r.half_width) {
                (Some(lo), Some(hi), None, None) => {
                    if let Err(e) = RegionBox::new(lo.clone(), hi.clone()) {
                        out.push(error_diag("region", &e));
                    }
                    if let Some(d) = dim {
                        if lo.len() != d {
                            out.push(diag("region.lower", format!("needs {d} entries")));
                        }
                    }
                }
                (None, None, c, hw) => {
                    if let Some(h) = hw {
                        positive(&mut out, "region.half_width", h);
                    }
                    if let (Some(c), Some(d)) = (c, dim) {
                        if c.len() != d {
                            out.push(diag("region.center", format!("needs {d} entries")));
                        }
                    }
                }
                _ => out.push(diag("region", "give either lower/upper or center/half_width")),
            }
            if let Some(c) = r.c {
                positive(&mut out, "region.c", c);
            }
            positive(&mut out, "region.ladder_base", r.ladder_base);
        }
        if let Some(s) = &cfg.solver {
            positive(&mut out, "solver.tol", s.tol);
            if s.n_starts == 0 {
                out.push(diag("solver.n_starts", "must be at least 1"));
            }
        }
        if let Some(i) = &cfg.integrator {
            positive(&mut out, "integrator.step", i.step);
            positive(&mut out, "integrator.horizon", i.horizon);
            positive(&mut out, "integrator.grad_tol", i.grad_tol);
            if i.stride == 0 {
                out.push(diag("integrator.stride", "must be at least 1"));
            }
            if let (Some(t), Some(b)) = (&i.theta_init, &built) {
                if t.len() != b.split().dim() {
                    out.push(diag(
                        "integrator.theta_init",
                        format!("needs {} entries", b.split().dim()),
                    ));
                }
            }
        }
        if let Some(t) = &cfg.timing {
            let max_delta = t.deltas.iter().copied().fold(0.0, f64::max);
            if !(t.eta > 0.0 && t.eta < 2.0 / (1.0 + max_delta)) {
                out.push(diag(
                    "timing.eta",
                    format!(
                        "must lie in (0, {}) for stable descent, got {}",
                        2.0 / (1.0 + max_delta),
                        t.eta
                    ),
                ));
            }
            if !(t.x_init_multiplier < 0.0) {
                out.push(diag("timing.x_init_multiplier", "must be negative"));
            }
            for &d in &t.deltas {
                positive(&mut out, "timing.deltas", d);
            }
            check_precisions(&mut out, "timing.epsilons", &t.epsilons);
            check_precisions(&mut out, "timing.minority_epsilons", &t.minority_epsilons);
            if !(t.pass_tol >= 0.0 && t.pass_tol.is_finite()) {
                out.push(diag("timing.pass_tol", "must be finite and nonnegative"));
            }
        }
        if let Some(t) = &cfg.training {
            let lr = t.train.optimizer.lr();
            positive(&mut out, "training.optimizer.lr", lr);
            if let Optimizer::Sgd { batch: 0, .. } = t.train.optimizer {
                out.push(diag("training.optimizer.batch", "must be at least 1"));
            }
            if let (Optimizer::Gd { .. }, Some(Built::Quadratic(q))) = (t.train.optimizer, &built) {
                if let Some(limit) = q.max_stable_lr() {
                    if lr >= limit {
                        out.push(diag(
                            "training.optimizer.lr",
                            format!("{lr} is not below the stability limit 2/λ_max = {limit}"),
                        ));
                    }
                }
            }
            for &k in &t.train.kappas {
                if !(0.0..=1.0).contains(&k) {
                    out.push(diag("training.kappas", format!("must lie in [0, 1], got {k}")));
                }
            }
            for &z in t.imbalances.iter().flatten() {
                if !(z > 0.0 && z <= 1.0) {
                    out.push(diag("training.imbalances", format!("must lie in (0, 1], got {z}")));
                }
            }
            if t.seeds.as_ref().is_some_and(Vec::is_empty) {
                out.push(diag("training.seeds", "must not be empty"));
            }
        }
        if let Some(d) = &cfg.debias {
            positive(&mut out, "debias.step", d.step);
            positive(&mut out, "debias.tol", d.tol);
            if d.max_steps == 0 {
                out.push(diag("debias.max_steps", "must be at least 1"));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub files: Vec<FileEntry>,
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical runs.
    pub generated_at_unix: u64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &target)?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len() as u64,
    })
}

struct Sink<'a> {
    dir: &'a Path,
    files: Vec<FileEntry>,
}

impl Sink<'_> {
    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let e = write_atomic(self.dir, name, &bytes)?;
        self.files.push(e);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.put(name, bytes)
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.put(name, buf)
    }
}

/// Runs a validated config and writes its artifacts into `out_dir`. The
/// manifest is written last, also when the run fails part-way.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> std::result::Result<Manifest, ExperimentError> {
    let diags = config.validate();
    if !diags.is_empty() {
        return Err(ExperimentError::Config(diags));
    }
    let cfg = config.resolved();
    fs::create_dir_all(out_dir).map_err(Error::from)?;
    let mut sink = Sink {
        dir: out_dir,
        files: Vec::new(),
    };
    let outcome = sink
        .json("resolved_config.json", &cfg)
        .and_then(|_| execute(&cfg, &mut sink));
    let manifest = Manifest {
        experiment: cfg.kind,
        seed: cfg.seed,
        status: if outcome.is_ok() {
            RunStatus::Ok
        } else {
            RunStatus::Failed
        },
        error: outcome.as_ref().err().map(ToString::to_string),
        files: sink.files.clone(),
        generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(Error::from)?;
    bytes.push(b'\n');
    write_atomic(out_dir, MANIFEST_FILE, &bytes)?;
    outcome?;
    Ok(manifest)
}

fn search_options(cfg: &ExperimentConfig) -> SearchOptions {
    let s = cfg.solver.clone().unwrap_or_default();
    SearchOptions {
        n_starts: s.n_starts,
        seed: cfg.seed,
        tol: s.tol,
        max_iter: s.max_iter,
        separation: None,
    }
}

fn anchor_of(model: &Built, region: &RegionSpec) -> Vec<f64> {
    if let Some(c) = &region.center {
        return c.clone();
    }
    match model {
        Built::Quadratic(q) => q.minimizer(Part::Majority).unwrap_or_else(|_| vec![0.0; q.dim()]),
        other => vec![0.0; other.split().dim()],
    }
}

/// Region with constants and gap report, explicit or from the ladder.
fn region_and_gap(cfg: &ExperimentConfig, model: &Built) -> Result<(RegionBox, GapReport)> {
    let r = cfg.region.clone().unwrap_or_default();
    let opts = search_options(cfg);
    let explicit = match (&r.lower, &r.upper, r.half_width) {
        (Some(lo), Some(hi), _) => Some(RegionBox::new(lo.clone(), hi.clone())?),
        (_, _, Some(hw)) => Some(RegionBox::around(&anchor_of(model, &r), hw)?),
        _ => None,
    };
    match explicit {
        Some(k) => {
            let constants = estimate_constants(model.split(), &k, r.grid_per_axis, r.c)?;
            let report = stereotype_gap(model.split(), &k, &constants, &opts)?;
            Ok((k, report))
        }
        None => {
            let a = auto_region(
                model.split(),
                &anchor_of(model, &r),
                r.ladder_base,
                r.ladder_steps,
                r.grid_per_axis,
                &opts,
            )?;
            Ok((a.region, a.report))
        }
    }
}

#[derive(Serialize)]
struct GapOutput<'a> {
    region: &'a RegionBox,
    report: &'a GapReport,
}

#[derive(Serialize)]
struct ZoneSummary {
    region: RegionBox,
    adverse_fraction: f64,
    constants: RegionConstants,
    cover: Option<crate::flow::CoverReport>,
    boundary: crate::flow::BoundaryReport,
}

#[derive(Serialize)]
struct FlowTimingOutput {
    theta_init: Vec<f64>,
    representative: Vec<f64>,
    stereotype: Vec<f64>,
    timing: crate::timing::TimingReport,
    lyapunov: crate::flow::LyapunovReport,
    minority_catchup: Option<crate::timing::MinorityCatchup>,
}

#[derive(Serialize)]
struct LinearBoundsOutput {
    gap: crate::critical_points::LinearGapBound,
    curve_distance: crate::flow::CurveDistanceReport,
    minority_ball: Option<crate::flow::MinorityAdverseBall>,
    minority_ball_error: Option<String>,
}

fn root_of(model: &dyn SplitLoss, part: Part, start: &[f64], seed: u64) -> Result<Vec<f64>> {
    let field = GradientField { model, part };
    let opts = NewtonOptions {
        seed,
        ..NewtonOptions::default()
    };
    Ok(newton_kantorovich_solve(&field, start, 1.0, &opts)?.root)
}

fn default_init(cfg: &ExperimentConfig, model: &Built) -> Vec<f64> {
    if let Some(t) = cfg.integrator.as_ref().and_then(|i| i.theta_init.clone()) {
        return t;
    }
    let mut r = rng::stream(cfg.seed, streams::INIT);
    match model {
        Built::Toy(t) => vec![cfg.timing.as_ref().map_or(-2.0, |s| s.x_init_multiplier) * t.c],
        Built::Mlp(m) => Trainable::init_params(m, &mut r),
        other => kaiming_normal(other.split().dim(), &mut r),
    }
}

fn execute(cfg: &ExperimentConfig, sink: &mut Sink<'_>) -> Result<()> {
    let model = cfg.model.as_ref().map(|m| build_model(m, cfg.seed)).transpose()?;
    let need = || model.as_ref().ok_or_else(|| crate::error::invalid("model", "missing"));
    match cfg.kind {
        ExperimentKind::ToyTables => {
            let t = cfg.timing.clone().unwrap_or_default();
            let tables = toy_tables(t.eta, t.x_init_multiplier, &t.deltas, &t.epsilons)?;
            sink.csv("stereotype_table.csv", |b| tables.write_stereotype_csv(b))?;
            sink.csv("catchup_table.csv", |b| tables.write_catchup_csv(b))?;
            sink.json("toy_tables.json", &tables)?;
        }
        ExperimentKind::GapAnalysis => {
            let m = need()?;
            let (region, report) = region_and_gap(cfg, m)?;
            sink.json(
                "gap_report.json",
                &GapOutput {
                    region: &region,
                    report: &report,
                },
            )?;
        }
        ExperimentKind::ZoneMap => {
            let m = need()?;
            let (region, report) = region_and_gap(cfg, m)?;
            let grid = cfg.region.as_ref().map_or(default_grid(), |r| r.grid_per_axis);
            let pts = region.grid(grid)?;
            sink.csv("zone_map.csv", |b| {
                let mut w = csv::Writer::from_writer(b);
                let mut header: Vec<String> = (0..region.dim()).map(|i| format!("theta_{i}")).collect();
                header.extend(["inner_majority", "inner_minority", "zone_maj", "zone_min"].map(String::from));
                w.write_record(&header)?;
                for p in &pts {
                    let z = classify_zone(m.split(), p);
                    let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                    row.push(z.inner_majority.to_string());
                    row.push(z.inner_minority.to_string());
                    row.push(z.majority.as_str().into());
                    row.push(z.minority.as_str().into());
                    w.write_record(&row)?;
                }
                w.flush()?;
                Ok(())
            })?;
            let crit1: Vec<Vec<f64>> = report
                .pairs
                .iter()
                .map(|p| p.stereotypical.location.clone())
                .chain(report.unpaired_stereotypical.iter().map(|p| p.location.clone()))
                .collect();
            let crit: Vec<Vec<f64>> = report
                .pairs
                .iter()
                .map(|p| p.representative.location.clone())
                .chain(report.unpaired_representative.iter().map(|p| p.location.clone()))
                .collect();
            let cover = if report.certified {
                Some(adverse_cover_check(
                    m.split(),
                    &region,
                    &report.constants,
                    &crit1,
                    grid,
                )?)
            } else {
                None
            };
            let all: Vec<&Vec<f64>> = crit1.iter().chain(&crit).collect();
            let mut sep = f64::INFINITY;
            for (i, a) in all.iter().enumerate() {
                for b in &all[i + 1..] {
                    let d = distance(a, b);
                    if d > 1e-8 {
                        sep = sep.min(d);
                    }
                }
            }
            let probe = if sep.is_finite() {
                0.5 * sep
            } else {
                0.1 * report.constants.cover_radius().max(1e-6)
            };
            let boundary = boundary_membership_check(m.split(), &crit1, &crit, probe, 64, cfg.seed)?;
            sink.json(
                "zone_summary.json",
                &ZoneSummary {
                    adverse_fraction: adverse_fraction(m.split(), &region, grid)?,
                    region,
                    constants: report.constants.clone(),
                    cover,
                    boundary,
                },
            )?;
        }
        ExperimentKind::FlowTiming => {
            let m = need()?;
            let integ = cfg.integrator.clone().unwrap_or_default();
            let t = cfg.timing.clone().unwrap_or_default();
            let init = default_init(cfg, m);
            let fo = FlowOptions::euler(integ.step, integ.horizon)
                .with_integrator(integ.method)
                .with_stride(integ.stride)
                .with_stop(StoppingRule::GradNorm(integ.grad_tol));
            let traj = integrate_flow(m.split(), Part::Total, &init, &fo)?;
            sink.csv("trajectory.csv", |b| traj.write_csv(b))?;
            let rep = root_of(m.split(), Part::Total, traj.last(), cfg.seed)?;
            let stereo = match m {
                Built::Toy(toy) => vec![toy.stereotype()],
                Built::Quadratic(q) => q.minimizer(Part::Majority)?,
                other => root_of(other.split(), Part::Majority, &rep, cfg.seed)?,
            };
            let timing = timing_report(
                m.split(),
                &traj,
                &rep,
                &stereo,
                &TimingOptions {
                    pass_tol: t.pass_tol,
                    epsilons: t.epsilons.clone(),
                    learning_rate: Some(integ.step),
                    seed: cfg.seed,
                    slack: integ.step * integ.stride as f64,
                    ..TimingOptions::default()
                },
            )?;
            let lyapunov = lyapunov_minority_check(&traj);
            let l0 = |p: &[f64]| m.split().value(Part::Minority, p);
            let minority_catchup = if l0(&stereo) > l0(&rep) {
                let fo = FlowOptions::euler(integ.step, integ.horizon).with_integrator(integ.method);
                let from_st = integrate_flow(m.split(), Part::Total, &stereo, &fo)?;
                Some(catchup_by_minority_loss(
                    m.split(),
                    &from_st,
                    &rep,
                    &stereo,
                    &t.minority_epsilons,
                )?)
            } else {
                None
            };
            sink.json(
                "timing_report.json",
                &FlowTimingOutput {
                    theta_init: init,
                    representative: rep,
                    stereotype: stereo,
                    timing,
                    lyapunov,
                    minority_catchup,
                },
            )?;
        }
        ExperimentKind::LinearBounds => {
            let Some(Built::Quadratic(q)) = &model else {
                return Err(crate::error::invalid("model", "linear-bounds needs a quadratic model"));
            };
            let init = default_init(cfg, model.as_ref().expect("checked above"));
            let (ball, ball_err) = match minority_adverse_ball(q, 200, cfg.seed) {
                Ok(b) => (Some(b), None),
                Err(e @ Error::Degenerate(_)) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            sink.json(
                "linear_bounds.json",
                &LinearBoundsOutput {
                    gap: linear_gap_bound(q)?,
                    curve_distance: curve_distance_bound(q, &init, 10_000)?,
                    minority_ball: ball,
                    minority_ball_error: ball_err,
                },
            )?;
        }
        ExperimentKind::TrainOvercost => {
            let Some(ModelSpec::Mlp {
                dataset: DatasetSpec::GaussianBlobs(blobs),
                hidden,
                gamma,
            }) = &cfg.model
            else {
                return Err(crate::error::invalid(
                    "model",
                    "train-overcost needs an mlp on gaussian blobs",
                ));
            };
            let t = cfg.training.clone().unwrap_or_default();
            let imbalances = t.imbalances.clone().unwrap_or_else(|| vec![blobs.imbalance]);
            let seeds = t.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
            let trend = overcost_trend(blobs, *hidden, *gamma, &imbalances, &seeds, &t.train)?;
            for point in &trend {
                for run in &point.runs {
                    if let Some(rec) = &run.record {
                        let name = format!("training_zeta{}_seed{}.csv", point.imbalance, run.seed);
                        sink.csv(&name, |b| rec.write_csv(b))?;
                    }
                }
            }
            sink.json("overcost.json", &trend)?;
        }
        ExperimentKind::DebiasProtocol => {
            let m = need()?;
            let d = cfg.debias.clone().unwrap_or_default();
            let init = default_init(cfg, m);
            let constants = if m.split().dim() <= 3 {
                match region_and_gap(cfg, m) {
                    Ok((_, r)) => Some(r.constants),
                    Err(Error::Degenerate(_)) | Err(Error::EmptySublevelSet { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let report = debias_protocol(
                m.split(),
                &init,
                &DebiasOptions {
                    step: d.step,
                    tol: d.tol,
                    max_steps: d.max_steps,
                },
                constants.as_ref(),
            )?;
            sink.json("debias_report.json", &report)?;
        }
    }
    Ok(())
}

/// `(name, description)` of every experiment kind.
pub fn list_experiments() -> Vec<(&'static str, &'static str)> {
    ExperimentKind::ALL
        .iter()
        .map(|k| (k.name(), k.description()))
        .collect()
}

/// Critical points of `L1` inside `region`, for callers that map zones
/// without a certified region.
pub fn majority_critical_points(model: &dyn SplitLoss, region: &RegionBox, seed: u64) -> Result<Vec<Vec<f64>>> {
    let opts = SearchOptions {
        seed,
        ..SearchOptions::default()
    };
    Ok(find_critical_points(model, Part::Majority, region, &opts)?
        .into_iter()
        .map(|c| c.location)
        .collect())
}

/// `2/λ_max` of a quadratic model's Hessian.
pub fn quadratic_stability_limit(q: &QuadraticSplitLoss) -> Result<f64> {
    Ok(2.0 / rho_max(&q.hessian_matrix(Part::Total))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY_TABLES: &str = r#"
kind = "toy-tables"
seed = 1
"#;

    #[test]
    fn missing_seed_is_reported() {
        let d = parse_config("kind = \"toy-tables\"\n").unwrap_err();
        assert_eq!(d[0].field, "seed");
    }

    #[test]
    fn unknown_field_is_reported_with_line() {
        let d = parse_config("kind = \"toy-tables\"\nseed = 0\nbogus = 3\n").unwrap_err();
        assert_eq!(d[0].field, "bogus");
        assert_eq!(d[0].line, Some(3));
    }

    #[test]
    fn valid_config_has_no_diagnostics() {
        let cfg = parse_config(TOY_TABLES).unwrap();
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn negative_step_names_the_field() {
        let text = r#"
kind = "flow-timing"
seed = 0
[model]
type = "toy"
delta = 0.01
[integrator]
step = -0.1
horizon = 10.0
grad_tol = 1e-10
"#;
        let d = parse_config(text).unwrap().validate();
        assert!(d.iter().any(|d| d.field == "integrator.step"), "{d:?}");
    }

    #[test]
    fn epsilon_domain_checked() {
        let text = r#"
kind = "toy-tables"
seed = 0
[timing]
eta = 0.01
x_init_multiplier = -2.0
deltas = [0.01]
epsilons = [1.5]
pass_tol = 0.0
minority_epsilons = [0.1]
"#;
        let d = parse_config(text).unwrap().validate();
        assert!(d
            .iter()
            .any(|d| d.field == "timing.epsilons" && d.message.contains("(0, 1)")));
    }

    #[test]
    fn resolved_config_expands_defaults() {
        let cfg = parse_config(TOY_TABLES).unwrap().resolved();
        assert_eq!(cfg.timing, Some(TimingSpec::default()));
    }

    #[test]
    fn list_has_every_kind() {
        assert_eq!(list_experiments().len(), 7);
    }
}
