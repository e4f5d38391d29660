//! Declarative experiment configs and the solve / check / run pipelines.
//!
//! Configs are JSON. Unknown keys are rejected everywhere. Graph edges are
//! one-based `[from, to, weight]` triples.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, build_constants_unchecked, check_acr_condition, check_aic, check_min_ratio, check_pic,
    AnalysisError, ConditionReport, Mu2Variant, TheoremConstants,
};
use crate::dynamics::{self, DynamicsError, SimConfig, Trajectory};
use crate::game::{GameError, GameModel, NashSolution, SeekSign};
use crate::graph::{
    coupling_matrices_for_dims, solve_diagonal_certificate, solve_lyapunov_certificate, DirectedGraph, Edge,
    GraphError, LyapunovCertificate,
};
use crate::schedule::{AcrMode, AcrReport, IntervalStats, QuasiPeriodicStats, Schedule, ScheduleError};

/// Errors carry the process exit code of the command line tool.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("math precondition failed: {0}")]
    Math(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Io { .. } => 2,
            ExperimentError::Math(_) => 3,
            ExperimentError::Numeric(_) => 4,
        }
    }
}

impl From<GraphError> for ExperimentError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::NotHurwitz { .. } | GraphError::NoDiagonalCertificate(_) => Self::Math(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<GameError> for ExperimentError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Invalid(_) => Self::Config(e.to_string()),
            _ => Self::Math(e.to_string()),
        }
    }
}

impl From<ScheduleError> for ExperimentError {
    fn from(e: ScheduleError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<DynamicsError> for ExperimentError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::NonFiniteState { .. } => Self::Numeric(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<AnalysisError> for ExperimentError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::NonPositiveBeta { .. } | AnalysisError::EpsilonTooLarge { .. } => {
                Self::Math(e.to_string())
            }
            AnalysisError::Dynamics(d) => d.into(),
            _ => Self::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub game: GameSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSpec {
    Energy {
        xq: Vec<f64>,
        r1: f64,
        r2: f64,
    },
    Connectivity,
    Affine {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
        b: Vec<f64>,
        dims: Vec<usize>,
        /// `+1` or `-1` per player; defaults to all `+1`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seek_sign: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Periodic {
        #[serde(rename = "T")]
        period: f64,
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
    },
    Intervals {
        windows: Vec<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
        /// Reference window statistics to compare the computed ones against.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference_stats: Option<ReferenceStats>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    Keyword(EpsilonKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInit {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub epsilon: EpsilonSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kbar: Option<Vec<f64>>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Draw any missing `x0` / `y0` uniformly from `[low, high)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_init: Option<RandomInit>,
}

fn default_dt() -> f64 {
    1e-2
}

fn default_true() -> bool {
    true
}

fn default_vartheta() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    #[default]
    General,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_true")]
    pub lyapunov: bool,
    #[serde(default = "default_true")]
    pub conditions: bool,
    #[serde(default = "default_true")]
    pub rate_fit: bool,
    /// Average communication ratio under test.
    #[serde(default = "default_vartheta")]
    pub vartheta: f64,
    #[serde(default = "default_mode")]
    pub mode: AcrMode,
    #[serde(default)]
    pub certificate: CertificateKind,
    #[serde(default)]
    pub mu2_variant: Mu2VariantSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mu2VariantSpec {
    #[default]
    GrowthBound,
    AsPrinted,
}

impl From<Mu2VariantSpec> for Mu2Variant {
    fn from(v: Mu2VariantSpec) -> Self {
        match v {
            Mu2VariantSpec::GrowthBound => Mu2Variant::GrowthBound,
            Mu2VariantSpec::AsPrinted => Mu2Variant::AsPrinted,
        }
    }
}

fn default_mode() -> AcrMode {
    AcrMode::FromZero
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            lyapunov: true,
            conditions: true,
            rate_fit: true,
            vartheta: default_vartheta(),
            mode: default_mode(),
            certificate: CertificateKind::General,
            mu2_variant: Mu2VariantSpec::GrowthBound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// A bundled fixture by file name, e.g. `"energy_pic.json"`.
    pub fn fixture(name: &str) -> Result<Self> {
        let text = crate::fixtures::config_text(name)
            .ok_or_else(|| ExperimentError::Config(format!("unknown fixture {name}")))?;
        Self::from_json(text)
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "experiment".into())
    }

    pub fn analysis_spec(&self) -> AnalysisSpec {
        self.analysis.clone().unwrap_or_default()
    }

    pub fn build_game(&self) -> Result<GameModel> {
        Ok(match &self.game {
            GameSpec::Energy { xq, r1, r2 } => GameModel::energy(xq, *r1, *r2)?,
            GameSpec::Connectivity => GameModel::connectivity(),
            GameSpec::Affine { m, b, dims, seek_sign } => {
                let d = b.len();
                if m.len() != d || m.iter().any(|row| row.len() != d) {
                    return Err(ExperimentError::Config(format!("M must be {d}x{d}")));
                }
                let mat = DMatrix::from_fn(d, d, |r, c| m[r][c]);
                let signs = match seek_sign {
                    None => vec![SeekSign::Ascent; dims.len()],
                    Some(s) => s
                        .iter()
                        .map(|f| {
                            SeekSign::from_factor(*f)
                                .ok_or_else(|| ExperimentError::Config(format!("seek_sign entries must be ±1, got {f}")))
                        })
                        .collect::<Result<_>>()?,
                };
                GameModel::affine(mat, DVector::from_vec(b.clone()), dims.clone(), signs)?
            }
        })
    }

    pub fn build_graph(&self) -> Result<DirectedGraph> {
        let spec = self
            .graph
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("config has no graph".into()))?;
        let mut edges = Vec::with_capacity(spec.edges.len());
        for &(from, to, weight) in &spec.edges {
            if from == 0 || to == 0 {
                return Err(ExperimentError::Config("graph indices are one-based".into()));
            }
            edges.push(Edge::new(from - 1, to - 1, weight));
        }
        Ok(DirectedGraph::from_edges(spec.n, &edges)?)
    }

    pub fn build_schedule(&self) -> Result<Schedule> {
        let spec = self
            .schedule
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("config has no schedule".into()))?;
        let t_end = self.sim.as_ref().map(|s| s.t_end);
        Ok(match spec {
            ScheduleSpec::Periodic { period, theta, horizon } => {
                let h = horizon
                    .or(t_end)
                    .ok_or_else(|| ExperimentError::Config("periodic schedule needs a horizon or sim.t_end".into()))?;
                Schedule::periodic(*period, *theta, h)?
            }
            ScheduleSpec::Intervals { windows, horizon, .. } => {
                let last = windows.last().map(|w| w.1);
                let h = horizon
                    .or(t_end)
                    .or(last)
                    .ok_or_else(|| ExperimentError::Config("empty interval list needs a horizon".into()))?;
                Schedule::from_intervals(windows, h)?
            }
        })
    }
}

// ---------------------------------------------------------------------------
// solve-ne

pub fn solve_ne(cfg: &ExperimentConfig) -> Result<NashSolution> {
    let game = cfg.build_game()?;
    let x0 = vec![0.0; game.total_dim()];
    Ok(game.solve_nash(&x0, 1e-10, 200)?)
}

// ---------------------------------------------------------------------------
// check-schedule

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatDiscrepancy {
    pub stat: &'static str,
    pub computed: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub horizon: f64,
    pub window_count: usize,
    pub total_comm_width: f64,
    pub average_ratio: f64,
    pub max_silent_ratio: Option<f64>,
    pub acr: AcrReport,
    pub interval_stats: Option<IntervalStats>,
    pub quasi_periodic_stats: Option<QuasiPeriodicStats>,
    pub discrepancies: Vec<StatDiscrepancy>,
}

pub fn check_schedule(cfg: &ExperimentConfig, theta: Option<f64>, mode: Option<AcrMode>) -> Result<ScheduleReport> {
    let s = cfg.build_schedule()?;
    let spec = cfg.analysis_spec();
    let acr = s.check_acr(theta.unwrap_or(spec.vartheta), mode.unwrap_or(spec.mode))?;
    let interval_stats = s.interval_stats().ok();
    let mut discrepancies = Vec::new();
    if let (Some(ScheduleSpec::Intervals { reference_stats: Some(r), .. }), Some(st)) = (&cfg.schedule, &interval_stats) {
        for (stat, computed, reference) in [
            ("min", st.min_width, r.min),
            ("mean", st.mean_width, r.mean),
            ("max", st.max_width, r.max),
        ] {
            if (computed - reference).abs() > 1e-9 {
                discrepancies.push(StatDiscrepancy { stat, computed, reference });
            }
        }
    }
    Ok(ScheduleReport {
        horizon: s.horizon(),
        window_count: s.windows().len(),
        total_comm_width: s.comm_width(0.0, s.horizon())?,
        average_ratio: s.average_ratio(),
        max_silent_ratio: s.max_silent_ratio(),
        acr,
        interval_stats,
        quasi_periodic_stats: s.quasi_periodic_stats().ok(),
        discrepancies,
    })
}

// ---------------------------------------------------------------------------
// check-conditions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    /// `0.9 ε*` from the computed constants.
    Computed,
    /// Taken from the config.
    Override,
    /// Constants unavailable; fallback value.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsReport {
    pub constants: TheoremConstants,
    pub epsilon_source: EpsilonSource,
    pub reports: Vec<ConditionReport>,
    pub notes: Vec<String>,
}

/// Certificate and `ε`-free constants for a config (evaluated at `ε = eps`).
pub struct Certified {
    pub certificate: LyapunovCertificate,
    pub constants: TheoremConstants,
}

pub fn certify(cfg: &ExperimentConfig, game: &GameModel, graph: &DirectedGraph, kbar: &[f64]) -> Result<Certified> {
    let spec = cfg.analysis_spec();
    let cm = coupling_matrices_for_dims(graph, game.dims());
    let certificate = match spec.certificate {
        CertificateKind::General => {
            solve_lyapunov_certificate(&cm, &DMatrix::identity(cm.stack_len(), cm.stack_len()))?
        }
        CertificateKind::Diagonal => solve_diagonal_certificate(&cm)?,
    };
    let reg = game.regularity_constants();
    // ε is replaced below; any positive value works for the ε-free part.
    let constants = build_constants_unchecked(&reg, kbar, &certificate, 1.0)?
        .with_mu2_variant(spec.mu2_variant.into());
    let eps = 0.9 * constants.eps_star;
    Ok(Certified {
        certificate,
        constants: constants.at_epsilon(eps),
    })
}

fn kbar_for(cfg: &ExperimentConfig, n: usize) -> Result<Vec<f64>> {
    match cfg.sim.as_ref().and_then(|s| s.kbar.clone()) {
        Some(k) if k.len() != n => Err(ExperimentError::Config(format!("kbar has {} entries for {n} players", k.len()))),
        Some(k) => Ok(k),
        None => Ok(vec![1.0; n]),
    }
}

fn evaluate_conditions(
    cfg: &ExperimentConfig,
    constants: &TheoremConstants,
    schedule: Option<&Schedule>,
    notes: &mut Vec<String>,
) -> Result<Vec<ConditionReport>> {
    let spec = cfg.analysis_spec();
    let mut reports = Vec::new();
    if let Some(s) = schedule {
        let theta_tilde = match s.kind() {
            crate::schedule::ScheduleKind::Periodic { ratio, .. } => ratio,
            crate::schedule::ScheduleKind::IntervalList => {
                notes.push("PIC ratio taken as the schedule's average communication ratio".into());
                s.average_ratio()
            }
        };
        if theta_tilde > 0.0 && theta_tilde < 1.0 {
            reports.push(check_pic(constants, theta_tilde)?);
        }
        match s.quasi_periodic_stats() {
            Ok(QuasiPeriodicStats {
                inf_width,
                sup_period: Some(sup),
                ..
            }) if inf_width < sup => reports.push(check_aic(constants, inf_width, sup)?),
            _ => notes.push("AIC check skipped: schedule has no consecutive windows".into()),
        }
        match s.max_silent_ratio() {
            Some(z) if z > 0.0 && z < 1.0 => reports.push(check_min_ratio(constants, z)?),
            _ => notes.push("minimum-ratio check skipped: no silent ratio in (0, 1)".into()),
        }
    } else {
        notes.push("no schedule in config; only the ACR condition is evaluated".into());
    }
    reports.push(check_acr_condition(constants, spec.vartheta)?);
    Ok(reports)
}

/// Resolved `ε` for a config, with its source.
fn resolve_epsilon(cfg: &ExperimentConfig, certified: Option<&Certified>, warnings: &mut Vec<String>) -> (f64, EpsilonSource) {
    let requested = cfg.sim.as_ref().map(|s| s.epsilon);
    match (requested, certified) {
        (Some(EpsilonSpec::Value(v)), _) => (v, EpsilonSource::Override),
        (_, Some(c)) if c.constants.eps_star.is_finite() && c.constants.eps_star > 0.0 => {
            (0.9 * c.constants.eps_star, EpsilonSource::Computed)
        }
        _ => {
            warnings.push("eps* unavailable; using epsilon = 0.1".into());
            (0.1, EpsilonSource::Fallback)
        }
    }
}

pub fn check_conditions(cfg: &ExperimentConfig) -> Result<ConditionsReport> {
    let game = cfg.build_game()?;
    let graph = cfg.build_graph()?;
    let kbar = kbar_for(cfg, game.n())?;
    let certified = certify(cfg, &game, &graph, &kbar)?;
    let schedule = cfg.schedule.as_ref().map(|_| cfg.build_schedule()).transpose()?;
    let mut notes = Vec::new();
    let (eps, mut source) = resolve_epsilon(cfg, Some(&certified), &mut notes);
    let eps_star = certified.constants.eps_star;
    let constants = if eps < eps_star {
        certified.constants.at_epsilon(eps)
    } else {
        notes.push(format!(
            "configured epsilon {eps:.6e} is not below eps* = {eps_star:.6e}; conditions evaluated at 0.9 eps*"
        ));
        source = EpsilonSource::Computed;
        certified.constants.clone()
    };
    let reports = evaluate_conditions(cfg, &constants, schedule.as_ref(), &mut notes)?;
    Ok(ConditionsReport {
        constants,
        epsilon_source: source,
        reports,
        notes,
    })
}

/// ACR margin on an evenly spaced `ϑ` grid in `(0, 1)`, as CSV text.
pub fn acr_sweep_csv(constants: &TheoremConstants, steps: usize) -> Result<String> {
    let mut out = String::from("vartheta,margin,satisfied\n");
    for k in 1..steps {
        let v = k as f64 / steps as f64;
        let r = check_acr_condition(constants, v)?;
        let _ = writeln!(out, "{},{},{}", v, fmt_f64(r.margin), u8::from(r.satisfied));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// run

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    /// Effective config; running it again reproduces the trajectory CSV.
    pub config: ExperimentConfig,
    pub epsilon: f64,
    pub epsilon_source: EpsilonSource,
    pub seed: Option<u64>,
    pub x_star: Vec<f64>,
    pub samples: usize,
    pub initial_e: f64,
    pub final_e: f64,
    pub initial_ex: f64,
    pub final_ex: f64,
    pub final_x: Vec<f64>,
    pub fitted_rate: Option<f64>,
    /// `μ₁ϑ - μ₂(1 - ϑ)` at the run's `ε`, when the constants apply to it.
    pub theoretical_rate_bound: Option<f64>,
    pub conditions: Option<ConditionsReport>,
    pub warnings: Vec<String>,
}

pub struct RunOutput {
    pub trajectory: Trajectory,
    pub lyapunov: Option<Vec<f64>>,
    pub summary: RunSummary,
}

/// Fills in `x0`, `y0` and `ε` so the config is self-contained.
fn effective_sim(
    cfg: &ExperimentConfig,
    game: &GameModel,
    eps: f64,
    seed_override: Option<u64>,
) -> Result<(SimSpec, SimConfig)> {
    let spec = cfg
        .sim
        .clone()
        .ok_or_else(|| ExperimentError::Config("config has no sim section".into()))?;
    let d = game.total_dim();
    let n = game.n();
    let seed = seed_override.or(spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let mut draw = |len: usize, init: &RandomInit| -> Result<Vec<f64>> {
        if !(init.low < init.high) {
            return Err(ExperimentError::Config("random_init needs low < high".into()));
        }
        Ok((0..len).map(|_| rng.random_range(init.low..init.high)).collect())
    };
    let x0 = match (&spec.x0, &spec.random_init) {
        (Some(x), _) => x.clone(),
        (None, Some(init)) => draw(d, init)?,
        (None, None) => return Err(ExperimentError::Config("sim needs x0 or random_init".into())),
    };
    let y0 = match (&spec.y0, &spec.random_init) {
        (Some(y), _) => y.clone(),
        (None, Some(init)) => draw(n * d, init)?,
        (None, None) => vec![0.0; n * d],
    };
    if spec.random_init.is_some() && seed.is_none() {
        return Err(ExperimentError::Config("random_init requires a seed".into()));
    }
    let kbar = kbar_for(cfg, n)?;
    let sim = SimConfig {
        epsilon: eps,
        kbar: kbar.clone(),
        dt: spec.dt,
        t_end: spec.t_end,
        x0: x0.clone(),
        y0: y0.clone(),
    };
    let echoed = SimSpec {
        epsilon: EpsilonSpec::Value(eps),
        kbar: Some(kbar),
        dt: spec.dt,
        t_end: spec.t_end,
        x0: Some(x0),
        y0: Some(y0),
        seed,
        random_init: None,
    };
    Ok((echoed, sim))
}

pub fn run(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<RunOutput> {
    let game = cfg.build_game()?;
    let graph = cfg.build_graph()?;
    let schedule = cfg.build_schedule()?;
    let spec = cfg.analysis_spec();
    let kbar = kbar_for(cfg, game.n())?;
    let mut warnings = Vec::new();

    let certified = match certify(cfg, &game, &graph, &kbar) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(format!("no convergence constants: {e}"));
            None
        }
    };
    let (eps, source) = resolve_epsilon(cfg, certified.as_ref(), &mut warnings);
    let (echoed_sim, sim) = effective_sim(cfg, &game, eps, seed_override)?;

    let x_star = game
        .solve_nash(&vec![0.0; game.total_dim()], 1e-10, 200)?
        .x_star;
    let trajectory = dynamics::simulate(&game, &graph, &schedule, &sim)?;
    warnings.extend(trajectory.warnings.iter().cloned());
    let traces = dynamics::error_traces(&trajectory, &x_star)?;

    let lyapunov = match (&certified, spec.lyapunov) {
        (Some(c), true) => Some(analysis::lyapunov_trace(&trajectory, &x_star, &c.certificate)?),
        _ => None,
    };
    let fitted_rate = match (&lyapunov, spec.rate_fit) {
        (Some(v), true) => analysis::fit_exponential_rate(&trajectory.times, v, (0.0, sim.t_end)).ok(),
        _ => None,
    };
    let mut theoretical_rate_bound = None;
    let conditions = if spec.conditions {
        certified.as_ref().map(|c| -> Result<ConditionsReport> {
            let mut notes = Vec::new();
            let (constants, source) = if eps < c.constants.eps_star {
                let k = c.constants.at_epsilon(eps);
                theoretical_rate_bound = Some(k.mu1 * spec.vartheta - k.mu2 * (1.0 - spec.vartheta));
                (k, source)
            } else {
                notes.push(format!(
                    "run epsilon {eps:.6e} is not below eps* = {:.6e}; conditions evaluated at 0.9 eps*",
                    c.constants.eps_star
                ));
                (c.constants.clone(), EpsilonSource::Computed)
            };
            let reports = evaluate_conditions(cfg, &constants, Some(&schedule), &mut notes)?;
            Ok(ConditionsReport {
                constants,
                epsilon_source: source,
                reports,
                notes,
            })
        })
        .transpose()?
    } else {
        None
    };

    let mut config = cfg.clone();
    config.sim = Some(echoed_sim);
    let last = trajectory.len() - 1;
    let summary = RunSummary {
        name: cfg.display_name(),
        config,
        epsilon: eps,
        epsilon_source: source,
        seed: seed_override.or(cfg.sim.as_ref().and_then(|s| s.seed)),
        x_star,
        samples: trajectory.len(),
        initial_e: traces.e_norms[0],
        final_e: traces.e_norms[last],
        initial_ex: traces.ex_norms[0],
        final_ex: traces.ex_norms[last],
        final_x: trajectory.x_final().to_vec(),
        fitted_rate,
        theoretical_rate_bound,
        conditions,
        warnings,
    };
    Ok(RunOutput {
        trajectory,
        lyapunov,
        summary,
    })
}

/// Seventeen significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,comm,x_1..x_D,y_1..y_{nD}[,V]`; `y_k` is estimate row-major over
/// (player, coordinate).
pub fn trajectory_csv(traj: &Trajectory, lyapunov: Option<&[f64]>) -> String {
    let d = traj.action_dim();
    let s = traj.stack_len();
    let mut out = String::with_capacity(traj.len() * (d + s + 3) * 24);
    out.push_str("t,comm");
    for k in 1..=d {
        let _ = write!(out, ",x_{k}");
    }
    for k in 1..=s {
        let _ = write!(out, ",y_{k}");
    }
    if lyapunov.is_some() {
        out.push_str(",V");
    }
    out.push('\n');
    for k in 0..traj.len() {
        out.push_str(&fmt_f64(traj.times[k]));
        out.push_str(if traj.comm[k] { ",1" } else { ",0" });
        for v in traj.x(k).iter().chain(traj.y(k)) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        if let Some(v) = lyapunov {
            out.push(',');
            out.push_str(&fmt_f64(v[k]));
        }
        out.push('\n');
    }
    out
}

/// Writes `<name>_trajectory.csv` and `<name>_summary.json` into `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_path = dir.join(format!("{}_trajectory.csv", out.summary.name));
    let json_path = dir.join(format!("{}_summary.json", out.summary.name));
    std::fs::write(&csv_path, trajectory_csv(&out.trajectory, out.lyapunov.as_deref())).map_err(io(&csv_path))?;
    let json = serde_json::to_string_pretty(&out.summary).map_err(|e| ExperimentError::Numeric(e.to_string()))?;
    std::fs::write(&json_path, json).map_err(io(&json_path))?;
    Ok((csv_path, json_path))
}
