//! `run <config.json>`: one job described by a JSON file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use detloop::behaviors::Scenario;
use detloop::closedform::{formula, FormulaResult, FORMULAS};
use detloop::functionals::{build, Functional, Params};
use detloop::io::{results_to_csv, table_to_csv, ResultRow};
use detloop::loss::{LossModel, LossSpec};
use detloop::optimize::{
    boundary_curve, critical_efficiency, maximize, noise_threshold, Crossing, EtaFamily, NoiseFamily, OptimizerConfig,
    Problem, StrategyMode, StrategySpace, ThresholdStatus,
};
use detloop::polytope::{enumerate_vertices, facet_enumeration, facets_to_csv, validate_functional, ValidationReport};
use detloop::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::output::{
    init_file_logger, stem_path, write_file, write_json, Axis, Failure, Marker, PlotManifest, EXIT_NO_CROSSING, EXIT_OK,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Maximize,
    Threshold,
    Curve,
    Noise,
    Formulas,
    Polytope,
}

impl TaskKind {
    fn name(&self) -> &'static str {
        match self {
            TaskKind::Maximize => "maximize",
            TaskKind::Threshold => "threshold",
            TaskKind::Curve => "curve",
            TaskKind::Noise => "noise",
            TaskKind::Formulas => "formulas",
            TaskKind::Polytope => "polytope",
        }
    }
}

/// Either an explicit list or `{start, stop, steps}` with both ends included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, steps: usize },
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, Failure> {
        let v = match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Range { start, stop, steps } => {
                if *steps < 2 {
                    return Err(Failure::validation("grid.steps: need at least 2 points"));
                }
                (0..*steps).map(|k| start + (stop - start) * k as f64 / (*steps - 1) as f64).collect()
            }
        };
        if v.is_empty() {
            return Err(Failure::validation("grid: empty"));
        }
        if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Failure::validation(format!("grid: value {bad} outside [0,1]")));
        }
        Ok(v)
    }
}

/// Which strategy a curve or noise scan evaluates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyChoice {
    Fixed { params: Vec<f64> },
    Reoptimize,
    /// Optimal strategy at the critical efficiency of `family`, then fixed.
    ThresholdOptimal {
        #[serde(default = "symmetric")]
        family: EtaFamily,
    },
    /// Optimal strategy without loss or noise, then fixed.
    CleanOptimal,
}

fn symmetric() -> EtaFamily {
    EtaFamily::Symmetric
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_dir(), stem: None }
    }
}

fn default_bisect_tol() -> f64 {
    1e-3
}

/// Top-level config. Fields that a task does not use are rejected; the
/// `formulas` task also takes its arguments as extra top-level numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<String>,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<StrategySpace>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_bisect_tol")]
    pub bisect_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<EtaFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default)]
    pub hybrid: bool,
    #[serde(default)]
    pub facets: bool,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            Failure::validation(format!("config: {}", e.inner()))
        } else {
            Failure::validation(format!("config field `{path}`: {}", e.inner()))
        }
    })?;
    cfg.check_fields()?;
    Ok(cfg)
}

impl RunConfig {
    fn check_fields(&self) -> Result<(), Failure> {
        use TaskKind::*;
        let t = self.task;
        if t != Formulas {
            if let Some(k) = self.extra.keys().next() {
                return Err(Failure::validation(format!("config field `{k}`: unknown field")));
            }
        }
        let used = |field: &str| -> bool {
            match field {
                "functional" => t != Formulas,
                "params" => t != Formulas,
                "loss" => matches!(t, Maximize | Threshold | Curve),
                "space" | "optimizer" => matches!(t, Maximize | Threshold | Curve | Noise),
                "bisect_tol" => matches!(t, Threshold | Curve | Noise),
                "strategy" => matches!(t, Curve | Noise),
                "family" => t == Threshold,
                "grid" => matches!(t, Curve | Noise),
                "noise" => t == Noise,
                "name" | "args" => t == Formulas,
                "scenario" | "hybrid" | "facets" => t == Polytope,
                _ => true,
            }
        };
        let present = [
            ("functional", self.functional.is_some()),
            ("params", !self.params.is_empty()),
            ("loss", self.loss.is_some()),
            ("space", self.space.is_some()),
            ("optimizer", self.optimizer != OptimizerConfig::default()),
            ("bisect_tol", self.bisect_tol != default_bisect_tol()),
            ("family", self.family.is_some()),
            ("grid", self.grid.is_some()),
            ("strategy", self.strategy.is_some()),
            ("noise", self.noise.is_some()),
            ("name", self.name.is_some()),
            ("args", !self.args.is_empty()),
            ("scenario", self.scenario.is_some()),
            ("hybrid", self.hybrid),
            ("facets", self.facets),
        ];
        for (field, is_set) in present {
            if is_set && !used(field) {
                return Err(Failure::validation(format!("config field `{field}`: not used by task {}", t.name())));
            }
        }
        if !(self.bisect_tol > 0.0 && self.bisect_tol <= 0.1) {
            return Err(Failure::validation(format!("config field `bisect_tol`: {} outside (0, 0.1]", self.bisect_tol)));
        }
        self.optimizer.validate().map_err(|e| Failure::at("config field `optimizer`", e))
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.task.name().to_string())
    }
}

/// Seed override from the environment; the value may be decimal or 0x-hex.
pub fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("DETLOOP_SEED") {
        Err(_) => Ok(None),
        Ok(s) => {
            let t = s.trim();
            let parsed = match t.strip_prefix("0x") {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => t.parse::<u64>(),
            };
            parsed.map(Some).map_err(|e| Failure::validation(format!("DETLOOP_SEED: '{s}': {e}")))
        }
    }
}

#[derive(Serialize)]
struct MirrorRow {
    #[serde(flatten)]
    row: ResultRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_params: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    details: serde_json::Map<String, Value>,
}

#[derive(Serialize)]
struct Mirror<'a> {
    version: &'static str,
    config: &'a RunConfig,
    results: Vec<MirrorRow>,
}

#[derive(Default)]
struct Outcome {
    rows: Vec<MirrorRow>,
    plot: Option<(String, PlotManifest)>,
    files: Vec<(String, String)>,
    json: Option<Value>,
    stdout: Vec<String>,
    code: i32,
    note: Option<String>,
}

pub fn loss_model_name(loss: Option<&LossSpec>) -> &'static str {
    match loss.map(|l| l.model) {
        None => "none",
        Some(LossModel::Absorption) => "absorption",
        Some(LossModel::ExtraOutcome) => "extra_outcome",
        Some(LossModel::Hybrid) => "hybrid",
        Some(LossModel::PerfectAlice) => "perfect_alice",
    }
}

fn loss_etas(loss: Option<&LossSpec>) -> (Option<f64>, Option<f64>) {
    let Some(l) = loss else { return (None, None) };
    match (l.eta.as_deref(), l.eta_y.as_deref()) {
        (Some([e]), _) => (Some(*e), Some(*e)),
        (Some([e1, e2]), _) => (Some(*e1), Some(*e2)),
        (_, Some(ey)) if !ey.is_empty() => (Some(ey[0]), None),
        _ => (None, None),
    }
}

fn noise_name(n: NoiseFamily) -> &'static str {
    match n {
        NoiseFamily::AmplitudeDamping => "amplitude_damping",
        NoiseFamily::Depolarizing => "depolarizing",
    }
}

struct Prepared {
    functional: Functional,
    space: StrategySpace,
    loss: Option<LossSpec>,
    optimizer: OptimizerConfig,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, Failure> {
    let name = cfg
        .functional
        .as_deref()
        .ok_or_else(|| Failure::validation(format!("config field `functional`: required for task {}", cfg.task.name())))?;
    let functional = build(name, &cfg.params).map_err(|e| match e {
        Error::UnknownFunctional(_) => Failure::at("config field `functional`", e),
        _ => Failure::at("config field `params`", e),
    })?;
    if matches!(cfg.task, TaskKind::Threshold | TaskKind::Curve) && cfg.loss.is_none() {
        return Err(Failure::validation(format!("config field `loss`: required for task {}", cfg.task.name())));
    }
    let space = match &cfg.space {
        Some(s) => s.clone(),
        None => StrategySpace::for_functional(&functional, cfg.loss.as_ref()).map_err(|e| Failure::at("config field `space`", e))?,
    };
    space.validate().map_err(|e| Failure::at("config field `space`", e))?;
    Problem::new(&functional, &space, cfg.loss.as_ref()).map_err(|e| Failure::at("config field `loss`", e))?;
    Ok(Prepared { functional, space, loss: cfg.loss.clone(), optimizer: cfg.optimizer.clone() })
}

fn row(task: &str, p: &Prepared, loss_model: &str) -> ResultRow {
    ResultRow {
        task: task.to_string(),
        functional: p.functional.name.clone(),
        loss_model: loss_model.to_string(),
        eta1: None,
        eta2: None,
        value: None,
        classical_bound: p.functional.classical_bound,
        converged: false,
    }
}

fn details(pairs: &[(&str, Value)]) -> serde_json::Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn run_maximize(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p = prepare(cfg)?;
    let r = maximize(&p.functional, &p.space, p.loss.as_ref(), &p.optimizer)?;
    let (eta1, eta2) = loss_etas(p.loss.as_ref());
    let mut out = row("maximize", &p, loss_model_name(p.loss.as_ref()));
    out.eta1 = eta1;
    out.eta2 = eta2;
    out.value = Some(r.value);
    out.converged = r.converged;
    log::info!("{}: value {} after {} evaluations", p.functional.name, r.value, r.evaluations);
    let d = details(&[
        ("margin", r.margin.into()),
        ("violated", (r.margin > p.optimizer.violation_tol).into()),
        ("evaluations", r.evaluations.into()),
        ("best_restart", r.best_restart.into()),
    ]);
    Ok(Outcome {
        stdout: vec![format!("{} = {} (classical bound {})", p.functional.label, r.value, p.functional.classical_bound)],
        rows: vec![MirrorRow { row: out, best_params: Some(r.params), details: d }],
        ..Default::default()
    })
}

fn run_threshold(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p = prepare(cfg)?;
    let family = cfg.family.unwrap_or(EtaFamily::Symmetric);
    let loss = p.loss.clone().expect("checked in prepare");
    let r = critical_efficiency(&p.functional, &p.space, &loss, family, &p.optimizer, cfg.bisect_tol)
        .map_err(|e| Failure::at("", e))?;
    let mut out = row("threshold", &p, loss_model_name(Some(&loss)));
    let d = details(&[
        ("status", serde_json::to_value(r.status).unwrap_or(Value::Null)),
        ("family", serde_json::to_value(family).unwrap_or(Value::Null)),
        ("bracket", serde_json::to_value(r.bracket).unwrap_or(Value::Null)),
        ("evaluations", r.evaluations.into()),
    ]);
    let mut outcome = Outcome::default();
    match r.status {
        ThresholdStatus::Crossing => {
            let (e1, e2) = family.pair(r.eta_star);
            out.eta1 = Some(e1);
            out.eta2 = Some(e2);
            out.value = Some(r.value_at_star);
            out.converged = r.converged;
            outcome.stdout.push(format!("critical efficiency: eta1 = {e1}, eta2 = {e2}"));
        }
        ThresholdStatus::NoViolationBelowOne => {
            outcome.code = EXIT_NO_CROSSING;
            outcome.note = Some(format!("{} is not violated even without loss", p.functional.name));
        }
    }
    outcome.rows.push(MirrorRow { row: out, best_params: Some(r.best_params), details: d });
    Ok(outcome)
}

/// Resolves a strategy choice into a mode, running the auxiliary
/// optimization if needed. `clean` is the problem without loss or noise.
fn resolve_strategy(
    choice: &StrategyChoice,
    p: &Prepared,
    clean: &Problem,
    threshold_loss: Option<&LossSpec>,
    bisect_tol: f64,
) -> Result<StrategyMode, Failure> {
    Ok(match choice {
        StrategyChoice::Fixed { params } => {
            if params.len() != p.space.dim() {
                return Err(Failure::validation(format!(
                    "config field `strategy.params`: {} values, the strategy space has {}",
                    params.len(),
                    p.space.dim()
                )));
            }
            StrategyMode::Fixed { params: params.clone() }
        }
        StrategyChoice::Reoptimize => StrategyMode::Reoptimize,
        StrategyChoice::CleanOptimal => {
            let r = maximize(&clean.functional, &clean.space, clean.loss.as_ref(), &p.optimizer)?;
            log::info!("clean optimum {} used as fixed strategy", r.value);
            StrategyMode::Fixed { params: r.params }
        }
        StrategyChoice::ThresholdOptimal { family } => {
            let loss = threshold_loss
                .ok_or_else(|| Failure::validation("config field `strategy`: threshold_optimal needs a loss model"))?;
            let r = critical_efficiency(&p.functional, &p.space, loss, *family, &p.optimizer, bisect_tol)?;
            if r.status != ThresholdStatus::Crossing {
                return Err(Failure { code: EXIT_NO_CROSSING, message: "strategy: no critical efficiency to fix the strategy at".into() });
            }
            log::info!("strategy fixed at critical efficiency {:?}", family.pair(r.eta_star));
            StrategyMode::Fixed { params: r.best_params }
        }
    })
}

fn run_curve(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p = prepare(cfg)?;
    let loss = p.loss.clone().expect("checked in prepare");
    if loss.eta_y.is_some() || matches!(p.functional.scenario, Scenario::Pam { .. }) {
        return Err(Failure::validation("config field `loss`: curves need two party efficiencies"));
    }
    let grid = cfg.grid.clone().unwrap_or(GridSpec::Range { start: 0.5, stop: 1.0, steps: 51 }).values()?;
    let choice = cfg.strategy.clone().unwrap_or(StrategyChoice::ThresholdOptimal { family: EtaFamily::Symmetric });
    let clean = Problem::new(&p.functional, &p.space, Some(&loss.with_parties(1.0, 1.0)))?;
    let mode = resolve_strategy(&choice, &p, &clean, Some(&loss), cfg.bisect_tol)?;
    let points = boundary_curve(&p.functional, &p.space, &loss, &mode, &grid, &p.optimizer, cfg.bisect_tol)?;
    let params = match &mode {
        StrategyMode::Fixed { params } => Some(params.clone()),
        StrategyMode::Reoptimize => None,
    };
    let model = loss_model_name(Some(&loss));
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for pt in &points {
        let mut r = row("curve", &p, model);
        r.eta1 = Some(pt.eta1);
        let kind = match pt.crossing {
            Crossing::At(e) => {
                r.eta2 = Some(e);
                r.converged = true;
                "crossing"
            }
            Crossing::AlwaysViolated => "always_violated",
            Crossing::NeverViolated => "never_violated",
        };
        table.push(vec![Some(pt.eta1), r.eta2]);
        rows.push(MirrorRow { row: r, best_params: params.clone(), details: details(&[("crossing", kind.into())]) });
    }
    let labels = vec!["boundary".to_string(); table.len()];
    let stem = cfg.stem();
    let manifest = PlotManifest {
        title: format!("{} boundary eta2(eta1), {model} loss", p.functional.label),
        data: format!("{stem}_plot.csv"),
        x: Axis { column: "eta1".into(), label: "eta1".into(), range: (0.0, 1.0) },
        y: Axis { column: "eta2".into(), label: "critical eta2".into(), range: (0.0, 1.0) },
        series: vec!["boundary".into()],
        markers: vec![],
    };
    Ok(Outcome {
        plot: Some((table_to_csv(&["eta1", "eta2"], &table, Some(&labels)), manifest)),
        stdout: vec![format!("{} curve points", points.len())],
        rows,
        ..Default::default()
    })
}

fn run_noise(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p = prepare(cfg)?;
    let family = cfg.noise.ok_or_else(|| Failure::validation("config field `noise`: required for task noise"))?;
    let clean = Problem::new(&p.functional, &p.space, None)?;
    let choice = cfg.strategy.clone().unwrap_or(StrategyChoice::Reoptimize);
    if matches!(choice, StrategyChoice::ThresholdOptimal { .. }) {
        return Err(Failure::validation("config field `strategy`: threshold_optimal applies to loss curves, not noise"));
    }
    let mode = resolve_strategy(&choice, &p, &clean, None, cfg.bisect_tol)?;
    let r = noise_threshold(&p.functional, &p.space, family, &mode, &p.optimizer, cfg.bisect_tol)
        .map_err(|e| Failure::at("", e))?;
    let model = noise_name(family);
    let mut outcome = Outcome::default();
    let mut head = row("noise", &p, model);
    if r.status == ThresholdStatus::Crossing {
        head.eta1 = Some(r.eta_star);
        head.value = Some(r.value_at_star);
        head.converged = r.converged;
        outcome.stdout.push(format!("critical {model} strength: {}", r.eta_star));
    } else {
        outcome.code = EXIT_NO_CROSSING;
        outcome.note = Some(format!("{} is not violated even without noise", p.functional.name));
    }
    outcome.rows.push(MirrorRow {
        row: head,
        best_params: Some(r.best_params.clone()),
        details: details(&[("bracket", serde_json::to_value(r.bracket).unwrap_or(Value::Null))]),
    });
    if let Some(g) = &cfg.grid {
        let mut table = Vec::new();
        for s in g.values()? {
            let space = p.space.with_channel(Some(family.channel(s)))?;
            let prob = clean.with_space(space);
            let (value, converged, params) = match &mode {
                StrategyMode::Fixed { params } => (prob.value(params)?, true, params.clone()),
                StrategyMode::Reoptimize => {
                    let m = detloop::optimize::maximize_problem(&prob, &p.optimizer)?;
                    (m.value, m.converged, m.params)
                }
            };
            let mut r = row("noise_sample", &p, model);
            r.eta1 = Some(s);
            r.value = Some(value);
            r.converged = converged;
            table.push(vec![Some(s), Some(value)]);
            outcome.rows.push(MirrorRow { row: r, best_params: Some(params), details: Default::default() });
        }
        let labels = vec!["max".to_string(); table.len()];
        let stem = cfg.stem();
        let manifest = PlotManifest {
            title: format!("{} under {model} noise", p.functional.label),
            data: format!("{stem}_plot.csv"),
            x: Axis { column: "strength".into(), label: format!("{model} strength"), range: (0.0, 1.0) },
            y: Axis { column: "value".into(), label: p.functional.label.clone(), range: (0.0, 0.0) },
            series: vec!["max".into()],
            markers: vec![Marker { axis: "y".into(), value: p.functional.classical_bound, label: "classical bound".into() }],
        };
        outcome.plot = Some((table_to_csv(&["strength", "value"], &table, Some(&labels)), manifest));
    }
    Ok(outcome)
}

/// Positional arguments for a formula from `args` and extra numeric keys.
pub fn formula_args(name: &str, given: &BTreeMap<String, f64>) -> Result<Vec<f64>, Failure> {
    let spec = FORMULAS
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Failure::validation(format!("config field `name`: unknown formula '{name}'")))?;
    if let Some(k) = given.keys().find(|k| !spec.args.contains(&k.as_str())) {
        return Err(Failure::validation(format!("config field `{k}`: {name} takes ({})", spec.args.join(", "))));
    }
    spec.args
        .iter()
        .map(|a| given.get(*a).copied().ok_or_else(|| Failure::validation(format!("config field `{a}`: missing argument of {name}"))))
        .collect()
}

pub fn format_formula(r: &FormulaResult) -> String {
    let inputs: Vec<String> = r.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{}({}) = {}    [{}]", r.name, inputs.join(", "), r.value, r.description)
}

fn run_formulas(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let name = cfg.name.as_deref().ok_or_else(|| Failure::validation("config field `name`: required for task formulas"))?;
    let mut given = cfg.args.clone();
    for (k, v) in &cfg.extra {
        let x = v.as_f64().ok_or_else(|| Failure::validation(format!("config field `{k}`: expected a number")))?;
        given.insert(k.clone(), x);
    }
    let args = formula_args(name, &given)?;
    let r = formula(name, &args).map_err(|e| Failure::at("config field `args`", e))?;
    Ok(Outcome {
        stdout: vec![format_formula(&r)],
        json: Some(serde_json::to_value(&r).map_err(|e| Failure::runtime(e.to_string()))?),
        ..Default::default()
    })
}

#[derive(Serialize)]
pub struct PolytopeSummary {
    pub scenario: String,
    pub hybrid: bool,
    pub vertices: usize,
    pub raw_strategies: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub facets: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonnegativity_facets: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

/// Vertex count, optional facets (CSV and rendered) and an optional
/// functional check against the vertex set.
pub fn polytope_job(
    scenario: &str,
    hybrid: bool,
    facets: bool,
    functional: Option<&Functional>,
) -> Result<(PolytopeSummary, Option<String>, Vec<String>), Failure> {
    let sc = Scenario::parse_label(scenario).map_err(|e| Failure::at("scenario", e))?;
    let vs = enumerate_vertices(sc, hybrid).map_err(|e| Failure::at("scenario", e))?;
    let mut lines = vec![format!("{}: {} vertices ({} deterministic strategies)", sc.label(), vs.len(), vs.raw_count)];
    let mut summary = PolytopeSummary {
        scenario: sc.label(),
        hybrid,
        vertices: vs.len(),
        raw_strategies: vs.raw_count,
        facets: None,
        nonnegativity_facets: None,
        validation: None,
    };
    let mut csv = None;
    if facets {
        let fs = facet_enumeration(&vs).map_err(|e| Failure::at("scenario", e))?;
        let nonneg = fs.iter().filter(|f| f.nonnegativity).count();
        lines.push(format!("{} facets, {} of them nonnegativity", fs.len(), nonneg));
        lines.extend(fs.iter().filter(|f| !f.nonnegativity).map(|f| f.render(&sc)));
        summary.facets = Some(fs.len());
        summary.nonnegativity_facets = Some(nonneg);
        csv = Some(facets_to_csv(&sc, &fs));
    }
    if let Some(f) = functional {
        let rep = validate_functional(f, &vs).map_err(|e| Failure::at("functional", e))?;
        lines.push(format!(
            "{}: extreme classical value {} vs stated bound {} ({})",
            f.name,
            rep.extreme,
            rep.classical_bound,
            if rep.matches { "matches" } else { "MISMATCH" }
        ));
        summary.validation = Some(rep);
    }
    Ok((summary, csv, lines))
}

fn run_polytope(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let scenario =
        cfg.scenario.as_deref().ok_or_else(|| Failure::validation("config field `scenario`: required for task polytope"))?;
    let functional = match &cfg.functional {
        Some(name) => Some(build(name, &cfg.params).map_err(|e| Failure::at("config field `functional`", e))?),
        None => None,
    };
    let (summary, csv, lines) = polytope_job(scenario, cfg.hybrid, cfg.facets, functional.as_ref())?;
    let mut files = Vec::new();
    if let Some(c) = csv {
        files.push(("_facets.csv".to_string(), c));
    }
    Ok(Outcome {
        stdout: lines,
        json: Some(serde_json::to_value(&summary).map_err(|e| Failure::runtime(e.to_string()))?),
        files,
        ..Default::default()
    })
}

/// Executes a config and writes `<stem>.csv`, `<stem>.json`, `<stem>.log`
/// and, for curves and noise scans, `<stem>_plot.csv` with its manifest.
pub fn run_config(cfg: &RunConfig, config_path: &Path) -> Result<i32, Failure> {
    let dir = cfg.output.dir.clone();
    let stem = cfg.stem();
    init_file_logger(&stem_path(&dir, &stem, ".log"))?;
    let started = Instant::now();
    log::info!(
        "detloop {} ({} {}), config {}, task {}, seed {:#x}",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::OS,
        std::env::consts::ARCH,
        config_path.display(),
        cfg.task.name(),
        cfg.optimizer.seed
    );
    log::info!("worker threads: {}", rayon::current_num_threads());
    let result = match cfg.task {
        TaskKind::Maximize => run_maximize(cfg),
        TaskKind::Threshold => run_threshold(cfg),
        TaskKind::Curve => run_curve(cfg),
        TaskKind::Noise => run_noise(cfg),
        TaskKind::Formulas => run_formulas(cfg),
        TaskKind::Polytope => run_polytope(cfg),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(f) => {
            log::error!("{} (exit {}), wall time {:.3}s", f.message, f.code, started.elapsed().as_secs_f64());
            return Err(f);
        }
    };
    if !outcome.rows.is_empty() {
        let plain: Vec<ResultRow> = outcome.rows.iter().map(|r| r.row.clone()).collect();
        write_file(&stem_path(&dir, &stem, ".csv"), &results_to_csv(&plain)?)?;
        write_json(&stem_path(&dir, &stem, ".json"), &Mirror { version: env!("CARGO_PKG_VERSION"), config: cfg, results: outcome.rows })?;
    } else if let Some(j) = &outcome.json {
        write_json(&stem_path(&dir, &stem, ".json"), j)?;
    }
    if let Some((csv, manifest)) = &outcome.plot {
        write_file(&stem_path(&dir, &stem, "_plot.csv"), csv)?;
        write_json(&stem_path(&dir, &stem, "_plot.json"), manifest)?;
    }
    for (suffix, content) in &outcome.files {
        write_file(&stem_path(&dir, &stem, suffix), content)?;
    }
    for line in &outcome.stdout {
        println!("{line}");
    }
    if let Some(note) = &outcome.note {
        eprintln!("{note}");
    }
    log::info!("finished with exit code {}, wall time {:.3}s", outcome.code, started.elapsed().as_secs_f64());
    debug_assert!(outcome.code == EXIT_OK || outcome.code == EXIT_NO_CROSSING);
    Ok(outcome.code)
}
