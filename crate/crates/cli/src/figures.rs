//! `reproduce <figN>`: threshold intersections and curve data for the
//! published loss and noise figures.

use std::path::Path;
use std::time::Instant;

use detloop::functionals::{build, Functional, Params};
use detloop::io::{results_to_csv, table_to_csv, ResultRow};
use detloop::loss::LossSpec;
use detloop::optimize::{
    boundary_curve, critical_efficiency, maximize_problem, noise_threshold, Crossing, EtaFamily, NoiseFamily,
    OptimizerConfig, Problem, StrategyMode, StrategySpace, ThresholdResult, ThresholdStatus,
};
use serde_json::Value;

use crate::output::{init_file_logger, write_file, write_json, Axis, Failure, Marker, PlotManifest, EXIT_OK, EXIT_RUNTIME};
use crate::run::loss_model_name;

pub const FIGURES: &[&str] = &["fig1", "fig2", "fig3", "fig4", "fig5", "fig9", "fig10", "fig11", "fig12"];

const BISECT_TOL: f64 = 1e-3;

struct Check {
    key: &'static str,
    family: EtaFamily,
    expected: f64,
    tol: f64,
}

enum Plot {
    /// η₂(η₁) for the strategy optimal at each threshold.
    Boundary,
    /// Functional value against η₂ for the strategy optimal near the threshold.
    Profile,
}

enum Kind {
    Loss { loss: LossSpec, checks: Vec<Check>, plot: Plot },
    Noise { family: NoiseFamily, expected: f64, tol: f64, stop: f64 },
}

struct Figure {
    id: &'static str,
    title: &'static str,
    functional: &'static str,
    params: &'static [(&'static str, &'static str)],
    restarts: usize,
    kind: Kind,
}

fn sym(expected: f64, tol: f64) -> Check {
    Check { key: "symmetric", family: EtaFamily::Symmetric, expected, tol }
}

fn eta1_one(expected: f64, tol: f64) -> Check {
    Check { key: "eta1=1", family: EtaFamily::FixedEta1 { eta1: 1.0 }, expected, tol }
}

fn eta2_one(expected: f64, tol: f64) -> Check {
    Check { key: "eta2=1", family: EtaFamily::FixedEta2 { eta2: 1.0 }, expected, tol }
}

fn figure(id: &str) -> Option<Figure> {
    let lower: &'static [(&str, &str)] = &[("branch", "lower")];
    Some(match id {
        "fig1" => Figure {
            id: "fig1",
            title: "CHSH, no-clicks absorbed in a=1, b=1",
            functional: "chsh",
            params: lower,
            restarts: 64,
            kind: Kind::Loss {
                loss: LossSpec::absorption(1.0, 1.0, 1, 1),
                checks: vec![sym(0.84, 0.01), eta1_one(0.50, 0.01), eta2_one(0.50, 0.01)],
                plot: Plot::Boundary,
            },
        },
        "fig2" => Figure {
            id: "fig2",
            title: "CHSH, no-clicks absorbed in a=1, b=0",
            functional: "chsh",
            params: lower,
            restarts: 64,
            kind: Kind::Loss {
                loss: LossSpec::absorption(1.0, 1.0, 1, 0),
                checks: vec![sym(0.667, 0.005), eta1_one(0.500, 0.005), eta2_one(0.500, 0.005)],
                plot: Plot::Boundary,
            },
        },
        "fig3" => Figure {
            id: "fig3",
            title: "I222, no-clicks absorbed in a=1, b=1",
            functional: "i222",
            params: &[],
            restarts: 64,
            kind: Kind::Loss {
                loss: LossSpec::absorption(1.0, 1.0, 1, 1),
                checks: vec![sym(0.84, 0.01), eta1_one(0.50, 0.01), eta2_one(0.50, 0.01)],
                plot: Plot::Boundary,
            },
        },
        "fig4" => Figure {
            id: "fig4",
            title: "I222, no-clicks absorbed in a=1, b=0",
            functional: "i222",
            params: &[],
            restarts: 64,
            kind: Kind::Loss {
                loss: LossSpec::absorption(1.0, 1.0, 1, 0),
                checks: vec![sym(0.67, 0.01), eta1_one(0.50, 0.01), eta2_one(0.50, 0.01)],
                plot: Plot::Boundary,
            },
        },
        "fig5" => Figure {
            id: "fig5",
            title: "I223 with a perfect first detector",
            functional: "i223",
            params: &[],
            restarts: 64,
            kind: Kind::Loss { loss: LossSpec::perfect_alice(1.0), checks: vec![eta1_one(0.50, 0.01)], plot: Plot::Profile },
        },
        "fig9" => Figure {
            id: "fig9",
            title: "I233, no-clicks absorbed in a=2, b=2",
            functional: "i233",
            params: &[],
            restarts: 64,
            kind: Kind::Loss {
                loss: LossSpec::absorption(1.0, 1.0, 2, 2),
                checks: vec![sym(0.9052, 0.01), eta1_one(0.51, 0.01), eta2_one(0.875, 0.01)],
                plot: Plot::Boundary,
            },
        },
        "fig10" => Figure {
            id: "fig10",
            title: "CGLMP with qutrits, no-clicks absorbed in outcome 2",
            functional: "cglmp3",
            params: &[],
            restarts: 200,
            kind: Kind::Loss {
                loss: LossSpec::absorption(1.0, 1.0, 2, 2),
                checks: vec![sym(0.81, 0.01), eta1_one(0.68, 0.01), eta2_one(0.68, 0.01)],
                plot: Plot::Boundary,
            },
        },
        "fig11" => Figure {
            id: "fig11",
            title: "S3 under amplitude damping of the prepared states",
            functional: "s3",
            params: &[],
            restarts: 32,
            kind: Kind::Noise { family: NoiseFamily::AmplitudeDamping, expected: 0.433, tol: 0.01, stop: 0.6 },
        },
        "fig12" => Figure {
            id: "fig12",
            title: "S3 under depolarizing noise on the prepared states",
            functional: "s3",
            params: &[],
            restarts: 32,
            kind: Kind::Noise { family: NoiseFamily::Depolarizing, expected: 0.216, tol: 0.01, stop: 0.4 },
        },
        _ => return None,
    })
}

pub struct ReproduceOptions {
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
}

struct SummaryLine {
    check: String,
    measured: Option<f64>,
    expected: f64,
    tol: f64,
}

impl SummaryLine {
    fn pass(&self) -> bool {
        self.measured.is_some_and(|m| (m - self.expected).abs() <= self.tol)
    }
}

fn summary_csv(lines: &[SummaryLine]) -> String {
    let mut out = String::from("check,measured,expected,tolerance,status\n");
    for l in lines {
        let m = l.measured.map(detloop::behaviors::fmt17).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.check,
            m,
            detloop::behaviors::fmt17(l.expected),
            detloop::behaviors::fmt17(l.tol),
            if l.pass() { "pass" } else { "fail" }
        ));
    }
    out
}

fn threshold_row(f: &Functional, loss: &LossSpec, family: EtaFamily, r: &ThresholdResult) -> ResultRow {
    let crossing = r.status == ThresholdStatus::Crossing;
    let (e1, e2) = family.pair(r.eta_star);
    ResultRow {
        task: "threshold".into(),
        functional: f.name.clone(),
        loss_model: loss_model_name(Some(loss)).into(),
        eta1: crossing.then_some(e1),
        eta2: crossing.then_some(e2),
        value: crossing.then_some(r.value_at_star),
        classical_bound: f.classical_bound,
        converged: crossing && r.converged,
    }
}

/// Grid for boundary curves; the symmetric threshold is added so the
/// curve is sampled exactly where it should cross the diagonal.
fn boundary_grid(extra: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = (60..=200).map(|k| k as f64 / 200.0).collect();
    g.extend(extra.iter().copied().filter(|e| (0.0..=1.0).contains(e)));
    g.sort_by(|a, b| a.total_cmp(b));
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    g
}

fn crossing_at(points: &[detloop::optimize::CurvePoint], eta1: f64) -> Option<f64> {
    points.iter().find(|p| (p.eta1 - eta1).abs() < 1e-12).and_then(|p| match p.crossing {
        Crossing::At(e) => Some(e),
        _ => None,
    })
}

struct Written {
    summary: Vec<SummaryLine>,
}

fn reproduce_loss(
    fig: &Figure,
    f: &Functional,
    loss: &LossSpec,
    checks: &[Check],
    plot: &Plot,
    cfg: &OptimizerConfig,
    out: &Path,
) -> Result<Written, Failure> {
    let space = StrategySpace::for_functional(f, Some(loss))?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut summary = Vec::new();
    for c in checks {
        let t = Instant::now();
        let r = match critical_efficiency(f, &space, loss, c.family, cfg, BISECT_TOL) {
            Ok(r) => Some(r),
            Err(detloop::Error::NoCrossing(msg)) => {
                log::warn!("{}: {msg}", c.key);
                None
            }
            Err(e) => return Err(e.into()),
        };
        let measured = r.as_ref().filter(|r| r.status == ThresholdStatus::Crossing).map(|r| r.eta_star);
        log::info!("{} {}: {:?} ({:.1}s)", fig.id, c.key, measured, t.elapsed().as_secs_f64());
        if let Some(r) = &r {
            rows.push(threshold_row(f, loss, c.family, r));
        }
        summary.push(SummaryLine { check: format!("threshold {}", c.key), measured, expected: c.expected, tol: c.tol });
        results.push(r);
    }
    let usable: Vec<(&Check, &ThresholdResult)> = checks
        .iter()
        .zip(&results)
        .filter_map(|(c, r)| r.as_ref().filter(|r| r.status == ThresholdStatus::Crossing).map(|r| (c, r)))
        .collect();

    let mut labels = Vec::new();
    let mut table = Vec::new();
    let mut series = Vec::new();
    let mut markers = Vec::new();
    let manifest = match plot {
        Plot::Boundary => {
            let sym_star = usable.iter().find(|(c, _)| c.key == "symmetric").map(|(_, r)| r.eta_star);
            let grid = boundary_grid(&sym_star.into_iter().collect::<Vec<_>>());
            for (c, r) in &usable {
                let mode = StrategyMode::Fixed { params: r.best_params.clone() };
                let points = boundary_curve(f, &space, loss, &mode, &grid, cfg, BISECT_TOL)?;
                let name = format!("optimal at {}", c.key);
                for p in &points {
                    labels.push(name.clone());
                    let e2 = if let Crossing::At(e) = p.crossing { Some(e) } else { None };
                    table.push(vec![Some(p.eta1), e2]);
                }
                match c.key {
                    "symmetric" => summary.push(SummaryLine {
                        check: "symmetric curve crosses the diagonal".into(),
                        measured: crossing_at(&points, r.eta_star),
                        expected: c.expected,
                        tol: c.tol,
                    }),
                    "eta1=1" => summary.push(SummaryLine {
                        check: "eta1=1 curve endpoint".into(),
                        measured: crossing_at(&points, 1.0),
                        expected: c.expected,
                        tol: c.tol,
                    }),
                    _ => {}
                }
                markers.push(Marker {
                    axis: if c.key == "eta2=1" { "x".into() } else { "y".into() },
                    value: r.eta_star,
                    label: format!("threshold {}", c.key),
                });
                series.push(name);
            }
            PlotManifest {
                title: fig.title.into(),
                data: format!("{}_curves.csv", fig.id),
                x: Axis { column: "eta1".into(), label: "eta1".into(), range: (0.3, 1.0) },
                y: Axis { column: "eta2".into(), label: "critical eta2".into(), range: (0.3, 1.0) },
                series,
                markers,
            }
        }
        Plot::Profile => {
            let (c, r) = usable.first().ok_or_else(|| Failure::runtime(format!("{}: no threshold to plot", fig.id)))?;
            let base = Problem::new(f, &space, Some(loss))?;
            let name = format!("optimal at {}", c.key);
            for k in 30..=100 {
                let eta2 = k as f64 / 100.0;
                let spec = c.family.spec(loss, eta2, &space)?;
                let v = base.with_loss(Some(spec)).value(&r.best_params)?;
                labels.push(name.clone());
                table.push(vec![Some(eta2), Some(v)]);
            }
            PlotManifest {
                title: fig.title.into(),
                data: format!("{}_curves.csv", fig.id),
                x: Axis { column: "eta2".into(), label: "eta2".into(), range: (0.3, 1.0) },
                y: Axis { column: "value".into(), label: f.label.clone(), range: (0.0, 0.0) },
                series: vec![name],
                markers: vec![
                    Marker { axis: "y".into(), value: f.classical_bound, label: "classical bound".into() },
                    Marker { axis: "x".into(), value: r.eta_star, label: format!("threshold {}", c.key) },
                ],
            }
        }
    };
    let header = match plot {
        Plot::Boundary => ["eta1", "eta2"],
        Plot::Profile => ["eta2", "value"],
    };
    write_file(&out.join(format!("{}_curves.csv", fig.id)), &table_to_csv(&header, &table, Some(&labels)))?;
    write_json(&out.join(format!("{}.json", fig.id)), &manifest)?;
    write_file(&out.join(format!("{}_thresholds.csv", fig.id)), &results_to_csv(&rows)?)?;
    Ok(Written { summary })
}

fn reproduce_noise(
    fig: &Figure,
    f: &Functional,
    family: NoiseFamily,
    expected: f64,
    tol: f64,
    stop: f64,
    cfg: &OptimizerConfig,
    out: &Path,
) -> Result<Written, Failure> {
    let space = StrategySpace::for_functional(f, None)?;
    let r = noise_threshold(f, &space, family, &StrategyMode::Reoptimize, cfg, BISECT_TOL)?;
    let measured = (r.status == ThresholdStatus::Crossing).then_some(r.eta_star);
    log::info!("{} threshold {:?}", fig.id, measured);
    let base = Problem::new(f, &space, None)?;
    let steps = 24;
    let mut table = Vec::new();
    let mut rows = Vec::new();
    let model = match family {
        NoiseFamily::AmplitudeDamping => "amplitude_damping",
        NoiseFamily::Depolarizing => "depolarizing",
    };
    for k in 0..=steps {
        let s = stop * k as f64 / steps as f64;
        let p = base.with_space(space.with_channel(Some(family.channel(s)))?);
        let m = maximize_problem(&p, cfg)?;
        table.push(vec![Some(s), Some(m.value)]);
        rows.push(ResultRow {
            task: "noise_sample".into(),
            functional: f.name.clone(),
            loss_model: model.into(),
            eta1: Some(s),
            eta2: None,
            value: Some(m.value),
            classical_bound: f.classical_bound,
            converged: m.converged,
        });
    }
    rows.insert(
        0,
        ResultRow {
            task: "noise".into(),
            functional: f.name.clone(),
            loss_model: model.into(),
            eta1: measured,
            eta2: None,
            value: measured.map(|_| r.value_at_star),
            classical_bound: f.classical_bound,
            converged: measured.is_some() && r.converged,
        },
    );
    let rise = table.windows(2).map(|w| w[1][1].unwrap() - w[0][1].unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let summary = vec![
        SummaryLine { check: "critical noise strength".into(), measured, expected, tol },
        SummaryLine { check: "largest increase between samples".into(), measured: Some(rise.max(0.0)), expected: 0.0, tol: 1e-6 },
    ];
    let labels = vec!["max".to_string(); table.len()];
    let manifest = PlotManifest {
        title: fig.title.into(),
        data: format!("{}_curves.csv", fig.id),
        x: Axis { column: "strength".into(), label: format!("{model} strength"), range: (0.0, stop) },
        y: Axis { column: "value".into(), label: f.label.clone(), range: (0.0, 0.0) },
        series: vec!["max".into()],
        markers: vec![
            Marker { axis: "y".into(), value: f.classical_bound, label: "classical bound".into() },
            Marker { axis: "x".into(), value: r.eta_star, label: "critical strength".into() },
        ],
    };
    write_file(&out.join(format!("{}_curves.csv", fig.id)), &table_to_csv(&["strength", "value"], &table, Some(&labels)))?;
    write_json(&out.join(format!("{}.json", fig.id)), &manifest)?;
    write_file(&out.join(format!("{}_thresholds.csv", fig.id)), &results_to_csv(&rows)?)?;
    Ok(Written { summary })
}

/// Writes `<id>_curves.csv`, `<id>.json` (axes manifest),
/// `<id>_thresholds.csv`, `<id>_summary.csv` and `<id>.log` under `out`.
pub fn reproduce(id: &str, out: &Path, opts: &ReproduceOptions) -> Result<i32, Failure> {
    let fig = figure(id).ok_or_else(|| Failure::validation(format!("figure: unknown id '{id}', expected one of {}", FIGURES.join(", "))))?;
    init_file_logger(&out.join(format!("{id}.log")))?;
    let started = Instant::now();
    let mut cfg = OptimizerConfig::default().with_restarts(opts.restarts.unwrap_or(fig.restarts));
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::at("restarts", e))?;
    log::info!("detloop {} reproduce {id}: restarts {}, seed {:#x}", env!("CARGO_PKG_VERSION"), cfg.restarts, cfg.seed);
    let params: Params = fig.params.iter().map(|(k, v)| (k.to_string(), Value::from(*v))).collect();
    let f = build(fig.functional, &params)?;
    let written = match &fig.kind {
        Kind::Loss { loss, checks, plot } => reproduce_loss(&fig, &f, loss, checks, plot, &cfg, out)?,
        Kind::Noise { family, expected, tol, stop } => reproduce_noise(&fig, &f, *family, *expected, *tol, *stop, &cfg, out)?,
    };
    write_file(&out.join(format!("{id}_summary.csv")), &summary_csv(&written.summary))?;
    println!("{id}: {}", fig.title);
    for l in &written.summary {
        let m = l.measured.map(|m| format!("{m:.4}")).unwrap_or_else(|| "none".into());
        println!("  [{}] {}: {m} (expected {} ± {})", if l.pass() { "pass" } else { "FAIL" }, l.check, l.expected, l.tol);
    }
    log::info!("wall time {:.1}s", started.elapsed().as_secs_f64());
    Ok(if written.summary.iter().all(|l| l.pass()) { EXIT_OK } else { EXIT_RUNTIME })
}
