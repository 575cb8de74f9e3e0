//! Experiment runner behind the `nashflow` binary.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{bound_report, convergence_summary, BoundReport, ConvergenceSummary, GameConstants};
use crate::config::{ConfigErrors, Diagnostic, ExperimentConfig};
use crate::dynamics::{DynamicsSpec, GainPlacement, Variant};
use crate::error::{Error, Result};
use crate::game::{extended_pseudo_gradient, pseudo_gradient, sample_constants, Game, SampledConstants, SelectionOps};
use crate::geometry::BoxSet;
use crate::graph::build_laplacian;
use crate::integrate::{integrate, integrate_until, DivergenceReport, StopReason, Trajectory};
use crate::solve::{reference_equilibrium, NESolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// Final residual within `criteria.residual_tol`.
    Converged,
    /// Finite at `t_end` but the residual is still above `criteria.residual_tol`.
    NotConverged,
    Diverged,
    /// No convergence criterion was requested and the run stayed finite.
    Completed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged | Outcome::Completed => EXIT_OK,
            Outcome::Diverged => EXIT_DIVERGED,
            Outcome::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub n_edges: usize,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub d_star: usize,
}

/// Sampled constants of the pseudo-gradient and of the extended
/// pseudo-gradient, each labelled with the map it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsSummary {
    pub domain: (f64, f64),
    pub pseudo_gradient: SampledConstants,
    pub extended_pseudo_gradient: Option<SampledConstants>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub variant: Variant,
    pub n_players: usize,
    pub eps_inv: f64,
    pub placement: Option<GainPlacement>,
    pub graph: Option<GraphSummary>,
    pub reference: NESolution,
    pub final_actions: Vec<f64>,
    pub convergence: ConvergenceSummary,
    pub max_step_storage_increase: Option<f64>,
    pub stop: StopReason,
    pub diverged: bool,
    pub divergence: Option<DivergenceReport>,
    pub steps_taken: usize,
    pub residual_tol: Option<f64>,
    pub outcome: Outcome,
    pub constants: Option<ConstantsSummary>,
    pub bounds: Option<BoundReport>,
    pub bounds_note: Option<String>,
}

/// Everything produced by one integrated experiment.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ExperimentConfig,
    pub spec: DynamicsSpec,
    pub initial_state: Vec<f64>,
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

/// Builds the dynamics, integrates and summarizes, without writing files.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let game = cfg.game.build()?;
    let n = game.layout().total();
    let omega = cfg.omega_box()?;
    let start = vec![0.5 * (cfg.init.actions.0 + cfg.init.actions.1); n];
    let reference = reference_equilibrium(&game, &omega, &start)?;

    let lap = match &cfg.graph {
        Some(g) if cfg.variant.is_augmented() => Some(build_laplacian(&g.build(n)?)?),
        _ => None,
    };
    let graph = lap.as_ref().map(|l| GraphSummary {
        n_edges: (0..l.n_nodes()).map(|i| l.degree(i)).sum::<usize>() / 2,
        lambda2: l.lambda2,
        lambda_n: l.lambda_n,
        d_star: l.d_star,
    });
    let game: Arc<dyn Game> = Arc::new(game);
    let set = cfg.variant.is_projected().then(|| omega.clone());
    let spec = DynamicsSpec::build(cfg.variant, game.clone(), lap.clone(), set, cfg.eps_inv, cfg.placement)?
        .with_reference(reference.x_star.clone())?;

    let x0 = cfg.initial_state();
    let trajectory = match cfg.stop_residual {
        Some(th) => integrate_until(&spec, &x0, &cfg.integrator, th)?,
        None => integrate(&spec, &x0, &cfg.integrator)?,
    };
    let convergence = convergence_summary(&trajectory, &reference.x_star)?;
    let outcome = if trajectory.diverged {
        Outcome::Diverged
    } else {
        match (cfg.residual_tol, convergence.final_residual) {
            (Some(tol), Some(r)) if r <= tol => Outcome::Converged,
            (Some(_), _) => Outcome::NotConverged,
            (None, _) => Outcome::Completed,
        }
    };

    let (constants, bounds, bounds_note) = constants_and_bounds(cfg, game.as_ref(), lap.as_ref());
    let summary = RunSummary {
        name: cfg.name.clone(),
        variant: cfg.variant,
        n_players: n,
        eps_inv: cfg.eps_inv,
        placement: cfg.variant.uses_gain().then(|| spec.placement()),
        graph,
        final_actions: spec.actions(trajectory.final_state())?,
        reference,
        convergence,
        max_step_storage_increase: trajectory.max_step_storage_increase,
        stop: trajectory.stop,
        diverged: trajectory.diverged,
        divergence: trajectory.divergence,
        steps_taken: trajectory.steps_taken,
        residual_tol: cfg.residual_tol,
        outcome,
        constants,
        bounds,
        bounds_note,
    };
    Ok(Simulation {
        config: cfg.clone(),
        spec,
        initial_state: x0,
        trajectory,
        summary,
    })
}

fn constants_and_bounds(
    cfg: &ExperimentConfig,
    game: &dyn Game,
    lap: Option<&crate::graph::LaplacianInfo>,
) -> (Option<ConstantsSummary>, Option<BoundReport>, Option<String>) {
    let n = game.layout().total();
    let (lo, hi) = cfg.analysis_domain;
    let sampled = (|| -> Result<ConstantsSummary> {
        let domain = BoxSet::uniform(n, lo, hi)?;
        let f = sample_constants(|x| pseudo_gradient(game, x), &domain, cfg.analysis_samples, cfg.analysis_seed)?;
        let ext = if lap.is_some() {
            let sel = SelectionOps::new(game.layout());
            let aug = BoxSet::uniform(game.layout().augmented_len(), lo, hi)?;
            let field = |x: &[f64]| sel.embed_actions(&extended_pseudo_gradient(game, x)?);
            Some(sample_constants(field, &aug, cfg.analysis_samples, cfg.analysis_seed)?)
        } else {
            None
        };
        Ok(ConstantsSummary {
            domain: (lo, hi),
            pseudo_gradient: f,
            extended_pseudo_gradient: ext,
        })
    })();
    let constants = match sampled {
        Ok(c) => c,
        Err(e) => return (None, None, Some(format!("constant sampling failed: {e}"))),
    };
    let (Some(lap), Some(ext)) = (lap, constants.extended_pseudo_gradient) else {
        return (Some(constants), None, None);
    };
    let mu = constants.pseudo_gradient.mu_hat;
    if !(mu > 0.0) {
        let note = format!("sampled monotonicity constant of F is {mu:.3e} (not positive); thresholds omitted");
        return (Some(constants), None, Some(note));
    }
    let gc = GameConstants {
        mu,
        mu_source: format!("sampled from pseudo-gradient F on [{lo}, {hi}]^{n}"),
        theta: ext.theta_hat,
        theta_source: format!("sampled from extended pseudo-gradient on [{lo}, {hi}]^{}", n * n),
    };
    match bound_report(&gc, lap, game.layout().n_players(), cfg.eps_inv) {
        Ok(b) => (Some(constants), Some(b), None),
        Err(e) => (Some(constants), None, Some(e.to_string())),
    }
}

/// CSV header for a simulation: `t`, the state coordinates, then the
/// diagnostics (`consensus_err` only for augmented runs).
pub fn csv_header(spec: &DynamicsSpec) -> Vec<String> {
    let n = spec.layout().total();
    let mut cols = vec!["t".to_string()];
    if spec.variant().is_augmented() {
        for i in 1..=n {
            for k in 1..=n {
                cols.push(format!("x_{i}_{k}"));
            }
        }
        cols.push("consensus_err".into());
    } else {
        cols.extend((1..=n).map(|i| format!("x_{i}")));
    }
    cols.push("ne_dist".into());
    cols.push("storage".into());
    cols
}

pub fn write_csv<W: Write>(mut w: W, spec: &DynamicsSpec, traj: &Trajectory) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    writeln!(w, "{}", csv_header(spec).join(","))?;
    let augmented = spec.variant().is_augmented();
    for ((t, x), d) in traj.times.iter().zip(&traj.states).zip(&traj.diagnostics) {
        write!(w, "{t}")?;
        for v in x {
            write!(w, ",{v}")?;
        }
        if augmented {
            write!(w, ",{}", opt(d.consensus_err))?;
        }
        writeln!(w, ",{},{}", opt(d.ne_dist), opt(d.storage))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.summary.outcome.exit_code()
    }
}

/// Runs one experiment and writes its CSV and JSON summary under `out_dir`
/// (absolute output paths in the config are kept as they are).
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let sim = simulate(cfg)?;
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(&cfg.csv);
    let summary_path = out_dir.join(&cfg.summary);
    for p in [&csv_path, &summary_path] {
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
    }
    write_csv(BufWriter::new(fs::File::create(&csv_path)?), &sim.spec, &sim.trajectory)?;
    let json = serde_json::to_string_pretty(&sim.summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&summary_path, json + "\n")?;
    Ok(RunReport {
        summary: sim.summary,
        csv_path,
        summary_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundledConfig {
    pub name: &'static str,
    pub description: &'static str,
    pub source: &'static str,
}

macro_rules! bundled {
    ($name:literal, $desc:literal) => {
        BundledConfig {
            name: $name,
            description: $desc,
            source: include_str!(concat!("../configs/", $name, ".toml")),
        }
    };
}

const BUNDLED: &[BundledConfig] = &[
    bundled!("example1_random", "Cournot, 20 players, linear demand, random graph"),
    bundled!("example1_cycle", "Cournot, 20 players, linear demand, cycle graph"),
    bundled!("example2_random", "Cournot, 8 players, quadratic demand, random graph"),
    bundled!("example2_cycle", "Cournot, 8 players, quadratic demand, cycle graph (expected to diverge)"),
    bundled!("example2_cycle_eps200", "Cournot, 8 players, quadratic demand, cycle graph, 1/eps = 200"),
    bundled!("example3_random", "Cournot, 20 players, actions in [0, 200], projected, random graph"),
    bundled!("example3_cycle", "Cournot, 20 players, actions in [0, 200], projected, cycle graph"),
];

pub fn list_examples() -> &'static [BundledConfig] {
    BUNDLED
}

pub fn bundled_config(name: &str) -> Option<&'static BundledConfig> {
    BUNDLED.iter().find(|b| b.name == name)
}

/// Loads a config from a path, or from the bundled catalog when no such
/// file exists and the argument names a bundled config.
pub fn load_config(arg: &str) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(b) = bundled_config(arg) {
            return ExperimentConfig::parse(b.source, b.name, None);
        }
    }
    ExperimentConfig::from_path(path)
}

/// All diagnostics `run` would raise before integrating; empty when valid.
pub fn validate_config(arg: &str) -> Vec<Diagnostic> {
    let cfg = match load_config(arg) {
        Ok(c) => c,
        Err(e) => return e.0,
    };
    let n = cfg.n_players();
    let mut diags = Vec::new();
    if let Some(g) = &cfg.graph {
        if let Err(e) = g.build(n) {
            diags.push(Diagnostic {
                line: None,
                field: "graph".into(),
                message: e.to_string(),
            });
        }
    }
    if let Err(e) = cfg.game.build() {
        diags.push(Diagnostic {
            line: None,
            field: "game".into(),
            message: e.to_string(),
        });
    }
    diags
}

/// One config's result in a batch.
#[derive(Debug)]
pub struct BatchItem {
    pub config: PathBuf,
    pub result: std::result::Result<RunReport, String>,
    pub exit_code: i32,
}

/// Runs every `*.toml` in `dir` in parallel; each gets its own output
/// subdirectory named after its file stem.
pub fn run_batch(dir: &Path, out_dir: &Path) -> Result<Vec<BatchItem>> {
    let mut configs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    Ok(configs
        .into_par_iter()
        .map(|path| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
            let outcome = ExperimentConfig::from_path(&path)
                .map_err(|e| (e.to_string(), EXIT_CONFIG))
                .and_then(|cfg| run_experiment(&cfg, &out_dir.join(&stem)).map_err(|e| (e.to_string(), EXIT_CONFIG)));
            match outcome {
                Ok(r) => BatchItem {
                    exit_code: r.exit_code(),
                    config: path,
                    result: Ok(r),
                },
                Err((msg, code)) => BatchItem {
                    config: path,
                    result: Err(msg),
                    exit_code: code,
                },
            }
        })
        .collect())
}
