//! Experiment configuration files.
//!
//! A config is a TOML document with the tables `[game]`, `[graph]`,
//! `[dynamics]`, `[integrator]`, `[init]` and the optional `[criteria]`,
//! `[analysis]` and `[output]`. The grammar is documented in the README.
//! Every problem found while parsing or validating is reported as a
//! [`Diagnostic`] carrying the line of the offending key where known.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::dynamics::{GainPlacement, Variant};
use crate::error::{Error, Result};
use crate::game::{DemandKind, QuadraticAggregativeGame};
use crate::geometry::BoxSet;
use crate::graph::{make_complete, make_cycle, make_random_connected, CommGraph};
use crate::integrate::{IntegratorConfig, Scheme};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

/// All diagnostics of a rejected config.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<Diagnostic>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    Example1,
    Example2,
    Example3,
    /// Custom Cournot game; needs `linear_cost`, `intercept` and `demand`.
    Quadratic,
}

impl GameKind {
    fn default_players(self) -> Option<usize> {
        match self {
            GameKind::Example1 | GameKind::Example3 => Some(20),
            GameKind::Example2 => Some(8),
            GameKind::Quadratic => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Cycle,
    Complete,
    Random,
    EdgeList,
}

/// `omega = "unbounded"` or `omega = [lo, hi]` (same interval per player).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum OmegaRaw {
    Named(String),
    Interval(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    description: Option<String>,
    game: RawGame,
    graph: Option<RawGraph>,
    dynamics: RawDynamics,
    integrator: RawIntegrator,
    init: RawInit,
    criteria: Option<RawCriteria>,
    analysis: Option<RawAnalysis>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    kind: GameKind,
    n_players: Option<Spanned<i64>>,
    linear_cost: Option<Spanned<Vec<f64>>>,
    intercept: Option<f64>,
    demand: Option<DemandKind>,
    omega: Option<Spanned<OmegaRaw>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    kind: Spanned<GraphKind>,
    p: Option<Spanned<f64>>,
    seed: Option<u64>,
    path: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    variant: Spanned<Variant>,
    eps_inv: Option<Spanned<f64>>,
    placement: Option<GainPlacement>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    scheme: Spanned<Scheme>,
    dt: Spanned<f64>,
    t_end: Spanned<f64>,
    record_every: Option<Spanned<i64>>,
    stop_residual: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    seed: u64,
    actions: Spanned<Vec<f64>>,
    estimates: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCriteria {
    residual_tol: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    samples: Option<Spanned<i64>>,
    seed: Option<u64>,
    domain: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<String>,
    summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSpec {
    pub kind: GameKind,
    pub n_players: usize,
    pub linear_cost: Vec<f64>,
    pub intercept: f64,
    pub demand: DemandKind,
}

impl GameSpec {
    pub fn build(&self) -> Result<QuadraticAggregativeGame> {
        QuadraticAggregativeGame::new(self.linear_cost.clone(), self.intercept, self.demand)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    Cycle,
    Complete,
    Random { p: f64, seed: u64 },
    EdgeList { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self, n: usize) -> Result<CommGraph> {
        match self {
            GraphSpec::Cycle => make_cycle(n),
            GraphSpec::Complete => make_complete(n),
            GraphSpec::Random { p, seed } => make_random_connected(n, *p, *seed),
            GraphSpec::EdgeList { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                let g = CommGraph::from_edge_list(&text, Some(n))?;
                if !g.is_connected() {
                    return Err(Error::InvalidGraph(format!("{} is not connected", path.display())));
                }
                Ok(g)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitSpec {
    pub seed: u64,
    pub actions: (f64, f64),
    pub estimates: (f64, f64),
}

impl InitSpec {
    /// Uniform draws with a seeded ChaCha8 stream. Augmented states are drawn
    /// block by block: block `i` takes an action draw at its own coordinate
    /// and estimate draws elsewhere.
    pub fn sample(&self, n_players: usize, augmented: bool) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = |r: (f64, f64)| if r.0 == r.1 { r.0 } else { rng.gen_range(r.0..r.1) };
        if !augmented {
            return (0..n_players).map(|_| draw(self.actions)).collect();
        }
        let mut x = Vec::with_capacity(n_players * n_players);
        for i in 0..n_players {
            for k in 0..n_players {
                x.push(draw(if i == k { self.actions } else { self.estimates }));
            }
        }
        x
    }
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub description: Option<String>,
    pub game: GameSpec,
    /// `None` means unbounded actions.
    pub omega: Option<(f64, f64)>,
    pub graph: Option<GraphSpec>,
    pub variant: Variant,
    pub eps_inv: f64,
    pub placement: Option<GainPlacement>,
    pub integrator: IntegratorConfig,
    pub stop_residual: Option<f64>,
    pub init: InitSpec,
    /// Final residual the run must reach to count as converged.
    pub residual_tol: Option<f64>,
    pub analysis_samples: usize,
    pub analysis_seed: u64,
    /// Per-coordinate sampling interval for the monotonicity and Lipschitz
    /// estimates; defaults to `omega`, else to the initial action range.
    pub analysis_domain: (f64, f64),
    pub csv: PathBuf,
    pub summary: PathBuf,
}

impl ExperimentConfig {
    pub fn n_players(&self) -> usize {
        self.game.n_players
    }

    pub fn omega_box(&self) -> Result<BoxSet> {
        let n = self.n_players();
        match self.omega {
            Some((lo, hi)) => BoxSet::uniform(n, lo, hi),
            None => Ok(BoxSet::unbounded(n)),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.init.sample(self.n_players(), self.variant.is_augmented())
    }

    pub fn from_path(path: &Path) -> std::result::Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigErrors(vec![Diagnostic {
                line: None,
                field: path.display().to_string(),
                message: format!("cannot read config: {e}"),
            }])
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
        Self::parse(&text, stem, path.parent())
    }

    /// Parses and validates `text`. `default_name` is used when the config
    /// has no `name`; relative edge-list paths resolve against `base_dir`.
    pub fn parse(text: &str, default_name: &str, base_dir: Option<&Path>) -> std::result::Result<Self, ConfigErrors> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            ConfigErrors(vec![Diagnostic {
                line: e.span().map(|s| line_of(text, &s)),
                field: "config".into(),
                message: e.message().trim().to_string(),
            }])
        })?;
        let mut v = Validator { text, diags: Vec::new() };
        let cfg = v.check(raw, default_name, base_dir);
        if v.diags.is_empty() {
            Ok(cfg.expect("no diagnostics implies a config"))
        } else {
            Err(ConfigErrors(v.diags))
        }
    }
}

fn line_of(text: &str, span: &Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

struct Validator<'a> {
    text: &'a str,
    diags: Vec<Diagnostic>,
}

impl Validator<'_> {
    fn push(&mut self, span: Option<Range<usize>>, field: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            line: span.map(|s| line_of(self.text, &s)),
            field: field.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, v: &Spanned<f64>, field: &str) -> f64 {
        let x = *v.get_ref();
        if !(x > 0.0 && x.is_finite()) {
            self.push(Some(v.span()), field, format!("must be positive and finite, got {x}"));
        }
        x
    }

    fn count(&mut self, v: &Spanned<i64>, field: &str) -> usize {
        let x = *v.get_ref();
        if x < 1 {
            self.push(Some(v.span()), field, format!("must be at least 1, got {x}"));
            return 1;
        }
        x as usize
    }

    fn interval(&mut self, v: &Spanned<Vec<f64>>, field: &str) -> Option<(f64, f64)> {
        match v.get_ref().as_slice() {
            &[lo, hi] if lo.is_finite() && hi.is_finite() && lo <= hi => Some((lo, hi)),
            _ => {
                self.push(Some(v.span()), field, "expected [lo, hi] with finite lo <= hi");
                None
            }
        }
    }

    fn check(&mut self, raw: RawConfig, default_name: &str, base_dir: Option<&Path>) -> Option<ExperimentConfig> {
        let game = self.game(&raw.game);
        let n = game.as_ref().map(|g| g.n_players);

        let omega = match &raw.game.omega {
            None => None,
            Some(s) => match s.get_ref() {
                OmegaRaw::Named(name) if name == "unbounded" => None,
                OmegaRaw::Named(name) => {
                    self.push(Some(s.span()), "game.omega", format!("expected \"unbounded\" or [lo, hi], got \"{name}\""));
                    None
                }
                OmegaRaw::Interval(v) => {
                    let r = self.interval(&Spanned::new(s.span(), v.clone()), "game.omega");
                    if r.is_some_and(|(lo, hi)| lo == hi) {
                        self.push(Some(s.span()), "game.omega", "interval must have lo < hi");
                    }
                    r
                }
            },
        };

        let variant = *raw.dynamics.variant.get_ref();
        if variant.is_projected() && omega.is_none() {
            self.push(
                Some(raw.dynamics.variant.span()),
                "dynamics.variant",
                format!(
                    "projected variant `{}` is incompatible with unbounded action sets; set game.omega = [lo, hi]",
                    variant.name()
                ),
            );
        }

        let eps_inv = match &raw.dynamics.eps_inv {
            Some(e) => {
                let x = self.positive(e, "dynamics.eps_inv");
                if !variant.uses_gain() && x != 1.0 {
                    self.push(
                        Some(e.span()),
                        "dynamics.eps_inv",
                        format!("variant `{}` has no 1/eps gain; use an -eps variant", variant.name()),
                    );
                }
                x
            }
            None => 1.0,
        };
        if raw.dynamics.placement.is_some() && !variant.uses_gain() {
            self.push(
                Some(raw.dynamics.variant.span()),
                "dynamics.placement",
                format!("variant `{}` has no 1/eps gain to place", variant.name()),
            );
        }

        let graph = self.graph(raw.graph.as_ref(), variant, base_dir, n);

        let it = &raw.integrator;
        let dt = self.positive(&it.dt, "integrator.dt");
        let t_end = self.positive(&it.t_end, "integrator.t_end");
        if dt > 0.0 && t_end > 0.0 && dt.is_finite() && t_end.is_finite() && t_end < dt {
            self.push(Some(it.t_end.span()), "integrator.t_end", format!("horizon {t_end} is shorter than one step {dt}"));
        }
        let record_every = it.record_every.as_ref().map_or(1, |r| self.count(r, "integrator.record_every"));
        let scheme = *it.scheme.get_ref();
        match (variant.is_projected(), scheme) {
            (true, Scheme::ProjectedEuler) | (false, Scheme::Euler | Scheme::Rk4) => {}
            (true, _) => self.push(
                Some(it.scheme.span()),
                "integrator.scheme",
                "projected variants need scheme = \"projected-euler\"",
            ),
            (false, _) => self.push(
                Some(it.scheme.span()),
                "integrator.scheme",
                "projected-euler is only for projected variants; use \"euler\" or \"rk4\"",
            ),
        }
        let stop_residual = it.stop_residual.as_ref().map(|s| self.positive(s, "integrator.stop_residual"));

        let actions = self.interval(&raw.init.actions, "init.actions");
        let estimates = match &raw.init.estimates {
            Some(e) => {
                let r = self.interval(e, "init.estimates");
                if !variant.is_augmented() {
                    self.push(Some(e.span()), "init.estimates", format!("variant `{}` keeps no estimates", variant.name()));
                }
                r
            }
            None => actions,
        };
        if let (Some((lo, hi)), Some((alo, ahi))) = (omega, actions) {
            if variant.is_projected() && (alo < lo || ahi > hi) {
                self.push(
                    Some(raw.init.actions.span()),
                    "init.actions",
                    format!("initial actions [{alo}, {ahi}] must lie inside omega [{lo}, {hi}]"),
                );
            }
        }

        let residual_tol = raw
            .criteria
            .as_ref()
            .and_then(|c| c.residual_tol.as_ref())
            .map(|r| self.positive(r, "criteria.residual_tol"));

        let analysis = raw.analysis.as_ref();
        let analysis_samples = analysis
            .and_then(|a| a.samples.as_ref())
            .map_or(crate::game::DEFAULT_SAMPLE_PAIRS, |s| self.count(s, "analysis.samples"));
        if analysis_samples < 2 {
            let span = analysis.and_then(|a| a.samples.as_ref()).map(|s| s.span());
            self.push(span, "analysis.samples", "need at least 2 samples");
        }
        let domain = match analysis.and_then(|a| a.domain.as_ref()) {
            Some(d) => {
                let r = self.interval(d, "analysis.domain");
                if r.is_some_and(|(lo, hi)| lo == hi) {
                    self.push(Some(d.span()), "analysis.domain", "interval must have lo < hi");
                }
                r
            }
            None => omega.or(actions),
        };
        if let (None, Some((lo, hi))) = (analysis.and_then(|a| a.domain.as_ref()), domain) {
            if lo == hi {
                self.push(Some(raw.init.actions.span()), "analysis.domain", "default sampling domain is a single point; set analysis.domain");
            }
        }

        let name = raw.name.unwrap_or_else(|| default_name.to_string());
        let output = raw.output.as_ref();
        let csv = PathBuf::from(output.and_then(|o| o.csv.clone()).unwrap_or_else(|| format!("{name}.csv")));
        let summary = PathBuf::from(output.and_then(|o| o.summary.clone()).unwrap_or_else(|| format!("{name}.json")));

        if !self.diags.is_empty() {
            return None;
        }
        Some(ExperimentConfig {
            name,
            description: raw.description,
            game: game?,
            omega,
            graph,
            variant,
            eps_inv,
            placement: raw.dynamics.placement,
            integrator: IntegratorConfig::new(scheme, dt, t_end).record_every(record_every),
            stop_residual,
            init: InitSpec {
                seed: raw.init.seed,
                actions: actions?,
                estimates: estimates?,
            },
            residual_tol,
            analysis_samples,
            analysis_seed: analysis.and_then(|a| a.seed).unwrap_or(0),
            analysis_domain: domain?,
            csv,
            summary,
        })
    }

    fn game(&mut self, g: &RawGame) -> Option<GameSpec> {
        let n_given = g.n_players.as_ref().map(|n| (self.count(n, "game.n_players"), n.span()));
        let n = match (n_given, &g.linear_cost, g.kind.default_players()) {
            (Some((n, span)), Some(c), _) if c.get_ref().len() != n => {
                self.push(
                    Some(span),
                    "game.n_players",
                    format!("{n} players but linear_cost has {} entries", c.get_ref().len()),
                );
                return None;
            }
            (Some((n, _)), _, _) => n,
            (None, Some(c), _) => c.get_ref().len(),
            (None, None, Some(n)) => n,
            (None, None, None) => {
                self.push(None, "game.linear_cost", "kind = \"quadratic\" needs linear_cost");
                return None;
            }
        };
        if n < 2 {
            self.push(g.n_players.as_ref().map(|s| s.span()), "game.n_players", "need at least 2 players");
            return None;
        }
        let (cost, intercept, demand) = {
            let base = match g.kind {
                GameKind::Example1 => QuadraticAggregativeGame::example1(n).ok(),
                GameKind::Example2 => QuadraticAggregativeGame::example2(n).ok(),
                GameKind::Example3 => QuadraticAggregativeGame::example3(n).ok(),
                GameKind::Quadratic => None,
            };
            match base {
                Some(b) => (
                    g.linear_cost.as_ref().map_or_else(|| b.linear_cost().to_vec(), |c| c.get_ref().clone()),
                    g.intercept.unwrap_or(b.intercept()),
                    g.demand.unwrap_or(b.demand()),
                ),
                None => {
                    let (Some(c), Some(i), Some(d)) = (&g.linear_cost, g.intercept, g.demand) else {
                        self.push(None, "game", "kind = \"quadratic\" needs linear_cost, intercept and demand");
                        return None;
                    };
                    (c.get_ref().clone(), i, d)
                }
            }
        };
        if let Some(c) = &g.linear_cost {
            if c.get_ref().iter().any(|a| !a.is_finite()) {
                self.push(Some(c.span()), "game.linear_cost", "entries must be finite");
                return None;
            }
        }
        Some(GameSpec {
            kind: g.kind,
            n_players: n,
            linear_cost: cost,
            intercept,
            demand,
        })
    }

    fn graph(&mut self, g: Option<&RawGraph>, variant: Variant, base_dir: Option<&Path>, n: Option<usize>) -> Option<GraphSpec> {
        let Some(g) = g else {
            if variant.is_augmented() {
                self.push(None, "graph", format!("variant `{}` needs a [graph] table", variant.name()));
            }
            return None;
        };
        let kind = *g.kind.get_ref();
        let spec = match kind {
            GraphKind::Cycle => GraphSpec::Cycle,
            GraphKind::Complete => GraphSpec::Complete,
            GraphKind::Random => {
                let Some(p) = &g.p else {
                    self.push(Some(g.kind.span()), "graph.p", "random graphs need an edge probability p");
                    return None;
                };
                let pv = *p.get_ref();
                if !(pv > 0.0 && pv <= 1.0) {
                    self.push(Some(p.span()), "graph.p", format!("must lie in (0, 1], got {pv}"));
                }
                GraphSpec::Random {
                    p: pv,
                    seed: g.seed.unwrap_or(0),
                }
            }
            GraphKind::EdgeList => {
                let Some(path) = &g.path else {
                    self.push(Some(g.kind.span()), "graph.path", "edge-list graphs need a path");
                    return None;
                };
                let p = PathBuf::from(path.get_ref());
                let p = match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                };
                if let Some(n) = n {
                    match std::fs::read_to_string(&p) {
                        Err(e) => self.push(Some(path.span()), "graph.path", format!("cannot read {}: {e}", p.display())),
                        Ok(text) => match CommGraph::from_edge_list(&text, Some(n)) {
                            Err(e) => self.push(Some(path.span()), "graph.path", e.to_string()),
                            Ok(gr) if !gr.is_connected() => {
                                self.push(Some(path.span()), "graph.path", "graph is not connected")
                            }
                            Ok(_) => {}
                        },
                    }
                }
                GraphSpec::EdgeList { path: p }
            }
        };
        if !variant.is_augmented() {
            self.push(
                Some(g.kind.span()),
                "graph",
                format!("variant `{}` uses no communication graph; remove [graph]", variant.name()),
            );
        }
        Some(spec)
    }
}
