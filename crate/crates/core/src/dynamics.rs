//! Vector fields of the Nash-seeking dynamics.
//!
//! Perfect information: `ẋ = −F(x)`. Augmented: every player integrates its
//! own action with its partial gradient evaluated at its own estimate block
//! and runs Laplacian consensus on the whole block,
//! `ẋ = −Rᵀ F(x_aug) − (L ⊗ I_n) x_aug`. The two-timescale and projected
//! variants rescale and tangent-project individual rows of that field.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{check_len, Error, Result};
use crate::game::{extended_pseudo_gradient_into, pseudo_gradient, ActionLayout, Game, SelectionOps};
use crate::geometry::{BoxSet, ConvexSet, ACTIVE_TOL};
use crate::graph::LaplacianInfo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PerfectInfo,
    Augmented,
    AugmentedEps,
    ProjectedPerfect,
    ProjectedAugmented,
    ProjectedAugmentedEps,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::PerfectInfo,
        Variant::Augmented,
        Variant::AugmentedEps,
        Variant::ProjectedPerfect,
        Variant::ProjectedAugmented,
        Variant::ProjectedAugmentedEps,
    ];

    pub fn is_projected(self) -> bool {
        matches!(
            self,
            Variant::ProjectedPerfect | Variant::ProjectedAugmented | Variant::ProjectedAugmentedEps
        )
    }

    pub fn is_augmented(self) -> bool {
        !matches!(self, Variant::PerfectInfo | Variant::ProjectedPerfect)
    }

    pub fn uses_gain(self) -> bool {
        matches!(self, Variant::AugmentedEps | Variant::ProjectedAugmentedEps)
    }

    /// Where the `1/ε` gain goes when the config does not say.
    pub fn default_placement(self) -> GainPlacement {
        match self {
            Variant::ProjectedAugmentedEps => GainPlacement::ActionsAndEstimates,
            _ => GainPlacement::EstimatesOnly,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::PerfectInfo => "perfect-info",
            Variant::Augmented => "augmented",
            Variant::AugmentedEps => "augmented-eps",
            Variant::ProjectedPerfect => "projected-perfect",
            Variant::ProjectedAugmented => "projected-augmented",
            Variant::ProjectedAugmentedEps => "projected-augmented-eps",
        }
    }
}

/// Which rows of the augmented field carry the `1/ε` gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainPlacement {
    /// Only the estimate rows are sped up; action rows keep the unit
    /// Laplacian correction.
    EstimatesOnly,
    /// The Laplacian correction on action rows is scaled as well.
    ActionsAndEstimates,
}

/// Row gains applied to the Laplacian term of the augmented field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub action: f64,
    pub estimate: f64,
}

impl Gains {
    pub const UNIT: Gains = Gains {
        action: 1.0,
        estimate: 1.0,
    };

    pub fn from_eps_inv(eps_inv: f64, placement: GainPlacement) -> Result<Self> {
        check_gain(eps_inv)?;
        Ok(match placement {
            GainPlacement::EstimatesOnly => Gains {
                action: 1.0,
                estimate: eps_inv,
            },
            GainPlacement::ActionsAndEstimates => Gains {
                action: eps_inv,
                estimate: eps_inv,
            },
        })
    }
}

fn check_gain(eps_inv: f64) -> Result<()> {
    if !(eps_inv > 0.0 && eps_inv.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps_inv",
            reason: format!("the gain 1/ε must be positive and finite, got {eps_inv}"),
        });
    }
    Ok(())
}

fn check_graph(layout: &ActionLayout, lap: &LaplacianInfo) -> Result<()> {
    if lap.n_nodes() != layout.n_players() {
        return Err(Error::InvalidGraph(format!(
            "graph has {} nodes but the game has {} players",
            lap.n_nodes(),
            layout.n_players()
        )));
    }
    Ok(())
}

/// `ẋ = −F(x)`.
pub fn field_perfect<G: Game + ?Sized>(game: &G, x: &[f64]) -> Result<Vec<f64>> {
    let mut f = pseudo_gradient(game, x)?;
    f.iter_mut().for_each(|v| *v = -*v);
    Ok(f)
}

/// `ẋ = Π_Ω(x, −F(x))`.
pub fn field_projected_perfect<G: Game + ?Sized>(game: &G, set: &BoxSet, x: &[f64]) -> Result<Vec<f64>> {
    check_len("constraint set", game.layout().total(), set.dim())?;
    let v = field_perfect(game, x)?;
    set.tangent_projection(x, &v)
}

/// Stacked form `−Rᵀ F(x_aug) − (L ⊗ I_n) x_aug`.
pub fn field_augmented<G: Game + ?Sized>(game: &G, lap: &LaplacianInfo, x_aug: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x_aug.len()];
    augmented_into(game, lap, None, Gains::UNIT, x_aug, &mut out)?;
    Ok(out)
}

/// Two-timescale form: estimate rows carry the gain `1/ε`.
pub fn field_augmented_eps<G: Game + ?Sized>(
    game: &G,
    lap: &LaplacianInfo,
    x_aug: &[f64],
    eps_inv: f64,
) -> Result<Vec<f64>> {
    let gains = Gains::from_eps_inv(eps_inv, GainPlacement::EstimatesOnly)?;
    let mut out = vec![0.0; x_aug.len()];
    augmented_into(game, lap, None, gains, x_aug, &mut out)?;
    Ok(out)
}

/// Projected augmented field. Action rows are
/// `Π_Ω(x_i, −∇_i J_i(x^i) − (1/ε) R_i Σ_j (x^i − x^j))`, with the Laplacian
/// correction inside the projection; estimate rows are scaled by `1/ε` and
/// left unprojected. `eps_inv = 1` is the unscaled projected field.
pub fn field_projected_augmented<G: Game + ?Sized>(
    game: &G,
    lap: &LaplacianInfo,
    set: &BoxSet,
    x_aug: &[f64],
    eps_inv: f64,
) -> Result<Vec<f64>> {
    let gains = Gains::from_eps_inv(eps_inv, GainPlacement::ActionsAndEstimates)?;
    let mut out = vec![0.0; x_aug.len()];
    augmented_into(game, lap, Some(set), gains, x_aug, &mut out)?;
    Ok(out)
}

/// Shared stacked-form evaluator for every augmented variant.
pub fn augmented_into<G: Game + ?Sized>(
    game: &G,
    lap: &LaplacianInfo,
    set: Option<&BoxSet>,
    gains: Gains,
    x_aug: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = game.layout();
    let n = layout.total();
    check_graph(layout, lap)?;
    check_len("augmented state", layout.augmented_len(), x_aug.len())?;
    check_len("augmented field", x_aug.len(), out.len())?;

    lap.apply_augmented_into(x_aug, n, out)?;
    let mut grad = vec![0.0; n];
    extended_pseudo_gradient_into(game, x_aug, &mut grad)?;
    for i in 0..layout.n_players() {
        let own = layout.range(i);
        for (k, v) in out[i * n..(i + 1) * n].iter_mut().enumerate() {
            *v = if own.contains(&k) {
                -grad[k] - gains.action * *v
            } else {
                -gains.estimate * *v
            };
        }
    }

    if let Some(set) = set {
        project_action_rows(layout, set, x_aug, out)?;
    }
    Ok(())
}

/// Tangent-projects the action rows of an augmented velocity in place.
fn project_action_rows(layout: &ActionLayout, set: &BoxSet, x_aug: &[f64], out: &mut [f64]) -> Result<()> {
    let n = layout.total();
    check_len("constraint set", n, set.dim())?;
    for i in 0..layout.n_players() {
        for k in layout.range(i) {
            let idx = i * n + k;
            let (lo, hi) = (set.lo()[k], set.hi()[k]);
            let x = x_aug[idx];
            if !(x >= lo - ACTIVE_TOL && x <= hi + ACTIVE_TOL) {
                return Err(Error::OutsideSet {
                    index: k,
                    value: x,
                    lo,
                    hi,
                });
            }
            let v = out[idx];
            if (x <= lo + ACTIVE_TOL && v < 0.0) || (x >= hi - ACTIVE_TOL && v > 0.0) {
                out[idx] = 0.0;
            }
        }
    }
    Ok(())
}

/// Per-player split form, written independently of [`augmented_into`]:
///
/// `ẋ_i = −∇_i J_i(x_i, x^i_{−i}) − g_a R_i Σ_{j∈N_i}(x^i − x^j)`,
/// `ẋ^i_{−i} = −g_e S_i Σ_{j∈N_i}(x^i − x^j)`.
pub fn field_augmented_split<G: Game + ?Sized>(
    game: &G,
    lap: &LaplacianInfo,
    set: Option<&BoxSet>,
    gains: Gains,
    x_aug: &[f64],
) -> Result<Vec<f64>> {
    let layout = game.layout();
    let n = layout.total();
    check_graph(layout, lap)?;
    check_len("augmented state", layout.augmented_len(), x_aug.len())?;
    let mut out = vec![0.0; x_aug.len()];
    let mut disagreement = vec![0.0; n];
    for i in 0..layout.n_players() {
        let own_block = &x_aug[i * n..(i + 1) * n];
        disagreement.iter_mut().for_each(|v| *v = 0.0);
        for &j in lap.neighbors(i) {
            let other = &x_aug[j * n..(j + 1) * n];
            for ((d, a), b) in disagreement.iter_mut().zip(own_block).zip(other) {
                *d += a - b;
            }
        }
        let own = layout.range(i);
        let mut grad = vec![0.0; own.len()];
        game.partial_gradient(i, own_block, &mut grad)?;
        let mut action_velocity: Vec<f64> = own
            .clone()
            .zip(&grad)
            .map(|(k, g)| -g - gains.action * disagreement[k])
            .collect();
        if let Some(set) = set {
            let lo = &set.lo()[own.clone()];
            let hi = &set.hi()[own.clone()];
            let local = BoxSet::new(lo.to_vec(), hi.to_vec())?;
            action_velocity = local.tangent_projection(&own_block[own.clone()], &action_velocity)?;
        }
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            row[k] = if own.contains(&k) {
                action_velocity[k - own.start]
            } else {
                -gains.estimate * disagreement[k]
            };
        }
    }
    Ok(out)
}

/// Per-record quantities attached to a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// `‖(L ⊗ I) x_aug‖₂`; `None` for perfect-information runs.
    pub consensus_err: Option<f64>,
    /// Stationarity (or natural-map) residual of the current actions.
    pub ne_residual: f64,
    /// `‖x − x*‖∞` when a reference equilibrium is attached.
    pub ne_dist: Option<f64>,
    /// `½‖x_aug − 1 ⊗ x*‖²` when a reference equilibrium is attached.
    pub storage: Option<f64>,
}

/// A time-invariant vector field the integrators can step.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Whether the field is a projected one and must be stepped by
    /// step-then-clamp.
    fn is_projected(&self) -> bool {
        false
    }

    /// Restores feasibility of a state after an explicit step.
    fn clamp(&self, _x: &mut [f64]) {}

    /// Whether `x` is an admissible starting state.
    fn check_initial(&self, x: &[f64]) -> Result<()> {
        check_len("initial state", self.dim(), x.len())
    }

    fn diagnostics(&self, x: &[f64]) -> Result<Diagnostics> {
        let _ = x;
        Ok(Diagnostics::default())
    }

    /// Storage value alone, evaluated after every step when available.
    fn storage(&self, x: &[f64]) -> Result<Option<f64>> {
        let _ = x;
        Ok(None)
    }
}

/// A plain closure field `ẋ = f(x)`.
pub struct FnField<F> {
    dim: usize,
    f: F,
    set: Option<BoxSet>,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, set: None }
    }

    /// Tangent-projects the closure field onto `set`.
    pub fn projected(dim: usize, set: BoxSet, f: F) -> Self {
        Self {
            dim,
            f,
            set: Some(set),
        }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (self.f)(x, dx);
        if let Some(set) = &self.set {
            let v = set.tangent_projection(x, dx)?;
            dx.copy_from_slice(&v);
        }
        Ok(())
    }

    fn is_projected(&self) -> bool {
        self.set.is_some()
    }

    fn clamp(&self, x: &mut [f64]) {
        if let Some(set) = &self.set {
            set.project_in_place(x);
        }
    }

    fn check_initial(&self, x: &[f64]) -> Result<()> {
        check_len("initial state", self.dim, x.len())?;
        if let Some(set) = &self.set {
            set.tangent_projection(x, &vec![0.0; self.dim])?;
        }
        Ok(())
    }
}

/// A fully assembled dynamics: variant, game, graph, constraint set and an
/// optional reference equilibrium for diagnostics.
#[derive(Clone)]
pub struct DynamicsSpec {
    variant: Variant,
    eps_inv: f64,
    placement: GainPlacement,
    game: Arc<dyn Game>,
    laplacian: Option<LaplacianInfo>,
    set: Option<BoxSet>,
    selection: SelectionOps,
    reference: Option<Vec<f64>>,
}

impl std::fmt::Debug for DynamicsSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicsSpec")
            .field("variant", &self.variant)
            .field("eps_inv", &self.eps_inv)
            .field("placement", &self.placement)
            .field("layout", self.game.layout())
            .field("has_graph", &self.laplacian.is_some())
            .field("set", &self.set)
            .finish()
    }
}

impl DynamicsSpec {
    pub fn perfect(game: Arc<dyn Game>) -> Self {
        Self::build(Variant::PerfectInfo, game, None, None, 1.0, None).expect("perfect-info needs no graph or set")
    }

    pub fn projected_perfect(game: Arc<dyn Game>, set: BoxSet) -> Result<Self> {
        Self::build(Variant::ProjectedPerfect, game, None, Some(set), 1.0, None)
    }

    pub fn augmented(game: Arc<dyn Game>, lap: LaplacianInfo) -> Result<Self> {
        Self::build(Variant::Augmented, game, Some(lap), None, 1.0, None)
    }

    pub fn augmented_eps(game: Arc<dyn Game>, lap: LaplacianInfo, eps_inv: f64) -> Result<Self> {
        Self::build(Variant::AugmentedEps, game, Some(lap), None, eps_inv, None)
    }

    pub fn projected_augmented(game: Arc<dyn Game>, lap: LaplacianInfo, set: BoxSet) -> Result<Self> {
        Self::build(Variant::ProjectedAugmented, game, Some(lap), Some(set), 1.0, None)
    }

    pub fn projected_augmented_eps(game: Arc<dyn Game>, lap: LaplacianInfo, set: BoxSet, eps_inv: f64) -> Result<Self> {
        Self::build(Variant::ProjectedAugmentedEps, game, Some(lap), Some(set), eps_inv, None)
    }

    /// General constructor. `placement = None` picks the variant default.
    pub fn build(
        variant: Variant,
        game: Arc<dyn Game>,
        laplacian: Option<LaplacianInfo>,
        set: Option<BoxSet>,
        eps_inv: f64,
        placement: Option<GainPlacement>,
    ) -> Result<Self> {
        check_gain(eps_inv)?;
        let layout = game.layout().clone();
        if variant.is_augmented() {
            match &laplacian {
                Some(lap) => check_graph(&layout, lap)?,
                None => {
                    return Err(Error::InvalidParameter {
                        name: "graph",
                        reason: format!("variant `{}` needs a communication graph", variant.name()),
                    })
                }
            }
        }
        if variant.is_projected() {
            match &set {
                Some(s) => {
                    check_len("constraint set", layout.total(), s.dim())?;
                    if !s.is_bounded() {
                        return Err(Error::InvalidParameter {
                            name: "box",
                            reason: format!(
                                "projected variant `{}` requires bounded action sets",
                                variant.name()
                            ),
                        });
                    }
                }
                None => {
                    return Err(Error::InvalidParameter {
                        name: "box",
                        reason: format!("projected variant `{}` requires a box", variant.name()),
                    })
                }
            }
        }
        if !variant.uses_gain() && eps_inv != 1.0 {
            return Err(Error::InvalidParameter {
                name: "eps_inv",
                reason: format!("variant `{}` has no 1/ε gain; use an -eps variant", variant.name()),
            });
        }
        Ok(Self {
            variant,
            eps_inv,
            placement: placement.unwrap_or(variant.default_placement()),
            selection: SelectionOps::new(&layout),
            game,
            laplacian: if variant.is_augmented() { laplacian } else { None },
            set: if variant.is_projected() { set } else { None },
            reference: None,
        })
    }

    /// Attaches the equilibrium used for distance and storage diagnostics.
    pub fn with_reference(mut self, x_star: Vec<f64>) -> Result<Self> {
        check_len("reference equilibrium", self.game.layout().total(), x_star.len())?;
        self.reference = Some(x_star);
        Ok(self)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn eps_inv(&self) -> f64 {
        self.eps_inv
    }

    pub fn placement(&self) -> GainPlacement {
        self.placement
    }

    pub fn gains(&self) -> Gains {
        Gains::from_eps_inv(self.eps_inv, self.placement).expect("gain validated at construction")
    }

    pub fn game(&self) -> &dyn Game {
        self.game.as_ref()
    }

    pub fn layout(&self) -> &ActionLayout {
        self.game.layout()
    }

    pub fn laplacian(&self) -> Option<&LaplacianInfo> {
        self.laplacian.as_ref()
    }

    pub fn constraint_set(&self) -> Option<&BoxSet> {
        self.set.as_ref()
    }

    pub fn selection(&self) -> &SelectionOps {
        &self.selection
    }

    pub fn reference(&self) -> Option<&[f64]> {
        self.reference.as_deref()
    }

    /// Real actions contained in a state of this dynamics.
    pub fn actions(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.variant.is_augmented() {
            self.selection.extract_actions(x)
        } else {
            check_len("state", self.layout().total(), x.len())?;
            Ok(x.to_vec())
        }
    }

    /// Split-form evaluation; same result as [`VectorField::eval`] up to
    /// round-off.
    pub fn eval_split(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.laplacian {
            Some(lap) => field_augmented_split(self.game.as_ref(), lap, self.set.as_ref(), self.gains(), x),
            None => {
                let mut dx = vec![0.0; x.len()];
                self.eval(x, &mut dx)?;
                Ok(dx)
            }
        }
    }
}

impl VectorField for DynamicsSpec {
    fn dim(&self) -> usize {
        if self.variant.is_augmented() {
            self.layout().augmented_len()
        } else {
            self.layout().total()
        }
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let game = self.game.as_ref();
        match (&self.laplacian, &self.set) {
            (Some(lap), set) => augmented_into(game, lap, set.as_ref(), self.gains(), x, dx),
            (None, set) => {
                let v = match set {
                    Some(s) => field_projected_perfect(game, s, x)?,
                    None => field_perfect(game, x)?,
                };
                check_len("field output", v.len(), dx.len())?;
                dx.copy_from_slice(&v);
                Ok(())
            }
        }
    }

    fn is_projected(&self) -> bool {
        self.variant.is_projected()
    }

    fn clamp(&self, x: &mut [f64]) {
        let Some(set) = &self.set else { return };
        if self.variant.is_augmented() {
            let n = self.layout().total();
            for (pos, &idx) in self.selection.action_indices().iter().enumerate() {
                let k = pos % n;
                debug_assert_eq!(idx % n, k);
                x[idx] = x[idx].clamp(set.lo()[k], set.hi()[k]);
            }
        } else {
            set.project_in_place(x);
        }
    }

    fn check_initial(&self, x: &[f64]) -> Result<()> {
        check_len("initial state", self.dim(), x.len())?;
        if let Some(set) = &self.set {
            let actions = self.actions(x)?;
            set.tangent_projection(&actions, &vec![0.0; actions.len()])?;
        }
        Ok(())
    }

    fn storage(&self, x: &[f64]) -> Result<Option<f64>> {
        let Some(x_star) = &self.reference else { return Ok(None) };
        Ok(Some(if self.variant.is_augmented() {
            analysis::storage_value(x, x_star)?
        } else {
            0.5 * x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }))
    }

    fn diagnostics(&self, x: &[f64]) -> Result<Diagnostics> {
        let actions = self.actions(x)?;
        let ne_residual = analysis::ne_residual(self.game.as_ref(), self.set.as_ref(), &actions)?;
        let consensus_err = match &self.laplacian {
            Some(lap) => Some(analysis::consensus_error(x, lap)?.l2),
            None => None,
        };
        let (ne_dist, storage) = match &self.reference {
            Some(x_star) => {
                let dist = actions
                    .iter()
                    .zip(x_star)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                (Some(dist), self.storage(x)?)
            }
            None => (None, None),
        };
        Ok(Diagnostics {
            consensus_err,
            ne_residual,
            ne_dist,
            storage,
        })
    }
}
