//! Games, pseudo-gradients, the augmented (action + estimates) state and the
//! selection maps between them.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::geometry::BoxSet;

/// Default number of sampled pairs for the monotonicity/Lipschitz estimators.
pub const DEFAULT_SAMPLE_PAIRS: usize = 2000;

/// Offsets of each player's action block inside a profile in `R^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl ActionLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: "a game needs at least one player".into(),
            });
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: format!("player {} has an empty action space", i + 1),
            });
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Ok(Self {
            dims,
            offsets,
            total,
        })
    }

    /// One scalar action per player.
    pub fn scalar(n_players: usize) -> Result<Self> {
        Self::new(vec![1; n_players])
    }

    pub fn n_players(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `n = Σ n_i`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, player: usize) -> Range<usize> {
        self.offsets[player]..self.offsets[player] + self.dims[player]
    }

    /// Length of the augmented state, `N · n`.
    pub fn augmented_len(&self) -> usize {
        self.n_players() * self.total
    }
}

/// An `N`-player game with player-wise costs `J_i(x)` over the full profile.
///
/// Evaluators must be pure; the dynamics call them from several threads.
pub trait Game: Send + Sync {
    fn layout(&self) -> &ActionLayout;

    fn cost(&self, player: usize, profile: &[f64]) -> Result<f64>;

    /// `∇_i J_i(x)`: gradient of player `i`'s cost in its own action,
    /// written into `out` (length `n_i`). Falls back to central differences.
    fn partial_gradient(&self, player: usize, profile: &[f64], out: &mut [f64]) -> Result<()> {
        finite_difference_gradient(self, player, profile, out)
    }

    /// Whether [`Game::partial_gradient`] is analytic rather than the
    /// finite-difference fallback.
    fn has_analytic_gradient(&self) -> bool {
        false
    }

    fn n_players(&self) -> usize {
        self.layout().n_players()
    }
}

/// Central differences of `J_i` in player `i`'s own coordinates with step
/// `h = 1e-6 · max(1, ‖x‖)`.
pub fn finite_difference_gradient<G: Game + ?Sized>(
    game: &G,
    player: usize,
    profile: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let layout = game.layout();
    check_len("profile", layout.total(), profile.len())?;
    let range = layout.range(player);
    check_len("partial gradient", range.len(), out.len())?;
    let norm = profile.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = 1e-6 * norm.max(1.0);
    let mut work = profile.to_vec();
    for (slot, k) in out.iter_mut().zip(range) {
        let orig = work[k];
        work[k] = orig + h;
        let up = game.cost(player, &work)?;
        work[k] = orig - h;
        let down = game.cost(player, &work)?;
        work[k] = orig;
        *slot = (up - down) / (2.0 * h);
    }
    Ok(())
}

/// Demand price shape for [`QuadraticAggregativeGame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandKind {
    /// `f(x) = D − Σ x_j`
    Linear,
    /// `f(x) = D − Σ x_j²`
    Quadratic,
}

/// Cournot competition with linear production cost:
/// `J_i(x) = a_i x_i − x_i f(x)`, one scalar action per player.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticAggregativeGame {
    layout: ActionLayout,
    linear_cost: Vec<f64>,
    intercept: f64,
    demand: DemandKind,
}

impl QuadraticAggregativeGame {
    pub fn new(linear_cost: Vec<f64>, intercept: f64, demand: DemandKind) -> Result<Self> {
        let layout = ActionLayout::scalar(linear_cost.len())?;
        if !intercept.is_finite() || linear_cost.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "coefficients",
                reason: "cost coefficients and demand intercept must be finite".into(),
            });
        }
        Ok(Self {
            layout,
            linear_cost,
            intercept,
            demand,
        })
    }

    /// `a_i = 20 + 10(i−1)`, `f = 2200 − Σx`.
    pub fn example1(n_players: usize) -> Result<Self> {
        Self::new(arithmetic(n_players, 20.0, 10.0), 2200.0, DemandKind::Linear)
    }

    /// `a_i = 10 + 4(i−1)`, `f = 600 − Σx²`.
    pub fn example2(n_players: usize) -> Result<Self> {
        Self::new(arithmetic(n_players, 10.0, 4.0), 600.0, DemandKind::Quadratic)
    }

    /// `a_i = 20 + 40(i−1)`, `f = 1200 − Σx`.
    pub fn example3(n_players: usize) -> Result<Self> {
        Self::new(arithmetic(n_players, 20.0, 40.0), 1200.0, DemandKind::Linear)
    }

    pub fn linear_cost(&self) -> &[f64] {
        &self.linear_cost
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn demand(&self) -> DemandKind {
        self.demand
    }

    pub fn demand_price(&self, x: &[f64]) -> f64 {
        match self.demand {
            DemandKind::Linear => self.intercept - x.iter().sum::<f64>(),
            DemandKind::Quadratic => self.intercept - x.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    /// For linear demand `F(x) = (I + 11ᵀ) x + b` with `b_i = a_i − D`.
    pub fn affine_offset(&self) -> Option<Vec<f64>> {
        (self.demand == DemandKind::Linear)
            .then(|| self.linear_cost.iter().map(|a| a - self.intercept).collect())
    }
}

fn arithmetic(n: usize, first: f64, step: f64) -> Vec<f64> {
    (0..n).map(|i| first + step * i as f64).collect()
}

impl Game for QuadraticAggregativeGame {
    fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    fn cost(&self, player: usize, profile: &[f64]) -> Result<f64> {
        check_len("profile", self.layout.total(), profile.len())?;
        let xi = profile[player];
        Ok(self.linear_cost[player] * xi - xi * self.demand_price(profile))
    }

    fn partial_gradient(&self, player: usize, profile: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("profile", self.layout.total(), profile.len())?;
        check_len("partial gradient", 1, out.len())?;
        let xi = profile[player];
        let own = match self.demand {
            DemandKind::Linear => xi,
            DemandKind::Quadratic => 2.0 * xi * xi,
        };
        out[0] = self.linear_cost[player] - self.demand_price(profile) + own;
        Ok(())
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }
}

type CostFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync;

/// A game built from closures. Without a gradient closure the
/// finite-difference fallback is used.
#[derive(Clone)]
pub struct FnGame {
    layout: ActionLayout,
    cost: Arc<CostFn>,
    grad: Option<Arc<GradFn>>,
}

impl FnGame {
    pub fn new(dims: Vec<usize>, cost: impl Fn(usize, &[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Ok(Self {
            layout: ActionLayout::new(dims)?,
            cost: Arc::new(cost),
            grad: None,
        })
    }

    pub fn with_gradient(mut self, grad: impl Fn(usize, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }
}

impl fmt::Debug for FnGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnGame")
            .field("layout", &self.layout)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl Game for FnGame {
    fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    fn cost(&self, player: usize, profile: &[f64]) -> Result<f64> {
        check_len("profile", self.layout.total(), profile.len())?;
        let c = (self.cost)(player, profile);
        if c.is_nan() {
            return Err(Error::Evaluator(format!("cost of player {} is NaN", player + 1)));
        }
        Ok(c)
    }

    fn partial_gradient(&self, player: usize, profile: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.grad {
            Some(g) => {
                check_len("profile", self.layout.total(), profile.len())?;
                check_len("partial gradient", self.layout.dims()[player], out.len())?;
                g(player, profile, out);
                Ok(())
            }
            None => finite_difference_gradient(self, player, profile, out),
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }
}

/// `F(x) = (∇_1 J_1(x), …, ∇_N J_N(x))`.
pub fn pseudo_gradient<G: Game + ?Sized>(game: &G, x: &[f64]) -> Result<Vec<f64>> {
    let layout = game.layout();
    check_len("profile", layout.total(), x.len())?;
    let mut out = vec![0.0; layout.total()];
    for i in 0..layout.n_players() {
        game.partial_gradient(i, x, &mut out[layout.range(i)])?;
    }
    Ok(out)
}

/// `F(x_aug) = (∇_1 J_1(x^1), …, ∇_N J_N(x^N))`: player `i`'s partial
/// gradient at its own estimate block.
pub fn extended_pseudo_gradient<G: Game + ?Sized>(game: &G, x_aug: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; game.layout().total()];
    extended_pseudo_gradient_into(game, x_aug, &mut out)?;
    Ok(out)
}

pub fn extended_pseudo_gradient_into<G: Game + ?Sized>(game: &G, x_aug: &[f64], out: &mut [f64]) -> Result<()> {
    let layout = game.layout();
    let n = layout.total();
    check_len("augmented state", layout.augmented_len(), x_aug.len())?;
    check_len("extended pseudo-gradient", n, out.len())?;
    for i in 0..layout.n_players() {
        game.partial_gradient(i, &x_aug[i * n..(i + 1) * n], &mut out[layout.range(i)])?;
    }
    Ok(())
}

/// Stacked estimate vectors `x^1, …, x^N`, each a full profile in `R^n`.
/// Player `i`'s real action is the own slice `x^i_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    data: Vec<f64>,
    block: usize,
}

impl AugmentedState {
    pub fn new(layout: &ActionLayout, data: Vec<f64>) -> Result<Self> {
        check_len("augmented state", layout.augmented_len(), data.len())?;
        Ok(Self {
            data,
            block: layout.total(),
        })
    }

    /// `1_N ⊗ x`.
    pub fn consensus(layout: &ActionLayout, x: &[f64]) -> Result<Self> {
        check_len("profile", layout.total(), x.len())?;
        let data = (0..layout.n_players()).flat_map(|_| x.iter().copied()).collect();
        Ok(Self {
            data,
            block: layout.total(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn n_blocks(&self) -> usize {
        self.data.len() / self.block
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.block..(i + 1) * self.block]
    }

    /// All blocks equal within `tol` (∞-norm).
    pub fn is_consensus(&self, tol: f64) -> bool {
        let first = self.block(0);
        (1..self.n_blocks()).all(|i| self.block(i).iter().zip(first).all(|(a, b)| (a - b).abs() <= tol))
    }
}

/// Index maps for `R` (actions out of the augmented state) and `S`
/// (estimates out of the augmented state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionOps {
    actions: Vec<usize>,
    estimates: Vec<usize>,
    len: usize,
}

impl SelectionOps {
    pub fn new(layout: &ActionLayout) -> Self {
        let n = layout.total();
        let mut actions = Vec::with_capacity(n);
        let mut estimates = Vec::with_capacity(layout.augmented_len() - n);
        for i in 0..layout.n_players() {
            let own = layout.range(i);
            for k in 0..n {
                let idx = i * n + k;
                if own.contains(&k) {
                    actions.push(idx);
                } else {
                    estimates.push(idx);
                }
            }
        }
        Self {
            actions,
            estimates,
            len: layout.augmented_len(),
        }
    }

    /// Positions of the action coordinates inside the augmented state.
    pub fn action_indices(&self) -> &[usize] {
        &self.actions
    }

    pub fn estimate_indices(&self) -> &[usize] {
        &self.estimates
    }

    pub fn augmented_len(&self) -> usize {
        self.len
    }

    /// `x = R x_aug`.
    pub fn extract_actions(&self, x_aug: &[f64]) -> Result<Vec<f64>> {
        check_len("augmented state", self.len, x_aug.len())?;
        Ok(self.actions.iter().map(|&k| x_aug[k]).collect())
    }

    /// `z = S x_aug`.
    pub fn extract_estimates(&self, x_aug: &[f64]) -> Result<Vec<f64>> {
        check_len("augmented state", self.len, x_aug.len())?;
        Ok(self.estimates.iter().map(|&k| x_aug[k]).collect())
    }

    /// `Rᵀ x`.
    pub fn embed_actions(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("actions", self.actions.len(), x.len())?;
        let mut out = vec![0.0; self.len];
        for (&k, &v) in self.actions.iter().zip(x) {
            out[k] = v;
        }
        Ok(out)
    }

    /// `Sᵀ z`.
    pub fn embed_estimates(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("estimates", self.estimates.len(), z.len())?;
        let mut out = vec![0.0; self.len];
        for (&k, &v) in self.estimates.iter().zip(z) {
            out[k] = v;
        }
        Ok(out)
    }

    /// `Rᵀ x + Sᵀ z`.
    pub fn assemble(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.embed_actions(x)?;
        check_len("estimates", self.estimates.len(), z.len())?;
        for (&k, &v) in self.estimates.iter().zip(z) {
            out[k] = v;
        }
        Ok(out)
    }
}

/// Sample-based constants of a map `Φ` over a box.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SampledConstants {
    /// min over pairs of `(x−y)ᵀ(Φx−Φy)/‖x−y‖²`; an upper bound on the true μ.
    pub mu_hat: f64,
    /// max over pairs of `‖Φx−Φy‖/‖x−y‖`; a lower bound on the true θ.
    pub theta_hat: f64,
    pub pairs: usize,
}

/// Draws `n_samples` uniform pairs from `domain` and records the
/// monotonicity and Lipschitz ratios. Coincident pairs are skipped.
/// These are sample estimates, not certificates.
pub fn sample_constants<F>(field: F, domain: &BoxSet, n_samples: usize, seed: u64) -> Result<SampledConstants>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if n_samples < 2 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            reason: format!("need at least 2 sampled pairs, got {n_samples}"),
        });
    }
    if !domain.is_bounded() || domain.lo().iter().zip(domain.hi()).all(|(l, h)| l == h) {
        return Err(Error::InvalidParameter {
            name: "domain",
            reason: "sampling box must be bounded and non-degenerate".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        domain
            .lo()
            .iter()
            .zip(domain.hi())
            .map(|(&l, &h)| if l == h { l } else { rng.gen_range(l..h) })
            .collect()
    };
    let mut mu_hat = f64::INFINITY;
    let mut theta_hat: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..n_samples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let d2: f64 = dx.iter().map(|v| v * v).sum();
        if d2 == 0.0 {
            continue;
        }
        let fx = field(&x)?;
        let fy = field(&y)?;
        check_len("sampled field output", fx.len(), fy.len())?;
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        let inner: f64 = if df.len() == dx.len() {
            dx.iter().zip(&df).map(|(a, b)| a * b).sum()
        } else {
            f64::NAN
        };
        let df2: f64 = df.iter().map(|v| v * v).sum();
        mu_hat = mu_hat.min(inner / d2);
        theta_hat = theta_hat.max((df2 / d2).sqrt());
        pairs += 1;
    }
    Ok(SampledConstants {
        mu_hat,
        theta_hat,
        pairs,
    })
}

pub fn estimate_monotonicity<F>(field: F, domain: &BoxSet, n_samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    Ok(sample_constants(field, domain, n_samples, seed)?.mu_hat)
}

pub fn estimate_lipschitz<F>(field: F, domain: &BoxSet, n_samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    Ok(sample_constants(field, domain, n_samples, seed)?.theta_hat)
}
