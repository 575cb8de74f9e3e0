//! Reference Nash-equilibrium solvers used to check where the dynamics end up.

use serde::Serialize;

use std::sync::Arc;

use crate::analysis::ne_residual;
use crate::dynamics::DynamicsSpec;
use crate::integrate::{integrate_until, IntegratorConfig, Scheme};
use crate::error::{check_len, Error, Result};
use crate::game::{pseudo_gradient, sample_constants, DemandKind, Game, QuadraticAggregativeGame, DEFAULT_SAMPLE_PAIRS};
use crate::geometry::{BoxSet, ConvexSet};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Linear,
    FixedPoint,
    GradientPlay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NESolution {
    pub x_star: Vec<f64>,
    /// `‖F(x*)‖∞`, or the natural-map residual `‖x* − P_Ω(x* − F(x*))‖∞`
    /// for the projected solver.
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// Closed-form solve of `(I + 11ᵀ) x = −b` for a linear-demand game, via
/// `(I + 11ᵀ)⁻¹ = I − 11ᵀ/(N + 1)`.
pub fn solve_ne_linear(game: &QuadraticAggregativeGame) -> Result<NESolution> {
    let b = game.affine_offset().ok_or_else(|| Error::InvalidParameter {
        name: "demand",
        reason: "the linear solve needs linear demand (affine pseudo-gradient)".into(),
    })?;
    debug_assert_eq!(game.demand(), DemandKind::Linear);
    let n = b.len() as f64;
    let shift = b.iter().sum::<f64>() / (n + 1.0);
    let x_star: Vec<f64> = b.iter().map(|bi| shift - bi).collect();
    let residual = ne_residual(game, None, &x_star)?;
    if !residual.is_finite() {
        return Err(Error::Singular);
    }
    Ok(NESolution {
        x_star,
        residual,
        method: SolveMethod::Linear,
        iterations: 0,
        converged: true,
    })
}

/// Step size `1 / θ̂` from the sampled Lipschitz constant of `F` on the box.
pub fn default_step<G: Game + ?Sized>(game: &G, set: &BoxSet) -> Result<f64> {
    let c = sample_constants(|x| pseudo_gradient(game, x), set, DEFAULT_SAMPLE_PAIRS, 0)?;
    if !(c.theta_hat > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: "sampled Lipschitz constant is zero; pass an explicit step".into(),
        });
    }
    Ok(1.0 / c.theta_hat)
}

/// Projection iteration `x ← P_Ω(x − γ F(x))` from the box centre.
/// Stops once both the step and the natural-map residual are at most `tol`.
pub fn solve_ne_projected<G: Game + ?Sized>(
    game: &G,
    set: &BoxSet,
    gamma: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NESolution> {
    solve_ne_projected_from(game, set, gamma, tol, max_iter, &set.center())
}

pub fn solve_ne_projected_from<G: Game + ?Sized>(
    game: &G,
    set: &BoxSet,
    gamma: Option<f64>,
    tol: f64,
    max_iter: usize,
    start: &[f64],
) -> Result<NESolution> {
    let n = game.layout().total();
    check_len("constraint set", n, set.dim())?;
    check_len("starting point", n, start.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    let gamma = match gamma {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be positive, got {g}"),
            })
        }
        None => default_step(game, set)?,
    };
    let mut x = start.to_vec();
    set.project_in_place(&mut x);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let f = pseudo_gradient(game, &x)?;
        let mut next: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a - gamma * b).collect();
        set.project_in_place(&mut next);
        let step = x.iter().zip(&next).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        x = next;
        iterations += 1;
        if !step.is_finite() {
            break;
        }
        if step <= tol && ne_residual(game, Some(set), &x)? <= tol {
            converged = true;
            break;
        }
    }
    let residual = ne_residual(game, Some(set), &x)?;
    Ok(NESolution {
        x_star: x,
        residual,
        method: SolveMethod::FixedPoint,
        iterations,
        converged,
    })
}

/// Limit of perfect-information gradient play `ẋ = −F(x)` from `start`,
/// integrated by RK4 until `‖F‖∞ < tol` or `t_end`.
pub fn solve_ne_gradient_play(game: Arc<dyn Game>, start: &[f64], dt: f64, t_end: f64, tol: f64) -> Result<NESolution> {
    let spec = DynamicsSpec::perfect(game);
    let cfg = IntegratorConfig::new(Scheme::Rk4, dt, t_end).record_every(100);
    let traj = integrate_until(&spec, start, &cfg, tol)?;
    if traj.diverged {
        return Err(Error::Evaluator(format!(
            "gradient play diverged at t = {}",
            traj.divergence.map_or(f64::NAN, |d| d.time)
        )));
    }
    let x_star = traj.final_state().to_vec();
    let residual = ne_residual(spec.game(), None, &x_star)?;
    Ok(NESolution {
        x_star,
        residual,
        method: SolveMethod::GradientPlay,
        iterations: traj.steps_taken,
        converged: residual < tol,
    })
}

/// Reference equilibrium for a Cournot game: closed form for linear demand
/// without constraints, projection iteration on a bounded box, and the
/// gradient-play limit from `start` otherwise.
pub fn reference_equilibrium(game: &QuadraticAggregativeGame, set: &BoxSet, start: &[f64]) -> Result<NESolution> {
    if set.is_bounded() {
        return solve_ne_projected(game, set, None, DEFAULT_TOL, DEFAULT_MAX_ITER);
    }
    if !set.is_unbounded() {
        return Err(Error::InvalidParameter {
            name: "box",
            reason: "half-bounded action sets are not supported by the reference solvers".into(),
        });
    }
    match game.demand() {
        DemandKind::Linear => solve_ne_linear(game),
        DemandKind::Quadratic => solve_ne_gradient_play(Arc::new(game.clone()), start, 1e-3, 1e3, 1e-12),
    }
}
