//! Convergence diagnostics and the connectivity / time-scale bounds.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::game::{pseudo_gradient, Game};
use crate::geometry::{BoxSet, ConvexSet};
use crate::graph::LaplacianInfo;
use crate::integrate::Trajectory;

/// Minimum R² for a reported exponential rate.
pub const RATE_MIN_R2: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusError {
    /// `‖(L ⊗ I) x_aug‖₂`
    pub l2: f64,
    /// max over players of `‖x^i − mean block‖∞`
    pub max_block_deviation: f64,
}

pub fn consensus_error(x_aug: &[f64], lap: &LaplacianInfo) -> Result<ConsensusError> {
    let n_nodes = lap.n_nodes();
    if n_nodes == 0 || x_aug.len() % n_nodes != 0 {
        return Err(Error::DimensionMismatch {
            context: "augmented state (not a multiple of the node count)",
            expected: n_nodes,
            got: x_aug.len(),
        });
    }
    let block = x_aug.len() / n_nodes;
    let lx = lap.apply_augmented(x_aug, block)?;
    let l2 = lx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut mean = vec![0.0; block];
    for b in x_aug.chunks(block) {
        for (m, v) in mean.iter_mut().zip(b) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_nodes as f64);
    let max_block_deviation = x_aug
        .chunks(block)
        .flat_map(|b| b.iter().zip(&mean).map(|(v, m)| (v - m).abs()))
        .fold(0.0, f64::max);
    Ok(ConsensusError {
        l2,
        max_block_deviation,
    })
}

/// `‖F(x)‖∞` without constraints, `‖x − P_Ω(x − F(x))‖∞` with them.
pub fn ne_residual<G: Game + ?Sized>(game: &G, set: Option<&BoxSet>, x: &[f64]) -> Result<f64> {
    let f = pseudo_gradient(game, x)?;
    Ok(match set {
        None => f.iter().fold(0.0, |m, v| m.max(v.abs())),
        Some(set) => {
            check_len("constraint set", x.len(), set.dim())?;
            let mut step: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a - b).collect();
            set.project_in_place(&mut step);
            x.iter().zip(&step).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
        }
    })
}

/// `V = ½‖x_aug − 1 ⊗ x*‖²`.
pub fn storage_value(x_aug: &[f64], x_star: &[f64]) -> Result<f64> {
    let n = x_star.len();
    if n == 0 || x_aug.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            context: "augmented state (not a multiple of the profile length)",
            expected: n,
            got: x_aug.len(),
        });
    }
    Ok(0.5
        * x_aug
            .chunks(n)
            .flat_map(|b| b.iter().zip(x_star).map(|(a, s)| (a - s) * (a - s)))
            .sum::<f64>())
}

pub fn storage_series(traj: &Trajectory, x_star: &[f64]) -> Result<Vec<f64>> {
    traj.states.iter().map(|x| storage_value(x, x_star)).collect()
}

/// Largest single-step increase of a series (0 if it never increases).
pub fn max_increase(series: &[f64]) -> f64 {
    series.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Monotonicity and Lipschitz constants fed to the bounds, with a label
/// naming the map each one was measured on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameConstants {
    pub mu: f64,
    pub mu_source: String,
    pub theta: f64,
    pub theta_source: String,
}

impl GameConstants {
    pub fn new(mu: f64, theta: f64) -> Self {
        Self {
            mu,
            mu_source: "given".into(),
            theta,
            theta_source: "given".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    /// λ₂ must strictly exceed this.
    pub value: f64,
    pub satisfied: bool,
}

impl Threshold {
    fn new(lambda2: f64, value: f64) -> Self {
        Self {
            value,
            satisfied: lambda2 > value,
        }
    }
}

/// Every connectivity and time-scale threshold, evaluated for one graph,
/// one set of game constants and one gain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lambda2: f64,
    pub lambda_n: f64,
    pub mu: f64,
    pub mu_source: String,
    pub theta: f64,
    pub theta_source: String,
    pub n_players: usize,
    pub d_star: usize,
    pub eps: f64,
    /// `θ²/μ + θ`
    pub asymptotic: Threshold,
    /// `N θ²/μ + θ`
    pub exponential: Threshold,
    /// `ε (θ²/μ + θ)`
    pub eps_scaled: Threshold,
    /// `λ₂ μ / (N √N (θ + μ)(θ + λ_N))`
    pub eps_star: f64,
    /// Same with `λ_N` replaced by its degree bound `2 d*`.
    pub eps_star_degree: f64,
    pub eps_below_eps_star: bool,
    /// `ε √N (θ/μ + 1)(θ + 2 d*)`, the short form.
    pub two_timescale_stated: Threshold,
    /// `ε N √N (θ/μ + 1)(θ + 2 d*)`, the long form; differs by a factor `N`.
    pub two_timescale_derived: Threshold,
}

pub fn bound_report(constants: &GameConstants, lap: &LaplacianInfo, n_players: usize, eps_inv: f64) -> Result<BoundReport> {
    bound_report_from_spectrum(constants, lap.lambda2, lap.lambda_n, lap.d_star, n_players, eps_inv)
}

/// [`bound_report`] from raw spectral data instead of a Laplacian.
pub fn bound_report_from_spectrum(
    constants: &GameConstants,
    lambda2: f64,
    lambda_n: f64,
    d_star: usize,
    n_players: usize,
    eps_inv: f64,
) -> Result<BoundReport> {
    let GameConstants {
        mu,
        theta,
        ref mu_source,
        ref theta_source,
    } = *constants;
    let named: [(&'static str, f64); 3] = [("mu", mu), ("theta", theta), ("eps_inv", eps_inv)];
    for (name, v) in named {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be positive and finite, got {v}"),
            });
        }
    }
    if n_players == 0 {
        return Err(Error::InvalidParameter {
            name: "n_players",
            reason: "must be positive".into(),
        });
    }
    if !(lambda2 >= 0.0 && lambda_n >= lambda2 && lambda_n.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "spectrum",
            reason: format!("need 0 <= lambda2 <= lambda_n, got {lambda2} and {lambda_n}"),
        });
    }
    let n = n_players as f64;
    let sqrt_n = n.sqrt();
    let eps = 1.0 / eps_inv;
    let base = theta * theta / mu + theta;
    let two_d = 2.0 * d_star as f64;
    let eps_star = lambda2 * mu / (n * sqrt_n * (theta + mu) * (theta + lambda_n));
    let eps_star_degree = lambda2 * mu / (n * sqrt_n * (theta + mu) * (theta + two_d));
    let stated = eps * sqrt_n * (theta / mu + 1.0) * (theta + two_d);
    Ok(BoundReport {
        lambda2,
        lambda_n,
        mu,
        mu_source: mu_source.clone(),
        theta,
        theta_source: theta_source.clone(),
        n_players,
        d_star,
        eps,
        asymptotic: Threshold::new(lambda2, base),
        exponential: Threshold::new(lambda2, n * theta * theta / mu + theta),
        eps_scaled: Threshold::new(lambda2, eps * base),
        eps_star,
        eps_star_degree,
        eps_below_eps_star: eps < eps_star,
        two_timescale_stated: Threshold::new(lambda2, stated),
        two_timescale_derived: Threshold::new(lambda2, n * stated),
    })
}

/// Least-squares fit of `log V(t) ≈ c − r t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub final_time: f64,
    pub diverged: bool,
    pub final_ne_distance: Option<f64>,
    pub final_residual: Option<f64>,
    pub final_consensus_error: Option<f64>,
    pub final_storage: Option<f64>,
    pub max_storage_increase: Option<f64>,
    pub rate: Option<RateFit>,
    /// Set when a stopping threshold was requested.
    pub threshold_met: Option<bool>,
}

/// Summarizes a trajectory against the reference equilibrium `x_star`.
pub fn convergence_summary(traj: &Trajectory, x_star: &[f64]) -> Result<ConvergenceSummary> {
    let last = traj
        .diagnostics
        .last()
        .ok_or_else(|| Error::InvalidParameter {
            name: "trajectory",
            reason: "empty trajectory".into(),
        })?;
    let final_state = traj.states.last().expect("states and diagnostics have equal length");
    // augmented states carry their action distance in the diagnostics
    let final_ne_distance = if traj.diverged {
        None
    } else if final_state.len() == x_star.len() {
        Some(final_state.iter().zip(x_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    } else {
        last.ne_dist
    };
    let storage: Option<Vec<f64>> = traj.diagnostics.iter().map(|d| d.storage).collect();
    let (rate, max_storage_increase) = match (&storage, traj.diverged) {
        (Some(s), false) => (fit_rate(&traj.times, s), Some(max_increase(s))),
        _ => (None, None),
    };
    Ok(ConvergenceSummary {
        final_time: *traj.times.last().unwrap(),
        diverged: traj.diverged,
        final_ne_distance,
        final_residual: (!traj.diverged).then_some(last.ne_residual),
        final_consensus_error: if traj.diverged { None } else { last.consensus_err },
        final_storage: if traj.diverged { None } else { last.storage },
        max_storage_increase,
        rate,
        threshold_met: traj.threshold.map(|_| traj.stop == crate::integrate::StopReason::Threshold),
    })
}

/// Fits on the last half of the records; `None` unless V decreases there,
/// stays positive, and the fit reaches [`RATE_MIN_R2`].
pub fn fit_rate(times: &[f64], storage: &[f64]) -> Option<RateFit> {
    let start = storage.len() / 2;
    let (t, v) = (&times[start..], &storage[start..]);
    if t.len() < 3 || v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return None;
    }
    if v.last()? >= v.first()? {
        return None;
    }
    let y: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let m = t.len() as f64;
    let tm = t.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym) * (b - ym)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = sxy * sxy / (sxx * syy);
    (r_squared >= RATE_MIN_R2).then_some(RateFit {
        rate: -slope,
        r_squared,
    })
}
