//! Operator-identity checks shared by the property suites and the
//! acceptance run.
#![allow(dead_code)]

use nashflow::game::{
    extended_pseudo_gradient, finite_difference_gradient, pseudo_gradient, ActionLayout, AugmentedState, DemandKind,
    FnGame, Game, QuadraticAggregativeGame, SelectionOps,
};
use nashflow::geometry::{in_normal_cone, moreau_split, tangent_projection, BoxSet};
use nashflow::graph::{build_laplacian, make_random_connected, LaplacianInfo};
use nashflow::solve::solve_ne_linear;
use std::sync::Arc;

use nashflow::dynamics::DynamicsSpec;
use nashflow::integrate::{integrate, IntegratorConfig, Scheme};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const TOL: f64 = 1e-12;
pub const CASES: u32 = 256;

pub fn layout_and_vec() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::vec(1usize..4, 1..6).prop_flat_map(|dims| {
        let total: usize = dims.iter().sum();
        let len = dims.len() * total;
        (Just(dims), prop::collection::vec(-1e3..1e3f64, len))
    })
}

pub fn graph() -> impl Strategy<Value = LaplacianInfo> {
    (2usize..10, 0.2..1.0f64, any::<u64>())
        .prop_map(|(n, p, seed)| build_laplacian(&make_random_connected(n, p, seed).unwrap()).unwrap())
}

pub fn graph_and_vec(block: std::ops::Range<usize>) -> impl Strategy<Value = (LaplacianInfo, usize, Vec<f64>)> {
    (graph(), block).prop_flat_map(|(lap, b)| {
        let len = lap.n_nodes() * b;
        (Just(lap), Just(b), prop::collection::vec(-10.0..10.0f64, len))
    })
}

pub fn cournot() -> impl Strategy<Value = QuadraticAggregativeGame> {
    (2usize..10, -50.0..50.0f64, prop::bool::ANY).prop_flat_map(|(n, d, quad)| {
        prop::collection::vec(0.0..100.0f64, n).prop_map(move |a| {
            let demand = if quad { DemandKind::Quadratic } else { DemandKind::Linear };
            QuadraticAggregativeGame::new(a, 500.0 + d, demand).unwrap()
        })
    })
}

pub fn dense_laplacian_kron(lap: &LaplacianInfo, block: usize, x: &[f64]) -> Vec<f64> {
    let n = lap.n_nodes();
    let dim = n * block;
    let mut out = vec![0.0; dim];
    for r in 0..dim {
        for c in 0..dim {
            let kron = if r % block == c % block { lap.entry(r / block, c / block) } else { 0.0 };
            out[r] += kron * x[c];
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn selection_identities_input() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    layout_and_vec()
}

pub fn selection_identities((dims, v): (Vec<usize>, Vec<f64>)) -> Result<(), TestCaseError> {
    let layout = ActionLayout::new(dims).unwrap();
    let sel = SelectionOps::new(&layout);
    let x = sel.extract_actions(&v).unwrap();
    let z = sel.extract_estimates(&v).unwrap();
    prop_assert_eq!(x.len() + z.len(), v.len());
    // R Rᵀ = I and S Sᵀ = I
    prop_assert!(max_abs_diff(&sel.extract_actions(&sel.embed_actions(&x).unwrap()).unwrap(), &x) <= TOL);
    prop_assert!(max_abs_diff(&sel.extract_estimates(&sel.embed_estimates(&z).unwrap()).unwrap(), &z) <= TOL);
    // R Sᵀ = 0 and S Rᵀ = 0
    prop_assert!(sel.extract_actions(&sel.embed_estimates(&z).unwrap()).unwrap().iter().all(|c| c.abs() <= TOL));
    prop_assert!(sel.extract_estimates(&sel.embed_actions(&x).unwrap()).unwrap().iter().all(|c| c.abs() <= TOL));
    // Rᵀ R + Sᵀ S = I
    let back: Vec<f64> = sel.embed_actions(&x).unwrap().iter()
        .zip(sel.embed_estimates(&z).unwrap())
        .map(|(a, b)| a + b)
        .collect();
    prop_assert!(max_abs_diff(&back, &v) <= TOL);
    prop_assert!(max_abs_diff(&sel.assemble(&x, &z).unwrap(), &v) <= TOL);
    // R (1 ⊗ x) = x
    let c = AugmentedState::consensus(&layout, &x).unwrap();
    prop_assert!(max_abs_diff(&sel.extract_actions(c.as_slice()).unwrap(), &x) <= TOL);
    Ok(())
}

pub fn moreau_decomposition_input() -> impl Strategy<Value = Vec<(f64, f64, f64, u8, f64)>> {
    prop::collection::vec((-5.0..5.0f64, 0.1..5.0f64, 0.0..1.0f64, 0u8..4, -10.0..10.0f64), 1..12)
}

pub fn moreau_decomposition(spec: Vec<(f64, f64, f64, u8, f64)>) -> Result<(), TestCaseError> {
    let lo: Vec<f64> = spec.iter().map(|s| s.0).collect();
    let hi: Vec<f64> = spec.iter().map(|s| s.0 + s.1).collect();
    // a quarter of the coordinates sit on each bound
    let x: Vec<f64> = spec.iter().map(|s| match s.3 {
        0 => s.0,
        1 => s.0 + s.1,
        _ => s.0 + s.2 * s.1,
    }).collect();
    let v: Vec<f64> = spec.iter().map(|s| s.4).collect();
    let set = BoxSet::new(lo, hi).unwrap();
    let (vt, vn) = moreau_split(&set, &x, &v).unwrap();
    let sum: Vec<f64> = vt.iter().zip(&vn).map(|(a, b)| a + b).collect();
    prop_assert!(max_abs_diff(&sum, &v) <= TOL);
    let inner: f64 = vt.iter().zip(&vn).map(|(a, b)| a * b).sum();
    prop_assert!(inner.abs() <= TOL);
    prop_assert!(in_normal_cone(&set, &x, &vn));
    prop_assert!(max_abs_diff(&tangent_projection(&set, &x, &v).unwrap(), &vt) <= TOL);
    // the tangent part keeps a small step feasible
    let step: Vec<f64> = x.iter().zip(&vt).map(|(a, b)| a + 1e-6 * b).collect();
    for ((s, l), h) in step.iter().zip(set.lo()).zip(set.hi()) {
        prop_assert!(*s >= l - TOL && *s <= h + TOL);
    }
    Ok(())
}

pub fn laplacian_nullspace_and_bounds_input() -> impl Strategy<Value = (LaplacianInfo, usize, Vec<f64>)> {
    graph_and_vec(1..2)
}

pub fn laplacian_nullspace_and_bounds((lap, _b, v): (LaplacianInfo, usize, Vec<f64>)) -> Result<(), TestCaseError> {
    let n = lap.n_nodes();
    let ones = vec![1.0; n];
    prop_assert!(lap.apply(&ones).unwrap().iter().all(|c| c.abs() <= TOL));
    let mean = v.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm2: f64 = w.iter().map(|x| x * x).sum();
    let q = lap.quadratic_form(&w).unwrap();
    let scale = TOL * (1.0 + norm2 * lap.lambda_n);
    prop_assert!(q >= lap.lambda2 * norm2 - scale);
    prop_assert!(q <= lap.lambda_n * norm2 + scale);
    prop_assert!(lap.lambda_n <= 2.0 * lap.d_star as f64 + TOL);
    prop_assert!(lap.lambda2 > 0.0);
    prop_assert!(lap.eigenvalues()[0].abs() <= 1e-10);
    // the quadratic form is the edge sum of squared differences
    let mut edge_sum = 0.0;
    for i in 0..n {
        for &j in lap.neighbors(i) {
            if i < j {
                edge_sum += (w[i] - w[j]).powi(2);
            }
        }
    }
    prop_assert!((q - edge_sum).abs() <= scale);
    Ok(())
}

pub fn kronecker_action_matches_dense_input() -> impl Strategy<Value = (LaplacianInfo, usize, Vec<f64>)> {
    graph_and_vec(1..5)
}

pub fn kronecker_action_matches_dense((lap, block, x): (LaplacianInfo, usize, Vec<f64>)) -> Result<(), TestCaseError> {
    let fast = lap.apply_augmented(&x, block).unwrap();
    let dense = dense_laplacian_kron(&lap, block, &x);
    prop_assert!(max_abs_diff(&fast, &dense) <= TOL * 100.0);
    // (L ⊗ I)(1 ⊗ y) = 0
    let y = &x[..block];
    let cons: Vec<f64> = (0..lap.n_nodes()).flat_map(|_| y.iter().copied()).collect();
    prop_assert!(lap.apply_augmented(&cons, block).unwrap().iter().all(|c| c.abs() <= TOL));
    Ok(())
}

pub fn extended_gradient_reduces_on_consensus_input() -> impl Strategy<Value = (QuadraticAggregativeGame, Vec<f64>)> {
    (cournot(), prop::collection::vec(-20.0..20.0f64, 10))
}

pub fn extended_gradient_reduces_on_consensus((game, seed): (QuadraticAggregativeGame, Vec<f64>)) -> Result<(), TestCaseError> {
    let n = game.n_players();
    let x = &seed[..n];
    let cons = AugmentedState::consensus(game.layout(), x).unwrap();
    let ext = extended_pseudo_gradient(&game, cons.as_slice()).unwrap();
    let f = pseudo_gradient(&game, x).unwrap();
    prop_assert!(max_abs_diff(&ext, &f) <= TOL * (1.0 + f.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    Ok(())
}

pub fn extended_gradient_reduces_for_vector_actions_input() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    layout_and_vec()
}

pub fn extended_gradient_reduces_for_vector_actions((dims, v): (Vec<usize>, Vec<f64>)) -> Result<(), TestCaseError> {
    let layout = ActionLayout::new(dims.clone()).unwrap();
    let total = layout.total();
    // J_i = ½‖x_i‖² + x_iᵀ (sum of the others' leading coordinates)
    let lay = layout.clone();
    let game = FnGame::new(dims, move |i, x| {
        let r = lay.range(i);
        let own: f64 = x[r.clone()].iter().map(|a| a * a).sum::<f64>() * 0.5;
        let others: f64 = (0..lay.n_players()).filter(|&j| j != i).map(|j| x[lay.range(j).start]).sum();
        own + x[r].iter().sum::<f64>() * others
    }).unwrap();
    let x = &v[..total];
    let cons = AugmentedState::consensus(&layout, x).unwrap();
    let ext = extended_pseudo_gradient(&game, cons.as_slice()).unwrap();
    let f = pseudo_gradient(&game, x).unwrap();
    prop_assert!(max_abs_diff(&ext, &f) <= TOL * (1.0 + f.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    Ok(())
}

pub fn finite_difference_matches_analytic_input() -> impl Strategy<Value = (QuadraticAggregativeGame, Vec<f64>)> {
    (cournot(), prop::collection::vec(0.0..20.0f64, 10))
}

pub fn finite_difference_matches_analytic((game, seed): (QuadraticAggregativeGame, Vec<f64>)) -> Result<(), TestCaseError> {
    let x = &seed[..game.n_players()];
    for i in 0..game.n_players() {
        let mut a = [0.0];
        let mut fd = [0.0];
        game.partial_gradient(i, x, &mut a).unwrap();
        finite_difference_gradient(&game, i, x, &mut fd).unwrap();
        prop_assert!((a[0] - fd[0]).abs() <= 1e-5 * (1.0 + a[0].abs()), "{} vs {}", a[0], fd[0]);
    }
    Ok(())
}

pub fn linear_solve_matches_dense_elimination_input() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(0.0..300.0f64, 2..25), 100.0..3000.0f64)
}

pub fn linear_solve_matches_dense_elimination((costs, d): (Vec<f64>, f64)) -> Result<(), TestCaseError> {
    let game = QuadraticAggregativeGame::new(costs.clone(), d, DemandKind::Linear).unwrap();
    let sol = solve_ne_linear(&game).unwrap();
    let dense = gaussian_solve_cournot(&costs, d);
    prop_assert!(max_abs_diff(&sol.x_star, &dense) <= 1e-9 * (1.0 + d));
    Ok(())
}

/// Solves `(I + 11ᵀ) x = D − a` by Gaussian elimination with partial pivoting.
pub fn gaussian_solve_cournot(a: &[f64], d: f64) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| if i == j { 2.0 } else { 1.0 }).collect();
            row.push(d - a[i]);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Exact flow of `ẋ = −((I + 11ᵀ) x + b)`: the mean-free part of
/// `x − x*` decays at rate 1, the mean direction at rate `N + 1`.
pub fn exact_example1(x0: &[f64], x_star: &[f64], t: f64) -> Vec<f64> {
    let n = x0.len() as f64;
    let e: Vec<f64> = x0.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let mean = e.iter().sum::<f64>() / n;
    e.iter()
        .zip(x_star)
        .map(|(ei, s)| s + (-t).exp() * (ei - mean) + (-(n + 1.0) * t).exp() * mean)
        .collect()
}

pub fn observed_orders(scheme: Scheme, dts: [f64; 3]) -> Vec<f64> {
    let game = QuadraticAggregativeGame::example1(20).unwrap();
    let x_star = solve_ne_linear(&game).unwrap().x_star;
    let spec = DynamicsSpec::perfect(Arc::new(game));
    let x0: Vec<f64> = (0..20).map(|i| (i as f64 * 7.0) % 20.0).collect();
    let t_end = 1.0;
    let exact = exact_example1(&x0, &x_star, t_end);
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let traj = integrate(&spec, &x0, &IntegratorConfig::new(scheme, dt, t_end)).unwrap();
            traj.final_state().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
