//! Constraint sets: Euclidean projection, tangent-cone projection and the
//! Moreau split of a direction into tangent and normal parts.
//!
//! Only boxes are provided. Everything the dynamics need goes through
//! [`ConvexSet`], so other closed convex sets can be slotted in.

use crate::error::{check_len, Error, Result};

/// Absolute tolerance for deciding a bound is active.
pub const ACTIVE_TOL: f64 = 1e-12;

/// Operations the projected dynamics need from a closed convex set.
pub trait ConvexSet {
    fn dim(&self) -> usize;

    /// Nearest point of the set, written into `x`.
    fn project_in_place(&self, x: &mut [f64]);

    /// Projection of `v` onto the tangent cone at `x`.
    fn tangent_projection(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>>;

    fn contains(&self, x: &[f64], tol: f64) -> bool;
}

/// Per-coordinate interval product `[lo_k, hi_k]`; infinite ends allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len("box bounds", lo.len(), hi.len())?;
        for (k, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidParameter {
                    name: "box",
                    reason: format!("coordinate {}: lower bound {l} exceeds upper bound {h}", k + 1),
                });
            }
        }
        Ok(Self { lo, hi })
    }

    /// Same interval on every coordinate.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// The whole space `R^dim`.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|b| b.is_finite())
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo.iter().all(|&l| l == f64::NEG_INFINITY) && self.hi.iter().all(|&h| h == f64::INFINITY)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| match (l.is_finite(), h.is_finite()) {
                (true, true) => 0.5 * (l + h),
                (true, false) => l,
                (false, true) => h,
                (false, false) => 0.0,
            })
            .collect()
    }

    fn check_inside(&self, x: &[f64]) -> Result<()> {
        check_len("box point", self.dim(), x.len())?;
        for (k, &xk) in x.iter().enumerate() {
            if !(xk >= self.lo[k] - ACTIVE_TOL && xk <= self.hi[k] + ACTIVE_TOL) {
                return Err(Error::OutsideSet {
                    index: k,
                    value: xk,
                    lo: self.lo[k],
                    hi: self.hi[k],
                });
            }
        }
        Ok(())
    }
}

impl ConvexSet for BoxSet {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn project_in_place(&self, x: &mut [f64]) {
        for ((xk, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *xk = xk.clamp(l, h);
        }
    }

    fn tangent_projection(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_inside(x)?;
        check_len("tangent direction", self.dim(), v.len())?;
        Ok(x.iter()
            .zip(v)
            .enumerate()
            .map(|(k, (&xk, &vk))| {
                let at_lo = xk <= self.lo[k] + ACTIVE_TOL;
                let at_hi = xk >= self.hi[k] - ACTIVE_TOL;
                if (at_lo && vk < 0.0) || (at_hi && vk > 0.0) {
                    0.0
                } else {
                    vk
                }
            })
            .collect())
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&xk, (&l, &h))| xk >= l - tol && xk <= h + tol)
    }
}

/// `P_Ω(x)`: nearest point of `set` to `x`.
pub fn project_point<S: ConvexSet + ?Sized>(set: &S, x: &[f64]) -> Result<Vec<f64>> {
    check_len("projected point", set.dim(), x.len())?;
    let mut out = x.to_vec();
    set.project_in_place(&mut out);
    Ok(out)
}

/// `Π_Ω(x, v)`: the tangent-cone projection of `v` at `x ∈ Ω`.
pub fn tangent_projection<S: ConvexSet + ?Sized>(set: &S, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    set.tangent_projection(x, v)
}

/// Moreau split `v = v_T + v_N` with `v_T` in the tangent cone at `x`,
/// `v_N` in the normal cone, and `v_Tᵀ v_N = 0`.
pub fn moreau_split<S: ConvexSet + ?Sized>(set: &S, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let vt = set.tangent_projection(x, v)?;
    let vn = v.iter().zip(&vt).map(|(a, b)| a - b).collect();
    Ok((vt, vn))
}

/// True when `n` lies in the normal cone of the box at `x`: each nonzero
/// component must push outward through an active bound.
pub fn in_normal_cone(set: &BoxSet, x: &[f64], n: &[f64]) -> bool {
    x.iter().zip(n).enumerate().all(|(k, (&xk, &nk))| {
        if nk == 0.0 {
            true
        } else if nk < 0.0 {
            xk <= set.lo[k] + ACTIVE_TOL
        } else {
            xk >= set.hi[k] - ACTIVE_TOL
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn clamp_examples() {
        let b = BoxSet::uniform(1, 0.0, 200.0).unwrap();
        assert_eq!(project_point(&b, &[250.0]).unwrap(), vec![200.0]);
        assert_eq!(project_point(&b, &[17.5]).unwrap(), vec![17.5]);
        let b2 = BoxSet::uniform(2, 0.0, 1.0).unwrap();
        assert_eq!(project_point(&b2, &[-1.0, 0.5]).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn tangent_examples() {
        let b = BoxSet::uniform(1, 0.0, 20.0).unwrap();
        assert_eq!(tangent_projection(&b, &[0.0], &[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(tangent_projection(&b, &[0.0], &[3.0]).unwrap(), vec![3.0]);
        assert_eq!(tangent_projection(&b, &[7.0], &[-3.0]).unwrap(), vec![-3.0]);
        let b2 = BoxSet::uniform(2, 0.0, 20.0).unwrap();
        assert_eq!(
            tangent_projection(&b2, &[0.0, 20.0], &[-1.0, -1.0]).unwrap(),
            vec![0.0, -1.0]
        );
        assert!(tangent_projection(&b, &[21.0], &[1.0]).is_err());
    }

    /// Tangent cone at a box corner/face is itself a box of half-lines; the
    /// projection onto it is found here by enumerating which active
    /// coordinates are pinned to zero and keeping the feasible candidate
    /// closest to `v`.
    fn tangent_by_face_enumeration(b: &BoxSet, x: &[f64], v: &[f64]) -> Vec<f64> {
        let active: Vec<(usize, f64)> = x
            .iter()
            .enumerate()
            .filter_map(|(k, &xk)| {
                if xk <= b.lo()[k] + ACTIVE_TOL {
                    Some((k, 1.0))
                } else if xk >= b.hi()[k] - ACTIVE_TOL {
                    Some((k, -1.0))
                } else {
                    None
                }
            })
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..(1u32 << active.len()) {
            let mut cand = v.to_vec();
            for (bit, &(k, _)) in active.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    cand[k] = 0.0;
                }
            }
            // feasible directions satisfy sign * d_k >= 0 on active coordinates
            if active.iter().all(|&(k, s)| s * cand[k] >= 0.0) {
                let d: f64 = cand.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
                if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                    best = Some((d, cand));
                }
            }
        }
        best.unwrap().1
    }

    #[test]
    fn tangent_matches_face_enumeration() {
        let b = BoxSet::uniform(3, 0.0, 20.0).unwrap();
        let pts = [[0.0, 20.0, 5.0], [0.0, 0.0, 0.0], [20.0, 3.0, 20.0]];
        let dirs = [[-1.0, -1.0, 2.0], [1.0, -2.0, -0.5], [0.3, 0.1, 4.0]];
        for x in &pts {
            for v in &dirs {
                let fast = tangent_projection(&b, x, v).unwrap();
                assert_eq!(fast, tangent_by_face_enumeration(&b, x, v));
            }
        }
    }

    #[test]
    fn moreau_examples() {
        let b = BoxSet::uniform(2, 0.0, 1.0).unwrap();
        let (vt, vn) = moreau_split(&b, &[0.5, 0.5], &[3.0, -2.0]).unwrap();
        assert_eq!(vt, vec![3.0, -2.0]);
        assert_eq!(vn, vec![0.0, 0.0]);

        let half = BoxSet::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        let (vt, vn) = moreau_split(&half, &[0.0], &[-5.0]).unwrap();
        assert_eq!((vt, vn.clone()), (vec![0.0], vec![-5.0]));
        assert!(in_normal_cone(&half, &[0.0], &vn));
        assert_eq!(dot(&[0.0], &vn), 0.0);
    }

    #[test]
    fn box_validation() {
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxSet::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(BoxSet::unbounded(3).is_unbounded());
        assert!(!BoxSet::unbounded(3).is_bounded());
        assert_eq!(BoxSet::uniform(2, 0.0, 200.0).unwrap().center(), vec![100.0, 100.0]);
    }
}
