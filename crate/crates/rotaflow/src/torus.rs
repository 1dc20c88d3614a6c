//! Lattice-exact arithmetic on the flat torus Y_d = ℝ^d/ℤ^d, identified with
//! the cube [0,1)^d.
//!
//! A point of ℝ^d is split into an exact integer winding (stored as `i64`)
//! and a fractional base point in [0,1)^d. Keeping the winding in integers —
//! never re-deriving it from a float position after the fact — is what makes
//! long-time drift measurements X(t,x)/t trustworthy: rotation vectors are
//! differences of windings divided by time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Projection results within this distance of 1.0 snap to 0.0 so the
/// `[0,1)` invariant stays testable with strict comparisons.
pub const WRAP_SNAP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TorusError {
    #[error("non-finite coordinate {value} at component {index}")]
    NonFinite { index: usize, value: f64 },
}

/// A point of the torus: every coordinate lies in [0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Project x ∈ ℝ^d onto the torus, component-wise x_i − ⌊x_i⌋.
    pub fn project(x: &[f64]) -> Result<TorusPoint, TorusError> {
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(TorusError::NonFinite { index: i, value: v });
            }
        }
        Ok(TorusPoint {
            coords: x.iter().map(|&v| wrap_unit(v).1).collect(),
        })
    }

    /// Construct from coordinates already known to lie in [0,1).
    /// Panics in debug builds if the range invariant is violated.
    pub fn from_unit_coords(coords: Vec<f64>) -> TorusPoint {
        debug_assert!(coords.iter().all(|&v| (0.0..1.0).contains(&v)));
        TorusPoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Split a finite real into (integer part, fraction in [0,1)).
///
/// Fractions within [`WRAP_SNAP`] of 1.0 are snapped to 0.0 with the integer
/// part bumped, so the returned fraction always satisfies `f < 1.0` strictly.
pub fn wrap_unit(x: f64) -> (i64, f64) {
    let k = x.floor();
    let f = x - k;
    if f >= 1.0 - WRAP_SNAP {
        (k as i64 + 1, 0.0)
    } else {
        (k as i64, f)
    }
}

/// A point of ℝ^d carrying its torus projection and exact winding data:
/// position = winding + base, with the identity holding by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedState {
    winding: Vec<i64>,
    base: TorusPoint,
}

impl LiftedState {
    /// Lift x ∈ ℝ^d into winding + fractional part.
    pub fn lift(x: &[f64]) -> Result<LiftedState, TorusError> {
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(TorusError::NonFinite { index: i, value: v });
            }
        }
        let mut winding = Vec::with_capacity(x.len());
        let mut coords = Vec::with_capacity(x.len());
        for &v in x {
            let (k, f) = wrap_unit(v);
            winding.push(k);
            coords.push(f);
        }
        Ok(LiftedState {
            winding,
            base: TorusPoint { coords },
        })
    }

    pub fn from_parts(winding: Vec<i64>, base: TorusPoint) -> LiftedState {
        debug_assert_eq!(winding.len(), base.dim());
        LiftedState { winding, base }
    }

    pub fn dim(&self) -> usize {
        self.winding.len()
    }

    pub fn winding(&self) -> &[i64] {
        &self.winding
    }

    pub fn base(&self) -> &TorusPoint {
        &self.base
    }

    /// The represented point of ℝ^d, reconstructed as winding + base.
    pub fn position(&self) -> Vec<f64> {
        self.winding
            .iter()
            .zip(self.base.coords())
            .map(|(&k, &f)| k as f64 + f)
            .collect()
    }

    /// Translate by an exact lattice vector κ ∈ ℤ^d: only the winding moves.
    pub fn translated(&self, kappa: &[i64]) -> LiftedState {
        let winding = self
            .winding
            .iter()
            .zip(kappa)
            .map(|(&k, &dk)| k + dk)
            .collect();
        LiftedState {
            winding,
            base: self.base.clone(),
        }
    }
}

/// Geodesic (Euclidean) distance on the torus:
/// min over κ ∈ {−1,0,1}^d of |p − q + κ|.
///
/// Components decouple for the Euclidean norm, so the minimisation is done
/// per axis; the 3^d-offset enumeration is kept in the tests as the oracle.
pub fn torus_distance(p: &TorusPoint, q: &TorusPoint) -> f64 {
    debug_assert_eq!(p.dim(), q.dim());
    p.coords()
        .iter()
        .zip(q.coords())
        .map(|(&a, &b)| {
            let d = (a - b).abs();
            let d = d.min(1.0 - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn project_identity() {
        let p = TorusPoint::project(&[0.0, 0.0]).unwrap();
        assert_eq!(p.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn project_floor_arithmetic() {
        let p = TorusPoint::project(&[1.25, -0.25]).unwrap();
        assert_eq!(p.coords(), &[0.25, 0.75]);
    }

    #[test]
    fn project_generic() {
        // direct floor evaluation: 3.7 - 3 = 0.7, -2.3 - (-3) = 0.7
        let p = TorusPoint::project(&[3.7, -2.3]).unwrap();
        assert!((p.coords()[0] - 0.7).abs() < 1e-15);
        assert!((p.coords()[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn project_rejects_non_finite() {
        assert!(TorusPoint::project(&[f64::NAN]).is_err());
        assert!(TorusPoint::project(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn project_snaps_near_one() {
        let p = TorusPoint::project(&[1.0 - 1e-13]).unwrap();
        assert_eq!(p.coords()[0], 0.0);
        let (k, f) = wrap_unit(2.0 - 1e-13);
        assert_eq!((k, f), (2, 0.0));
    }

    #[test]
    fn projection_idempotent() {
        for &x in &[3.7, -2.3, 0.999999, 1234.56789, -0.00001] {
            let once = TorusPoint::project(&[x]).unwrap();
            let twice = TorusPoint::project(once.coords()).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn distance_identity_and_wraparound() {
        let p = TorusPoint::project(&[0.1]).unwrap();
        let q = TorusPoint::project(&[0.9]).unwrap();
        assert_eq!(torus_distance(&p, &p), 0.0);
        assert!((torus_distance(&p, &q) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn distance_corner_case_2d() {
        // enumerate the 9 lattice offsets as the oracle
        let p = TorusPoint::project(&[0.05, 0.95]).unwrap();
        let q = TorusPoint::project(&[0.95, 0.05]).unwrap();
        let mut best = f64::INFINITY;
        for k1 in -1..=1 {
            for k2 in -1..=1 {
                let dx = p.coords()[0] - q.coords()[0] + k1 as f64;
                let dy = p.coords()[1] - q.coords()[1] + k2 as f64;
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        let d = torus_distance(&p, &q);
        assert!((d - best).abs() < 1e-15);
        assert!((d - 0.02f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lifted_state_roundtrip() {
        let s = LiftedState::lift(&[3.7, -2.3]).unwrap();
        assert_eq!(s.winding(), &[3, -3]);
        let pos = s.position();
        assert!((pos[0] - 3.7).abs() < 1e-15);
        assert!((pos[1] + 2.3).abs() < 1e-15);
        // integer part of position equals the stored winding
        for (p, &k) in pos.iter().zip(s.winding()) {
            assert_eq!(p.floor() as i64, k);
        }
    }

    proptest! {
        // Bit-exact lattice periodicity on representable inputs: dyadic
        // fractions plus integers are exact in f64.
        #[test]
        fn project_lattice_periodic(num in 0u32..1024, kappa in -100_000i64..100_000) {
            let x = num as f64 / 1024.0;
            let shifted = x + kappa as f64;
            let a = TorusPoint::project(&[x]).unwrap();
            let b = TorusPoint::project(&[shifted]).unwrap();
            prop_assert_eq!(a.coords()[0].to_bits(), b.coords()[0].to_bits());
        }

        #[test]
        fn distance_is_a_metric(
            a in prop::collection::vec(0.0f64..1.0, 2),
            b in prop::collection::vec(0.0f64..1.0, 2),
            c in prop::collection::vec(0.0f64..1.0, 2),
        ) {
            let pa = TorusPoint::project(&a).unwrap();
            let pb = TorusPoint::project(&b).unwrap();
            let pc = TorusPoint::project(&c).unwrap();
            let dab = torus_distance(&pa, &pb);
            let dba = torus_distance(&pb, &pa);
            let dac = torus_distance(&pa, &pc);
            let dcb = torus_distance(&pc, &pb);
            prop_assert!((dab - dba).abs() < 1e-15);
            prop_assert!(dab <= dac + dcb + 1e-12);
            prop_assert!(dab <= (2.0f64).sqrt() / 2.0 + 1e-15);
        }
    }
}
