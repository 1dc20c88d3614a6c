//! Rotation-vector and rotation-set estimation.
//!
//! The finite-time rotation vector ζ̂(T) = (X(T,x) − x)/T is read off the
//! lifted endpoint; the Herman rotation set is estimated by sweeping a grid
//! of initial conditions and classifying the sampled estimates as a
//! singleton {ζ}, the segment [0, ζ], or `other`. The classifier checks
//! collinearity, not coverage: the theory only guarantees {0, ζ} among the
//! limit points, and interior values may or may not be realized.

use crate::fields::{FieldError, FieldSpec};
use crate::integrate::{flow_with, IntegrateError, IntegratorConfig};
use crate::torus::{torus_distance, LiftedState, TorusPoint};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RotationError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("field `{0}` has no zero_set metadata")]
    MissingZeroSet(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
}

/// Finite-time rotation vector with convergence diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RotationEstimate {
    pub x0: Vec<f64>,
    pub zeta_hat: Vec<f64>,
    /// Averaging horizon actually used (the stall time when stalled).
    pub horizon: f64,
    /// |ζ̂(T) − ζ̂(T/2)|; `None` when the run stalled before T/2.
    pub cauchy_gap: Option<f64>,
    pub stalled: bool,
}

impl RotationEstimate {
    pub fn norm(&self) -> f64 {
        self.zeta_hat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// ζ̂ from the lifted endpoint, with the half-horizon Cauchy diagnostic.
pub fn rotation_vector(
    field: &FieldSpec,
    x0: &[f64],
    t_horizon: f64,
    config: &IntegratorConfig,
) -> Result<RotationEstimate, RotationError> {
    if !(t_horizon >= 1.0) {
        return Err(RotationError::BadParams(format!(
            "horizon must be >= 1, got {t_horizon}"
        )));
    }
    let start = LiftedState::lift(x0).map_err(IntegrateError::from)?;
    rotation_vector_lifted(field, &start, t_horizon, config)
}

fn rotation_vector_lifted(
    field: &FieldSpec,
    start: &LiftedState,
    t_horizon: f64,
    config: &IntegratorConfig,
) -> Result<RotationEstimate, RotationError> {
    let d = field.dim();
    let x0_pos = start.position();
    let half = t_horizon / 2.0;
    let mut half_state: Option<Vec<f64>> = None;
    let outcome = flow_with(field, start, t_horizon, config, half, |t, w, f| {
        if t > 0.0 && (t - half).abs() <= 1e-9 * t_horizon {
            half_state = Some(
                w.iter()
                    .zip(f)
                    .map(|(&k, &fr)| k as f64 + fr)
                    .collect::<Vec<f64>>(),
            );
        }
    })?;
    let t_used = outcome.end_time;
    let end_pos = outcome.end.position();
    let zeta_hat: Vec<f64> = if t_used == 0.0 {
        vec![0.0; d]
    } else {
        end_pos
            .iter()
            .zip(&x0_pos)
            .map(|(e, x)| (e - x) / t_used)
            .collect()
    };
    let cauchy_gap = half_state.map(|hp| {
        let mut sq = 0.0;
        for i in 0..d {
            let zh = (hp[i] - x0_pos[i]) / half;
            sq += (zeta_hat[i] - zh) * (zeta_hat[i] - zh);
        }
        sq.sqrt()
    });
    Ok(RotationEstimate {
        x0: x0_pos,
        zeta_hat,
        horizon: t_used,
        cauchy_gap,
        stalled: outcome.stall.is_some(),
    })
}

/// Shape of the sampled rotation set.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    Singleton { zeta: Vec<f64> },
    Segment { endpoint: Vec<f64> },
    Other,
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationSetEstimate {
    pub points: Vec<RotationEstimate>,
    /// Convex hull vertices of the estimates (exact for d <= 2; the full
    /// point set for d >= 3).
    pub hull: Vec<Vec<f64>>,
    pub classification: Classification,
    /// Max pairwise distance among the estimates.
    pub diameter: f64,
    /// Max distance of any estimate to the chord [0, endpoint].
    pub collinearity_defect: f64,
    pub tol_singleton: f64,
    pub tol_segment: f64,
}

/// Sweep parameters for [`rotation_set`].
#[derive(Debug, Clone, Serialize)]
pub struct RotationSetParams {
    /// Initial conditions per axis (>= 2).
    pub grid_resolution: usize,
    pub horizon: f64,
    /// Default 5e-3 · sup|b|: Birkhoff averages converge like O(1/T) at
    /// best, sized for T = 1e4.
    pub tol_singleton: Option<f64>,
    /// Default 1e-2 · |endpoint|.
    pub tol_segment: Option<f64>,
    /// Grid offset in cells; the default half-cell keeps initial conditions
    /// off measure-zero separatrices and zeros of ρ.
    pub grid_offset: f64,
}

impl RotationSetParams {
    pub fn new(grid_resolution: usize, horizon: f64) -> Self {
        RotationSetParams {
            grid_resolution,
            horizon,
            tol_singleton: None,
            tol_segment: None,
            grid_offset: 0.5,
        }
    }
}

/// Estimate the rotation set over a uniform grid of initial conditions and
/// classify it.
pub fn rotation_set(
    field: &FieldSpec,
    params: &RotationSetParams,
    config: &IntegratorConfig,
) -> Result<RotationSetEstimate, RotationError> {
    let d = field.dim();
    let res = params.grid_resolution;
    if res < 2 {
        return Err(RotationError::BadParams(
            "grid_resolution must be >= 2 per axis".into(),
        ));
    }
    let total = res.pow(d as u32);
    let offsets: Vec<Vec<f64>> = (0..total)
        .map(|mut flat| {
            let mut x = vec![0.0; d];
            for xi in x.iter_mut() {
                let i = flat % res;
                flat /= res;
                *xi = (i as f64 + params.grid_offset) / res as f64;
            }
            x
        })
        .collect();
    let points: Result<Vec<RotationEstimate>, RotationError> = offsets
        .par_iter()
        .map(|x0| rotation_vector(field, x0, params.horizon, config))
        .collect();
    let points = points?;
    classify(field, points, params)
}

fn classify(
    field: &FieldSpec,
    points: Vec<RotationEstimate>,
    params: &RotationSetParams,
) -> Result<RotationSetEstimate, RotationError> {
    let d = field.dim();
    let tol_singleton = params
        .tol_singleton
        .unwrap_or(5e-3 * field.sup_speed().max(f64::MIN_POSITIVE));

    let mut diameter = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let dist: f64 = a
                .zeta_hat
                .iter()
                .zip(&b.zeta_hat)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            diameter = diameter.max(dist);
        }
    }

    // segment endpoint: max-norm estimate among non-stalled points
    let endpoint = points
        .iter()
        .filter(|p| !p.stalled)
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .map(|p| p.zeta_hat.clone())
        .unwrap_or_else(|| vec![0.0; d]);
    let endpoint_norm: f64 = endpoint.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol_segment = params.tol_segment.unwrap_or(1e-2 * endpoint_norm);
    let collinearity_defect = points
        .iter()
        .map(|p| dist_to_segment(&p.zeta_hat, &endpoint))
        .fold(0.0f64, f64::max);

    let classification = if diameter <= tol_singleton {
        let mut zeta = vec![0.0; d];
        for p in &points {
            for (z, v) in zeta.iter_mut().zip(&p.zeta_hat) {
                *z += v;
            }
        }
        for z in zeta.iter_mut() {
            *z /= points.len() as f64;
        }
        Classification::Singleton { zeta }
    } else if collinearity_defect <= tol_segment {
        Classification::Segment {
            endpoint: endpoint.clone(),
        }
    } else {
        Classification::Other
    };

    let hull = match d {
        1 => hull_1d(&points),
        2 => convex_hull_2d(&points.iter().map(|p| p.zeta_hat.clone()).collect::<Vec<_>>()),
        _ => points.iter().map(|p| p.zeta_hat.clone()).collect(),
    };

    Ok(RotationSetEstimate {
        points,
        hull,
        classification,
        diameter,
        collinearity_defect,
        tol_singleton,
        tol_segment,
    })
}

/// Distance from p to the closed segment [0, e].
fn dist_to_segment(p: &[f64], e: &[f64]) -> f64 {
    let ee: f64 = e.iter().map(|v| v * v).sum();
    let t = if ee == 0.0 {
        0.0
    } else {
        (p.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / ee).clamp(0.0, 1.0)
    };
    p.iter()
        .zip(e)
        .map(|(a, b)| (a - t * b) * (a - t * b))
        .sum::<f64>()
        .sqrt()
}

fn hull_1d(points: &[RotationEstimate]) -> Vec<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points {
        lo = lo.min(p.zeta_hat[0]);
        hi = hi.max(p.zeta_hat[0]);
    }
    if lo == hi {
        vec![vec![lo]]
    } else {
        vec![vec![lo], vec![hi]]
    }
}

/// Andrew monotone chain; vertices in counter-clockwise order.
pub fn convex_hull_2d(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 2 {
        return pts.into_iter().map(|(x, y)| vec![x, y]).collect();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower
        .into_iter()
        .chain(upper)
        .map(|(x, y)| vec![x, y])
        .collect()
}

/// Signed-area containment check with tolerance, for the hull invariant.
pub fn hull_contains(hull: &[Vec<f64>], p: &[f64], tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => {
            let d: f64 = hull[0]
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d <= tol
        }
        2 => dist_to_chord(p, &hull[0], &hull[1]) <= tol,
        _ => {
            let n = hull.len();
            (0..n).all(|i| {
                let a = &hull[i];
                let b = &hull[(i + 1) % n];
                let cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                cr >= -tol
            })
        }
    }
}

fn dist_to_chord(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let e: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let q: Vec<f64> = p.iter().zip(a).map(|(x, y)| x - y).collect();
    let ee: f64 = e.iter().map(|v| v * v).sum();
    let t = if ee == 0.0 {
        0.0
    } else {
        (q.iter().zip(&e).map(|(u, v)| u * v).sum::<f64>() / ee).clamp(0.0, 1.0)
    };
    q.iter()
        .zip(&e)
        .map(|(u, v)| (u - t * v) * (u - t * v))
        .sum::<f64>()
        .sqrt()
}

/// One member of a perturbation sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepMember {
    pub n: u32,
    pub classification: Classification,
    /// The singleton value ζ_n when the member classifies as a singleton.
    pub zeta: Option<Vec<f64>>,
    pub diameter: f64,
    /// Set when the member fails the singleton hypothesis of the
    /// perturbation theorem.
    pub hypothesis_violated: bool,
}

/// Run the rotation-set estimator across a positive perturbation family
/// ρ_n Φ. Members that fail to classify as singletons are flagged — they
/// contradict the hypothesis under which the limit alternative is proved.
pub fn perturbation_sweep(
    family: impl Fn(u32) -> Result<FieldSpec, FieldError> + Sync,
    n_list: &[u32],
    params: &RotationSetParams,
    config: &IntegratorConfig,
) -> Result<Vec<SweepMember>, RotationError> {
    n_list
        .iter()
        .map(|&n| {
            let field = family(n)?;
            let set = rotation_set(&field, params, config)?;
            let (zeta, violated) = match &set.classification {
                Classification::Singleton { zeta } => (Some(zeta.clone()), false),
                _ => (None, true),
            };
            Ok(SweepMember {
                n,
                classification: set.classification,
                zeta,
                diameter: set.diameter,
                hypothesis_violated: violated,
            })
        })
        .collect()
}

/// Distance of a sampled orbit (both time directions) from the zero set.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitClosureReport {
    pub x0: Vec<f64>,
    pub min_distance_to_zero_set: f64,
    pub safety_margin: f64,
    pub qualifies: bool,
}

/// Sample the orbit of x₀ over [−T, T] and measure its torus distance to
/// the catalogued zeros of ρ. Orbits that stay clear of the zero set are
/// exactly those for which the rotation vector is guaranteed to converge to
/// the segment endpoint.
pub fn orbit_distance_report(
    field: &FieldSpec,
    x0: &[f64],
    t_horizon: f64,
    sample_every: f64,
    safety_margin: f64,
    config: &IntegratorConfig,
) -> Result<OrbitClosureReport, RotationError> {
    let zeros = field
        .zero_set()
        .ok_or_else(|| RotationError::MissingZeroSet(field.name().to_string()))?
        .to_vec();
    let start = LiftedState::lift(x0).map_err(IntegrateError::from)?;
    let mut min_dist = f64::INFINITY;
    let mut visit = |_t: f64, _w: &[i64], f: &[f64]| {
        let p = TorusPoint::from_unit_coords(f.to_vec());
        for z in &zeros {
            min_dist = min_dist.min(torus_distance(&p, z));
        }
    };
    flow_with(field, &start, t_horizon, config, sample_every, &mut visit)?;
    flow_with(field, &start, -t_horizon, config, sample_every, &mut visit)?;
    Ok(OrbitClosureReport {
        x0: x0.to_vec(),
        min_distance_to_zero_set: min_dist,
        safety_margin,
        qualifies: min_dist > safety_margin,
    })
}

/// CSV export of sweep points: x0_1..d, zeta_1..d, T, cauchy_gap, stalled.
pub fn write_points_csv(
    points: &[RotationEstimate],
    dim: usize,
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    for i in 1..=dim {
        write!(w, "x0_{i},")?;
    }
    for i in 1..=dim {
        write!(w, "zeta_{i},")?;
    }
    writeln!(w, "T,cauchy_gap,stalled")?;
    for p in points {
        for v in &p.x0 {
            write!(w, "{v:.16e},")?;
        }
        for v in &p.zeta_hat {
            write!(w, "{v:.16e},")?;
        }
        match p.cauchy_gap {
            Some(g) => writeln!(w, "{:.16e},{g:.16e},{}", p.horizon, p.stalled)?,
            None => writeln!(w, "{:.16e},,{}", p.horizon, p.stalled)?,
        }
    }
    Ok(())
}

/// Rotation estimate starting from an already-lifted state; used by sweeps
/// that must avoid re-lifting float positions.
pub fn rotation_vector_from(
    field: &FieldSpec,
    start: &LiftedState,
    t_horizon: f64,
    config: &IntegratorConfig,
) -> Result<RotationEstimate, RotationError> {
    if !(t_horizon >= 1.0) {
        return Err(RotationError::BadParams(format!(
            "horizon must be >= 1, got {t_horizon}"
        )));
    }
    rotation_vector_lifted(field, start, t_horizon, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn constant_field_rotation_vector() {
        let f = FieldSpec::constant(vec![1.0, 2.0]).unwrap();
        let cfg = IntegratorConfig::default();
        for t in [10.0, 100.0] {
            let est = rotation_vector(&f, &[0.2, 0.9], t, &cfg).unwrap();
            assert!((est.zeta_hat[0] - 1.0).abs() < 1e-9);
            assert!((est.zeta_hat[1] - 2.0).abs() < 1e-9);
            assert!(!est.stalled);
            assert!(est.cauchy_gap.unwrap() < 1e-9);
        }
    }

    #[test]
    fn rejects_short_horizon() {
        let f = FieldSpec::constant(vec![1.0, 2.0]).unwrap();
        let err = rotation_vector(&f, &[0.0, 0.0], 0.5, &IntegratorConfig::default());
        assert!(matches!(err, Err(RotationError::BadParams(_))));
    }

    #[test]
    fn shear_row_estimate_matches_line_oracle() {
        // row x2 = 0.5: per-line harmonic mean sqrt(c(1+c)) with c = 1
        let f = FieldSpec::shear_41();
        let cfg = IntegratorConfig::default();
        let est = rotation_vector(&f, &[0.3, 0.5], 1000.0, &cfg).unwrap();
        assert!(
            (est.zeta_hat[0] - SQRT_2).abs() < 5e-3,
            "zeta_1 = {}",
            est.zeta_hat[0]
        );
        assert!(est.zeta_hat[1].abs() < 1e-12);
        // row x2 = 0.3: c = sin^2(0.3 pi)
        let c = (0.3 * std::f64::consts::PI).sin().powi(2);
        let est = rotation_vector(&f, &[0.1, 0.3], 1000.0, &cfg).unwrap();
        assert!(
            (est.zeta_hat[0] - (c * (1.0 + c)).sqrt()).abs() < 5e-3,
            "zeta_1 = {} oracle = {}",
            est.zeta_hat[0],
            (c * (1.0 + c)).sqrt()
        );
    }

    #[test]
    fn gradient_flow_null_asymptotics() {
        let f = FieldSpec::gradient_flow([[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let est = rotation_vector(&f, &[0.37, 0.12], 1000.0, &IntegratorConfig::default()).unwrap();
        assert!(est.norm() < 1e-2, "|zeta| = {}", est.norm());
    }

    #[test]
    fn sup_norm_bound_holds() {
        let cfg = IntegratorConfig::default();
        for f in [
            FieldSpec::shear_41(),
            FieldSpec::determinant_shear_43(0.5, 0.5, 1.0).unwrap(),
        ] {
            for x0 in [[0.13, 0.77], [0.5, 0.25]] {
                let est = rotation_vector(&f, &x0, 50.0, &cfg).unwrap();
                assert!(est.norm() <= f.sup_speed() + 1e-9);
            }
        }
    }

    #[test]
    fn constant_field_classifies_singleton() {
        let f = FieldSpec::constant(vec![0.7, -0.3]).unwrap();
        let params = RotationSetParams::new(4, 20.0);
        let set = rotation_set(&f, &params, &IntegratorConfig::default()).unwrap();
        assert!(set.diameter < 1e-8, "diameter {}", set.diameter);
        match &set.classification {
            Classification::Singleton { zeta } => {
                assert!((zeta[0] - 0.7).abs() < 1e-9);
                assert!((zeta[1] + 0.3).abs() < 1e-9);
            }
            other => panic!("expected singleton, got {other:?}"),
        }
        // hull contains every estimate
        for p in &set.points {
            assert!(hull_contains(&set.hull, &p.zeta_hat, 1e-9));
        }
    }

    #[test]
    fn shear_classifies_segment_with_row_oracles() {
        let f = FieldSpec::shear_41();
        let mut params = RotationSetParams::new(8, 500.0);
        params.grid_offset = 0.0; // include the x2 = 1/2 row and the zero row
        let cfg = IntegratorConfig::sweep(1e-8);
        let set = rotation_set(&f, &params, &cfg).unwrap();
        match &set.classification {
            Classification::Segment { endpoint } => {
                assert!((endpoint[0] - SQRT_2).abs() < 5e-3, "endpoint {endpoint:?}");
            }
            other => panic!("expected segment, got {other:?}"),
        }
        // per-row estimates match the per-line harmonic mean oracle
        for p in &set.points {
            let c = (std::f64::consts::PI * p.x0[1]).sin().powi(2);
            let oracle = (c * (1.0 + c)).sqrt();
            assert!(
                (p.zeta_hat[0] - oracle).abs() < 5e-3,
                "row {}: {} vs {}",
                p.x0[1],
                p.zeta_hat[0],
                oracle
            );
            assert!(hull_contains(&set.hull, &p.zeta_hat, 1e-9));
        }
        assert!(set.collinearity_defect <= set.tol_segment);
    }

    #[test]
    fn cauchy_gap_contracts_for_singleton_fields() {
        let f = FieldSpec::determinant_shear_43(0.5, 0.5, 1.0).unwrap();
        let cfg = IntegratorConfig::sweep(1e-8);
        let mut gaps = Vec::new();
        for t in [1000.0, 2000.0, 4000.0] {
            let est = rotation_vector(&f, &[0.21, 0.68], t, &cfg).unwrap();
            gaps.push(est.cauchy_gap.unwrap());
        }
        assert!(gaps[1] < gaps[0], "{gaps:?}");
        assert!(gaps[2] < gaps[1], "{gaps:?}");
    }

    #[test]
    fn perturbation_sweep_constant_family() {
        // rho_n = 1 + 1/n, Phi constant: zeta_n -> Phi
        let phi = [0.4, 0.9];
        let sweep = perturbation_sweep(
            |n| FieldSpec::constant(vec![(1.0 + 1.0 / n as f64) * phi[0], (1.0 + 1.0 / n as f64) * phi[1]]),
            &[4, 16, 64],
            &RotationSetParams::new(3, 50.0),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let mut prev_gap = f64::INFINITY;
        for m in &sweep {
            assert!(!m.hypothesis_violated, "n={} not singleton", m.n);
            let z = m.zeta.as_ref().unwrap();
            let gap = ((z[0] - phi[0]).powi(2) + (z[1] - phi[1]).powi(2)).sqrt();
            assert!(gap < prev_gap || gap < 1e-9);
            prev_gap = gap;
        }
    }

    #[test]
    fn orbit_distance_reports() {
        let f = FieldSpec::shear_41();
        let cfg = IntegratorConfig::default();
        // far row qualifies; its estimate converges to the row mean
        let rep = orbit_distance_report(&f, &[0.3, 0.5], 20.0, 0.1, 0.05, &cfg).unwrap();
        // exact orbit distance is 0.5; finite sampling can only overshoot
        assert!(rep.min_distance_to_zero_set >= 0.5);
        assert!(rep.min_distance_to_zero_set < 0.52);
        assert!(rep.qualifies);
        // the equilibrium itself: distance 0, not qualifying, zeta = 0
        let rep0 = orbit_distance_report(&f, &[0.0, 0.0], 20.0, 0.1, 0.05, &cfg).unwrap();
        assert_eq!(rep0.min_distance_to_zero_set, 0.0);
        assert!(!rep0.qualifies);
        let est0 = rotation_vector(&f, &[0.0, 0.0], 10.0, &cfg).unwrap();
        assert_eq!(est0.norm(), 0.0);
        // a segment-field orbit passing near the zero does not qualify
        let seg = FieldSpec::vanishing_segment_42(0.75, [1.0, SQRT_2]).unwrap();
        let dir = [SQRT_2 / 3.0f64.sqrt(), -1.0 / 3.0f64.sqrt()];
        let x0 = [0.02 * dir[0], (0.02 * dir[1]).rem_euclid(1.0)];
        let rep_seg = orbit_distance_report(&seg, &x0, 20.0, 0.05, 0.05, &cfg).unwrap();
        assert!(!rep_seg.qualifies, "{rep_seg:?}");
        // missing zero_set errors out
        let nometa = FieldSpec::custom(
            "opaque",
            serde_json::json!({}),
            f.velocity().clone(),
            None,
            None,
            None,
        );
        assert!(matches!(
            orbit_distance_report(&nometa, &[0.1, 0.1], 5.0, 0.1, 0.05, &cfg),
            Err(RotationError::MissingZeroSet(_))
        ));
    }

    #[test]
    fn hull_2d_is_convex_and_contains_inputs() {
        let pts: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![0.2, 0.8],
        ];
        let hull = convex_hull_2d(&pts);
        assert_eq!(hull.len(), 4);
        for p in &pts {
            assert!(hull_contains(&hull, p, 1e-12));
        }
        assert!(!hull_contains(&hull, &[1.5, 0.5], 1e-12));
    }
}
