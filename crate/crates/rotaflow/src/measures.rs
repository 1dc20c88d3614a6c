//! Invariant-measure machinery: occupation measures and the divergence-curl
//! characterization.
//!
//! An occupation measure is the time average of the orbit's position
//! distribution over [0, T], accumulated as a histogram on a uniform grid of
//! the torus. Its weak-* limits are invariant for the flow, and invariance
//! itself is checkable: µ is invariant iff ∫ b·∇ψ dµ = 0 for every periodic
//! test function ψ. The suite here fixes ψ to real trigonometric monomials
//! up to a frequency cutoff, which turns that identity into a finite list
//! of residuals. For an occupation measure the residual telescopes exactly:
//! (1/T)∫₀ᵀ d/ds ψ(X(s)) ds = (ψ(X(T)) − ψ(x₀))/T, so |residual| ≤ 2 sup|ψ|/T
//! up to histogram discretization.

use crate::fields::{FieldSpec, ScalarField};
use crate::integrate::{flow_with, IntegrateError, IntegratorConfig};
use crate::torus::LiftedState;
use serde::Serialize;
use std::f64::consts::TAU;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("dimension mismatch: measure is {measure}-dimensional, field is {field}-dimensional")]
    Dimension { measure: usize, field: usize },
}

/// Time-weighted histogram of π(X(s, x₀)), s ∈ [0, T], on a uniform grid.
///
/// Alongside the cell weights the accumulator keeps each cell's sample
/// centroid; quadratures against the measure evaluate integrands there
/// rather than at geometric cell centers, which matches the first moment of
/// the samples (and makes a Dirac at an equilibrium exact).
#[derive(Debug, Clone, Serialize)]
pub struct OccupationMeasure {
    pub dim: usize,
    pub resolution: usize,
    /// resolution^dim nonnegative cell weights summing to 1.
    pub weights: Vec<f64>,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub stalled: bool,
    pub samples: u64,
    #[serde(skip)]
    position_sums: Vec<f64>,
    #[serde(skip)]
    counts: Vec<f64>,
}

impl OccupationMeasure {
    pub fn cell_of(&self, frac: &[f64]) -> usize {
        let mut flat = 0usize;
        for &f in frac.iter().rev() {
            let i = ((f * self.resolution as f64) as usize).min(self.resolution - 1);
            flat = flat * self.resolution + i;
        }
        flat
    }

    /// Center coordinates of a flat cell index.
    pub fn cell_center(&self, mut flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for xi in x.iter_mut() {
            let i = flat % self.resolution;
            flat /= self.resolution;
            *xi = (i as f64 + 0.5) / self.resolution as f64;
        }
        x
    }

    /// Where the cell's mass actually sits: the sample centroid, falling
    /// back to the geometric center for cells that were never visited.
    pub fn cell_representative(&self, flat: usize) -> Vec<f64> {
        let c = self.counts[flat];
        if c > 0.0 {
            (0..self.dim)
                .map(|i| self.position_sums[flat * self.dim + i] / c)
                .collect()
        } else {
            self.cell_center(flat)
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// CSV export: cell index per axis, then weight.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        for i in 1..=self.dim {
            write!(w, "i_{i},")?;
        }
        writeln!(w, "weight")?;
        for (flat, &wt) in self.weights.iter().enumerate() {
            let mut rem = flat;
            for axis in 0..self.dim {
                let i = rem % self.resolution;
                rem /= self.resolution;
                write!(w, "{i}")?;
                let _ = axis;
                write!(w, ",")?;
            }
            writeln!(w, "{wt:.16e}")?;
        }
        Ok(())
    }
}

/// Accumulate the occupation histogram of one trajectory.
///
/// Sampling is uniform in time via dense output; `sample_dt = None` picks a
/// step fine enough that the orbit cannot cross a cell between samples.
/// If the integration stalls at t* < T, the remaining time mass [t*, T] is
/// assigned to the stall cell — the Dirac measure at an equilibrium is a
/// legitimate invariant measure.
pub fn occupation_measure(
    field: &FieldSpec,
    x0: &[f64],
    t_horizon: f64,
    resolution: usize,
    config: &IntegratorConfig,
    sample_dt: Option<f64>,
) -> Result<OccupationMeasure, MeasureError> {
    if !(t_horizon >= 10.0) {
        return Err(MeasureError::BadParams(format!(
            "horizon must be >= 10, got {t_horizon}"
        )));
    }
    if resolution < 2 {
        return Err(MeasureError::BadParams(
            "resolution must be >= 2".into(),
        ));
    }
    let d = field.dim();
    let dt = match sample_dt {
        Some(dt) if dt > 0.0 => dt,
        Some(_) => return Err(MeasureError::BadParams("sample_dt must be positive".into())),
        None => {
            let crossing = 0.2 / (resolution as f64 * field.sup_speed().max(1e-9));
            let floor = t_horizon / 2e7;
            crossing.min(config.max_step).max(floor)
        }
    };
    let cells = resolution.pow(d as u32);
    let mut measure = OccupationMeasure {
        dim: d,
        resolution,
        weights: vec![0.0; cells],
        x0: x0.to_vec(),
        horizon: t_horizon,
        stalled: false,
        samples: 0,
        position_sums: vec![0.0; cells * d],
        counts: vec![0.0; cells],
    };
    let start = LiftedState::lift(x0).map_err(IntegrateError::from)?;
    let mut count = 0u64;
    {
        let sums = &mut measure.position_sums;
        let counts = &mut measure.counts;
        let outcome = flow_with(field, &start, t_horizon, config, dt, |_t, _w, f| {
            let flat = cell_index(f, resolution);
            counts[flat] += 1.0;
            for (s, &fi) in sums[flat * d..flat * d + d].iter_mut().zip(f) {
                *s += fi;
            }
            count += 1;
        })?;
        measure.samples = count;
        if let Some(stall) = &outcome.stall {
            measure.stalled = true;
            // remaining time parked at the stall cell
            let missing = ((t_horizon - stall.t) / dt).max(0.0);
            let coords = stall.state.base().coords();
            let flat = cell_index(coords, resolution);
            counts[flat] += missing;
            for (s, &fi) in sums[flat * d..flat * d + d].iter_mut().zip(coords) {
                *s += missing * fi;
            }
        }
    }
    let total: f64 = measure.counts.iter().sum();
    for (w, c) in measure.weights.iter_mut().zip(&measure.counts) {
        *w = c / total;
    }
    Ok(measure)
}

fn cell_index(frac: &[f64], resolution: usize) -> usize {
    let mut flat = 0usize;
    for &f in frac.iter().rev() {
        let i = ((f * resolution as f64) as usize).min(resolution - 1);
        flat = flat * resolution + i;
    }
    flat
}

/// The measure argument of the divergence-curl suite: a sampled occupation
/// histogram or an analytic density (normalized internally).
pub enum MeasureRef<'a> {
    Occupation(&'a OccupationMeasure),
    Analytic {
        density: &'a dyn ScalarField,
        quad_nodes: usize,
    },
}

/// Residuals |∫ b·∇ψ dµ| for ψ = cos/sin(2πκ·x), 0 < |κ|_∞ ≤ K.
#[derive(Debug, Clone, Serialize)]
pub struct DivCurlReport {
    /// Per-frequency worst residual over the two trigonometric branches.
    pub residuals: Vec<(Vec<i64>, f64)>,
    pub max_residual: f64,
    /// Exact telescoping bound 2·sup|ψ|/T for occupation measures.
    pub decay_bound: Option<f64>,
}

/// Check the invariance identity ∫ b·∇ψ dµ = 0 against the trigonometric
/// test family up to frequency `freq_cutoff`.
pub fn divcurl_residual(
    field: &FieldSpec,
    measure: &MeasureRef,
    freq_cutoff: i64,
) -> Result<DivCurlReport, MeasureError> {
    if freq_cutoff < 1 {
        return Err(MeasureError::BadParams("freq_cutoff must be >= 1".into()));
    }
    let d = field.dim();
    if let MeasureRef::Occupation(m) = measure {
        if m.dim != d {
            return Err(MeasureError::Dimension {
                measure: m.dim,
                field: d,
            });
        }
    }
    if let MeasureRef::Analytic { density, .. } = measure {
        if density.dim() != d {
            return Err(MeasureError::Dimension {
                measure: density.dim(),
                field: d,
            });
        }
    }
    let kappas = half_lattice(d, freq_cutoff);
    let mut residuals = Vec::with_capacity(kappas.len());
    let mut max_residual = 0.0f64;
    for kappa in kappas {
        let mut worst = 0.0f64;
        for cos_branch in [true, false] {
            let r = match measure {
                MeasureRef::Occupation(m) => occupation_pairing(field, m, &kappa, cos_branch),
                MeasureRef::Analytic {
                    density,
                    quad_nodes,
                } => analytic_pairing(field, *density, *quad_nodes, &kappa, cos_branch),
            };
            worst = worst.max(r.abs());
        }
        max_residual = max_residual.max(worst);
        residuals.push((kappa, worst));
    }
    let decay_bound = match measure {
        MeasureRef::Occupation(m) => Some(2.0 / m.horizon),
        MeasureRef::Analytic { .. } => None,
    };
    Ok(DivCurlReport {
        residuals,
        max_residual,
        decay_bound,
    })
}

/// κ ≠ 0 with the first nonzero component positive (ψ(−κ) spans the same
/// two-dimensional space as ψ(κ)).
fn half_lattice(d: usize, cutoff: i64) -> Vec<Vec<i64>> {
    let span = 2 * cutoff + 1;
    let total = (span as usize).pow(d as u32);
    let mut out = Vec::new();
    for mut flat in 0..total {
        let mut kappa = vec![0i64; d];
        for k in kappa.iter_mut() {
            *k = (flat % span as usize) as i64 - cutoff;
            flat /= span as usize;
        }
        match kappa.iter().find(|&&k| k != 0) {
            Some(&first) if first > 0 => out.push(kappa),
            _ => {}
        }
    }
    out
}

fn grad_psi(kappa: &[i64], x: &[f64], cos_branch: bool, out: &mut [f64]) {
    let phase: f64 = TAU * kappa.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>();
    let factor = if cos_branch {
        -TAU * phase.sin()
    } else {
        TAU * phase.cos()
    };
    for (o, &k) in out.iter_mut().zip(kappa) {
        *o = factor * k as f64;
    }
}

fn occupation_pairing(
    field: &FieldSpec,
    m: &OccupationMeasure,
    kappa: &[i64],
    cos_branch: bool,
) -> f64 {
    let d = m.dim;
    let mut b = vec![0.0; d];
    let mut dpsi = vec![0.0; d];
    let mut acc = 0.0;
    for (flat, &w) in m.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let x = m.cell_representative(flat);
        field.eval_into(&x, &mut b);
        grad_psi(kappa, &x, cos_branch, &mut dpsi);
        acc += w * b.iter().zip(&dpsi).map(|(u, v)| u * v).sum::<f64>();
    }
    acc
}

fn analytic_pairing(
    field: &FieldSpec,
    density: &dyn ScalarField,
    quad_nodes: usize,
    kappa: &[i64],
    cos_branch: bool,
) -> f64 {
    let d = field.dim();
    let mut b = vec![0.0; d];
    let mut dpsi = vec![0.0; d];
    let mut num = 0.0;
    let mut mass = 0.0;
    crate::fields::for_each_node(d, quad_nodes, |x| {
        let s = density.value(x);
        field.eval_into(x, &mut b);
        grad_psi(kappa, x, cos_branch, &mut dpsi);
        num += s * b.iter().zip(&dpsi).map(|(u, v)| u * v).sum::<f64>();
        mass += s;
    });
    num / mass
}

/// Histogram-weighted mean of b: the rotation vector of the measure.
pub fn mean_under_measure(field: &FieldSpec, m: &OccupationMeasure) -> Result<Vec<f64>, MeasureError> {
    if m.dim != field.dim() {
        return Err(MeasureError::Dimension {
            measure: m.dim,
            field: field.dim(),
        });
    }
    let d = m.dim;
    let mut b = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for (flat, &w) in m.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let x = m.cell_representative(flat);
        field.eval_into(&x, &mut b);
        for (mi, &bi) in mean.iter_mut().zip(&b) {
            *mi += w * bi;
        }
    }
    Ok(mean)
}

/// Mean of b under an analytic density (normalized internally).
pub fn mean_under_density(field: &FieldSpec, density: &dyn ScalarField, quad_nodes: usize) -> Vec<f64> {
    let d = field.dim();
    let mut b = vec![0.0; d];
    let mut mean = vec![0.0; d];
    let mut mass = 0.0;
    crate::fields::for_each_node(d, quad_nodes, |x| {
        let s = density.value(x);
        field.eval_into(x, &mut b);
        for (mi, &bi) in mean.iter_mut().zip(&b) {
            *mi += s * bi;
        }
        mass += s;
    });
    for mi in mean.iter_mut() {
        *mi /= mass;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldSpec, FnScalarField};
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn equilibrium_occupation_is_dirac() {
        let f = FieldSpec::shear_41();
        let m = occupation_measure(
            &f,
            &[0.0, 0.0],
            100.0,
            16,
            &IntegratorConfig::default(),
            None,
        )
        .unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let cell = m.cell_of(&[0.0, 0.0]);
        assert_eq!(m.weights[cell], 1.0);
    }

    #[test]
    fn constant_irrational_flow_equidistributes() {
        let f = FieldSpec::constant(vec![1.0, SQRT_2]).unwrap();
        let m = occupation_measure(
            &f,
            &[0.2, 0.7],
            10_000.0,
            32,
            &IntegratorConfig::default(),
            None,
        )
        .unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let uniform = 1.0 / m.weights.len() as f64;
        let mut worst: f64 = 0.0;
        for &w in &m.weights {
            worst = worst.max((w - uniform).abs() / uniform);
        }
        assert!(worst < 0.05, "relative deviation {worst}");
    }

    #[test]
    fn shear_row_occupation_weights_inverse_speed() {
        // time spent per cell along the row x2 = 1/2 is proportional to the
        // cell average of 1/a(., 1/2)
        let f = FieldSpec::shear_41();
        let res = 32;
        let m = occupation_measure(
            &f,
            &[0.3, 0.5],
            10_000.0,
            res,
            &IntegratorConfig::default(),
            None,
        )
        .unwrap();
        // all mass on the single row containing x2 = 1/2
        let row = ((0.5 * res as f64) as usize).min(res - 1);
        let mut row_mass = 0.0;
        for i in 0..res {
            row_mass += m.weights[row * res + i];
        }
        assert!((row_mass - 1.0).abs() < 1e-12);
        // oracle: cell mass proportional to the quadrature of 1/a over the cell
        let mut oracle = vec![0.0f64; res];
        let quad = 200;
        for (i, o) in oracle.iter_mut().enumerate() {
            let mut acc = 0.0;
            for q in 0..quad {
                let x1 = (i as f64 + (q as f64 + 0.5) / quad as f64) / res as f64;
                let a = (PI * x1).sin().powi(2) + 1.0; // sin^2(pi/2) = 1
                acc += 1.0 / a;
            }
            *o = acc;
        }
        let total: f64 = oracle.iter().sum();
        for o in oracle.iter_mut() {
            *o /= total;
        }
        for i in 0..res {
            let w = m.weights[row * res + i];
            let rel = (w - oracle[i]).abs() / oracle[i];
            assert!(rel < 0.05, "cell {i}: weight {w} oracle {} rel {rel}", oracle[i]);
        }
    }

    #[test]
    fn analytic_density_passes_divcurl() {
        // positive-rho members carry bounded flow-invariant densities
        for f in [
            FieldSpec::constant(vec![1.0, 2.0]).unwrap(),
            FieldSpec::shear_41_perturbed(16, SQRT_2 / 16.0).unwrap(),
            FieldSpec::vanishing_segment_42_perturbed(0.75, [1.0, SQRT_2], 16).unwrap(),
            FieldSpec::determinant_shear_43(0.5, 0.5, 1.0).unwrap(),
        ] {
            let density = f.flow_invariant_density().expect("bounded density");
            let report = divcurl_residual(
                &f,
                &MeasureRef::Analytic {
                    density: density.as_ref(),
                    quad_nodes: 128,
                },
                3,
            )
            .unwrap();
            assert!(
                report.max_residual < 1e-8,
                "{}: max residual {:.3e}",
                f.name(),
                report.max_residual
            );
            assert!(report.decay_bound.is_none());
        }
    }

    #[test]
    fn equilibrium_occupation_divcurl_residual_vanishes() {
        // all samples sit at the equilibrium, the cell representative is the
        // equilibrium itself, and b(alpha) = 0 makes the residual exact
        let f = FieldSpec::shear_41();
        let m = occupation_measure(&f, &[0.0, 0.0], 50.0, 16, &IntegratorConfig::default(), None)
            .unwrap();
        let report = divcurl_residual(&f, &MeasureRef::Occupation(&m), 2).unwrap();
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn occupation_divcurl_telescoping_bound() {
        let f = FieldSpec::shear_41();
        let t = 10_000.0;
        let m = occupation_measure(&f, &[0.3, 0.5], t, 64, &IntegratorConfig::default(), None)
            .unwrap();
        let report = divcurl_residual(&f, &MeasureRef::Occupation(&m), 3).unwrap();
        assert_eq!(report.decay_bound, Some(2.0 / t));
        // spec example bound: 4*pi*K/T with K = 3
        assert!(
            report.max_residual < 4.0 * PI * 3.0 / t,
            "max residual {:.3e}",
            report.max_residual
        );
    }

    #[test]
    fn means_under_measures() {
        // Dirac at an equilibrium
        let f = FieldSpec::shear_41();
        let cfg = IntegratorConfig::default();
        let dirac = occupation_measure(&f, &[0.0, 0.0], 50.0, 16, &cfg, None).unwrap();
        let mean = mean_under_measure(&f, &dirac).unwrap();
        assert_eq!(mean, vec![0.0, 0.0]);

        // constant field: any occupation measure returns the constant
        let c = FieldSpec::constant(vec![0.3, -0.8]).unwrap();
        let occ = occupation_measure(&c, &[0.1, 0.9], 100.0, 8, &cfg, None).unwrap();
        let mean = mean_under_measure(&c, &occ).unwrap();
        assert!((mean[0] - 0.3).abs() < 1e-12);
        assert!((mean[1] + 0.8).abs() < 1e-12);

        // shear row: histogram mean vs rotation_vector, both near the
        // per-line harmonic mean sqrt(2)
        let row = occupation_measure(&f, &[0.3, 0.5], 10_000.0, 64, &cfg, None).unwrap();
        let mean = mean_under_measure(&f, &row).unwrap();
        let est = crate::rotation::rotation_vector(&f, &[0.3, 0.5], 10_000.0, &cfg).unwrap();
        assert!(
            (mean[0] - est.zeta_hat[0]).abs() < 1e-3,
            "histogram {} vs endpoint {}",
            mean[0],
            est.zeta_hat[0]
        );
    }

    #[test]
    fn reweighting_identity_passes() {
        // mu_n = C sigma_Phi / rho_n dx is invariant for rho_n Phi whenever
        // div(sigma_Phi Phi) = 0: check one pair here at 1e-8
        let fam = |n: u32| FieldSpec::vanishing_segment_42_perturbed(0.75, [1.0, SQRT_2], n).unwrap();
        let f16 = fam(16);
        let fac = f16.factorization().unwrap();
        let rho = fac.rho.clone();
        let density = FnScalarField::new(
            2,
            move |x: &[f64]| 1.0 / rho.value(x),
            |_x: &[f64], out: &mut [f64]| out.fill(0.0),
        );
        let report = divcurl_residual(
            &f16,
            &MeasureRef::Analytic {
                density: &density,
                quad_nodes: 128,
            },
            3,
        )
        .unwrap();
        assert!(report.max_residual < 1e-8, "{:.3e}", report.max_residual);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let f2 = FieldSpec::shear_41();
        let f1 = FieldSpec::constant(vec![1.0]).unwrap();
        let m = occupation_measure(&f1, &[0.0], 50.0, 8, &IntegratorConfig::default(), None)
            .unwrap();
        assert!(matches!(
            divcurl_residual(&f2, &MeasureRef::Occupation(&m), 2),
            Err(MeasureError::Dimension { .. })
        ));
        assert!(mean_under_measure(&f2, &m).is_err());
    }

    #[test]
    fn csv_export_masses() {
        let f = FieldSpec::constant(vec![1.0, 2.0]).unwrap();
        let m = occupation_measure(&f, &[0.0, 0.0], 20.0, 4, &IntegratorConfig::default(), None)
            .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i_1,i_2,weight\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
