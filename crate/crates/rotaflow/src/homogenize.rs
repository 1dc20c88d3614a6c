//! Transport homogenization by the method of characteristics.
//!
//! The oscillating-velocity transport problem
//! ∂_t u_ε − b(x/ε)·∇u_ε = 0, u_ε(0, ·) = u₀ has the exact solution
//! u_ε(t, x) = u₀(X_ε(t, x)) with X_ε(t, x) = ε·X(t/ε, x/ε) — characteristics
//! are exact, so no Eulerian grid solver is involved and no numerical
//! diffusion can blur the limit. When the rotation set of b is the singleton
//! {ζ}, u_ε converges to the translated profile u₀(x + tζ); the experiment
//! here measures that convergence in a normalized L^p norm over a compact
//! window as ε sweeps downward.
//!
//! Sign convention: this module implements the −b(x/ε)·∇u form (the one the
//! limit theorem is stated for), under which a constant velocity ζ
//! translates the profile to u₀(x + tζ). The introduction-style +b·∇u form
//! would translate the opposite way; the constant-field control test pins
//! the sign.

use crate::fields::FieldSpec;
use crate::integrate::{flow_with, IntegrateError, IntegratorConfig};
use crate::torus::LiftedState;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomogenizeError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("bad parameters: {0}")]
    BadParams(String),
}

/// A C¹ initial profile on ℝ^d (not necessarily periodic).
#[derive(Clone)]
pub struct Profile {
    pub name: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl Profile {
    pub fn new(name: impl Into<String>, f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>) -> Profile {
        Profile {
            name: name.into(),
            f,
        }
    }

    /// exp(−|x−c|²/(2w²)): a smooth bump, oscillation ≈ 1.
    pub fn gaussian_bump(center: Vec<f64>, width: f64) -> Profile {
        let name = format!("gaussian(center={center:?}, width={width})");
        Profile::new(
            name,
            Arc::new(move |x: &[f64]| {
                let r2: f64 = x
                    .iter()
                    .zip(&center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum();
                (-r2 / (2.0 * width * width)).exp()
            }),
        )
    }

    /// sin(2πx₁)·cos(2πx₂) + ½cos(2πx₁): a periodic trig polynomial.
    pub fn trig_polynomial() -> Profile {
        let tau = std::f64::consts::TAU;
        Profile::new(
            "trig_polynomial",
            Arc::new(move |x: &[f64]| {
                (tau * x[0]).sin() * (tau * x[1]).cos() + 0.5 * (tau * x[0]).cos()
            }),
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// max − min over a sampled window [0,1]^d ∪ (its ζt translates are
    /// bounded by the global oscillation for the catalog profiles).
    pub fn oscillation(&self, dim: usize, nodes: usize) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        crate::fields::for_each_node(dim, nodes, |x| {
            let v = self.value(x);
            lo = lo.min(v);
            hi = hi.max(v);
        });
        hi - lo
    }
}

/// The value u_ε(t, x) = u₀(ε·X(t/ε, x/ε)), exact up to integrator
/// tolerance. Returns the value and whether the characteristic stalled
/// (the value at the stall point is still returned).
pub fn solve_transport_characteristics(
    field: &FieldSpec,
    u0: &Profile,
    epsilon: f64,
    t: f64,
    x: &[f64],
    config: &IntegratorConfig,
) -> Result<(f64, bool), HomogenizeError> {
    if !(epsilon > 0.0) {
        return Err(HomogenizeError::BadParams("epsilon must be positive".into()));
    }
    let y0: Vec<f64> = x.iter().map(|v| v / epsilon).collect();
    let start = LiftedState::lift(&y0).map_err(IntegrateError::from)?;
    let outcome = crate::integrate::flow_endpoint(field, &start, t / epsilon, config)?;
    let xe: Vec<f64> = outcome.end.position().iter().map(|v| v * epsilon).collect();
    Ok((u0.value(&xe), outcome.stall.is_some()))
}

/// An ε-sweep comparing u_ε against the translated profile u₀(x + tζ).
pub struct TransportExperiment {
    pub field: FieldSpec,
    pub u0: Profile,
    /// positive, decreasing
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    /// evaluation grid per axis on the box [0,1]^d (default 64)
    pub eval_resolution: usize,
    /// time samples in (0, t_final] (default 16)
    pub time_samples: usize,
    /// norm exponent p (default 2)
    pub p: f64,
    pub config: IntegratorConfig,
}

impl TransportExperiment {
    pub fn new(field: FieldSpec, u0: Profile, epsilons: Vec<f64>, t_final: f64) -> Self {
        TransportExperiment {
            field,
            u0,
            epsilons,
            t_final,
            eval_resolution: 64,
            time_samples: 16,
            p: 2.0,
            config: IntegratorConfig::default(),
        }
    }

    fn validate(&self) -> Result<(), HomogenizeError> {
        if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(HomogenizeError::BadParams(
                "epsilons must be positive".into(),
            ));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(HomogenizeError::BadParams(
                "epsilons must be strictly decreasing".into(),
            ));
        }
        if !(self.t_final > 0.0) {
            return Err(HomogenizeError::BadParams("t_final must be positive".into()));
        }
        if self.eval_resolution < 2 || self.time_samples < 1 {
            return Err(HomogenizeError::BadParams(
                "need eval_resolution >= 2 and time_samples >= 1".into(),
            ));
        }
        if !(self.p >= 1.0) {
            return Err(HomogenizeError::BadParams("p must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub lp_error: f64,
    pub runtime_s: f64,
    pub stalled_characteristics: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// oscillation of the initial profile over the evaluation window
    pub oscillation: f64,
    pub p: f64,
}

impl ConvergenceTable {
    /// CSV export: epsilon, lp_error, runtime_s (17 significant digits).
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "epsilon,lp_error,runtime_s")?;
        for r in &self.rows {
            writeln!(w, "{:.16e},{:.16e},{:.3}", r.epsilon, r.lp_error, r.runtime_s)?;
        }
        Ok(())
    }
}

/// Run the ε-sweep: for each ε, tensor quadrature of |u_ε − u₀(x+tζ)|^p over
/// `time_samples` × the evaluation grid, one characteristic per grid point
/// (all its time samples come from a single dense-output integration).
pub fn run_experiment(
    exp: &TransportExperiment,
    zeta: &[f64],
) -> Result<ConvergenceTable, HomogenizeError> {
    exp.validate()?;
    let d = exp.field.dim();
    if zeta.len() != d {
        return Err(HomogenizeError::BadParams(format!(
            "zeta has dimension {}, field has {}",
            zeta.len(),
            d
        )));
    }
    let res = exp.eval_resolution;
    let cells = res.pow(d as u32);
    let nt = exp.time_samples;
    let mut rows = Vec::with_capacity(exp.epsilons.len());
    for &eps in &exp.epsilons {
        let started = Instant::now();
        let dt = exp.t_final / nt as f64;
        // per grid point: integrate one characteristic to t_final/eps with
        // dense samples at t_j/eps, then compare against the translate
        let results: Result<Vec<(f64, bool)>, HomogenizeError> = (0..cells)
            .into_par_iter()
            .map(|flat| {
                let mut x = vec![0.0; d];
                let mut rem = flat;
                for xi in x.iter_mut() {
                    let i = rem % res;
                    rem /= res;
                    *xi = (i as f64 + 0.5) / res as f64;
                }
                characteristic_error_sum(exp, zeta, &x, eps, dt)
            })
            .collect();
        let results = results?;
        let mut acc = 0.0;
        let mut stalled = 0usize;
        for (s, st) in &results {
            acc += s;
            stalled += *st as usize;
        }
        let lp_error = (acc / (cells * nt) as f64).powf(1.0 / exp.p);
        rows.push(ConvergenceRow {
            epsilon: eps,
            lp_error,
            runtime_s: started.elapsed().as_secs_f64(),
            stalled_characteristics: stalled,
        });
    }
    let oscillation = exp.u0.oscillation(d, 128);
    Ok(ConvergenceTable {
        rows,
        oscillation,
        p: exp.p,
    })
}

/// Σ_j |u_ε(t_j, x) − u₀(x + t_j ζ)|^p along one characteristic.
fn characteristic_error_sum(
    exp: &TransportExperiment,
    zeta: &[f64],
    x: &[f64],
    eps: f64,
    dt: f64,
) -> Result<(f64, bool), HomogenizeError> {
    let nt = exp.time_samples;
    let y0: Vec<f64> = x.iter().map(|v| v / eps).collect();
    let start = LiftedState::lift(&y0).map_err(IntegrateError::from)?;
    let t_end = exp.t_final / eps;
    let sample_every = dt / eps;
    let mut values: Vec<Option<Vec<f64>>> = vec![None; nt];
    let outcome = flow_with(
        &exp.field,
        &start,
        t_end,
        &exp.config,
        sample_every,
        |t, w, f| {
            if t == 0.0 {
                return;
            }
            let j = (t / sample_every).round() as usize;
            if (1..=nt).contains(&j) {
                values[j - 1] = Some(
                    w.iter()
                        .zip(f)
                        .map(|(&k, &fr)| (k as f64 + fr) * eps)
                        .collect(),
                );
            }
        },
    )?;
    let stalled = outcome.stall.is_some();
    // a stalled characteristic parks at the stall point for the remaining samples
    let end_scaled: Vec<f64> = outcome.end.position().iter().map(|v| v * eps).collect();
    let mut acc = 0.0;
    for (jm1, slot) in values.iter().enumerate() {
        let t_j = (jm1 + 1) as f64 * dt;
        let xe = slot.as_ref().unwrap_or(&end_scaled);
        let u_eps = exp.u0.value(xe);
        let translated: Vec<f64> = x.iter().zip(zeta).map(|(xi, zi)| xi + t_j * zi).collect();
        let u_lim = exp.u0.value(&translated);
        acc += (u_eps - u_lim).abs().powf(exp.p);
    }
    Ok((acc, stalled))
}
