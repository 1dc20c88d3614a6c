//! Long-time integration of X′ = b(X) on the lifted space ℝ^d with
//! lattice-exact bookkeeping.
//!
//! The state is carried as (winding ∈ ℤ^d, frac ∈ [0,1)^d) rather than a raw
//! position. Every stage of every step evaluates b at fractional coordinates
//! (legal by periodicity), so two trajectories whose initial conditions
//! differ by a lattice vector see bit-identical arithmetic — equivariance
//! X(t, x+κ) = X(t, x) + κ holds exactly, and the winding never suffers
//! cancellation no matter how far the orbit drifts.
//!
//! The adaptive scheme is the Dormand–Prince embedded 5(4) pair with the
//! FSAL stage; dense output between accepted steps is cubic Hermite (4th
//! order), which is what uniform-in-time occupation sampling consumes.

use crate::fields::FieldSpec;
use crate::torus::{wrap_unit, LiftedState, TorusError, TorusPoint};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("invalid integrator config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Torus(#[from] TorusError),
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("dimension mismatch: field is {field}-dimensional, state is {state}-dimensional")]
    Dimension { field: usize, state: usize },
    #[error("integration stalled at t = {t} (step-size underflow)")]
    Stalled { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AdaptiveEmbedded45,
    FixedRk4,
}

/// Step-size and tolerance settings.
///
/// Defaults are sized for rotation estimates with horizons up to T = 1e4:
/// per-step error far below 1/T. `fixed_rk4` uses `max_step` as its step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub scheme: Scheme,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_step: 0.1,
            min_step: 1e-12,
            scheme: Scheme::AdaptiveEmbedded45,
        }
    }
}

impl IntegratorConfig {
    /// Defaults with both tolerances loosened to `tol`, for long grid sweeps
    /// where the rotation estimate divides position error by T anyway.
    pub fn sweep(tol: f64) -> Self {
        IntegratorConfig {
            abs_tol: tol,
            rel_tol: tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.min_step > 0.0 && self.min_step <= self.max_step) {
            return Err(IntegrateError::BadConfig(format!(
                "need 0 < min_step <= max_step, got {} and {}",
                self.min_step, self.max_step
            )));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(IntegrateError::BadConfig(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Step-size underflow marker: the error controller could not resolve the
/// flow above `min_step` (expected near zeros of ρ under tight tolerances).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stall {
    pub t: f64,
    pub state: LiftedState,
}

/// Time-stamped lifted states from one integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<LiftedState>,
    pub field: FieldSpec,
    pub config: IntegratorConfig,
    pub stall: Option<Stall>,
}

impl Trajectory {
    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn end_state(&self) -> &LiftedState {
        self.states.last().unwrap()
    }

    /// CSV export: t, x_1..x_d (lifted), b_1..b_d, 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let d = self.field.dim();
        write!(w, "t")?;
        for i in 1..=d {
            write!(w, ",x_{i}")?;
        }
        for i in 1..=d {
            write!(w, ",b_{i}")?;
        }
        writeln!(w)?;
        let mut b = vec![0.0; d];
        for (t, s) in self.times.iter().zip(&self.states) {
            self.field.eval_into(s.base().coords(), &mut b);
            write!(w, "{t:.16e}")?;
            for v in s.position() {
                write!(w, ",{v:.16e}")?;
            }
            for v in &b {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Summary of a callback-driven integration.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub end: LiftedState,
    pub end_time: f64,
    pub stall: Option<Stall>,
    pub steps: u64,
    pub rejected: u64,
}

// Dormand–Prince 5(4) tableau.
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
// 5th-order weights; the 7th stage is FSAL.
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// difference between the 5th-order and embedded 4th-order weights
const ERR_W: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

struct Stepper<'a> {
    field: &'a FieldSpec,
    d: usize,
    winding: Vec<i64>,
    frac: Vec<f64>,
    t: f64,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    delta: Vec<f64>,
    frac_new: Vec<f64>,
    wind_inc: Vec<i64>,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a FieldSpec, start: &LiftedState) -> Stepper<'a> {
        let d = field.dim();
        let mut s = Stepper {
            field,
            d,
            winding: start.winding().to_vec(),
            frac: start.base().coords().to_vec(),
            t: 0.0,
            k: std::array::from_fn(|_| vec![0.0; d]),
            ytmp: vec![0.0; d],
            delta: vec![0.0; d],
            frac_new: vec![0.0; d],
            wind_inc: vec![0; d],
        };
        field.eval_into(&s.frac, &mut s.ytmp);
        s.k[0].copy_from_slice(&s.ytmp);
        s
    }

    fn state(&self) -> LiftedState {
        LiftedState::from_parts(
            self.winding.clone(),
            TorusPoint::from_unit_coords(self.frac.clone()),
        )
    }

    fn stage(&mut self, row: &[f64], h: f64, out_idx: usize) {
        for i in 0..self.d {
            let mut acc = 0.0;
            for (j, &a) in row.iter().enumerate() {
                acc += a * self.k[j][i];
            }
            self.ytmp[i] = self.frac[i] + h * acc;
        }
        let (before, rest) = self.k.split_at_mut(out_idx);
        let _ = before;
        self.field.eval_into(&self.ytmp, &mut rest[0]);
    }

    /// One attempted Dormand–Prince step of signed size h. Leaves the
    /// candidate update in delta/frac_new/wind_inc, b at the candidate in
    /// k[6], and returns the scaled error norm.
    fn attempt_dp(&mut self, h: f64, abs_tol: f64, rel_tol: f64) -> f64 {
        self.stage(&A2, h, 1);
        self.stage(&A3, h, 2);
        self.stage(&A4, h, 3);
        self.stage(&A5, h, 4);
        self.stage(&A6, h, 5);
        for i in 0..self.d {
            let mut acc = 0.0;
            for (j, &b) in B5.iter().enumerate() {
                acc += b * self.k[j][i];
            }
            self.delta[i] = h * acc;
            let (kk, f) = wrap_unit(self.frac[i] + self.delta[i]);
            self.wind_inc[i] = kk;
            self.frac_new[i] = f;
        }
        // FSAL stage at the candidate, evaluated at wrapped coordinates
        let (head, tail) = self.k.split_at_mut(6);
        let _ = head;
        self.field.eval_into(&self.frac_new, &mut tail[0]);
        let mut err_sq = 0.0;
        for i in 0..self.d {
            let mut e = 0.0;
            for (j, &w) in ERR_W.iter().enumerate() {
                e += w * self.k[j][i];
            }
            e *= h;
            let sc = abs_tol
                + rel_tol * self.frac[i].abs().max((self.frac[i] + self.delta[i]).abs());
            err_sq += (e / sc) * (e / sc);
        }
        (err_sq / self.d as f64).sqrt()
    }

    /// Classic RK4 candidate with the same commit/dense-output contract.
    fn attempt_rk4(&mut self, h: f64) {
        for i in 0..self.d {
            self.ytmp[i] = self.frac[i] + 0.5 * h * self.k[0][i];
        }
        {
            let (head, rest) = self.k.split_at_mut(1);
            let _ = head;
            self.field.eval_into(&self.ytmp, &mut rest[0]);
        }
        for i in 0..self.d {
            self.ytmp[i] = self.frac[i] + 0.5 * h * self.k[1][i];
        }
        {
            let (head, rest) = self.k.split_at_mut(2);
            let _ = head;
            self.field.eval_into(&self.ytmp, &mut rest[0]);
        }
        for i in 0..self.d {
            self.ytmp[i] = self.frac[i] + h * self.k[2][i];
        }
        {
            let (head, rest) = self.k.split_at_mut(3);
            let _ = head;
            self.field.eval_into(&self.ytmp, &mut rest[0]);
        }
        for i in 0..self.d {
            self.delta[i] = h / 6.0
                * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
            let (kk, f) = wrap_unit(self.frac[i] + self.delta[i]);
            self.wind_inc[i] = kk;
            self.frac_new[i] = f;
        }
        let (head, tail) = self.k.split_at_mut(6);
        let _ = head;
        self.field.eval_into(&self.frac_new, &mut tail[0]);
    }

    fn commit(&mut self) {
        for i in 0..self.d {
            self.winding[i] += self.wind_inc[i];
            self.frac[i] = self.frac_new[i];
        }
        let (head, tail) = self.k.split_at_mut(6);
        head[0].copy_from_slice(&tail[0]);
    }

    /// Cubic Hermite sample at fraction θ of the candidate step, in the
    /// pre-commit frame: f0 = k[0], f1 = k[6].
    fn hermite(&self, h: f64, theta: f64, wind_out: &mut [i64], frac_out: &mut [f64]) {
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        for i in 0..self.d {
            let y0 = self.frac[i];
            let y1 = self.frac[i] + self.delta[i];
            let p = h00 * y0 + h01 * y1 + h * (h10 * self.k[0][i] + h11 * self.k[6][i]);
            let (kk, f) = wrap_unit(p);
            wind_out[i] = self.winding[i] + kk;
            frac_out[i] = f;
        }
    }
}

/// Integrate from a lifted initial state, streaming samples at multiples of
/// `sample_every` (plus t = 0 and the endpoint) into `sink(t, winding, frac)`.
///
/// `t_end` may be negative (time reversal). On step-size underflow the
/// samples emitted so far stand and the outcome carries the stall marker.
pub fn flow_with(
    field: &FieldSpec,
    start: &LiftedState,
    t_end: f64,
    config: &IntegratorConfig,
    sample_every: f64,
    mut sink: impl FnMut(f64, &[i64], &[f64]),
) -> Result<FlowOutcome, IntegrateError> {
    config.validate()?;
    if field.dim() != start.dim() {
        return Err(IntegrateError::Dimension {
            field: field.dim(),
            state: start.dim(),
        });
    }
    if !(sample_every > 0.0) {
        return Err(IntegrateError::BadConfig(
            "sample_every must be positive".into(),
        ));
    }
    if !t_end.is_finite() {
        return Err(IntegrateError::BadConfig("t_end must be finite".into()));
    }
    let mut stepper = Stepper::new(field, start);
    sink(0.0, &stepper.winding, &stepper.frac);
    if t_end == 0.0 {
        return Ok(FlowOutcome {
            end: stepper.state(),
            end_time: 0.0,
            stall: None,
            steps: 0,
            rejected: 0,
        });
    }
    let dir = t_end.signum();
    let tiny = 1e-12 * t_end.abs().max(1.0);
    let mut h = dir * config.max_step.min(t_end.abs());
    let mut next_sample = 1u64;
    let mut steps = 0u64;
    let mut rejected = 0u64;
    let fixed = matches!(config.scheme, Scheme::FixedRk4);
    let mut wind_buf = vec![0i64; stepper.d];
    let mut frac_buf = vec![0.0; stepper.d];

    loop {
        let remaining = t_end - stepper.t;
        if remaining.abs() <= config.min_step * 0.5 {
            break;
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }

        let err = if fixed {
            stepper.attempt_rk4(h);
            0.0
        } else {
            stepper.attempt_dp(h, config.abs_tol, config.rel_tol)
        };
        if !err.is_finite() || stepper.delta.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFinite { t: stepper.t });
        }

        if err <= 1.0 {
            let t_new = stepper.t + h;
            loop {
                let ts = next_sample as f64 * sample_every * dir;
                if dir * (ts - t_new) > tiny || dir * (t_end - ts) <= tiny {
                    break;
                }
                let theta = ((ts - stepper.t) / h).clamp(0.0, 1.0);
                stepper.hermite(h, theta, &mut wind_buf, &mut frac_buf);
                sink(ts, &wind_buf, &frac_buf);
                next_sample += 1;
            }
            stepper.commit();
            stepper.t = t_new;
            steps += 1;
            if !fixed {
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                let mut h_new = h * factor;
                if h_new.abs() > config.max_step {
                    h_new = dir * config.max_step;
                }
                if h_new.abs() < config.min_step {
                    h_new = dir * config.min_step;
                }
                h = h_new;
            }
        } else {
            rejected += 1;
            let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            let h_new = h * factor;
            if h_new.abs() < config.min_step {
                let stall = Stall {
                    t: stepper.t,
                    state: stepper.state(),
                };
                return Ok(FlowOutcome {
                    end: stepper.state(),
                    end_time: stepper.t,
                    stall: Some(stall),
                    steps,
                    rejected,
                });
            }
            h = h_new;
        }
    }
    sink(t_end, &stepper.winding, &stepper.frac);
    Ok(FlowOutcome {
        end: stepper.state(),
        end_time: t_end,
        stall: None,
        steps,
        rejected,
    })
}

/// Integrate and collect a [`Trajectory`] sampled every `sample_every`.
pub fn flow(
    field: &FieldSpec,
    x0: &[f64],
    t_end: f64,
    config: &IntegratorConfig,
    sample_every: f64,
) -> Result<Trajectory, IntegrateError> {
    let start = LiftedState::lift(x0)?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let outcome = flow_with(field, &start, t_end, config, sample_every, |t, w, f| {
        times.push(t);
        states.push(LiftedState::from_parts(
            w.to_vec(),
            TorusPoint::from_unit_coords(f.to_vec()),
        ));
    })?;
    if times.last() != Some(&outcome.end_time) {
        times.push(outcome.end_time);
        states.push(outcome.end.clone());
    }
    Ok(Trajectory {
        times,
        states,
        field: field.clone(),
        config: *config,
        stall: outcome.stall,
    })
}

/// Endpoint-only integration; the common case for rotation estimates.
pub fn flow_endpoint(
    field: &FieldSpec,
    start: &LiftedState,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<FlowOutcome, IntegrateError> {
    flow_with(
        field,
        start,
        t_end,
        config,
        t_end.abs().max(1.0),
        |_, _, _| {},
    )
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Residual |X(s+t, x₀) − X(s, X(t, x₀))| of the semigroup identity.
/// Contract: below 1e-6 at default tolerances for |s|, |t| ≤ 100.
pub fn verify_semigroup(
    field: &FieldSpec,
    x0: &[f64],
    s: f64,
    t: f64,
    config: &IntegratorConfig,
) -> Result<f64, IntegrateError> {
    let start = LiftedState::lift(x0)?;
    let direct = require_complete(flow_endpoint(field, &start, s + t, config)?)?;
    let leg1 = require_complete(flow_endpoint(field, &start, t, config)?)?;
    let leg2 = require_complete(flow_endpoint(field, &leg1.end, s, config)?)?;
    Ok(euclid(&direct.end.position(), &leg2.end.position()))
}

/// Residual |X(t, x₀+κ) − X(t, x₀) − κ|. Both runs see identical field
/// samples by periodicity, so this is exactly zero by construction.
pub fn verify_lattice_equivariance(
    field: &FieldSpec,
    x0: &[f64],
    kappa: &[i64],
    t: f64,
    config: &IntegratorConfig,
) -> Result<f64, IntegrateError> {
    let start = LiftedState::lift(x0)?;
    let shifted = start.translated(kappa);
    let a = flow_endpoint(field, &start, t, config)?;
    let b = flow_endpoint(field, &shifted, t, config)?;
    let mut sq = 0.0;
    for i in 0..field.dim() {
        let dw = (b.end.winding()[i] - a.end.winding()[i] - kappa[i]) as f64;
        let df = b.end.base().coords()[i] - a.end.base().coords()[i];
        sq += (dw + df) * (dw + df);
    }
    Ok(sq.sqrt())
}

fn require_complete(outcome: FlowOutcome) -> Result<FlowOutcome, IntegrateError> {
    if let Some(stall) = &outcome.stall {
        return Err(IntegrateError::Stalled { t: stall.t });
    }
    Ok(outcome)
}
