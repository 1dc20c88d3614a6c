//! The built-in field catalog.
//!
//! Every entry is an explicit trigonometric expression with closed-form
//! gradients — no automatic differentiation. Entries are addressable by
//! name + parameter map (the CLI surface) or through the typed constructors
//! on [`FieldSpec`].
//!
//! Conventions: a(x) = sin²(πx₁) + sin²(πx₂); R⊥ is the −π/2 rotation,
//! R⊥(v₁,v₂) = (v₂, −v₁).

use super::{Factorization, FieldError, FieldSpec, ScalarField, VectorField};
use crate::torus::TorusPoint;
use serde_json::{json, Map, Value};
use std::f64::consts::{PI, SQRT_2, TAU};
use std::sync::Arc;

/// a(x) = sin²(πx₁) + sin²(πx₂), the speed profile of the shear examples.
/// Vanishes only at the lattice points.
pub(crate) struct SumSinSq;

impl ScalarField for SumSinSq {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s1 = (PI * x[0]).sin();
        let s2 = (PI * x[1]).sin();
        s1 * s1 + s2 * s2
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = PI * (TAU * x[0]).sin();
        out[1] = PI * (TAU * x[1]).sin();
    }
}

/// (a(x) + shift)^alpha with the gradient α(a+shift)^{α−1}∇a.
/// alpha == 1 is special-cased to plain a + shift.
pub(crate) struct ShiftedPowSumSinSq {
    pub shift: f64,
    pub alpha: f64,
}

impl ScalarField for ShiftedPowSumSinSq {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        let b = SumSinSq.value(x) + self.shift;
        if self.alpha == 1.0 {
            b
        } else if b <= 0.0 {
            0.0
        } else {
            b.powf(self.alpha)
        }
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        SumSinSq.gradient_into(x, out);
        if self.alpha == 1.0 {
            return;
        }
        let b = SumSinSq.value(x) + self.shift;
        let scale = if b <= 0.0 {
            0.0
        } else {
            self.alpha * b.powf(self.alpha - 1.0)
        };
        out[0] *= scale;
        out[1] *= scale;
    }
}

/// v(x) = sin(2πx₁)·sin(2πx₂), the potential of the gradient-flow entry.
pub(crate) struct TrigProductV;

impl ScalarField for TrigProductV {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        (TAU * x[0]).sin() * (TAU * x[1]).sin()
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = TAU * (TAU * x[0]).cos() * (TAU * x[1]).sin();
        out[1] = TAU * (TAU * x[0]).sin() * (TAU * x[1]).cos();
    }
}

fn det_shear_w(beta: f64, x: &[f64]) -> f64 {
    1.0 + beta * (TAU * x[0]).sin() * (TAU * x[1]).cos()
}

/// Speed f = scale / (1 + β sin(2πx₁)cos(2πx₂)). The denominator integrates
/// to 1 along every horizontal line, which keeps ∇u₁ⁿ periodic in the
/// determinant construction.
pub(crate) struct DetShearSpeed {
    pub beta: f64,
    pub scale: f64,
}

impl ScalarField for DetShearSpeed {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.scale / det_shear_w(self.beta, x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let w = det_shear_w(self.beta, x);
        let dw1 = self.beta * TAU * (TAU * x[0]).cos() * (TAU * x[1]).cos();
        let dw2 = -self.beta * TAU * (TAU * x[0]).sin() * (TAU * x[1]).sin();
        let k = -self.scale / (w * w);
        out[0] = k * dw1;
        out[1] = k * dw2;
    }
}

/// u₂′(x₂) = 1 + amp·cos(2πx₂) for u₂(x₂) = x₂ + amp·sin(2πx₂)/(2π).
pub(crate) struct U2Prime {
    pub amp: f64,
}

impl ScalarField for U2Prime {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        1.0 + self.amp * (TAU * x[1]).cos()
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = -self.amp * TAU * (TAU * x[1]).sin();
    }
}

/// ρ = f / u₂′ for the determinant construction.
pub(crate) struct DetShearRho {
    pub beta: f64,
    pub u2_amp: f64,
    pub scale: f64,
}

impl ScalarField for DetShearRho {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        let w = det_shear_w(self.beta, x);
        let p = 1.0 + self.u2_amp * (TAU * x[1]).cos();
        self.scale / (w * p)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let w = det_shear_w(self.beta, x);
        let p = 1.0 + self.u2_amp * (TAU * x[1]).cos();
        let dw1 = self.beta * TAU * (TAU * x[0]).cos() * (TAU * x[1]).cos();
        let dw2 = -self.beta * TAU * (TAU * x[0]).sin() * (TAU * x[1]).sin();
        let dp2 = -self.u2_amp * TAU * (TAU * x[1]).sin();
        let wp = w * p;
        let k = -self.scale / (wp * wp);
        out[0] = k * dw1 * p;
        out[1] = k * (dw2 * p + w * dp2);
    }
}

/// The constant scalar 1 on Y_d — the invariant density of every
/// constant-direction catalog entry.
pub(crate) struct UnitDensity {
    pub dim: usize,
}

impl ScalarField for UnitDensity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        1.0
    }
    fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

pub(crate) struct ConstantVec {
    pub zeta: Vec<f64>,
}

impl VectorField for ConstantVec {
    fn dim(&self) -> usize {
        self.zeta.len()
    }
    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.zeta);
    }
}

/// b(x) = ρ(x)·dir for a fixed direction vector.
pub(crate) struct ScaledDir {
    pub rho: Arc<dyn ScalarField>,
    pub dir: Vec<f64>,
}

impl VectorField for ScaledDir {
    fn dim(&self) -> usize {
        self.dir.len()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let r = self.rho.value(x);
        for (o, &d) in out.iter_mut().zip(&self.dir) {
            *o = r * d;
        }
    }
}

/// b(x) = A∇v(x) for a constant symmetric non-negative matrix A.
pub(crate) struct MatGradFlow {
    pub matrix: Vec<f64>, // d x d, row-major
    pub v: Arc<dyn ScalarField>,
}

impl VectorField for MatGradFlow {
    fn dim(&self) -> usize {
        self.v.dim()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut g = [0.0; 8];
        let g = &mut g[..d];
        self.v.gradient_into(x, g);
        for i in 0..d {
            let mut acc = 0.0;
            for (j, &gj) in g.iter().enumerate() {
                acc += self.matrix[i * d + j] * gj;
            }
            out[i] = acc;
        }
    }
}

/// R⊥v = (v₂, −v₁), the −π/2 rotation.
pub fn r_perp(v: &[f64; 2]) -> [f64; 2] {
    [v[1], -v[0]]
}

/// Warn about near-resonances |v·κ| < tol over 0 < |κ|_∞ ≤ bound.
pub fn small_denominator(v: &[f64], bound: i64, tol: f64) -> Option<(Vec<i64>, f64)> {
    assert_eq!(v.len(), 2, "small-denominator scan implemented for d = 2");
    let mut worst: Option<(Vec<i64>, f64)> = None;
    for k1 in -bound..=bound {
        for k2 in -bound..=bound {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let val = (v[0] * k1 as f64 + v[1] * k2 as f64).abs();
            if val < tol && worst.as_ref().map_or(true, |(_, w)| val < *w) {
                worst = Some((vec![k1, k2], val));
            }
        }
    }
    worst
}

impl FieldSpec {
    /// The constant field b ≡ ζ.
    pub fn constant(zeta: Vec<f64>) -> Result<FieldSpec, FieldError> {
        if zeta.is_empty() {
            return Err(FieldError::BadParams {
                name: "constant".into(),
                reason: "zeta must have dimension >= 1".into(),
            });
        }
        let dim = zeta.len();
        let nonzero = zeta.iter().any(|&z| z != 0.0);
        let b: Arc<dyn VectorField> = Arc::new(ConstantVec { zeta: zeta.clone() });
        let fac = nonzero.then(|| Factorization {
            rho: Arc::new(UnitDensity { dim }) as Arc<dyn ScalarField>,
            phi: b.clone(),
        });
        let mut spec = FieldSpec::custom(
            "constant",
            json!({ "zeta": zeta }),
            b,
            fac,
            Some(Arc::new(UnitDensity { dim })),
            nonzero.then(Vec::new),
        );
        if !nonzero {
            spec.push_warning("constant field is identically zero");
        }
        Ok(spec)
    }

    /// b(x) = a(x)·e₁ with a = sin²(πx₁)+sin²(πx₂): horizontal shear whose
    /// rows each carry their own line harmonic mean.
    pub fn shear_41() -> FieldSpec {
        let rho: Arc<dyn ScalarField> = Arc::new(SumSinSq);
        let b = Arc::new(ScaledDir {
            rho: rho.clone(),
            dir: vec![1.0, 0.0],
        });
        FieldSpec::custom(
            "shear_41",
            json!({}),
            b,
            Some(Factorization {
                rho,
                phi: Arc::new(ConstantVec { zeta: vec![1.0, 0.0] }),
            }),
            Some(Arc::new(UnitDensity { dim: 2 })),
            Some(vec![TorusPoint::from_unit_coords(vec![0.0, 0.0])]),
        )
    }

    /// b_n(x) = (a(x)+1/n)(e₁ + γe₂): the tilted positive perturbation of the
    /// shear. For irrational γ the flow is uniquely ergodic with rotation
    /// vector (2D harmonic mean of a+1/n)·(1, γ).
    pub fn shear_41_perturbed(n: u32, gamma: f64) -> Result<FieldSpec, FieldError> {
        if n == 0 {
            return Err(FieldError::BadParams {
                name: "shear_41_perturbed".into(),
                reason: "n must be >= 1".into(),
            });
        }
        let rho: Arc<dyn ScalarField> = Arc::new(ShiftedPowSumSinSq {
            shift: 1.0 / n as f64,
            alpha: 1.0,
        });
        let dir = vec![1.0, gamma];
        let b = Arc::new(ScaledDir {
            rho: rho.clone(),
            dir: dir.clone(),
        });
        let mut spec = FieldSpec::custom(
            "shear_41_perturbed",
            json!({ "n": n, "gamma": gamma }),
            b,
            Some(Factorization {
                rho,
                phi: Arc::new(ConstantVec { zeta: dir.clone() }),
            }),
            Some(Arc::new(UnitDensity { dim: 2 })),
            Some(vec![]),
        );
        if let Some((kappa, val)) = small_denominator(&dir, 20, 1e-6) {
            spec.push_warning(format!(
                "direction (1, gamma) nearly resonant: |dir . {kappa:?}| = {val:.3e}; \
                 the member may not be uniquely ergodic"
            ));
        }
        Ok(spec)
    }

    /// b(x) = (sin²(πx₁)+sin²(πx₂))^α · R⊥ξ: constant direction, speed
    /// vanishing at the origin. α ∈ (1/2, 1) is the C¹ segment branch;
    /// α ≥ 1 is the null-asymptotics branch.
    pub fn vanishing_segment_42(alpha: f64, xi: [f64; 2]) -> Result<FieldSpec, FieldError> {
        Self::vanishing_segment_inner("vanishing_segment_42", alpha, xi, None)
    }

    /// The positive member ρ_n = (a + 1/n)^α of the segment family.
    pub fn vanishing_segment_42_perturbed(
        alpha: f64,
        xi: [f64; 2],
        n: u32,
    ) -> Result<FieldSpec, FieldError> {
        if n == 0 {
            return Err(FieldError::BadParams {
                name: "vanishing_segment_42_perturbed".into(),
                reason: "n must be >= 1".into(),
            });
        }
        Self::vanishing_segment_inner("vanishing_segment_42_perturbed", alpha, xi, Some(n))
    }

    fn vanishing_segment_inner(
        name: &str,
        alpha: f64,
        xi: [f64; 2],
        n: Option<u32>,
    ) -> Result<FieldSpec, FieldError> {
        if xi == [0.0, 0.0] {
            return Err(FieldError::BadParams {
                name: name.into(),
                reason: "xi must be non-zero".into(),
            });
        }
        if alpha <= 0.0 {
            return Err(FieldError::BadParams {
                name: name.into(),
                reason: "alpha must be positive".into(),
            });
        }
        let shift = n.map_or(0.0, |n| 1.0 / n as f64);
        let rho: Arc<dyn ScalarField> = Arc::new(ShiftedPowSumSinSq { shift, alpha });
        let dir = r_perp(&xi).to_vec();
        let b = Arc::new(ScaledDir {
            rho: rho.clone(),
            dir: dir.clone(),
        });
        let zero_set = if n.is_some() {
            vec![]
        } else {
            vec![TorusPoint::from_unit_coords(vec![0.0, 0.0])]
        };
        let mut params = Map::new();
        params.insert("alpha".into(), json!(alpha));
        params.insert("xi".into(), json!(xi.to_vec()));
        if let Some(n) = n {
            params.insert("n".into(), json!(n));
        }
        let mut spec = FieldSpec::custom(
            name,
            Value::Object(params),
            b,
            Some(Factorization {
                rho,
                phi: Arc::new(ConstantVec { zeta: dir }),
            }),
            Some(Arc::new(UnitDensity { dim: 2 })),
            Some(zero_set),
        );
        if !(0.5 < alpha && alpha < 1.0) {
            spec.push_warning(format!(
                "alpha = {alpha} outside (1/2, 1): alpha >= 1 is the null-asymptotics \
                 branch (harmonic mean 0), alpha <= 1/2 loses C^1 regularity"
            ));
        }
        if let Some((kappa, val)) = small_denominator(&xi, 20, 1e-6) {
            spec.push_warning(format!(
                "ergodic condition nearly violated: |xi . {kappa:?}| = {val:.3e}"
            ));
        }
        Ok(spec)
    }

    /// b(x) = f(x)·e₁ with f = scale/(1+β sin(2πx₁)cos(2πx₂)): the
    /// determinant construction with a = 1, u₂(x₂) = x₂ + amp·sin(2πx₂)/(2π).
    /// Row integrals of 1/f are all equal, so the rotation vector is the
    /// singleton e₁·scale regardless of ergodicity.
    pub fn determinant_shear_43(beta: f64, u2_amp: f64, scale: f64) -> Result<FieldSpec, FieldError> {
        if beta.abs() >= 1.0 || u2_amp.abs() >= 1.0 {
            return Err(FieldError::BadParams {
                name: "determinant_shear_43".into(),
                reason: "need |beta| < 1 and |u2_amp| < 1 for positivity".into(),
            });
        }
        if scale <= 0.0 {
            return Err(FieldError::BadParams {
                name: "determinant_shear_43".into(),
                reason: "scale must be positive".into(),
            });
        }
        let speed: Arc<dyn ScalarField> = Arc::new(DetShearSpeed { beta, scale });
        let b = Arc::new(ScaledDir {
            rho: speed,
            dir: vec![1.0, 0.0],
        });
        let rho: Arc<dyn ScalarField> = Arc::new(DetShearRho {
            beta,
            u2_amp,
            scale,
        });
        let phi = Arc::new(ScaledDir {
            rho: Arc::new(U2Prime { amp: u2_amp }) as Arc<dyn ScalarField>,
            dir: vec![1.0, 0.0],
        });
        Ok(FieldSpec::custom(
            "determinant_shear_43",
            json!({ "beta": beta, "u2_amp": u2_amp, "scale": scale }),
            b,
            Some(Factorization { rho, phi }),
            Some(Arc::new(UnitDensity { dim: 2 })),
            Some(vec![]),
        ))
    }

    /// b = A∇v for a constant symmetric non-negative A and
    /// v = sin(2πx₁)sin(2πx₂). Current field: the flow has null asymptotics.
    pub fn gradient_flow(matrix: [[f64; 2]; 2]) -> Result<FieldSpec, FieldError> {
        let sym = (matrix[0][1] - matrix[1][0]).abs() <= 1e-14;
        let trace = matrix[0][0] + matrix[1][1];
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if !sym || trace < 0.0 || det < -1e-14 {
            return Err(FieldError::BadParams {
                name: "gradient_flow".into(),
                reason: "matrix must be symmetric non-negative".into(),
            });
        }
        let v: Arc<dyn ScalarField> = Arc::new(TrigProductV);
        let b = Arc::new(MatGradFlow {
            matrix: vec![matrix[0][0], matrix[0][1], matrix[1][0], matrix[1][1]],
            v,
        });
        // critical points of v; for nonsingular A these are exactly the
        // zeros of b
        let zero_set = (det > 1e-14).then(|| {
            [
                [0.0, 0.0],
                [0.0, 0.5],
                [0.5, 0.0],
                [0.5, 0.5],
                [0.25, 0.25],
                [0.25, 0.75],
                [0.75, 0.25],
                [0.75, 0.75],
            ]
            .iter()
            .map(|p| TorusPoint::from_unit_coords(p.to_vec()))
            .collect()
        });
        let mut spec = FieldSpec::custom(
            "gradient_flow",
            json!({ "matrix": matrix.iter().flatten().copied().collect::<Vec<_>>() }),
            b,
            None,
            None,
            zero_set,
        );
        if det <= 1e-14 {
            spec.push_warning("matrix is singular; zero set of b not catalogued");
        }
        Ok(spec)
    }
}

/// Catalog metadata for `catalog-list`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub parameters: &'static str,
}

pub fn catalog_list() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "constant",
            summary: "b == zeta everywhere; rotation set is the singleton {zeta}",
            parameters: "zeta: [f64; d] (default [1, 2])",
        },
        CatalogEntry {
            name: "shear_41",
            summary: "b = (sin^2(pi x1)+sin^2(pi x2)) e1; rotation set is the segment [0, sqrt(2) e1]",
            parameters: "(none)",
        },
        CatalogEntry {
            name: "shear_41_perturbed",
            summary: "b = (a + 1/n)(e1 + gamma e2); uniquely ergodic for irrational gamma",
            parameters: "n: u32 (default 16), gamma: f64 (default sqrt(2)/n)",
        },
        CatalogEntry {
            name: "vanishing_segment_42",
            summary: "b = (sin^2+sin^2)^alpha R_perp xi; segment [0, zeta] for alpha in (1/2,1)",
            parameters: "alpha: f64 (default 0.75), xi: [f64; 2] (default [1, sqrt(2)])",
        },
        CatalogEntry {
            name: "vanishing_segment_42_perturbed",
            summary: "positive member rho_n = (a + 1/n)^alpha of the segment family",
            parameters: "alpha: f64 (default 0.75), xi: [f64; 2] (default [1, sqrt(2)]), n: u32 (default 16)",
        },
        CatalogEntry {
            name: "determinant_shear_43",
            summary: "b = e1 * scale/(1 + beta sin(2pi x1)cos(2pi x2)); non-ergodic singleton {scale e1}",
            parameters: "beta: f64 (default 0.5), u2_amp: f64 (default 0.5), scale: f64 (default 1)",
        },
        CatalogEntry {
            name: "gradient_flow",
            summary: "b = A grad v, v = sin(2pi x1)sin(2pi x2); null asymptotics",
            parameters: "matrix: [f64; 4] row-major symmetric non-negative (default identity)",
        },
        CatalogEntry {
            name: "custom",
            summary: "programmatic fields via FieldSpec::custom (library only, not buildable from the CLI)",
            parameters: "(library API)",
        },
    ]
}

fn param_f64(params: &Value, key: &str, default: f64) -> Result<f64, String> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| format!("parameter `{key}` must be a number")),
    }
}

fn param_u32(params: &Value, key: &str, default: u32) -> Result<u32, String> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|n| n as u32)
            .ok_or_else(|| format!("parameter `{key}` must be a non-negative integer")),
    }
}

fn param_vec(params: &Value, key: &str, default: &[f64]) -> Result<Vec<f64>, String> {
    match params.get(key) {
        None => Ok(default.to_vec()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| format!("`{key}` entries must be numbers")))
            .collect(),
        Some(_) => Err(format!("parameter `{key}` must be an array of numbers")),
    }
}

fn known_keys(params: &Value, keys: &[&str]) -> Result<(), String> {
    if let Value::Object(map) = params {
        for k in map.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(format!("unknown parameter `{k}`"));
            }
        }
    }
    Ok(())
}

/// Build a catalog field from its name and a JSON parameter map.
pub fn catalog_build(name: &str, params: &Value) -> Result<FieldSpec, FieldError> {
    let bad = |reason: String| FieldError::BadParams {
        name: name.to_string(),
        reason,
    };
    match name {
        "constant" => {
            known_keys(params, &["zeta"]).map_err(bad)?;
            let zeta = param_vec(params, "zeta", &[1.0, 2.0]).map_err(bad)?;
            FieldSpec::constant(zeta)
        }
        "shear_41" => {
            known_keys(params, &[]).map_err(bad)?;
            Ok(FieldSpec::shear_41())
        }
        "shear_41_perturbed" => {
            known_keys(params, &["n", "gamma"]).map_err(bad)?;
            let n = param_u32(params, "n", 16).map_err(bad)?;
            let gamma = param_f64(params, "gamma", SQRT_2 / n.max(1) as f64).map_err(bad)?;
            FieldSpec::shear_41_perturbed(n, gamma)
        }
        "vanishing_segment_42" => {
            known_keys(params, &["alpha", "xi"]).map_err(bad)?;
            let alpha = param_f64(params, "alpha", 0.75).map_err(bad)?;
            let xi = param_vec(params, "xi", &[1.0, SQRT_2]).map_err(bad)?;
            let xi: [f64; 2] = xi
                .try_into()
                .map_err(|_| bad("xi must have exactly 2 components".into()))?;
            FieldSpec::vanishing_segment_42(alpha, xi)
        }
        "vanishing_segment_42_perturbed" => {
            known_keys(params, &["alpha", "xi", "n"]).map_err(bad)?;
            let alpha = param_f64(params, "alpha", 0.75).map_err(bad)?;
            let xi = param_vec(params, "xi", &[1.0, SQRT_2]).map_err(bad)?;
            let xi: [f64; 2] = xi
                .try_into()
                .map_err(|_| bad("xi must have exactly 2 components".into()))?;
            let n = param_u32(params, "n", 16).map_err(bad)?;
            FieldSpec::vanishing_segment_42_perturbed(alpha, xi, n)
        }
        "determinant_shear_43" => {
            known_keys(params, &["beta", "u2_amp", "scale"]).map_err(bad)?;
            let beta = param_f64(params, "beta", 0.5).map_err(bad)?;
            let amp = param_f64(params, "u2_amp", 0.5).map_err(bad)?;
            let scale = param_f64(params, "scale", 1.0).map_err(bad)?;
            FieldSpec::determinant_shear_43(beta, amp, scale)
        }
        "gradient_flow" => {
            known_keys(params, &["matrix"]).map_err(bad)?;
            let m = param_vec(params, "matrix", &[1.0, 0.0, 0.0, 1.0]).map_err(bad)?;
            if m.len() != 4 {
                return Err(bad("matrix must have 4 row-major entries".into()));
            }
            FieldSpec::gradient_flow([[m[0], m[1]], [m[2], m[3]]])
        }
        "custom" => Err(bad(
            "custom fields are built programmatically via FieldSpec::custom".into(),
        )),
        other => Err(FieldError::UnknownCatalogName(other.to_string())),
    }
}
