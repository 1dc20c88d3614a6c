//! Vector-field catalog b = ρΦ with exact gradients, plus periodic quadrature
//! for arithmetic and harmonic means.
//!
//! A [`FieldSpec`] bundles everything downstream modules need to know about a
//! ℤ^d-periodic velocity field: the evaluation map, an optional factorization
//! b = ρΦ into a non-negative speed ρ and a non-vanishing direction Φ, an
//! optional invariant density σ (with div(σΦ) = 0), the set of zeros of ρ,
//! and a sup-norm estimate used to size tolerances.
//!
//! The harmonic mean (∫ 1/f)⁻¹ is the load-bearing quantity of the whole
//! catalog: it vanishes exactly when 1/f fails to be integrable, and the
//! quadrature here detects that by node-doubling refinement rather than
//! symbolic analysis.

mod catalog;

pub use catalog::{catalog_build, catalog_list, r_perp, small_denominator, CatalogEntry};

use crate::torus::TorusPoint;
use serde_json::Value;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("unknown catalog field `{0}`")]
    UnknownCatalogName(String),
    #[error("bad parameters for `{name}`: {reason}")]
    BadParams { name: String, reason: String },
    #[error("harmonic mean rejected: f({x:?}) = {value} is negative")]
    NegativeValue { x: Vec<f64>, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A ℤ^d-periodic scalar field with a closed-form gradient.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(x, &mut out);
        out
    }
}

/// A ℤ^d-periodic vector field.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }
}

/// The product structure b = ρΦ: ρ ≥ 0 scalar, Φ non-vanishing direction.
#[derive(Clone)]
pub struct Factorization {
    pub rho: Arc<dyn ScalarField>,
    pub phi: Arc<dyn VectorField>,
}

/// A catalog entry: the velocity field of the flow together with the
/// analytic side information the experiments rely on.
#[derive(Clone)]
pub struct FieldSpec {
    name: String,
    params: Value,
    dimension: usize,
    b: Arc<dyn VectorField>,
    factorization: Option<Factorization>,
    invariant_density: Option<Arc<dyn ScalarField>>,
    zero_set: Option<Vec<TorusPoint>>,
    sup_speed: f64,
    warnings: Vec<String>,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("dimension", &self.dimension)
            .field("sup_speed", &self.sup_speed)
            .field("warnings", &self.warnings)
            .finish()
    }
}

impl FieldSpec {
    /// Assemble a field from parts; `sup_speed` is estimated on a dense grid.
    pub fn custom(
        name: impl Into<String>,
        params: Value,
        b: Arc<dyn VectorField>,
        factorization: Option<Factorization>,
        invariant_density: Option<Arc<dyn ScalarField>>,
        zero_set: Option<Vec<TorusPoint>>,
    ) -> FieldSpec {
        let dimension = b.dim();
        let sup_speed = estimate_sup_speed(b.as_ref());
        FieldSpec {
            name: name.into(),
            params,
            dimension,
            b,
            factorization,
            invariant_density,
            zero_set,
            sup_speed,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn push_warning(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &Value {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dimension
    }

    /// Evaluate b at a point given in fractional (torus) coordinates.
    /// Periodicity makes this the value at any lift of the point.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.b.eval_into(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.b.eval(x)
    }

    pub fn velocity(&self) -> &Arc<dyn VectorField> {
        &self.b
    }

    pub fn factorization(&self) -> Option<&Factorization> {
        self.factorization.as_ref()
    }

    /// Density σ with div(σΦ) = 0, when the catalog provides one.
    pub fn invariant_density(&self) -> Option<&Arc<dyn ScalarField>> {
        self.invariant_density.as_ref()
    }

    /// Zeros of ρ. `Some(vec![])` means the field is known zero-free;
    /// `None` means the zero set is unknown.
    pub fn zero_set(&self) -> Option<&[TorusPoint]> {
        self.zero_set.as_deref()
    }

    /// Dense-grid estimate of sup |b| over the torus.
    pub fn sup_speed(&self) -> f64 {
        self.sup_speed
    }

    /// Parameter-validation notes (e.g. an exponent outside the C¹ range).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// The invariant density of the b-flow itself, σ_Φ/ρ, available when
    /// the factorization carries a Φ-companion density and ρ is known
    /// zero-free (empty zero set). Unnormalized.
    pub fn flow_invariant_density(&self) -> Option<Arc<dyn ScalarField>> {
        let fac = self.factorization.as_ref()?;
        let sigma = self.invariant_density.as_ref()?;
        match &self.zero_set {
            Some(zs) if zs.is_empty() => Some(Arc::new(RatioField {
                num: sigma.clone(),
                den: fac.rho.clone(),
            })),
            _ => None,
        }
    }
}

/// A scalar field backed by closures, for programmatic (custom) entries.
pub struct FnScalarField<V, G> {
    dim: usize,
    value: V,
    gradient: G,
}

impl<V, G> FnScalarField<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, value: V, gradient: G) -> Self {
        FnScalarField { dim, value, gradient }
    }
}

impl<V, G> ScalarField for FnScalarField<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }
}

/// A vector field backed by a closure.
pub struct FnVectorField<F> {
    dim: usize,
    eval: F,
}

impl<F> FnVectorField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, eval: F) -> Self {
        FnVectorField { dim, eval }
    }
}

impl<F> VectorField for FnVectorField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }
}

/// σ_Φ / ρ — the invariant density of the b-flow itself, bounded whenever
/// ρ is bounded away from zero.
pub(crate) struct RatioField {
    pub num: Arc<dyn ScalarField>,
    pub den: Arc<dyn ScalarField>,
}

impl ScalarField for RatioField {
    fn dim(&self) -> usize {
        self.num.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.num.value(x) / self.den.value(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let n = self.num.value(x);
        let dnv = self.den.value(x);
        let mut gn = vec![0.0; d];
        let mut gd = vec![0.0; d];
        self.num.gradient_into(x, &mut gn);
        self.den.gradient_into(x, &mut gd);
        for i in 0..d {
            out[i] = (gn[i] * dnv - n * gd[i]) / (dnv * dnv);
        }
    }
}

fn estimate_sup_speed(b: &dyn VectorField) -> f64 {
    let n = match b.dim() {
        1 => 4096,
        2 => 512,
        _ => 64,
    };
    let mut out = vec![0.0; b.dim()];
    let mut sup: f64 = 0.0;
    for_each_node(b.dim(), n, |x| {
        b.eval_into(x, &mut out);
        let s: f64 = out.iter().map(|v| v * v).sum();
        sup = sup.max(s);
    });
    sup.sqrt()
}

/// Visit the tensor-product equispaced grid {k/n}^d with a reusable buffer.
pub(crate) fn for_each_node(dim: usize, n: usize, mut visit: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0f64; dim];
    let inv = 1.0 / n as f64;
    loop {
        for (xi, &k) in x.iter_mut().zip(&idx) {
            *xi = k as f64 * inv;
        }
        visit(&x);
        let mut axis = 0;
        loop {
            if axis == dim {
                return;
            }
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

fn kahan_sum(mut fold: impl FnMut(&mut dyn FnMut(f64))) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    fold(&mut |term| {
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    });
    sum
}

/// Arithmetic mean of a periodic field by the equispaced rectangle rule
/// (trapezoid and rectangle coincide on a periodic domain), spectrally
/// accurate for smooth integrands.
pub fn periodic_mean(dim: usize, f: impl Fn(&[f64]) -> f64, nodes: usize) -> f64 {
    assert!(nodes >= 2, "periodic_mean needs at least two nodes per axis");
    let total = (nodes as f64).powi(dim as i32);
    let sum = kahan_sum(|add| for_each_node(dim, nodes, |x| add(f(x))));
    sum / total
}

/// How zeros of the integrand are handled in harmonic means.
#[derive(Debug, Clone)]
pub struct SingularityPolicy {
    /// Nodes with f below this are excluded from the 1/f quadrature.
    pub eps_sing: f64,
    /// Growth per node-doubling above which the integral is declared divergent.
    pub growth_threshold: f64,
    /// Coarsest ladder level (node count per axis).
    pub base_nodes: usize,
}

impl Default for SingularityPolicy {
    fn default() -> Self {
        SingularityPolicy {
            eps_sing: 1e-12,
            growth_threshold: 0.05,
            base_nodes: 64,
        }
    }
}

/// Arithmetic and harmonic means of a non-negative field, with divergence
/// detection for the harmonic one.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MeanReport {
    pub arithmetic: f64,
    pub harmonic: f64,
    pub quadrature_nodes: usize,
    pub singular_flag: bool,
}

/// Harmonic mean (∫ 1/f)⁻¹ of f ≥ 0 over Y_d.
///
/// Nodes where f < eps_sing are excluded, the 1/f integral is refined over a
/// node-doubling ladder up to `nodes` per axis, and divergence is declared
/// when the refined integrals grow by more than the policy threshold over
/// each of the last two doublings. A divergent integral yields harmonic = 0
/// with `singular_flag` set; this is what separates an integrable power
/// singularity (exponent < 1 per axis pair) from a non-integrable one.
pub fn harmonic_mean(
    dim: usize,
    f: impl Fn(&[f64]) -> f64,
    nodes: usize,
    policy: &SingularityPolicy,
) -> Result<MeanReport, FieldError> {
    let ladder = ladder_levels(policy.base_nodes, nodes);
    let mut integrals = Vec::with_capacity(ladder.len());
    let mut negative: Option<(Vec<f64>, f64)> = None;
    for &n in &ladder {
        let total = (n as f64).powi(dim as i32);
        let sum = kahan_sum(|add| {
            for_each_node(dim, n, |x| {
                let v = f(x);
                if v < 0.0 && negative.is_none() {
                    negative = Some((x.to_vec(), v));
                }
                if v >= policy.eps_sing {
                    add(1.0 / v);
                }
            })
        });
        if let Some((x, value)) = negative {
            return Err(FieldError::NegativeValue { x, value });
        }
        integrals.push(sum / total);
    }
    let top = *ladder.last().unwrap();
    let arithmetic = periodic_mean(dim, &f, top);
    let singular = diverging(&integrals, policy.growth_threshold);
    let last = *integrals.last().unwrap();
    let harmonic = if singular || last == 0.0 {
        if last == 0.0 {
            // f is essentially +inf nowhere sampled below eps_sing: means f
            // was below eps_sing everywhere, treat as singular zero mean.
            return Ok(MeanReport {
                arithmetic,
                harmonic: 0.0,
                quadrature_nodes: top,
                singular_flag: true,
            });
        }
        0.0
    } else {
        1.0 / last
    };
    Ok(MeanReport {
        arithmetic,
        harmonic,
        quadrature_nodes: top,
        singular_flag: singular,
    })
}

/// One-dimensional harmonic mean of a along the axis-parallel line
/// t ↦ t·e_axis + offset, with the same singularity policy.
pub fn line_harmonic_mean(
    a: &dyn ScalarField,
    axis: usize,
    offset: &TorusPoint,
    nodes: usize,
    policy: &SingularityPolicy,
) -> Result<MeanReport, FieldError> {
    let d = a.dim();
    if offset.dim() != d || axis >= d {
        return Err(FieldError::DimensionMismatch {
            expected: d,
            got: offset.dim(),
        });
    }
    let coords = offset.coords().to_vec();
    harmonic_mean(
        1,
        move |t: &[f64]| {
            let mut x = coords.clone();
            x[axis] = t[0];
            a.value(&x)
        },
        nodes,
        policy,
    )
}

fn ladder_levels(base: usize, nodes: usize) -> Vec<usize> {
    let base = base.max(2);
    if nodes <= base {
        return vec![nodes.max(2)];
    }
    let mut levels = vec![base];
    let mut n = base;
    while n < nodes {
        n = (n * 2).min(nodes);
        levels.push(n);
    }
    levels
}

fn diverging(integrals: &[f64], threshold: f64) -> bool {
    if integrals.len() < 3 {
        return false;
    }
    let k = integrals.len();
    let g1 = integrals[k - 1] / integrals[k - 2];
    let g2 = integrals[k - 2] / integrals[k - 3];
    g1 > 1.0 + threshold && g2 > 1.0 + threshold
}

#[cfg(test)]
mod tests {
    use super::catalog::SumSinSq;
    use super::*;

    #[test]
    fn periodic_mean_constant_exact() {
        let m = periodic_mean(2, |_| 3.25, 8);
        assert_eq!(m, 3.25);
    }

    #[test]
    fn periodic_mean_sin_squared() {
        // closed form: mean of sin^2(pi x1) over the torus is 1/2
        for nodes in [4, 16, 64] {
            let m = periodic_mean(2, |x| (std::f64::consts::PI * x[0]).sin().powi(2), nodes);
            assert!((m - 0.5).abs() < 1e-12, "nodes={nodes} mean={m}");
        }
    }

    #[test]
    fn periodic_mean_shear_speed() {
        let a = SumSinSq;
        let m = periodic_mean(2, |x| a.value(x), 16);
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_mean_constant() {
        let r = harmonic_mean(2, |_| 2.5, 256, &SingularityPolicy::default()).unwrap();
        assert!(!r.singular_flag);
        assert!((r.harmonic - 2.5).abs() < 1e-12);
        assert!((r.arithmetic - 2.5).abs() < 1e-12);
    }

    #[test]
    fn harmonic_mean_1d_closed_form() {
        // oracle: \int_0^1 dt/(c + sin^2 pi t) = 1/sqrt(c(c+1)), validated
        // against high-resolution quadrature before being frozen here.
        let c = 1.0;
        let quad = periodic_mean(1, |t| 1.0 / (c + (std::f64::consts::PI * t[0]).sin().powi(2)), 8192);
        assert!((quad - 1.0 / (c * (c + 1.0)).sqrt()).abs() < 1e-13);

        let r = harmonic_mean(
            1,
            |t| c + (std::f64::consts::PI * t[0]).sin().powi(2),
            2048,
            &SingularityPolicy::default(),
        )
        .unwrap();
        assert!(!r.singular_flag);
        assert!((r.harmonic - 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_mean_detects_branches() {
        // alpha = 0.75: integrable singularity, finite positive mean;
        // alpha = 1.0: non-integrable, declared singular with harmonic = 0.
        let a = SumSinSq;
        let pol = SingularityPolicy::default();
        let fine = harmonic_mean(2, |x| a.value(x).powf(0.75), 2048, &pol).unwrap();
        assert!(!fine.singular_flag);
        assert!(fine.harmonic > 0.4 && fine.harmonic < 0.6, "{fine:?}");

        let coarse = harmonic_mean(2, |x| a.value(x), 2048, &pol).unwrap();
        assert!(coarse.singular_flag, "{coarse:?}");
        assert_eq!(coarse.harmonic, 0.0);
    }

    #[test]
    fn harmonic_mean_rejects_negative() {
        let err = harmonic_mean(1, |t| t[0] - 0.5, 128, &SingularityPolicy::default());
        assert!(matches!(err, Err(FieldError::NegativeValue { .. })));
    }

    #[test]
    fn harmonic_am_hm_order() {
        let a = SumSinSq;
        let pol = SingularityPolicy::default();
        let r = harmonic_mean(2, |x| a.value(x).powf(0.75) + 0.2, 512, &pol).unwrap();
        assert!(r.harmonic <= r.arithmetic + 1e-12);
    }

    #[test]
    fn line_harmonic_mean_rows() {
        let a = SumSinSq;
        let pol = SingularityPolicy::default();
        // row x2 = 1/2: c = 1, mean sqrt(2)
        let mid = TorusPoint::project(&[0.0, 0.5]).unwrap();
        let r = line_harmonic_mean(&a, 0, &mid, 2048, &pol).unwrap();
        assert!((r.harmonic - 2.0f64.sqrt()).abs() < 1e-10);
        // row x2 = 0: 1/sin^2 is non-integrable
        let zero = TorusPoint::project(&[0.0, 0.0]).unwrap();
        let r0 = line_harmonic_mean(&a, 0, &zero, 2048, &pol).unwrap();
        assert!(r0.singular_flag);
        assert_eq!(r0.harmonic, 0.0);
    }

    #[test]
    fn line_harmonic_mean_constant() {
        struct Three;
        impl ScalarField for Three {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, _x: &[f64]) -> f64 {
                3.0
            }
            fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
                out.fill(0.0);
            }
        }
        let off = TorusPoint::project(&[0.3, 0.77]).unwrap();
        let r = line_harmonic_mean(&Three, 1, &off, 256, &SingularityPolicy::default()).unwrap();
        assert!((r.harmonic - 3.0).abs() < 1e-12);
    }
}
