//! Reproducible experiment runner behind the `rotaflow` binary.
//!
//! Every command consumes an [`ExperimentConfig`] — either a JSON file, CLI
//! flags, or a file with flag overrides — validates it against the schema
//! (unknown keys are rejected), fills defaults explicitly, runs, and writes
//! machine-readable outputs plus a `manifest.json` echoing the fully
//! resolved configuration and library version. Re-running a manifest's
//! config reproduces the outputs byte for byte: grid sweeps are collected
//! in grid order and reduced sequentially, so results do not depend on the
//! thread count.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error (schema violation,
//! unknown catalog name, bad parameter), 3 solver non-convergence,
//! 4 all requested trajectories stalled.

use crate::elliptic::{sigma_laminate, sigma_product, sigma_unit, ConductivitySpec, EllipticError};
use crate::fields::{catalog_build, catalog_list, small_denominator, FieldError, FieldSpec};
use crate::homogenize::{run_experiment, Profile, TransportExperiment};
use crate::integrate::{IntegratorConfig, Scheme};
use crate::measures::{divcurl_residual, mean_under_measure, occupation_measure, MeasureRef};
use crate::rotation::{
    perturbation_sweep, rotation_set, rotation_vector, write_points_csv, RotationSetParams,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("all trajectories stalled")]
    StalledOnly,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::StalledOnly => 4,
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<EllipticError> for CliError {
    fn from(e: EllipticError) -> CliError {
        match e {
            EllipticError::NotConverged { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Field selection by catalog name plus JSON parameter map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSelection {
    pub name: String,
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn empty_object() -> Value {
    json!({})
}

/// Conductivity selection for `cell-solve` / conductivity-driven commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSelection {
    /// one of "unit", "laminate", "product"
    pub name: String,
    #[serde(default)]
    pub amplitude: Option<f64>,
}

/// The declarative experiment schema. Optional fields are filled with
/// documented defaults during [`ExperimentConfig::resolve`]; the resolved
/// form is echoed into every manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSelection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSelection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", rename = "T")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_cutoff: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_singleton: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_segment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

pub const COMMANDS: [&str; 8] = [
    "rotation",
    "rotation-set",
    "perturbation-sweep",
    "occupation",
    "divcurl-check",
    "cell-solve",
    "homogenize",
    "catalog-list",
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("schema violation: {e}")))
    }

    /// Overlay: any field set in `over` replaces the value here.
    pub fn overlay(mut self, over: ExperimentConfig) -> ExperimentConfig {
        if !over.command.is_empty() {
            self.command = over.command;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            field, sigma, x0, horizon, grid, grid_offset, resolution, freq_cutoff, n_list,
            epsilons, t_final, lambda, zeta, profile, p, abs_tol, rel_tol, max_step, min_step,
            scheme, tol_singleton, tol_segment, cell_tol, max_iter, sample_every, svg, seed,
            threads, out_dir
        );
        self
    }

    /// Fill every default explicitly. The result is what the manifest echoes.
    pub fn resolve(mut self) -> Result<ExperimentConfig, CliError> {
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(CliError::Config(format!(
                "unknown command `{}`; expected one of {:?}",
                self.command, COMMANDS
            )));
        }
        let c = self.command.as_str();
        let needs_field = matches!(
            c,
            "rotation" | "rotation-set" | "perturbation-sweep" | "occupation" | "divcurl-check"
        ) || (c == "homogenize" && self.sigma.is_none());
        if needs_field && self.field.is_none() {
            self.field = Some(FieldSelection {
                name: "shear_41".into(),
                params: json!({}),
            });
        }
        if c == "homogenize" {
            if let (Some(f), Some(z)) = (&mut self.field, &self.zeta) {
                // `--zeta` doubles as the constant field's parameter
                if f.name == "constant" && f.params.get("zeta").is_none() {
                    f.params["zeta"] = json!(z);
                }
            }
        }
        if matches!(c, "cell-solve") || (c == "homogenize" && self.field.is_none()) {
            if self.sigma.is_none() {
                self.sigma = Some(SigmaSelection {
                    name: "product".into(),
                    amplitude: Some(0.5),
                });
            }
        }
        if let Some(s) = &mut self.sigma {
            if s.amplitude.is_none() {
                s.amplitude = Some(0.5);
            }
        }
        self.x0.get_or_insert_with(|| vec![0.3, 0.5]);
        self.horizon.get_or_insert(1e4);
        self.grid.get_or_insert(16);
        self.grid_offset.get_or_insert(0.5);
        self.resolution
            .get_or_insert(if c == "cell-solve" || c == "homogenize" { 64 } else { 64 });
        self.freq_cutoff.get_or_insert(5);
        self.n_list.get_or_insert_with(|| vec![4, 16, 64, 256]);
        self.epsilons
            .get_or_insert_with(|| vec![0.25, 0.125, 0.0625, 0.03125, 0.015625]);
        self.t_final.get_or_insert(1.0);
        self.lambda
            .get_or_insert_with(|| vec![1.0, std::f64::consts::SQRT_2]);
        self.profile.get_or_insert_with(|| "gaussian".into());
        self.p.get_or_insert(2.0);
        let defaults = IntegratorConfig::default();
        self.abs_tol.get_or_insert(defaults.abs_tol);
        self.rel_tol.get_or_insert(defaults.rel_tol);
        self.max_step.get_or_insert(defaults.max_step);
        self.min_step.get_or_insert(defaults.min_step);
        self.scheme.get_or_insert(defaults.scheme);
        self.cell_tol.get_or_insert(1e-10);
        self.max_iter
            .get_or_insert(10 * self.resolution.unwrap());
        self.svg.get_or_insert(false);
        self.seed.get_or_insert(0);
        self.out_dir.get_or_insert_with(|| "out".into());
        // tol_singleton/tol_segment/sample_every stay None unless given:
        // their defaults are derived from field data at run time.
        Ok(self)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            abs_tol: self.abs_tol.unwrap(),
            rel_tol: self.rel_tol.unwrap(),
            max_step: self.max_step.unwrap(),
            min_step: self.min_step.unwrap(),
            scheme: self.scheme.unwrap(),
        }
    }

    fn build_field(&self) -> Result<FieldSpec, CliError> {
        let sel = self
            .field
            .as_ref()
            .ok_or_else(|| CliError::Config("a --field selection is required".into()))?;
        Ok(catalog_build(&sel.name, &sel.params)?)
    }

    fn build_sigma(&self) -> Result<ConductivitySpec, CliError> {
        let sel = self
            .sigma
            .as_ref()
            .ok_or_else(|| CliError::Config("a --sigma selection is required".into()))?;
        let amp = sel.amplitude.unwrap_or(0.5);
        let sigma = match sel.name.as_str() {
            "unit" => sigma_unit(),
            "laminate" => sigma_laminate(amp),
            "product" => sigma_product(amp),
            other => {
                return Err(CliError::Config(format!(
                    "unknown sigma `{other}`; expected unit | laminate | product"
                )))
            }
        };
        Ok(ConductivitySpec::new(sigma, self.resolution.unwrap())?)
    }
}

/// Everything a run produced, for callers that embed the runner.
#[derive(Debug, Serialize)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Value,
}

/// Execute a resolved config: compute, write outputs and the manifest.
pub fn run(config: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    let threads = config
        .threads
        .or_else(|| {
            std::env::var("ROTAFLOW_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(num_cpus);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| run_inner(config))
}

fn num_cpus() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn run_inner(config: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    let out_dir = PathBuf::from(config.out_dir.as_deref().unwrap_or("out"));
    fs::create_dir_all(&out_dir)?;
    let mut files: Vec<String> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let cfg = config.integrator();

    let summary: Value = match config.command.as_str() {
        "catalog-list" => {
            let entries = catalog_list();
            write_json(&out_dir, "catalog.json", &entries, &mut files)?;
            json!({ "entries": entries.len() })
        }
        "rotation" => {
            let field = config.build_field()?;
            warnings.extend(field.warnings().iter().cloned());
            let est = rotation_vector(&field, config.x0.as_ref().unwrap(), config.horizon.unwrap(), &cfg)
                .map_err(|e| CliError::Config(e.to_string()))?;
            if est.stalled {
                warnings.push(format!("trajectory stalled at t = {}", est.horizon));
            }
            write_json(&out_dir, "rotation.json", &est, &mut files)?;
            let stalled_only = est.stalled;
            let summary = json!({
                "zeta_hat": est.zeta_hat,
                "cauchy_gap": est.cauchy_gap,
                "stalled": est.stalled,
            });
            if stalled_only {
                finalize(&out_dir, config, files, warnings, &summary)?;
                return Err(CliError::StalledOnly);
            }
            summary
        }
        "rotation-set" => {
            let field = config.build_field()?;
            warnings.extend(field.warnings().iter().cloned());
            let mut params =
                RotationSetParams::new(config.grid.unwrap(), config.horizon.unwrap());
            params.grid_offset = config.grid_offset.unwrap();
            params.tol_singleton = config.tol_singleton;
            params.tol_segment = config.tol_segment;
            let set = rotation_set(&field, &params, &cfg)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = Vec::new();
            write_points_csv(&set.points, field.dim(), &mut csv)?;
            write_bytes(&out_dir, "points.csv", &csv, &mut files)?;
            write_json(&out_dir, "rotation_set.json", &set, &mut files)?;
            if set.points.iter().all(|p| p.stalled) {
                finalize(&out_dir, config, files, warnings, &json!({}))?;
                return Err(CliError::StalledOnly);
            }
            json!({
                "classification": set.classification,
                "diameter": set.diameter,
                "collinearity_defect": set.collinearity_defect,
            })
        }
        "perturbation-sweep" => {
            let sel = config
                .field
                .as_ref()
                .ok_or_else(|| CliError::Config("--field family required".into()))?;
            let family_name = sel.name.clone();
            let base_params = sel.params.clone();
            let family = |n: u32| -> Result<FieldSpec, FieldError> {
                let mut p = base_params.clone();
                if !p.is_object() {
                    p = json!({});
                }
                p["n"] = json!(n);
                catalog_build(&family_name, &p)
            };
            // family members must be the perturbed catalog entries
            if !family_name.contains("perturbed") && family_name != "constant" {
                return Err(CliError::Config(format!(
                    "`{family_name}` is not a perturbation family; use shear_41_perturbed or vanishing_segment_42_perturbed"
                )));
            }
            let mut params =
                RotationSetParams::new(config.grid.unwrap(), config.horizon.unwrap());
            params.grid_offset = config.grid_offset.unwrap();
            params.tol_singleton = config.tol_singleton;
            params.tol_segment = config.tol_segment;
            let members = perturbation_sweep(family, config.n_list.as_ref().unwrap(), &params, &cfg)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = String::from("n,zeta_1,zeta_2,diameter,singleton\n");
            for m in &members {
                let z = m.zeta.clone().unwrap_or_else(|| vec![f64::NAN, f64::NAN]);
                csv.push_str(&format!(
                    "{},{:.16e},{:.16e},{:.16e},{}\n",
                    m.n,
                    z[0],
                    z.get(1).copied().unwrap_or(f64::NAN),
                    m.diameter,
                    !m.hypothesis_violated
                ));
            }
            write_bytes(&out_dir, "sweep.csv", csv.as_bytes(), &mut files)?;
            write_json(&out_dir, "sweep.json", &members, &mut files)?;
            json!({
                "members": members.len(),
                "violations": members.iter().filter(|m| m.hypothesis_violated).count(),
            })
        }
        "occupation" => {
            let field = config.build_field()?;
            warnings.extend(field.warnings().iter().cloned());
            let m = occupation_measure(
                &field,
                config.x0.as_ref().unwrap(),
                config.horizon.unwrap(),
                config.resolution.unwrap(),
                &cfg,
                config.sample_every,
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = Vec::new();
            m.write_csv(&mut csv)?;
            write_bytes(&out_dir, "occupation.csv", &csv, &mut files)?;
            let mean = mean_under_measure(&field, &m).unwrap();
            let summary = json!({
                "mean_under_measure": mean,
                "samples": m.samples,
                "stalled": m.stalled,
            });
            write_json(&out_dir, "occupation.json", &summary, &mut files)?;
            summary
        }
        "divcurl-check" => {
            let field = config.build_field()?;
            warnings.extend(field.warnings().iter().cloned());
            let k = config.freq_cutoff.unwrap();
            let report = match field.flow_invariant_density() {
                Some(density) => divcurl_residual(
                    &field,
                    &MeasureRef::Analytic {
                        density: density.as_ref(),
                        quad_nodes: 128,
                    },
                    k,
                ),
                None => {
                    let m = occupation_measure(
                        &field,
                        config.x0.as_ref().unwrap(),
                        config.horizon.unwrap(),
                        config.resolution.unwrap(),
                        &cfg,
                        config.sample_every,
                    )
                    .map_err(|e| CliError::Config(e.to_string()))?;
                    divcurl_residual(&field, &MeasureRef::Occupation(&m), k)
                }
            }
            .map_err(|e| CliError::Config(e.to_string()))?;
            write_json(&out_dir, "divcurl.json", &report, &mut files)?;
            json!({
                "max_residual": report.max_residual,
                "decay_bound": report.decay_bound,
            })
        }
        "cell-solve" => {
            let spec = config.build_sigma()?;
            let sol = crate::elliptic::solve_cell(&spec, config.cell_tol, config.max_iter)?;
            let lambda_v = config.lambda.as_ref().unwrap();
            if lambda_v.len() != 2 {
                return Err(CliError::Config("lambda must have 2 components".into()));
            }
            let lambda = [lambda_v[0], lambda_v[1]];
            let a_lambda = sol.a_star_times(&lambda);
            if let Some((kappa, val)) = small_denominator(&a_lambda, 20, 1e-6) {
                warnings.push(format!(
                    "ergodic condition at risk: |(A* lambda) . {kappa:?}| = {val:.3e} < 1e-6"
                ));
            }
            let mut csv = Vec::new();
            sol.write_du_csv(&mut csv)?;
            write_bytes(&out_dir, "du.csv", &csv, &mut files)?;
            let summary = json!({
                "a_star": sol.a_star,
                "residual": sol.residual,
                "iterations": sol.iterations,
                "a_star_lambda": a_lambda,
                "sigma_weighted_mean_b": sol.sigma_weighted_mean_b(&lambda),
            });
            write_json(&out_dir, "cell.json", &summary, &mut files)?;
            summary
        }
        "homogenize" => {
            let (field, zeta) = if let Some(sel) = &config.field {
                let field = catalog_build(&sel.name, &sel.params)?;
                let zeta = config.zeta.clone().ok_or_else(|| {
                    CliError::Config(
                        "homogenize with a catalog field needs an explicit --zeta".into(),
                    )
                })?;
                (field, zeta)
            } else {
                // conductivity route: b_lambda with zeta = A* lambda
                let spec = config.build_sigma()?;
                let sol = crate::elliptic::solve_cell(&spec, config.cell_tol, config.max_iter)?;
                let lambda_v = config.lambda.as_ref().unwrap();
                if lambda_v.len() != 2 {
                    return Err(CliError::Config("lambda must have 2 components".into()));
                }
                let lambda = [lambda_v[0], lambda_v[1]];
                let field = sol.electric_field(lambda)?;
                let a_lambda = sol.a_star_times(&lambda);
                if let Some((kappa, val)) = small_denominator(&a_lambda, 20, 1e-6) {
                    warnings.push(format!(
                        "ergodic condition at risk: |(A* lambda) . {kappa:?}| = {val:.3e} < 1e-6"
                    ));
                }
                (field, config.zeta.clone().unwrap_or_else(|| a_lambda.to_vec()))
            };
            warnings.extend(field.warnings().iter().cloned());
            let profile = match config.profile.as_deref().unwrap() {
                "gaussian" => Profile::gaussian_bump(vec![0.5; field.dim()], 0.15),
                "trig" => Profile::trig_polynomial(),
                other => {
                    return Err(CliError::Config(format!(
                        "unknown profile `{other}`; expected gaussian | trig"
                    )))
                }
            };
            let mut exp = TransportExperiment::new(
                field,
                profile,
                config.epsilons.clone().unwrap(),
                config.t_final.unwrap(),
            );
            exp.p = config.p.unwrap();
            exp.config = cfg;
            let table = run_experiment(&exp, &zeta).map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            write_bytes(&out_dir, "homogenize.csv", &csv, &mut files)?;
            write_json(&out_dir, "homogenize.json", &table, &mut files)?;
            if config.svg.unwrap_or(false) {
                let svg = render_loglog_svg(&table.rows.iter().map(|r| (r.epsilon, r.lp_error)).collect::<Vec<_>>());
                write_bytes(&out_dir, "homogenize.svg", svg.as_bytes(), &mut files)?;
            }
            json!({
                "zeta": zeta,
                "errors": table.rows.iter().map(|r| r.lp_error).collect::<Vec<_>>(),
                "oscillation": table.oscillation,
            })
        }
        other => return Err(CliError::Config(format!("unknown command `{other}`"))),
    };

    finalize(&out_dir, config, files.clone(), warnings, &summary)?;
    let mut all_files = files;
    all_files.push("manifest.json".into());
    Ok(RunArtifacts {
        out_dir,
        files: all_files,
        summary,
    })
}

fn finalize(
    out_dir: &Path,
    config: &ExperimentConfig,
    files: Vec<String>,
    warnings: Vec<String>,
    summary: &Value,
) -> Result<(), CliError> {
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "outputs": files,
        "warnings": warnings,
        "summary": summary,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn write_json<T: Serialize>(
    out_dir: &Path,
    name: &str,
    value: &T,
    files: &mut Vec<String>,
) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization: {e}")))?;
    fs::write(out_dir.join(name), text + "\n")?;
    files.push(name.to_string());
    Ok(())
}

fn write_bytes(
    out_dir: &Path,
    name: &str,
    bytes: &[u8],
    files: &mut Vec<String>,
) -> Result<(), CliError> {
    fs::write(out_dir.join(name), bytes)?;
    files.push(name.to_string());
    Ok(())
}

/// Minimal deterministic log-log polyline plot (no timestamps, no external
/// assets) for the homogenization sweep.
pub fn render_loglog_svg(points: &[(f64, f64)]) -> String {
    let w = 480.0;
    let h = 360.0;
    let margin = 50.0;
    let finite: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if finite.len() >= 2 {
        let (x_lo, x_hi) = min_max(finite.iter().map(|p| p.0));
        let (y_lo, y_hi) = min_max(finite.iter().map(|p| p.1));
        let sx = |x: f64| margin + (x - x_lo) / (x_hi - x_lo).max(1e-12) * (w - 2.0 * margin);
        let sy = |y: f64| h - margin - (y - y_lo) / (y_hi - y_lo).max(1e-12) * (h - 2.0 * margin);
        let path: Vec<String> = finite
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in &finite {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n",
                sx(x),
                sy(y)
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">log10 epsilon</text>\n",
        w / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">log10 Lp error</text>\n",
        h / 2.0,
        h / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in it {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn tmpdir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("rotaflow_cli_{name}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn schema_rejects_unknown_keys() {
        let err = ExperimentConfig::from_json(r#"{"command": "rotation", "bogus": 1}"#);
        assert!(matches!(err, Err(CliError::Config(_))));
        let err = ExperimentConfig::from_json(r#"{"command": "nope"}"#)
            .unwrap()
            .resolve();
        assert!(matches!(err, Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_catalog_name_is_config_error() {
        let cfg = ExperimentConfig {
            command: "rotation".into(),
            field: Some(FieldSelection {
                name: "no_such".into(),
                params: json!({}),
            }),
            horizon: Some(10.0),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rotation_run_produces_manifest_and_outputs() {
        let dir = tmpdir("rotation");
        let cfg = ExperimentConfig {
            command: "rotation".into(),
            field: Some(FieldSelection {
                name: "constant".into(),
                params: json!({"zeta": [1.0, 2.0]}),
            }),
            horizon: Some(50.0),
            out_dir: Some(dir.to_str().unwrap().into()),
            threads: Some(1),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let artifacts = run(&cfg).unwrap();
        assert!(artifacts.files.contains(&"rotation.json".to_string()));
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config"]["command"], "rotation");
        assert_eq!(manifest["config"]["T"], 50.0);
        // defaults are echoed explicitly
        assert!(manifest["config"]["abs_tol"].is_number());
        let est: Value =
            serde_json::from_str(&fs::read_to_string(dir.join("rotation.json")).unwrap()).unwrap();
        assert!((est["zeta_hat"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn determinism_byte_identical_reruns() {
        let dir_a = tmpdir("det_a");
        let dir_b = tmpdir("det_b");
        for (dir, threads) in [(&dir_a, 1usize), (&dir_b, 3usize)] {
            let cfg = ExperimentConfig {
                command: "rotation-set".into(),
                field: Some(FieldSelection {
                    name: "determinant_shear_43".into(),
                    params: json!({}),
                }),
                horizon: Some(20.0),
                grid: Some(3),
                abs_tol: Some(1e-8),
                rel_tol: Some(1e-8),
                out_dir: Some(dir.to_str().unwrap().into()),
                threads: Some(threads),
                ..Default::default()
            }
            .resolve()
            .unwrap();
            run(&cfg).unwrap();
        }
        // identical CSV/JSON bytes regardless of thread count (manifest
        // differs in the echoed thread override only)
        for name in ["points.csv", "rotation_set.json"] {
            let a = fs::read(dir_a.join(name)).unwrap();
            let b = fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
    }

    #[test]
    fn catalog_list_and_cell_solve_run() {
        let dir = tmpdir("catalog");
        let cfg = ExperimentConfig {
            command: "catalog-list".into(),
            out_dir: Some(dir.to_str().unwrap().into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        run(&cfg).unwrap();
        assert!(Path::new(&dir.join("catalog.json")).exists());

        let cfg = ExperimentConfig {
            command: "cell-solve".into(),
            sigma: Some(SigmaSelection {
                name: "laminate".into(),
                amplitude: Some(0.5),
            }),
            resolution: Some(32),
            out_dir: Some(dir.to_str().unwrap().into()),
            threads: Some(1),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let artifacts = run(&cfg).unwrap();
        let a11 = artifacts.summary["a_star"][0][0].as_f64().unwrap();
        assert!((a11 - 0.75f64.sqrt()).abs() < 1e-6);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn homogenize_constant_control() {
        let dir = tmpdir("homog");
        let cfg = ExperimentConfig {
            command: "homogenize".into(),
            field: Some(FieldSelection {
                name: "constant".into(),
                params: json!({}),
            }),
            zeta: Some(vec![1.0, 2.0]),
            epsilons: Some(vec![0.5, 0.25]),
            t_final: Some(0.5),
            svg: Some(true),
            out_dir: Some(dir.to_str().unwrap().into()),
            threads: Some(1),
            ..Default::default()
        };
        // resolve() copies --zeta into the constant field's parameters
        let cfg = cfg.resolve().unwrap();
        assert_eq!(cfg.field.as_ref().unwrap().params["zeta"], json!([1.0, 2.0]));
        let artifacts = run(&cfg).unwrap();
        for e in artifacts.summary["errors"].as_array().unwrap() {
            assert!(e.as_f64().unwrap() < 1e-9);
        }
        assert!(dir.join("homogenize.svg").exists());
        let svg = fs::read_to_string(dir.join("homogenize.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn overlay_precedence() {
        let base = ExperimentConfig::from_json(
            r#"{"command": "rotation", "T": 100.0, "grid": 8}"#,
        )
        .unwrap();
        let over = ExperimentConfig {
            command: String::new(),
            horizon: Some(25.0),
            ..Default::default()
        };
        let merged = base.overlay(over).resolve().unwrap();
        assert_eq!(merged.horizon, Some(25.0));
        assert_eq!(merged.grid, Some(8));
        assert_eq!(merged.command, "rotation");
    }
}
