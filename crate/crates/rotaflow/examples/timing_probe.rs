use rotaflow::elliptic::{sigma_product, solve_cell, ConductivitySpec};
use rotaflow::integrate::IntegratorConfig;
use rotaflow::rotation::rotation_vector;
use std::time::Instant;

fn main() {
    let spec = ConductivitySpec::new(sigma_product(0.5), 64).unwrap();
    let sol = solve_cell(&spec, None, None).unwrap();
    let b = sol.electric_field([1.0, std::f64::consts::SQRT_2]).unwrap();
    println!("modes: {}", b.params()["modes"]);
    let reference = {
        let cfg = IntegratorConfig::sweep(1e-12);
        rotation_vector(&b, &[0.3, 0.7], 500.0, &cfg).unwrap().zeta_hat
    };
    for tol in [1e-7f64, 1e-6, 1e-5, 1e-4] {
        let cfg = IntegratorConfig::sweep(tol);
        let t0 = Instant::now();
        let est = rotation_vector(&b, &[0.3, 0.7], 500.0, &cfg).unwrap();
        let el = t0.elapsed().as_secs_f64();
        let dz = ((est.zeta_hat[0]-reference[0]).powi(2)+(est.zeta_hat[1]-reference[1]).powi(2)).sqrt();
        println!("tol {tol:.0e}: T=500 in {el:.3}s  |dzeta|={dz:.2e}  -> criterion9 est: {:.0}s", el*10.0*256.0);
    }
}
