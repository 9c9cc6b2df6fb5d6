//! Forward maps feeding rate evaluation through the on-disk formats.

use devia_core::diff_analysis::{control_cost, rate_diffusion, solve_fokker_planck, solve_linearized, GridField};
use devia_core::jump_analysis::{rate_i, rate_ibar, skeleton, solve_p};
use devia_core::jump_sim::JumpControl;
use devia_core::kernels::{GridConfig, KernelPair};
use devia_core::model::config::ModelConfig;
use devia_core::path::PathVec;

#[test]
fn jump_rate_of_a_skeleton_path_read_from_csv() {
    let cfg = ModelConfig::birth_death(4, 1.0, 0.5, 0.8);
    let model = cfg.build().unwrap();
    let p0 = devia_core::model::SimplexVec::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
    let p = solve_p(&*model, &p0, 1.0, 200).unwrap();
    // Differences of a potential are the least-norm controls, so the rate
    // returns their full cost.
    let mut psi = JumpControl::zero(4, 1.0, 4).unwrap();
    for bin in 0..4 {
        let w = [0.3 * bin as f64, -0.5, 0.2, 0.7 - 0.1 * bin as f64];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    psi.set(bin, i, j, w[j] - w[i]).unwrap();
                }
            }
        }
    }
    let eta = skeleton(&*model, &p, &psi).unwrap();

    let mut buf = Vec::new();
    eta.write_csv(&mut buf).unwrap();
    let back = PathVec::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, eta);

    let cost = 0.5 * psi.norm_sq(&*model, &p);
    let ibar = rate_ibar(&*model, &p, &back).unwrap();
    let i = rate_i(&*model, &p, &back).unwrap();
    assert!((ibar.value.unwrap() - cost).abs() <= 1e-6 * cost.max(1.0));
    assert!((i.value.unwrap() - ibar.value.unwrap()).abs() <= 1e-8);
}

#[test]
fn diffusion_rate_of_a_linearized_field_read_from_csv() {
    let k = KernelPair::default();
    let grid = GridConfig {
        nx: 100,
        steps: 250,
        ..GridConfig::default_grid()
    };
    let rho = solve_fokker_planck(&k, 0.5, &grid).unwrap();
    let g = |x: f64, t: f64| (-(x - t) * (x - t) / 4.0).exp();
    let eta = solve_linearized(&k, &rho, &g).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("eta.csv");
    eta.write_csv(&file).unwrap();
    let back = GridField::read_csv(&file).unwrap();
    assert!(back.same_grid(&rho));

    let rho_again = solve_fokker_planck(&k, 0.5, &back.grid_config()).unwrap();
    let rate = rate_diffusion(&k, &rho_again, &back).unwrap();
    let cost = control_cost(&rho, &g).unwrap();
    assert!(rate.feasible);
    assert!((rate.value.unwrap() - cost).abs() <= 1e-8 * cost, "{rate:?} vs {cost}");
}
