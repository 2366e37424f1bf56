//! Refinement studies for the regularized solver: self-convergence of the
//! integrator, order of the discrete energy balance residual under dt
//! halving, and shock-family behavior of the energy and defect records.

use semiflow_core::grid::{self, ScalarField, TorusGrid, VectorField};
use semiflow_core::solver::{
    energy_balance_residual, integrate_system, mollify_initial_data, to_trajectory, SolverConfig,
};
use semiflow_core::state::PressureLaw;
use semiflow_core::trajectory::defect_field_estimate;
use std::f64::consts::PI;

fn law() -> PressureLaw {
    PressureLaw::isentropic(1.0, 2.0).unwrap()
}

/// Smooth acoustic-type perturbation used across the studies.
fn wave_data(grid: TorusGrid, amplitude: f64) -> (ScalarField, VectorField) {
    let rho = ScalarField::from_fn(grid, |x| 1.0 + amplitude * (PI * x[0]).sin());
    let u = VectorField::from_fn(grid, |x, _| amplitude * (PI * x[0]).cos());
    (rho, u)
}

#[test]
fn self_convergence_of_smooth_inviscid_run() {
    // pre-shock horizon for amplitude 0.2 is well beyond 0.25
    let t_end = 0.25;
    let run_at = |n: usize, dt: f64| {
        let g = TorusGrid::new(1, n).unwrap();
        let (rho, u) = wave_data(g, 0.2);
        let config = SolverConfig::new(0.0, 1, law(), dt, t_end).with_stride(1_000_000);
        integrate_system((&rho, &u), &config).unwrap()
    };
    // coarse, medium, fine: halve dt and h together
    let coarse = run_at(64, 2e-3);
    let medium = run_at(128, 1e-3);
    let fine = run_at(256, 5e-4);

    // compare final states on the common (coarse) nodes
    let err = |run: &semiflow_core::solver::SolverRun, refine: usize| -> f64 {
        let a = run.states().last().unwrap();
        let b = fine.states().last().unwrap();
        let n = a.rho().values().len();
        let mut worst = 0.0f64;
        let fine_stride = b.rho().values().len() / n;
        let _ = refine;
        for i in 0..n {
            worst = worst.max((a.rho().values()[i] - b.rho().values()[i * fine_stride]).abs());
        }
        worst
    };
    let e_coarse = err(&coarse, 4);
    let e_medium = err(&medium, 2);
    let order = (e_coarse / e_medium).log2();
    println!("self-convergence: coarse {e_coarse:.3e}, medium {e_medium:.3e}, order {order:.2}");
    assert!(
        order >= 2.0,
        "observed convergence order {order} below 2 (errors {e_coarse:.3e}, {e_medium:.3e})"
    );
}

#[test]
fn energy_balance_residual_refines_at_second_order() {
    let t_end = 0.2;
    let study = |eps: f64, n: usize, dt: f64, stride: usize| -> f64 {
        let g = TorusGrid::new(1, n).unwrap();
        let (rho, u) = wave_data(g, 0.25);
        let config = SolverConfig::new(eps, 1, law(), dt, t_end).with_stride(stride);
        let run = integrate_system((&rho, &u), &config).unwrap();
        energy_balance_residual(&run)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    };
    for eps in [0.0, 1e-3] {
        let coarse = study(eps, 128, 2e-3, 10);
        let fine = study(eps, 128, 1e-3, 20);
        let ratio = coarse / fine.max(1e-300);
        println!("energy residual (eps={eps}): dt {coarse:.3e}, dt/2 {fine:.3e}, ratio {ratio:.2}");
        assert!(
            ratio >= 3.5,
            "eps={eps}: residual ratio {ratio} below 3.5 ({coarse:.3e} vs {fine:.3e})"
        );
    }
}

#[test]
fn equilibrium_residuals_are_machine_zero() {
    let g = TorusGrid::new(1, 64).unwrap();
    let rho = ScalarField::constant(g, 1.0);
    let u = VectorField::zero(g);
    let config = SolverConfig::new(1e-3, 1, law(), 2e-3, 0.3).with_stride(15);
    let run = integrate_system((&rho, &u), &config).unwrap();
    for r in energy_balance_residual(&run) {
        assert!(r.abs() <= 1e-12, "equilibrium residual {r}");
    }
}

#[test]
fn smoothed_riemann_run_dissipates() {
    let g = TorusGrid::new(1, 256).unwrap();
    let rho = ScalarField::from_fn(g, |x| if x[0] < 0.0 { 1.0 } else { 0.4 });
    let mom = VectorField::zero(g);
    let lw = law();
    let (rho_s, u_s) = mollify_initial_data(&rho, &mom, 0.05, &lw).unwrap();
    let config = SolverConfig::new(1e-4, 1, lw, 1e-3, 0.5).with_stride(25);
    let run = integrate_system((&rho_s, &u_s), &config).unwrap();

    // energy strictly nonincreasing across samples
    for w in run.energy().windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "energy increased {} -> {}", w[0], w[1]);
    }
    // mass conserved to spectral accuracy
    let mass0 = grid::integrate(run.states()[0].rho());
    for s in run.states() {
        assert!((grid::integrate(s.rho()) - mass0).abs() / mass0 <= 1e-10);
    }
    // the packaged trajectory has a clean defect ledger
    let e0 = run.energy()[0];
    let traj = to_trajectory(&run, e0).unwrap();
    for &d in traj.defects() {
        assert!(d >= -1e-8);
    }
    println!(
        "riemann: energy {} -> {}, dissipated {}",
        run.energy()[0],
        run.energy().last().unwrap(),
        run.dissipation().last().unwrap()
    );
}

#[test]
fn two_dimensional_run_reduces_to_one_dimensional() {
    // data constant along axis 1 must evolve exactly like the 1D run; this
    // exercises the full 2D tensor flux and stiff solve against the 1D path
    let lw = law();
    let n = 32;
    let g1 = TorusGrid::new(1, n).unwrap();
    let g2 = TorusGrid::new(2, n).unwrap();
    let rho_fn = |x: f64| 1.0 + 0.2 * (PI * x).sin() + 0.05 * (2.0 * PI * x).cos();
    let u_fn = |x: f64| 0.15 * (PI * x).cos();

    let run1 = {
        let rho = ScalarField::from_fn(g1, |x| rho_fn(x[0]));
        let u = VectorField::from_fn(g1, |x, _| u_fn(x[0]));
        let config = SolverConfig::new(1e-3, 1, lw.clone(), 2e-3, 0.2).with_stride(20);
        integrate_system((&rho, &u), &config).unwrap()
    };
    let run2 = {
        let rho = ScalarField::from_fn(g2, |x| rho_fn(x[0]));
        let u = VectorField::from_fn(g2, |x, axis| if axis == 0 { u_fn(x[0]) } else { 0.0 });
        let config = SolverConfig::new(1e-3, 1, lw.clone(), 2e-3, 0.2).with_stride(20);
        integrate_system((&rho, &u), &config).unwrap()
    };

    assert_eq!(run1.times(), run2.times());
    for (s1, s2) in run1.states().iter().zip(run2.states()) {
        for i in 0..n {
            for j in 0..n {
                let node = i * n + j;
                assert!(
                    (s2.rho().values()[node] - s1.rho().values()[i]).abs() < 1e-11,
                    "rho mismatch at ({i},{j})"
                );
                assert!(
                    (s2.mom().component(0)[node] - s1.mom().component(0)[i]).abs() < 1e-11,
                    "mom mismatch at ({i},{j})"
                );
                assert!(s2.mom().component(1)[node].abs() < 1e-12);
            }
        }
    }
    // energies relate by the extra volume factor |T^1| = 2
    for (e1, e2) in run1.energy().iter().zip(run2.energy()) {
        assert!((e2 - 2.0 * e1).abs() < 1e-11, "{e2} vs 2*{e1}");
    }
}

#[test]
fn defect_estimate_stays_small_before_shocks() {
    // a family of genuinely smooth pre-shock runs develops no defect
    let g = TorusGrid::new(1, 256).unwrap();
    let (rho, u) = wave_data(g, 0.1);
    let lw = law();
    let trajs: Vec<_> = [4e-4, 2e-4, 1e-4]
        .iter()
        .map(|&eps| {
            let config = SolverConfig::new(eps, 1, lw.clone(), 1e-3, 0.2).with_stride(50);
            let run = integrate_system((&rho, &u), &config).unwrap();
            to_trajectory(&run, run.energy()[0]).unwrap()
        })
        .collect();
    let family: Vec<&semiflow_core::trajectory::Trajectory> = trajs.iter().collect();
    let field = defect_field_estimate(&family, 0.2, 0.0625).unwrap();
    assert!(field.min() >= -1e-12);
    assert!(
        field.max_abs() < 1e-4,
        "pre-shock defect estimate {}",
        field.max_abs()
    );
}

#[test]
fn defect_family_cell_sum_tracks_global_defect() {
    // epsilon-family of smoothed shock tubes under the strongly oscillatory
    // m = 2 regularization; the local Jensen-gap field of the finest member
    // should integrate to (approximately) the global defect of the
    // extrapolated vanishing-viscosity limit
    let g = TorusGrid::new(1, 256).unwrap();
    let rho = ScalarField::from_fn(g, |x| if x[0].abs() < 0.5 { 1.0 } else { 0.125 });
    let mom = VectorField::zero(g);
    let lw = law();
    let (rho_s, u_s) = mollify_initial_data(&rho, &mom, 0.04, &lw).unwrap();
    let eps_family = [1e-8, 5e-9, 2.5e-9];
    let tau = 0.4;
    let cell = 0.5;
    let runs: Vec<_> = eps_family
        .iter()
        .map(|&eps| {
            let config = SolverConfig::new(eps, 2, lw.clone(), 8e-4, tau).with_stride(100);
            integrate_system((&rho_s, &u_s), &config).unwrap()
        })
        .collect();
    let trajs: Vec<_> = runs
        .iter()
        .map(|r| to_trajectory(r, r.energy()[0]).unwrap())
        .collect();
    let family: Vec<&semiflow_core::trajectory::Trajectory> = trajs.iter().collect();

    let field = defect_field_estimate(&family, tau, cell).unwrap();
    // local Jensen gaps are nonnegative
    assert!(field.min() >= -1e-12);
    let cell_sum = grid::integrate(&field);

    // limit energy by geometric (unknown-order Richardson) extrapolation of
    // the halving family; linear fallback when no clean ratio emerges
    let idx = trajs[2].sample_index(tau).unwrap();
    let e: Vec<f64> = trajs
        .iter()
        .map(|t| t.energy().right_values()[idx])
        .collect();
    let (d21, d32) = (e[1] - e[0], e[2] - e[1]);
    let ratio = d21 / d32;
    let e_extrap = if ratio > 1.05 {
        e[2] + d32 / (ratio - 1.0)
    } else {
        e[2] + d32
    };
    // energy of the coarse-grained finest fields
    let coarse_energy = {
        let st = trajs[2].state(idx);
        semiflow_core::state::total_energy(st, &lw) - cell_sum
    };
    let global = e_extrap - coarse_energy;
    let gap = (cell_sum - global).abs() / global.abs().max(1e-12);
    println!("defect family: cell_sum {cell_sum:.4e}, global {global:.4e}, rel gap {gap:.2}");
    assert!(gap <= 0.2, "cell-sum vs global defect gap {gap} exceeds 20%");
}
