//! Cross-module pipeline flows, including the degenerate frequencies: the
//! zero mode (lambda = 0, limit family {1, t}) and negative eigenvalues
//! (purely imaginary omega), both through synthesis and replay.

use num_complex::Complex64;
use std::f64::consts::PI;

use memstring::medium::{CoefficientFunction, MemoryKernel, StringMedium};
use memstring::moment::{build_moment_problem, synthesize_control, TargetState};
use memstring::quasi_exp::{build_families, integrate_family};
use memstring::simulator::{simulate_dual, simulate_forward, verify_terminal};
use memstring::sturm_liouville::{solve_eigensystem, EigenSystem};

fn exp_kernel() -> MemoryKernel {
    MemoryKernel::Exponential { a: 0.4, eta: 1.0 }
}

/// Hand-built two-mode system with an exact zero frequency; coefficient
/// targets never touch the spatial grid, so placeholders suffice there.
fn zero_mode_system() -> EigenSystem {
    let omega2 = 1.5 * PI;
    EigenSystem {
        lambdas: vec![0.0, omega2 * omega2],
        omegas: vec![Complex64::new(0.0, 0.0), Complex64::new(omega2, 0.0)],
        phi0s: vec![2f64.sqrt(), 2f64.sqrt()],
        kappas: vec![-(2f64.sqrt()), -(2f64.sqrt())],
        phi: vec![vec![0.0; 3], vec![0.0; 3]],
        x_grid: vec![0.0, 0.5, 1.0],
        rho_on_grid: vec![1.0; 3],
        rayleigh: vec![0.0, omega2 * omega2],
        optical_length: 1.0,
        t0: 2.0,
    }
}

#[test]
fn zero_mode_control_synthesis_round_trip() {
    let kernel = exp_kernel();
    let eig = zero_mode_system();
    let families = build_families(&eig, &kernel, 2.0, 1e-3).unwrap();

    // the degenerate mode rides on the limit pair {1, t}
    assert!(families[0].omega_is_zero);
    let grid = families[0].grid;
    for (j, t) in grid.times().enumerate() {
        assert!((families[0].e_plus[j].re - 1.0).abs() < 1e-10);
        assert!((families[0].s_over_omega[j].re - t).abs() < 1e-10);
    }

    let target = TargetState::from_coefficients(vec![0.3, 0.1], vec![-0.2, 0.05]).unwrap();
    let problem = build_moment_problem(&eig, &families, &target).unwrap();
    assert_eq!(problem.zero_modes, vec![0]);
    assert_eq!(problem.omega_hats[0], 1.0);
    // the zero mode's position rhs carries v0 itself (omega_hat = 1)
    assert!((problem.rhs[0] - target.v0[0] / eig.kappas[0]).abs() < 1e-15);

    let solution = synthesize_control(&problem, &kernel, 1e-10).unwrap();
    assert!(
        solution.max_residual < 1e-10,
        "residual {:.3e}",
        solution.max_residual
    );
    assert_eq!(solution.zero_modes, vec![0]);

    let replay = simulate_forward(&eig, &families, &kernel, &solution.f, &grid).unwrap();
    let report = verify_terminal(&replay, &target);
    assert!(report.e0 < 1e-10, "e0 = {:.3e}", report.e0);
    assert!(report.e1 < 1e-10, "e1 = {:.3e}", report.e1);
}

#[test]
fn zero_mode_dual_trace_is_affine() {
    // v(0, t) for the zero mode alone: phi0 * (v0 + v1 t) exactly
    let eig = zero_mode_system();
    let families = build_families(&eig, &exp_kernel(), 2.0, 1e-3).unwrap();
    let dual = simulate_dual(&eig, &families, &[0.4, 0.0], &[-0.3, 0.0]).unwrap();
    for (j, t) in dual.grid.times().enumerate() {
        let exact = 2f64.sqrt() * (0.4 - 0.3 * t);
        assert!((dual.trace[j] - exact).abs() < 1e-9, "trace at {t}");
    }
}

#[test]
fn near_zero_eigenvalue_is_resolved() {
    // beta tuned so the lowest eigenvalue sits at zero
    let beta = PI * PI / 4.0;
    let medium = StringMedium::new(
        1.0,
        CoefficientFunction::constant(1.0, 1.0),
        CoefficientFunction::constant(1.0, 1.0),
        CoefficientFunction::constant(beta, 1.0),
    )
    .unwrap();
    let eig = solve_eigensystem(&medium, 4).unwrap();
    assert!(
        eig.lambdas[0].abs() <= 1e-10,
        "lambda_1 = {:.3e}",
        eig.lambdas[0]
    );
    for n in 1..4 {
        let exact = (PI * (n as f64 + 0.5)).powi(2) - beta;
        assert!((eig.lambdas[n] - exact).abs() < 1e-8);
    }
}

#[test]
fn negative_eigenvalue_through_synthesis() {
    // beta = 5 pushes lambda_1 below zero: omega_1 purely imaginary, the
    // moment rows stay real and the round trip still closes
    let medium = StringMedium::new(
        1.0,
        CoefficientFunction::constant(1.0, 1.0),
        CoefficientFunction::constant(1.0, 1.0),
        CoefficientFunction::constant(5.0, 1.0),
    )
    .unwrap();
    let kernel = exp_kernel();
    let eig = solve_eigensystem(&medium, 8).unwrap();
    assert!(eig.lambdas[0] < 0.0 && eig.omegas[0].im > 0.0);

    let families = build_families(&eig, &kernel, 2.0, 1e-3).unwrap();
    // imaginary omega means real exponential-type family values
    for j in [100usize, 1000, 2000] {
        assert!(families[0].e_plus[j].im.abs() < 1e-12);
        assert!(families[0].e_minus[j].im.abs() < 1e-12);
        assert!(families[0].s_over_omega[j].im.abs() < 1e-12);
    }

    let target = TargetState::from_functions(&eig, |x| x * x - x, |x| 0.2 * (1.0 - x)).unwrap();
    let problem = build_moment_problem(&eig, &families, &target).unwrap();
    assert!(problem.zero_modes.is_empty());
    let solution = synthesize_control(&problem, &kernel, 1e-10).unwrap();
    assert!(
        solution.max_residual < 1e-9,
        "residual {:.3e}",
        solution.max_residual
    );

    let grid = families[0].grid;
    let replay = simulate_forward(&eig, &families, &kernel, &solution.f, &grid).unwrap();
    let report = verify_terminal(&replay, &target);
    assert!(report.e0 < 1e-8, "e0 = {:.3e}", report.e0);
    assert!(report.e1 < 1e-8, "e1 = {:.3e}", report.e1);
}

#[test]
fn sampled_kernel_full_synthesis_matches_closed_form_kernel() {
    // tabulating the exponential kernel and synthesizing against the table
    // reproduces the closed-form-kernel control to interpolation accuracy
    let medium = StringMedium::uniform_unit();
    let eig = solve_eigensystem(&medium, 8).unwrap();
    let table = {
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 1e-3).collect();
        let values: Vec<f64> = grid.iter().map(|t| 0.4 * (-t).exp()).collect();
        MemoryKernel::Sampled(memstring::medium::SampledKernel::new(grid, values).unwrap())
    };
    let exact = exp_kernel();
    let target = TargetState::from_functions(&eig, |x| x * x - x, |_| 0.0).unwrap();

    let control_for = |kernel: &MemoryKernel| -> Vec<f64> {
        let families = build_families(&eig, kernel, 2.0, 1e-3).unwrap();
        let problem = build_moment_problem(&eig, &families, &target).unwrap();
        synthesize_control(&problem, kernel, 1e-10).unwrap().f
    };
    let f_table = control_for(&table);
    let f_exact = control_for(&exact);
    let worst = f_table
        .iter()
        .zip(&f_exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let scale = f_exact.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    assert!(
        worst <= 1e-6 * scale.max(1.0),
        "controls diverge by {worst:.3e}"
    );
}

#[test]
fn family_integration_consistency_between_eig_and_direct() {
    // families built from solver output agree with direct integration at the
    // same frequencies
    let eig = solve_eigensystem(&StringMedium::uniform_unit(), 4).unwrap();
    let kernel = exp_kernel();
    let families = build_families(&eig, &kernel, 2.0, 1e-3).unwrap();
    for (n, fam) in families.iter().enumerate() {
        let direct = integrate_family(eig.omegas[n], &kernel, 2.0, 1e-3).unwrap();
        for j in (0..fam.grid.len()).step_by(500) {
            assert_eq!(fam.e_plus[j], direct.e_plus[j]);
        }
    }
}
