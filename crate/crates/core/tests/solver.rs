mod common;

use hkbary::closed_form::hellinger_barycenter;
use hkbary::oracle::{solve_on_grid, OracleOptions};
use hkbary::solver::{kappa_sweep, kappa_sweep_with, solve, SolverConfig, SweepMode};
use hkbary::{DiscreteMeasure, Domain, InputMeasure, Kappa, ParticleMeasure, Point};

fn k(v: f64) -> Kappa {
    Kappa::new(v).unwrap()
}

#[test]
fn small_kappa_recovers_the_hellinger_barycenter() {
    let rho = common::four_masses();
    let r = solve(&rho, k(0.05), &SolverConfig::default(), None).unwrap();
    assert!(r.converged);
    let expected = hellinger_barycenter(&rho).sorted();
    let got = r.barycenter.sorted();
    assert_eq!(got.len(), 4);
    for ((p, m), (q, n)) in got.atoms().zip(expected.atoms()) {
        assert!(p.dist(q) < 1e-9 && (m - n).abs() < 1e-9, "{p:?} {m} vs {q:?} {n}");
    }
}

#[test]
fn warm_and_cold_sweeps_agree_on_objectives() {
    let rho = common::four_masses();
    let kappas = [0.1, 0.2, 0.4];
    let cfg = SolverConfig::default();
    let warm = kappa_sweep(&rho, &kappas, &cfg).unwrap();
    let cold = kappa_sweep_with(&rho, &kappas, &cfg, SweepMode::Cold).unwrap();
    for (a, b) in warm.reports().zip(cold.reports()) {
        assert!(a.converged && b.converged);
        let tol = a.certificate.gap_bound + b.certificate.gap_bound + 1e-9;
        assert!((a.objective - b.objective).abs() <= tol, "κ={}: {} vs {}", a.kappa, a.objective, b.objective);
    }
}

#[test]
fn certificate_sandwiches_the_oracle() {
    let mut r = common::instances(17);
    for _ in 0..10 {
        let rho = common::random_input_1d(&mut r, 4);
        let kappa = k(0.3);
        let oracle = solve_on_grid(&rho, kappa, 1001, OracleOptions::default()).unwrap();
        let input: InputMeasure = rho.clone().into();
        let rep = solve(&input, kappa, &SolverConfig::default(), None).unwrap();
        let lower = rep.certificate.feasible_dual_value;
        assert!(lower <= oracle.objective + 1e-9, "dual {lower} above oracle {}", oracle.objective);
        assert!(rep.objective <= oracle.objective + 1e-9);
    }
}

#[test]
fn two_dimensional_grid_input_matches_oracle() {
    let pts: Vec<Point> = (0..5).flat_map(|i| (0..5).map(move |j| Point::new2(0.1 + 0.2 * j as f64, 0.1 + 0.2 * i as f64))).collect();
    let rho = DiscreteMeasure::uniform_weights(Domain::unit_square(), pts).unwrap();
    let kappa = k(0.25);
    let oracle = solve_on_grid(&rho, kappa, 61, OracleOptions { tol: 1e-7, ..OracleOptions::default() }).unwrap();
    let rep = solve(&rho.clone().into(), kappa, &SolverConfig::default(), None).unwrap();
    assert!(rep.converged);
    assert!(rep.objective <= oracle.objective + 1e-6);
    assert!(rep.objective >= oracle.objective - 1e-3, "{} vs {}", rep.objective, oracle.objective);
}

#[test]
fn warm_start_from_optimum_is_immediate() {
    let rho = common::four_masses();
    let opt = ParticleMeasure::from_atoms_1d(&[(0.0, 0.16), (0.4, 0.01), (0.6, 0.01), (1.0, 0.16)]).unwrap();
    let r = solve(&rho, k(0.08), &SolverConfig::default(), Some(&opt)).unwrap();
    assert!(r.converged);
    assert_eq!(r.insertions, 0);
    assert!((r.objective - 0.66).abs() < 1e-12);
}

#[test]
fn mismatched_warm_start_dimension_is_rejected() {
    let rho = common::four_masses();
    let w = ParticleMeasure::new(2, vec![Point::new2(0.5, 0.5)], vec![1.0]).unwrap();
    assert!(solve(&rho, k(0.1), &SolverConfig::default(), Some(&w)).is_err());
}
