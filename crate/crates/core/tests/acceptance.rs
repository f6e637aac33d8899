//! Acceptance criteria. Runs sequentially so the timings are meaningful and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use hkbary::certificate::{constraint_f, DualPotential};
use hkbary::closed_form::{concentration_bound, hk2_dirac};
use hkbary::experiment::sampling::{five_gaussian_mixture, sample_density};
use hkbary::experiment::{run, Command, ExperimentConfig};
use hkbary::objective::{convexity_probe, Evaluator};
use hkbary::oracle::{solve_on_grid, OracleOptions};
use hkbary::solver::{kappa_sweep, kappa_sweep_with, solve, SolveReport, SolverConfig, SweepMode};
use hkbary::{Density1D, DiscreteMeasure, Domain, InputMeasure, Kappa, ParticleMeasure, Point};
use rand::Rng;

/// One named check with the measured value and whether it holds.
struct Check {
    what: String,
    ok: bool,
}

fn check(ok: bool, what: impl Into<String>) -> Check {
    Check { what: what.into(), ok }
}

fn within_time(elapsed: Duration, limit: Duration) -> Check {
    check(elapsed < limit, format!("time {:.2?} < {:?}", elapsed, limit))
}

fn k(v: f64) -> Kappa {
    Kappa::new(v).unwrap()
}

fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn uniform_density() -> InputMeasure {
    Density1D::uniform(0.0, 1.0, 1e-10).unwrap().into()
}

fn criterion_1() -> Vec<Check> {
    let rho = common::four_masses();
    let t = Instant::now();
    let r = solve(&rho, k(0.08), &SolverConfig::default(), None).unwrap();
    let elapsed = t.elapsed();
    let nu = r.barycenter.sorted();
    let want = [(0.0, 0.16), (0.4, 0.01), (0.6, 0.01), (1.0, 0.16)];
    let mut pos_err = 0.0f64;
    let mut mass_err = 0.0f64;
    if nu.len() == 4 {
        for ((p, m), (x, w)) in nu.atoms().zip(want) {
            pos_err = pos_err.max((p.x() - x).abs());
            mass_err = mass_err.max((m - w).abs());
        }
    }
    vec![
        check(nu.len() == 4, format!("{} atoms", nu.len())),
        check(nu.len() == 4 && pos_err <= 1e-6, format!("position err {pos_err:.1e} <= 1e-6")),
        check(nu.len() == 4 && mass_err <= 1e-6, format!("mass err {mass_err:.1e} <= 1e-6")),
        check(
            (r.objective - 0.66).abs() <= 1e-8,
            format!("|J - 0.66| {:.1e} <= 1e-8", (r.objective - 0.66).abs()),
        ),
        check(r.certificate.gap_bound <= 1e-6, format!("gap {:.1e} <= 1e-6", r.certificate.gap_bound)),
        within_time(elapsed, Duration::from_secs(1)),
    ]
}

fn criterion_2() -> Vec<Check> {
    let rho = common::four_masses();
    let t = Instant::now();
    let sweep = kappa_sweep(&rho, &log_spaced(0.08, 0.8, 50), &SolverConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let d = sweep.diagnostics();
    let worst = d.iter().map(|x| x.gap_bound).fold(f64::NEG_INFINITY, f64::max);
    vec![
        check(d.len() == 50, format!("{} of 50 κ solved", d.len())),
        check(d.first().is_some_and(|x| x.n_atoms == 4), format!("first κ {} atoms", d[0].n_atoms)),
        check(d.last().is_some_and(|x| x.n_atoms == 1), format!("last κ {} atoms", d[d.len() - 1].n_atoms)),
        check(worst <= 1e-5, format!("max gap {worst:.1e} <= 1e-5")),
        within_time(elapsed, Duration::from_secs(30)),
    ]
}

fn criterion_3() -> Vec<Check> {
    let atoms = [(0.0, 0.3), (1.0, 0.3), (0.24, 0.16), (0.76, 0.16), (0.45, 0.03), (0.55, 0.03)];
    let (p, w): (Vec<Point>, Vec<f64>) = atoms.iter().map(|&(x, w)| (Point::new1(x), w)).unzip();
    let rho: InputMeasure = DiscreteMeasure::normalizing(Domain::unit_interval(), p, w).unwrap().into();
    let t = Instant::now();
    let sweep = kappa_sweep(&rho, &log_spaced(0.05, 0.8, 100), &SolverConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let d = sweep.diagnostics();
    let counts: Vec<usize> = d.iter().map(|x| x.n_atoms).collect();
    let rises = counts.windows(2).filter(|w| w[1] > w[0]).count();
    let worst = d.iter().map(|x| x.gap_bound).fold(f64::NEG_INFINITY, f64::max);
    vec![
        check(d.len() == 100, format!("{} of 100 κ solved", d.len())),
        check(rises > 0, format!("atom count rises {rises} times")),
        check(worst <= 1e-4, format!("max gap {worst:.1e} <= 1e-4")),
        within_time(elapsed, Duration::from_secs(120)),
    ]
}

fn criterion_4() -> Vec<Check> {
    let rho = uniform_density();
    let kappas = [0.2, 0.1, 0.05, 0.02];
    let t = Instant::now();
    let sweep = kappa_sweep_with(&rho, &kappas, &SolverConfig::default(), SweepMode::Cold).unwrap();
    let elapsed = t.elapsed();
    let mut checks = Vec::new();
    let reports: Vec<&SolveReport> = sweep.reports().collect();
    checks.push(check(reports.len() == 4, format!("{} of 4 κ solved", reports.len())));
    let ratio = |r: &SolveReport| r.barycenter.total_mass() / (FRAC_PI_2 * r.kappa);
    for r in &reports {
        let mass = r.barycenter.total_mass();
        let c = concentration_bound(&rho, k(r.kappa));
        checks.push(check(
            mass <= 2.0 * PI * r.kappa && mass <= 4.0 * c,
            format!("κ={} mass {mass:.6} <= 2πκ {:.6}, 4C {:.6}, gap {:.1e}", r.kappa, 2.0 * PI * r.kappa, 4.0 * c, r.certificate.gap_bound),
        ));
    }
    if let (Some(coarse), Some(fine)) = (reports.iter().find(|r| r.kappa == 0.2), reports.iter().find(|r| r.kappa == 0.02)) {
        let (a, b) = (ratio(coarse), ratio(fine));
        checks.push(check((b - 1.0).abs() < (a - 1.0).abs(), format!("ratio κ=0.02 {b:.4} closer to 1 than κ=0.2 {a:.4}")));
    }
    checks.push(within_time(elapsed, Duration::from_secs(120)));
    checks
}

fn criterion_5() -> Vec<Check> {
    let rho = uniform_density();
    let r = solve(&rho, k(1.0), &SolverConfig::default(), None).unwrap();
    let want = (2.0 * 0.5f64.sin()).powi(2);
    let nu = &r.barycenter;
    let one = nu.len() == 1;
    vec![
        check(one, format!("{} atoms", nu.len())),
        check(
            one && (nu.positions()[0].x() - 0.5).abs() <= 1e-4,
            format!("position {:.8} within 1e-4 of 0.5", nu.positions().first().map_or(f64::NAN, |p| p.x())),
        ),
        check(
            one && (nu.masses()[0] - want).abs() <= 1e-4,
            format!("mass {:.10} within 1e-4 of {want:.10}", nu.total_mass()),
        ),
        check(r.certificate.gap_bound <= 1e-6, format!("gap {:.1e} <= 1e-6", r.certificate.gap_bound)),
    ]
}

fn criterion_6() -> Vec<Check> {
    let mut rng = common::instances(6);
    let cfg = SolverConfig::default();
    let (mut above, mut below) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut failures = 0;
    let t = Instant::now();
    for _ in 0..100 {
        let n = rng.random_range(2..=5);
        let rho = common::random_input_1d(&mut rng, n);
        let kappa = k(rng.random_range(0.05..=1.0));
        let oracle = solve_on_grid(&rho, kappa, 2001, OracleOptions::default());
        let solved = solve(&rho.clone().into(), kappa, &cfg, None);
        match (oracle, solved) {
            (Ok(o), Ok(s)) => {
                let d = s.objective - o.objective;
                above = above.max(d);
                below = below.min(d);
            }
            _ => failures += 1,
        }
    }
    let elapsed = t.elapsed();
    vec![
        check(failures == 0, format!("{failures} failed solves")),
        check(above <= 1e-4, format!("max(solver - oracle) {above:.1e} <= 1e-4")),
        check(below >= -1e-3, format!("min(solver - oracle) {below:.1e} >= -1e-3")),
        within_time(elapsed, Duration::from_secs(60)),
    ]
}

fn criterion_7() -> Vec<Check> {
    let mut rng = common::instances(7);
    let (mut rescale, mut mono, mut bounds, mut fd, mut dmass, mut convex) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    let h = 1e-6;
    let t = Instant::now();
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let rho = common::random_input_1d(&mut rng, n);
        let atoms = rng.random_range(1..=5);
        let nu = common::random_particles_1d(&mut rng, atoms);
        let k1 = rng.random_range(0.05..=1.0);
        let k2 = k1 * rng.random_range(1.0..4.0);
        let m = rng.random_range(0.01..3.0);
        let x = Point::new1(rng.random_range(0.0..1.0));

        let norm = nu.total_mass();
        let lhs = hk2_dirac(m, &x, &nu, k(k1)).unwrap().squared_distance;
        let unit = hk2_dirac(1.0, &x, &nu.scaled(1.0 / norm), k(k1)).unwrap().squared_distance;
        rescale = rescale.max((lhs - ((m * norm).sqrt() * unit + (m.sqrt() - norm.sqrt()).powi(2))).abs());

        let at_k2 = hk2_dirac(m, &x, &nu, k(k2)).unwrap().squared_distance;
        mono = mono.max(at_k2 - lhs).max(k1 * k1 * lhs - k2 * k2 * at_k2);
        bounds = bounds.max(-lhs).max(lhs - m - norm);

        let input: InputMeasure = rho.clone().into();
        let covering = common::covering_particles(&mut rng, &rho, 0.5 * k1);
        let eval = Evaluator::new(&input, k(k1));
        let (_, g) = eval.objective_and_gradient(&covering).unwrap();
        for j in 0..covering.len() {
            let shifted = |dm: f64, dy: f64| {
                let mut atoms: Vec<(f64, f64)> = covering.atoms().map(|(p, m)| (p.x(), m)).collect();
                atoms[j].0 += dy;
                atoms[j].1 += dm;
                eval.value(&ParticleMeasure::from_atoms_1d(&atoms).unwrap()).unwrap()
            };
            let fd_m = (shifted(h, 0.0) - shifted(-h, 0.0)) / (2.0 * h);
            let fd_y = (shifted(0.0, h) - shifted(0.0, -h)) / (2.0 * h);
            fd = fd.max((fd_m - g.d_mass[j]).abs() / fd_m.abs().max(1.0));
            fd = fd.max((fd_y - g.d_pos[j].x()).abs() / fd_y.abs().max(1.0));
        }

        let (_, g) = eval.objective_and_gradient(&nu).unwrap();
        let psi = DualPotential::new(nu.clone(), k(k1));
        for (j, y) in nu.positions().iter().enumerate() {
            let f = constraint_f(&input, &psi, y).unwrap();
            if f.is_finite() {
                dmass = dmass.max((g.d_mass[j] - (1.0 - f)).abs() / f.max(1.0));
            }
        }

        let other = common::random_particles_1d(&mut rng, 3);
        convex = convex.max(convexity_probe(&input, &nu, &other, k(k1), rng.random_range(0.0..1.0)).unwrap());
    }
    let elapsed = t.elapsed();
    vec![
        check(rescale <= 1e-12, format!("rescaling err {rescale:.1e} <= 1e-12")),
        check(mono <= 1e-12, format!("κ and κ²·HK² monotonicity violation {mono:.1e} <= 1e-12")),
        check(bounds <= 1e-12, format!("bounds violation {bounds:.1e} <= 1e-12")),
        check(fd <= 1e-5, format!("finite-difference rel err {fd:.1e} <= 1e-5")),
        check(dmass <= 1e-12, format!("|d_mass - (1 - F)| {dmass:.1e} <= 1e-12")),
        check(convex <= 1e-12, format!("convexity probe {convex:.1e} <= 1e-12")),
        within_time(elapsed, Duration::from_secs(30)),
    ]
}

fn criterion_8() -> Vec<Check> {
    let cfg = SolverConfig::default();
    let t = Instant::now();
    let reports: Vec<SolveReport> = [1u64, 2]
        .iter()
        .map(|&seed| {
            let s: InputMeasure = sample_density(&five_gaussian_mixture(), &Domain::unit_interval(), 1000, seed).unwrap().into();
            solve(&s, k(0.1), &cfg, None).unwrap()
        })
        .collect();
    let elapsed = t.elapsed();
    let diff = (reports[0].objective - reports[1].objective).abs();
    let gap = reports[0].certificate.gap_bound.max(reports[1].certificate.gap_bound);
    vec![
        check(diff <= 0.02, format!("J {:.6} vs {:.6}, diff {diff:.1e} <= 0.02", reports[0].objective, reports[1].objective)),
        check(gap <= 1e-4, format!("max gap {gap:.1e} <= 1e-4")),
        within_time(elapsed, Duration::from_secs(60)),
    ]
}

/// `(file name, contents)` of every output of one run.
type Outputs = Vec<(String, Vec<u8>)>;

fn run_twice(json: &str) -> (Outputs, Outputs) {
    let once = || {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_json(json).unwrap();
        cfg.output = dir.path().to_path_buf();
        let out = run(Command::Solve, &cfg).unwrap();
        out.written
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect::<Outputs>()
    };
    (once(), once())
}

fn criterion_9() -> Vec<Check> {
    let four = r#"{"rho": {"type": "atoms", "atoms": [[0.0, 0.4], [0.4, 0.1], [0.6, 0.1], [1.0, 0.4]]}, "kappa": 0.08,
                   "emit": {"fscan": true, "psi": true}}"#;
    let mixture = r#"{"rho": {"type": "sample", "n": 1000, "distribution": {"kind": "gaussian_mixture",
                      "means": [0.15, 0.30, 0.46, 0.71, 0.81], "stddevs": [0.05, 0.03, 0.08, 0.03, 0.06], "weights": [0.2, 0.2, 0.2, 0.2, 0.2]}},
                      "seed": 1, "kappa": 0.1, "emit": {"fscan": true, "dendrogram": true}}"#;
    let mut checks = Vec::new();
    for (name, json) in [("four-mass", four), ("mixture", mixture)] {
        let (a, b) = run_twice(json);
        let files: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
        checks.push(check(!a.is_empty() && a == b, format!("{name} {files:?} identical")));
    }
    checks
}

fn main() {
    type Criterion = fn() -> Vec<Check>;
    let criteria: [(&str, Criterion); 9] = [
        ("1 decoupled-regime exactness", criterion_1),
        ("2 sweep endpoints", criterion_2),
        ("3 six-mass non-monotonicity", criterion_3),
        ("4 uniform-density mass law", criterion_4),
        ("5 single-atom large-κ limit", criterion_5),
        ("6 oracle equivalence", criterion_6),
        ("7 identity suite", criterion_7),
        ("8 sampling stability", criterion_8),
        ("9 determinism", criterion_9),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let line = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(checks) => {
                let ok = checks.iter().all(|c| c.ok);
                let detail: Vec<String> = checks
                    .iter()
                    .map(|c| if c.ok { c.what.clone() } else { format!("FAILED {}", c.what) })
                    .collect();
                if !ok {
                    failed += 1;
                }
                format!("{} criterion {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.join("; "))
            }
            Err(_) => {
                failed += 1;
                format!("FAIL criterion {name}: panicked")
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
