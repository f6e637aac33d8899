use std::collections::BTreeMap;

use hkbary::experiment::{run, Command, ExperimentConfig};

fn parse(path: &std::path::Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn particle_masses_match_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_json(
        r#"{"rho": {"type": "atoms", "atoms": [[0.0, 0.3], [1.0, 0.3], [0.24, 0.16], [0.76, 0.16], [0.45, 0.03], [0.55, 0.03]], "normalize": true},
            "kappa": "0.05:0.8:12"}"#,
    )
    .unwrap();
    cfg.output = dir.path().to_path_buf();
    let out = run(Command::Sweep, &cfg).unwrap();
    assert!(out.converged, "{:?}", out.failures);

    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    let mut count: BTreeMap<String, usize> = BTreeMap::new();
    for row in parse(&dir.path().join("particles.csv")).iter().skip(1) {
        *mass.entry(row[0].clone()).or_default() += row[3].parse::<f64>().unwrap();
        *count.entry(row[0].clone()).or_default() += 1;
    }
    let diags = parse(&dir.path().join("diagnostics.csv"));
    assert_eq!(diags.len(), 13);
    for row in diags.iter().skip(1) {
        let total: f64 = row[2].parse().unwrap();
        assert!((mass[&row[0]] - total).abs() <= 1e-12, "κ {}", row[0]);
        assert_eq!(count[&row[0]], row[1].parse::<usize>().unwrap());
    }
}

#[test]
fn two_dimensional_mixture_emits_particles_and_dendrogram() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/gaussians_2d.json"))).unwrap();
    cfg.output = dir.path().to_path_buf();
    let out = run(Command::Solve, &cfg).unwrap();
    assert!(out.converged, "{:?}", out.failures);
    let particles = parse(&dir.path().join("particles.csv"));
    assert_eq!(particles[0], ["kappa", "atom_index", "x0", "x1", "mass"]);
    assert!(particles.len() > 1);
    let dendro = parse(&dir.path().join("dendrogram.csv"));
    assert_eq!(dendro.len(), 150);
    let d: Vec<f64> = dendro.iter().skip(1).map(|r| r[3].parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(dendro.last().unwrap()[4], "150");
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"));
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.build_rho().unwrap();
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn oracle_command_writes_grid_solution() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_json(
        r#"{"rho": {"type": "atoms", "atoms": [[0.0, 0.5], [0.5, 0.5]]}, "kappa": 1, "oracle": {"grid_n": 2001, "tol": 1e-10, "max_iters": 100000}}"#,
    )
    .unwrap();
    cfg.output = dir.path().to_path_buf();
    let out = run(Command::Oracle, &cfg).unwrap();
    assert!(out.converged);
    let diags = parse(&dir.path().join("diagnostics.csv"));
    let objective: f64 = diags[1][3].parse().unwrap();
    assert!((objective - (1.0 - 0.25f64.cos().powi(2))).abs() < 1e-5);
}
