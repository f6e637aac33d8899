//! Command drivers behind the `hkbary` binary.

use std::path::{Path, PathBuf};

use crate::certificate::{certify_with, CertificateReport, ConstraintFunction, DualPotential};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Domain, InputMeasure, Kappa, ParticleMeasure, Point};
use crate::objective::Evaluator;
use crate::oracle::{grid_nodes, oracle_measure};
use crate::solver::{kappa_sweep_with, solve, Diagnostics, SweepEntry, SweepResult};

use super::config::ExperimentConfig;
use super::dendrogram::single_linkage;
use super::output;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Independent solves at every κ.
    Solve,
    /// Sweep in the configured mode.
    Sweep,
    /// Certificate for the configured `nu`.
    Certify,
    /// Fixed-grid reference solve (discrete inputs).
    Oracle,
    /// Writes the input atoms to `samples.csv`.
    Sample,
    /// Single linkage of the input atoms.
    Dendrogram,
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub f_threshold_scale: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(s) = self.f_threshold_scale {
            cfg.f_threshold_scale = Some(s);
        }
        cfg.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutcome {
    /// Every requested solve converged (or certificate closed).
    pub converged: bool,
    pub written: Vec<PathBuf>,
    /// `(κ, message)` for solves that failed or did not converge.
    pub failures: Vec<(f64, String)>,
}

/// 0 on success, 1 on non-convergence or solver failure, 2 on configuration errors.
pub fn exit_code(result: &Result<RunOutcome>) -> i32 {
    match result {
        Ok(o) if o.converged => 0,
        Ok(_) => 1,
        Err(Error::Config(_)) | Err(Error::EmptySample) | Err(Error::TooFewPoints(_)) => 2,
        Err(_) => 1,
    }
}

pub const DEFAULT_SCAN_POINTS_1D: usize = 2001;
pub const DEFAULT_SCAN_POINTS_2D: usize = 101;

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let rho = cfg.build_rho()?;
    let kappas = cfg.kappas()?;
    let mut run = Runner {
        cfg,
        rho: &rho,
        out: &cfg.output,
        outcome: RunOutcome {
            converged: true,
            ..RunOutcome::default()
        },
    };
    match command {
        Command::Solve => {
            let entries = kappas
                .iter()
                .map(|&k| {
                    let r = Kappa::new(k).and_then(|kk| solve(&rho, kk, &cfg.solver, None));
                    sweep_entry(k, r)
                })
                .collect();
            run.emit_sweep(&SweepResult { entries })?;
        }
        Command::Sweep => {
            let sweep = kappa_sweep_with(&rho, &kappas, &cfg.solver, cfg.sweep_mode).map_err(as_config)?;
            run.emit_sweep(&sweep)?;
        }
        Command::Certify => run.certify(&kappas)?,
        Command::Oracle => run.oracle(&kappas)?,
        Command::Sample => {
            let d = discrete(&rho, "sample")?;
            run.write("samples.csv", |p| output::write_samples(p, d))?;
        }
        Command::Dendrogram => run.dendrogram()?,
    }
    Ok(run.outcome)
}

fn sweep_entry(kappa: f64, r: Result<crate::solver::SolveReport>) -> SweepEntry {
    match r {
        Ok(report) => SweepEntry {
            kappa,
            report: Some(report),
            error: None,
        },
        Err(e) => SweepEntry {
            kappa,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

/// Sweep argument errors (non-monotone κ lists) come from the config.
fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn discrete<'a>(rho: &'a InputMeasure, what: &str) -> Result<&'a DiscreteMeasure> {
    rho.as_discrete()
        .ok_or_else(|| Error::Config(format!("{what} needs a discrete input measure")))
}

/// Scan points: `n` equally spaced nodes per axis including the boundary.
pub fn scan_points(domain: &Domain, n: Option<usize>) -> Result<Vec<Point>> {
    let n = n.unwrap_or(match domain.dim() {
        1 => DEFAULT_SCAN_POINTS_1D,
        _ => DEFAULT_SCAN_POINTS_2D,
    });
    grid_nodes(domain, n)
}

/// Diagnostics row for a measure that was certified but not solved for.
fn certified_row(kappa: f64, nu: &ParticleMeasure, cert: &CertificateReport, iterations: usize, converged: bool) -> Diagnostics {
    Diagnostics {
        kappa,
        n_atoms: nu.len(),
        total_mass: nu.total_mass(),
        objective: cert.objective,
        dual_value: cert.feasible_dual_value,
        gap_bound: cert.gap_bound,
        max_f: cert.max_f,
        iterations,
        converged,
    }
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    rho: &'a InputMeasure,
    out: &'a Path,
    outcome: RunOutcome,
}

impl Runner<'_> {
    fn write(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.out.join(name);
        f(&path)?;
        self.outcome.written.push(path);
        Ok(())
    }

    fn fail(&mut self, kappa: f64, msg: String) {
        self.outcome.converged = false;
        self.outcome.failures.push((kappa, msg));
    }

    fn dim(&self) -> usize {
        self.rho.dim()
    }

    fn emit_sweep(&mut self, sweep: &SweepResult) -> Result<()> {
        for e in &sweep.entries {
            match (&e.report, &e.error) {
                (Some(r), _) if !r.converged => self.fail(e.kappa, format!("stopped: {:?}", r.stop_reason)),
                (None, Some(msg)) => self.fail(e.kappa, msg.clone()),
                _ => {}
            }
        }
        let measures: Vec<(f64, &ParticleMeasure)> = sweep.reports().map(|r| (r.kappa, &r.barycenter)).collect();
        self.emit_measures(&measures, &sweep.diagnostics(), true)
    }

    fn emit_measures(&mut self, measures: &[(f64, &ParticleMeasure)], diags: &[Diagnostics], particles: bool) -> Result<()> {
        let emit = self.cfg.emit.clone();
        let dim = self.dim();
        if emit.particles && particles {
            self.write("particles.csv", |p| output::write_particles(p, dim, measures.iter().copied()))?;
        }
        if emit.diagnostics {
            self.write("diagnostics.csv", |p| output::write_diagnostics(p, diags))?;
        }
        if emit.fscan || emit.psi {
            let (f_rows, psi_rows) = self.scans(measures)?;
            if emit.fscan {
                self.write("fscan.csv", |p| output::write_scan(p, dim, "y", "F", &f_rows))?;
            }
            if emit.psi {
                self.write("psi.csv", |p| output::write_scan(p, dim, "x", "psi", &psi_rows))?;
            }
        }
        if emit.dendrogram {
            self.dendrogram()?;
        }
        Ok(())
    }

    /// `F` rows above the presentation threshold and ψ rows, both on the scan grid.
    #[allow(clippy::type_complexity)]
    fn scans(&self, measures: &[(f64, &ParticleMeasure)]) -> Result<(Vec<(f64, Point, f64)>, Vec<(f64, Point, f64)>)> {
        let points = scan_points(self.rho.domain(), self.cfg.scan_points)?;
        let (mut f_rows, mut psi_rows) = (Vec::new(), Vec::new());
        for &(kappa, nu) in measures {
            let psi = DualPotential::new(nu.clone(), Kappa::new(kappa)?);
            let threshold = self.cfg.f_threshold_scale.map_or(f64::NEG_INFINITY, |s| 1.0 - s / kappa);
            if self.cfg.emit.fscan {
                let cf = ConstraintFunction::new(self.rho, &psi);
                for y in &points {
                    let f = cf.value(y)?;
                    if f >= threshold {
                        f_rows.push((kappa, *y, f));
                    }
                }
            }
            if self.cfg.emit.psi {
                psi_rows.extend(points.iter().map(|x| (kappa, *x, psi.eval(x))));
            }
        }
        Ok((f_rows, psi_rows))
    }

    fn certify(&mut self, kappas: &[f64]) -> Result<()> {
        let mut nus = Vec::with_capacity(kappas.len());
        let mut diags = Vec::with_capacity(kappas.len());
        for &k in kappas {
            let kappa = Kappa::new(k)?;
            let nu = self.cfg.build_nu(k)?;
            let eval = Evaluator::new(self.rho, kappa);
            let opts = self.cfg.solver.scan_options(self.rho.domain(), kappa);
            let cert = certify_with(&eval, &nu, &opts)?;
            let ok = cert.is_finite() && cert.sup_bound <= 1.0 + self.cfg.solver.feas_tol;
            if !ok {
                self.fail(k, format!("certified sup F bound {:e} exceeds 1 + feas_tol", cert.sup_bound));
            }
            diags.push(certified_row(k, &nu, &cert, 0, ok));
            nus.push((k, nu));
        }
        let measures: Vec<(f64, &ParticleMeasure)> = nus.iter().map(|(k, nu)| (*k, nu)).collect();
        self.emit_measures(&measures, &diags, false)
    }

    fn oracle(&mut self, kappas: &[f64]) -> Result<()> {
        let d = discrete(self.rho, "oracle")?;
        let spec = &self.cfg.oracle;
        let mut nus = Vec::with_capacity(kappas.len());
        let mut diags = Vec::with_capacity(kappas.len());
        for &k in kappas {
            let kappa = Kappa::new(k)?;
            match oracle_measure(d, kappa, spec.grid_n, spec.options()) {
                Ok((sol, nu)) => {
                    let eval = Evaluator::new(self.rho, kappa);
                    let cert = certify_with(&eval, &nu, &self.cfg.solver.scan_options(self.rho.domain(), kappa))?;
                    diags.push(certified_row(k, &nu, &cert, sol.iterations, true));
                    nus.push((k, nu));
                }
                Err(e @ Error::NoConvergence { .. }) => self.fail(k, e.to_string()),
                Err(e) => return Err(e),
            }
        }
        let measures: Vec<(f64, &ParticleMeasure)> = nus.iter().map(|(k, nu)| (*k, nu)).collect();
        self.emit_measures(&measures, &diags, true)
    }

    fn dendrogram(&mut self) -> Result<()> {
        let d = discrete(self.rho, "dendrogram")?;
        let tree = single_linkage(d.points())?;
        self.write("dendrogram.csv", |p| output::write_dendrogram(p, &tree))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str, out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_json(json).unwrap();
        cfg.output = out.to_path_buf();
        cfg
    }

    #[test]
    fn solve_writes_particles_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            r#"{"rho": {"type": "atoms", "atoms": [[0.0, 0.4], [0.4, 0.1], [0.6, 0.1], [1.0, 0.4]]}, "kappa": 0.08,
                "emit": {"fscan": true, "psi": true, "dendrogram": true}, "scan_points": 101}"#,
            dir.path(),
        );
        let out = run(Command::Solve, &cfg).unwrap();
        assert!(out.converged, "{:?}", out.failures);
        assert_eq!(exit_code(&Ok(out.clone())), 0);
        assert_eq!(out.written.len(), 5);
        let particles = std::fs::read_to_string(dir.path().join("particles.csv")).unwrap();
        assert_eq!(particles.lines().count(), 5);
        let psi = std::fs::read_to_string(dir.path().join("psi.csv")).unwrap();
        assert_eq!(psi.lines().count(), 102);
        let fscan = std::fs::read_to_string(dir.path().join("fscan.csv")).unwrap();
        assert!(fscan.starts_with("kappa,y0,F\n"));
        // The four atoms sit on scan nodes where F = 1.
        assert!(fscan.lines().count() >= 5);
    }

    #[test]
    fn certify_reads_a_particles_file() {
        let dir = tempfile::tempdir().unwrap();
        let nu = ParticleMeasure::from_atoms_1d(&[(0.0, 0.16), (0.4, 0.01), (0.6, 0.01), (1.0, 0.16)]).unwrap();
        let path = dir.path().join("given.csv");
        output::write_particles(&path, 1, [(0.08, &nu)]).unwrap();
        let json = format!(
            r#"{{"rho": {{"type": "atoms", "atoms": [[0.0, 0.4], [0.4, 0.1], [0.6, 0.1], [1.0, 0.4]]}}, "kappa": 0.08,
                "nu": {{"type": "particles_csv", "path": {:?}}}}}"#,
            path
        );
        let cfg = config(&json, &dir.path().join("out"));
        let out = run(Command::Certify, &cfg).unwrap();
        assert!(out.converged);
        let diag = std::fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
        assert!(diag.lines().nth(1).unwrap().ends_with(",0,true"));
    }

    #[test]
    fn density_inputs_cannot_be_sampled_or_clustered() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            r#"{"rho": {"type": "density", "density": {"kind": "uniform", "a": 0, "b": 1}}, "kappa": 1}"#,
            dir.path(),
        );
        for c in [Command::Sample, Command::Dendrogram, Command::Oracle] {
            let r = run(c, &cfg);
            assert_eq!(exit_code(&r), 2, "{c:?}");
        }
    }

    #[test]
    fn overrides_replace_seed_and_output() {
        let mut cfg = ExperimentConfig::from_json(r#"{"rho": {"type": "grid", "n": 4}, "kappa": 0.5, "seed": 3}"#).unwrap();
        let o = Overrides {
            out: Some("elsewhere".into()),
            seed: Some(9),
            f_threshold_scale: Some(0.5),
        };
        o.apply(&mut cfg).unwrap();
        assert_eq!((cfg.seed, cfg.output.as_path(), cfg.f_threshold_scale), (9, Path::new("elsewhere"), Some(0.5)));
        let bad = Overrides {
            f_threshold_scale: Some(-1.0),
            ..Overrides::default()
        };
        assert!(matches!(bad.apply(&mut cfg), Err(Error::Config(_))));
    }

    #[test]
    fn non_monotone_sweep_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(r#"{"rho": {"type": "grid", "n": 3}, "kappa": [0.2, 0.1, 0.3]}"#, dir.path());
        assert_eq!(exit_code(&run(Command::Sweep, &cfg)), 2);
    }
}
