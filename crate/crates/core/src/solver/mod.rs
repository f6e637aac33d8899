//! Particle optimization of the barycenter objective.
//!
//! [`solve`] alternates three phases until the iterate is stationary, its
//! certificate is feasible and complementary slackness holds:
//!
//! 1. joint descent in masses and positions ([`descend`] repeated),
//! 2. removal of vanished atoms and merging of coincident ones,
//! 3. insertion of small atoms at violations of the dual constraint `F ≤ 1`.
//!
//! Every phase is monotone in J, so the objective after each outer round never
//! exceeds the objective before it.

mod descent;
pub mod line_search;
mod particles;

use serde::{Deserialize, Serialize};

pub use descent::{stationarity, DescentReport};
pub use particles::{init_particles, prune_and_merge};

use crate::certificate::{certify_with, default_spacing, CertificateReport, ScanOptions};
use crate::error::{Error, Result};
use crate::measure::{Domain, InputMeasure, Kappa, ParticleMeasure};
use crate::objective::Evaluator;
use particles::{insert_at_violations, prune_and_merge_checked};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Diagonally preconditioned gradient steps.
    PreconditionedDescent,
    /// Limited-memory BFGS on top of the same preconditioner.
    Bfgs,
    /// Regularized Newton steps with the exact Hessian.
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchConfig {
    pub sufficient_decrease: f64,
    pub curvature: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            sufficient_decrease: 1e-4,
            curvature: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    /// Descent iterations per outer round.
    pub max_inner_iters: usize,
    /// Tolerance for the scaled projected gradient and for `Σ m_j |∂J/∂m_j|`.
    pub grad_tol: f64,
    /// Largest accepted certified `sup F − 1`.
    pub feas_tol: f64,
    pub prune_mass: f64,
    /// Atoms closer than this multiple of κ are merged.
    pub merge_radius_factor: f64,
    pub insertion_mass: f64,
    pub max_insertions_per_round: usize,
    pub line_search: LineSearchConfig,
    pub optimizer: OptimizerKind,
    pub bfgs_memory: usize,
    /// Scan spacing as a multiple of κ; `None` uses the built-in default.
    pub scan_spacing_factor: Option<f64>,
    pub certificate_slack: f64,
    pub max_certificate_refinements: usize,
    /// Discrete inputs with more points than this start from binned atoms.
    pub init_bin_threshold: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 100,
            max_inner_iters: 2000,
            grad_tol: 1e-7,
            feas_tol: 1e-7,
            prune_mass: 1e-12,
            merge_radius_factor: 1e-3,
            insertion_mass: 1e-6,
            max_insertions_per_round: 8,
            line_search: LineSearchConfig::default(),
            optimizer: OptimizerKind::Newton,
            bfgs_memory: 20,
            scan_spacing_factor: None,
            certificate_slack: 1e-10,
            max_certificate_refinements: 200_000,
            init_bin_threshold: 64,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("feas_tol", self.feas_tol),
            ("prune_mass", self.prune_mass),
            ("merge_radius_factor", self.merge_radius_factor),
            ("insertion_mass", self.insertion_mass),
            ("certificate_slack", self.certificate_slack),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(f) = self.scan_spacing_factor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("scan_spacing_factor must be positive, got {f}")));
            }
        }
        let (c1, c2) = (self.line_search.sufficient_decrease, self.line_search.curvature);
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(Error::Config(format!(
                "line search constants must satisfy 0 < {c1} < {c2} < 1"
            )));
        }
        if self.insertion_mass <= self.prune_mass {
            return Err(Error::Config("insertion_mass must exceed prune_mass".into()));
        }
        for (name, v) in [
            ("max_outer_iters", self.max_outer_iters),
            ("max_inner_iters", self.max_inner_iters),
            ("max_insertions_per_round", self.max_insertions_per_round),
            ("bfgs_memory", self.bfgs_memory),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Certificate scan settings for a given domain and κ.
    pub fn scan_options(&self, domain: &Domain, kappa: Kappa) -> ScanOptions {
        ScanOptions {
            spacing: self
                .scan_spacing_factor
                .map_or_else(|| default_spacing(domain, kappa), |f| f * kappa.get()),
            slack: self.certificate_slack,
            max_refinements: self.max_certificate_refinements,
            violation_threshold: 1.0 + self.feas_tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationCap,
    /// Neither descent nor insertion could make progress.
    Stalled,
    /// Stationary and with no violation found, but the certified bound on
    /// `sup F` stays above the tolerance.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub kappa: f64,
    pub barycenter: ParticleMeasure,
    pub objective: f64,
    pub certificate: CertificateReport,
    /// Outer rounds performed.
    pub outer_iterations: usize,
    /// Descent iterations over all rounds.
    pub iterations: usize,
    pub evaluations: usize,
    pub insertions: usize,
    pub merges: usize,
    pub prunes: usize,
    pub residual: f64,
    pub complementarity: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Objective after each outer round.
    pub history: Vec<f64>,
}

/// One descent step (or mass-zeroing step) from `nu`.
pub fn descend(
    rho: &InputMeasure,
    nu: &ParticleMeasure,
    kappa: Kappa,
    cfg: &SolverConfig,
) -> Result<(ParticleMeasure, DescentReport)> {
    cfg.validate()?;
    let eval = Evaluator::new(rho, kappa);
    let one = SolverConfig {
        max_inner_iters: 1,
        ..cfg.clone()
    };
    let (out, _, report) = descent::minimize(&eval, nu.clone(), &one)?;
    Ok((out, report))
}

/// Certifies ν and adds atoms at the violations of `F ≤ 1 + feas_tol`,
/// including uncovered input points.
pub fn insert_particles(
    rho: &InputMeasure,
    nu: &ParticleMeasure,
    kappa: Kappa,
    cfg: &SolverConfig,
) -> Result<ParticleMeasure> {
    cfg.validate()?;
    let eval = Evaluator::new(rho, kappa);
    let cert = certify_with(&eval, nu, &cfg.scan_options(rho.domain(), kappa))?;
    let mut out = nu.clone();
    insert_at_violations(&eval, &mut out, &cert, cfg)?;
    Ok(out)
}

fn check_input(rho: &InputMeasure, nu: &ParticleMeasure) -> Result<()> {
    if nu.dim() != rho.dim() {
        return Err(Error::InvalidMeasure(format!(
            "particle dimension {} differs from input dimension {}",
            nu.dim(),
            rho.dim()
        )));
    }
    nu.check_in(rho.domain())
}

/// Computes a barycenter at one κ, optionally starting from `warm_start`.
pub fn solve(
    rho: &InputMeasure,
    kappa: Kappa,
    cfg: &SolverConfig,
    warm_start: Option<&ParticleMeasure>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let eval = Evaluator::new(rho, kappa);
    let opts = cfg.scan_options(rho.domain(), kappa);
    let mut nu = match warm_start {
        Some(w) => {
            check_input(rho, w)?;
            w.clone()
        }
        None => init_particles(rho, kappa, cfg)?,
    };
    let mut value = eval.value(&nu)?;
    let mut history = Vec::new();
    let (mut iterations, mut evaluations, mut insertions, mut merges, mut prunes) = (0, 0, 0, 0, 0);
    let mut stop = StopReason::IterationCap;
    let mut outer = 0;

    while outer < cfg.max_outer_iters {
        outer += 1;
        let before = value;
        let (next, v, rep) = descent::minimize(&eval, nu, cfg)?;
        iterations += rep.iterations;
        evaluations += rep.evaluations;
        let (next, v, cleanup) = prune_and_merge_checked(&eval, next, v, cfg)?;
        prunes += cleanup.prunes;
        merges += cleanup.merges;
        nu = next;
        value = v;

        let (res, compl) = stationarity(&eval, &nu, cfg)?;
        let cert = certify_with(&eval, &nu, &opts)?;
        let stationary = res <= cfg.grad_tol && compl <= cfg.grad_tol;
        if stationary && cert.is_finite() && cert.sup_bound <= 1.0 + cfg.feas_tol {
            history.push(value);
            stop = StopReason::Converged;
            break;
        }
        let (added, gain) = insert_at_violations(&eval, &mut nu, &cert, cfg)?;
        insertions += added;
        value += gain;
        history.push(value);
        if added == 0 && stationary {
            stop = StopReason::Inconclusive;
            break;
        }
        if added == 0 && !(value < before) && (rep.stalled || rep.iterations == 0) {
            stop = StopReason::Stalled;
            break;
        }
    }

    let nu = nu.pruned(cfg.prune_mass);
    let certificate = certify_with(&eval, &nu, &opts)?;
    let (residual, complementarity) = stationarity(&eval, &nu, cfg)?;
    Ok(SolveReport {
        kappa: kappa.get(),
        objective: certificate.objective,
        barycenter: nu,
        certificate,
        outer_iterations: outer,
        iterations,
        evaluations,
        insertions,
        merges,
        prunes,
        residual,
        complementarity,
        converged: stop == StopReason::Converged,
        stop_reason: stop,
        history,
    })
}

/// Whether each κ in a sweep starts from the previous solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Warm,
    /// Independent solves from the default initialization, run in parallel.
    Cold,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepEntry {
    pub kappa: f64,
    pub report: Option<SolveReport>,
    pub error: Option<String>,
}

/// One row of per-κ diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub kappa: f64,
    pub n_atoms: usize,
    pub total_mass: f64,
    pub objective: f64,
    pub dual_value: f64,
    pub gap_bound: f64,
    pub max_f: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Diagnostics {
    pub fn from_report(r: &SolveReport) -> Self {
        Diagnostics {
            kappa: r.kappa,
            n_atoms: r.barycenter.len(),
            total_mass: r.barycenter.total_mass(),
            objective: r.objective,
            dual_value: r.certificate.feasible_dual_value,
            gap_bound: r.certificate.gap_bound,
            max_f: r.certificate.max_f,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    /// Diagnostics for the κ values that produced a report.
    pub fn diagnostics(&self) -> Vec<Diagnostics> {
        self.entries
            .iter()
            .filter_map(|e| e.report.as_ref().map(Diagnostics::from_report))
            .collect()
    }

    pub fn reports(&self) -> impl Iterator<Item = &SolveReport> {
        self.entries.iter().filter_map(|e| e.report.as_ref())
    }
}

fn check_kappas(kappas: &[f64]) -> Result<Vec<Kappa>> {
    let ks = kappas.iter().map(|&k| Kappa::new(k)).collect::<Result<Vec<_>>>()?;
    let up = kappas.windows(2).all(|w| w[0] < w[1]);
    let down = kappas.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(Error::Config("κ values must be strictly monotone".into()));
    }
    Ok(ks)
}

/// Warm-started sweep over a strictly monotone list of κ values.
pub fn kappa_sweep(rho: &InputMeasure, kappas: &[f64], cfg: &SolverConfig) -> Result<SweepResult> {
    kappa_sweep_with(rho, kappas, cfg, SweepMode::Warm)
}

/// Sweep with an explicit mode. Failures at individual κ values are recorded
/// in the entry and the sweep continues.
pub fn kappa_sweep_with(rho: &InputMeasure, kappas: &[f64], cfg: &SolverConfig, mode: SweepMode) -> Result<SweepResult> {
    cfg.validate()?;
    let ks = check_kappas(kappas)?;
    let entry = |k: Kappa, r: Result<SolveReport>| match r {
        Ok(report) => SweepEntry {
            kappa: k.get(),
            report: Some(report),
            error: None,
        },
        Err(e) => SweepEntry {
            kappa: k.get(),
            report: None,
            error: Some(e.to_string()),
        },
    };
    let entries = match mode {
        SweepMode::Warm => {
            let mut out = Vec::with_capacity(ks.len());
            let mut last: Option<ParticleMeasure> = None;
            for &k in &ks {
                let r = solve(rho, k, cfg, last.as_ref().filter(|m| !m.is_empty()));
                if let Ok(rep) = &r {
                    last = Some(rep.barycenter.clone());
                }
                out.push(entry(k, r));
            }
            out
        }
        SweepMode::Cold => {
            let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(ks.len().max(1));
            let mut slots: Vec<Option<SweepEntry>> = vec![None; ks.len()];
            std::thread::scope(|scope| {
                let chunk = ks.len().div_ceil(workers).max(1);
                for (kc, sc) in ks.chunks(chunk).zip(slots.chunks_mut(chunk)) {
                    scope.spawn(move || {
                        for (&k, slot) in kc.iter().zip(sc.iter_mut()) {
                            *slot = Some(entry(k, solve(rho, k, cfg, None)));
                        }
                    });
                }
            });
            slots.into_iter().map(|e| e.expect("every κ is solved")).collect()
        }
    };
    Ok(SweepResult { entries })
}
