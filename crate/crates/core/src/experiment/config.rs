//! JSON experiment configurations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sampling::{component_counts, rng, sample_density, standard_normal, Stream};
use crate::error::{Error, Result};
use crate::measure::{Density1D, DensityKind, DiscreteMeasure, Domain, InputMeasure, ParticleMeasure, Point};
use crate::oracle::OracleOptions;
use crate::solver::{SolverConfig, SweepMode};

/// Default threshold scale for `fscan.csv`: rows with `F ≥ 1 − scale/κ` are kept.
pub fn default_f_threshold_scale() -> Option<f64> {
    Some((-9.5f64).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub domain: DomainSpec,
    pub rho: RhoSpec,
    pub kappa: KappaSpec,
    /// Seed for every random draw; the CLI `--seed` flag overrides it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep_mode: SweepMode,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleSpec,
    /// Measure to certify with the `certify` command.
    #[serde(default)]
    pub nu: Option<NuSpec>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub emit: EmitFlags,
    /// `null` keeps every scanned point.
    #[serde(default = "default_f_threshold_scale")]
    pub f_threshold_scale: Option<f64>,
    /// Scan points per axis for `fscan.csv` and `psi.csv`.
    #[serde(default)]
    pub scan_points: Option<usize>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            lower: vec![0.0],
            upper: vec![1.0],
        }
    }
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        Domain::new(&self.lower, &self.upper)
    }
}

/// Input measure. Weights of inline atoms and points must sum to one unless
/// `normalize` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoSpec {
    /// 1D `(position, weight)` pairs.
    Atoms {
        atoms: Vec<(f64, f64)>,
        #[serde(default)]
        normalize: bool,
    },
    /// Points in 1D or 2D; equal weights when `weights` is absent.
    Points {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        normalize: bool,
    },
    /// Equal-weight Diracs at the centres of an `n` per axis grid of cells.
    Grid { n: usize },
    /// A 1D density integrated by adaptive quadrature.
    Density {
        density: DensityKind,
        #[serde(default = "default_quadrature_tolerance")]
        tolerance: f64,
    },
    /// `n` equal-weight draws from a distribution.
    Sample { distribution: Distribution, n: usize },
}

fn default_quadrature_tolerance() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Uniform { a: f64, b: f64 },
    GaussianMixture { means: Vec<f64>, stddevs: Vec<f64>, weights: Vec<f64> },
    /// Isotropic 2D Gaussians.
    GaussianMixture2d { means: Vec<[f64; 2]>, stddevs: Vec<f64>, weights: Vec<f64> },
}

/// Length scales: a number, a list, or `"a:b:n[:log|:lin]"` (log by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    Single(f64),
    List(Vec<f64>),
    Range(String),
}

impl KappaSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let ks = match self {
            KappaSpec::Single(k) => vec![*k],
            KappaSpec::List(ks) => ks.clone(),
            KappaSpec::Range(s) => parse_range(s)?,
        };
        if ks.is_empty() {
            return Err(Error::Config("no κ values given".into()));
        }
        if let Some(k) = ks.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::Config(format!("κ must be positive and finite, got {k}")));
        }
        Ok(ks)
    }
}

/// Parses `a:b:n[:log|:lin]`.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("κ range must look like a:b:n[:log|:lin], got {s:?}"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    let log = match parts.get(3).copied() {
        None | Some("log") => true,
        Some("lin") | Some("linear") => false,
        Some(_) => return Err(bad()),
    };
    if n == 0 || !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    let t = |i: usize| i as f64 / (n - 1) as f64;
    Ok((0..n)
        .map(|i| match i {
            0 => a,
            _ if i == n - 1 => b,
            _ if log => a * (b / a).powf(t(i)),
            _ => a + (b - a) * t(i),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub grid_n: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        let o = OracleOptions::default();
        OracleSpec {
            grid_n: 2001,
            tol: o.tol,
            max_iters: o.max_iters,
        }
    }
}

impl OracleSpec {
    pub fn options(&self) -> OracleOptions {
        OracleOptions {
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }
}

/// A particle measure given inline or read from a `particles.csv` file
/// (rows whose κ matches are used).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuSpec {
    Atoms { atoms: Vec<(f64, f64)> },
    Points { points: Vec<Vec<f64>>, masses: Vec<f64> },
    ParticlesCsv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub particles: bool,
    pub diagnostics: bool,
    pub fscan: bool,
    pub psi: bool,
    pub dendrogram: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags {
            particles: true,
            diagnostics: true,
            fscan: false,
            psi: false,
            dendrogram: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative paths inside it are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(NuSpec::ParticlesCsv { path: p }) = &mut cfg.nu {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
            if !p.exists() {
                return Err(Error::Config(format!("particles file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let domain = self.domain.build().map_err(config_error)?;
        self.kappa.values()?;
        self.solver.validate().map_err(config_error)?;
        if let Some(s) = self.f_threshold_scale {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("f_threshold_scale must be nonnegative, got {s}")));
            }
        }
        if self.scan_points.is_some_and(|n| n < 2) {
            return Err(Error::Config("scan_points must be at least 2".into()));
        }
        if self.oracle.grid_n < 2 || !(self.oracle.tol > 0.0) {
            return Err(Error::Config("oracle needs grid_n ≥ 2 and a positive tol".into()));
        }
        match &self.rho {
            RhoSpec::Atoms { .. } | RhoSpec::Density { .. } if domain.dim() != 1 => {
                Err(Error::Config("atoms and densities need a 1D domain".into()))
            }
            RhoSpec::Sample { distribution, .. } => {
                let want = if matches!(distribution, Distribution::GaussianMixture2d { .. }) { 2 } else { 1 };
                if domain.dim() != want {
                    return Err(Error::Config(format!("distribution needs a {want}D domain")));
                }
                Ok(())
            }
            RhoSpec::Grid { n } if *n == 0 => Err(Error::Config("grid needs at least one cell per axis".into())),
            _ => Ok(()),
        }
    }

    pub fn kappas(&self) -> Result<Vec<f64>> {
        self.kappa.values()
    }

    pub fn build_rho(&self) -> Result<InputMeasure> {
        let domain = self.domain.build()?;
        build_rho(&self.rho, &domain, self.seed).map_err(config_error)
    }

    pub fn build_nu(&self, kappa: f64) -> Result<ParticleMeasure> {
        let dim = self.domain.build()?.dim();
        match &self.nu {
            None => Err(Error::Config("certify needs a `nu` entry".into())),
            Some(NuSpec::Atoms { atoms }) => ParticleMeasure::from_atoms_1d(atoms).map_err(config_error),
            Some(NuSpec::Points { points, masses }) => {
                let p = points.iter().map(|c| Point::from_coords(c)).collect::<Result<Vec<_>>>().map_err(config_error)?;
                ParticleMeasure::new(dim, p, masses.clone()).map_err(config_error)
            }
            Some(NuSpec::ParticlesCsv { path }) => super::output::read_particles(path, dim, kappa),
        }
    }
}

/// Errors in user-provided data are configuration errors.
fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) | Error::EmptySample | Error::Io(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn build_rho(spec: &RhoSpec, domain: &Domain, seed: u64) -> Result<InputMeasure> {
    let discrete = |points: Vec<Point>, weights: Vec<f64>, normalize: bool| {
        if normalize {
            DiscreteMeasure::normalizing(*domain, points, weights)
        } else {
            DiscreteMeasure::new(*domain, points, weights)
        }
    };
    Ok(match spec {
        RhoSpec::Atoms { atoms, normalize } => {
            let (p, w) = atoms.iter().map(|&(x, w)| (Point::new1(x), w)).unzip();
            discrete(p, w, *normalize)?.into()
        }
        RhoSpec::Points {
            points,
            weights,
            normalize,
        } => {
            if points.iter().any(|c| c.len() != domain.dim()) {
                return Err(Error::Config("point dimension does not match the domain".into()));
            }
            let p = points.iter().map(|c| Point::from_coords(c)).collect::<Result<Vec<_>>>()?;
            let n = p.len();
            let w = weights.clone().unwrap_or_else(|| vec![1.0 / n.max(1) as f64; n]);
            discrete(p, w, *normalize)?.into()
        }
        RhoSpec::Grid { n } => DiscreteMeasure::uniform_weights(*domain, cell_centres(domain, *n))?.into(),
        RhoSpec::Density { density, tolerance } => Density1D::new(density.clone(), *domain, *tolerance)?.into(),
        RhoSpec::Sample { distribution, n } => sample(distribution, domain, *n, seed)?.into(),
    })
}

/// Centres of an `n` per axis grid of equal cells, first coordinate fastest.
pub fn cell_centres(domain: &Domain, n: usize) -> Vec<Point> {
    let dim = domain.dim();
    let (lo, hi) = (domain.lower(), domain.upper());
    let c = |a: usize, k: usize| {
        let (l, h) = (lo.coords(dim)[a], hi.coords(dim)[a]);
        l + (h - l) * (k as f64 + 0.5) / n as f64
    };
    match dim {
        1 => (0..n).map(|k| Point::new1(c(0, k))).collect(),
        _ => (0..n)
            .flat_map(|k1| (0..n).map(move |k0| (k0, k1)))
            .map(|(k0, k1)| Point::new2(c(0, k0), c(1, k1)))
            .collect(),
    }
}

/// Draws an equal-weight sample. 2D mixtures follow the same per-component
/// scheme as 1D ones, with two normal draws per point.
pub fn sample(distribution: &Distribution, domain: &Domain, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    match distribution {
        Distribution::Uniform { a, b } => sample_density(&DensityKind::Uniform { a: *a, b: *b }, domain, n, seed),
        Distribution::GaussianMixture {
            means,
            stddevs,
            weights,
        } => sample_density(
            &DensityKind::GaussianMixture {
                means: means.clone(),
                stddevs: stddevs.clone(),
                weights: weights.clone(),
            },
            domain,
            n,
            seed,
        ),
        Distribution::GaussianMixture2d {
            means,
            stddevs,
            weights,
        } => {
            if n == 0 {
                return Err(Error::EmptySample);
            }
            if means.is_empty() || means.len() != stddevs.len() || means.len() != weights.len() {
                return Err(Error::Config("mixture needs equally many means, stddevs and weights".into()));
            }
            if stddevs.iter().any(|s| !(*s > 0.0 && s.is_finite())) || weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::Config("mixture needs positive stddevs and nonnegative weights".into()));
            }
            let mut rng = rng(seed, Stream::Sample);
            let mut points = Vec::with_capacity(n);
            for (j, count) in component_counts(weights, n).into_iter().enumerate() {
                for _ in 0..count {
                    let x = means[j][0] + stddevs[j] * standard_normal(&mut rng);
                    let y = means[j][1] + stddevs[j] * standard_normal(&mut rng);
                    points.push(domain.clamp(&Point::new2(x, y)));
                }
            }
            DiscreteMeasure::uniform_weights(*domain, points)
        }
    }
}
