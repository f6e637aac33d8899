//! CSV emission. Floats are written with 17 significant digits so values
//! round-trip exactly and reruns are byte-identical.

use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, ParticleMeasure, Point};
use crate::solver::Diagnostics;

use super::dendrogram::Dendrogram;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn coord_columns(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|a| format!("{prefix}{a}")).collect()
}

fn coords(p: &Point, dim: usize) -> impl Iterator<Item = String> + '_ {
    p.coords(dim).iter().map(|&c| fmt_f64(c))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes a header and rows, creating parent directories as needed.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn header(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

/// `kappa, atom_index, x0[, x1], mass`; atoms in lexicographic order.
pub fn write_particles<'a, I>(path: &Path, dim: usize, measures: I) -> Result<()>
where
    I: IntoIterator<Item = (f64, &'a ParticleMeasure)>,
{
    let mut h = header(&["kappa", "atom_index"]);
    h.extend(coord_columns("x", dim));
    h.push("mass".into());
    let mut rows = Vec::new();
    for (kappa, nu) in measures {
        for (i, (p, m)) in nu.sorted().atoms().enumerate() {
            let mut r = vec![fmt_f64(kappa), i.to_string()];
            r.extend(coords(p, dim));
            r.push(fmt_f64(m));
            rows.push(r);
        }
    }
    write_csv(path, &h, rows)
}

pub fn write_diagnostics(path: &Path, diags: &[Diagnostics]) -> Result<()> {
    let h = header(&[
        "kappa",
        "n_atoms",
        "total_mass",
        "objective",
        "dual_value",
        "gap_bound",
        "max_F",
        "iterations",
        "converged",
    ]);
    let rows = diags.iter().map(|d| {
        vec![
            fmt_f64(d.kappa),
            d.n_atoms.to_string(),
            fmt_f64(d.total_mass),
            fmt_f64(d.objective),
            fmt_f64(d.dual_value),
            fmt_f64(d.gap_bound),
            fmt_f64(d.max_f),
            d.iterations.to_string(),
            d.converged.to_string(),
        ]
    });
    write_csv(path, &h, rows)
}

/// Rows `(kappa, point, value)` under the header `kappa, <prefix>0[, <prefix>1], <name>`.
pub fn write_scan(path: &Path, dim: usize, prefix: &str, name: &str, rows: &[(f64, Point, f64)]) -> Result<()> {
    let mut h = header(&["kappa"]);
    h.extend(coord_columns(prefix, dim));
    h.push(name.into());
    let rows = rows.iter().map(|(k, p, v)| {
        let mut r = vec![fmt_f64(*k)];
        r.extend(coords(p, dim));
        r.push(fmt_f64(*v));
        r
    });
    write_csv(path, &h, rows)
}

pub fn write_dendrogram(path: &Path, d: &Dendrogram) -> Result<()> {
    let h = header(&["merge_index", "cluster_a", "cluster_b", "distance", "size"]);
    let rows = d.merges.iter().enumerate().map(|(k, m)| {
        vec![
            k.to_string(),
            m.a.to_string(),
            m.b.to_string(),
            fmt_f64(m.distance),
            m.size.to_string(),
        ]
    });
    write_csv(path, &h, rows)
}

/// `index, x0[, x1], weight`.
pub fn write_samples(path: &Path, rho: &DiscreteMeasure) -> Result<()> {
    let dim = rho.domain().dim();
    let mut h = header(&["index"]);
    h.extend(coord_columns("x", dim));
    h.push("weight".into());
    let rows = rho.points().iter().zip(rho.weights()).enumerate().map(|(i, (p, &w))| {
        let mut r = vec![i.to_string()];
        r.extend(coords(p, dim));
        r.push(fmt_f64(w));
        r
    });
    write_csv(path, &h, rows)
}

/// Reads the atoms of a `particles.csv` whose κ equals `kappa` (up to a
/// relative 1e-12, so hand-edited values still match).
pub fn read_particles(path: &Path, dim: usize, kappa: f64) -> Result<ParticleMeasure> {
    let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let h = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| h.iter().position(|c| c == name).ok_or_else(|| bad(format!("missing column {name}")));
    let kc = col("kappa")?;
    let mc = col("mass")?;
    let xc = (0..dim).map(|a| col(&format!("x{a}"))).collect::<Result<Vec<_>>>()?;
    let (mut positions, mut masses) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("");
            s.trim().parse().map_err(|_| bad(format!("not a number: {s:?}")))
        };
        let k = num(kc)?;
        if (k - kappa).abs() > 1e-12 * kappa.abs() {
            continue;
        }
        let c = xc.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        positions.push(Point::from_coords(&c)?);
        masses.push(num(mc)?);
    }
    if positions.is_empty() {
        return Err(bad(format!("no atoms for kappa {kappa}")));
    }
    ParticleMeasure::new(dim, positions, masses).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
        let x = 0.919_395_388_264_6;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn particles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/particles.csv");
        let a = ParticleMeasure::from_atoms_1d(&[(0.6, 0.01), (0.0, 0.16)]).unwrap();
        let b = ParticleMeasure::from_atoms_1d(&[(0.5, 0.9)]).unwrap();
        write_particles(&path, 1, [(0.08, &a), (0.8, &b)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("kappa,atom_index,x0,mass\n"));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_particles(&path, 1, 0.08).unwrap(), a.sorted());
        assert_eq!(read_particles(&path, 1, 0.8).unwrap(), b);
        assert!(matches!(read_particles(&path, 1, 0.3), Err(Error::Config(_))));
        assert!(matches!(read_particles(&path, 2, 0.8), Err(Error::Config(_))));
    }

    #[test]
    fn two_dimensional_scan_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.csv");
        write_scan(&path, 2, "x", "psi", &[(0.1, Point::new2(0.25, 0.5), 0.75)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "kappa,x0,x1,psi\n1.0000000000000001e-1,2.5000000000000000e-1,5.0000000000000000e-1,7.5000000000000000e-1\n"
        );
    }
}
