//! Plot-ready tables derived from the CSV artifacts of a finished run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::experiments::table;

fn read(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let rows = r.records().collect::<csv::Result<Vec<_>>>()?;
    Ok((header, rows))
}

fn column(header: &csv::StringRecord, name: &str, file: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("{} has no column {name}", file.display()))
}

fn num(s: &str) -> Result<f64> {
    s.parse().with_context(|| format!("not a number: {s:?}"))
}

/// Writes every plot table that the artifacts in `dir` support and returns
/// their paths.
pub fn make_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let out_dir = dir.join("plots");
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        fs::create_dir_all(&out_dir)?;
        let p = out_dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };

    let f = dir.join("pseudo_gap.csv");
    if f.exists() {
        let (h, rows) = read(&f)?;
        let idx = ["x", "gap", "ci_lo", "ci_hi"].map(|c| column(&h, c, &f));
        let idx = idx.into_iter().collect::<Result<Vec<_>>>()?;
        emit(
            "gap_curve.csv",
            table(
                &["t", "gap", "ci_lo", "ci_hi"],
                rows.iter().map(|r| idx.iter().map(|&i| r[i].to_string()).collect()),
            )?,
        )?;
    }

    let f = dir.join("coupling_times.csv");
    if f.exists() {
        let (h, rows) = read(&f)?;
        let c = column(&h, "tau_c", &f)?;
        let n = rows.len();
        let mut taus: Vec<f64> = rows
            .iter()
            .filter(|r| &r[c] != "inf")
            .map(|r| num(&r[c]))
            .collect::<Result<_>>()?;
        taus.sort_by(f64::total_cmp);
        let mut pts: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        for (i, t) in taus.iter().enumerate() {
            let s = (n - i - 1) as f64 / n as f64;
            match pts.last_mut() {
                Some((last, v)) if last == t => *v = s,
                _ => pts.push((*t, s)),
            }
        }
        emit(
            "tau_survival.csv",
            table(&["t", "survival"], pts.iter().map(|(t, s)| vec![t.to_string(), s.to_string()]))?,
        )?;
    }

    let f = dir.join("epsilon_decay.csv");
    if f.exists() {
        let (h, rows) = read(&f)?;
        let (ct, ce) = (column(&h, "t", &f)?, column(&h, "eps", &f)?);
        let mut sup: Vec<(f64, f64)> = Vec::new();
        for r in &rows {
            let (t, e) = (num(&r[ct])?, num(&r[ce])?);
            match sup.iter_mut().find(|(s, _)| *s == t) {
                Some((_, m)) => *m = m.max(e),
                None => sup.push((t, e)),
            }
        }
        emit(
            "epsilon_sup.csv",
            table(&["t", "eps_sup"], sup.iter().map(|(t, e)| vec![t.to_string(), e.to_string()]))?,
        )?;
    }

    let f = dir.join("equilibrium_gaps.csv");
    if f.exists() {
        let (h, rows) = read(&f)?;
        let est = column(&h, "estimator", &f)?;
        let keep = ["start", "t", "gap", "ci_lo", "ci_hi"]
            .map(|c| column(&h, c, &f))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        emit(
            "equilibrium_tv.csv",
            table(
                &["start", "t", "gap", "ci_lo", "ci_hi"],
                rows.iter()
                    .filter(|r| &r[est] == "tv")
                    .map(|r| keep.iter().map(|&i| r[i].to_string()).collect()),
            )?,
        )?;
    }

    if written.is_empty() {
        bail!("{} holds no artifacts to plot", dir.display());
    }
    Ok(written)
}
