use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::read_metrics;
use crate::{Error, Result};

/// Mean and sample (n − 1) standard deviation; the deviation of a single
/// value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Task, variant and seed parsed from `{task}__{variant}__seed{k}.metrics.jsonl`.
pub fn parse_stem(path: &Path) -> Result<(String, String, u64)> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let stem = name.strip_suffix(".metrics.jsonl").unwrap_or(name);
    let parts: Vec<&str> = stem.split("__").collect();
    if let [task, variant, seed] = parts[..] {
        if let Some(Ok(seed)) = seed.strip_prefix("seed").map(str::parse) {
            return Ok((task.to_string(), variant.to_string(), seed));
        }
    }
    Err(Error::Config(format!(
        "{}: expected a name of the form task__variant__seedN.metrics.jsonl",
        path.display()
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub task: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    /// Final rolling mean return of each seed, in seed order.
    pub finals: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub warning: Option<String>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

impl Summary {
    pub fn group(&self, task: &str, variant: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.task == task && g.variant == variant)
    }

    /// Markdown table with one row per task and auxiliary variant:
    /// `task | baseline mean ± std | MERL mean ± std`.
    pub fn table(&self) -> String {
        let mut out = String::from("| task | baseline | MERL |\n|---|---|---|\n");
        let fmt = |g: &GroupSummary| format!("{:.2} ± {:.2}", g.mean, g.std);
        for base in self.groups.iter().filter(|g| g.variant == "none") {
            for g in self
                .groups
                .iter()
                .filter(|g| g.task == base.task && g.variant != "none")
            {
                let label = if g.variant == "ve_fs" {
                    g.task.clone()
                } else {
                    format!("{} ({})", g.task, g.variant)
                };
                let _ = writeln!(out, "| {label} | {} | {} |", fmt(base), fmt(g));
            }
        }
        for g in &self.groups {
            if let Some(w) = &g.warning {
                let _ = writeln!(out, "\nwarning: {}/{}: {w}", g.task, g.variant);
            }
        }
        out
    }
}

/// Groups metrics files by task and variant and summarises each group
/// across seeds. Files are ordered by seed first, so the result does not
/// depend on the order of `files`.
pub fn aggregate_seeds(files: &[PathBuf]) -> Result<Summary> {
    if files.is_empty() {
        return Err(Error::Config("no metrics files to aggregate".into()));
    }
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, PathBuf>> = BTreeMap::new();
    for f in files {
        let (task, variant, seed) = parse_stem(f)?;
        if let Some(prev) = groups.entry((task, variant)).or_default().insert(seed, f.clone()) {
            return Err(Error::Config(format!(
                "seed {seed} appears twice: {} and {}",
                prev.display(),
                f.display()
            )));
        }
    }
    let mut summary = Summary::default();
    for ((task, variant), runs) in groups {
        let mut seeds = Vec::new();
        let mut finals = Vec::new();
        let mut series: Vec<Vec<(u64, Option<f64>)>> = Vec::new();
        for (seed, path) in &runs {
            let recs = read_metrics(path)?;
            let fin = recs.iter().rev().find_map(|r| r.mean_return).ok_or_else(|| {
                Error::Alignment(format!("{}: no completed episodes, no final score", path.display()))
            })?;
            seeds.push(*seed);
            finals.push(fin);
            series.push(recs.iter().map(|r| (r.step, r.mean_return)).collect());
        }
        let reference = &series[0];
        for (s, (seed, path)) in series.iter().zip(&runs).skip(1) {
            let same = s.len() == reference.len() && s.iter().zip(reference).all(|(a, b)| a.0 == b.0);
            if !same {
                return Err(Error::Alignment(format!(
                    "{} (seed {seed}) does not share the step sequence of seed {}",
                    path.display(),
                    seeds[0]
                )));
            }
        }
        let curve = (0..reference.len())
            .filter_map(|i| {
                let vals: Vec<f64> = series.iter().filter_map(|s| s[i].1).collect();
                (!vals.is_empty()).then(|| {
                    let (mean, std) = mean_std(&vals);
                    CurvePoint {
                        step: reference[i].0,
                        mean,
                        std,
                        runs: vals.len(),
                    }
                })
            })
            .collect();
        let (mean, std) = mean_std(&finals);
        let warning = (finals.len() == 1).then(|| "single seed; std reported as 0".to_string());
        if let Some(w) = &warning {
            log::warn!("{task}/{variant}: {w}");
        }
        summary.groups.push(GroupSummary {
            task,
            variant,
            seeds,
            finals,
            mean,
            std,
            warning,
            curve,
        });
    }
    Ok(summary)
}

/// Writes `summary.md`, `summary.json` and one `{task}__{variant}.curve.csv`
/// per group into `out_dir`.
pub fn write_summary(summary: &Summary, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("summary.md", summary.table())?;
    write("summary.json", serde_json::to_string_pretty(summary)?)?;
    for g in &summary.groups {
        let mut csv = String::from("step,mean,std\n");
        for p in &g.curve {
            let _ = writeln!(csv, "{},{},{}", p.step, p.mean, p.std);
        }
        write(&format!("{}__{}.curve.csv", g.task, g.variant), csv)?;
    }
    Ok(())
}
