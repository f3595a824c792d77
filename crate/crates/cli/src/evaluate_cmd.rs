use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chronoface::evaluation::{
    evaluate, read_records_csv, write_records_csv, EvalRecord, EvalReport,
};
use chronoface::scene::Scene;

use crate::batch::{open_input, open_output};
use crate::date_cmd::DateLine;

pub struct EvaluateOptions {
    pub results: Vec<PathBuf>,
    pub scenes: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub strata: Option<PathBuf>,
    pub records_out: Option<PathBuf>,
}

struct Truth {
    year: i32,
    n_known: u32,
    n_unknown: u32,
}

fn read_truths(path: &Path) -> Result<(HashMap<String, Truth>, usize)> {
    let mut truths = HashMap::new();
    let mut failures = 0;
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scene = match Scene::from_json_line(&line) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("{} line {}: {e}", path.display(), i + 1);
                failures += 1;
                continue;
            }
        };
        let Some(year) = scene.truth_year else {
            eprintln!(
                "{} line {}: scene `{}` has no truth year",
                path.display(),
                i + 1,
                scene.image_id
            );
            failures += 1;
            continue;
        };
        let (known, unknown) = scene.truth_counts().unwrap_or((scene.len(), 0));
        truths.insert(
            scene.image_id,
            Truth {
                year,
                n_known: known as u32,
                n_unknown: unknown as u32,
            },
        );
    }
    Ok((truths, failures))
}

/// Joins date results with scene truths on `image_id`.
fn join(opts: &EvaluateOptions, scenes: &Path) -> Result<(Vec<EvalRecord>, usize)> {
    let (truths, mut failures) = read_truths(scenes)?;
    let mut records = Vec::new();
    for path in &opts.results {
        for (i, line) in open_input(path)?.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DateLine = match serde_json::from_str(&line) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("{} line {}: {e}", path.display(), i + 1);
                    failures += 1;
                    continue;
                }
            };
            let Some(t) = truths.get(&parsed.image_id) else {
                eprintln!(
                    "{} line {}: no truth for `{}`",
                    path.display(),
                    i + 1,
                    parsed.image_id
                );
                failures += 1;
                continue;
            };
            records.push(EvalRecord {
                prior: parsed.prior_label(),
                image_id: parsed.image_id,
                predicted_year: parsed.predicted_year,
                truth_year: t.year,
                n_known: t.n_known,
                n_unknown: t.n_unknown,
                model: parsed.model.tag().to_string(),
            });
        }
    }
    Ok((records, failures))
}

pub fn run(opts: &EvaluateOptions) -> Result<(EvalReport, usize)> {
    let (records, failures) = match (&opts.records, &opts.scenes) {
        (Some(path), _) => {
            let file =
                std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            (
                read_records_csv(file).with_context(|| format!("records {}", path.display()))?,
                0,
            )
        }
        (None, Some(scenes)) => join(opts, scenes)?,
        (None, None) => anyhow::bail!("evaluate needs --records or --results with --scenes"),
    };
    if let Some(path) = &opts.records_out {
        write_records_csv(open_output(Some(path))?, &records)?;
    }
    let report = evaluate(&records).context("no records to evaluate")?;
    let mut out = open_output(opts.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    if let Some(path) = &opts.strata {
        report.write_strata_csv(open_output(Some(path))?)?;
    }
    Ok((report, failures))
}
