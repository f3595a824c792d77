use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use chronoface::dating::{Dater, DatingConfig, DatingResult, Model};
use chronoface::gallery::Gallery;
use chronoface::priors::{PriorKind, PriorSpec, PriorStats};
use chronoface::scene::Scene;
use serde::{Deserialize, Serialize};

use crate::batch::{open_input, open_output, process_lines, thread_pool};

pub struct DateOptions {
    pub scenes: PathBuf,
    pub output: Option<PathBuf>,
    pub model: Model,
    pub config: DatingConfig,
    pub workers: usize,
    pub emit_posterior: bool,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOut {
    pub start: i32,
    pub probs: Vec<f64>,
}

/// One output line of `date`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateLine {
    pub image_id: String,
    pub model: Model,
    pub prior: PriorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub predicted_year: i32,
    /// Identity ids of the conditioning assignment; absent for Full.
    #[serde(default)]
    pub assignment: Option<Vec<String>>,
    #[serde(default)]
    pub assignment_entropy: Option<f64>,
    #[serde(default)]
    pub n_assignments: usize,
    #[serde(default)]
    pub uninformative_faces: Vec<usize>,
    #[serde(default)]
    pub conflict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl DateLine {
    /// Prior label used when grouping evaluation records.
    pub fn prior_label(&self) -> String {
        match self.lambda {
            Some(l) => format!("{}@{l}", self.prior.tag()),
            None => self.prior.tag().to_string(),
        }
    }
}

pub fn prior_spec(kind: PriorKind, lambda: f64, stats: Option<&PathBuf>) -> Result<PriorSpec> {
    let stats = stats
        .map(|p| PriorStats::load(p).with_context(|| format!("prior stats {}", p.display())))
        .transpose()?;
    Ok(PriorSpec::from_stats(kind, lambda, stats.as_ref())?)
}

fn render(
    gallery: &Gallery,
    scene: &Scene,
    r: &DatingResult,
    opts: &DateOptions,
    elapsed_ms: f64,
) -> DateLine {
    let prior = opts.config.prior.kind();
    let lambda = match opts.config.prior {
        PriorSpec::Combination { lambda, .. } => Some(lambda),
        _ => None,
    };
    DateLine {
        image_id: scene.image_id.clone(),
        model: r.model,
        prior,
        lambda,
        predicted_year: r.predicted_year,
        assignment: r
            .chosen_assignment
            .as_ref()
            .map(|a| a.ids(gallery).into_iter().map(String::from).collect()),
        assignment_entropy: r.assignment_entropy,
        n_assignments: r.n_assignments,
        uninformative_faces: r.uninformative_faces.clone(),
        conflict: r.conflict,
        posterior: opts.emit_posterior.then(|| PosteriorOut {
            start: r.posterior.start(),
            probs: r.posterior.probs(),
        }),
        elapsed_ms: opts.timing.then_some(elapsed_ms),
    }
}

/// Dates every scene; returns the number of failed lines.
pub fn run(gallery: &Gallery, opts: &DateOptions) -> Result<usize> {
    let dater = Dater::new(gallery, opts.config.clone())?;
    let pool = thread_pool(opts.workers)?;
    let input = open_input(&opts.scenes)?;
    let mut out = open_output(opts.output.as_deref())?;
    let failures = process_lines(
        &pool,
        input,
        |line| {
            let t0 = Instant::now();
            let scene = Scene::from_json_line(&line.text).map_err(|e| e.to_string())?;
            let r = dater
                .date(&scene, opts.model)
                .map_err(|e| format!("{}: {e}", scene.image_id))?;
            let elapsed = t0.elapsed().as_secs_f64() * 1e3;
            serde_json::to_string(&render(gallery, &scene, &r, opts, elapsed))
                .map_err(|e| e.to_string())
        },
        |_, text| {
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        },
    )?;
    out.flush()?;
    Ok(failures)
}
