use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use chronoface::annotation::{annotate_record, AnnotationSummary, SummaryBuilder};
use chronoface::gallery::format::read_matrix;
use chronoface::gallery::Gallery;

use crate::batch::{open_input, open_output, process_lines, thread_pool};

pub struct AnnotateOptions {
    pub problems: PathBuf,
    pub faces: PathBuf,
    pub output: Option<PathBuf>,
    pub workers: usize,
}

/// Matches every problem record; returns the summary and the failure count.
pub fn run(gallery: &Gallery, opts: &AnnotateOptions) -> Result<(AnnotationSummary, usize)> {
    let embeddings = read_matrix(&opts.faces)
        .map_err(|e| anyhow::anyhow!("face embeddings {}: {e}", opts.faces.display()))?;
    let pool = thread_pool(opts.workers)?;
    let input = open_input(&opts.problems)?;
    let mut out = open_output(opts.output.as_deref())?;
    let mut builder = SummaryBuilder::default();
    let failures = process_lines(
        &pool,
        input,
        |line| {
            let (problem, result) =
                annotate_record(line.number - 1, &line.text, gallery, &embeddings)
                    .map_err(|e| e.message)?;
            let text = serde_json::to_string(&result).map_err(|e| e.to_string())?;
            Ok((problem, result, text))
        },
        |_, (problem, result, text)| {
            builder.add(&problem, &result);
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        },
    )?;
    out.flush()?;
    for _ in 0..failures {
        builder.add_failure();
    }
    Ok((builder.finish(), failures))
}
