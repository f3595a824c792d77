use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use chronoface::gallery::format::write_matrix;
use chronoface::gallery::Gallery;
use chronoface::scene::write_scenes;
use chronoface::synthetic::{annotation_problems, rng_from_seed, sample_world, WorldSpec};
use serde::Serialize;

use crate::batch::open_output;

pub struct SynthOptions {
    pub spec: WorldSpec,
    pub seed: u64,
    pub out_dir: std::path::PathBuf,
    pub prior_samples: usize,
    pub extra_links: usize,
}

#[derive(Debug, Serialize)]
struct WorldFile<'a> {
    seed: u64,
    first_year: i32,
    last_year: i32,
    spec: &'a WorldSpec,
}

pub fn read_spec_overrides(path: &Path) -> Result<serde_json::Value> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value = if path.extension().is_some_and(|e| e == "toml") {
        serde_json::to_value(toml::from_str::<toml::Table>(&text)?)?
    } else {
        serde_json::from_str(&text)?
    };
    Ok(value)
}

/// Writes a reproducible world: raw identities, scenes with truths, prior
/// statistics and annotation inputs.
pub fn run(opts: &SynthOptions) -> Result<()> {
    let dir = &opts.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let w = sample_world(&opts.spec, opts.seed)?;

    Gallery::with_kappa(w.world.identities.clone(), opts.spec.kappa_true)?
        .save(&dir.join("identities.jsonl"), &dir.join("identities.bin"))?;
    write_scenes(
        BufWriter::new(File::create(dir.join("scenes.jsonl"))?),
        &w.scenes,
    )?;

    let mut stats_rng = rng_from_seed(opts.seed);
    stats_rng.set_stream(1);
    let stats = w.world.prior_stats(opts.prior_samples, &mut stats_rng);
    std::fs::write(
        dir.join("prior_stats.json"),
        serde_json::to_string_pretty(&stats)? + "\n",
    )?;

    let mut link_rng = rng_from_seed(opts.seed);
    link_rng.set_stream(2);
    let (problems, faces) =
        annotation_problems(&w.world, &w.scenes, opts.extra_links, &mut link_rng);
    let mut out = open_output(Some(&dir.join("problems.jsonl")))?;
    for p in &problems {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    write_matrix(&dir.join("faces.bin"), opts.spec.dim, 0.0, &faces)?;

    let support = w.world.year_support();
    let world = WorldFile {
        seed: opts.seed,
        first_year: support.first_year,
        last_year: support.last_year,
        spec: &opts.spec,
    };
    std::fs::write(
        dir.join("world.json"),
        serde_json::to_string_pretty(&world)? + "\n",
    )?;
    log::info!(
        "{} identities, {} scenes written to {}",
        w.world.identities.len(),
        w.scenes.len(),
        dir.display()
    );
    Ok(())
}
