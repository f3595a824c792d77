use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use chronoface::gallery::Gallery;
use serde::Serialize;

/// `PREFIX.jsonl` manifest and `PREFIX.bin` matrix.
pub fn gallery_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".jsonl"), with(".bin"))
}

pub fn load_gallery(prefix: &Path, expected_dim: Option<usize>) -> Result<Gallery> {
    let (manifest, matrix) = gallery_paths(prefix);
    let gallery = Gallery::load(&manifest, &matrix)
        .map_err(|e| anyhow::anyhow!("gallery {}: {e}", matrix.display()))?;
    check_dim(gallery.dim(), expected_dim)?;
    Ok(gallery)
}

pub fn check_dim(dim: usize, expected: Option<usize>) -> Result<()> {
    if let Some(d) = expected {
        if d != dim {
            bail!("embeddings have dimension {dim}, config expects {d}");
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct BuildReport {
    pub kappa: f64,
    pub identities: usize,
    pub portraits: usize,
}

pub fn build_gallery(
    input: &Path,
    output: &Path,
    expected_dim: Option<usize>,
) -> Result<BuildReport> {
    let (manifest, matrix) = gallery_paths(input);
    let (records, _) = chronoface::gallery::format::read_records(&manifest, &matrix)
        .map_err(|e| anyhow::anyhow!("identities {}: {e}", matrix.display()))?;
    if let Some(r) = records.first() {
        check_dim(r.dim(), expected_dim)?;
    }
    let gallery = Gallery::build(records)?;
    let (out_manifest, out_matrix) = gallery_paths(output);
    gallery.save(&out_manifest, &out_matrix)?;
    log::info!(
        "wrote {} and {}",
        out_manifest.display(),
        out_matrix.display()
    );
    Ok(BuildReport {
        kappa: gallery.kappa(),
        identities: gallery.len(),
        portraits: gallery.portrait_count(),
    })
}
