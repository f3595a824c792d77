//! Dataset-construction matcher: assigns the detected faces of an image to
//! the identities linked to it, one-to-one, maximizing cosine similarity over
//! pairs that pass a similarity floor and an age-gap check.

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::dist::{dot, Embedding};
use crate::error::{Error, Result};
use crate::gallery::format::MatrixFile;
use crate::gallery::Gallery;

pub const MIN_SIMILARITY: f64 = 0.2;
pub const AGE_GAP_BASE: f64 = 20.0;
pub const AGE_GAP_SLOPE: f64 = 0.25;

/// Cost of an invalid pair in the padded assignment problem.
const INVALID_COST: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchFace {
    pub face_id: String,
    pub embedding: Embedding,
    /// Point estimate of the apparent age in years.
    pub age_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidate {
    pub id: String,
    pub birth_year: i32,
    /// Unit-norm prototype.
    pub prototype: Vec<f64>,
}

impl MatchCandidate {
    pub fn from_gallery(gallery: &Gallery, index: usize) -> Self {
        Self {
            id: gallery.id(index).to_string(),
            birth_year: gallery.birth_year(index),
            prototype: gallery.prototype(index).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchProblem {
    pub image_id: String,
    pub release_year: i32,
    pub faces: Vec<MatchFace>,
    pub candidates: Vec<MatchCandidate>,
    /// Linked identities with no gallery entry; never matchable.
    pub missing_candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub face: usize,
    pub identity: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub image_id: String,
    /// Sorted by face index.
    pub pairs: Vec<MatchPair>,
    pub unmatched_faces: Vec<usize>,
    pub unmatched_identities: Vec<String>,
}

impl MatchResult {
    pub fn total_similarity(&self) -> f64 {
        self.pairs.iter().map(|p| p.similarity).sum()
    }
}

pub fn cosine_matrix(problem: &MatchProblem) -> Vec<Vec<f64>> {
    problem
        .faces
        .iter()
        .map(|f| {
            problem
                .candidates
                .iter()
                .map(|c| dot(f.embedding.as_slice(), &c.prototype))
                .collect()
        })
        .collect()
}

pub fn age_gap_ok(release_year: i32, birth_year: i32, age_estimate: f64) -> bool {
    let true_age = f64::from(release_year - birth_year);
    (true_age - age_estimate).abs() <= AGE_GAP_BASE + AGE_GAP_SLOPE * age_estimate
}

/// `mask[j][k]` is true when face `j` may be matched to candidate `k`.
pub fn validity_mask(problem: &MatchProblem) -> Vec<Vec<bool>> {
    validity_mask_with(problem, &cosine_matrix(problem), true)
}

fn validity_mask_with(
    problem: &MatchProblem,
    sims: &[Vec<f64>],
    check_age: bool,
) -> Vec<Vec<bool>> {
    problem
        .faces
        .iter()
        .zip(sims)
        .map(|(f, row)| {
            problem
                .candidates
                .iter()
                .zip(row)
                .map(|(c, &s)| {
                    s >= MIN_SIMILARITY
                        && (!check_age
                            || age_gap_ok(problem.release_year, c.birth_year, f.age_estimate))
                })
                .collect()
        })
        .collect()
}

/// Minimum-cost perfect matching on a square matrix. Returns the column
/// assigned to each row.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials and matching are 1-based with column 0 as the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

/// One-to-one partial matching of faces to candidates maximizing total
/// similarity over valid pairs.
pub fn hungarian_match(problem: &MatchProblem) -> MatchResult {
    let sims = cosine_matrix(problem);
    let mask = validity_mask_with(problem, &sims, true);
    match_with(problem, &sims, &mask)
}

/// Same as [`hungarian_match`] without the age-gap rule.
pub fn hungarian_match_ignoring_age(problem: &MatchProblem) -> MatchResult {
    let sims = cosine_matrix(problem);
    let mask = validity_mask_with(problem, &sims, false);
    match_with(problem, &sims, &mask)
}

fn match_with(problem: &MatchProblem, sims: &[Vec<f64>], mask: &[Vec<bool>]) -> MatchResult {
    let (n, k) = (problem.faces.len(), problem.candidates.len());
    // Faces are rows 0..n, dummy rows n..n+k; candidates are columns 0..k,
    // dummy columns k..k+n. Every dummy cell costs zero.
    let size = n + k;
    let mut cost = vec![vec![0.0; size]; size];
    for j in 0..n {
        for c in 0..k {
            cost[j][c] = if mask[j][c] {
                -sims[j][c]
            } else {
                INVALID_COST
            };
        }
    }
    let col_of = solve_assignment(&cost);
    let mut pairs = Vec::new();
    let mut matched_candidates = vec![false; k];
    for (j, &c) in col_of.iter().enumerate().take(n) {
        if c < k && mask[j][c] {
            matched_candidates[c] = true;
            pairs.push(MatchPair {
                face: j,
                identity: problem.candidates[c].id.clone(),
                similarity: sims[j][c],
            });
        }
    }
    let unmatched_faces = (0..n)
        .filter(|j| !pairs.iter().any(|p| p.face == *j))
        .collect();
    let mut unmatched_identities: Vec<String> = problem
        .candidates
        .iter()
        .zip(&matched_candidates)
        .filter(|(_, &m)| !m)
        .map(|(c, _)| c.id.clone())
        .collect();
    unmatched_identities.extend(problem.missing_candidates.iter().cloned());
    MatchResult {
        image_id: problem.image_id.clone(),
        pairs,
        unmatched_faces,
        unmatched_identities,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFaceRecord {
    pub face_id: String,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub embedding_row: u64,
    pub age_estimate: f64,
}

/// One line of an annotation input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemRecord {
    pub image_id: String,
    pub release_year: i32,
    pub faces: Vec<ProblemFaceRecord>,
    pub candidates: Vec<String>,
}

impl ProblemRecord {
    /// Resolves embeddings against a matrix file and candidates against the
    /// gallery. Candidates absent from the gallery are kept aside as missing.
    pub fn resolve(&self, gallery: &Gallery, embeddings: &MatrixFile) -> Result<MatchProblem> {
        if embeddings.dim != gallery.dim() {
            return Err(Error::DimensionMismatch {
                expected: gallery.dim(),
                actual: embeddings.dim,
            });
        }
        let faces = self
            .faces
            .iter()
            .map(|f| {
                if !f.age_estimate.is_finite() || f.age_estimate < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "face `{}` has age estimate {}",
                        f.face_id, f.age_estimate
                    )));
                }
                let row = embeddings.row(f.embedding_row as usize).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "face `{}` references embedding row {} of {}",
                        f.face_id,
                        f.embedding_row,
                        embeddings.rows()
                    ))
                })?;
                Ok(MatchFace {
                    face_id: f.face_id.clone(),
                    embedding: Embedding::from_f32(row)?,
                    age_estimate: f.age_estimate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut seen = BTreeSet::new();
        let mut candidates = Vec::new();
        let mut missing_candidates = Vec::new();
        for id in &self.candidates {
            if !seen.insert(id.as_str()) {
                continue;
            }
            match gallery.index_of(id) {
                Some(i) => candidates.push(MatchCandidate::from_gallery(gallery, i)),
                None => missing_candidates.push(id.clone()),
            }
        }
        Ok(MatchProblem {
            image_id: self.image_id.clone(),
            release_year: self.release_year,
            faces,
            candidates,
            missing_candidates,
        })
    }
}

/// Pipeline counts in the shape of the dataset-statistics table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub total_images: u64,
    pub total_faces: u64,
    pub faces_matched: u64,
    /// Matched faces whose implied age at release is within 0..=99.
    pub faces_matched_and_dated: u64,
    /// Images with at least one matched and dated face.
    pub final_images: u64,
    pub annotatable_identities: u64,
    pub unique_identities_final: u64,
    pub failed_records: u64,
}

#[derive(Debug, Default)]
pub struct SummaryBuilder {
    summary: AnnotationSummary,
    annotatable: BTreeSet<String>,
    final_ids: BTreeSet<String>,
}

impl SummaryBuilder {
    pub fn add(&mut self, problem: &MatchProblem, result: &MatchResult) {
        let s = &mut self.summary;
        s.total_images += 1;
        s.total_faces += problem.faces.len() as u64;
        s.faces_matched += result.pairs.len() as u64;
        self.annotatable
            .extend(problem.candidates.iter().map(|c| c.id.clone()));
        self.annotatable
            .extend(problem.missing_candidates.iter().cloned());
        let mut dated = 0;
        for p in &result.pairs {
            let c = problem
                .candidates
                .iter()
                .find(|c| c.id == p.identity)
                .expect("matched identity is a candidate");
            if (0..=99).contains(&(problem.release_year - c.birth_year)) {
                dated += 1;
                self.final_ids.insert(c.id.clone());
            }
        }
        s.faces_matched_and_dated += dated;
        if dated > 0 {
            s.final_images += 1;
        }
    }

    pub fn add_failure(&mut self) {
        self.summary.failed_records += 1;
    }

    pub fn finish(mut self) -> AnnotationSummary {
        self.summary.annotatable_identities = self.annotatable.len() as u64;
        self.summary.unique_identities_final = self.final_ids.len() as u64;
        self.summary
    }
}

/// A per-record failure in an annotation stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    /// Zero-based index of the non-blank record.
    pub record: usize,
    pub message: String,
}

/// Outcome of annotating one record.
pub type RecordOutcome = std::result::Result<(MatchProblem, MatchResult), RecordError>;

pub fn annotate_record(
    record: usize,
    line: &str,
    gallery: &Gallery,
    embeddings: &MatrixFile,
) -> RecordOutcome {
    let fail = |e: Error| RecordError {
        record,
        message: e.to_string(),
    };
    let rec: ProblemRecord = serde_json::from_str(line).map_err(|e| fail(e.into()))?;
    let problem = rec.resolve(gallery, embeddings).map_err(fail)?;
    let result = hungarian_match(&problem);
    Ok((problem, result))
}

/// Annotates a JSON-lines stream sequentially. Bad records are reported and
/// skipped.
pub fn annotate_corpus<R: BufRead>(
    reader: R,
    gallery: &Gallery,
    embeddings: &MatrixFile,
) -> Result<(Vec<RecordOutcome>, AnnotationSummary)> {
    let mut outcomes = Vec::new();
    let mut builder = SummaryBuilder::default();
    let mut record = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = annotate_record(record, &line, gallery, embeddings);
        match &outcome {
            Ok((p, r)) => builder.add(p, r),
            Err(_) => builder.add_failure(),
        }
        outcomes.push(outcome);
        record += 1;
    }
    Ok((outcomes, builder.finish()))
}

/// Exhaustive best partial matching, for small instances. Returns the best
/// total similarity with the pairs summed in face order.
pub fn brute_force_best(sims: &[Vec<f64>], mask: &[Vec<bool>]) -> (f64, Vec<Option<usize>>) {
    fn recurse(
        j: usize,
        sims: &[Vec<f64>],
        mask: &[Vec<bool>],
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if j == sims.len() {
            let total = current
                .iter()
                .enumerate()
                .filter_map(|(f, c)| c.map(|c| sims[f][c]))
                .fold(0.0, |a, s| a + s);
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        current.push(None);
        recurse(j + 1, sims, mask, used, current, best);
        current.pop();
        for c in 0..used.len() {
            if mask[j][c] && !used[c] {
                used[c] = true;
                current.push(Some(c));
                recurse(j + 1, sims, mask, used, current, best);
                current.pop();
                used[c] = false;
            }
        }
    }
    let k = sims.first().map_or(0, Vec::len);
    let mut best = (0.0, vec![None; sims.len()]);
    recurse(
        0,
        sims,
        mask,
        &mut vec![false; k],
        &mut Vec::new(),
        &mut best,
    );
    best
}
