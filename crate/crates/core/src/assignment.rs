//! Identity-assignment posterior `p(i | f)` over valid joint assignments.
//!
//! Each face gets a candidate pool from its own match posterior. The joint
//! assignments are the Cartesian product of the pools with repeated real
//! identities removed (OOD may repeat), capped by keeping the tuples with the
//! highest product of per-face match posteriors.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use log::debug;

use crate::dist::log_sum_exp;
use crate::dist::Embedding;
use crate::error::{Error, Result};
use crate::gallery::{Candidate, Gallery};
use crate::scene::Scene;

pub const DEFAULT_COVERAGE: f64 = 0.99;
pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_ASSIGNMENT_CAP: usize = 100_000;

/// Slack on the cumulative-coverage comparison.
const COVERAGE_SLACK: f64 = 1e-12;

/// Per-face posterior over identities under a uniform identity prior.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPosterior {
    /// Gallery identities in gallery order, then OOD when open-set.
    pub candidates: Vec<Candidate>,
    pub log_probs: Vec<f64>,
}

impl MatchPosterior {
    pub fn prob_of(&self, candidate: Candidate) -> f64 {
        self.candidates
            .iter()
            .position(|&c| c == candidate)
            .map_or(0.0, |i| self.log_probs[i].exp())
    }
}

pub fn per_face_match_posterior(
    face: &Embedding,
    gallery: &Gallery,
    open_set: bool,
) -> Result<MatchPosterior> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let mut log_probs = gallery.log_likelihoods(face)?;
    let mut candidates: Vec<Candidate> = (0..gallery.len()).map(Candidate::Known).collect();
    if open_set {
        log_probs.push(gallery.ood_log_likelihood());
        candidates.push(Candidate::Ood);
    }
    let log_z = log_sum_exp(&log_probs);
    for l in &mut log_probs {
        *l -= log_z;
    }
    Ok(MatchPosterior {
        candidates,
        log_probs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry {
    pub candidate: Candidate,
    /// Per-face match log-posterior.
    pub log_prob: f64,
}

/// Per-face candidate shortlists, each sorted by descending match posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub faces: Vec<Vec<PoolEntry>>,
    /// Faces whose pool was truncated at `k_max` before reaching the coverage.
    pub shortfall: Vec<usize>,
}

impl CandidatePool {
    /// Number of tuples in the unfiltered Cartesian product, saturating.
    pub fn product_size(&self) -> usize {
        self.faces
            .iter()
            .fold(1usize, |acc, p| acc.saturating_mul(p.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolConfig {
    pub coverage: f64,
    pub k_max: usize,
    pub open_set: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            coverage: DEFAULT_COVERAGE,
            k_max: DEFAULT_K_MAX,
            open_set: false,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "coverage {} outside (0, 1]",
                self.coverage
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

fn by_posterior_desc(a: &PoolEntry, b: &PoolEntry) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.candidate.cmp(&b.candidate))
}

/// Shortest descending prefix of one face's match posterior that reaches
/// `coverage`, truncated at `k_max`. With open-set matching the OOD identity
/// always takes a slot.
pub fn pool_for_face(posterior: &MatchPosterior, config: &PoolConfig) -> (Vec<PoolEntry>, bool) {
    let mut entries: Vec<PoolEntry> = posterior
        .candidates
        .iter()
        .zip(&posterior.log_probs)
        .map(|(&candidate, &log_prob)| PoolEntry {
            candidate,
            log_prob,
        })
        .collect();
    let keep = config.k_max.min(entries.len());
    if keep < entries.len() {
        entries.select_nth_unstable_by(keep - 1, by_posterior_desc);
        entries.truncate(keep);
    }
    entries.sort_by(by_posterior_desc);

    let mut pool = Vec::with_capacity(keep);
    let mut covered = 0.0;
    let full = config.coverage >= 1.0;
    for e in entries {
        pool.push(e);
        covered += e.log_prob.exp();
        if !full && covered >= config.coverage - COVERAGE_SLACK {
            break;
        }
    }
    if config.open_set && !pool.iter().any(|e| e.candidate.is_ood()) {
        if pool.len() == config.k_max {
            pool.pop();
        }
        let ood = posterior.candidates.len() - 1;
        debug_assert!(posterior.candidates[ood].is_ood());
        pool.push(PoolEntry {
            candidate: Candidate::Ood,
            log_prob: posterior.log_probs[ood],
        });
        pool.sort_by(by_posterior_desc);
    }
    let shortfall = if full {
        pool.len() < posterior.candidates.len()
    } else {
        pool.iter().map(|e| e.log_prob.exp()).sum::<f64>() < config.coverage - COVERAGE_SLACK
    };
    (pool, shortfall)
}

pub fn build_pools(scene: &Scene, gallery: &Gallery, config: &PoolConfig) -> Result<CandidatePool> {
    config.validate()?;
    let mut faces = Vec::with_capacity(scene.len());
    let mut shortfall = Vec::new();
    for (j, face) in scene.faces.iter().enumerate() {
        let posterior = per_face_match_posterior(&face.embedding, gallery, config.open_set)?;
        let (pool, short) = pool_for_face(&posterior, config);
        if short {
            debug!(
                "{}: face {} pool truncated at {} below coverage {}",
                scene.image_id, face.face_id, config.k_max, config.coverage
            );
            shortfall.push(j);
        }
        faces.push(pool);
    }
    Ok(CandidatePool { faces, shortfall })
}

fn is_valid(tuple: &[Candidate]) -> bool {
    let mut seen = HashSet::with_capacity(tuple.len());
    tuple.iter().all(|c| match c {
        Candidate::Known(i) => seen.insert(*i),
        Candidate::Ood => true,
    })
}

/// Valid joint assignments drawn from the pools.
///
/// When the Cartesian product exceeds `cap`, tuples are visited best-first by
/// the product of per-face match posteriors and the first `cap` valid ones are
/// kept.
pub fn enumerate_assignments(pools: &CandidatePool, cap: usize) -> Result<Vec<Vec<Candidate>>> {
    if cap == 0 {
        return Err(Error::InvalidParameter(
            "assignment cap must be positive".into(),
        ));
    }
    if pools.faces.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidParameter("empty candidate pool".into()));
    }
    let out = if pools.product_size() <= cap {
        enumerate_all(pools)
    } else {
        enumerate_best_first(pools, cap)
    };
    if out.is_empty() {
        return Err(Error::NoValidAssignment);
    }
    Ok(out)
}

fn enumerate_all(pools: &CandidatePool) -> Vec<Vec<Candidate>> {
    fn recurse(
        pools: &[Vec<PoolEntry>],
        prefix: &mut Vec<Candidate>,
        used: &mut HashSet<usize>,
        out: &mut Vec<Vec<Candidate>>,
    ) {
        let j = prefix.len();
        if j == pools.len() {
            out.push(prefix.clone());
            return;
        }
        for e in &pools[j] {
            match e.candidate {
                Candidate::Known(i) => {
                    if !used.insert(i) {
                        continue;
                    }
                    prefix.push(e.candidate);
                    recurse(pools, prefix, used, out);
                    prefix.pop();
                    used.remove(&i);
                }
                Candidate::Ood => {
                    prefix.push(e.candidate);
                    recurse(pools, prefix, used, out);
                    prefix.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    recurse(&pools.faces, &mut Vec::new(), &mut HashSet::new(), &mut out);
    out
}

#[derive(PartialEq)]
struct Node {
    score: f64,
    idx: Vec<usize>,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on score; among equal scores the lexicographically smaller
        // index vector pops first.
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn enumerate_best_first(pools: &CandidatePool, cap: usize) -> Vec<Vec<Candidate>> {
    let faces = &pools.faces;
    let score = |idx: &[usize]| -> f64 {
        idx.iter()
            .zip(faces)
            .map(|(&k, pool)| pool[k].log_prob)
            .sum()
    };
    let mut heap = BinaryHeap::new();
    let root = vec![0; faces.len()];
    heap.push(Node {
        score: score(&root),
        idx: root,
    });
    let mut out = Vec::new();
    while let Some(Node { idx, .. }) = heap.pop() {
        let tuple: Vec<Candidate> = idx
            .iter()
            .zip(faces)
            .map(|(&k, pool)| pool[k].candidate)
            .collect();
        if is_valid(&tuple) {
            out.push(tuple);
            if out.len() == cap {
                break;
            }
        }
        // Each tuple has a unique parent: decrement its last nonzero index.
        let last_nonzero = idx.iter().rposition(|&k| k > 0).unwrap_or(0);
        for q in last_nonzero..faces.len() {
            if idx[q] + 1 < faces[q].len() {
                let mut next = idx.clone();
                next[q] += 1;
                heap.push(Node {
                    score: score(&next),
                    idx: next,
                });
            }
        }
    }
    out
}

/// One joint assignment with its posterior `ln p(i | f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub candidates: Vec<Candidate>,
    pub log_posterior: f64,
}

impl Assignment {
    pub fn ids<'g>(&self, gallery: &'g Gallery) -> Vec<&'g str> {
        self.candidates
            .iter()
            .map(|&c| gallery.candidate_id(c))
            .collect()
    }
}

/// `ln p(i | f) = sum_j ln p(f_j | i_j) - ln Z`, with a uniform assignment
/// prior and `Z` taken over the supplied assignments.
pub fn assignment_posterior(
    scene: &Scene,
    assignments: Vec<Vec<Candidate>>,
    gallery: &Gallery,
) -> Result<Vec<Assignment>> {
    if assignments.is_empty() {
        return Err(Error::NoValidAssignment);
    }
    let mut scores = Vec::with_capacity(assignments.len());
    for candidates in &assignments {
        if candidates.len() != scene.len() {
            return Err(Error::InvalidParameter(format!(
                "assignment of length {} for {} faces",
                candidates.len(),
                scene.len()
            )));
        }
        let mut log_lik = 0.0;
        for (face, &c) in scene.faces.iter().zip(candidates) {
            log_lik += gallery.log_likelihood(&face.embedding, c)?;
        }
        scores.push(log_lik);
    }
    Ok(normalize_scores(assignments, &scores))
}

/// Turns unnormalized joint log-likelihoods into assignment log-posteriors.
pub fn normalize_scores(assignments: Vec<Vec<Candidate>>, scores: &[f64]) -> Vec<Assignment> {
    let log_z = log_sum_exp(scores);
    assignments
        .into_iter()
        .zip(scores)
        .map(|(candidates, s)| Assignment {
            candidates,
            log_posterior: s - log_z,
        })
        .collect()
}

fn id_order(gallery: &Gallery, a: &[Candidate], b: &[Candidate]) -> Ordering {
    a.iter()
        .map(|&c| gallery.candidate_id(c))
        .cmp(b.iter().map(|&c| gallery.candidate_id(c)))
}

/// Most probable assignment; exact ties go to the lexicographically smaller
/// id tuple.
pub fn top1_assignment<'a>(
    assignments: &'a [Assignment],
    gallery: &Gallery,
) -> Option<&'a Assignment> {
    assignments.iter().reduce(
        |best, a| match a.log_posterior.total_cmp(&best.log_posterior) {
            Ordering::Greater => a,
            Ordering::Less => best,
            Ordering::Equal => {
                if id_order(gallery, &a.candidates, &best.candidates) == Ordering::Less {
                    a
                } else {
                    best
                }
            }
        },
    )
}

/// Independent per-face argmax of the face likelihood; duplicates allowed.
/// The returned log-posterior is the sum of per-face match log-posteriors.
pub fn naive_assignment(scene: &Scene, gallery: &Gallery, open_set: bool) -> Result<Assignment> {
    let mut candidates = Vec::with_capacity(scene.len());
    let mut log_posterior = 0.0;
    for face in &scene.faces {
        let post = per_face_match_posterior(&face.embedding, gallery, open_set)?;
        let mut best = 0;
        for k in 1..post.candidates.len() {
            let ord = post.log_probs[k].total_cmp(&post.log_probs[best]);
            let better = ord == Ordering::Greater
                || (ord == Ordering::Equal
                    && gallery.candidate_id(post.candidates[k])
                        < gallery.candidate_id(post.candidates[best]));
            if better {
                best = k;
            }
        }
        candidates.push(post.candidates[best]);
        log_posterior += post.log_probs[best];
    }
    Ok(Assignment {
        candidates,
        log_posterior,
    })
}

/// Shannon entropy (nats) of the assignment posterior.
pub fn assignment_entropy(assignments: &[Assignment]) -> f64 {
    assignments
        .iter()
        .map(|a| {
            let p = a.log_posterior.exp();
            if p > 0.0 {
                -p * a.log_posterior
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .max(0.0)
        + 0.0
}
