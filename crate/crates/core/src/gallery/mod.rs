//! Identity gallery: prototype directions, the shared vMF concentration and
//! face log-likelihoods, including the open-set OOD identity.

pub mod format;

use std::collections::HashMap;
use std::ops::RangeInclusive;

pub use format::{
    read_matrix, read_records, write_matrix, ManifestEntry, MatrixFile, FORMAT_VERSION, HEADER_LEN,
    MAGIC,
};

use crate::dist::{dot, l2_norm, Embedding};
use crate::error::{Error, Result};
use crate::special::{banerjee_kappa, log_vmf_normalizer};

/// Reserved id of the out-of-distribution identity.
pub const OOD_ID: &str = "__ood__";

/// Plausible birth years accepted for gallery identities.
pub const BIRTH_YEAR_RANGE: RangeInclusive<i32> = 1800..=2030;

/// Norm below which a portrait sum is considered degenerate.
const DEGENERATE_NORM: f64 = 1e-9;

/// Gallery input: one identity with its portrait embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRecord {
    pub id: String,
    pub birth_year: i32,
    pub portraits: Vec<Embedding>,
}

impl IdentityRecord {
    pub fn new(id: impl Into<String>, birth_year: i32, portraits: Vec<Embedding>) -> Result<Self> {
        let id = id.into();
        if id == OOD_ID {
            return Err(Error::ReservedIdentity(id));
        }
        if portraits.is_empty() {
            return Err(Error::NoPortraits(id));
        }
        if !BIRTH_YEAR_RANGE.contains(&birth_year) {
            return Err(Error::BirthYearOutOfRange {
                id,
                year: birth_year,
                min: *BIRTH_YEAR_RANGE.start(),
                max: *BIRTH_YEAR_RANGE.end(),
            });
        }
        let dim = portraits[0].dim();
        if let Some(bad) = portraits.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        Ok(Self {
            id,
            birth_year,
            portraits,
        })
    }

    pub fn dim(&self) -> usize {
        self.portraits[0].dim()
    }

    pub fn prototype(&self) -> Result<Embedding> {
        build_prototype(&self.portraits)
    }
}

/// Normalized sum of the portrait embeddings.
pub fn build_prototype(portraits: &[Embedding]) -> Result<Embedding> {
    let first = portraits.first().ok_or(Error::EmptyInput)?;
    let mut sum = vec![0.0; first.dim()];
    for p in portraits {
        if p.dim() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                actual: p.dim(),
            });
        }
        for (s, v) in sum.iter_mut().zip(p.as_slice()) {
            *s += v;
        }
    }
    normalized_sum(sum)
}

fn normalized_sum(sum: Vec<f64>) -> Result<Embedding> {
    let norm = l2_norm(&sum);
    if norm < DEGENERATE_NORM {
        return Err(Error::DegeneratePrototype { norm });
    }
    Embedding::new(sum)
}

/// Leave-one-out cosine similarities: for every identity with more than one
/// portrait, each portrait against the prototype of the others.
pub fn leave_one_out_similarities(identities: &[IdentityRecord]) -> Vec<f64> {
    let mut sims = Vec::new();
    for record in identities.iter().filter(|r| r.portraits.len() > 1) {
        let dim = record.dim();
        let mut total = vec![0.0; dim];
        for p in &record.portraits {
            for (t, v) in total.iter_mut().zip(p.as_slice()) {
                *t += v;
            }
        }
        let mut rest = vec![0.0; dim];
        for held_out in &record.portraits {
            for ((r, t), v) in rest.iter_mut().zip(&total).zip(held_out.as_slice()) {
                *r = t - v;
            }
            let norm = l2_norm(&rest);
            // An exactly cancelling remainder has no direction; count it as
            // uncorrelated.
            let sim = if norm < DEGENERATE_NORM {
                0.0
            } else {
                dot(&rest, held_out.as_slice()) / norm
            };
            sims.push(sim);
        }
    }
    sims
}

/// Shared concentration from leave-one-out mean resultant length.
pub fn estimate_kappa(identities: &[IdentityRecord], dim: usize) -> Result<f64> {
    if let Some(bad) = identities.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    let sims = leave_one_out_similarities(identities);
    if sims.is_empty() {
        return Err(Error::InsufficientPortraits);
    }
    let r_bar = sims.iter().sum::<f64>() / sims.len() as f64;
    Ok(banerjee_kappa(r_bar, dim))
}

/// A face's identity hypothesis: a gallery entry or the OOD identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Candidate {
    Known(usize),
    Ood,
}

impl Candidate {
    pub fn is_ood(self) -> bool {
        matches!(self, Candidate::Ood)
    }
}

/// Immutable identity gallery. Portraits are held at the single precision of
/// the on-disk format and prototypes are derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    dim: usize,
    kappa: f64,
    log_norm: f64,
    ood_log_norm: f64,
    ids: Vec<String>,
    birth_years: Vec<i32>,
    // Row offsets into `portraits`, one more entry than identities.
    portrait_rows: Vec<usize>,
    portraits: Vec<f32>,
    prototypes: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Gallery {
    /// Estimates kappa from the records, then builds the gallery.
    pub fn build(records: Vec<IdentityRecord>) -> Result<Self> {
        let dim = records.first().ok_or(Error::EmptyGallery)?.dim();
        let quantized: Vec<IdentityRecord> = records
            .into_iter()
            .map(|r| IdentityRecord {
                portraits: r.portraits.iter().map(Embedding::quantized).collect(),
                ..r
            })
            .collect();
        let kappa = estimate_kappa(&quantized, dim)?;
        Self::with_kappa(quantized, kappa)
    }

    pub fn with_kappa(records: Vec<IdentityRecord>, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidKappa(kappa));
        }
        let dim = records.first().ok_or(Error::EmptyGallery)?.dim();
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "embedding dimension {dim} is below 2"
            )));
        }
        let n = records.len();
        let mut gallery = Gallery {
            dim,
            kappa,
            log_norm: log_vmf_normalizer(dim, kappa),
            ood_log_norm: log_vmf_normalizer(dim, 0.0),
            ids: Vec::with_capacity(n),
            birth_years: Vec::with_capacity(n),
            portrait_rows: vec![0],
            portraits: Vec::new(),
            prototypes: Vec::with_capacity(n * dim),
            index: HashMap::with_capacity(n),
        };
        for record in records {
            let record = IdentityRecord::new(record.id, record.birth_year, record.portraits)?;
            if record.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: record.dim(),
                });
            }
            if gallery.index.contains_key(&record.id) {
                return Err(Error::DuplicateIdentity(record.id));
            }
            let mut sum = vec![0.0; dim];
            for p in &record.portraits {
                for (s, &v) in sum.iter_mut().zip(p.as_slice()) {
                    let stored = v as f32;
                    gallery.portraits.push(stored);
                    *s += f64::from(stored);
                }
            }
            gallery
                .prototypes
                .extend_from_slice(normalized_sum(sum)?.as_slice());
            let rows = gallery.portrait_rows.last().copied().unwrap_or(0) + record.portraits.len();
            gallery.portrait_rows.push(rows);
            gallery.index.insert(record.id.clone(), gallery.ids.len());
            gallery.ids.push(record.id);
            gallery.birth_years.push(record.birth_year);
        }
        Ok(gallery)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn portrait_count(&self) -> usize {
        self.portraits.len() / self.dim
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn birth_year(&self, index: usize) -> i32 {
        self.birth_years[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Resolves an id string, mapping the reserved OOD id to [`Candidate::Ood`].
    pub fn candidate(&self, id: &str) -> Result<Candidate> {
        if id == OOD_ID {
            return Ok(Candidate::Ood);
        }
        self.index_of(id)
            .map(Candidate::Known)
            .ok_or_else(|| Error::UnknownIdentity(id.to_string()))
    }

    pub fn candidate_id(&self, candidate: Candidate) -> &str {
        match candidate {
            Candidate::Known(i) => &self.ids[i],
            Candidate::Ood => OOD_ID,
        }
    }

    pub fn prototype(&self, index: usize) -> &[f64] {
        &self.prototypes[index * self.dim..(index + 1) * self.dim]
    }

    /// Stored single-precision portrait rows of one identity.
    pub fn portraits(&self, index: usize) -> impl Iterator<Item = &[f32]> {
        let (lo, hi) = (self.portrait_rows[index], self.portrait_rows[index + 1]);
        self.portraits[lo * self.dim..hi * self.dim].chunks_exact(self.dim)
    }

    pub(crate) fn portrait_matrix(&self) -> &[f32] {
        &self.portraits
    }

    /// Reconstructs the gallery input records.
    pub fn records(&self) -> Vec<IdentityRecord> {
        (0..self.len())
            .map(|i| IdentityRecord {
                id: self.ids[i].clone(),
                birth_year: self.birth_years[i],
                portraits: self
                    .portraits(i)
                    .map(|row| Embedding::from_f32(row).expect("stored rows are valid"))
                    .collect(),
            })
            .collect()
    }

    /// `ln C_D(kappa)` for real identities.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    /// `ln C_D(0)`, the uniform density on the sphere used for OOD.
    pub fn ood_log_likelihood(&self) -> f64 {
        self.ood_log_norm
    }

    fn check_dim(&self, face: &Embedding) -> Result<()> {
        if face.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: face.dim(),
            });
        }
        Ok(())
    }

    /// `ln p(face | candidate)` under the vMF face model.
    pub fn log_likelihood(&self, face: &Embedding, candidate: Candidate) -> Result<f64> {
        self.check_dim(face)?;
        Ok(match candidate {
            Candidate::Known(i) => {
                self.log_norm + self.kappa * dot(self.prototype(i), face.as_slice())
            }
            Candidate::Ood => self.ood_log_norm,
        })
    }

    /// Log-likelihoods of a face under every gallery identity, in gallery order.
    pub fn log_likelihoods(&self, face: &Embedding) -> Result<Vec<f64>> {
        self.check_dim(face)?;
        let e = face.as_slice();
        Ok(self
            .prototypes
            .chunks_exact(self.dim)
            .map(|mu| self.log_norm + self.kappa * dot(mu, e))
            .collect())
    }

    /// Cosine similarity between a face and an identity prototype.
    pub fn similarity(&self, face: &Embedding, index: usize) -> f64 {
        dot(self.prototype(index), face.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
        Embedding::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn prototype_examples() {
        let u = emb(&[0.3, -0.4, 0.5]);
        let p = build_prototype(&[u.clone(), u.clone()]).unwrap();
        for (a, b) in p.as_slice().iter().zip(u.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }

        let p = build_prototype(&[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.as_slice()[0] - h).abs() < 1e-15 && (p.as_slice()[1] - h).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let vs: Vec<Embedding> = (0..5).map(|_| random_unit(&mut rng, 12)).collect();
        let p = build_prototype(&vs).unwrap();
        // direct recomputation: sum, then divide by the norm
        let mut sum = [0.0f64; 12];
        for v in &vs {
            for (s, x) in sum.iter_mut().zip(v.as_slice()) {
                *s += x;
            }
        }
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, s) in p.as_slice().iter().zip(sum) {
            assert!((a - s / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn antipodal_portraits_are_degenerate() {
        let r = build_prototype(&[emb(&[1.0, 0.0]), emb(&[-1.0, 0.0])]);
        assert!(matches!(r, Err(Error::DegeneratePrototype { .. })));
        assert!(matches!(build_prototype(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn kappa_needs_multi_portrait_identity() {
        let r = IdentityRecord::new("a", 1950, vec![emb(&[1.0, 0.0])]).unwrap();
        assert!(matches!(
            estimate_kappa(&[r], 2),
            Err(Error::InsufficientPortraits)
        ));
    }

    #[test]
    fn kappa_from_known_similarities() {
        // Two portraits at +-60 degrees: each held-out cosine with the other is 0.5
        // R = 0.5 -> kappa = 0.5 (2 - 0.25) / 0.75
        let a = emb(&[1.0, 0.0]);
        let b = emb(&[0.5, 3f64.sqrt() / 2.0]);
        let r = IdentityRecord::new("x", 1950, vec![a, b]).unwrap();
        let single = IdentityRecord::new("y", 1950, vec![emb(&[0.0, 1.0])]).unwrap();
        let k = estimate_kappa(&[r, single], 2).unwrap();
        assert!((k - 0.5 * 1.75 / 0.75).abs() < 1e-12);
    }

    #[test]
    fn identical_portraits_clamp_kappa() {
        let a = emb(&[0.6, 0.8]);
        let r = IdentityRecord::new("x", 1950, vec![a.clone(), a]).unwrap();
        let k = estimate_kappa(&[r], 2).unwrap();
        assert!(k.is_finite() && k > 1e8);
    }

    #[test]
    fn record_validation() {
        let e = emb(&[1.0, 0.0]);
        assert!(matches!(
            IdentityRecord::new(OOD_ID, 1950, vec![e.clone()]),
            Err(Error::ReservedIdentity(_))
        ));
        assert!(matches!(
            IdentityRecord::new("a", 1700, vec![e.clone()]),
            Err(Error::BirthYearOutOfRange { .. })
        ));
        assert!(matches!(
            IdentityRecord::new("a", 1950, vec![]),
            Err(Error::NoPortraits(_))
        ));
        let a = IdentityRecord::new("a", 1950, vec![e.clone()]).unwrap();
        assert!(matches!(
            Gallery::with_kappa(vec![a.clone(), a], 1.0),
            Err(Error::DuplicateIdentity(_))
        ));
    }

    #[test]
    fn zero_kappa_likelihood_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let records: Vec<IdentityRecord> = (0..4)
            .map(|i| {
                IdentityRecord::new(format!("id{i}"), 1950, vec![random_unit(&mut rng, 8)]).unwrap()
            })
            .collect();
        let g = Gallery::with_kappa(records, 0.0).unwrap();
        let face = random_unit(&mut rng, 8);
        let expected = g.ood_log_likelihood();
        for i in 0..4 {
            assert_eq!(
                g.log_likelihood(&face, Candidate::Known(i)).unwrap(),
                expected
            );
        }
        assert_eq!(g.log_likelihood(&face, Candidate::Ood).unwrap(), expected);
    }

    #[test]
    fn circle_density_at_mean() {
        let mu = emb(&[1.0, 0.0]);
        let r = IdentityRecord::new("a", 1950, vec![mu.clone()]).unwrap();
        let g = Gallery::with_kappa(vec![r], 1.0).unwrap();
        let got = g.log_likelihood(&mu, Candidate::Known(0)).unwrap();
        let expected = -(2.0 * std::f64::consts::PI).ln() - 1.266_065_877_752_008_4f64.ln() + 1.0;
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn likelihood_monotone_in_similarity() {
        let mu = emb(&[1.0, 0.0, 0.0]);
        let r = IdentityRecord::new("a", 1950, vec![mu]).unwrap();
        let g = Gallery::with_kappa(vec![r], 5.0).unwrap();
        let near = emb(&[0.9, 0.1, 0.0]);
        let far = emb(&[0.1, 0.9, 0.0]);
        assert!(
            g.log_likelihood(&near, Candidate::Known(0)).unwrap()
                > g.log_likelihood(&far, Candidate::Known(0)).unwrap()
        );
        assert!(matches!(
            g.log_likelihood(&emb(&[1.0, 0.0]), Candidate::Known(0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn candidate_lookup() {
        let r = IdentityRecord::new("a", 1950, vec![emb(&[1.0, 0.0])]).unwrap();
        let g = Gallery::with_kappa(vec![r], 1.0).unwrap();
        assert_eq!(g.candidate("a").unwrap(), Candidate::Known(0));
        assert_eq!(g.candidate(OOD_ID).unwrap(), Candidate::Ood);
        assert!(g.candidate("b").is_err());
        assert_eq!(g.candidate_id(Candidate::Ood), OOD_ID);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn kappa_is_permutation_invariant(seed in 0u64..1000, rot in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut records: Vec<IdentityRecord> = (0..5)
                    .map(|i| {
                        let n = 2 + i % 3;
                        IdentityRecord::new(format!("id{i}"), 1950, (0..n).map(|_| random_unit(&mut rng, 6)).collect()).unwrap()
                    })
                    .collect();
                let k = estimate_kappa(&records, 6).unwrap();
                records.rotate_left(rot);
                for r in &mut records {
                    r.portraits.reverse();
                }
                let k2 = estimate_kappa(&records, 6).unwrap();
                prop_assert!((k - k2).abs() <= 1e-9 * k.max(1.0));
            }
        }
    }
}
