//! Seeded synthetic worlds: identities with vMF portraits, multi-face scenes
//! with known capture years and assignments, and matching annotation inputs.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::annotation::{ProblemFaceRecord, ProblemRecord};
use crate::dist::{DiscreteDistribution, Embedding, YearSupport, DEFAULT_AGE_SPAN};
use crate::error::{Error, Result};
use crate::gallery::{IdentityRecord, BIRTH_YEAR_RANGE, OOD_ID};
use crate::priors::PriorStats;
use crate::scene::{Face, Scene};

pub type WorldRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> WorldRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Draws one unit vector from vMF(`mu`, `kappa`) with Wood's rejection
/// scheme. `mu` must be unit norm with at least two entries.
pub fn sample_vmf_with<R: Rng + ?Sized>(mu: &[f64], kappa: f64, rng: &mut R) -> Vec<f64> {
    let dim = mu.len();
    assert!(dim >= 2, "vMF sampling needs dimension >= 2");
    assert!(kappa.is_finite() && kappa >= 0.0, "invalid kappa {kappa}");
    if kappa == 0.0 {
        return random_unit(dim, rng);
    }
    let m = (dim - 1) as f64;
    let b = m / (2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
    let beta = Beta::new(m / 2.0, m / 2.0).expect("valid beta parameters");
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.gen();
        if kappa * w + m * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    // direction orthogonal to mu
    let v = loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let proj: f64 = v.iter().zip(mu).map(|(a, b)| a * b).sum();
        for (x, m) in v.iter_mut().zip(mu) {
            *x -= proj * m;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    let s = (1.0 - w * w).max(0.0).sqrt();
    mu.iter().zip(&v).map(|(m, v)| w * m + s * v).collect()
}

pub fn sample_vmf(mu: &Embedding, kappa: f64, seed: u64) -> Result<Embedding> {
    if mu.dim() < 2 {
        return Err(Error::InvalidParameter(
            "vMF sampling needs dimension >= 2".into(),
        ));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::InvalidKappa(kappa));
    }
    Embedding::new(sample_vmf_with(
        mu.as_slice(),
        kappa,
        &mut rng_from_seed(seed),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum AgeFamily {
    /// Point mass at the rounded noisy age.
    Point,
    /// Discretized Gaussian bell around the noisy age, clipped to the age
    /// range and renormalized.
    Bell { width: f64 },
}

/// Distribution of capture years before restriction to `capture_years`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum YearProfile {
    Uniform,
    Bell { center: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub n_identities: usize,
    pub dim: usize,
    /// Concentration of portraits around the identity direction.
    pub kappa_true: f64,
    /// Concentration of scene faces; defaults to `kappa_true`.
    #[serde(default)]
    pub face_kappa: Option<f64>,
    pub portraits_per_identity: usize,
    /// Inclusive birth-year range.
    pub birth_years: (i32, i32),
    /// Inclusive capture-year range.
    pub capture_years: (i32, i32),
    pub year_profile: YearProfile,
    pub age_family: AgeFamily,
    /// Standard deviation of the age estimate around the true age.
    pub age_noise_sd: f64,
    /// Inclusive range of faces per scene.
    pub scene_sizes: (usize, usize),
    /// Probability that a face belongs to nobody in the gallery.
    pub ood_fraction: f64,
    /// Inclusive range of the uniform release lag (capture minus label), in
    /// years; nonpositive.
    pub release_lag: (i32, i32),
    pub n_scenes: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            n_identities: 200,
            dim: 16,
            kappa_true: 50.0,
            face_kappa: None,
            portraits_per_identity: 5,
            birth_years: (1900, 1980),
            capture_years: (1930, 2010),
            year_profile: YearProfile::Uniform,
            age_family: AgeFamily::Bell { width: 5.0 },
            age_noise_sd: 5.0,
            scene_sizes: (1, 4),
            ood_fraction: 0.0,
            release_lag: (0, 0),
            n_scenes: 100,
        }
    }
}

impl WorldSpec {
    pub fn face_kappa(&self) -> f64 {
        self.face_kappa.unwrap_or(self.kappa_true)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("world spec: {m}")));
        if self.n_identities == 0 {
            return bad("n_identities must be positive".into());
        }
        if self.dim < 2 {
            return bad(format!("dim {} below 2", self.dim));
        }
        for (name, k) in [
            ("kappa_true", self.kappa_true),
            ("face_kappa", self.face_kappa()),
        ] {
            if !(k.is_finite() && k >= 0.0) {
                return bad(format!("{name} {k} invalid"));
            }
        }
        if self.portraits_per_identity == 0 {
            return bad("portraits_per_identity must be positive".into());
        }
        let (b0, b1) = self.birth_years;
        if b0 > b1 || !BIRTH_YEAR_RANGE.contains(&b0) || !BIRTH_YEAR_RANGE.contains(&b1) {
            return bad(format!("birth years {b0}..={b1}"));
        }
        let (c0, c1) = self.capture_years;
        if c0 > c1 {
            return bad(format!("capture years {c0}..={c1}"));
        }
        if c1 < b0 || c0 > b1 + DEFAULT_AGE_SPAN as i32 - 1 {
            return bad("no capture year has a living identity".into());
        }
        if let YearProfile::Bell { width, .. } = self.year_profile {
            if !(width > 0.0 && width.is_finite()) {
                return bad(format!("year profile width {width}"));
            }
        }
        if let AgeFamily::Bell { width } = self.age_family {
            if !(width > 0.0 && width.is_finite()) {
                return bad(format!("age bell width {width}"));
            }
        }
        if !(self.age_noise_sd >= 0.0 && self.age_noise_sd.is_finite()) {
            return bad(format!("age noise {}", self.age_noise_sd));
        }
        let (s0, s1) = self.scene_sizes;
        if s0 == 0 || s0 > s1 {
            return bad(format!("scene sizes {s0}..={s1}"));
        }
        if !(0.0..=1.0).contains(&self.ood_fraction) {
            return bad(format!("ood fraction {}", self.ood_fraction));
        }
        let (l0, l1) = self.release_lag;
        if l0 > l1 || l1 > 0 {
            return bad(format!("release lag {l0}..={l1} must be nonpositive"));
        }
        Ok(())
    }

    fn year_weight(&self, year: i32) -> f64 {
        match self.year_profile {
            YearProfile::Uniform => 1.0,
            YearProfile::Bell { center, width } => {
                (-0.5 * ((f64::from(year) - center) / width).powi(2)).exp()
            }
        }
    }
}

/// Identities of a world plus what is needed to draw scenes from it.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub identities: Vec<IdentityRecord>,
    /// True vMF mean direction of each identity.
    pub directions: Vec<Vec<f64>>,
    /// Identity indices sorted by birth year.
    by_birth: Vec<usize>,
    /// Capture years and their cumulative sampling weights.
    years: Vec<i32>,
    cumulative: Vec<f64>,
}

/// A world's identities and one batch of scenes.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub world: World,
    pub scenes: Vec<Scene>,
}

pub fn sample_world(spec: &WorldSpec, seed: u64) -> Result<SyntheticWorld> {
    let mut rng = rng_from_seed(seed);
    let world = World::sample(spec.clone(), &mut rng)?;
    let scenes = world.sample_scenes(spec.n_scenes, &mut rng)?;
    Ok(SyntheticWorld { world, scenes })
}

impl World {
    pub fn sample<R: Rng + ?Sized>(spec: WorldSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut identities = Vec::with_capacity(spec.n_identities);
        let mut directions = Vec::with_capacity(spec.n_identities);
        let (b0, b1) = spec.birth_years;
        for k in 0..spec.n_identities {
            let mu = random_unit(spec.dim, rng);
            let birth = rng.gen_range(b0..=b1);
            let portraits = (0..spec.portraits_per_identity)
                .map(|_| {
                    Embedding::new(sample_vmf_with(&mu, spec.kappa_true, rng))
                        .map(|e| e.quantized())
                })
                .collect::<Result<Vec<_>>>()?;
            identities.push(IdentityRecord::new(format!("id{k:06}"), birth, portraits)?);
            directions.push(mu);
        }
        let mut by_birth: Vec<usize> = (0..identities.len()).collect();
        by_birth.sort_by_key(|&i| (identities[i].birth_year, i));

        let (c0, c1) = spec.capture_years;
        let mut years = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for y in c0..=c1 {
            let w = spec.year_weight(y);
            if w > 0.0 {
                total += w;
                years.push(y);
                cumulative.push(total);
            }
        }
        if years.is_empty() {
            return Err(Error::InvalidParameter(
                "world spec: year profile has no mass".into(),
            ));
        }
        Ok(Self {
            spec,
            identities,
            directions,
            by_birth,
            years,
            cumulative,
        })
    }

    /// Indices of identities aged 0..=99 in `year`.
    fn alive(&self, year: i32) -> &[usize] {
        let lo = year - (DEFAULT_AGE_SPAN as i32 - 1);
        let start = self
            .by_birth
            .partition_point(|&i| self.identities[i].birth_year < lo);
        let end = self
            .by_birth
            .partition_point(|&i| self.identities[i].birth_year <= year);
        &self.by_birth[start..end]
    }

    fn sample_year<R: Rng + ?Sized>(&self, rng: &mut R) -> i32 {
        let total = *self.cumulative.last().unwrap();
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.years[i.min(self.years.len() - 1)]
    }

    fn age_posterior<R: Rng + ?Sized>(
        &self,
        true_age: f64,
        rng: &mut R,
    ) -> Result<DiscreteDistribution> {
        let noise: f64 = rng.sample(StandardNormal);
        let max_age = (DEFAULT_AGE_SPAN - 1) as f64;
        let center = (true_age + self.spec.age_noise_sd * noise).clamp(0.0, max_age);
        match self.spec.age_family {
            AgeFamily::Point => {
                DiscreteDistribution::point_mass(0, DEFAULT_AGE_SPAN, center.round() as i32)
            }
            AgeFamily::Bell { width } => {
                let w: Vec<f64> = (0..DEFAULT_AGE_SPAN)
                    .map(|a| (-0.5 * ((a as f64 - center) / width).powi(2)).exp())
                    .collect();
                DiscreteDistribution::from_weights(0, &w)
            }
        }
    }

    /// Samples `n_scenes` scenes with sizes and OOD faces drawn from the spec.
    pub fn sample_scenes<R: Rng + ?Sized>(
        &self,
        n_scenes: usize,
        rng: &mut R,
    ) -> Result<Vec<Scene>> {
        let (s0, s1) = self.spec.scene_sizes;
        (0..n_scenes)
            .map(|i| {
                let size = rng.gen_range(s0..=s1);
                let unknown = (0..size)
                    .filter(|_| rng.gen_bool(self.spec.ood_fraction))
                    .count();
                self.sample_scene(&format!("s{i:06}"), size - unknown, unknown, rng)
            })
            .collect()
    }

    /// One scene with exactly `n_known` gallery identities and `n_unknown`
    /// strangers, in random order.
    pub fn sample_scene<R: Rng + ?Sized>(
        &self,
        image_id: &str,
        n_known: usize,
        n_unknown: usize,
        rng: &mut R,
    ) -> Result<Scene> {
        let mut year = None;
        for _ in 0..1000 {
            let y = self.sample_year(rng);
            if self.alive(y).len() >= n_known {
                year = Some(y);
                break;
            }
        }
        let capture = year.ok_or_else(|| {
            Error::InvalidParameter(format!("no capture year has {n_known} living identities"))
        })?;
        let alive = self.alive(capture);
        let chosen: Vec<usize> = sample_indices(rng, alive.len(), n_known)
            .into_iter()
            .map(|i| alive[i])
            .collect();
        let face_kappa = self.spec.face_kappa();
        let mut faces = Vec::with_capacity(n_known + n_unknown);
        for &k in &chosen {
            let embedding = Embedding::new(sample_vmf_with(&self.directions[k], face_kappa, rng))?;
            let age = f64::from(capture - self.identities[k].birth_year);
            faces.push((
                self.identities[k].id.clone(),
                embedding,
                self.age_posterior(age, rng)?,
            ));
        }
        for _ in 0..n_unknown {
            let stranger = random_unit(self.spec.dim, rng);
            let embedding = Embedding::new(sample_vmf_with(&stranger, face_kappa, rng))?;
            let age = rng.gen_range(0..DEFAULT_AGE_SPAN) as f64;
            faces.push((OOD_ID.to_string(), embedding, self.age_posterior(age, rng)?));
        }
        faces.shuffle(rng);
        let (l0, l1) = self.spec.release_lag;
        let lag = rng.gen_range(l0..=l1);
        let label = capture - lag;
        let mut truth = Vec::with_capacity(faces.len());
        let faces = faces
            .into_iter()
            .enumerate()
            .map(|(j, (id, embedding, age_posterior))| {
                truth.push(id);
                Face {
                    face_id: format!("f{j}"),
                    embedding: embedding.quantized(),
                    age_posterior,
                }
            })
            .collect();
        Scene::new(image_id, faces, Some(label), Some(truth))
    }

    /// Year counts of `n` independently drawn labels, as image and movie
    /// priors would be built from a training split.
    pub fn prior_stats<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PriorStats {
        let (l0, l1) = self.spec.release_lag;
        let mut year_counts = BTreeMap::new();
        for _ in 0..n {
            let y = self.sample_year(rng) - rng.gen_range(l0..=l1);
            *year_counts.entry(y).or_insert(0) += 1;
        }
        PriorStats {
            movie_counts: year_counts.clone(),
            year_counts,
            ..PriorStats::default()
        }
    }

    /// Year support that covers every capture year and label of the world.
    pub fn year_support(&self) -> YearSupport {
        let (c0, c1) = self.spec.capture_years;
        YearSupport {
            first_year: c0,
            last_year: c1 - self.spec.release_lag.0,
        }
    }
}

/// Annotation inputs derived from scenes: each scene's known identities are
/// linked to its image, plus `extra_links` random gallery identities. The
/// face embeddings are returned as a flat f32 matrix indexed by
/// `embedding_row`.
pub fn annotation_problems<R: Rng + ?Sized>(
    world: &World,
    scenes: &[Scene],
    extra_links: usize,
    rng: &mut R,
) -> (Vec<ProblemRecord>, Vec<f32>) {
    let mut matrix = Vec::new();
    let mut row = 0u64;
    let problems = scenes
        .iter()
        .map(|s| {
            let truth = s.truth_assignment.clone().unwrap_or_default();
            let mut candidates: Vec<String> = truth
                .iter()
                .filter(|id| id.as_str() != OOD_ID)
                .cloned()
                .collect();
            for _ in 0..extra_links {
                let k = rng.gen_range(0..world.identities.len());
                candidates.push(world.identities[k].id.clone());
            }
            candidates.sort();
            candidates.dedup();
            let faces = s
                .faces
                .iter()
                .map(|f| {
                    matrix.extend(f.embedding.as_slice().iter().map(|&v| v as f32));
                    let rec = ProblemFaceRecord {
                        face_id: f.face_id.clone(),
                        bbox: [0.0, 0.0, 64.0, 64.0],
                        embedding_row: row,
                        age_estimate: f.age_posterior.mean(),
                    };
                    row += 1;
                    rec
                })
                .collect();
            ProblemRecord {
                image_id: s.image_id.clone(),
                release_year: s.truth_year.unwrap_or_default(),
                faces,
                candidates,
            }
        })
        .collect();
    (problems, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::write_scenes;
    use crate::special::mean_resultant_length;

    #[test]
    fn vmf_mean_resultant_length() {
        let mut rng = rng_from_seed(7);
        for (dim, kappa) in [(16usize, 10.0), (3, 2.0), (16, 200.0)] {
            let mut mu = vec![0.0; dim];
            mu[0] = 1.0;
            let n = 100_000;
            let mut sum = vec![0.0; dim];
            for _ in 0..n {
                let x = sample_vmf_with(&mu, kappa, &mut rng);
                assert!((x.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
                for (s, v) in sum.iter_mut().zip(&x) {
                    *s += v;
                }
            }
            let r = sum.iter().map(|s| s * s).sum::<f64>().sqrt() / n as f64;
            let a = mean_resultant_length(dim, kappa);
            assert!(
                (r - a).abs() / a < 0.01,
                "D={dim} kappa={kappa}: {r} vs {a}"
            );
        }
    }

    #[test]
    fn vmf_zero_kappa_is_uniform() {
        let mut rng = rng_from_seed(3);
        let mu = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let n = 10_000;
        let mut sum = [0.0; 8];
        for _ in 0..n {
            for (s, v) in sum.iter_mut().zip(sample_vmf_with(&mu, 0.0, &mut rng)) {
                *s += v;
            }
        }
        let norm = sum.iter().map(|s| s * s).sum::<f64>().sqrt() / n as f64;
        assert!(norm < 0.02, "{norm}");
    }

    #[test]
    fn vmf_circle_histogram_matches_density() {
        let kappa = 5.0;
        let bins = 36;
        let n = 200_000;
        let mut rng = rng_from_seed(11);
        let mut counts = vec![0usize; bins];
        let width = 2.0 * std::f64::consts::PI / bins as f64;
        for _ in 0..n {
            let x = sample_vmf_with(&[1.0, 0.0], kappa, &mut rng);
            let theta = x[1].atan2(x[0]).rem_euclid(2.0 * std::f64::consts::PI);
            counts[((theta / width) as usize).min(bins - 1)] += 1;
        }
        // closed-form density exp(kappa cos t) / (2 pi I0(kappa)), Simpson per bin
        let log_norm = crate::special::log_vmf_normalizer(2, kappa);
        let density = |t: f64| (log_norm + kappa * t.cos()).exp();
        let mut chi2 = 0.0;
        for (b, &c) in counts.iter().enumerate() {
            let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
            let steps = 64;
            let h = (hi - lo) / steps as f64;
            let mut s = density(lo) + density(hi);
            for i in 1..steps {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * density(lo + i as f64 * h);
            }
            let expected = s * h / 3.0 * n as f64;
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // 35 degrees of freedom, 0.1% critical value
        assert!(chi2 < 66.6, "chi2 = {chi2}");
    }

    #[test]
    fn vmf_concentrates_for_large_kappa() {
        let mu = Embedding::new(vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let x = sample_vmf(&mu, 1e6, 5).unwrap();
        assert!(mu.dot(&x) > 1.0 - 1e-5);
    }

    fn small_spec() -> WorldSpec {
        WorldSpec {
            n_identities: 30,
            dim: 8,
            n_scenes: 40,
            ..WorldSpec::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let serialize = |w: &SyntheticWorld| {
            let mut buf = Vec::new();
            write_scenes(&mut buf, &w.scenes).unwrap();
            for r in &w.world.identities {
                for p in &r.portraits {
                    for v in p.as_slice() {
                        buf.extend(v.to_le_bytes());
                    }
                }
                buf.extend(r.birth_year.to_le_bytes());
            }
            buf
        };
        let a = sample_world(&small_spec(), 42).unwrap();
        let b = sample_world(&small_spec(), 42).unwrap();
        let c = sample_world(&small_spec(), 43).unwrap();
        assert_eq!(serialize(&a), serialize(&b));
        assert_ne!(serialize(&a), serialize(&c));
    }

    #[test]
    fn scenes_respect_spec() {
        let spec = WorldSpec {
            ood_fraction: 0.0,
            release_lag: (-3, 0),
            ..small_spec()
        };
        let w = sample_world(&spec, 1).unwrap();
        let support = w.world.year_support();
        for s in &w.scenes {
            let truth = s.truth_assignment.as_ref().unwrap();
            assert!(!truth.iter().any(|t| t == OOD_ID));
            assert!((1..=4).contains(&s.len()));
            assert!(support.contains(s.truth_year.unwrap()));
            for (f, id) in s.faces.iter().zip(truth) {
                assert!((f.embedding.norm() - 1.0).abs() < 1e-6);
                let k = w.world.identities.iter().position(|r| &r.id == id).unwrap();
                let age = s.truth_year.unwrap() - w.world.identities[k].birth_year;
                // label is at most 3 years after capture
                assert!((0..=102).contains(&age));
            }
        }
    }

    #[test]
    fn huge_kappa_faces_sit_on_prototypes() {
        let spec = WorldSpec {
            kappa_true: 1e6,
            scene_sizes: (1, 2),
            ..small_spec()
        };
        let w = sample_world(&spec, 9).unwrap();
        for s in &w.scenes {
            for (f, id) in s.faces.iter().zip(s.truth_assignment.as_ref().unwrap()) {
                let r = w.world.identities.iter().find(|r| &r.id == id).unwrap();
                let proto = r.prototype().unwrap();
                let max_diff = f
                    .embedding
                    .as_slice()
                    .iter()
                    .zip(proto.as_slice())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(max_diff < 1e-2, "{max_diff}");
                assert!(1.0 - f.embedding.dot(&proto) < 1e-3);
            }
        }
    }

    #[test]
    fn ood_fraction_one_gives_only_strangers() {
        let spec = WorldSpec {
            ood_fraction: 1.0,
            ..small_spec()
        };
        let w = sample_world(&spec, 2).unwrap();
        assert!(w.scenes.iter().all(|s| s.truth_counts().unwrap().0 == 0));
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            WorldSpec {
                dim: 1,
                ..small_spec()
            },
            WorldSpec {
                release_lag: (0, 2),
                ..small_spec()
            },
            WorldSpec {
                scene_sizes: (0, 2),
                ..small_spec()
            },
            WorldSpec {
                ood_fraction: 1.5,
                ..small_spec()
            },
            WorldSpec {
                birth_years: (1700, 1800),
                ..small_spec()
            },
        ] {
            assert!(sample_world(&spec, 0).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn annotation_problems_link_truth() {
        let w = sample_world(&small_spec(), 4).unwrap();
        let (problems, matrix) = annotation_problems(&w.world, &w.scenes, 2, &mut rng_from_seed(1));
        let faces: usize = w.scenes.iter().map(Scene::len).sum();
        assert_eq!(matrix.len(), faces * 8);
        assert_eq!(problems.len(), w.scenes.len());
        assert_eq!(
            problems[1].faces[0].embedding_row as usize,
            w.scenes[0].len()
        );
    }
}
