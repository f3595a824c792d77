//! Capture-year posterior `p(y | f)` for the Oracle, Full, Top-1 and Naive
//! models.
//!
//! Under an assignment each known face turns its age posterior into a year
//! posterior through the identity's birth year. These are multiplied together
//! with the identities' temporal priors. Faces assigned to the OOD identity
//! contribute nothing.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::{
    assignment_entropy, assignment_posterior, build_pools, enumerate_assignments, naive_assignment,
    top1_assignment, Assignment, PoolConfig, DEFAULT_ASSIGNMENT_CAP, DEFAULT_COVERAGE,
    DEFAULT_K_MAX,
};
use crate::dist::{
    log_add_exp, normalize_log, shift_distribution, DiscreteDistribution, YearSupport,
};
use crate::error::{Error, Result};
use crate::gallery::{Candidate, Gallery};
use crate::priors::{individual_prior, PriorSpec};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Oracle,
    Full,
    Top1,
    Naive,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Oracle, Model::Full, Model::Top1, Model::Naive];

    pub fn tag(self) -> &'static str {
        match self {
            Model::Oracle => "oracle",
            Model::Full => "full",
            Model::Top1 => "top1",
            Model::Naive => "naive",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatingConfig {
    pub support: YearSupport,
    pub prior: PriorSpec,
    pub open_set: bool,
    pub coverage: f64,
    pub k_max: usize,
    pub assignment_cap: usize,
}

impl Default for DatingConfig {
    fn default() -> Self {
        Self {
            support: YearSupport::default(),
            prior: PriorSpec::Uniform,
            open_set: false,
            coverage: DEFAULT_COVERAGE,
            k_max: DEFAULT_K_MAX,
            assignment_cap: DEFAULT_ASSIGNMENT_CAP,
        }
    }
}

impl DatingConfig {
    pub fn pool_config(&self) -> PoolConfig {
        PoolConfig {
            coverage: self.coverage,
            k_max: self.k_max,
            open_set: self.open_set,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatingResult {
    pub model: Model,
    pub posterior: DiscreteDistribution,
    /// Median of `posterior`.
    pub predicted_year: i32,
    /// The assignment the posterior was conditioned on (all but Full).
    pub chosen_assignment: Option<Assignment>,
    /// Entropy in nats of the assignment posterior (Full and Top-1).
    pub assignment_entropy: Option<f64>,
    pub n_assignments: usize,
    /// Faces whose age posterior fell entirely outside the year support under
    /// some assignment used, and were treated as uninformative.
    pub uninformative_faces: Vec<usize>,
    /// The faces' age evidence was mutually incompatible (no year had
    /// positive mass), so the posterior fell back to the temporal prior.
    pub conflict: bool,
}

/// Year posterior of one assignment before the result is assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentYears {
    pub log_mass: Vec<f64>,
    pub uninformative_faces: Vec<usize>,
    pub conflict: bool,
}

/// Dates scenes against a fixed gallery. Temporal priors are computed once per
/// distinct birth year.
pub struct Dater<'g> {
    gallery: &'g Gallery,
    config: DatingConfig,
    priors: HashMap<i32, Option<Vec<f64>>>,
}

impl<'g> Dater<'g> {
    pub fn new(gallery: &'g Gallery, config: DatingConfig) -> Result<Self> {
        config.pool_config().validate()?;
        if config.assignment_cap == 0 {
            return Err(Error::InvalidParameter(
                "assignment cap must be positive".into(),
            ));
        }
        let mut priors = HashMap::new();
        for i in 0..gallery.len() {
            let b = gallery.birth_year(i);
            if priors.contains_key(&b) {
                continue;
            }
            let prior = match individual_prior(&config.prior, b, &config.support) {
                Ok(p) => Some(p.log_mass().to_vec()),
                Err(Error::EmptySupport { .. }) => None,
                Err(e) => return Err(e),
            };
            priors.insert(b, prior);
        }
        Ok(Self {
            gallery,
            config,
            priors,
        })
    }

    pub fn gallery(&self) -> &Gallery {
        self.gallery
    }

    pub fn config(&self) -> &DatingConfig {
        &self.config
    }

    pub fn date(&self, scene: &Scene, model: Model) -> Result<DatingResult> {
        match model {
            Model::Oracle => self.date_oracle(scene),
            Model::Full => self.date_full(scene),
            Model::Top1 => self.date_top1(scene),
            Model::Naive => self.date_naive(scene),
        }
    }

    fn prior_of(&self, index: usize) -> Result<&[f64]> {
        let b = self.gallery.birth_year(index);
        self.priors
            .get(&b)
            .and_then(|p| p.as_deref())
            .ok_or(Error::EmptySupport { birth_year: b })
    }

    /// Per-year log-mass contributed by one face under one candidate.
    fn face_term(
        &self,
        scene: &Scene,
        face: usize,
        index: usize,
        with_prior: bool,
    ) -> Result<(Vec<f64>, bool)> {
        let shifted = shift_distribution(
            &scene.faces[face].age_posterior,
            self.gallery.birth_year(index),
            &self.config.support,
        );
        let mut term = if shifted.informative {
            shifted.distribution.log_mass().to_vec()
        } else {
            vec![0.0; self.config.support.len()]
        };
        if with_prior {
            for (t, p) in term.iter_mut().zip(self.prior_of(index)?) {
                *t += p;
            }
        }
        Ok((term, shifted.informative))
    }

    fn prior_term(&self, index: usize) -> Result<Vec<f64>> {
        Ok(self.prior_of(index)?.to_vec())
    }

    /// `p(y | f, i)`: the shifted age posteriors of the known faces times
    /// their joint temporal prior, normalized over the support.
    pub fn year_posterior_given_assignment(
        &self,
        scene: &Scene,
        assignment: &[Candidate],
    ) -> Result<AssignmentYears> {
        let mut cache = TermCache::default();
        self.years_for(scene, assignment, true, &mut cache)
    }

    fn years_for(
        &self,
        scene: &Scene,
        assignment: &[Candidate],
        with_prior: bool,
        cache: &mut TermCache,
    ) -> Result<AssignmentYears> {
        if assignment.len() != scene.len() {
            return Err(Error::InvalidParameter(format!(
                "assignment of length {} for {} faces",
                assignment.len(),
                scene.len()
            )));
        }
        let len = self.config.support.len();
        let mut acc = vec![0.0; len];
        let mut uninformative_faces = Vec::new();
        for (j, &c) in assignment.iter().enumerate() {
            let Candidate::Known(k) = c else { continue };
            let key = (j, k);
            if let Entry::Vacant(e) = cache.terms.entry(key) {
                e.insert(self.face_term(scene, j, k, with_prior)?);
            }
            let (term, informative) = &cache.terms[&key];
            if !informative {
                uninformative_faces.push(j);
            }
            for (a, t) in acc.iter_mut().zip(term) {
                *a += t;
            }
        }
        match normalize_log(acc) {
            Ok(log_mass) => Ok(AssignmentYears {
                log_mass,
                uninformative_faces,
                conflict: false,
            }),
            Err(Error::AllZeroMass) => {
                let mut acc = vec![0.0; len];
                if with_prior {
                    for &c in assignment {
                        if let Candidate::Known(k) = c {
                            for (a, t) in acc.iter_mut().zip(self.prior_term(k)?) {
                                *a += t;
                            }
                        }
                    }
                }
                Ok(AssignmentYears {
                    log_mass: normalize_log(acc)?,
                    uninformative_faces,
                    conflict: true,
                })
            }
            Err(e) => Err(e),
        }
    }

    fn finish(
        &self,
        model: Model,
        years: AssignmentYears,
        chosen_assignment: Option<Assignment>,
        assignment_entropy: Option<f64>,
        n_assignments: usize,
    ) -> Result<DatingResult> {
        let posterior =
            DiscreteDistribution::from_log_mass(self.config.support.first_year, years.log_mass)?;
        Ok(DatingResult {
            model,
            predicted_year: posterior.median(),
            posterior,
            chosen_assignment,
            assignment_entropy,
            n_assignments,
            uninformative_faces: years.uninformative_faces,
            conflict: years.conflict,
        })
    }

    fn scored_assignments(&self, scene: &Scene) -> Result<Vec<Assignment>> {
        let pools = build_pools(scene, self.gallery, &self.config.pool_config())?;
        let tuples = enumerate_assignments(&pools, self.config.assignment_cap)?;
        assignment_posterior(scene, tuples, self.gallery)
    }

    /// Marginalizes the year posterior over the enumerated assignments.
    pub fn date_full(&self, scene: &Scene) -> Result<DatingResult> {
        let assignments = self.scored_assignments(scene)?;
        self.mix(scene, &assignments)
    }

    /// Mixture of per-assignment year posteriors weighted by the assignment
    /// posterior. Assignments whose faces carry incompatible age evidence
    /// are dropped unless every assignment is in that state.
    pub fn mix(&self, scene: &Scene, assignments: &[Assignment]) -> Result<DatingResult> {
        if assignments.is_empty() {
            return Err(Error::NoValidAssignment);
        }
        let len = self.config.support.len();
        let mut cache = TermCache::default();
        let mut consistent = vec![f64::NEG_INFINITY; len];
        let mut fallback = vec![f64::NEG_INFINITY; len];
        let mut any_consistent = false;
        let mut uninformative = Vec::new();
        for a in assignments {
            let years = self.years_for(scene, &a.candidates, true, &mut cache)?;
            let target = if years.conflict {
                &mut fallback
            } else {
                any_consistent = true;
                &mut consistent
            };
            for (t, l) in target.iter_mut().zip(&years.log_mass) {
                *t = log_add_exp(*t, a.log_posterior + l);
            }
            uninformative.extend(years.uninformative_faces);
        }
        uninformative.sort_unstable();
        uninformative.dedup();
        let years = AssignmentYears {
            log_mass: normalize_log(if any_consistent { consistent } else { fallback })?,
            uninformative_faces: uninformative,
            conflict: !any_consistent,
        };
        self.finish(
            Model::Full,
            years,
            None,
            Some(assignment_entropy(assignments)),
            assignments.len(),
        )
    }

    pub fn date_top1(&self, scene: &Scene) -> Result<DatingResult> {
        let assignments = self.scored_assignments(scene)?;
        let top = top1_assignment(&assignments, self.gallery)
            .ok_or(Error::NoValidAssignment)?
            .clone();
        let years = self.year_posterior_given_assignment(scene, &top.candidates)?;
        self.finish(
            Model::Top1,
            years,
            Some(top),
            Some(assignment_entropy(&assignments)),
            assignments.len(),
        )
    }

    /// Product of the shifted age posteriors at the per-face greedy match,
    /// without any temporal prior.
    pub fn date_naive(&self, scene: &Scene) -> Result<DatingResult> {
        let naive = naive_assignment(scene, self.gallery, self.config.open_set)?;
        let years = self.years_for(scene, &naive.candidates, false, &mut TermCache::default())?;
        self.finish(Model::Naive, years, Some(naive), None, 1)
    }

    /// Conditions on the ground-truth assignment.
    pub fn date_oracle(&self, scene: &Scene) -> Result<DatingResult> {
        let truth = scene.truth_assignment.as_ref().ok_or_else(|| {
            Error::InvalidScene(format!(
                "{}: the oracle model needs a truth assignment",
                scene.image_id
            ))
        })?;
        let candidates = truth
            .iter()
            .map(|id| self.gallery.candidate(id))
            .collect::<Result<Vec<_>>>()?;
        let years = self.year_posterior_given_assignment(scene, &candidates)?;
        let assignment = Assignment {
            candidates,
            log_posterior: 0.0,
        };
        self.finish(Model::Oracle, years, Some(assignment), None, 1)
    }
}

#[derive(Default)]
struct TermCache {
    terms: HashMap<(usize, usize), (Vec<f64>, bool)>,
}
