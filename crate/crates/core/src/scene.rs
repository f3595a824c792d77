//! Scenes (one image's detected faces) and their JSON-lines file format.
//!
//! One scene per line:
//!
//! ```json
//! {"image_id": "img-1", "truth_year": 1974, "truth_assignment": ["nm01", "__ood__"],
//!  "faces": [{"face_id": "f0", "embedding": [0.1, ...],
//!             "age_posterior": {"start": 0, "log_mass": [-4.6, null, ...]}}]}
//! ```
//!
//! `log_mass` entries are natural-log masses with `null` standing for zero
//! mass. Producers may give linear `probs` instead; they are normalized on
//! read. Embeddings are written at single precision.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dist::{DiscreteDistribution, Embedding};
use crate::error::{Error, Result};
use crate::gallery::OOD_ID;

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub face_id: String,
    pub embedding: Embedding,
    /// Distribution over integer ages.
    pub age_posterior: DiscreteDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub faces: Vec<Face>,
    pub truth_year: Option<i32>,
    /// Ground-truth identity ids aligned with `faces`; OOD may repeat.
    pub truth_assignment: Option<Vec<String>>,
}

impl Scene {
    pub fn new(
        image_id: impl Into<String>,
        faces: Vec<Face>,
        truth_year: Option<i32>,
        truth_assignment: Option<Vec<String>>,
    ) -> Result<Self> {
        let scene = Self {
            image_id: image_id.into(),
            faces,
            truth_year,
            truth_assignment,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.faces {
            if !seen.insert(f.face_id.as_str()) {
                return Err(Error::InvalidScene(format!(
                    "{}: duplicate face id `{}`",
                    self.image_id, f.face_id
                )));
            }
        }
        if let Some(truth) = &self.truth_assignment {
            if truth.len() != self.faces.len() {
                return Err(Error::InvalidScene(format!(
                    "{}: truth assignment has {} ids for {} faces",
                    self.image_id,
                    truth.len(),
                    self.faces.len()
                )));
            }
            let mut ids = HashSet::new();
            for id in truth.iter().filter(|id| id.as_str() != OOD_ID) {
                if !ids.insert(id.as_str()) {
                    return Err(Error::InvalidScene(format!(
                        "{}: identity `{id}` assigned twice",
                        self.image_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Known and unknown face counts under the ground truth.
    pub fn truth_counts(&self) -> Option<(usize, usize)> {
        self.truth_assignment.as_ref().map(|t| {
            let unknown = t.iter().filter(|id| id.as_str() == OOD_ID).count();
            (t.len() - unknown, unknown)
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgePosteriorRecord {
    start: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_mass: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaceRecord {
    face_id: String,
    embedding: Vec<f32>,
    age_posterior: AgePosteriorRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_assignment: Option<Vec<String>>,
    faces: Vec<FaceRecord>,
}

fn age_from_record(r: AgePosteriorRecord) -> Result<DiscreteDistribution> {
    match (r.log_mass, r.probs) {
        (Some(logs), None) => {
            let logs: Vec<f64> = logs
                .into_iter()
                .map(|l| l.unwrap_or(f64::NEG_INFINITY))
                .collect();
            DiscreteDistribution::from_log_mass(r.start, logs)
        }
        (None, Some(probs)) => DiscreteDistribution::from_weights(r.start, &probs),
        _ => Err(Error::InvalidScene(
            "age_posterior needs exactly one of `log_mass` or `probs`".into(),
        )),
    }
}

impl Scene {
    pub fn from_json_line(line: &str) -> Result<Self> {
        let rec: SceneRecord = serde_json::from_str(line)?;
        let faces = rec
            .faces
            .into_iter()
            .map(|f| {
                Ok(Face {
                    embedding: Embedding::from_f32(&f.embedding)?,
                    age_posterior: age_from_record(f.age_posterior)?,
                    face_id: f.face_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Scene::new(rec.image_id, faces, rec.truth_year, rec.truth_assignment)
    }

    pub fn to_json_line(&self) -> Result<String> {
        let rec = SceneRecord {
            image_id: self.image_id.clone(),
            truth_year: self.truth_year,
            truth_assignment: self.truth_assignment.clone(),
            faces: self
                .faces
                .iter()
                .map(|f| FaceRecord {
                    face_id: f.face_id.clone(),
                    embedding: f.embedding.as_slice().iter().map(|&v| v as f32).collect(),
                    age_posterior: AgePosteriorRecord {
                        start: f.age_posterior.start(),
                        log_mass: Some(
                            f.age_posterior
                                .log_mass()
                                .iter()
                                .map(|&l| l.is_finite().then_some(l))
                                .collect(),
                        ),
                        probs: None,
                    },
                })
                .collect(),
        };
        Ok(serde_json::to_string(&rec)?)
    }
}

pub fn write_scenes<W: Write>(mut w: W, scenes: &[Scene]) -> Result<()> {
    for s in scenes {
        w.write_all(s.to_json_line()?.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every scene, failing on the first malformed line.
pub fn read_scenes<R: BufRead>(r: R) -> Result<Vec<Scene>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Scene::from_json_line(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn face(id: &str) -> Face {
        Face {
            face_id: id.into(),
            embedding: Embedding::new(vec![1.0, 2.0]).unwrap().quantized(),
            age_posterior: DiscreteDistribution::from_weights(0, &[0.0, 0.25, 0.75]).unwrap(),
        }
    }

    #[test]
    fn validation() {
        assert!(Scene::new("x", vec![face("a"), face("a")], None, None).is_err());
        assert!(Scene::new("x", vec![face("a")], None, Some(vec![])).is_err());
        assert!(Scene::new(
            "x",
            vec![face("a"), face("b")],
            None,
            Some(vec!["p".into(), "p".into()])
        )
        .is_err());
        let s = Scene::new(
            "x",
            vec![face("a"), face("b"), face("c")],
            Some(1970),
            Some(vec![OOD_ID.into(), OOD_ID.into(), "p".into()]),
        )
        .unwrap();
        assert_eq!(s.truth_counts(), Some((1, 2)));
    }

    #[test]
    fn json_round_trip_and_probs_input() {
        let s = Scene::new("img", vec![face("a"), face("b")], Some(1974), None).unwrap();
        let line = s.to_json_line().unwrap();
        assert!(line.contains("null"));
        assert_eq!(Scene::from_json_line(&line).unwrap(), s);

        let alt = r#"{"image_id":"i","faces":[{"face_id":"f","embedding":[3.0,4.0],"age_posterior":{"start":20,"probs":[1,3]}}]}"#;
        let s = Scene::from_json_line(alt).unwrap();
        assert!((s.faces[0].age_posterior.mass_at(21) - 0.75).abs() < 1e-15);
        assert!((s.faces[0].embedding.as_slice()[0] - 0.6).abs() < 1e-7);
        let bad = r#"{"image_id":"i","faces":[{"face_id":"f","embedding":[1.0],"age_posterior":{"start":0}}]}"#;
        assert!(Scene::from_json_line(bad).is_err());
    }
}
