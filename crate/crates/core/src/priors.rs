//! Per-identity temporal priors over capture years and their joint product.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{DiscreteDistribution, YearSupport, DEFAULT_AGE_SPAN};
use crate::error::{Error, Result};

/// Floor applied to every prior year before the final normalization.
pub const PRIOR_FLOOR: f64 = 1e-12;

/// Count statistics as ingested from JSON. Keys are decade-start years
/// (`decade_counts`) or calendar years (`year_counts` for images,
/// `movie_counts` for productions).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorStats {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub decade_counts: BTreeMap<i32, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub year_counts: BTreeMap<i32, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub movie_counts: BTreeMap<i32, u64>,
}

impl PriorStats {
    pub fn from_json(text: &str) -> Result<Self> {
        let stats: Self = serde_json::from_str(text)?;
        if let Some(k) = stats.decade_counts.keys().find(|k| k.rem_euclid(10) != 0) {
            return Err(Error::InvalidPrior(format!(
                "decade key {k} is not a decade start"
            )));
        }
        Ok(stats)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Decade counts, aggregated from year counts when none are given.
    pub fn decades(&self) -> BTreeMap<i32, u64> {
        if !self.decade_counts.is_empty() {
            return self.decade_counts.clone();
        }
        let mut out = BTreeMap::new();
        for (&y, &c) in &self.year_counts {
            *out.entry(decade_of(y)).or_insert(0) += c;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Uniform,
    Decade,
    Movie,
    Image,
    #[serde(rename = "comb")]
    Combination,
}

impl PriorKind {
    pub fn tag(self) -> &'static str {
        match self {
            PriorKind::Uniform => "uniform",
            PriorKind::Decade => "decade",
            PriorKind::Movie => "movie",
            PriorKind::Image => "image",
            PriorKind::Combination => "comb",
        }
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => PriorKind::Uniform,
            "decade" => PriorKind::Decade,
            "movie" => PriorKind::Movie,
            "image" => PriorKind::Image,
            "comb" | "combination" => PriorKind::Combination,
            other => return Err(Error::InvalidPrior(format!("unknown prior `{other}`"))),
        })
    }
}

/// A validated prior family with its statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    /// Flat over the hundred years after birth.
    Uniform,
    /// Mass per calendar decade proportional to counts, flat within a decade.
    Decade(BTreeMap<i32, u64>),
    /// Empirical movies per year.
    Movie(BTreeMap<i32, u64>),
    /// Empirical images per year.
    Image(BTreeMap<i32, u64>),
    /// `lambda * image + (1 - lambda) * uniform`.
    Combination {
        lambda: f64,
        year_counts: BTreeMap<i32, u64>,
    },
}

fn require_positive(counts: &BTreeMap<i32, u64>, what: &str) -> Result<()> {
    if counts.values().any(|&c| c > 0) {
        Ok(())
    } else {
        Err(Error::InvalidPrior(format!("{what} has no positive count")))
    }
}

impl PriorSpec {
    pub fn decade(counts: BTreeMap<i32, u64>) -> Result<Self> {
        require_positive(&counts, "decade_counts")?;
        if let Some(k) = counts.keys().find(|k| k.rem_euclid(10) != 0) {
            return Err(Error::InvalidPrior(format!(
                "decade key {k} is not a decade start"
            )));
        }
        Ok(PriorSpec::Decade(counts))
    }

    pub fn movie(counts: BTreeMap<i32, u64>) -> Result<Self> {
        require_positive(&counts, "movie_counts")?;
        Ok(PriorSpec::Movie(counts))
    }

    pub fn image(counts: BTreeMap<i32, u64>) -> Result<Self> {
        require_positive(&counts, "year_counts")?;
        Ok(PriorSpec::Image(counts))
    }

    pub fn combination(lambda: f64, year_counts: BTreeMap<i32, u64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidPrior(format!(
                "lambda {lambda} outside [0, 1]"
            )));
        }
        require_positive(&year_counts, "year_counts")?;
        Ok(PriorSpec::Combination {
            lambda,
            year_counts,
        })
    }

    /// Builds a spec of the given kind from ingested statistics.
    pub fn from_stats(kind: PriorKind, lambda: f64, stats: Option<&PriorStats>) -> Result<Self> {
        let need = || {
            stats.ok_or_else(|| {
                Error::InvalidPrior(format!("prior `{}` needs count statistics", kind.tag()))
            })
        };
        match kind {
            PriorKind::Uniform => Ok(PriorSpec::Uniform),
            PriorKind::Decade => Self::decade(need()?.decades()),
            PriorKind::Movie => Self::movie(need()?.movie_counts.clone()),
            PriorKind::Image => Self::image(need()?.year_counts.clone()),
            PriorKind::Combination => Self::combination(lambda, need()?.year_counts.clone()),
        }
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            PriorSpec::Uniform => PriorKind::Uniform,
            PriorSpec::Decade(_) => PriorKind::Decade,
            PriorSpec::Movie(_) => PriorKind::Movie,
            PriorSpec::Image(_) => PriorKind::Image,
            PriorSpec::Combination { .. } => PriorKind::Combination,
        }
    }
}

fn decade_of(year: i32) -> i32 {
    year.div_euclid(10) * 10
}

/// Linear weights over the support, zero outside `[birth, birth + 99]`.
fn window_weights(support: &YearSupport, birth_year: i32, weight: impl Fn(i32) -> f64) -> Vec<f64> {
    let last_alive = birth_year + DEFAULT_AGE_SPAN as i32 - 1;
    support
        .years()
        .map(|y| {
            if (birth_year..=last_alive).contains(&y) {
                weight(y)
            } else {
                0.0
            }
        })
        .collect()
}

fn normalized(mut w: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return None;
    }
    for v in &mut w {
        *v /= total;
    }
    Some(w)
}

fn count_of(counts: &BTreeMap<i32, u64>, key: i32) -> f64 {
    counts.get(&key).copied().unwrap_or(0) as f64
}

/// Prior `p(y | identity)` for an identity born in `birth_year`.
///
/// Every family is restricted to the alive window `[birth, birth + 99]`. A
/// count-based family with no counts inside the window falls back to the
/// uniform window. The result is floored at [`PRIOR_FLOOR`] on every year of
/// the support and renormalized.
pub fn individual_prior(
    spec: &PriorSpec,
    birth_year: i32,
    support: &YearSupport,
) -> Result<DiscreteDistribution> {
    let uniform = normalized(window_weights(support, birth_year, |_| 1.0))
        .ok_or(Error::EmptySupport { birth_year })?;
    let counted = |w: Vec<f64>| normalized(w).unwrap_or_else(|| uniform.clone());
    let raw = match spec {
        PriorSpec::Uniform => uniform.clone(),
        PriorSpec::Decade(counts) => counted(window_weights(support, birth_year, |y| {
            count_of(counts, decade_of(y)) / 10.0
        })),
        PriorSpec::Movie(counts) | PriorSpec::Image(counts) => {
            counted(window_weights(support, birth_year, |y| count_of(counts, y)))
        }
        PriorSpec::Combination {
            lambda,
            year_counts,
        } => {
            let image = counted(window_weights(support, birth_year, |y| {
                count_of(year_counts, y)
            }));
            image
                .iter()
                .zip(&uniform)
                .map(|(i, u)| lambda * i + (1.0 - lambda) * u)
                .collect()
        }
    };
    let floored: Vec<f64> = raw.into_iter().map(|p| p.max(PRIOR_FLOOR)).collect();
    DiscreteDistribution::from_weights(support.first_year, &floored)
}

/// Joint prior `p(y | i)`, proportional to the pointwise product of the
/// individual priors. An empty product (only OOD faces) is uniform.
pub fn joint_prior<'a>(
    support: &YearSupport,
    priors: impl IntoIterator<Item = &'a DiscreteDistribution>,
) -> Result<DiscreteDistribution> {
    let mut acc = vec![0.0; support.len()];
    for p in priors {
        if p.start() != support.first_year || p.len() != support.len() {
            return Err(Error::InvalidPrior(format!(
                "prior over {}..={} does not match the year support",
                p.start(),
                p.end()
            )));
        }
        for (a, l) in acc.iter_mut().zip(p.log_mass()) {
            *a += l;
        }
    }
    DiscreteDistribution::from_log_weights(support.first_year, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn support() -> YearSupport {
        YearSupport::default()
    }

    fn counts(pairs: &[(i32, u64)]) -> BTreeMap<i32, u64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn uniform_window() {
        let p = individual_prior(&PriorSpec::Uniform, 1950, &support()).unwrap();
        assert!(p.is_normalized(1e-9));
        for y in support().years() {
            let m = p.mass_at(y);
            if y >= 1950 {
                assert!((m - 1.0 / 81.0).abs() < 1e-10);
            } else {
                assert!(m > 0.0 && m < 1e-11);
            }
        }
    }

    #[test]
    fn decade_mass_split() {
        let spec = PriorSpec::decade(counts(&[(1970, 300), (1980, 100)])).unwrap();
        let p = individual_prior(&spec, 1930, &support()).unwrap();
        for y in 1970..1980 {
            assert!((p.mass_at(y) - 0.075).abs() < 1e-10);
        }
        for y in 1980..1990 {
            assert!((p.mass_at(y) - 0.025).abs() < 1e-10);
        }
        assert!(p.mass_at(1969) < 1e-11);
    }

    #[test]
    fn combination_endpoints() {
        let yc = counts(&[(1960, 5), (1975, 20), (1990, 3)]);
        let s = support();
        let u = individual_prior(&PriorSpec::Uniform, 1940, &s).unwrap();
        let i = individual_prior(&PriorSpec::image(yc.clone()).unwrap(), 1940, &s).unwrap();
        let c0 =
            individual_prior(&PriorSpec::combination(0.0, yc.clone()).unwrap(), 1940, &s).unwrap();
        let c1 = individual_prior(&PriorSpec::combination(1.0, yc).unwrap(), 1940, &s).unwrap();
        assert_eq!(c0, u);
        assert_eq!(c1, i);
    }

    #[test]
    fn empty_window_is_an_error() {
        let s = YearSupport::new(1900, 1950).unwrap();
        assert!(matches!(
            individual_prior(&PriorSpec::Uniform, 1960, &s),
            Err(Error::EmptySupport { birth_year: 1960 })
        ));
        assert!(individual_prior(&PriorSpec::Uniform, 1800, &s).is_err());
        assert!(individual_prior(&PriorSpec::Uniform, 1801, &s).is_ok());
    }

    #[test]
    fn counts_outside_window_fall_back_to_uniform() {
        let spec = PriorSpec::image(counts(&[(1900, 10)])).unwrap();
        let p = individual_prior(&spec, 1950, &support()).unwrap();
        let u = individual_prior(&PriorSpec::Uniform, 1950, &support()).unwrap();
        assert_eq!(p, u);
    }

    #[test]
    fn spec_validation() {
        assert!(PriorSpec::combination(1.5, counts(&[(1970, 1)])).is_err());
        assert!(PriorSpec::image(counts(&[(1970, 0)])).is_err());
        assert!(PriorSpec::decade(counts(&[(1975, 3)])).is_err());
        assert!(PriorSpec::from_stats(PriorKind::Image, 0.0, None).is_err());
    }

    #[test]
    fn stats_json() {
        let s = PriorStats::from_json(r#"{"decade_counts": {"1970": 300, "1980": 100}}"#).unwrap();
        assert_eq!(s.decade_counts, counts(&[(1970, 300), (1980, 100)]));
        let s = PriorStats::from_json(r#"{"year_counts": {"1974": 812, "1981": 3}}"#).unwrap();
        assert_eq!(s.decades(), counts(&[(1970, 812), (1980, 3)]));
        assert!(PriorStats::from_json(r#"{"bogus": {}}"#).is_err());
        assert!(PriorStats::from_json(r#"{"year_counts": {"1974": -1}}"#).is_err());
    }

    #[test]
    fn joint_examples() {
        let s = support();
        let spec = PriorSpec::image(counts(&[(1960, 5), (1975, 20), (1990, 3)])).unwrap();
        let p = individual_prior(&spec, 1940, &s).unwrap();
        let j = joint_prior(&s, [&p]).unwrap();
        for (a, b) in j.log_mass().iter().zip(p.log_mass()) {
            assert!((a - b).abs() < 1e-12);
        }
        // pointwise-squared oracle
        let sq: Vec<f64> = p.probs().iter().map(|x| x * x).collect();
        let z: f64 = sq.iter().sum();
        let j2 = joint_prior(&s, [&p, &p]).unwrap();
        for (a, b) in j2.probs().iter().zip(&sq) {
            assert!((a - b / z).abs() < 1e-12);
        }
        let j3 = joint_prior(&s, [&p, &s.uniform()]).unwrap();
        for (a, b) in j3.log_mass().iter().zip(p.log_mass()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(joint_prior(&s, []).unwrap(), s.uniform());
        let wrong = YearSupport::new(1900, 2000).unwrap().uniform();
        assert!(joint_prior(&s, [&wrong]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_spec() -> impl Strategy<Value = PriorSpec> {
            let yc = prop::collection::btree_map(1890i32..2031, 1u64..1000, 1..30);
            prop_oneof![
                Just(PriorSpec::Uniform),
                yc.clone().prop_map(PriorSpec::Image),
                yc.clone().prop_map(PriorSpec::Movie),
                yc.clone().prop_map(|c| {
                    let mut d = BTreeMap::new();
                    for (y, n) in c {
                        *d.entry(decade_of(y)).or_insert(0) += n;
                    }
                    PriorSpec::Decade(d)
                }),
                (0.0f64..=1.0, yc).prop_map(|(lambda, year_counts)| PriorSpec::Combination {
                    lambda,
                    year_counts
                }),
            ]
        }

        proptest! {
            #[test]
            fn priors_are_valid_and_positive(spec in arb_spec(), birth in 1800i32..2030) {
                let s = YearSupport::default();
                let p = individual_prior(&spec, birth, &s).unwrap();
                prop_assert!(p.is_normalized(1e-9));
                prop_assert!(p.probs().iter().all(|&m| m >= PRIOR_FLOOR / 2.0));
            }

            #[test]
            fn joint_commutes_and_associates(
                a in arb_spec(), b in arb_spec(), c in arb_spec(),
                ba in 1880i32..1960, bb in 1880i32..1960, bc in 1880i32..1960,
            ) {
                let s = YearSupport::default();
                let pa = individual_prior(&a, ba, &s).unwrap();
                let pb = individual_prior(&b, bb, &s).unwrap();
                let pc = individual_prior(&c, bc, &s).unwrap();
                let abc = joint_prior(&s, [&pa, &pb, &pc]).unwrap();
                let cba = joint_prior(&s, [&pc, &pb, &pa]).unwrap();
                let ab = joint_prior(&s, [&pa, &pb]).unwrap();
                let ab_c = joint_prior(&s, [&ab, &pc]).unwrap();
                for ((x, y), z) in abc.log_mass().iter().zip(cba.log_mass()).zip(ab_c.log_mass()) {
                    prop_assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
                    prop_assert!((x - z).abs() < 1e-12 * x.abs().max(1.0));
                }
            }

            #[test]
            fn combination_moves_toward_image(
                yc in prop::collection::btree_map(1900i32..2000, 1u64..1000, 1..20),
                birth in 1880i32..1950,
            ) {
                let s = YearSupport::default();
                let image = individual_prior(&PriorSpec::Image(yc.clone()), birth, &s).unwrap().probs();
                let mut last = f64::INFINITY;
                for step in 0..=10 {
                    let lambda = step as f64 / 10.0;
                    let spec = PriorSpec::Combination { lambda, year_counts: yc.clone() };
                    let p = individual_prior(&spec, birth, &s).unwrap().probs();
                    let tv: f64 = 0.5 * p.iter().zip(&image).map(|(a, b)| (a - b).abs()).sum::<f64>();
                    prop_assert!(tv <= last + 1e-12);
                    last = tv;
                }
            }
        }
    }
}
