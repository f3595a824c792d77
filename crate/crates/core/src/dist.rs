//! Numeric building blocks: unit-norm embeddings, year supports and discrete
//! distributions over contiguous integer supports kept in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the Euclidean norm of a stored embedding.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Number of integer ages covered by age posteriors (0..=99).
pub const DEFAULT_AGE_SPAN: usize = 100;

/// Numerically stable `log(sum(exp(xs)))`. Returns `-inf` for an empty slice
/// or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// A point on the unit sphere in embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalizes `values` to unit length.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding);
        }
        let norm = l2_norm(&values);
        if norm < 1e-300 {
            return Err(Error::ZeroEmbedding);
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Accepts values that are already unit norm within [`UNIT_NORM_TOL`]
    /// without touching them, so stored single-precision rows survive a round
    /// trip bit for bit. Anything else is normalized.
    pub fn from_stored(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding);
        }
        if (l2_norm(&values) - 1.0).abs() <= UNIT_NORM_TOL {
            Ok(Self { values })
        } else {
            Self::new(values)
        }
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::from_stored(values.iter().map(|&v| f64::from(v)).collect())
    }

    /// Rounds every entry to the nearest `f32`, the precision of the on-disk
    /// matrix format.
    pub fn quantized(&self) -> Self {
        let values: Vec<f64> = self.values.iter().map(|&v| f64::from(v as f32)).collect();
        Self::from_stored(values).expect("quantizing a unit vector stays within tolerance")
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Inclusive range of calendar years every year distribution lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSupport {
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for YearSupport {
    fn default() -> Self {
        Self {
            first_year: 1890,
            last_year: 2030,
        }
    }
}

impl YearSupport {
    pub fn new(first_year: i32, last_year: i32) -> Result<Self> {
        if first_year > last_year {
            return Err(Error::InvalidParameter(format!(
                "year support {first_year}..={last_year} is empty"
            )));
        }
        Ok(Self {
            first_year,
            last_year,
        })
    }

    pub fn len(&self) -> usize {
        (self.last_year - self.first_year + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.first_year..=self.last_year).contains(&year)
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        self.contains(year)
            .then(|| (year - self.first_year) as usize)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first_year..=self.last_year
    }

    pub fn uniform(&self) -> DiscreteDistribution {
        DiscreteDistribution::uniform(self.first_year, self.len())
    }
}

/// Normalized distribution over `start, start + 1, ..`, stored as log mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    start: i32,
    log_mass: Vec<f64>,
}

impl DiscreteDistribution {
    /// Normalizes log-weights over a support beginning at `start`.
    pub fn from_log_weights(start: i32, log_weights: Vec<f64>) -> Result<Self> {
        let log_mass = normalize_log(log_weights)?;
        Ok(Self { start, log_mass })
    }

    /// Keeps log masses verbatim when they already sum to one within 1e-9,
    /// otherwise normalizes them.
    pub fn from_log_mass(start: i32, log_mass: Vec<f64>) -> Result<Self> {
        let valid = !log_mass.iter().any(|l| l.is_nan() || *l == f64::INFINITY);
        let total: f64 = log_mass.iter().map(|l| l.exp()).sum();
        if valid && (total - 1.0).abs() <= 1e-9 {
            Ok(Self { start, log_mass })
        } else {
            Self::from_log_weights(start, log_mass)
        }
    }

    /// Normalizes nonnegative linear weights.
    pub fn from_weights(start: i32, weights: &[f64]) -> Result<Self> {
        let logs = weights
            .iter()
            .map(|&w| if w < 0.0 { f64::NAN } else { w.ln() })
            .collect();
        Self::from_log_weights(start, logs)
    }

    pub fn uniform(start: i32, len: usize) -> Self {
        assert!(len > 0, "uniform distribution needs a nonempty support");
        Self {
            start,
            log_mass: vec![-(len as f64).ln(); len],
        }
    }

    pub fn point_mass(start: i32, len: usize, at: i32) -> Result<Self> {
        let mut log_mass = vec![f64::NEG_INFINITY; len];
        let idx = usize::try_from(at - start)
            .ok()
            .filter(|&i| i < len)
            .ok_or(Error::AllZeroMass)?;
        log_mass[idx] = 0.0;
        Ok(Self { start, log_mass })
    }

    pub fn start(&self) -> i32 {
        self.start
    }

    /// Last supported value (inclusive).
    pub fn end(&self) -> i32 {
        self.start + self.log_mass.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.log_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_mass.is_empty()
    }

    pub fn log_mass(&self) -> &[f64] {
        &self.log_mass
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_mass.iter().map(|l| l.exp()).collect()
    }

    /// Log mass at `value`; `-inf` off the support.
    pub fn log_mass_at(&self, value: i32) -> f64 {
        usize::try_from(value - self.start)
            .ok()
            .and_then(|i| self.log_mass.get(i).copied())
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn mass_at(&self, value: i32) -> f64 {
        self.log_mass_at(value).exp()
    }

    pub fn total_mass(&self) -> f64 {
        self.log_mass.iter().map(|l| l.exp()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.log_mass
            .iter()
            .enumerate()
            .map(|(i, l)| (self.start as f64 + i as f64) * l.exp())
            .sum()
    }

    /// Median as the smallest value whose cumulative mass reaches one half.
    pub fn median(&self) -> i32 {
        // Slack absorbs rounding in exp/accumulate so exact halves resolve
        // to the lower value.
        const SLACK: f64 = 1e-12;
        let mut cdf = 0.0;
        for (i, l) in self.log_mass.iter().enumerate() {
            cdf += l.exp();
            if cdf >= 0.5 - SLACK {
                return self.start + i as i32;
            }
        }
        self.end()
    }

    /// Sum-to-one and no-NaN check used by the normalization suite.
    pub fn is_normalized(&self, tol: f64) -> bool {
        !self
            .log_mass
            .iter()
            .any(|l| l.is_nan() || *l == f64::INFINITY)
            && (self.total_mass() - 1.0).abs() <= tol
    }

    /// Restricts to `support`, renormalizing. Returns `None` when no mass
    /// remains on the support.
    pub fn restrict_to(&self, support: &YearSupport) -> Option<Self> {
        let logs: Vec<f64> = support.years().map(|y| self.log_mass_at(y)).collect();
        Self::from_log_weights(support.first_year, logs).ok()
    }
}

/// Normalizes log-weights so their exponentials sum to one.
pub fn normalize_log(mut log_weights: Vec<f64>) -> Result<Vec<f64>> {
    if let Some((index, &value)) = log_weights
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v == f64::INFINITY)
    {
        return Err(Error::InvalidLogWeight { index, value });
    }
    let log_z = log_sum_exp(&log_weights);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::AllZeroMass);
    }
    for w in &mut log_weights {
        *w -= log_z;
    }
    Ok(log_weights)
}

/// Result of moving an age posterior onto calendar years.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedPosterior {
    pub distribution: DiscreteDistribution,
    /// False when the whole age mass fell outside the year support and the
    /// result was replaced by the uniform distribution.
    pub informative: bool,
}

/// Maps a distribution over ages to one over years given a birth year: the
/// mass at year `y` is the mass at age `y - birth_year`.
pub fn shift_distribution(
    ages: &DiscreteDistribution,
    birth_year: i32,
    support: &YearSupport,
) -> ShiftedPosterior {
    let shifted = DiscreteDistribution {
        start: ages.start + birth_year,
        log_mass: ages.log_mass.clone(),
    };
    match shifted.restrict_to(support) {
        Some(distribution) => ShiftedPosterior {
            distribution,
            informative: true,
        },
        None => ShiftedPosterior {
            distribution: support.uniform(),
            informative: false,
        },
    }
}

/// Median year of a year posterior.
pub fn median_year(d: &DiscreteDistribution) -> i32 {
    d.median()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_probs(d: &DiscreteDistribution, expected: &[f64], tol: f64) {
        let p = d.probs();
        assert_eq!(p.len(), expected.len());
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() <= tol, "{p:?} vs {expected:?}");
        }
    }

    #[test]
    fn normalize_examples() {
        let d = DiscreteDistribution::from_log_weights(0, vec![0.0, 0.0]).unwrap();
        assert_probs(&d, &[0.5, 0.5], 1e-15);
        let d = DiscreteDistribution::from_log_weights(0, vec![3f64.ln(), 0.0]).unwrap();
        assert_probs(&d, &[0.75, 0.25], 1e-15);
        // 40-digit softmax of (1000, 1001)
        let d = DiscreteDistribution::from_log_weights(0, vec![1000.0, 1001.0]).unwrap();
        assert_probs(
            &d,
            &[0.268_941_421_369_995_12, 0.731_058_578_630_004_88],
            1e-12,
        );
    }

    #[test]
    fn normalize_rejects_all_zero_and_nan() {
        assert!(matches!(
            normalize_log(vec![f64::NEG_INFINITY; 3]),
            Err(Error::AllZeroMass)
        ));
        assert!(matches!(
            normalize_log(vec![0.0, f64::NAN]),
            Err(Error::InvalidLogWeight { index: 1, .. })
        ));
        assert!(matches!(normalize_log(vec![]), Err(Error::AllZeroMass)));
    }

    #[test]
    fn embedding_is_normalized() {
        let e = Embedding::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.as_slice(), &[0.6, 0.8]);
        assert!(matches!(
            Embedding::new(vec![0.0, 0.0]),
            Err(Error::ZeroEmbedding)
        ));
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        let q = Embedding::new(vec![1.0, 2.0, 3.0]).unwrap().quantized();
        assert!((q.norm() - 1.0).abs() < UNIT_NORM_TOL);
        assert!(q.as_slice().iter().all(|&v| f64::from(v as f32) == v));
    }

    #[test]
    fn shift_point_mass() {
        let support = YearSupport::default();
        let ages = DiscreteDistribution::point_mass(0, 100, 24).unwrap();
        let s = shift_distribution(&ages, 1950, &support);
        assert!(s.informative);
        assert_eq!(s.distribution.start(), 1890);
        assert_eq!(s.distribution.mass_at(1974), 1.0);
        assert_eq!(median_year(&s.distribution), 1974);
    }

    #[test]
    fn shift_uniform_truncates() {
        let support = YearSupport::default();
        let ages = DiscreteDistribution::uniform(0, 100);
        let s = shift_distribution(&ages, 1950, &support);
        assert!(s.informative);
        for y in support.years() {
            let expected = if (1950..=2030).contains(&y) {
                1.0 / 81.0
            } else {
                0.0
            };
            assert!((s.distribution.mass_at(y) - expected).abs() < 1e-15, "{y}");
        }
    }

    #[test]
    fn shift_fully_outside_is_uniform_and_flagged() {
        let support = YearSupport::default();
        let ages = DiscreteDistribution::from_weights(
            30,
            &[0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5],
        )
        .unwrap();
        // birth 2025: ages 30 and 40 land on 2055 and 2065, both past 2030
        let s = shift_distribution(&ages, 2025, &support);
        assert!(!s.informative);
        assert_eq!(s.distribution, support.uniform());
    }

    #[test]
    fn median_examples() {
        assert_eq!(
            DiscreteDistribution::point_mass(1900, 200, 1974)
                .unwrap()
                .median(),
            1974
        );
        assert_eq!(DiscreteDistribution::uniform(2000, 2).median(), 2000);
        let mut w = vec![0.0; 11];
        w[0] = 0.2;
        w[5] = 0.3;
        w[10] = 0.5;
        let d = DiscreteDistribution::from_weights(1990, &w).unwrap();
        assert_eq!(d.median(), 1995);
    }

    #[test]
    fn log_add_exp_matches_log_sum_exp() {
        let (a, b) = (-3.2, 1.7);
        assert!((log_add_exp(a, b) - log_sum_exp(&[a, b])).abs() < 1e-15);
        assert_eq!(
            log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_shift_invariant(
                xs in prop::collection::vec(-50.0f64..50.0, 1..40),
                c in -500.0f64..500.0,
            ) {
                let a = normalize_log(xs.clone()).unwrap();
                let b = normalize_log(xs.iter().map(|x| x + c).collect()).unwrap();
                let total: f64 = a.iter().map(|l| l.exp()).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x.exp() - y.exp()).abs() < 1e-12);
                }
            }

            #[test]
            fn shift_then_unshift_is_identity(
                ws in prop::collection::vec(0.0f64..1.0, 100),
                birth in 1890i32..1931,
            ) {
                prop_assume!(ws.iter().any(|&w| w > 0.0));
                let support = YearSupport::default();
                let ages = DiscreteDistribution::from_weights(0, &ws).unwrap();
                let years = shift_distribution(&ages, birth, &support);
                prop_assert!(years.informative);
                let age_support = YearSupport::new(0, 99).unwrap();
                let back = shift_distribution(&years.distribution, -birth, &age_support);
                for a in 0..100 {
                    prop_assert!((back.distribution.mass_at(a) - ages.mass_at(a)).abs() < 1e-12);
                }
            }
        }
    }
}
