//! Weighted reliability scoring and the decision table.
//!
//! Rows are ordered lexicographically by (fully verified, weighted score,
//! provider id, response id), so a response passing all three criteria sits
//! above every partially verified one whatever the weights are.

use std::cmp::Ordering;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Tolerance on the sum of the weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("session has no recorded verifications")]
    NoVerifications,
    #[error("response `{0}` is not in the decision table")]
    NotInTable(String),
}

impl DecisionError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidWeights(_) => "InvalidWeights",
            Self::NoVerifications => "NoVerifications",
            Self::NotInTable(_) => "NotInTable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Source,
    DoubleCheck,
    Compare,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Source, Criterion::DoubleCheck, Criterion::Compare];

    pub fn label(self) -> &'static str {
        match self {
            Self::Source => "source",
            Self::DoubleCheck => "double_check",
            Self::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult<T> {
    pub criterion: Criterion,
    pub coverage: T,
    pub passed: bool,
    pub evaluated: bool,
}

impl<T: Scalar> CriterionResult<T> {
    pub fn evaluated(criterion: Criterion, coverage: T, passed: bool) -> Self {
        Self {
            criterion,
            coverage,
            passed,
            evaluated: true,
        }
    }

    pub fn not_evaluated(criterion: Criterion) -> Self {
        Self {
            criterion,
            coverage: T::zero(),
            passed: false,
            evaluated: false,
        }
    }

    /// Coverage as used for scoring.
    pub fn effective_coverage(&self) -> T {
        if self.evaluated {
            self.coverage
        } else {
            T::zero()
        }
    }

    pub fn effective_passed(&self) -> bool {
        self.evaluated && self.passed
    }
}

/// Positive criterion weights summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights<T>", into = "RawWeights<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Weights<T: Scalar> {
    source: T,
    double_check: T,
    compare: T,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawWeights<T> {
    source: T,
    double_check: T,
    compare: T,
}

impl<T: Scalar> TryFrom<RawWeights<T>> for Weights<T> {
    type Error = DecisionError;

    fn try_from(raw: RawWeights<T>) -> Result<Self, Self::Error> {
        Self::new(raw.source, raw.double_check, raw.compare)
    }
}

impl<T: Scalar> From<Weights<T>> for RawWeights<T> {
    fn from(w: Weights<T>) -> Self {
        Self {
            source: w.source,
            double_check: w.double_check,
            compare: w.compare,
        }
    }
}

impl<T: Scalar> Default for Weights<T> {
    /// 0.5 / 0.3 / 0.2 for source / double check / compare.
    fn default() -> Self {
        Self {
            source: T::from_f64(0.5).expect("representable"),
            double_check: T::from_f64(0.3).expect("representable"),
            compare: T::from_f64(0.2).expect("representable"),
        }
    }
}

impl<T: Scalar> Weights<T> {
    pub fn new(source: T, double_check: T, compare: T) -> Result<Self, DecisionError> {
        let w = Self {
            source,
            double_check,
            compare,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), DecisionError> {
        let all = [self.source, self.double_check, self.compare];
        if all.iter().any(|w| !w.is_finite() || *w <= T::zero()) {
            return Err(DecisionError::InvalidWeights(format!(
                "weights must be positive, got {} / {} / {}",
                self.source, self.double_check, self.compare
            )));
        }
        let sum = self.source + self.double_check + self.compare;
        if (sum - T::one()).abs().to_f64_lossy() > WEIGHT_SUM_TOLERANCE {
            return Err(DecisionError::InvalidWeights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn get(&self, criterion: Criterion) -> T {
        match criterion {
            Criterion::Source => self.source,
            Criterion::DoubleCheck => self.double_check,
            Criterion::Compare => self.compare,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution<T> {
    pub criterion: Criterion,
    pub weight: T,
    pub coverage: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityScore<T> {
    pub value: T,
    pub breakdown: Vec<Contribution<T>>,
    pub fully_verified: bool,
}

/// Weighted sum of per-criterion coverages. A criterion missing from
/// `results` (or not evaluated) contributes zero; when a criterion appears
/// more than once the first entry is used.
pub fn score_response<T: Scalar>(
    results: &[CriterionResult<T>],
    weights: &Weights<T>,
) -> Result<ReliabilityScore<T>, DecisionError> {
    weights.validate()?;
    let mut value = T::zero();
    let mut breakdown = Vec::with_capacity(3);
    let mut fully_verified = true;
    for criterion in Criterion::ALL {
        let result = results.iter().find(|r| r.criterion == criterion);
        let coverage = result.map_or(T::zero(), |r| r.effective_coverage());
        let weight = weights.get(criterion);
        value = value + weight * coverage;
        fully_verified &= result.is_some_and(|r| r.effective_passed());
        breakdown.push(Contribution {
            criterion,
            weight,
            coverage,
        });
    }
    Ok(ReliabilityScore {
        value: value.max(T::zero()).min(T::one()),
        breakdown,
        fully_verified,
    })
}

/// A response eligible for the table.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub response_id: String,
    pub provider_id: String,
    pub results: Vec<CriterionResult<T>>,
}

impl<T: Scalar> Candidate<T> {
    pub fn any_evaluated(&self) -> bool {
        self.results.iter().any(|r| r.evaluated)
    }

    fn result(&self, criterion: Criterion) -> CriterionResult<T> {
        self.results
            .iter()
            .find(|r| r.criterion == criterion)
            .copied()
            .unwrap_or_else(|| CriterionResult::not_evaluated(criterion))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow<T> {
    pub rank: usize,
    pub response_id: String,
    pub provider_id: String,
    pub score: ReliabilityScore<T>,
    /// One entry per criterion, in source / double check / compare order.
    pub criteria: Vec<CriterionResult<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable<T> {
    pub session_id: String,
    pub rows: Vec<DecisionRow<T>>,
    pub generated_at: DateTime<Utc>,
}

fn row_order<T: Scalar>(a: &DecisionRow<T>, b: &DecisionRow<T>) -> Ordering {
    b.score
        .fully_verified
        .cmp(&a.score.fully_verified)
        .then_with(|| b.score.value.partial_cmp(&a.score.value).expect("scores are finite"))
        .then_with(|| a.provider_id.cmp(&b.provider_id))
        .then_with(|| a.response_id.cmp(&b.response_id))
}

/// Score and order candidates; candidates with nothing evaluated are dropped.
pub fn rank_candidates<T: Scalar>(
    candidates: &[Candidate<T>],
    weights: &Weights<T>,
) -> Result<Vec<DecisionRow<T>>, DecisionError> {
    weights.validate()?;
    let mut rows = candidates
        .iter()
        .filter(|c| c.any_evaluated())
        .map(|c| {
            let criteria: Vec<_> = Criterion::ALL.iter().map(|&k| c.result(k)).collect();
            Ok(DecisionRow {
                rank: 0,
                response_id: c.response_id.clone(),
                provider_id: c.provider_id.clone(),
                score: score_response(&criteria, weights)?,
                criteria,
            })
        })
        .collect::<Result<Vec<_>, DecisionError>>()?;
    rows.sort_by(row_order);
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    Ok(rows)
}

impl<T: Scalar> DecisionTable<T> {
    pub fn row(&self, response_id: &str) -> Option<&DecisionRow<T>> {
        self.rows.iter().find(|r| r.response_id == response_id)
    }

    /// Plain-text rendering for reports.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:<16} {:<38} {:>6}  {:<4} {:>9} {:>12} {:>9}",
            "rank", "provider", "response", "score", "full", "source", "double_check", "compare"
        );
        for row in &self.rows {
            let cell = |r: &CriterionResult<T>| {
                if r.evaluated {
                    format!("{:.2}{}", r.coverage.to_f64_lossy(), if r.passed { "✓" } else { "✗" })
                } else {
                    "-".to_owned()
                }
            };
            let _ = writeln!(
                out,
                "{:>4}  {:<16} {:<38} {:>6.3}  {:<4} {:>9} {:>12} {:>9}",
                row.rank,
                row.provider_id,
                row.response_id,
                row.score.value.to_f64_lossy(),
                if row.score.fully_verified { "yes" } else { "no" },
                cell(&row.criteria[0]),
                cell(&row.criteria[1]),
                cell(&row.criteria[2]),
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub id: String,
    pub session_id: String,
    pub chosen_response_id: String,
    pub rationale: String,
    pub decided_at: DateTime<Utc>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full(cov: [f64; 3], passed: [bool; 3]) -> Vec<CriterionResult<f64>> {
        Criterion::ALL
            .iter()
            .zip(cov.iter().zip(passed))
            .map(|(&c, (&v, p))| CriterionResult::evaluated(c, v, p))
            .collect()
    }

    fn w(a: f64, b: f64, c: f64) -> Weights<f64> {
        Weights::new(a, b, c).unwrap()
    }

    #[test]
    fn full_verification_scores_one() {
        let s = score_response(&full([1.0; 3], [true; 3]), &w(0.5, 0.3, 0.2)).unwrap();
        assert_eq!(s.value, 1.0);
        assert!(s.fully_verified);
    }

    #[test]
    fn weighted_sum() {
        let s = score_response(&full([1.0, 0.0, 0.0], [true, false, false]), &w(0.5, 0.3, 0.2)).unwrap();
        assert_eq!(s.value, 0.5);
        assert!(!s.fully_verified);
        assert_eq!(s.breakdown.len(), 3);
        assert_eq!(s.breakdown[1].weight, 0.3);
    }

    #[test]
    fn missing_criteria_contribute_zero() {
        let only = [CriterionResult::evaluated(Criterion::Compare, 1.0, true)];
        let s = score_response(&only, &Weights::default()).unwrap();
        assert_eq!(s.value, 0.2);
        let unevaluated = [CriterionResult {
            criterion: Criterion::Source,
            coverage: 0.9,
            passed: true,
            evaluated: false,
        }];
        let s = score_response(&unevaluated, &Weights::default()).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(!s.fully_verified);
    }

    #[test]
    fn invalid_weights() {
        assert!(matches!(
            Weights::new(0.5, 0.5, 0.5),
            Err(DecisionError::InvalidWeights(_))
        ));
        assert!(matches!(
            Weights::new(1.0, 0.0, 0.0),
            Err(DecisionError::InvalidWeights(_))
        ));
        assert!(matches!(
            Weights::new(1.2, -0.1, -0.1),
            Err(DecisionError::InvalidWeights(_))
        ));
        assert!(Weights::new(0.5 + 5e-10, 0.3, 0.2).is_ok());
        assert!(serde_json::from_str::<Weights<f64>>(r#"{"source":0.5,"double_check":0.5,"compare":0.5}"#).is_err());
        let ok: Weights<f64> = serde_json::from_str(r#"{"source":0.6,"double_check":0.2,"compare":0.2}"#).unwrap();
        assert_eq!(ok.get(Criterion::Source), 0.6);
    }

    #[test]
    fn works_in_f32() {
        let s = score_response(
            &[CriterionResult::evaluated(Criterion::Source, 1.0f32, true)],
            &Weights::<f32>::default(),
        )
        .unwrap();
        assert_eq!(s.value, 0.5f32);
    }

    fn cand(resp: &str, prov: &str, results: Vec<CriterionResult<f64>>) -> Candidate<f64> {
        Candidate {
            response_id: resp.into(),
            provider_id: prov.into(),
            results,
        }
    }

    #[test]
    fn all_three_outranks_two() {
        let a = cand("a", "p", full([0.8, 0.8, 0.5], [true; 3]));
        let b = cand("b", "p", full([1.0, 1.0, 0.4], [true, true, false]));
        let rows = rank_candidates(&[b, a], &Weights::default()).unwrap();
        assert_eq!(rows[0].response_id, "a");
        assert!(rows[1].score.value > rows[0].score.value);
        assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn ties_break_on_provider_then_response() {
        let r = full([0.5, 0.5, 0.5], [false; 3]);
        let rows = rank_candidates(
            &[
                cand("r2", "zeta", r.clone()),
                cand("r9", "alpha", r.clone()),
                cand("r1", "alpha", r),
            ],
            &Weights::default(),
        )
        .unwrap();
        let order: Vec<_> = rows.iter().map(|r| r.response_id.as_str()).collect();
        assert_eq!(order, vec!["r1", "r9", "r2"]);
    }

    #[test]
    fn unevaluated_candidates_are_dropped() {
        let rows = rank_candidates(
            &[
                cand("none", "p", vec![]),
                cand("one", "p", full([0.1, 0.0, 0.0], [false; 3])),
            ],
            &Weights::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].response_id, "one");
    }

    #[test]
    fn text_rendering_lists_rows() {
        let table = DecisionTable {
            session_id: "s".into(),
            rows: rank_candidates(&[cand("r1", "gpt", full([1.0; 3], [true; 3]))], &Weights::default()).unwrap(),
            generated_at: Utc::now(),
        };
        let text = table.to_text();
        assert!(text.lines().count() == 2);
        assert!(text.contains("gpt"));
        assert!(text.contains("1.000"));
    }

    fn coverage() -> impl Strategy<Value = f64> {
        (0u32..=10).prop_map(|k| f64::from(k) / 10.0)
    }

    proptest! {
        #[test]
        fn superset_dominance(base in prop::array::uniform3(coverage()),
                              bump in prop::array::uniform3(0u32..=3),
                              ws in prop::array::uniform3(1u32..100)) {
            let total: u32 = ws.iter().sum();
            let weights = Weights::new(
                f64::from(ws[0]) / f64::from(total),
                f64::from(ws[1]) / f64::from(total),
                1.0 - f64::from(ws[0]) / f64::from(total) - f64::from(ws[1]) / f64::from(total),
            );
            prop_assume!(weights.is_ok());
            let weights = weights.unwrap();
            let higher: [f64; 3] = std::array::from_fn(|i| (base[i] + f64::from(bump[i]) / 10.0).min(1.0));
            let lo = score_response(&full(base, [false; 3]), &weights).unwrap();
            let hi = score_response(&full(higher, [false; 3]), &weights).unwrap();
            prop_assert!(hi.value >= lo.value);
            if higher != base {
                prop_assert!(hi.value > lo.value);
            }
        }
    }
}
