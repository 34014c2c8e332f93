//! The enterprise AI trust scorecard: six rated statements per rater and
//! tool, scored +1 / 0 / −1. Five items (A–E) are aggregated; overall
//! satisfaction is kept but reported on its own.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScorecardError {
    #[error("entry for rater `{rater_id}` is missing ratings for: {missing}")]
    IncompleteRatings { rater_id: String, missing: String },
    #[error("rater `{rater_id}` already rated tool `{tool_id}`")]
    DuplicateEntry { rater_id: String, tool_id: String },
    #[error("no scorecard entries for tool `{0}`")]
    NoEntries(String),
    #[error("malformed scorecard rows: {0}")]
    InvalidCsv(String),
}

impl ScorecardError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::IncompleteRatings { .. } => "IncompleteRatings",
            Self::DuplicateEntry { .. } => "DuplicateEntry",
            Self::NoEntries(_) => "NoEntries",
            Self::InvalidCsv(_) => "InvalidCsv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustItem {
    Efficiency,
    UsageUnderstanding,
    Control,
    Confidence,
    Trust,
    Satisfaction,
}

impl TrustItem {
    pub const ALL: [TrustItem; 6] = [
        TrustItem::Efficiency,
        TrustItem::UsageUnderstanding,
        TrustItem::Control,
        TrustItem::Confidence,
        TrustItem::Trust,
        TrustItem::Satisfaction,
    ];

    /// Items A–E, the ones that enter the numeric score.
    pub const SCORED: [TrustItem; 5] = [
        TrustItem::Efficiency,
        TrustItem::UsageUnderstanding,
        TrustItem::Control,
        TrustItem::Confidence,
        TrustItem::Trust,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::Efficiency => "efficiency",
            Self::UsageUnderstanding => "usage_understanding",
            Self::Control => "control",
            Self::Confidence => "confidence",
            Self::Trust => "trust",
            Self::Satisfaction => "satisfaction",
        }
    }

    pub fn statement(self) -> &'static str {
        match self {
            Self::Efficiency => "[The AI feature] will help me do my job more efficiently and effectively.",
            Self::UsageUnderstanding => "I understand how and when to use [the AI feature].",
            Self::Control => "I have control using [the AI feature].",
            Self::Confidence => "I am confident in the results made by [the AI feature].",
            Self::Trust => "I trust the results made by [the AI feature].",
            Self::Satisfaction => "Overall, how satisfied are you with using [the AI feature]?",
        }
    }

    pub fn is_scored(self) -> bool {
        self != Self::Satisfaction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Good,
    Okay,
    NeedsImprovement,
}

impl Rating {
    pub fn points(self) -> i64 {
        match self {
            Self::Good => 1,
            Self::Okay => 0,
            Self::NeedsImprovement => -1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Good => "good",
            Self::Okay => "okay",
            Self::NeedsImprovement => "needs_improvement",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "good" => Some(Self::Good),
            "okay" => Some(Self::Okay),
            "needs_improvement" => Some(Self::NeedsImprovement),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorecardEntry {
    pub rater_id: String,
    pub tool_id: String,
    pub ratings: BTreeMap<TrustItem, Rating>,
    #[serde(default = "Utc::now")]
    pub recorded_at: DateTime<Utc>,
}

impl ScorecardEntry {
    pub fn new(rater_id: impl Into<String>, tool_id: impl Into<String>, ratings: [Rating; 6]) -> Self {
        Self {
            rater_id: rater_id.into(),
            tool_id: tool_id.into(),
            ratings: TrustItem::ALL.into_iter().zip(ratings).collect(),
            recorded_at: Utc::now(),
        }
    }

    pub fn record_id(&self) -> String {
        format!("{}:{}", self.tool_id, self.rater_id)
    }

    pub fn validate(&self) -> Result<(), ScorecardError> {
        let missing: Vec<&str> = TrustItem::ALL
            .into_iter()
            .filter(|i| !self.ratings.contains_key(i))
            .map(TrustItem::id)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ScorecardError::IncompleteRatings {
                rater_id: self.rater_id.clone(),
                missing: missing.join(", "),
            })
        }
    }

    /// Sum of the five scored items, in [−5, 5].
    pub fn scored_sum(&self) -> i64 {
        TrustItem::SCORED.iter().map(|i| self.ratings[i].points()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustReport<T> {
    pub tool_id: String,
    pub n_raters: usize,
    pub per_item_mean: BTreeMap<TrustItem, T>,
    pub overall_mean_of_sums: T,
    pub satisfaction_mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustDelta<T> {
    pub tool_a: String,
    pub tool_b: String,
    /// `b − a` per scored item.
    pub per_item_delta: BTreeMap<TrustItem, T>,
    pub overall_delta: T,
    pub satisfaction_delta: T,
}

/// Append-only set of entries keyed by (tool, rater).
#[derive(Debug, Clone, Default)]
pub struct Scorecard {
    entries: IndexMap<(String, String), ScorecardEntry>,
}

impl Scorecard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ScorecardEntry> {
        self.entries.values()
    }

    pub fn tools(&self) -> Vec<String> {
        let mut tools: Vec<String> = self.entries.keys().map(|(t, _)| t.clone()).collect();
        tools.dedup();
        tools.sort();
        tools.dedup();
        tools
    }

    pub fn record_entry(&mut self, entry: ScorecardEntry) -> Result<&ScorecardEntry, ScorecardError> {
        entry.validate()?;
        let key = (entry.tool_id.clone(), entry.rater_id.clone());
        if self.entries.contains_key(&key) {
            return Err(ScorecardError::DuplicateEntry {
                rater_id: entry.rater_id,
                tool_id: entry.tool_id,
            });
        }
        let (idx, _) = self.entries.insert_full(key, entry);
        Ok(&self.entries[idx])
    }

    pub fn aggregate<T: Scalar>(&self, tool_id: &str) -> Result<TrustReport<T>, ScorecardError> {
        let rows: Vec<&ScorecardEntry> = self.entries.values().filter(|e| e.tool_id == tool_id).collect();
        if rows.is_empty() {
            return Err(ScorecardError::NoEntries(tool_id.to_owned()));
        }
        let n = T::from_count(rows.len());
        let item_total = |item: TrustItem| -> i64 { rows.iter().map(|e| e.ratings[&item].points()).sum() };
        let per_item_mean = TrustItem::SCORED
            .into_iter()
            .map(|item| (item, T::from_count(item_total(item)) / n))
            .collect();
        let sums: i64 = rows.iter().map(|e| e.scored_sum()).sum();
        Ok(TrustReport {
            tool_id: tool_id.to_owned(),
            n_raters: rows.len(),
            per_item_mean,
            overall_mean_of_sums: T::from_count(sums) / n,
            satisfaction_mean: T::from_count(item_total(TrustItem::Satisfaction)) / n,
        })
    }

    pub fn compare_tools<T: Scalar>(&self, tool_a: &str, tool_b: &str) -> Result<TrustDelta<T>, ScorecardError> {
        let a = self.aggregate::<T>(tool_a)?;
        let b = self.aggregate::<T>(tool_b)?;
        Ok(TrustDelta {
            tool_a: tool_a.to_owned(),
            tool_b: tool_b.to_owned(),
            per_item_delta: TrustItem::SCORED
                .into_iter()
                .map(|i| (i, b.per_item_mean[&i] - a.per_item_mean[&i]))
                .collect(),
            overall_delta: b.overall_mean_of_sums - a.overall_mean_of_sums,
            satisfaction_delta: b.satisfaction_mean - a.satisfaction_mean,
        })
    }
}

const CSV_HEADER: [&str; 8] = [
    "rater_id",
    "tool_id",
    "efficiency",
    "usage_understanding",
    "control",
    "confidence",
    "trust",
    "satisfaction",
];

/// Read rows of `rater_id,tool_id,<six ratings>` with a header line. Blank
/// rating cells produce entries that fail validation on record.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<ScorecardEntry>, ScorecardError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ScorecardError::InvalidCsv(e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ScorecardError::InvalidCsv(format!("missing column `{name}`")))
    };
    let rater_col = column("rater_id")?;
    let tool_col = column("tool_id")?;
    let item_cols = TrustItem::ALL
        .into_iter()
        .map(|i| column(i.id()).map(|c| (i, c)))
        .collect::<Result<Vec<_>, _>>()?;

    let now = Utc::now();
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| ScorecardError::InvalidCsv(e.to_string()))?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let mut ratings = BTreeMap::new();
        for &(item, col) in &item_cols {
            let raw = cell(col);
            if raw.is_empty() {
                continue;
            }
            let rating = Rating::parse(raw)
                .ok_or_else(|| ScorecardError::InvalidCsv(format!("row {}: bad rating `{raw}`", line + 2)))?;
            ratings.insert(item, rating);
        }
        out.push(ScorecardEntry {
            rater_id: cell(rater_col).to_owned(),
            tool_id: cell(tool_col).to_owned(),
            ratings,
            recorded_at: now,
        });
    }
    Ok(out)
}

pub fn write_csv<'a, W: Write>(
    writer: W,
    entries: impl IntoIterator<Item = &'a ScorecardEntry>,
) -> Result<(), ScorecardError> {
    let err = |e: csv::Error| ScorecardError::InvalidCsv(e.to_string());
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER).map_err(err)?;
    for e in entries {
        let mut row = vec![e.rater_id.as_str(), e.tool_id.as_str()];
        row.extend(
            TrustItem::ALL
                .iter()
                .map(|i| e.ratings.get(i).map_or("", |r| r.as_str())),
        );
        wtr.write_record(&row).map_err(err)?;
    }
    wtr.flush().map_err(|e| ScorecardError::InvalidCsv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Rating::{Good as G, NeedsImprovement as N, Okay as O};

    #[test]
    fn six_items_with_fixed_statements() {
        assert_eq!(TrustItem::ALL.len(), 6);
        assert_eq!(
            TrustItem::Trust.statement(),
            "I trust the results made by [the AI feature]."
        );
        assert!(!TrustItem::Satisfaction.is_scored());
    }

    #[test]
    fn single_rater_example() {
        let mut sc = Scorecard::new();
        sc.record_entry(ScorecardEntry::new("r1", "tw_ai", [G, G, O, N, G, G]))
            .unwrap();
        let rep = sc.aggregate::<f64>("tw_ai").unwrap();
        assert_eq!(rep.overall_mean_of_sums, 2.0);
        assert_eq!(rep.per_item_mean[&TrustItem::Confidence], -1.0);
        assert_eq!(rep.satisfaction_mean, 1.0);
        assert!(!rep.per_item_mean.contains_key(&TrustItem::Satisfaction));
    }

    #[test]
    fn validation_errors() {
        let mut sc = Scorecard::new();
        let mut entry = ScorecardEntry::new("r1", "tw_ai", [G; 6]);
        entry.ratings.remove(&TrustItem::Control);
        let err = sc.record_entry(entry).unwrap_err();
        assert_eq!(err.code(), "IncompleteRatings");
        assert!(err.to_string().contains("control"));
        sc.record_entry(ScorecardEntry::new("r1", "tw_ai", [G; 6])).unwrap();
        sc.record_entry(ScorecardEntry::new("r1", "existing", [G; 6])).unwrap();
        assert_eq!(
            sc.record_entry(ScorecardEntry::new("r1", "tw_ai", [O; 6]))
                .unwrap_err()
                .code(),
            "DuplicateEntry"
        );
        assert_eq!(sc.aggregate::<f64>("nobody").unwrap_err().code(), "NoEntries");
        assert_eq!(sc.tools(), vec!["existing".to_string(), "tw_ai".to_string()]);
    }

    #[test]
    fn extremes() {
        let mut sc = Scorecard::new();
        sc.record_entry(ScorecardEntry::new("r", "a", [G; 6])).unwrap();
        sc.record_entry(ScorecardEntry::new("r", "b", [N; 6])).unwrap();
        assert_eq!(sc.aggregate::<f64>("a").unwrap().overall_mean_of_sums, 5.0);
        let d = sc.compare_tools::<f64>("a", "b").unwrap();
        assert_eq!(d.overall_delta, -10.0);
        assert!(d.per_item_delta.values().all(|&v| v == -2.0));
        let same = sc.compare_tools::<f32>("a", "a").unwrap();
        assert_eq!(same.overall_delta, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let entries = vec![
            ScorecardEntry::new("r1", "tw_ai", [G, O, N, G, G, O]),
            ScorecardEntry::new("r2", "existing", [N; 6]),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &entries).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rater_id,tool_id,efficiency"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].ratings, entries[0].ratings);
        assert_eq!(back[1].tool_id, "existing");
        assert!(read_csv("rater_id,tool_id\nr,t\n".as_bytes()).is_err());
        assert!(read_csv(
            "rater_id,tool_id,efficiency,usage_understanding,control,confidence,trust,satisfaction\nr,t,great,good,good,good,good,good\n"
                .as_bytes()
        )
        .is_err());
    }

    fn rating() -> impl Strategy<Value = Rating> {
        prop_oneof![Just(G), Just(O), Just(N)]
    }

    proptest! {
        #[test]
        fn mean_of_sums_is_sum_of_means(rows in prop::collection::vec(prop::array::uniform6(rating()), 1..40)) {
            let mut sc = Scorecard::new();
            for (i, r) in rows.iter().enumerate() {
                sc.record_entry(ScorecardEntry::new(format!("r{i}"), "t", *r)).unwrap();
            }
            let rep = sc.aggregate::<f64>("t").unwrap();
            let sum_of_means: f64 = rep.per_item_mean.values().sum();
            prop_assert!((rep.overall_mean_of_sums - sum_of_means).abs() <= 1e-12);
            prop_assert!(rep.per_item_mean.values().all(|m| (-1.0..=1.0).contains(m)));
            prop_assert!((-5.0..=5.0).contains(&rep.overall_mean_of_sums));
        }

        #[test]
        fn compare_is_antisymmetric(a in prop::collection::vec(prop::array::uniform6(rating()), 1..10),
                                    b in prop::collection::vec(prop::array::uniform6(rating()), 1..10)) {
            let mut sc = Scorecard::new();
            for (i, r) in a.iter().enumerate() {
                sc.record_entry(ScorecardEntry::new(format!("r{i}"), "a", *r)).unwrap();
            }
            for (i, r) in b.iter().enumerate() {
                sc.record_entry(ScorecardEntry::new(format!("r{i}"), "b", *r)).unwrap();
            }
            let ab = sc.compare_tools::<f64>("a", "b").unwrap();
            let ba = sc.compare_tools::<f64>("b", "a").unwrap();
            prop_assert_eq!(ab.overall_delta, -ba.overall_delta);
            for item in TrustItem::SCORED {
                prop_assert_eq!(ab.per_item_delta[&item], -ba.per_item_delta[&item]);
            }
        }
    }
}
