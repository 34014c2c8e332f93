//! Cross-provider consensus.
//!
//! Claims from several providers' answers to one prompt are clustered
//! greedily; a cluster represented by at least `min_support` distinct
//! providers is common content.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, Claim, TermVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("compare needs at least two providers, got {0}")]
    TooFewProviders(usize),
    #[error("compare needs at least two successful responses, got {0}")]
    CompareFailed(usize),
}

impl CompareError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::TooFewProviders(_) => "TooFewProviders",
            Self::CompareFailed(_) => "CompareFailed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub tau: f64,
    pub min_support: usize,
    pub pass_threshold: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            tau: 0.6,
            min_support: 2,
            pass_threshold: 0.5,
        }
    }
}

/// Claims of one provider's response, in span order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderClaims {
    pub provider_id: String,
    pub response_id: String,
    pub claims: Vec<Claim>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterMember {
    pub provider_id: String,
    pub response_id: String,
    pub claim_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimCluster {
    pub cluster_id: usize,
    pub member_claims: Vec<ClusterMember>,
    pub representative_text: String,
    pub support: usize,
}

/// Single-pass greedy clustering.
///
/// Providers are visited in the given order and claims in span order; a claim
/// joins the first cluster whose representative (its founding claim) has
/// similarity ≥ `tau`, otherwise it founds a new cluster.
pub fn cluster_claims(groups: &[ProviderClaims], tau: f64) -> Vec<ClaimCluster> {
    struct Building {
        rep: TermVector,
        cluster: ClaimCluster,
        providers: BTreeSet<String>,
    }
    let mut building: Vec<Building> = Vec::new();
    for group in groups {
        for claim in &group.claims {
            let tv = TermVector::from_text(&claim.text);
            let member = ClusterMember {
                provider_id: group.provider_id.clone(),
                response_id: group.response_id.clone(),
                claim_id: claim.id.clone(),
            };
            match building.iter_mut().find(|b| tv.cosine::<f64>(&b.rep).value() >= tau) {
                Some(b) => {
                    b.cluster.member_claims.push(member);
                    b.providers.insert(group.provider_id.clone());
                    b.cluster.support = b.providers.len();
                }
                None => {
                    let cluster_id = building.len();
                    building.push(Building {
                        rep: tv,
                        cluster: ClaimCluster {
                            cluster_id,
                            member_claims: vec![member],
                            representative_text: claim.text.clone(),
                            support: 1,
                        },
                        providers: BTreeSet::from([group.provider_id.clone()]),
                    });
                }
            }
        }
    }
    building.into_iter().map(|b| b.cluster).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub prompt: String,
    pub provider_ids: Vec<String>,
    pub clusters: Vec<ClaimCluster>,
    pub common_clusters: Vec<ClaimCluster>,
    pub per_response_coverage: BTreeMap<String, f64>,
    pub per_response_passed: BTreeMap<String, bool>,
    /// Providers whose generation failed, with the reason.
    #[serde(default)]
    pub failures: BTreeMap<String, String>,
}

impl CompareReport {
    pub fn cluster_of(&self, claim_id: &str) -> Option<&ClaimCluster> {
        self.clusters
            .iter()
            .find(|c| c.member_claims.iter().any(|m| m.claim_id == claim_id))
    }
}

/// Cluster the responses and score each response by the share of its
/// checkable claims that landed in common clusters.
pub fn compare_responses(
    prompt: &str,
    groups: &[ProviderClaims],
    config: &CompareConfig,
) -> Result<CompareReport, CompareError> {
    let providers: BTreeSet<&str> = groups.iter().map(|g| g.provider_id.as_str()).collect();
    if providers.len() < 2 {
        return Err(CompareError::CompareFailed(providers.len()));
    }
    let clusters = cluster_claims(groups, config.tau);
    let common: Vec<ClaimCluster> = clusters
        .iter()
        .filter(|c| c.support >= config.min_support)
        .cloned()
        .collect();
    let common_claims: BTreeSet<&str> = common
        .iter()
        .flat_map(|c| c.member_claims.iter().map(|m| m.claim_id.as_str()))
        .collect();

    let mut per_response_coverage = BTreeMap::new();
    let mut per_response_passed = BTreeMap::new();
    for group in groups {
        let checkable: Vec<&Claim> = group.claims.iter().filter(|c| c.checkable).collect();
        let in_common = checkable
            .iter()
            .filter(|c| common_claims.contains(c.id.as_str()))
            .count();
        let coverage = crate::fraction(in_common, checkable.len());
        per_response_coverage.insert(group.response_id.clone(), coverage);
        per_response_passed.insert(group.response_id.clone(), coverage >= config.pass_threshold);
    }
    Ok(CompareReport {
        prompt: prompt.to_owned(),
        provider_ids: groups.iter().map(|g| g.provider_id.clone()).collect(),
        clusters,
        common_clusters: common,
        per_response_coverage,
        per_response_passed,
        failures: BTreeMap::new(),
    })
}

/// Convenience for callers holding raw response texts.
pub fn provider_claims(provider_id: &str, response_id: &str, text: &str) -> ProviderClaims {
    ProviderClaims {
        provider_id: provider_id.to_owned(),
        response_id: response_id.to_owned(),
        claims: text::segment_claims(response_id, text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SHARED: &str = "Content discovery on the home screen is the most critical problem.";

    #[test]
    fn single_claim_single_cluster() {
        let g = [provider_claims("a", "ra", "Only one sentence here today.")];
        let c = cluster_claims(&g, 0.6);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].support, 1);
    }

    #[test]
    fn identical_claims_across_providers() {
        let g = [provider_claims("a", "ra", SHARED), provider_claims("b", "rb", SHARED)];
        let c = cluster_claims(&g, 0.6);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].support, 2);
        assert_eq!(c[0].representative_text, SHARED);
    }

    #[test]
    fn half_similar_claims_split_at_point_six() {
        // "a b" vs "a c": cosine 0.5
        let g = [provider_claims("a", "ra", "a b"), provider_claims("b", "rb", "a c")];
        assert_eq!(text::similarity::<f64>("a b", "a c").value(), 0.5);
        assert_eq!(cluster_claims(&g, 0.6).len(), 2);
        assert_eq!(cluster_claims(&g, 0.5).len(), 1);
    }

    #[test]
    fn representative_is_first_member() {
        // b joins a's cluster; c is close to b but not to a
        let g = [
            provider_claims("p1", "r1", "alpha beta gamma delta"),
            provider_claims("p2", "r2", "alpha beta gamma epsilon"),
            provider_claims("p3", "r3", "beta gamma epsilon zeta"),
        ];
        let c = cluster_claims(&g, 0.7);
        assert_eq!(c[0].member_claims.len(), 2);
        assert_eq!(c[0].representative_text, "alpha beta gamma delta");
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn same_provider_claims_count_once() {
        let g = [provider_claims("a", "ra", &format!("{SHARED} {SHARED}"))];
        let c = cluster_claims(&g, 0.6);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_claims.len(), 2);
        assert_eq!(c[0].support, 1);
    }

    #[test]
    fn compare_identical_and_disjoint() {
        let cfg = CompareConfig::default();
        let text = format!("{SHARED} Autoplay previews start before users can read titles.");
        let r = compare_responses(
            "p",
            &[provider_claims("a", "ra", &text), provider_claims("b", "rb", &text)],
            &cfg,
        )
        .unwrap();
        assert!(r.clusters.iter().all(|c| c.support == 2));
        assert!(r.per_response_coverage.values().all(|&v| v == 1.0));
        assert!(r.per_response_passed.values().all(|&p| p));

        let r = compare_responses(
            "p",
            &[
                provider_claims("a", "ra", "Search results bury documentaries beneath trending shows."),
                provider_claims("b", "rb", "Subtitle fonts shrink unexpectedly during tablet playback."),
            ],
            &cfg,
        )
        .unwrap();
        assert!(r.common_clusters.is_empty());
        assert!(r.per_response_coverage.values().all(|&v| v == 0.0));
    }

    #[test]
    fn compare_needs_two_providers() {
        let cfg = CompareConfig::default();
        assert_eq!(
            compare_responses("p", &[provider_claims("a", "ra", SHARED)], &cfg),
            Err(CompareError::CompareFailed(1))
        );
    }

    #[test]
    fn planted_sentence_shared_by_three() {
        let a = format!("Search results bury documentaries beneath trending shows. {SHARED}");
        let b = format!("{SHARED} Subtitle fonts shrink unexpectedly during tablet playback.");
        let c = format!("Profiles menu requires too many remote clicks overall. {SHARED}");
        let groups = [
            provider_claims("a", "ra", &a),
            provider_claims("b", "rb", &b),
            provider_claims("c", "rc", &c),
        ];

        // brute force: pairs of claims from different providers above 0.6
        let all: Vec<(&str, &Claim)> = groups
            .iter()
            .flat_map(|g| g.claims.iter().map(move |c| (g.provider_id.as_str(), c)))
            .collect();
        let mut linked = BTreeSet::new();
        for (pa, ca) in &all {
            for (pb, cb) in &all {
                if pa != pb && text::similarity::<f64>(&ca.text, &cb.text).value() >= 0.6 {
                    linked.insert(ca.text.clone());
                }
            }
        }
        assert_eq!(linked, BTreeSet::from([SHARED.to_owned()]));

        let r = compare_responses("p", &groups, &CompareConfig::default()).unwrap();
        let support3: Vec<_> = r.clusters.iter().filter(|c| c.support == 3).collect();
        assert_eq!(support3.len(), 1);
        assert_eq!(support3[0].representative_text, SHARED);
        assert_eq!(r.common_clusters.len(), 1);
        assert!(r.per_response_coverage.values().all(|&v| v == 0.5));
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop::sample::select(vec!["menu", "row", "ads", "kids", "rank", "play", "tile"]),
            1..7,
        )
        .prop_map(|w| w.join(" "))
    }

    fn response() -> impl Strategy<Value = String> {
        prop::collection::vec(sentence(), 1..5).prop_map(|s| s.join(". "))
    }

    proptest! {
        #[test]
        fn clusters_partition_claims(responses in prop::collection::vec(response(), 1..5), tau in 0.1f64..1.0) {
            let groups: Vec<_> = responses
                .iter()
                .enumerate()
                .map(|(i, t)| provider_claims(&format!("p{i}"), &format!("r{i}"), t))
                .collect();
            let clusters = cluster_claims(&groups, tau);
            let mut seen = BTreeSet::new();
            for c in &clusters {
                prop_assert!(c.support >= 1 && c.support <= groups.len());
                for m in &c.member_claims {
                    prop_assert!(seen.insert(m.claim_id.clone()));
                    let claim = groups.iter().flat_map(|g| &g.claims).find(|x| x.id == m.claim_id).unwrap();
                    prop_assert!(text::similarity::<f64>(&claim.text, &c.representative_text).value() >= tau);
                }
            }
            let total: usize = groups.iter().map(|g| g.claims.len()).sum();
            prop_assert_eq!(seen.len(), total);
            prop_assert_eq!(cluster_claims(&groups, tau), clusters);
        }

        #[test]
        fn identical_fan_out_covers_everything(text in response(), n in 2usize..5) {
            // five-token sentences keep every claim checkable
            let text = format!("{text}. Autoplay previews start before users read titles.");
            let groups: Vec<_> = (0..n).map(|i| provider_claims(&format!("p{i}"), &format!("r{i}"), &text)).collect();
            let r = compare_responses("p", &groups, &CompareConfig::default()).unwrap();
            prop_assert!(r.per_response_coverage.values().all(|&v| v == 1.0));
        }
    }
}
