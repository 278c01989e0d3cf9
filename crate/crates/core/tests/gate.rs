use bookcbr::engine::{rank_order, reuse, HIGH_CONFIDENCE_MESSAGE, LOW_CONFIDENCE_MESSAGE};
use bookcbr::{
    CaseId, EngineConfig, Metric, PersonalityLabel, RecommendationKind, RetrievalResult, ScoredCase,
    SimilarityScore,
};
use proptest::prelude::*;

fn result(scores: &[f64]) -> RetrievalResult {
    let mut pairs: Vec<(f64, CaseId)> = scores.iter().enumerate().map(|(i, &s)| (s, CaseId(i as u64 + 1))).collect();
    pairs.sort_by(|a, b| rank_order(*a, *b));
    RetrievalResult {
        ranked: pairs
            .into_iter()
            .map(|(s, id)| ScoredCase {
                case_id: id,
                book_title: format!("Libro {}", id.0),
                personality: "INFP".parse::<PersonalityLabel>().unwrap(),
                score: SimilarityScore::new(s, Metric::Jaccard).unwrap(),
            })
            .collect(),
        metric: Metric::Jaccard,
        fell_back: false,
        store_version: 1,
    }
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    // mix in values sitting exactly on the default threshold
    prop::collection::vec(prop_oneof![0.0f64..=1.0, Just(0.5), Just(1.0), Just(0.0)], 2..30)
}

proptest! {
    #[test]
    fn gate_splits_on_strictly_greater(scores in scores()) {
        let config = EngineConfig::default();
        let r = result(&scores);
        let rec = reuse(&r, &config);
        let best = scores.iter().cloned().fold(f64::MIN, f64::max);
        if best > 0.50 {
            prop_assert_eq!(rec.kind, RecommendationKind::HighConfidence);
            prop_assert_eq!(rec.picks.len(), 1);
            prop_assert_eq!(rec.picks[0].score, best);
            prop_assert_eq!(rec.reliability_message.as_str(), "Reliability of the recommendation: +50%");
            prop_assert!(rec.eligible_for_retention);
        } else {
            prop_assert_eq!(rec.kind, RecommendationKind::LowConfidence);
            prop_assert_eq!(rec.picks.len(), 2);
            prop_assert!(rec.picks[0].score >= rec.picks[1].score);
            prop_assert_eq!(rec.reliability_message.as_str(), "Recommendation reliability: -50%");
            prop_assert!(!rec.eligible_for_retention);
        }
    }

    #[test]
    fn raising_the_threshold_never_upgrades(scores in scores(), t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let r = result(&scores);
        let at = |t| reuse(&r, &EngineConfig { threshold: t, ..Default::default() }).kind;
        if at(lo) == RecommendationKind::LowConfidence {
            prop_assert_eq!(at(hi), RecommendationKind::LowConfidence);
        }
    }
}

#[test]
fn messages_are_verbatim() {
    assert_eq!(HIGH_CONFIDENCE_MESSAGE, "Reliability of the recommendation: +50%");
    assert_eq!(LOW_CONFIDENCE_MESSAGE, "Recommendation reliability: -50%");
}

#[test]
fn single_case_base_gives_one_low_pick() {
    let rec = reuse(&result(&[0.2]), &EngineConfig::default());
    assert_eq!((rec.kind, rec.picks.len()), (RecommendationKind::LowConfidence, 1));
}
