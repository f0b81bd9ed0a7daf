//! Deterministic mock backend.
//!
//! Responses are a pure function of (mock_seed, topic id, prompt kind,
//! iteration, keywords): no wall clock, thread or call-order dependence,
//! so grids replay byte-identically across processes and platforms.

use crate::corpus::Topic;
use crate::prompt::PromptKind;

use super::BackendSpec;

/// splitmix64 — fixed integer mixer used to pick the response variant.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn variant_for(seed: u64, topic_id: u64, kind: PromptKind, iteration: u32, variants: u32) -> u64 {
    let kind_tag = match kind {
        PromptKind::Short => 1u64,
        PromptKind::Long => 2u64,
    };
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ topic_id);
    h = splitmix64(h ^ kind_tag);
    h = splitmix64(h ^ u64::from(iteration));
    h % u64::from(variants.max(1))
}

/// Produce the mock response for one cell.
///
/// Variant `v` selects keyword `v mod |keywords|`; the short prompt answers
/// with that single keyword, the long prompt with the first min(3, n)
/// keywords starting there, wrapping, joined by spaces.
pub fn mock_complete(
    spec: &BackendSpec,
    topic: &Topic,
    kind: PromptKind,
    iteration: u32,
) -> String {
    let v = variant_for(
        spec.mock_seed,
        topic.id,
        kind,
        iteration,
        spec.mock_variants,
    ) as usize;
    let n = topic.keywords.len();
    let start = v % n;
    match kind {
        PromptKind::Short => format!("topic: {}", topic.keywords[start]),
        PromptKind::Long => {
            let take = n.min(3);
            let words: Vec<&str> = (0..take)
                .map(|k| topic.keywords[(start + k) % n].as_str())
                .collect();
            format!("topic: {}", words.join(" "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::BackendKind;

    fn mock_spec(seed: u64, variants: u32) -> BackendSpec {
        let mut b = BackendSpec::mock("m", seed);
        b.mock_variants = variants;
        b
    }

    fn topic_32() -> Topic {
        Topic::new(
            32,
            [
                "carbon",
                "forests",
                "co2",
                "forest",
                "ecosystem",
                "vegetation",
                "climate",
                "biomass",
                "ecosystems",
                "photosynthesis",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
    }

    fn topic_77() -> Topic {
        Topic::new(
            77,
            [
                "earthworms",
                "earthworm",
                "soil",
                "soils",
                "ecosystems",
                "ecosystem",
                "organisms",
                "ecological",
                "biodiversity",
                "fungi",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
    }

    #[test]
    fn single_variant_short_forces_first_keyword() {
        let spec = mock_spec(7, 1);
        assert_eq!(
            mock_complete(&spec, &topic_77(), PromptKind::Short, 0),
            "topic: earthworms"
        );
    }

    #[test]
    fn single_variant_long_forces_first_three_keywords() {
        let spec = mock_spec(7, 1);
        assert_eq!(
            mock_complete(&spec, &topic_32(), PromptKind::Long, 0),
            "topic: carbon forests co2"
        );
    }

    #[test]
    fn deterministic_across_calls() {
        let spec = mock_spec(42, 5);
        for iter in 0..20 {
            let a = mock_complete(&spec, &topic_32(), PromptKind::Long, iter);
            let b = mock_complete(&spec, &topic_32(), PromptKind::Long, iter);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn variants_wrap_around_keyword_list() {
        let topic = Topic::new(1, vec!["a".into(), "b".into()]);
        let spec = mock_spec(0, 100);
        for iter in 0..50 {
            let r = mock_complete(&spec, &topic, PromptKind::Long, iter);
            assert!(r == "topic: a b" || r == "topic: b a", "unexpected {r}");
        }
    }

    #[test]
    fn kind_and_iteration_feed_the_variant() {
        let spec = mock_spec(3, 1000);
        let topic = topic_32();
        // with many variants, different iterations should not all collide
        let distinct: std::collections::BTreeSet<String> = (0..20)
            .map(|i| mock_complete(&spec, &topic, PromptKind::Short, i))
            .collect();
        assert!(distinct.len() > 1);
        assert!(matches!(spec.kind, BackendKind::Mock));
    }

    #[test]
    fn responses_always_carry_the_marker() {
        let spec = mock_spec(9, 4);
        for iter in 0..10 {
            for kind in PromptKind::ALL {
                let r = mock_complete(&spec, &topic_77(), kind, iter);
                assert!(r.starts_with("topic: "));
            }
        }
    }
}
