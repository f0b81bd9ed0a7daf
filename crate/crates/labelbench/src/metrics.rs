//! Quantitative evaluation: distinct-label counts per iteration, per-topic
//! stability, the group-by-group cosine-similarity matrix, and the shared
//! 95% confidence interval routine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::embed::{cross_group_mean, within_group_mean, Embedder};
use crate::error::{Error, Result};
use crate::prompt::{LabelRecord, PromptKind};

/// One (backend, prompt) group of the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
}

impl GroupKey {
    pub fn new(backend_id: impl Into<String>, prompt_kind: PromptKind) -> Self {
        Self {
            backend_id: backend_id.into(),
            prompt_kind,
        }
    }

    fn sort_tuple(&self) -> (&str, &str) {
        (&self.backend_id, self.prompt_kind.as_str())
    }
}

impl PartialOrd for GroupKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_tuple().cmp(&other.sort_tuple())
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.backend_id, self.prompt_kind)
    }
}

/// Normalized labels indexed by group, then topic, then iteration.
/// All maps are ordered so every traversal is deterministic.
#[derive(Debug, Default, Clone)]
pub struct LabelView {
    groups: BTreeMap<GroupKey, BTreeMap<u64, BTreeMap<u32, String>>>,
}

impl LabelView {
    pub fn from_records(records: &[LabelRecord]) -> Self {
        let mut groups: BTreeMap<GroupKey, BTreeMap<u64, BTreeMap<u32, String>>> = BTreeMap::new();
        for rec in records {
            groups
                .entry(GroupKey::new(&rec.backend_id, rec.prompt_kind))
                .or_default()
                .entry(rec.topic_id)
                .or_default()
                .insert(rec.iteration, rec.normalized_label.clone());
        }
        Self { groups }
    }

    pub fn group_keys(&self) -> Vec<GroupKey> {
        self.groups.keys().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    fn group(&self, key: &GroupKey) -> Result<&BTreeMap<u64, BTreeMap<u32, String>>> {
        self.groups
            .get(key)
            .ok_or_else(|| Error::NoRecordsForGroup(key.to_string()))
    }

    /// Iterations with at least one label in this group.
    pub fn iterations(&self, key: &GroupKey) -> Result<BTreeSet<u32>> {
        Ok(self
            .group(key)?
            .values()
            .flat_map(|by_iter| by_iter.keys().copied())
            .collect())
    }

    pub fn topic_ids(&self, key: &GroupKey) -> Result<Vec<u64>> {
        Ok(self.group(key)?.keys().copied().collect())
    }

    /// Labels of one topic across iterations, in iteration order.
    pub fn labels_for_topic(&self, key: &GroupKey, topic_id: u64) -> Result<Vec<&str>> {
        Ok(self
            .group(key)?
            .get(&topic_id)
            .map(|by_iter| by_iter.values().map(String::as_str).collect())
            .unwrap_or_default())
    }
}

/// Unique normalized labels across the topic set in one iteration.
/// Topics whose cell failed in that iteration are simply absent.
pub fn distinct_labels_per_iteration(
    view: &LabelView,
    key: &GroupKey,
    iteration: u32,
) -> Result<usize> {
    let group = view.group(key)?;
    let mut unique = BTreeSet::new();
    let mut seen_any = false;
    for by_iter in group.values() {
        if let Some(label) = by_iter.get(&iteration) {
            unique.insert(label.as_str());
            seen_any = true;
        }
    }
    if !seen_any {
        return Err(Error::NoRecordsForGroup(format!(
            "{key} iteration {iteration}"
        )));
    }
    Ok(unique.len())
}

/// Unique normalized labels for one topic across iterations.
pub fn stability_per_topic(view: &LabelView, key: &GroupKey, topic_id: u64) -> Result<usize> {
    let labels = view.labels_for_topic(key, topic_id)?;
    if labels.is_empty() {
        return Err(Error::NoRecordsForGroup(format!("{key} topic {topic_id}")));
    }
    let unique: BTreeSet<&str> = labels.into_iter().collect();
    Ok(unique.len())
}

/// Two-sided 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci95 {
    pub lo: f64,
    pub hi: f64,
    /// Set for single-sample groups, where no interval can be estimated.
    pub degenerate: bool,
}

fn t_quantile_975(df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom must be positive")
        .inverse_cdf(0.975)
}

/// mean +/- t(0.975, n-1) * s / sqrt(n). A single sample yields the
/// degenerate (x, x); a constant sample yields a zero-width interval
/// exactly (the variance is not recomputed through floating point).
pub fn confidence_interval_95(samples: &[f64]) -> Result<Ci95> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if n == 1 {
        return Ok(Ci95 {
            lo: samples[0],
            hi: samples[0],
            degenerate: true,
        });
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Ok(Ci95 {
            lo: first,
            hi: first,
            degenerate: false,
        });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let half = t_quantile_975(n as f64 - 1.0) * var.sqrt() / (n as f64).sqrt();
    Ok(Ci95 {
        lo: mean - half,
        hi: mean + half,
        degenerate: false,
    })
}

fn mean_of(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Distinct-label statistics for one group (per-iteration counts plus the
/// pooled unique count across all iterations).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistinctLabelStat {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub per_iteration_counts: Vec<(u32, usize)>,
    pub pooled_distinct: usize,
    pub mean: f64,
    pub ci95: Ci95,
}

pub fn distinct_label_stat(view: &LabelView, key: &GroupKey) -> Result<DistinctLabelStat> {
    let iterations = view.iterations(key)?;
    if iterations.is_empty() {
        return Err(Error::NoRecordsForGroup(key.to_string()));
    }
    let mut per_iteration_counts = Vec::with_capacity(iterations.len());
    for iter in iterations {
        per_iteration_counts.push((iter, distinct_labels_per_iteration(view, key, iter)?));
    }
    let pooled: BTreeSet<&str> = view
        .group(key)?
        .values()
        .flat_map(|by_iter| by_iter.values().map(String::as_str))
        .collect();
    let samples: Vec<f64> = per_iteration_counts
        .iter()
        .map(|(_, c)| *c as f64)
        .collect();
    Ok(DistinctLabelStat {
        backend_id: key.backend_id.clone(),
        prompt_kind: key.prompt_kind,
        pooled_distinct: pooled.len(),
        mean: mean_of(&samples),
        ci95: confidence_interval_95(&samples)?,
        per_iteration_counts,
    })
}

/// Stability statistics for one group (per-topic unique-label counts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityStat {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub per_topic_counts: Vec<(u64, usize)>,
    pub mean: f64,
    pub ci95: Ci95,
}

pub fn stability_stat(view: &LabelView, key: &GroupKey) -> Result<StabilityStat> {
    let topic_ids = view.topic_ids(key)?;
    if topic_ids.is_empty() {
        return Err(Error::NoRecordsForGroup(key.to_string()));
    }
    let mut per_topic_counts = Vec::with_capacity(topic_ids.len());
    for topic_id in topic_ids {
        per_topic_counts.push((topic_id, stability_per_topic(view, key, topic_id)?));
    }
    let samples: Vec<f64> = per_topic_counts.iter().map(|(_, c)| *c as f64).collect();
    Ok(StabilityStat {
        backend_id: key.backend_id.clone(),
        prompt_kind: key.prompt_kind,
        mean: mean_of(&samples),
        ci95: confidence_interval_95(&samples)?,
        per_topic_counts,
    })
}

/// Group-by-group mean cosine similarity. Diagonal entries average the
/// within-group pair means per topic; off-diagonal entries average the
/// cross-group combination means. Topics without enough labels on either
/// side are excluded and show up in `topic_counts`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub axis: Vec<GroupKey>,
    /// `values[i][j]`; None when no topic qualified for the pair.
    pub values: Vec<Vec<Option<f64>>>,
    /// Topics that contributed to each entry.
    pub topic_counts: Vec<Vec<usize>>,
}

impl SimilarityMatrix {
    pub fn entry(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }
}

pub fn similarity_matrix(view: &LabelView, embedder: &Embedder) -> Result<SimilarityMatrix> {
    let axis = view.group_keys();
    let n = axis.len();
    let mut values = vec![vec![None; n]; n];
    let mut topic_counts = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i..n {
            let (entry, count) = pair_entry(view, &axis[i], &axis[j], embedder)?;
            values[i][j] = entry;
            values[j][i] = entry;
            topic_counts[i][j] = count;
            topic_counts[j][i] = count;
        }
    }
    Ok(SimilarityMatrix {
        axis,
        values,
        topic_counts,
    })
}

fn pair_entry(
    view: &LabelView,
    g: &GroupKey,
    h: &GroupKey,
    embedder: &Embedder,
) -> Result<(Option<f64>, usize)> {
    let mut sum = 0.0;
    let mut count = 0usize;
    if g == h {
        for topic_id in view.topic_ids(g)? {
            let labels = view.labels_for_topic(g, topic_id)?;
            if labels.len() >= 2 {
                sum += within_group_mean(&labels, embedder)?;
                count += 1;
            }
        }
    } else {
        let topics_g: BTreeSet<u64> = view.topic_ids(g)?.into_iter().collect();
        let topics_h: BTreeSet<u64> = view.topic_ids(h)?.into_iter().collect();
        for topic_id in topics_g.intersection(&topics_h) {
            let labels_g = view.labels_for_topic(g, *topic_id)?;
            let labels_h = view.labels_for_topic(h, *topic_id)?;
            if !labels_g.is_empty() && !labels_h.is_empty() {
                sum += cross_group_mean(&labels_g, &labels_h, embedder)?;
                count += 1;
            }
        }
    }
    if count == 0 {
        Ok((None, 0))
    } else {
        Ok((Some(sum / count as f64), count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingProviderSpec;
    use approx::assert_abs_diff_eq;

    fn label(
        backend: &str,
        kind: PromptKind,
        iteration: u32,
        topic: u64,
        text: &str,
    ) -> LabelRecord {
        LabelRecord {
            backend_id: backend.to_string(),
            prompt_kind: kind,
            iteration,
            topic_id: topic,
            raw_label: text.to_string(),
            normalized_label: text.to_string(),
            word_count: text.split_whitespace().count(),
            conformant: true,
            parse_fallback: false,
        }
    }

    fn hash_embedder() -> Embedder {
        Embedder::new(EmbeddingProviderSpec::hash_embedder(64)).unwrap()
    }

    #[test]
    fn ci_on_one_to_five() {
        let ci = confidence_interval_95(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_abs_diff_eq!(ci.lo, 1.037, epsilon = 1e-3);
        assert_abs_diff_eq!(ci.hi, 4.963, epsilon = 1e-3);
        assert!(!ci.degenerate);
    }

    #[test]
    fn ci_zero_variance_is_exact() {
        let ci = confidence_interval_95(&[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(ci.lo, 5.0);
        assert_eq!(ci.hi, 5.0);
    }

    #[test]
    fn ci_zero_variance_is_exact_for_awkward_floats() {
        // 0.1 sums inexactly; the constant-sample check avoids a hairline
        // nonzero variance
        let ci = confidence_interval_95(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(ci.lo, 0.1);
        assert_eq!(ci.hi, 0.1);
    }

    #[test]
    fn ci_two_samples_wide_interval() {
        // t(0.975, 1) = 12.706, s = 7.0711: half-width 63.53
        let ci = confidence_interval_95(&[0.0, 10.0]).unwrap();
        assert_abs_diff_eq!(ci.lo, -58.53, epsilon = 0.01);
        assert_abs_diff_eq!(ci.hi, 68.53, epsilon = 0.01);
    }

    #[test]
    fn ci_single_sample_is_degenerate() {
        let ci = confidence_interval_95(&[7.0]).unwrap();
        assert_eq!((ci.lo, ci.hi), (7.0, 7.0));
        assert!(ci.degenerate);
    }

    #[test]
    fn ci_empty_errors() {
        assert!(matches!(
            confidence_interval_95(&[]),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn t_quantile_matches_tables() {
        assert_abs_diff_eq!(t_quantile_975(4.0), 2.776, epsilon = 1e-3);
        assert_abs_diff_eq!(t_quantile_975(1.0), 12.706, epsilon = 1e-2);
        assert_abs_diff_eq!(t_quantile_975(19.0), 2.093, epsilon = 1e-3);
    }

    #[test]
    fn distinct_counts_unique_labels() {
        let g = GroupKey::new("m", PromptKind::Short);
        let records = vec![
            label("m", PromptKind::Short, 0, 1, "carbon"),
            label("m", PromptKind::Short, 0, 2, "soil"),
            label("m", PromptKind::Short, 0, 3, "carbon"),
        ];
        let view = LabelView::from_records(&records);
        assert_eq!(distinct_labels_per_iteration(&view, &g, 0).unwrap(), 2);
    }

    #[test]
    fn distinct_lower_and_upper_bounds() {
        let g = GroupKey::new("m", PromptKind::Short);
        let same: Vec<LabelRecord> = (0..104)
            .map(|t| label("m", PromptKind::Short, 0, t, "biology"))
            .collect();
        let view = LabelView::from_records(&same);
        assert_eq!(distinct_labels_per_iteration(&view, &g, 0).unwrap(), 1);

        let all_different: Vec<LabelRecord> = (0..104)
            .map(|t| label("m", PromptKind::Short, 0, t, &format!("label{t}")))
            .collect();
        let view = LabelView::from_records(&all_different);
        assert_eq!(distinct_labels_per_iteration(&view, &g, 0).unwrap(), 104);
    }

    #[test]
    fn distinct_missing_iteration_errors() {
        let g = GroupKey::new("m", PromptKind::Short);
        let view = LabelView::from_records(&[label("m", PromptKind::Short, 0, 1, "x")]);
        assert!(distinct_labels_per_iteration(&view, &g, 3).is_err());
    }

    #[test]
    fn stability_counts_unique_labels_across_iterations() {
        let g = GroupKey::new("m", PromptKind::Long);
        let records = vec![
            label("m", PromptKind::Long, 0, 7, "soil"),
            label("m", PromptKind::Long, 1, 7, "soil fauna"),
            label("m", PromptKind::Long, 2, 7, "soil"),
        ];
        let view = LabelView::from_records(&records);
        assert_eq!(stability_per_topic(&view, &g, 7).unwrap(), 2);
    }

    #[test]
    fn stability_bounds() {
        let g = GroupKey::new("m", PromptKind::Short);
        let stable: Vec<LabelRecord> = (0..20)
            .map(|i| label("m", PromptKind::Short, i, 1, "soil"))
            .collect();
        let view = LabelView::from_records(&stable);
        assert_eq!(stability_per_topic(&view, &g, 1).unwrap(), 1);

        let unstable: Vec<LabelRecord> = (0..20)
            .map(|i| label("m", PromptKind::Short, i, 1, &format!("l{i}")))
            .collect();
        let view = LabelView::from_records(&unstable);
        assert_eq!(stability_per_topic(&view, &g, 1).unwrap(), 20);
    }

    #[test]
    fn distinct_stat_zero_variance() {
        let g = GroupKey::new("m", PromptKind::Short);
        let mut records = Vec::new();
        for iter in 0..20 {
            for t in 0..5 {
                records.push(label("m", PromptKind::Short, iter, t, &format!("x{t}")));
            }
        }
        let view = LabelView::from_records(&records);
        let stat = distinct_label_stat(&view, &g).unwrap();
        assert_eq!(stat.mean, 5.0);
        assert_eq!((stat.ci95.lo, stat.ci95.hi), (5.0, 5.0));
        assert_eq!(stat.pooled_distinct, 5);
        assert_eq!(stat.per_iteration_counts.len(), 20);
    }

    #[test]
    fn distinct_stat_matches_ci_oracle() {
        let g = GroupKey::new("m", PromptKind::Short);
        let mut records = Vec::new();
        // iteration i has i+1 distinct labels over 5 topics
        for (iter, n_distinct) in (0u32..5).zip(1usize..=5) {
            for t in 0..5u64 {
                let idx = (t as usize) % n_distinct;
                records.push(label("m", PromptKind::Short, iter, t, &format!("d{idx}")));
            }
        }
        let view = LabelView::from_records(&records);
        let stat = distinct_label_stat(&view, &g).unwrap();
        assert_eq!(stat.mean, 3.0);
        assert_abs_diff_eq!(stat.ci95.lo, 1.037, epsilon = 1e-3);
        assert_abs_diff_eq!(stat.ci95.hi, 4.963, epsilon = 1e-3);
    }

    #[test]
    fn statistics_are_order_invariant() {
        let g = GroupKey::new("m", PromptKind::Short);
        let mut records = Vec::new();
        for iter in 0..4 {
            for t in 0..6u64 {
                records.push(label(
                    "m",
                    PromptKind::Short,
                    iter,
                    t,
                    &format!("w{}", (t + u64::from(iter)) % 3),
                ));
            }
        }
        let forward = LabelView::from_records(&records);
        let mut reversed = records.clone();
        reversed.reverse();
        let backward = LabelView::from_records(&reversed);

        let a = distinct_label_stat(&forward, &g).unwrap();
        let b = distinct_label_stat(&backward, &g).unwrap();
        assert_eq!(a.per_iteration_counts, b.per_iteration_counts);
        assert_eq!(a.mean, b.mean);

        let a = stability_stat(&forward, &g).unwrap();
        let b = stability_stat(&backward, &g).unwrap();
        assert_eq!(a.per_topic_counts, b.per_topic_counts);
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn constant_label_matrix_is_all_ones() {
        let mut records = Vec::new();
        for backend in ["a", "b"] {
            for kind in PromptKind::ALL {
                for iter in 0..3 {
                    for t in 0..2u64 {
                        records.push(label(backend, kind, iter, t, "carbon"));
                    }
                }
            }
        }
        let view = LabelView::from_records(&records);
        let m = similarity_matrix(&view, &hash_embedder()).unwrap();
        assert_eq!(m.axis.len(), 4);
        for row in &m.values {
            for entry in row {
                assert_eq!(*entry, Some(1.0));
            }
        }
    }

    #[test]
    fn matrix_is_exactly_symmetric_with_entries_in_range() {
        let mut records = Vec::new();
        let words = ["soil", "carbon", "forest worms", "fauna", "ecosystem"];
        for (bi, backend) in ["a", "b"].iter().enumerate() {
            for kind in PromptKind::ALL {
                for iter in 0..4u32 {
                    for t in 0..3u64 {
                        let w = words[(bi + iter as usize + t as usize) % words.len()];
                        records.push(label(backend, kind, iter, t, w));
                    }
                }
            }
        }
        let view = LabelView::from_records(&records);
        let m = similarity_matrix(&view, &hash_embedder()).unwrap();
        for i in 0..m.axis.len() {
            for j in 0..m.axis.len() {
                assert_eq!(m.values[i][j], m.values[j][i]);
                if let Some(v) = m.values[i][j] {
                    assert!((-1.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn singleton_topics_leave_diagonal_undefined() {
        // one label per topic: no within-group pairs anywhere
        let records = vec![
            label("a", PromptKind::Short, 0, 1, "x"),
            label("b", PromptKind::Short, 0, 1, "y"),
        ];
        let view = LabelView::from_records(&records);
        let e = hash_embedder();
        let m = similarity_matrix(&view, &e).unwrap();
        assert_eq!(m.values[0][0], None);
        assert_eq!(m.values[1][1], None);
        let expected =
            crate::embed::cosine(&e.embed("x").unwrap(), &e.embed("y").unwrap()).unwrap();
        assert_eq!(m.values[0][1], Some(expected));
        assert_eq!(m.topic_counts[0][1], 1);
    }

    #[test]
    fn group_ordering_is_lexicographic() {
        let records = vec![
            label("zeta", PromptKind::Short, 0, 1, "x"),
            label("alpha", PromptKind::Long, 0, 1, "x"),
            label("alpha", PromptKind::Short, 0, 1, "x"),
        ];
        let view = LabelView::from_records(&records);
        let keys = view.group_keys();
        let shown: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
        assert_eq!(shown, vec!["alpha:long", "alpha:short", "zeta:short"]);
    }
}
