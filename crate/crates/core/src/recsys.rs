//! Cold-start recommendation: endogenous-intensity ranking and top-N
//! evaluation.
//!
//! For a user with history `H`, items are ranked by the endogenous score
//! `sum_{(t_i, c_i) in H} phi_{c c_i}(t - t_i)`; the exogenous term is
//! deliberately excluded because per-user intensities learned from a handful
//! of events are unreliable. Users with an empty history fall back to their
//! learned exogenous column.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Event, EventSequence, ModelParams};
use crate::pipeline::{run_strategy, PipelineConfig};

/// A cold-start evaluation dataset: short train histories, held-out test
/// item sets, and the id mappings back to the raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecDataset {
    /// Catalog size `C`.
    pub catalog: usize,
    /// Train sequences; agent `i` is user `user_ids[i]`.
    pub train: Dataset,
    /// Held-out items per user, aligned with `train.sequences`.
    pub test_sets: Vec<BTreeSet<usize>>,
    pub user_ids: Vec<String>,
    /// Entity index to raw item id.
    pub item_ids: Vec<String>,
    /// Query time for recommendations (the train horizon).
    pub split_time: f64,
}

/// Per-user precision/recall/F1 at N, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Ranked lists plus per-user and macro-averaged metrics, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecResult {
    pub n: usize,
    pub lists: Vec<Vec<usize>>,
    pub per_user: Vec<UserMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub evaluated_users: usize,
    pub skipped_users: usize,
}

/// Ranks entities by descending endogenous intensity at time `t` given the
/// user's history; ties break toward the smaller entity index. Returns the
/// top `n` (clamped to the catalog size). An empty history falls back to the
/// user's learned exogenous column.
pub fn recommend(
    params: &ModelParams,
    history: &EventSequence,
    t: f64,
    n: usize,
) -> Result<Vec<usize>> {
    if history.agent >= params.m() {
        return Err(Error::Dimension(format!(
            "agent {} out of range for M={}",
            history.agent,
            params.m()
        )));
    }
    let c_dim = params.c();
    let scores = if history.is_empty() {
        (0..c_dim).map(|c| params.u()[[c, history.agent]]).collect::<Vec<f64>>()
    } else {
        endogenous_scores(params, history.events(), t)
    };
    Ok(rank_descending(&scores, n.min(c_dim)))
}

/// The endogenous score of every candidate entity.
pub fn endogenous_scores(params: &ModelParams, history: &[Event], t: f64) -> Vec<f64> {
    let c_dim = params.c();
    let mut scores = vec![0.0; c_dim];
    for e in history {
        let lag = t - e.time;
        if lag < 0.0 {
            continue;
        }
        for l in 0..params.l() {
            let g = params.basis().eval(l, lag);
            if g == 0.0 {
                continue;
            }
            for (c, s) in scores.iter_mut().enumerate() {
                *s += params.a()[[c, e.entity, l]] * g;
            }
        }
    }
    scores
}

fn rank_descending(scores: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Macro-averaged top-N precision, recall, and F1 in percent:
/// `P = |r ∩ t| / |r| * 100`, `R = |r ∩ t| / |t| * 100`,
/// `F1 = 2 P R / (P + R)` (zero when `P + R = 0`). Users with an empty truth
/// set are excluded with a warning.
pub fn evaluate_topn(
    results: &[Vec<usize>],
    truth: &[BTreeSet<usize>],
    n: usize,
) -> Result<RecResult> {
    if results.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} ranked lists but {} truth sets",
            results.len(),
            truth.len()
        )));
    }
    let mut per_user = Vec::new();
    let mut lists = Vec::new();
    let mut skipped = 0usize;
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for (list, t_set) in results.iter().zip(truth) {
        if t_set.is_empty() {
            log::warn!("user with empty truth set excluded from evaluation");
            skipped += 1;
            continue;
        }
        let hits = list.iter().filter(|c| t_set.contains(c)).count() as f64;
        let precision = if list.is_empty() { 0.0 } else { hits / list.len() as f64 * 100.0 };
        let recall = hits / t_set.len() as f64 * 100.0;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
        per_user.push(UserMetrics { precision, recall, f1 });
        lists.push(list.clone());
    }
    let count = per_user.len();
    let denom = count.max(1) as f64;
    Ok(RecResult {
        n,
        lists,
        per_user,
        precision: p_sum / denom,
        recall: r_sum / denom,
        f1: f_sum / denom,
        evaluated_users: count,
        skipped_users: skipped,
    })
}

/// One raw interaction row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub user: String,
    pub item: String,
    /// Epoch seconds (or any consistent unit; see `SplitConfig::time_scale`).
    pub time: f64,
    pub rating: Option<f64>,
}

/// Windows and filters of the cold-start split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Train window `[train_start, train_end)` in raw time units.
    pub train_start: f64,
    pub train_end: f64,
    /// Test window `[test_start, test_end)`.
    pub test_start: f64,
    pub test_end: f64,
    /// Keep users with at most this many train-window events.
    pub max_train_events: usize,
    /// Drop events whose rating exists and falls below this.
    pub min_rating: Option<f64>,
    /// Keep items with strictly more raw interactions than this.
    pub min_item_support: usize,
    /// Raw time units per model time unit (e.g. 86400 maps epoch seconds to
    /// days).
    pub time_scale: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_start: 0.0,
            train_end: 0.0,
            test_start: 0.0,
            test_end: 0.0,
            max_train_events: 5,
            min_rating: Some(4.0),
            min_item_support: 40,
            time_scale: 86_400.0,
        }
    }
}

/// Builds a [`RecDataset`] from raw interactions: items need more than
/// `min_item_support` interactions, low-rated events are dropped where a
/// rating exists, and a user survives with at most `max_train_events` events
/// in the train window and at least one in the test window.
pub fn coldstart_split(raw: &[RawEvent], cfg: &SplitConfig) -> Result<RecDataset> {
    if !(cfg.train_start < cfg.train_end
        && cfg.train_end <= cfg.test_start
        && cfg.test_start < cfg.test_end)
    {
        return Err(Error::Config("split windows must be disjoint and ordered".into()));
    }
    if cfg.time_scale <= 0.0 {
        return Err(Error::Config("time_scale must be positive".into()));
    }

    // item support over all raw interactions
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    for e in raw {
        *support.entry(e.item.as_str()).or_insert(0) += 1;
    }
    let kept_items: BTreeSet<&str> = support
        .iter()
        .filter(|(_, &n)| n > cfg.min_item_support)
        .map(|(&item, _)| item)
        .collect();

    let rating_ok = |e: &RawEvent| match (cfg.min_rating, e.rating) {
        (Some(min), Some(r)) => r >= min,
        _ => true,
    };

    // per-user train/test events over the retained items
    let mut users: BTreeMap<&str, (Vec<&RawEvent>, Vec<&RawEvent>)> = BTreeMap::new();
    for e in raw {
        if !kept_items.contains(e.item.as_str()) || !rating_ok(e) {
            continue;
        }
        let entry = users.entry(e.user.as_str()).or_default();
        if (cfg.train_start..cfg.train_end).contains(&e.time) {
            entry.0.push(e);
        } else if (cfg.test_start..cfg.test_end).contains(&e.time) {
            entry.1.push(e);
        }
    }

    let item_ids: Vec<String> = kept_items.iter().map(|s| s.to_string()).collect();
    let item_index: BTreeMap<&str, usize> =
        item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let horizon = (cfg.train_end - cfg.train_start) / cfg.time_scale;
    let mut sequences = Vec::new();
    let mut test_sets = Vec::new();
    let mut user_ids = Vec::new();
    for (user, (train, test)) in users {
        if train.len() > cfg.max_train_events || test.is_empty() {
            continue;
        }
        let mut events: Vec<Event> = train
            .iter()
            .map(|e| {
                Event::new((e.time - cfg.train_start) / cfg.time_scale, item_index[e.item.as_str()])
            })
            .collect();
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.entity.cmp(&b.entity)));
        let agent = sequences.len();
        sequences.push(EventSequence::new(agent, events, horizon)?);
        test_sets.push(test.iter().map(|e| item_index[e.item.as_str()]).collect());
        user_ids.push(user.to_string());
    }

    let catalog = item_ids.len();
    if catalog == 0 || sequences.is_empty() {
        return Ok(RecDataset {
            catalog: catalog.max(1),
            train: Dataset::new(catalog.max(1), horizon, vec![])?,
            test_sets: vec![],
            user_ids: vec![],
            item_ids,
            split_time: horizon,
        });
    }
    let train = Dataset::new(catalog, horizon, sequences)?;
    Ok(RecDataset { catalog, train, test_sets, user_ids, item_ids, split_time: horizon })
}

/// Fits the configured strategy on the train sequences, recommends `n` items
/// per user at the split time, and evaluates against the held-out sets.
pub fn train_and_recommend(
    dataset: &RecDataset,
    cfg: &PipelineConfig,
    n: usize,
) -> Result<RecResult> {
    if dataset.train.sequences.is_empty() {
        return Err(Error::Invalid("cold-start dataset has no evaluable users".into()));
    }
    let report = run_strategy(&dataset.train, cfg)?;
    let mut lists = Vec::with_capacity(dataset.train.sequences.len());
    for seq in &dataset.train.sequences {
        lists.push(recommend(&report.params, seq, dataset.split_time, n)?);
    }
    evaluate_topn(&lists, &dataset.test_sets, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelBasis;
    use approx::assert_relative_eq;
    use ndarray::{arr2, Array2, Array3};

    fn planted_params(c: usize) -> ModelParams {
        // entity c' most strongly triggers entity (c' + 1) mod C
        let basis = KernelBasis::single_exponential(1.0).unwrap();
        let mut a = Array3::zeros((c, c, 1));
        for src in 0..c {
            for dst in 0..c {
                a[[dst, src, 0]] = if dst == (src + 1) % c { 0.8 } else { 0.01 };
            }
        }
        let u = Array2::from_elem((c, 1), 0.1);
        ModelParams::new(u, a, basis).unwrap()
    }

    #[test]
    fn top1_matches_brute_force_argmax() {
        let params = planted_params(6);
        let seq = EventSequence::new(0, vec![Event::new(1.0, 2)], 2.0).unwrap();
        let got = recommend(&params, &seq, 1.1, 1).unwrap();
        // brute force over all candidates
        let mut best = (0usize, f64::MIN);
        for c in 0..6 {
            let score = params.a()[[c, 2, 0]] * params.basis().eval(0, 0.1);
            if score > best.1 {
                best = (c, score);
            }
        }
        assert_eq!(got, vec![best.0]);
        assert_eq!(got, vec![3]);
    }

    #[test]
    fn zero_tensor_falls_back_to_index_order() {
        let basis = KernelBasis::single_exponential(1.0).unwrap();
        let params = ModelParams::new(
            Array2::from_elem((4, 1), 0.1),
            Array3::zeros((4, 4, 1)),
            basis,
        )
        .unwrap();
        let seq = EventSequence::new(0, vec![Event::new(0.5, 2)], 1.0).unwrap();
        assert_eq!(recommend(&params, &seq, 1.0, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn ranking_invariant_to_positive_rescaling() {
        let params = planted_params(5);
        let seq = EventSequence::new(
            0,
            vec![Event::new(0.3, 1), Event::new(0.8, 4)],
            2.0,
        )
        .unwrap();
        let base = recommend(&params, &seq, 1.0, 5).unwrap();
        let scaled = ModelParams::new(
            params.u().clone(),
            params.a().clone() * 3.7,
            params.basis().clone(),
        )
        .unwrap();
        assert_eq!(recommend(&scaled, &seq, 1.0, 5).unwrap(), base);
    }

    #[test]
    fn top_n_clamps_to_catalog() {
        let params = planted_params(3);
        let seq = EventSequence::new(0, vec![Event::new(0.1, 0)], 1.0).unwrap();
        assert_eq!(recommend(&params, &seq, 0.5, 10).unwrap().len(), 3);
    }

    #[test]
    fn empty_history_ranks_by_exogenous_column() {
        let basis = KernelBasis::single_exponential(1.0).unwrap();
        let u = arr2(&[[0.1], [0.9], [0.5]]);
        let params = ModelParams::new(u, Array3::zeros((3, 3, 1)), basis).unwrap();
        let seq = EventSequence::new(0, vec![], 1.0).unwrap();
        assert_eq!(recommend(&params, &seq, 1.0, 3).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn metrics_match_hand_computed_fixture() {
        // 2 hits out of 5 recommended, 4 relevant
        let results = vec![vec![0, 1, 2, 3, 4]];
        let truth = vec![BTreeSet::from([0, 1, 7, 8])];
        let out = evaluate_topn(&results, &truth, 5).unwrap();
        assert_relative_eq!(out.precision, 40.0);
        assert_relative_eq!(out.recall, 50.0);
        assert_relative_eq!(out.f1, 2.0 * 40.0 * 50.0 / 90.0, max_relative = 1e-12);
        assert!((out.f1 - 44.44).abs() < 0.01);
    }

    #[test]
    fn perfect_and_empty_overlap() {
        let results = vec![vec![3, 5]];
        let truth = vec![BTreeSet::from([3, 5])];
        let out = evaluate_topn(&results, &truth, 2).unwrap();
        assert_eq!((out.precision, out.recall, out.f1), (100.0, 100.0, 100.0));

        let truth = vec![BTreeSet::from([8, 9])];
        let out = evaluate_topn(&results, &truth, 2).unwrap();
        assert_eq!((out.precision, out.recall, out.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn precision_times_n_is_mean_hit_count() {
        let results = vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]];
        let truth = vec![
            BTreeSet::from([0, 5]),
            BTreeSet::from([3, 4, 5]),
            BTreeSet::from([0]),
        ];
        let out = evaluate_topn(&results, &truth, 3).unwrap();
        let mean_hits = (1.0 + 3.0 + 0.0) / 3.0;
        assert_relative_eq!(out.precision * 3.0 / 100.0, mean_hits, max_relative = 1e-12);
    }

    #[test]
    fn evaluation_is_permutation_invariant() {
        let results = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let truth = vec![
            BTreeSet::from([0]),
            BTreeSet::from([9]),
            BTreeSet::from([4, 5]),
        ];
        let a = evaluate_topn(&results, &truth, 2).unwrap();
        let results_p = vec![results[2].clone(), results[0].clone(), results[1].clone()];
        let truth_p = vec![truth[2].clone(), truth[0].clone(), truth[1].clone()];
        let b = evaluate_topn(&results_p, &truth_p, 2).unwrap();
        assert_eq!((a.precision, a.recall, a.f1), (b.precision, b.recall, b.f1));
    }

    #[test]
    fn empty_truth_sets_are_excluded() {
        let results = vec![vec![0], vec![1]];
        let truth = vec![BTreeSet::new(), BTreeSet::from([1])];
        let out = evaluate_topn(&results, &truth, 1).unwrap();
        assert_eq!(out.evaluated_users, 1);
        assert_eq!(out.skipped_users, 1);
        assert_eq!(out.precision, 100.0);
    }

    fn raw(user: &str, item: &str, time: f64, rating: Option<f64>) -> RawEvent {
        RawEvent { user: user.into(), item: item.into(), time, rating }
    }

    fn split_cfg() -> SplitConfig {
        SplitConfig {
            train_start: 0.0,
            train_end: 100.0,
            test_start: 100.0,
            test_end: 200.0,
            max_train_events: 5,
            min_rating: Some(4.0),
            min_item_support: 2,
            time_scale: 10.0,
        }
    }

    #[test]
    fn split_applies_user_and_item_filters() {
        let mut raw_events = Vec::new();
        // item "a" and "b" get enough support; "rare" does not
        for i in 0..3 {
            raw_events.push(raw("filler", "a", 300.0 + i as f64, Some(5.0)));
            raw_events.push(raw("filler", "b", 300.0 + i as f64, Some(5.0)));
        }
        // user kept: 2 train events, 1 test event
        raw_events.push(raw("kept", "a", 10.0, Some(5.0)));
        raw_events.push(raw("kept", "b", 20.0, Some(4.0)));
        raw_events.push(raw("kept", "a", 150.0, Some(5.0)));
        // user with six train events: excluded
        for i in 0..6 {
            raw_events.push(raw("busy", "a", 10.0 + i as f64, Some(5.0)));
        }
        raw_events.push(raw("busy", "a", 150.0, Some(5.0)));
        // user with no test events: excluded
        raw_events.push(raw("no_test", "a", 30.0, Some(5.0)));
        // low ratings dropped, leaving no test event for this user
        raw_events.push(raw("low", "a", 15.0, Some(5.0)));
        raw_events.push(raw("low", "a", 160.0, Some(2.0)));
        // rare item events dropped entirely
        raw_events.push(raw("rare_fan", "rare", 12.0, Some(5.0)));
        raw_events.push(raw("rare_fan", "rare", 160.0, Some(5.0)));

        let ds = coldstart_split(&raw_events, &split_cfg()).unwrap();
        assert_eq!(ds.user_ids, vec!["kept".to_string()]);
        assert_eq!(ds.item_ids, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(ds.train.sequences[0].len(), 2);
        assert_eq!(ds.test_sets[0], BTreeSet::from([0]));
        // times rescaled by time_scale
        assert_relative_eq!(ds.train.sequences[0].events()[0].time, 1.0);
        assert_relative_eq!(ds.split_time, 10.0);
    }

    #[test]
    fn split_with_nothing_left_reports_empty() {
        let events = vec![raw("u", "x", 10.0, Some(5.0))];
        let ds = coldstart_split(&events, &split_cfg()).unwrap();
        assert!(ds.user_ids.is_empty());
        assert!(ds.train.sequences.is_empty());
    }

    #[test]
    fn split_rejects_bad_windows() {
        let cfg = SplitConfig { test_start: 50.0, ..split_cfg() };
        assert!(coldstart_split(&[], &cfg).is_err());
    }
}
