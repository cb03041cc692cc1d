use std::collections::BTreeSet;

use bagchain_core::chain::{AggregateRule, LearnerSpec, MetricRule, Task};
use bagchain_core::consensus::{ensemble_metric, train_base_model};
use bagchain_core::ml::{
    accuracy, aggregate, resample, split_dirichlet, split_iid, synthesize_dataset, train, Dataset, DatasetRole,
    DecisionTree, Heterogeneity, MetricFloor, Node, SplitPlan, TreeParams,
};
use bagchain_core::{HashDigest, NodeId};
use proptest::prelude::*;

/// Reference tree grown by trying every threshold on every feature and
/// recounting both sides from scratch each time.
#[derive(Debug, PartialEq)]
enum Oracle {
    Leaf(Vec<u32>),
    Split(usize, f64, Box<Oracle>, Box<Oracle>),
}

fn class_counts(data: &Dataset, rows: &[usize]) -> Vec<u32> {
    let mut c = vec![0u32; data.n_classes() as usize];
    for &r in rows {
        c[data.label(r) as usize] += 1;
    }
    c
}

/// Σc²/n as (numerator, denominator).
fn purity(counts: &[u32]) -> (u128, u128) {
    let n: u32 = counts.iter().sum();
    (counts.iter().map(|&c| u128::from(c).pow(2)).sum(), u128::from(n))
}

fn add(a: (u128, u128), b: (u128, u128)) -> (u128, u128) {
    (a.0 * b.1 + b.0 * a.1, a.1 * b.1)
}

fn greater(a: (u128, u128), b: (u128, u128)) -> bool {
    a.0 * b.1 > b.0 * a.1
}

fn oracle(data: &Dataset, rows: &[usize], depth: u32, p: &TreeParams) -> Oracle {
    let counts = class_counts(data, rows);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if depth >= p.max_depth || pure || (rows.len() as u32) < 2 * p.min_leaf {
        return Oracle::Leaf(counts);
    }
    let mut best: Option<((u128, u128), usize, f64)> = None;
    let parent = purity(&counts);
    for f in 0..data.n_features() {
        let mut values: Vec<f64> = rows.iter().map(|&r| data.value(r, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mid = w[0] + (w[1] - w[0]) / 2.0;
            let t = if mid >= w[0] && mid < w[1] { mid } else { w[0] };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.value(i, f) <= t);
            if (l.len() as u32) < p.min_leaf || (r.len() as u32) < p.min_leaf {
                continue;
            }
            let score = add(purity(&class_counts(data, &l)), purity(&class_counts(data, &r)));
            if !greater(score, parent) {
                continue;
            }
            if best.is_none_or(|(b, _, _)| greater(score, b)) {
                best = Some((score, f, t));
            }
        }
    }
    match best {
        None => Oracle::Leaf(counts),
        Some((_, f, t)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.value(i, f) <= t);
            Oracle::Split(
                f,
                t,
                Box::new(oracle(data, &l, depth + 1, p)),
                Box::new(oracle(data, &r, depth + 1, p)),
            )
        }
    }
}

fn flatten(o: &Oracle, out: &mut Vec<Node>) {
    match o {
        Oracle::Leaf(c) => out.push(Node::Leaf { counts: c.clone() }),
        Oracle::Split(f, t, l, r) => {
            let at = out.len();
            out.push(Node::Split {
                feature: *f as u32,
                threshold: *t,
                left: at as u32 + 1,
                right: 0,
            });
            flatten(l, out);
            let right = out.len() as u32;
            if let Node::Split { right: slot, .. } = &mut out[at] {
                *slot = right;
            }
            flatten(r, out);
        }
    }
}

fn halves(data: &Dataset, train_len: usize) -> (Dataset, Dataset) {
    let rows: Vec<usize> = (0..data.len()).collect();
    (
        data.subset(&rows[..train_len], DatasetRole::PublicTrain),
        data.subset(&rows[train_len..], DatasetRole::Test),
    )
}

fn majority_share(data: &Dataset) -> f64 {
    *data.class_counts().iter().max().unwrap() as f64 / data.len() as f64
}

#[test]
fn cart_matches_exhaustive_oracle() {
    let params = TreeParams {
        max_depth: 6,
        min_leaf: 5,
    };
    for seed in 0..3 {
        let blobs = synthesize_dataset(500, 5, 2, 0.6, seed).unwrap();
        let (train_set, test_set) = halves(&blobs, 400);
        let tree = train(&train_set, &params).unwrap();
        let mut expected = Vec::new();
        let all: Vec<usize> = (0..train_set.len()).collect();
        flatten(&oracle(&train_set, &all, 0, &params), &mut expected);
        assert_eq!(tree.nodes(), expected.as_slice(), "seed {seed}");
        assert!(tree.depth() <= 6);
        let acc = accuracy(&tree.predict(&test_set), test_set.labels()).unwrap();
        assert!(acc.as_f64() > majority_share(&test_set), "seed {seed}: {acc:?}");
    }
}

#[test]
fn well_separated_blobs_need_one_split() {
    let blobs = synthesize_dataset(400, 3, 2, 50.0, 9).unwrap();
    let (a, b) = halves(&blobs, 300);
    let stump = train(
        &a,
        &TreeParams {
            max_depth: 1,
            min_leaf: 1,
        },
    )
    .unwrap();
    assert!(accuracy(&stump.predict(&b), b.labels()).unwrap().as_f64() >= 0.99);
}

#[test]
fn unseparated_blobs_are_guesswork() {
    let mut total = 0.0;
    for seed in 0..10 {
        let blobs = synthesize_dataset(2000, 4, 4, 0.0, seed).unwrap();
        let (a, b) = halves(&blobs, 1000);
        let tree = train(&a, &TreeParams::default()).unwrap();
        total += accuracy(&tree.predict(&b), b.labels()).unwrap().as_f64();
    }
    assert!((total / 10.0 - 0.25).abs() < 0.03, "{}", total / 10.0);
}

#[test]
fn bootstrap_keeps_about_63_percent_of_rows() {
    let n = 1000;
    let data = Dataset::new(
        (0..n).map(|i| i as f64).collect(),
        vec![0; n],
        1,
        1,
        DatasetRole::Source,
    )
    .unwrap();
    let mut fraction = 0.0;
    for seed in 0..1000 {
        let s = resample(&data, seed).unwrap();
        assert_eq!(s.len(), n);
        let distinct: BTreeSet<u64> = (0..n).map(|i| s.value(i, 0) as u64).collect();
        fraction += distinct.len() as f64 / n as f64;
    }
    let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
    assert!((fraction / 1000.0 - expected).abs() < 0.02);
}

#[test]
fn bagging_beats_a_single_tree_on_average() {
    let params = TreeParams {
        max_depth: 8,
        min_leaf: 5,
    };
    let (mut single, mut bagged) = (0.0, 0.0);
    for seed in 0..10 {
        let blobs = synthesize_dataset(2000, 8, 4, 0.8, seed).unwrap();
        let (public, test) = halves(&blobs, 1000);
        let one = train(&public, &params).unwrap();
        single += accuracy(&one.predict(&test), test.labels()).unwrap().as_f64();
        let trees: Vec<DecisionTree> = (0..10)
            .map(|k| train(&resample(&public, seed * 100 + k).unwrap(), &params).unwrap())
            .collect();
        let refs: Vec<&DecisionTree> = trees.iter().collect();
        bagged += ensemble_metric(&refs, &test).unwrap().as_f64();
    }
    assert!(bagged >= single, "bagged {bagged} single {single}");
}

fn task(params: TreeParams) -> Task {
    Task {
        train_commit: HashDigest::of(b"t"),
        val_commit: HashDigest::of(b"v"),
        test_commit: HashDigest::of(b"e"),
        learner: LearnerSpec::Cart(params),
        aggregate: AggregateRule::MajorityVote,
        metric: MetricRule::Accuracy,
        metric_min: MetricFloor::from_ppm(0).unwrap(),
        fee: 100,
        requester: NodeId(99),
    }
}

/// Per-class recall of `tree` on `data`.
fn recall(tree: &DecisionTree, data: &Dataset) -> Vec<f64> {
    let pred = tree.predict(data);
    let mut hit = vec![0.0; data.n_classes() as usize];
    let mut all = vec![0.0; data.n_classes() as usize];
    for (p, &y) in pred.iter().zip(data.labels()) {
        all[y as usize] += 1.0;
        if *p == y {
            hit[y as usize] += 1.0;
        }
    }
    hit.iter().zip(&all).map(|(h, a)| h / a).collect()
}

#[test]
fn private_classes_raise_own_recall() {
    let blobs = synthesize_dataset(6000, 6, 4, 0.7, 21).unwrap();
    let rows: Vec<usize> = (0..blobs.len()).collect();
    let public = blobs.subset(&rows[..400], DatasetRole::PublicTrain);
    let test = blobs.subset(&rows[400..2400], DatasetRole::Test);
    let rest = &rows[2400..];
    let own = |classes: [u32; 2]| {
        let picked: Vec<usize> = rest
            .iter()
            .copied()
            .filter(|&r| classes.contains(&blobs.label(r)))
            .collect();
        blobs.subset(&picked, DatasetRole::Private)
    };
    let t = task(TreeParams::default());
    let a = train_base_model(&public, &own([0, 1]), &t, 1, NodeId(0)).unwrap();
    let b = train_base_model(&public, &own([2, 3]), &t, 1, NodeId(1)).unwrap();
    let (ra, rb) = (recall(&a.tree, &test), recall(&b.tree, &test));
    for k in 0..2 {
        assert!(ra[k] > rb[k], "class {k}: {ra:?} vs {rb:?}");
        assert!(rb[k + 2] > ra[k + 2], "class {}: {ra:?} vs {rb:?}", k + 2);
    }
}

#[test]
fn reference_split_sizes() {
    for (n, public, private) in [(60_000, 24_000, 3_600), (50_000, 20_000, 3_000)] {
        let data = Dataset::new(
            vec![0.0; n],
            (0..n).map(|i| (i % 10) as u32).collect(),
            1,
            10,
            DatasetRole::Source,
        )
        .unwrap();
        let plan = SplitPlan {
            kappa: 0.4,
            zeta: 0.06,
            partitions: 10,
            heterogeneity: Heterogeneity::Iid,
            seed: 5,
        };
        let (d_t, parts) = split_iid(&data, &plan).unwrap();
        assert_eq!(d_t.len(), public);
        assert_eq!(parts.len(), 10);
        assert!(parts.iter().all(|p| p.len() == private));
    }
}

fn labelled(n: usize, classes: u32) -> Dataset {
    Dataset::new(
        (0..n).map(|i| i as f64).collect(),
        (0..n).map(|i| (i % classes as usize) as u32).collect(),
        1,
        classes,
        DatasetRole::Source,
    )
    .unwrap()
}

fn dirichlet(beta: f64, seed: u64) -> SplitPlan {
    SplitPlan {
        kappa: 0.4,
        zeta: 0.0,
        partitions: 10,
        heterogeneity: Heterogeneity::Dirichlet { beta },
        seed,
    }
}

#[test]
fn huge_beta_is_nearly_uniform() {
    let data = labelled(20_000, 10);
    for seed in 0..100 {
        let (_, parts) = split_dirichlet(&data, &dirichlet(1e6, seed), 10).unwrap();
        for part in &parts {
            for c in part.class_counts() {
                let share = c as f64 / part.len() as f64;
                assert!((share - 0.1).abs() <= 0.02, "seed {seed}: {share}");
            }
        }
    }
}

#[test]
fn half_beta_skews_label_histograms() {
    let data = labelled(20_000, 10);
    let (mut over_30, mut over_40, mut total) = (0, 0, 0);
    for seed in 0..100 {
        let (_, parts) = split_dirichlet(&data, &dirichlet(0.5, seed), 10).unwrap();
        for part in &parts {
            let share = majority_share(part);
            total += 1;
            over_30 += usize::from(share > 0.3);
            over_40 += usize::from(share > 0.4);
        }
    }
    // Monte-Carlo of per-class Dir_10(0.5) columns: P(max share > 0.3) ≈ 0.65,
    // P(max share > 0.4) ≈ 0.26. A uniform split sits near 0.1.
    let (f30, f40) = (over_30 as f64 / total as f64, over_40 as f64 / total as f64);
    assert!(f30 > 0.5, "{f30}");
    assert!((f40 - 0.26).abs() < 0.08, "{f40}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dirichlet_conserves_every_class(beta in 0.05f64..20.0, seed in any::<u64>(), miners in 1usize..12, n in 200usize..1500) {
        let data = labelled(n, 5);
        let plan = dirichlet(beta, seed);
        let Ok((public, parts)) = split_dirichlet(&data, &plan, miners) else {
            // tiny β can starve a miner; the error path is exercised elsewhere
            return Ok(());
        };
        prop_assert_eq!(parts.len(), miners);
        let mut seen: Vec<u64> = public.labels().iter().enumerate().map(|(i, _)| public.value(i, 0) as u64).collect();
        let mut per_class = public.class_counts();
        for p in &parts {
            prop_assert!(!p.is_empty());
            for (k, c) in p.class_counts().into_iter().enumerate() {
                per_class[k] += c;
            }
            seen.extend((0..p.len()).map(|i| p.value(i, 0) as u64));
        }
        prop_assert_eq!(per_class, data.class_counts());
        let distinct: BTreeSet<u64> = seen.iter().copied().collect();
        prop_assert_eq!(distinct.len(), n, "parts are disjoint and cover the data");
    }

    #[test]
    fn iid_parts_are_disjoint_with_exact_sizes(n in 100usize..3000, kappa in 0.05f64..0.6, zeta in 0.0f64..0.05, phi in 1usize..8, seed in any::<u64>()) {
        let data = labelled(n, 3);
        let plan = SplitPlan { kappa, zeta, partitions: phi, heterogeneity: Heterogeneity::Iid, seed };
        let (public, parts) = split_iid(&data, &plan).unwrap();
        prop_assert_eq!(public.len(), (kappa * n as f64 + 1e-9).floor() as usize);
        let mut seen = BTreeSet::new();
        for i in 0..public.len() {
            prop_assert!(seen.insert(public.value(i, 0) as u64));
        }
        for p in &parts {
            prop_assert_eq!(p.len(), (zeta * n as f64 + 1e-9).floor() as usize);
            for i in 0..p.len() {
                prop_assert!(seen.insert(p.value(i, 0) as u64));
            }
        }
    }

    #[test]
    fn vote_ignores_model_order(preds in proptest::collection::vec(proptest::collection::vec(0u32..4, 12), 1..7), rot in 0usize..7) {
        let views: Vec<&[u32]> = preds.iter().map(Vec::as_slice).collect();
        let mut rotated = views.clone();
        rotated.rotate_left(rot % views.len());
        rotated.reverse();
        prop_assert_eq!(aggregate(&views, 4).unwrap(), aggregate(&rotated, 4).unwrap());
    }

    #[test]
    fn training_is_deterministic(seed in 0u64..1000) {
        let blobs = synthesize_dataset(300, 3, 3, 1.0, seed).unwrap();
        let a = train(&blobs, &TreeParams::default()).unwrap();
        let b = train(&blobs, &TreeParams::default()).unwrap();
        prop_assert_eq!(bagchain_core::ml::model_hash_of(&a, NodeId(1)), bagchain_core::ml::model_hash_of(&b, NodeId(1)));
        prop_assert_eq!(a, b);
    }
}
