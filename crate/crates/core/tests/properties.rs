mod common;

use proptest::prelude::*;

use vampnet::baselines::{chi2_pvalue, chi2_select, chi2_statistic, MlpBaseline};
use vampnet::checkpoint::{AnyModel, Checkpoint};
use vampnet::cohort::CohortStats;
use vampnet::config::RunConfig;
use vampnet::engine::{Graph, Tensor, MASK_NEG};
use vampnet::explain::{greedy_modularity_adj, integrated_gradients_fn, modularity};
use vampnet::model::{fuse_values, FusionMode};
use vampnet::tokenizer::Vocabulary;
use vampnet::train::{class_weights_from_counts, roc_auc, stratified_split};
use vampnet::vcf::{VariantToken, N_CHANNELS};

fn fusion_mode() -> impl Strategy<Value = FusionMode> {
    prop_oneof![
        Just(FusionMode::Concat),
        Just(FusionMode::Suppression),
        Just(FusionMode::Amplification),
        Just(FusionMode::Adaptive),
    ]
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![-5.0..5.0f64, (-3i32..3).prop_map(f64::from)], n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

proptest! {
    #[test]
    fn gated_fusion_stays_in_its_band(zs in -50.0..50.0f64, zc in -50.0..50.0f64) {
        let sup = fuse_values(&[zs], &[zc], FusionMode::Suppression).unwrap()[0];
        let amp = fuse_values(&[zs], &[zc], FusionMode::Amplification).unwrap()[0];
        let ada = fuse_values(&[zs], &[zc], FusionMode::Adaptive).unwrap()[0];
        prop_assert!(sup.abs() <= zs.abs());
        prop_assert!(sup * zs >= 0.0);
        prop_assert!(amp.abs() >= zs.abs() && amp.abs() <= 2.0 * zs.abs());
        prop_assert!(amp * zs >= 0.0);
        prop_assert!(ada.abs() <= zs.abs());
        let g = 1.0 / (1.0 + (-zc).exp());
        if zs != 0.0 && g != 0.5 && ada != 0.0 {
            prop_assert_eq!(ada * zs < 0.0, g < 0.5);
        }
    }

    #[test]
    fn concat_keeps_both_inputs(a in prop::collection::vec(-9.0..9.0f64, 1..6), b in prop::collection::vec(-9.0..9.0f64, 1..6)) {
        let out = fuse_values(&a, &b, FusionMode::Concat).unwrap();
        prop_assert_eq!(&out[..a.len()], &a[..]);
        prop_assert_eq!(&out[a.len()..], &b[..]);
    }

    #[test]
    fn gated_fusion_rejects_unequal_widths(mode in fusion_mode(), n in 1usize..5) {
        let r = fuse_values(&vec![1.0; n], &vec![1.0; n + 1], mode);
        prop_assert_eq!(r.is_ok(), mode == FusionMode::Concat);
    }

    #[test]
    fn auc_matches_pairwise_count((scores, labels) in scored_labels()) {
        prop_assert_eq!(roc_auc(&scores, &labels).map(|a| (a * 1e12).round()),
            common::pairwise_auc(&scores, &labels).map(|a| (a * 1e12).round()));
    }

    #[test]
    fn auc_ignores_monotone_transforms((scores, labels) in scored_labels(), k in 0.1..4.0f64, c in -3.0..3.0f64) {
        let t: Vec<f64> = scores.iter().map(|s| (k * s + c).tanh() * 0.5 + s * 1e-3).collect();
        let a = roc_auc(&scores, &labels);
        let b = roc_auc(&t, &labels);
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn negated_scores_give_complementary_auc((scores, labels) in scored_labels()) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        if let (Some(a), Some(b)) = (roc_auc(&scores, &labels), roc_auc(&neg, &labels)) {
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chi2_is_symmetric_and_bounded(a in 0u64..200, b in 0u64..200, c in 0u64..200, d in 0u64..200) {
        let x = chi2_statistic(&[a, b, c, d]);
        let n = (a + b + c + d) as f64;
        prop_assert!(x >= 0.0 && x <= n + 1e-9);
        prop_assert!((x - chi2_statistic(&[b, a, d, c])).abs() <= 1e-9 * x.max(1.0));
        prop_assert!((x - chi2_statistic(&[c, d, a, b])).abs() <= 1e-9 * x.max(1.0));
        let p = chi2_pvalue(x);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn chi2_pvalue_is_decreasing(x in 0.0..60.0f64, dx in 1e-3..5.0f64) {
        prop_assert!(chi2_pvalue(x + dx) <= chi2_pvalue(x));
    }

    #[test]
    fn stratified_split_partitions_each_class(labels in prop::collection::vec(0u8..2, 0..200), seed in any::<u64>()) {
        let s = stratified_split(&labels, [0.7, 0.15, 0.15], seed);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for class in [0u8, 1] {
            let n = labels.iter().filter(|&&l| l == class).count() as f64;
            let k = s.train.iter().filter(|&&i| labels[i] == class).count() as f64;
            prop_assert!((k - 0.7 * n).abs() <= 0.5 + 1e-9);
        }
        prop_assert_eq!(s, stratified_split(&labels, [0.7, 0.15, 0.15], seed));
    }

    #[test]
    fn class_weights_balance_the_classes(n0 in 1usize..5000, n1 in 1usize..5000) {
        let w = class_weights_from_counts([n0, n1]).unwrap();
        prop_assert!((w[0] * n0 as f64 - w[1] * n1 as f64).abs() <= 1e-9 * (n0 + n1) as f64);
        prop_assert!(w[0] > 0.0 && w[1] > 0.0);
    }

    #[test]
    fn masked_softmax_rows_are_distributions(vals in prop::collection::vec(-20.0..20.0f64, 12), keep in prop::collection::vec(any::<bool>(), 4)) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3, 4], vals).unwrap());
        let mask: Vec<f64> = (0..12).map(|i| if keep[i % 4] { 0.0 } else { -MASK_NEG }).collect();
        let o = g.masked_softmax_rows(x, &Tensor::new(vec![3, 4], mask).unwrap()).unwrap();
        let p = g.value(o).data().to_vec();
        for r in 0..3 {
            let row = &p[r * 4..r * 4 + 4];
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            if keep.iter().any(|&k| k) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (j, v) in row.iter().enumerate() {
                    if !keep[j] {
                        prop_assert_eq!(*v, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn ig_is_exact_for_linear_functions(w in prop::collection::vec(-3.0..3.0f64, 6), x in prop::collection::vec(-3.0..3.0f64, 6), b in prop::collection::vec(-1.0..1.0f64, 6), steps in 1usize..40) {
        let wt = Tensor::new(vec![6], w.clone()).unwrap();
        let xt = Tensor::new(vec![6], x.clone()).unwrap();
        let bt = Tensor::new(vec![6], b.clone()).unwrap();
        let attr = integrated_gradients_fn(&xt, &bt, steps, |g, xs, _| {
            let wv = g.constant(wt.clone());
            let p = g.mul(xs, wv)?;
            g.mean_over_axis(p, 1).map(|m| g.scale(m, 6.0))
        }).unwrap();
        for i in 0..6 {
            prop_assert!((attr[i] - w[i] * (x[i] - b[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn greedy_modularity_is_consistent(seed in any::<u64>()) {
        let (adj, n) = common::random_graph(&mut common::rng(seed));
        let p = greedy_modularity_adj(&adj, n);
        prop_assert_eq!(p.assignment.len(), n);
        prop_assert!((p.q - modularity(&adj, n, &p.assignment)).abs() < 1e-12);
        let singletons: Vec<usize> = (0..n).collect();
        prop_assert!(p.q >= modularity(&adj, n, &singletons) - 1e-12);
        prop_assert!(p.q >= -1e-12);
        prop_assert!(p.q <= common::exhaustive_max_q(&adj, n) + 1e-12);
    }

    #[test]
    fn variant_tokens_round_trip(pos in 1u64..10_000_000, r in "[ACGT]{1,4}", a in "[ACGT]{1,4}") {
        prop_assume!(r != a);
        let t = VariantToken::new(pos, &r, &a).unwrap();
        let back: VariantToken = t.to_string().parse().unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn normalized_features_stay_in_unit_box(rows in prop::collection::vec(prop::array::uniform8(-1e4..1e4f64), 1..30), probe in prop::array::uniform8(-1e5..1e5f64)) {
        let stats = CohortStats::fit([(&rows[..], 1u8)]).unwrap();
        for r in rows.iter().chain([&probe]) {
            prop_assert!(stats.apply(r).iter().all(|v| (0.0..=1.0).contains(v)));
        }
        prop_assert_eq!(stats.apply(&stats.min), [0.0; N_CHANNELS]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chi2_selection_grows_with_alpha(seed in any::<u64>(), lo in 1e-6..0.5f64, f in 1.0..20.0f64) {
        let cohort = common::random_presence_cohort(80, 20, &mut common::rng(seed));
        let hi = (lo * f).min(1.0);
        let small: Vec<String> = chi2_select(&cohort, lo).unwrap().into_iter().map(|r| r.token).collect();
        let large: Vec<String> = chi2_select(&cohort, hi).unwrap().into_iter().map(|r| r.token).collect();
        prop_assert!(small.iter().all(|t| large.contains(t)));
    }

    #[test]
    fn config_echo_round_trips(emb in prop_oneof![Just(16usize), Just(32), Just(64)], heads in prop_oneof![Just(1usize), Just(2), Just(4)], dropout in 0.0..0.9f64, lr in 1e-5..1e-1f64, mode in fusion_mode(), path2 in any::<bool>(), budget in 0usize..9) {
        let mut c = RunConfig::default();
        c.sab.emb_dim = emb;
        c.sab.num_heads = heads;
        c.sab.dropout = dropout;
        c.train.learning_rate = lr;
        c.fusion = mode;
        c.path2 = path2;
        c.search_budget = budget;
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn checkpoints_round_trip_bit_exact(seed in any::<u64>(), hidden in 1usize..6, width in 1usize..8) {
        let mut config = RunConfig::default();
        config.mlp.hidden = vec![hidden];
        let model = MlpBaseline::new(config.mlp.clone(), width, seed).unwrap();
        let ck = Checkpoint {
            seed,
            model: AnyModel::Mlp(model),
            config,
            vocab: None,
            columns: (0..width).map(|i| common::token(i).to_string()).collect(),
        };
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        for ((_, a), (_, b)) in ck.model.params().iter().zip(back.model.params().iter()) {
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(back.to_text(), ck.to_text());
    }

    #[test]
    fn static_vocabulary_encodes_then_decodes(seed in any::<u64>()) {
        let cohort = common::random_presence_cohort(30, 12, &mut common::rng(seed));
        let v = Vocabulary::build_static(&cohort);
        for s in &cohort.samples {
            for t in &s.tokens {
                let ids = v.encode(t.canonical());
                prop_assert_eq!(ids.len(), 1);
                prop_assert_eq!(v.decode(&ids), t.canonical());
            }
        }
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), v.to_text());
    }
}
