mod common;

use rand::Rng;

use vampnet::baselines::{chi2_pvalue, chi2_scan, chi2_statistic};
use vampnet::explain::{greedy_modularity_adj, modularity};
use vampnet::train::roc_auc;

#[test]
fn chi2_tables_and_statistics_match_brute_force() {
    let cohort = common::random_presence_cohort(300, 1000, &mut common::rng(81));
    let rows = chi2_scan(&cohort).unwrap();
    assert_eq!(rows.len(), 1000);
    for r in &rows {
        assert_eq!(r.table, common::brute_table(&cohort, &r.token), "{}", r.token);
        match common::brute_chi2_fraction(&r.table) {
            Some((num, den)) => {
                let exact = num as f64 / den as f64;
                assert!((r.chi2 - exact).abs() <= 1e-13 * exact.max(1.0), "{} {} vs {}", r.token, r.chi2, exact);
            }
            None => assert_eq!(r.chi2, 0.0),
        }
    }
}

#[test]
fn chi2_pvalue_matches_erfc() {
    for k in 0..2000 {
        let x = k as f64 * 0.025;
        let want = if x == 0.0 { 1.0 } else { statrs::function::erf::erfc((x / 2.0).sqrt()) };
        let got = chi2_pvalue(x);
        // the reference erfc itself is only good to about 1e-10 relative
        assert!((got - want).abs() <= 1e-9 * want, "x={x} {got} vs {want}");
    }
    for (x, want) in [(0.5, 0.479_500_122_186_953_46), (2.0, 0.157_299_207_050_285_13), (8.0, 0.004_677_734_981_047_265_8)] {
        assert!((chi2_pvalue(x) - want).abs() <= 1e-14 * want, "x={x}");
    }
    // 3.841 is the 5% critical value, 10.828 the 0.1% one
    assert!((chi2_pvalue(3.841458820694124) - 0.05).abs() < 1e-12);
    assert!((chi2_pvalue(10.827566170662733) - 0.001).abs() < 1e-12);
}

#[test]
fn chi2_statistic_handles_degenerate_tables() {
    assert_eq!(chi2_statistic(&[0, 0, 5, 7]), 0.0);
    assert_eq!(chi2_statistic(&[5, 0, 7, 0]), 0.0);
    assert_eq!(chi2_statistic(&[10, 0, 0, 10]), 20.0);
}

#[test]
fn auc_matches_pairwise_oracle_exactly() {
    let mut r = common::rng(82);
    for _ in 0..1000 {
        let n = r.random_range(2..80);
        let coarse = r.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { r.random_range(0..5) as f64 } else { r.random::<f64>() })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
        let got = roc_auc(&scores, &labels);
        let want = common::pairwise_auc(&scores, &labels);
        assert_eq!(got.map(f64::to_bits), want.map(f64::to_bits), "{scores:?} {labels:?}");
    }
}

#[test]
fn greedy_modularity_matches_exhaustive_search() {
    let mut r = common::rng(83);
    for case in 0..100 {
        let (adj, n) = common::random_graph(&mut r);
        let p = greedy_modularity_adj(&adj, n);
        let best = common::exhaustive_max_q(&adj, n);
        assert!((p.q - best).abs() <= 1e-12, "graph {case}: greedy {} vs best {best}", p.q);
        assert!((p.q - modularity(&adj, n, &p.assignment)).abs() <= 1e-15);
    }
}

#[test]
fn modularity_of_two_cliques() {
    // two triangles joined by one edge
    let n = 6;
    let mut adj = vec![0.0; n * n];
    for &(i, j) in &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)] {
        adj[i * n + j] = 1.0;
        adj[j * n + i] = 1.0;
    }
    let p = greedy_modularity_adj(&adj, n);
    assert_eq!(p.assignment, vec![0, 0, 0, 1, 1, 1]);
    assert!((p.q - 5.0 / 14.0).abs() < 1e-12);
}
