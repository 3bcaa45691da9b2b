use urnphylo::harness::{initial_tree_independence, run_campaign, CampaignConfig, CampaignTest, Statistic};
use urnphylo::verify::{run_suite, Scale, Suite};
use urnphylo::Model;

#[test]
fn pda_caterpillar_and_balanced_seeds_agree() {
    let mut cfg = CampaignConfig::new(Model::Pda, 1000, 5000);
    cfg.base_seed = 11;
    let rep = initial_tree_independence(&cfg, &["caterpillar6".into(), "balanced6".into()]).unwrap();
    assert_eq!(rep.seeds.iter().map(|s| s.leaves).collect::<Vec<_>>(), vec![6, 6]);
    assert!(rep.pairs[0].mean_gap <= 3.0, "{rep:#?}");
    assert!(rep.passed, "{rep:#?}");
}

#[test]
fn identical_seeds_are_bit_identical() {
    let mut cfg = CampaignConfig::new(Model::Yhk, 200, 500);
    cfg.base_seed = 5;
    let rep = initial_tree_independence(&cfg, &["t2".into(), "(1,2);".into()]).unwrap();
    assert_eq!(rep.seeds[0].ab_mean, rep.seeds[1].ab_mean);
    assert_eq!(rep.seeds[0].ab_cov, rep.seeds[1].ab_cov);
    assert_eq!(rep.pairs[0].mean_gap, 0.0);
}

#[test]
fn unrooted_campaign_matches_limit() {
    let mut cfg = CampaignConfig::new(Model::Yhk, 1000, 4000);
    cfg.rooted = false;
    cfg.seed_tree = "star3".into();
    cfg.base_seed = 8;
    let res = run_campaign(&cfg).unwrap();
    assert!(res.passed, "{:#?}", res.tests);
    let edge = res.block(Statistic::EdgeVector).unwrap();
    for (m, r) in edge.per_leaf_mean.iter().zip(&edge.limit_rate) {
        assert!((m - r).abs() < 0.01);
    }
}

#[test]
fn sample_covariance_is_symmetric_psd() {
    let mut cfg = CampaignConfig::new(Model::Pda, 300, 1000);
    cfg.tests = vec![CampaignTest::Covariance];
    let res = run_campaign(&cfg).unwrap();
    for b in &res.blocks {
        let d = b.cov.len();
        for i in 0..d {
            for j in 0..d {
                assert_eq!(b.cov[i][j], b.cov[j][i]);
            }
        }
        let m = min_eigenvalue(&b.cov);
        assert!(m > -1e-9, "{m}");
    }
}

/// Smallest eigenvalue of a symmetric matrix, by power iteration on `cI - S`.
fn min_eigenvalue(s: &[Vec<f64>]) -> f64 {
    let d = s.len();
    let c: f64 = s.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut v = vec![1.0; d];
    let mut mu = 0.0;
    for _ in 0..5000 {
        let w: Vec<f64> = (0..d)
            .map(|i| c * v[i] - (0..d).map(|j| s[i][j] * v[j]).sum::<f64>())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return c;
        }
        mu = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    c - mu
}

#[test]
fn quick_verify_suites() {
    for suite in [Suite::Spectral, Suite::Urn, Suite::Yhk, Suite::Pda] {
        let rep = run_suite(suite, &Scale::quick()).unwrap();
        let failed: Vec<_> = rep.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{suite:?}: {failed:#?}");
    }
}
