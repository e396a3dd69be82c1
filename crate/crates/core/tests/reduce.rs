mod common;

use std::collections::BTreeSet;

use common::*;
use freqmerge::reduce::{
    adaptive_block_merge, apply_merge, apply_unmerge, bipartite_match, block_decisions, ie_kvd_downsample,
    midpoint_quantile, schedule_alpha, select_destinations, AlphaSchedule, CachedAssignmentSession, MatchOptions,
    MergePlan, NearestAnchor,
};
use freqmerge::{score_tokens, Error, FrequencyMap, ScoringMethod, SeededRng, TokenGrid, TokenSequence};

#[test]
fn destination_examples() {
    let m = FrequencyMap::new(2, 2, vec![1.0, 2.0, 3.0, 0.0]).unwrap();
    assert_eq!(select_destinations(&m, 2, 2).unwrap(), vec![3]);
    let m = FrequencyMap::new(2, 2, vec![1.0; 4]).unwrap();
    assert_eq!(select_destinations(&m, 2, 2).unwrap(), vec![0]);
}

#[test]
fn destinations_match_per_cell_argmin() {
    let mut rng = SeededRng::new(5);
    for (h, w, s) in [(4, 4, 2), (5, 7, 2), (6, 6, 3), (5, 5, 4)] {
        for _ in 0..20 {
            let scores = rng.normal_vec(h * w);
            let m = FrequencyMap::new(h, w, scores.clone()).unwrap();
            assert_eq!(select_destinations(&m, s, s).unwrap(), cell_argmin_oracle(&scores, h, w, s));
        }
    }
}

#[test]
fn matching_matches_brute_force() {
    let mut rng = SeededRng::new(9);
    for trial in 0..50 {
        let seq = TokenSequence::new(16, 4, rng.normal_vec(64)).unwrap();
        let mut dests: Vec<usize> = (0..16).filter(|_| rng.uniform() < 0.3).collect();
        if dests.is_empty() {
            dests.push(trial % 16);
        }
        for r in [0.1, 0.25, 0.5] {
            let plan = bipartite_match(&seq, &dests, r, &MatchOptions::default()).unwrap();
            let got: Vec<(usize, usize)> = plan.assignments().iter().map(|(&s, &d)| (s, d)).collect();
            assert_eq!(got, brute_force_matching(&seq, &dests, r), "trial {trial} r {r}");
        }
    }
}

#[test]
fn zero_ratio_is_identity() {
    let seq = TokenSequence::new(8, 3, SeededRng::new(1).normal_vec(24)).unwrap();
    let plan = bipartite_match(&seq, &[0, 4], 0.0, &MatchOptions::default()).unwrap();
    assert!(plan.is_identity());
    assert_eq!(plan.reduced_count(), 8);
}

#[test]
fn duplicate_of_destination_merges_first() {
    let seq = TokenSequence::new(4, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0, -1.0, 1.0]).unwrap();
    let plan = bipartite_match(&seq, &[0], 0.25, &MatchOptions::default()).unwrap();
    assert_eq!(plan.assignments().iter().collect::<Vec<_>>(), vec![(&2, &0)]);
}

#[test]
fn merge_and_unmerge_worked_example() {
    let seq = TokenSequence::new(2, 1, vec![2.0, 4.0]).unwrap();
    let plan = MergePlan::new(2, vec![0], [(1, 0)].into_iter().collect()).unwrap();
    let merged = apply_merge(&seq, &plan).unwrap();
    assert_eq!(merged.data(), &[3.0]);
    assert_eq!(apply_unmerge(&merged, &plan).unwrap().data(), &[3.0, 3.0]);
}

#[test]
fn merge_and_unmerge_equal_dense_products() {
    let mut rng = SeededRng::new(21);
    for _ in 0..30 {
        let x = TokenSequence::new(16, 3, rng.normal_vec(48)).unwrap();
        let dests: Vec<usize> = (0..16).step_by(3).collect();
        let plan = bipartite_match(&x, &dests, 0.4, &MatchOptions::default()).unwrap();
        let m = dense_merge_matrix(&plan);
        let u = dense_unmerge_matrix(&plan);
        let merged = apply_merge(&x, &plan).unwrap();
        assert!(max_abs_diff(merged.data(), &matmul(&m, &x)) < 1e-12);
        let back = apply_unmerge(&merged, &plan).unwrap();
        assert!(max_abs_diff(back.data(), &matmul(&u, &merged)) < 1e-12);
    }
}

#[test]
fn count_mismatches_are_dimension_errors() {
    let plan = MergePlan::identity(4).unwrap();
    let x = TokenSequence::new(3, 1, vec![1.0; 3]).unwrap();
    assert!(matches!(apply_merge(&x, &plan), Err(Error::Dimension(_))));
    assert!(matches!(apply_unmerge(&x, &plan), Err(Error::Dimension(_))));
}

#[test]
fn abm_examples() {
    let g = TokenGrid::filled(4, 4, 2, 1.0).unwrap();
    let zeros = FrequencyMap::new(4, 4, vec![0.0; 16]).unwrap();
    let plan = adaptive_block_merge(&g, &zeros, 2, 1.0, &BTreeSet::new()).unwrap();
    assert_eq!(plan.reduced_count(), 4);

    let mut scores: Vec<f64> = (0..16).map(f64::from).collect();
    scores[0] = 100.0;
    let map = FrequencyMap::new(4, 4, scores).unwrap();
    let d = block_decisions(&map, 2, 0.5).unwrap();
    assert!(!d.pooled[0]);
}

#[test]
fn abm_matches_block_max_oracle() {
    let mut rng = SeededRng::new(4);
    for _ in 0..50 {
        let scores = rng.normal_vec(64);
        let map = FrequencyMap::new(8, 8, scores.clone()).unwrap();
        let d = block_decisions(&map, 2, 0.5).unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let tau = 0.5 * (sorted[31] + sorted[32]);
        assert_eq!(d.threshold, tau);
        assert_eq!(midpoint_quantile(&scores, 0.5), tau);
        let mut want = Vec::new();
        for bh in 0..4 {
            for bw in 0..4 {
                let mut phi = f64::NEG_INFINITY;
                for h in 2 * bh..2 * bh + 2 {
                    for w in 2 * bw..2 * bw + 2 {
                        phi = phi.max(scores[h * 8 + w]);
                    }
                }
                want.push(phi < tau);
            }
        }
        assert_eq!(d.pooled, want);
    }
}

#[test]
fn cached_session_replays_and_expires() {
    let g = random_grid(4, 4, 3, 2);
    let plan = bipartite_match(&g.to_sequence(), &[0, 5, 10], 0.3, &MatchOptions::default()).unwrap();
    let s = CachedAssignmentSession::new(3, 7, plan).unwrap();
    let first = s.plan_for(0, 7, 16).unwrap();
    for b in 1..3 {
        assert!(std::sync::Arc::ptr_eq(&first, &s.plan_for(b, 7, 16).unwrap()));
    }
    assert!(matches!(s.plan_for(0, 8, 16), Err(Error::StaleCache { .. })));
}

#[test]
fn kvd_examples() {
    let g = TokenGrid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let out = ie_kvd_downsample(&g, 2, 0.9, NearestAnchor::Center).unwrap();
    assert!((out.data()[0] - 3.85).abs() < 1e-12);
    for seed in 0..10 {
        let g = random_grid(7, 9, 2, seed);
        for s in [2, 3, 4] {
            let avg = ie_kvd_downsample(&g, s, 0.0, NearestAnchor::Center).unwrap();
            assert!(max_abs_diff(avg.data(), &average_pool_oracle(&g, s)) < 1e-12);
            let near = ie_kvd_downsample(&g, s, 1.0, NearestAnchor::Center).unwrap();
            assert!(max_abs_diff(near.data(), &nearest_pool_oracle(&g, s)) < 1e-12);
        }
    }
}

#[test]
fn kvd_is_an_affine_blend() {
    let g = random_grid(8, 8, 3, 11);
    let d1 = ie_kvd_downsample(&g, 2, 1.0, NearestAnchor::Center).unwrap();
    let d0 = ie_kvd_downsample(&g, 2, 0.0, NearestAnchor::Center).unwrap();
    let da = ie_kvd_downsample(&g, 2, 1.2, NearestAnchor::Center).unwrap();
    let blend: Vec<f64> = d1.data().iter().zip(d0.data()).map(|(a, b)| 1.2 * a - 0.2 * b).collect();
    assert!(max_abs_diff(da.data(), &blend) < 1e-12);
}

#[test]
fn schedule_examples() {
    let lin = AlphaSchedule::linear(0.8, 1.2);
    assert_eq!(schedule_alpha(&lin, 0, 50).unwrap(), 0.8);
    assert!((schedule_alpha(&lin, 49, 50).unwrap() - 1.2).abs() < 1e-15);
    assert_eq!(schedule_alpha(&AlphaSchedule::fixed(0.9), 17, 50).unwrap(), 0.9);
    assert_eq!(schedule_alpha(&lin, 0, 1).unwrap(), 0.8);
    assert!(schedule_alpha(&lin, 50, 50).is_err());
}

#[test]
fn laplacian_gating_prefers_smooth_destinations() {
    let g = random_grid(6, 6, 4, 3);
    let map = score_tokens(&g, ScoringMethod::LaplacianL1).unwrap();
    let dests = select_destinations(&map, 2, 2).unwrap();
    for d in dests {
        let (h, w) = (d / 6, d % 6);
        let (h0, w0) = (h / 2 * 2, w / 2 * 2);
        for hh in h0..h0 + 2 {
            for ww in w0..w0 + 2 {
                assert!(map.get(h, w) <= map.get(hh, ww));
            }
        }
    }
}
