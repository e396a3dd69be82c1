use freqmerge::reduce::{apply_merge, apply_unmerge, gated_merge_plan, ie_kvd_downsample, GatedMergeParams, NearestAnchor};
use freqmerge::spectral::cantelli_bound;
use freqmerge::{detail_rank, laplacian_filter, score_tokens, Padding, ScoringMethod, TokenGrid};
use proptest::prelude::*;

fn grid(max_side: usize, max_channels: usize) -> impl Strategy<Value = TokenGrid> {
    (1..=max_side, 1..=max_side, 1..=max_channels).prop_flat_map(|(h, w, c)| {
        prop::collection::vec(-10.0..10.0f64, h * w * c).prop_map(move |d| TokenGrid::new(h, w, c, d).unwrap())
    })
}

fn even_grid() -> impl Strategy<Value = (TokenGrid, TokenGrid)> {
    (1..=4usize, 1..=4usize, 1..=3usize).prop_flat_map(|(h, w, c)| {
        let n = 4 * h * w * c;
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
        )
            .prop_map(move |(a, b)| {
                (
                    TokenGrid::new(2 * h, 2 * w, c, a).unwrap(),
                    TokenGrid::new(2 * h, 2 * w, c, b).unwrap(),
                )
            })
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #[test]
    fn laplacian_ignores_constant_shift(g in grid(7, 3), shift in -100.0..100.0f64) {
        let shifted = TokenGrid::new(g.height(), g.width(), g.channels(), g.data().iter().map(|v| v + shift).collect()).unwrap();
        let a = laplacian_filter(&g, Padding::Replicate);
        let b = laplacian_filter(&shifted, Padding::Replicate);
        prop_assert!(close(a.data(), b.data(), 1e-9));
    }

    #[test]
    fn laplacian_is_homogeneous(g in grid(7, 3), scale in -5.0..5.0f64) {
        let scaled = g.axpby(scale, &g, 0.0).unwrap();
        let a = laplacian_filter(&g, Padding::Zero);
        let b = laplacian_filter(&scaled, Padding::Zero);
        let want: Vec<f64> = a.data().iter().map(|v| v * scale).collect();
        prop_assert!(close(b.data(), &want, 1e-9));
    }

    #[test]
    fn kvd_is_linear((x, y) in even_grid(), a in -3.0..3.0f64, b in -3.0..3.0f64, alpha in 0.0..=1.0f64) {
        let combo = x.axpby(a, &y, b).unwrap();
        let lhs = ie_kvd_downsample(&combo, 2, alpha, NearestAnchor::Center).unwrap();
        let dx = ie_kvd_downsample(&x, 2, alpha, NearestAnchor::Center).unwrap();
        let dy = ie_kvd_downsample(&y, 2, alpha, NearestAnchor::Center).unwrap();
        let rhs = dx.axpby(a, &dy, b).unwrap();
        prop_assert!(close(lhs.data(), rhs.data(), 1e-9));
        prop_assert_eq!((lhs.height(), lhs.width(), lhs.channels()), (x.height() / 2, x.width() / 2, x.channels()));
    }

    #[test]
    fn scores_cover_every_token(g in grid(6, 4)) {
        for m in ScoringMethod::ALL {
            let map = score_tokens(&g, m).unwrap();
            prop_assert_eq!((map.height(), map.width()), (g.height(), g.width()));
            prop_assert!(map.scores().iter().all(|s| s.is_finite()));
            let mut rank = detail_rank(&map, m.polarity());
            rank.sort_unstable();
            prop_assert_eq!(rank, (0..g.sites()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn merged_tokens_stay_inside_their_group((g, _) in even_grid(), ratio in 0.0..=1.0f64) {
        let plan = gated_merge_plan(&g, &GatedMergeParams::new(ScoringMethod::LaplacianL1, 2, ratio)).unwrap();
        let x = g.to_sequence();
        let merged = apply_merge(&x, &plan).unwrap();
        prop_assert_eq!(merged.count(), plan.reduced_count());
        prop_assert_eq!(plan.weights().iter().sum::<usize>(), x.count());
        for slot in 0..merged.count() {
            let members: Vec<usize> = (0..x.count()).filter(|&i| plan.slot_of(i) == slot).collect();
            for c in 0..x.channels() {
                let lo = members.iter().map(|&i| x.row(i)[c]).fold(f64::INFINITY, f64::min);
                let hi = members.iter().map(|&i| x.row(i)[c]).fold(f64::NEG_INFINITY, f64::max);
                let v = merged.row(slot)[c];
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        let back = apply_unmerge(&merged, &plan).unwrap();
        prop_assert_eq!(back.count(), x.count());
        for i in 0..x.count() {
            if !plan.is_merged(i) {
                prop_assert_eq!(back.row(i), x.row(i));
            }
        }
    }

    #[test]
    fn cantelli_falls_with_trials_and_margin(mu in 0.01..10.0f64, sigma2 in 0.0..10.0f64, s in 1usize..200) {
        let b = cantelli_bound(mu, sigma2, s).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(cantelli_bound(mu, sigma2, s + 1).unwrap() <= b);
        prop_assert!(cantelli_bound(mu * 1.5, sigma2, s).unwrap() <= b);
    }
}
