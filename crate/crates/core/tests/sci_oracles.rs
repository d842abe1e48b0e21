mod common;

use coop_loc::linalg::min_eigenvalue4;
use coop_loc::sci::{self, OmegaObjective, OmegaSearch};
use coop_loc::types::{position_block, CovMat, SplitEstimate};

#[test]
fn gain_form_matches_information_form() {
    let r = common::information_equivalence(100, 21);
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn omega_matches_brute_force() {
    let r = common::omega_matches_brute_force(100, 22);
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn split_closure_over_random_sequences() {
    let r = common::split_closure(100_000, 4, 23);
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn first_epoch_fusion_shrinks_and_stays_psd() {
    let mut rng = common::rng(24);
    for _ in 0..200 {
        let motion = SplitEstimate::independent(
            common::normal_vec::<4>(&mut rng),
            common::random_spd(&mut rng, 1.0, 0.05),
        );
        let range = SplitEstimate::dependent(
            common::normal_vec::<4>(&mut rng),
            common::random_spd(&mut rng, 1.5, 0.05),
        );
        let (fused, w) = sci::fuse_with(&motion, &range, &OmegaSearch::default()).unwrap();
        for m in [&fused.p_dep, &fused.p_ind] {
            assert!(min_eigenvalue4(m) >= -1e-9 * m.trace().max(1.0));
        }
        let p1 = motion.p_ind;
        let p2 = range.p_dep / (1.0 - w);
        assert!(min_eigenvalue4(&(p1 - fused.total())) >= -1e-9 * p1.trace());
        let d = position_block(&fused.total()).determinant();
        assert!(d <= position_block(&p1).determinant() * (1.0 + 1e-9));
        assert!(d <= position_block(&p2).determinant() * (1.0 + 1e-9));
    }
}

#[test]
fn argmin_survives_common_scaling() {
    let mut rng = common::rng(25);
    let search = OmegaSearch::default();
    for _ in 0..50 {
        let a = common::random_split(&mut rng);
        let b = common::random_split(&mut rng);
        let c = 37.0;
        let scale = |e: &SplitEstimate| SplitEstimate {
            p_dep: e.p_dep * c,
            p_ind: e.p_ind * c,
            ..*e
        };
        let w = sci::optimize_omega(&a, &b, &search);
        let ws = sci::optimize_omega(&scale(&a), &scale(&b), &search);
        assert!((w - ws).abs() <= 2.0 * search.tolerance, "{w} vs {ws}");
    }
}

#[test]
fn optimum_never_worse_than_grid() {
    let mut rng = common::rng(26);
    let search = OmegaSearch::default();
    for _ in 0..100 {
        let a = common::random_split(&mut rng);
        let b = common::random_split(&mut rng);
        let w = sci::optimize_omega(&a, &b, &search);
        assert!((search.lower..=search.upper).contains(&w));
        let f = |w| sci::omega_objective(&a, &b, w, OmegaObjective::PositionLogDet);
        for i in 0..=100 {
            let g = search.lower + (search.upper - search.lower) * i as f64 / 100.0;
            assert!(f(w) <= f(g) + 1e-9, "omega {w} worse than grid point {g}");
        }
    }
}

#[test]
fn fused_total_is_symmetric() {
    let mut rng = common::rng(27);
    for _ in 0..100 {
        let f = sci::fuse(
            &common::random_split(&mut rng),
            &common::random_split(&mut rng),
        )
        .unwrap();
        let t: CovMat = f.total();
        assert_eq!(t, t.transpose());
    }
}
