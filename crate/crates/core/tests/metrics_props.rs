mod common;

use ceb_core::metrics::{evaluate, evaluate_with, MatchProtocol};
use ceb_core::LabelMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn self_comparison_is_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let x = common::random_labels(&mut rng, 24, 24, 6);
        let r = evaluate(&x, &x).unwrap();
        assert_eq!((r.f1, r.aji, r.ap), (1.0, 1.0, 1.0));
    }
}

#[test]
fn renaming_ids_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let gt = common::random_labels(&mut rng, 24, 24, 6);
        let pred = common::random_labels(&mut rng, 24, 24, 7);
        let base = evaluate(&pred, &gt).unwrap();
        let moved = evaluate(
            &common::relabel(&mut rng, &pred),
            &common::relabel(&mut rng, &gt),
        )
        .unwrap();
        assert_eq!(base, moved);
        let opt = evaluate_with(&pred, &gt, MatchProtocol::Optimal).unwrap();
        assert_eq!(opt.tp, base.tp);
    }
}

#[test]
fn partial_cover_scores_zero_f1() {
    let gt = LabelMap::new(10, 1, vec![1; 10]).unwrap();
    let pred = LabelMap::new(10, 1, [vec![1; 4], vec![0; 6]].concat()).unwrap();
    let r = evaluate(&pred, &gt).unwrap();
    assert_eq!((r.tp, r.fp, r.fn_), (0, 1, 1));
    assert_eq!(r.f1, 0.0);
    assert!((r.aji - 0.4).abs() < 1e-9);
}
