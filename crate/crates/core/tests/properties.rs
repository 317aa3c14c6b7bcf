use proptest::prelude::*;

use spmtc::metrics::{clustering_accuracy, nmi};
use spmtc::self_paced::{hard_weights, soft_weights};

fn labelings() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60, 1usize..5, 1usize..5)
        .prop_flat_map(|(n, a, b)| (proptest::collection::vec(0..a, n), proptest::collection::vec(0..b, n)))
}

proptest! {
    #[test]
    fn acc_ignores_cluster_renaming((truth, pred) in labelings(), shift in 0usize..7) {
        let renamed: Vec<usize> = pred.iter().map(|&p| (p * 3 + shift) % 11 + 100).collect();
        let a = clustering_accuracy(&truth, &pred).unwrap();
        let b = clustering_accuracy(&truth, &renamed).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn nmi_is_symmetric_and_bounded((truth, pred) in labelings()) {
        let a = nmi(&truth, &pred).unwrap();
        let b = nmi(&pred, &truth).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn identical_partitions_score_one(truth in proptest::collection::vec(0usize..4, 1..50)) {
        prop_assert_eq!(clustering_accuracy(&truth, &truth).unwrap(), 1.0);
        let distinct = {
            let mut d = truth.clone();
            d.sort_unstable();
            d.dedup();
            d.len()
        };
        if distinct > 1 {
            prop_assert!((nmi(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_decrease_with_loss(
        mut losses in proptest::collection::vec(0.0f64..10.0, 2..40),
        lambda2 in 0.01f64..10.0,
    ) {
        losses.sort_by(f64::total_cmp);
        let gamma = lambda2 / 2.0;
        for w in [hard_weights(&losses, lambda2), soft_weights(&losses, lambda2, gamma)] {
            prop_assert!(w.windows(2).all(|p| p[0] >= p[1]));
            prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
