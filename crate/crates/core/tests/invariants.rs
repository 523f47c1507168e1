use grbm_core::checkpoint::{decode_checkpoint, encode_checkpoint};
use grbm_core::classify::stratified_folds;
use grbm_core::encode::{positions_per_axis, quadrant_half};
use grbm_core::infomax::{early_stop_index, signed_peak_loss, unit_mutual_information};
use grbm_core::math::{log_sum_exp, logistic, softplus};
use grbm_core::oracle::{exact_joint_mutual_information, ExactModel};
use grbm_core::{AmiTrace, GrbmParams, StopCriterion};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use std::path::Path;

fn params_strategy(max_hidden: usize, max_visible: usize) -> impl Strategy<Value = GrbmParams> {
    (1..=max_hidden, 1..=max_visible).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec(-2.0f64..2.0, m * n),
            prop::collection::vec(-1.0f64..1.0, m),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(0.5f64..1.5, n),
        )
            .prop_map(move |(w, a, b, s)| {
                GrbmParams::new(Array2::from_shape_vec((m, n), w).unwrap(), a.into(), b.into(), s.into()).unwrap()
            })
    })
}

fn data_for(n_visible: usize) -> impl Strategy<Value = Array2<f64>> {
    (1usize..40).prop_flat_map(move |rows| {
        prop::collection::vec(-3.0f64..3.0, rows * n_visible)
            .prop_map(move |v| Array2::from_shape_vec((rows, n_visible), v).unwrap())
    })
}

fn model_and_data() -> impl Strategy<Value = (GrbmParams, Array2<f64>)> {
    params_strategy(6, 3).prop_flat_map(|p| {
        let n = p.n_visible();
        (Just(p), data_for(n))
    })
}

proptest! {
    #[test]
    fn logistic_and_softplus_identities(x in -700.0f64..700.0) {
        prop_assert!((logistic(x) + logistic(-x) - 1.0).abs() < 1e-12);
        prop_assert!((softplus(x) - softplus(-x) - x).abs() < 1e-9 * (1.0 + x.abs()));
    }

    #[test]
    fn log_sum_exp_bounds(v in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = log_sum_exp(v.iter().copied());
        prop_assert!(lse >= max - 1e-12);
        prop_assert!(lse <= max + (v.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn unit_mi_report_is_consistent((params, data) in model_and_data()) {
        let r = unit_mutual_information(&params, data.view()).unwrap();
        let ln2 = std::f64::consts::LN_2;
        prop_assert!(r.per_unit_mi.iter().all(|&mi| (0.0..=ln2 + 1e-12).contains(&mi)));
        prop_assert!((r.ami - r.per_unit_mi.iter().sum::<f64>()).abs() < 1e-12);
        let mut seen = r.unit_order.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..params.n_hidden()).collect::<Vec<_>>());
        prop_assert!(r.unit_order.windows(2).all(|w| r.per_unit_mi[w[0]] <= r.per_unit_mi[w[1]]));
        for t in [0.0, 0.02, 0.1] {
            let above = r.units_above(t);
            prop_assert_eq!(r.threshold_rank(t) + above.len(), params.n_hidden());
            prop_assert!(above.iter().all(|&i| r.per_unit_mi[i] > t));
        }
    }

    #[test]
    fn joint_mi_never_exceeds_ami((params, data) in model_and_data()) {
        let exact = exact_joint_mutual_information(&params, data.view()).unwrap();
        let ami = unit_mutual_information(&params, data.view()).unwrap().ami;
        prop_assert!(exact >= -1e-12);
        prop_assert!(exact <= ami + 1e-9);
    }

    #[test]
    fn hidden_marginal_sums_to_one(params in params_strategy(8, 3)) {
        let model = ExactModel::new(params.clone()).unwrap();
        let total: f64 = (0..1usize << params.n_hidden()).map(|h| model.log_prob_hidden(h).exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn checkpoint_bytes_round_trip(params in params_strategy(6, 5), epoch in 0u64..10_000) {
        let bytes = encode_checkpoint(&params, epoch);
        let (back, e) = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(e, epoch);
        prop_assert_eq!(encode_checkpoint(&back, epoch), bytes);
    }

    #[test]
    fn truncated_checkpoints_are_rejected(params in params_strategy(4, 3), cut in 1usize..16) {
        let bytes = encode_checkpoint(&params, 1);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_checkpoint(&bytes[..bytes.len() - cut], Path::new("mem")).is_err());
    }

    #[test]
    fn stop_index_is_closest_and_shift_invariant(
        values in prop::collection::vec(-40i32..40, 1..30),
        theta in -20i32..20,
        shift in -100i32..100,
    ) {
        let trace = AmiTrace::from_values(&values.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        let shifted = AmiTrace::from_values(&values.iter().map(|&v| (v + shift) as f64).collect::<Vec<_>>()).unwrap();
        let c = StopCriterion::new(theta as f64).unwrap();
        let d = early_stop_index(&trace, c).unwrap();
        let r = signed_peak_loss(&trace);
        let best = (r[d.index] - c.theta).abs();
        prop_assert!(r.iter().all(|&x| (x - c.theta).abs() >= best));
        prop_assert!(r[..d.index].iter().all(|&x| (x - c.theta).abs() > best));
        prop_assert_eq!(early_stop_index(&shifted, c).unwrap().index, d.index);
    }

    #[test]
    fn theta_zero_selects_earliest_peak(values in prop::collection::vec(-40i32..40, 1..30)) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let trace = AmiTrace::from_values(&v).unwrap();
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = v.iter().position(|&x| x == max).unwrap();
        prop_assert_eq!(early_stop_index(&trace, StopCriterion::new(0.0).unwrap()).unwrap().index, first);
    }

    #[test]
    fn stratified_folds_are_balanced(
        labels in prop::collection::vec(0u32..4, 0..200),
        folds in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut counts = [0usize; 4];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        let result = stratified_folds(&labels, folds, seed);
        if counts.iter().any(|&c| c > 0 && c < folds) {
            prop_assert!(result.is_err());
        } else {
            let assignment = result.unwrap();
            prop_assert_eq!(assignment.len(), labels.len());
            for class in 0..4u32 {
                let mut per_fold = vec![0usize; folds];
                for (i, &l) in labels.iter().enumerate() {
                    if l == class {
                        per_fold[assignment[i]] += 1;
                    }
                }
                let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            }
        }
    }

    #[test]
    fn quadrants_split_positions_evenly(w in 1usize..=32, stride in 1usize..=8) {
        let Ok(per_axis) = positions_per_axis(w, stride) else {
            return Ok(());
        };
        let halves: Vec<usize> = (0..per_axis).map(|k| quadrant_half(k * stride, w)).collect();
        prop_assert!(halves.windows(2).all(|p| p[0] <= p[1]));
        for (k, &h) in halves.iter().enumerate() {
            let mirror = halves[per_axis - 1 - k];
            let start = k * stride;
            if 2 * start + w - 1 != 31 {
                prop_assert_eq!(h + mirror, 1);
            }
        }
    }

    #[test]
    fn filter_norms_match_weights(params in params_strategy(6, 5)) {
        let norms = params.filter_norms();
        for (i, row) in params.weights().rows().into_iter().enumerate() {
            prop_assert!((norms[i] - row.dot(&row).sqrt()).abs() < 1e-12);
        }
        let extra = params.with_hidden_unit(Array1::zeros(params.n_visible()).view(), 0.0).unwrap();
        prop_assert_eq!(extra.n_hidden(), params.n_hidden() + 1);
        prop_assert_eq!(extra.filter_norms()[params.n_hidden()], 0.0);
    }
}
