use angmf::metrics::{
    ausc, ause, oracle_curve, prefix_len, sparsification, summarize, ErrorSample, Metric,
    THRESHOLDS_DEG,
};
use proptest::prelude::*;

fn samples(errors: &[f64], unc: &[f64]) -> Vec<ErrorSample> {
    errors
        .iter()
        .zip(unc)
        .map(|(&e, &u)| ErrorSample::new(e, u).unwrap())
        .collect()
}

/// Brute-force curve: for each x, enumerate samples in the stated order and
/// recompute the metric from scratch.
fn brute_curve(errors: &[f64], key: &[f64], metric: Metric) -> Vec<f64> {
    let n = errors.len();
    let mut order: Vec<usize> = (0..n).collect();
    // insertion sort keeps the comparison logic independent of the library
    for i in 1..n {
        let mut j = i;
        while j > 0 && (key[order[j - 1]], order[j - 1]) > (key[order[j]], order[j]) {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    (1..=100)
        .map(|x| {
            let k = (x * n).div_ceil(100);
            let mut prefix: Vec<f64> = order[..k].iter().map(|&i| errors[i]).collect();
            prefix.sort_by(|a, b| a.partial_cmp(b).unwrap());
            match metric {
                Metric::Mean => prefix.iter().sum::<f64>() / k as f64,
                Metric::Median => {
                    if k % 2 == 1 {
                        prefix[k / 2]
                    } else {
                        (prefix[k / 2 - 1] + prefix[k / 2]) / 2.0
                    }
                }
                Metric::Rmse => (prefix.iter().map(|e| e * e).sum::<f64>() / k as f64).sqrt(),
                Metric::ErrorAbove(t) => {
                    100.0 - 100.0 * prefix.iter().filter(|&&e| e < t).count() as f64 / k as f64
                }
            }
        })
        .collect()
}

/// Errors on a 1/8° grid and uncertainties on a 1/4 grid: every partial sum
/// is exact in floating point, so exact comparison is meaningful.
fn dyadic_input() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..=320).prop_map(|k| k as f64 / 8.0), n),
            prop::collection::vec((0u32..=8).prop_map(|k| k as f64 / 4.0), n),
        )
    })
}

fn all_metrics() -> Vec<Metric> {
    let mut m = vec![Metric::Mean, Metric::Median];
    m.extend(THRESHOLDS_DEG.iter().map(|&t| Metric::ErrorAbove(t)));
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn small_inputs_match_brute_force((errors, unc) in dyadic_input()) {
        let s = samples(&errors, &unc);
        for metric in all_metrics() {
            let est = sparsification(&s, metric).unwrap();
            let ora = oracle_curve(&s, metric).unwrap();
            let be = brute_curve(&errors, &unc, metric);
            let bo = brute_curve(&errors, &errors, metric);
            prop_assert_eq!(est.values(), &be[..]);
            prop_assert_eq!(ora.values(), &bo[..]);
            let ausc_brute = be.iter().sum::<f64>() / 100.0;
            prop_assert_eq!(ausc(&est), ausc_brute);
            let diff: f64 = be.iter().zip(&bo).map(|(a, b)| a - b).sum::<f64>() / 100.0;
            prop_assert_eq!(ause(&est, &ora).unwrap(), diff);
        }
    }

    #[test]
    fn ause_is_nonnegative_for_mean(
        errors in prop::collection::vec(0.0..180.0f64, 1..200),
        seed in any::<u64>(),
    ) {
        let mut rng = angmf::rng::RngState::new(seed);
        let unc: Vec<f64> = errors.iter().map(|_| rng.next_f64()).collect();
        let s = samples(&errors, &unc);
        let est = sparsification(&s, Metric::Mean).unwrap();
        let ora = oracle_curve(&s, Metric::Mean).unwrap();
        for (e, o) in est.values().iter().zip(ora.values()) {
            prop_assert!(o <= e);
        }
        prop_assert!(ause(&est, &ora).unwrap() >= 0.0);
    }

    #[test]
    fn matching_order_gives_zero_ause(errors in prop::collection::vec(0.0..180.0f64, 1..100)) {
        // any strictly increasing transform of the error is a perfect ranking
        let unc: Vec<f64> = errors.iter().map(|e| (e / 10.0).exp()).collect();
        let s = samples(&errors, &unc);
        for metric in all_metrics() {
            let est = sparsification(&s, metric).unwrap();
            let ora = oracle_curve(&s, metric).unwrap();
            prop_assert_eq!(ause(&est, &ora).unwrap(), 0.0);
        }
    }

    #[test]
    fn full_prefix_equals_summary(
        errors in prop::collection::vec(0.0..180.0f64, 1..100),
        seed in any::<u64>(),
    ) {
        let mut rng = angmf::rng::RngState::new(seed);
        let unc: Vec<f64> = errors.iter().map(|_| rng.next_f64()).collect();
        let s = samples(&errors, &unc);
        let r = summarize(&errors).unwrap();
        prop_assert_eq!(sparsification(&s, Metric::Mean).unwrap().at(100), r.mean);
        prop_assert_eq!(sparsification(&s, Metric::Median).unwrap().at(100), r.median);
        prop_assert_eq!(sparsification(&s, Metric::Rmse).unwrap().at(100), r.rmse);
        prop_assert_eq!(sparsification(&s, Metric::ErrorAbove(7.5)).unwrap().at(100), 100.0 - r.pct_7_5);
    }

    #[test]
    fn summary_is_permutation_invariant(
        errors in prop::collection::vec(0.0..180.0f64, 1..100),
        seed in any::<u64>(),
    ) {
        let mut shuffled = errors.clone();
        let mut rng = angmf::rng::RngState::new(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let (a, b) = (summarize(&errors).unwrap(), summarize(&shuffled).unwrap());
        prop_assert_eq!(a, b);
        let pct = [a.pct_5, a.pct_7_5, a.pct_11_25, a.pct_22_5, a.pct_30];
        prop_assert!(pct.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(pct.iter().all(|p| (0.0..=100.0).contains(p)));
    }
}

#[test]
fn prefix_sizes() {
    assert_eq!(prefix_len(1, 4), 1);
    assert_eq!(prefix_len(25, 4), 1);
    assert_eq!(prefix_len(26, 4), 2);
    assert_eq!(prefix_len(100, 4), 4);
    assert_eq!(prefix_len(1, 1000), 10);
    assert_eq!(prefix_len(1, 1), 1);
}
