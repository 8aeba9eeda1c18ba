use ndarray::{Array1, Array2};
use proptest::prelude::*;

use sigstop_core::h0;
use sigstop_core::linearized::project_l1;
use sigstop_core::policy::DeepPolicy;
use sigstop_core::process::{CovModel, GridSpec, Payoff, Sampler};
use sigstop_core::signature::{log_signature_coords, stream_signatures};
use sigstop_core::stopping::smoothed_path_value;
use sigstop_core::{LyndonBasis, ZDistribution};

fn path(width: usize) -> impl Strategy<Value = (Vec<f64>, Array2<f64>)> {
    (3usize..12).prop_flat_map(move |n| {
        prop::collection::vec(-1.5f64..1.5, n * (width - 1)).prop_map(move |v| {
            let times = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            (times, Array2::from_shape_vec((n, width - 1), v).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signatures_are_grouplike_and_chen((times, x) in path(3), split in 0.0f64..1.0) {
        let level = 4;
        let s = stream_signatures(&times, x.view(), 1, level).unwrap();
        prop_assert!(s.last().max_shuffle_defect() < 1e-9);
        let k = (1 + ((times.len() - 2) as f64 * split) as usize).min(times.len() - 2);
        let head = stream_signatures(&times[..=k], x.slice(ndarray::s![..=k, ..]), 1, level).unwrap();
        let tail = stream_signatures(&times[k..], x.slice(ndarray::s![k.., ..]), 1, level).unwrap();
        let joined = head.last().tensor_mul(tail.last()).unwrap();
        prop_assert!(joined.sub(s.last()).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn log_signature_round_trips((times, x) in path(2)) {
        let s = stream_signatures(&times, x.view(), 1, 4).unwrap();
        let basis = LyndonBasis::new(2, 4);
        let coords = log_signature_coords(&s, &basis).unwrap();
        for (j, sig) in s.sigs.iter().enumerate() {
            let back = basis.reconstruct(coords.coords.row(j).as_slice().unwrap()).unwrap().exp().unwrap();
            prop_assert!(back.sub(sig).unwrap().sup_norm() < 1e-9 * (1.0 + sig.sup_norm()));
        }
    }

    #[test]
    fn smoothed_value_is_a_mixture_of_payoffs(
        y in prop::collection::vec(-3.0f64..3.0, 2..30),
        seed in any::<u64>(),
        loglogistic in any::<bool>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = y.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let z = if loglogistic { ZDistribution::LogLogistic } else { ZDistribution::Exp1 };
        let v = smoothed_path_value(Array1::from(y.clone()).view(), Array1::from(theta).view(), z);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn l1_projection(v in prop::collection::vec(-5.0f64..5.0, 1..12), r in 0.01f64..4.0) {
        let p = project_l1(&v, r);
        let norm: f64 = p.iter().map(|x| x.abs()).sum();
        prop_assert!(norm <= r * (1.0 + 1e-12));
        let again = project_l1(&p, r);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
            prop_assert_eq!(p, v);
        }
    }

    #[test]
    fn h0_values_shrink_toward_the_horizon(steps in 1usize..400) {
        let s = h0::solve(steps).unwrap();
        prop_assert!(s.mu.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.mu.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn paths_do_not_depend_on_batch_split(first in 0u64..50, count in 1usize..20, cut in 0usize..20) {
        let sampler = Sampler::new(CovModel::Fbm { hurst: 0.3 }, Payoff::Identity, GridSpec::uniform(1.0, 8).unwrap()).unwrap();
        let whole = sampler.sample(9, first, count);
        let cut = cut.min(count);
        let a = sampler.sample(9, first, cut);
        let b = sampler.sample(9, first + cut as u64, count - cut);
        for m in 0..count {
            let part = if m < cut { a.path(m) } else { b.path(m - cut) };
            prop_assert_eq!(whole.path(m), part);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn network_output_is_row_local(rows in 1usize..700, seed in any::<u64>()) {
        // batches are processed in blocks; a row's value must not depend on its neighbours
        let mut p = DeepPolicy::new(2, 2, 3, &[9, 7], seed).unwrap();
        p.weights.iter_mut().enumerate().for_each(|(i, w)| *w += 0.01 * (i % 7) as f64);
        let x = Array2::from_shape_fn((rows, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let all = p.forward(x.view()).unwrap();
        for i in (0..rows).step_by(37) {
            let one = p.forward(x.slice(ndarray::s![i..i + 1, ..])).unwrap();
            prop_assert!((one[0] - all[i]).abs() < 1e-12);
        }
    }
}
