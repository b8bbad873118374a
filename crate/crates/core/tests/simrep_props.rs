// SPDX-License-Identifier: MIT OR Apache-2.0

use causelens::condition::{Condition, Language, Order};
use causelens::simrep::{layerwise_cosine, svcca_detail, AnchorStates, ConditionPair};
use causelens_testkit::{random_matrix, random_orthogonal, rng, svcca_oracle};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn to_nd(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn score(x: &DMatrix<f64>, y: &DMatrix<f64>, keep: f64) -> f64 {
    svcca_detail(to_nd(x).view(), to_nd(y).view(), keep).unwrap().score
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agrees_with_oracle(seed in any::<u64>(), rows in 6usize..30, keep in prop::sample::select(vec![1.0, 0.99])) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, rows, 3);
        let y = random_matrix(&mut r, rows, 3);
        prop_assert!((score(&x, &y, keep) - svcca_oracle(&x, &y, keep)).abs() <= 1e-6);
    }

    #[test]
    fn symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, 24, 3);
        let y = random_matrix(&mut r, 24, 3);
        prop_assert!((score(&x, &y, 0.99) - score(&y, &x, 0.99)).abs() <= 1e-8);
    }

    #[test]
    fn orthogonal_invariance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, 24, 3);
        let y = random_matrix(&mut r, 24, 3);
        let q = random_orthogonal(&mut r, 3);
        prop_assert!((score(&(&x * q), &y, 0.99) - score(&x, &y, 0.99)).abs() <= 1e-6);
    }

    #[test]
    fn affine_column_rescaling_invariance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, 24, 3);
        let y = random_matrix(&mut r, 24, 3);
        let mut xs = x.clone();
        for mut col in xs.column_iter_mut() {
            let (a, b): (f64, f64) = (r.random_range(0.2..5.0), r.random_range(-3.0..3.0));
            col.apply(|v| *v = a * *v + b);
        }
        let base = score(&x, &y, 1.0);
        prop_assert!((score(&xs, &y, 1.0) - base).abs() <= 1e-6);
        prop_assert!((svcca_oracle(&xs, &y, 1.0) - base).abs() <= 1e-6);
    }

    #[test]
    fn cosine_scale_invariant_and_filtered(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let mk = |r: &mut rand_chacha::ChaCha8Rng, key: usize, correct: bool| AnchorStates {
            sample_key: format!("k{key}"),
            correct: Some(correct),
            hidden: Array2::from_shape_fn((5, 7), |_| r.random_range(-2.0..2.0)),
        };
        let a: Vec<AnchorStates> = (0..n).map(|k| mk(&mut r, k, true)).collect();
        let b: Vec<AnchorStates> = (0..n).map(|k| mk(&mut r, k, true)).collect();
        let pair = ConditionPair(
            Condition::new(Language::En, Order::Forward),
            Condition::new(Language::Zh, Order::Forward),
        );
        let (base, _) = layerwise_cosine(pair, &a, &b).unwrap();

        let scaled: Vec<AnchorStates> = b.iter().map(|s| AnchorStates { hidden: &s.hidden * 3.0, ..s.clone() }).collect();
        let (p, _) = layerwise_cosine(pair, &a, &scaled).unwrap();
        for (x, y) in p.mean.iter().zip(&base.mean) {
            prop_assert!((x - y).abs() <= 1e-12);
        }

        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.push(mk(&mut r, 99, false));
        b2.push(mk(&mut r, 99, true));
        a2.push(mk(&mut r, 100, true));
        b2.push(mk(&mut r, 100, false));
        prop_assert_eq!(layerwise_cosine(pair, &a2, &b2).unwrap().0, base);
    }
}
