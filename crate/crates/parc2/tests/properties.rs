//! Property tests over the operator invariants.

use proptest::prelude::*;

use parc2::ops::{parc_oh, parc_oversized, parc_ow, OversizedKernelPair};
use parc2::oracle::check_equivalence;
use parc2::tensor::{
    gelu, pad_zero, pointwise_conv, random_normal, FeatureMap, Matrix, PointwiseParams,
};
use parc2::Rng;

fn seeded_map(seed: u64, n: usize, c: usize, h: usize, w: usize) -> FeatureMap<f32> {
    random_normal((n, c, h, w), &mut Rng::new(seed), 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pad_zero_with_zero_pads_is_identity(
        seed in 0u64..1000,
        n in 1usize..3,
        c in 1usize..4,
        h in 1usize..8,
        w in 1usize..8,
    ) {
        let x = seeded_map(seed, n, c, h, w);
        prop_assert_eq!(pad_zero(&x, 0, 0, 0, 0), x);
    }

    #[test]
    fn pad_zero_preserves_interior_and_zeroes_border(
        seed in 0u64..1000,
        h in 1usize..6,
        w in 1usize..6,
        pads in (0usize..3, 0usize..3, 0usize..3, 0usize..3),
    ) {
        let x = seeded_map(seed, 1, 2, h, w);
        let (top, bottom, left, right) = pads;
        let p = pad_zero(&x, top, bottom, left, right);
        prop_assert_eq!(p.shape(), (1, 2, h + top + bottom, w + left + right));
        for ci in 0..2 {
            for i in 0..h + top + bottom {
                for j in 0..w + left + right {
                    let inside = i >= top && i < top + h && j >= left && j < left + w;
                    let expected = if inside { x.at(0, ci, i - top, j - left) } else { 0.0 };
                    prop_assert_eq!(p.at(0, ci, i, j), expected);
                }
            }
        }
    }

    #[test]
    fn pointwise_is_linear_without_bias(
        seed in 0u64..1000,
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
    ) {
        let x = seeded_map(seed, 1, 3, 4, 4);
        let y = seeded_map(seed + 1, 1, 3, 4, 4);
        let mut rng = Rng::new(seed + 2);
        let mut p: PointwiseParams<f32> = PointwiseParams::random(3, 3, &mut rng, 1.0);
        p.bias = vec![0.0; 3];

        // f(a x + b y)
        let mut combo = FeatureMap::<f32>::zeros(1, 3, 4, 4);
        for (d, (xv, yv)) in combo
            .data_mut()
            .iter_mut()
            .zip(x.data().iter().zip(y.data().iter()))
        {
            *d = a * xv + b * yv;
        }
        let lhs = pointwise_conv(&combo, &p).unwrap();

        // a f(x) + b f(y)
        let fx = pointwise_conv(&x, &p).unwrap();
        let fy = pointwise_conv(&y, &p).unwrap();
        let mut rhs = FeatureMap::<f32>::zeros(1, 3, 4, 4);
        for (d, (xv, yv)) in rhs
            .data_mut()
            .iter_mut()
            .zip(fx.data().iter().zip(fy.data().iter()))
        {
            *d = a * xv + b * yv;
        }

        for (l, r) in lhs.data().iter().zip(rhs.data().iter()) {
            let denom = l.abs().max(r.abs()).max(1.0);
            prop_assert!((l - r).abs() / denom <= 1e-5, "{l} vs {r}");
        }
    }

    // Exact GELU is not globally monotone: it dips to about -0.17 at
    // x = -0.7518 and decreases left of that point. The checkable properties
    // are monotonicity right of the minimum and the global lower bound.
    #[test]
    fn gelu_is_monotone_right_of_its_minimum(lo in -0.75f32..6.0, step in 0.001f32..0.5) {
        let vals: Vec<f32> = (0..64).map(|i| lo + step * i as f32).collect();
        let x = FeatureMap::from_vec((1, 1, 1, 64), vals).unwrap();
        let y = gelu(&x);
        for pair in y.data().windows(2) {
            prop_assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn gelu_respects_global_lower_bound(lo in -40.0f32..40.0, step in 0.001f32..1.0) {
        let vals: Vec<f32> = (0..64).map(|i| lo + step * i as f32).collect();
        let x = FeatureMap::from_vec((1, 1, 1, 64), vals).unwrap();
        let y = gelu(&x);
        for v in y.data() {
            prop_assert!(*v >= -0.17005);
        }
    }

    #[test]
    fn batch_items_process_independently_bitwise(
        seed in 0u64..1000,
        c in 1usize..4,
        h in 2usize..7,
        w in 2usize..7,
    ) {
        let batch = seeded_map(seed, 2, c, h, w);
        let mut rng = Rng::new(seed + 7);
        let pair: OversizedKernelPair<f32> = OversizedKernelPair::random(c, h, w, &mut rng);
        let p: PointwiseParams<f32> = PointwiseParams::random(c, c, &mut rng, 0.5);

        let whole = pointwise_conv(&parc_oversized(&batch, &pair).unwrap(), &p).unwrap();
        for item in 0..2 {
            let mut single = FeatureMap::<f32>::zeros(1, c, h, w);
            for ci in 0..c {
                single.plane_mut(0, ci).copy_from_slice(batch.plane(item, ci));
            }
            let one = pointwise_conv(&parc_oversized(&single, &pair).unwrap(), &p).unwrap();
            for ci in 0..c {
                prop_assert_eq!(one.plane(0, ci), whole.plane(item, ci));
            }
        }
    }

    #[test]
    fn oversized_order_commutes(
        seed in 0u64..1000,
        c in 1usize..4,
        h in 1usize..8,
        w in 1usize..8,
    ) {
        let x = seeded_map(seed, 1, c, h, w);
        let mut rng = Rng::new(seed + 13);
        let pair: OversizedKernelPair<f32> = OversizedKernelPair::random(c, h, w, &mut rng);
        let hw = parc_ow(&parc_oh(&x, &pair).unwrap(), &pair).unwrap();
        let wh = parc_oh(&parc_ow(&x, &pair).unwrap(), &pair).unwrap();
        let rep = check_equivalence(&hw, &wh, 1e-4).unwrap();
        prop_assert!(rep.pass, "max diff {}", rep.max_abs_diff);
    }

    #[test]
    fn resize_round_trip_is_identity_for_same_size(
        seed in 0u64..1000,
        c in 1usize..4,
        h in 1usize..9,
        w in 1usize..9,
    ) {
        let mut rng = Rng::new(seed);
        let pair: OversizedKernelPair<f32> = OversizedKernelPair::random(c, h, w, &mut rng);
        let same = parc2::ops::resize_kernel_linear(&pair, h, w).unwrap();
        prop_assert_eq!(same, pair);
    }
}

#[test]
fn pointwise_weight_shape_validation() {
    let w = Matrix::<f32>::zeros(3, 2);
    assert!(PointwiseParams::new(w, vec![0.0; 2]).is_err());
}
