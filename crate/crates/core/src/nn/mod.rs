//! Minimal dense numerics with reverse-mode differentiation.
//!
//! Only the operators the distillation objective needs are provided: affine
//! and temporal convolution layers, ReLU, cosine similarity, log-softmax and
//! KL divergence.

mod layers;
mod optim;
mod tape;
mod tensor;

pub use layers::{AffineLayer, AffineVars, Conv1dLayer, Conv1dVars};
pub use optim::{Adam, AdamConfig};
pub use tape::{log_softmax_values, Axis, Gradients, KlDirection, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Epsilon used by the tolerant cosine mode.
pub const COSINE_EPS: f64 = 1e-12;

pub fn affine_forward(tape: &mut Tape, layer: &AffineVars, x: Var) -> Result<Var> {
    layer.forward(tape, x)
}

pub fn relu(tape: &mut Tape, x: Var) -> Var {
    tape.relu(x)
}

pub fn cosine_similarity_matrix(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    tape.cosine_matrix(a, b, None)
}

pub fn log_softmax(tape: &mut Tape, x: Var, axis: Axis) -> Result<Var> {
    tape.log_softmax(x, axis)
}

/// Forward KL of constant row distributions `target` against the row
/// log-distributions in `predicted_log`, averaged over rows.
pub fn kl_divergence(tape: &mut Tape, target: &Tensor, predicted_log: Var) -> Result<Var> {
    let target_log = target.map(|t| if t > 0.0 { t.ln() } else { f64::NEG_INFINITY });
    tape.kl_divergence(
        target.clone(),
        target_log,
        predicted_log,
        Axis::Row,
        KlDirection::Forward,
    )
}

pub fn backward(tape: &Tape, loss: Var) -> Result<Gradients> {
    tape.backward(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::KpError;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Central finite differences of `f` around every entry of `inputs`,
    /// compared against the tape gradient. Returns the worst relative error.
    fn grad_check(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (i, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[i]).unwrap().data().to_vec();
            for k in 0..input.len() {
                let eval = |delta: f64| {
                    let mut t = Tape::new();
                    let vs: Vec<Var> = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, x)| {
                            let mut x = x.clone();
                            if j == i {
                                x.data_mut()[k] += delta;
                            }
                            t.param(x)
                        })
                        .collect();
                    let l = f(&mut t, &vs);
                    t.value(l).data()[0]
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn affine_examples() {
        let cases = [
            (mat(&[&[1.0, 0.0], &[0.0, 1.0]]), vec![0.0, 0.0], mat(&[&[3.0, 4.0]]), vec![3.0, 4.0]),
            (mat(&[&[2.0]]), vec![1.0], mat(&[&[3.0]]), vec![7.0]),
            (mat(&[&[1.0, 1.0]]), vec![-1.0], mat(&[&[0.5, 0.5]]), vec![0.0]),
        ];
        for (w, b, x, want) in cases {
            let layer = AffineLayer::new(w, Tensor::vector(b)).unwrap();
            let mut tape = Tape::new();
            let vars = layer.bind(&mut tape, true);
            let xv = tape.constant(x);
            let y = affine_forward(&mut tape, &vars, xv).unwrap();
            assert_eq!(tape.value(y).data(), &want[..]);
        }
    }

    #[test]
    fn affine_rejects_width_mismatch() {
        let layer = AffineLayer::new(mat(&[&[1.0, 1.0]]), Tensor::vector(vec![0.0])).unwrap();
        let mut tape = Tape::new();
        let vars = layer.bind(&mut tape, true);
        let x = tape.constant(mat(&[&[1.0, 2.0, 3.0]]));
        assert!(matches!(
            affine_forward(&mut tape, &vars, x),
            Err(KpError::Dimension(_))
        ));
    }

    #[test]
    fn relu_examples() {
        let mut tape = Tape::new();
        for (input, want) in [
            (vec![-1.0, 0.0, 2.0], vec![0.0, 0.0, 2.0]),
            (vec![0.5], vec![0.5]),
            (vec![-3.0, -1.0], vec![0.0, 0.0]),
        ] {
            let x = tape.param(Tensor::vector(input));
            let y = relu(&mut tape, x);
            assert_eq!(tape.value(y).data(), &want[..]);
        }
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.0, 1.0]));
        let y = tape.relu(x);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn cosine_examples() {
        let cases = [
            (mat(&[&[1.0, 0.0]]), mat(&[&[0.0, 1.0]]), vec![0.0]),
            (mat(&[&[2.0, 0.0]]), mat(&[&[1.0, 0.0]]), vec![1.0]),
            (
                mat(&[&[1.0, 0.0], &[0.0, 1.0]]),
                mat(&[&[1.0, 0.0], &[0.0, 1.0]]),
                vec![1.0, 0.0, 0.0, 1.0],
            ),
        ];
        for (a, b, want) in cases {
            let mut tape = Tape::new();
            let (a, b) = (tape.constant(a), tape.constant(b));
            let c = cosine_similarity_matrix(&mut tape, a, b).unwrap();
            assert!(close(tape.value(c).data(), &want, 1e-15));
        }
    }

    #[test]
    fn cosine_zero_row_is_degenerate_unless_tolerant() {
        let mut tape = Tape::new();
        let a = tape.constant(mat(&[&[0.0, 0.0]]));
        let b = tape.constant(mat(&[&[1.0, 0.0]]));
        assert!(matches!(
            cosine_similarity_matrix(&mut tape, a, b),
            Err(KpError::DegenerateInput(_))
        ));
        let c = tape.cosine_matrix(a, b, Some(COSINE_EPS)).unwrap();
        assert_eq!(tape.value(c).data(), &[0.0]);
    }

    #[test]
    fn log_softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[0.0, 0.0]]));
        let y = log_softmax(&mut tape, x, Axis::Row).unwrap();
        assert!(close(tape.value(y).data(), &[0.5f64.ln(), 0.5f64.ln()], 1e-15));

        let x = tape.constant(mat(&[&[1.0, 0.0]]));
        let y = log_softmax(&mut tape, x, Axis::Row).unwrap();
        let e = std::f64::consts::E;
        let want = [(e / (e + 1.0)).ln(), (1.0 / (e + 1.0)).ln()];
        assert!(close(tape.value(y).data(), &want, 1e-15));
        assert!(close(tape.value(y).data(), &[-0.3133, -1.3133], 1e-4));

        let x = tape.constant(mat(&[&[1000.0, 0.0]]));
        let y = log_softmax(&mut tape, x, Axis::Row).unwrap();
        let v = tape.value(y).data();
        // exact: [-ln(1 + e^-1000), -1000 - ln(1 + e^-1000)]
        assert!(v.iter().all(|x| x.is_finite()));
        assert!(close(v, &[0.0, -1000.0], 1e-12));
    }

    #[test]
    fn kl_examples() {
        let half = 0.5f64.ln();
        let cases = [
            (mat(&[&[0.5, 0.5]]), mat(&[&[half, half]]), 0.0),
            (mat(&[&[1.0, 0.0]]), mat(&[&[half, half]]), std::f64::consts::LN_2),
            (
                mat(&[&[0.25, 0.75]]),
                mat(&[&[0.25f64.ln(), 0.75f64.ln()]]),
                0.0,
            ),
        ];
        for (target, pred, want) in cases {
            let mut tape = Tape::new();
            let p = tape.constant(pred);
            let kl = kl_divergence(&mut tape, &target, p).unwrap();
            assert!((tape.value(kl).data()[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = tape.sum(x);
        assert_eq!(backward(&tape, s).unwrap().get(x).unwrap().data(), &[1.0; 3]);

        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![3.0]));
        let sq = tape.square(x);
        let s = tape.sum(sq);
        let g = backward(&tape, s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
        assert_eq!(g.get(s).unwrap().data(), &[1.0]);
    }

    #[test]
    fn backward_on_detached_value_is_usage_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0]));
        let s = tape.sum(x);
        assert!(matches!(tape.backward(s), Err(KpError::Usage(_))));
        let y = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(y), Err(KpError::Usage(_))));
    }

    #[test]
    fn gradients_accumulate_over_reuse() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![2.0]));
        let y = tape.weighted_sum(x, 3.0, x, 4.0).unwrap();
        let s = tape.sum(y);
        assert_eq!(tape.backward(s).unwrap().get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn every_operator_passes_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let x = random(&mut rng, &[3, 4]);
            let w = random(&mut rng, &[2, 4]);
            let b = random(&mut rng, &[2]);
            let err = grad_check(&[x, w, b], |t, v| {
                let y = t.affine(v[0], v[1], v[2]).unwrap();
                let y = t.relu(y);
                let sq = t.square(y);
                t.sum(sq)
            });
            assert!(err < 1e-4, "affine/relu {err}");

            let a = random(&mut rng, &[3, 5]);
            let b = random(&mut rng, &[4, 5]);
            let target = random(&mut rng, &[3, 4]);
            for axis in [Axis::Row, Axis::Column] {
                let err = grad_check(&[a.clone(), b.clone(), target.clone()], |t, v| {
                    let c = t.cosine_matrix(v[0], v[1], None).unwrap();
                    let c = t.weighted_sum(c, 1.0, v[2], 0.5).unwrap();
                    let ls = t.log_softmax(c, axis).unwrap();
                    let sq = t.square(ls);
                    t.sum(sq)
                });
                assert!(err < 1e-4, "cosine/log_softmax {err}");
            }
            let err = grad_check(&[a.clone(), b.clone()], |t, v| {
                let d = t.neg_sq_dist(v[0], v[1]).unwrap();
                let d = t.scale(d, 0.3);
                let sq = t.square(d);
                t.sum(sq)
            });
            assert!(err < 1e-4, "neg_sq_dist {err}");

            let x = random(&mut rng, &[2, 3, 9]);
            let w = random(&mut rng, &[4, 3, 3]);
            let b = random(&mut rng, &[4]);
            let err = grad_check(&[x, w, b], |t, v| {
                let y = t.conv1d(v[0], v[1], v[2]).unwrap();
                let y = t.relu(y);
                let m = t.mean_time(y).unwrap();
                let f = t.reshape(m, vec![8]).unwrap();
                let sq = t.square(f);
                t.sum(sq)
            });
            assert!(err < 1e-4, "conv1d {err}");

            let logits = random(&mut rng, &[3, 4]);
            let target_logits = random(&mut rng, &[3, 4]);
            for axis in [Axis::Row, Axis::Column] {
                for direction in [KlDirection::Forward, KlDirection::Reverse] {
                    let tl = Tensor::new(vec![3, 4], log_softmax_values(3, 4, target_logits.data(), axis)).unwrap();
                    let tp = tl.map(f64::exp);
                    let err = grad_check(&[logits.clone()], |t, v| {
                        let p = t.log_softmax(v[0], axis).unwrap();
                        t.kl_divergence(tp.clone(), tl.clone(), p, axis, direction).unwrap()
                    });
                    assert!(err < 1e-4, "kl {axis:?} {direction:?} {err}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn log_softmax_normalizes(rows in 1usize..5, cols in 1usize..6, seed in any::<u64>(), mag in 0.0f64..1000.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-mag..=mag)).collect();
            for axis in [Axis::Row, Axis::Column] {
                let out = log_softmax_values(rows, cols, &data, axis);
                let (outer, inner) = if axis == Axis::Row { (rows, cols) } else { (cols, rows) };
                for o in 0..outer {
                    let s: f64 = (0..inner)
                        .map(|i| if axis == Axis::Row { out[o * cols + i] } else { out[i * cols + o] }.exp())
                        .sum();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn cosine_bounded_and_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, &[3, 4]);
            let b = random(&mut rng, &[2, 4]);
            let mut tape = Tape::new();
            let (av, bv) = (tape.constant(a.clone()), tape.constant(b));
            let c = tape.cosine_matrix(av, bv, None).unwrap();
            let mut scaled = a;
            for v in &mut scaled.data_mut()[4..8] {
                *v *= scale;
            }
            let sv = tape.constant(scaled);
            let c2 = tape.cosine_matrix(sv, bv, None).unwrap();
            for (x, y) in tape.value(c).data().iter().zip(tape.value(c2).data()) {
                prop_assert!(x.abs() <= 1.0 + 1e-12);
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn kl_is_nonnegative_and_zero_on_match(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t_logits = random(&mut rng, &[3, 5]);
            let p_logits = random(&mut rng, &[3, 5]);
            let target = Tensor::new(vec![3, 5], log_softmax_values(3, 5, t_logits.data(), Axis::Row)).unwrap().map(f64::exp);
            let mut tape = Tape::new();
            let pl = tape.constant(p_logits);
            let p = tape.log_softmax(pl, Axis::Row).unwrap();
            let kl = kl_divergence(&mut tape, &target, p).unwrap();
            prop_assert!(tape.value(kl).data()[0] >= -1e-12);
            let tl = tape.constant(t_logits);
            let same = tape.log_softmax(tl, Axis::Row).unwrap();
            let exact = Tensor::new(vec![3, 5], tape.value(same).data().iter().map(|v| v.exp()).collect()).unwrap();
            let kl0 = kl_divergence(&mut tape, &exact, same).unwrap();
            prop_assert!(tape.value(kl0).data()[0].abs() < 1e-12);
        }
    }
}
