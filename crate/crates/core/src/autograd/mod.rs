//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use params::{Bindings, ParamId, ParamStore};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::identity(2));
        let b = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let c = tape.matmul(i, b).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_matmul_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(random(&[3, 4], &mut rng));
        let c = tape.matmul(z, b).unwrap();
        assert_eq!(tape.shape(c), &[2, 4]);
        assert!(tape.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn matmul_sum_gradient() {
        // d sum(A B) / dA = 1 * B^T, broadcast over rows: [[2,5],[2,5]].
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::identity(2).with_requires_grad(true));
        let b = tape.constant(Tensor::matrix(2, 1, vec![2.0, 5.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        let s = tape.sum(c);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[2.0, 5.0, 2.0, 5.0]);

        let fd = check_gradients(
            &[Tensor::identity(2)],
            1e-5,
            |t, v| {
                let b = t.constant(Tensor::matrix(2, 1, vec![2.0, 5.0]).unwrap());
                let c = t.matmul(v[0], b)?;
                Ok(t.sum(c))
            },
        )
        .unwrap();
        assert!(fd.max_abs_error < 1e-9);
    }

    #[test]
    fn softmax_rows_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![0.0, 0.0], vec![1000.0, 0.0]]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        let v = tape.value(y).data().to_vec();
        assert_eq!(&v[..2], &[0.5, 0.5]);
        assert!((v[2] - 1.0).abs() < 1e-12 && v[3] < 1e-300 + 1e-12);
        assert!(tape.value(y).is_finite());
    }

    #[test]
    fn softmax_jacobian_matches_fd() {
        let x = Tensor::matrix(1, 3, vec![0.3, -0.7, 1.1]).unwrap();
        for j in 0..3 {
            let r = check_gradients(std::slice::from_ref(&x), 1e-5, |t, v| {
                let y = t.softmax_rows(v[0])?;
                t.element(y, j)
            })
            .unwrap();
            assert!(r.max_abs_error < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn layer_norm_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap());
        let g = tape.constant(Tensor::filled(&[2], 1.0));
        let b = tape.constant(Tensor::zeros(&[2]));
        let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
        let v = tape.value(y).data();
        assert!((v[0] - 1.0).abs() < 1e-9 && (v[1] + 1.0).abs() < 1e-9);

        let x = tape.constant(Tensor::from_rows(&[vec![5.0, 5.0, 5.0]]).unwrap());
        let g = tape.constant(Tensor::filled(&[3], 1.0));
        let b = tape.constant(Tensor::zeros(&[3]));
        let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn layer_norm_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[2, 4], &mut rng);
        let g = random(&[4], &mut rng);
        let b = random(&[4], &mut rng);
        let w = random(&[2, 4], &mut rng);
        let r = check_gradients(&[x, g, b], 1e-5, |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            let w = t.constant(w.clone());
            let p = t.mul(y, w)?;
            Ok(t.sum(p))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![3.0, 4.0]).unwrap());
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[4.0, 6.0]);
        let r = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap());
        let r = tape.relu(r);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z);
        assert_eq!(tape.value(s).item(), 0.5);
        let bad = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.add(a, bad).is_err());
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 1.0]).unwrap().with_requires_grad(true));
        let y = tape.relu(x);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_sum_and_accumulation() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.1, 0.2, 0.3]).unwrap().with_requires_grad(true));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0, 2.0]);
        tape.zero_grad();
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.1, 0.2]).unwrap().with_requires_grad(true));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn composite_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[3, 4], &mut rng);
        let w = random(&[4, 4], &mut rng);
        let g = random(&[4], &mut rng);
        let b = random(&[4], &mut rng);
        let mix = random(&[3, 4], &mut rng);
        let r = check_gradients(&[x, w, g, b], 1e-5, |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let a = t.softmax_rows(h)?;
            let n = t.layer_norm(a, v[2], v[3], 1e-5)?;
            let m = t.constant(mix.clone());
            let p = t.mul(n, m)?;
            Ok(t.sum(p))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn every_elementwise_op_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[3, 4], &mut rng);
        let row = random(&[4], &mut rng);
        let w = random(&[3, 8], &mut rng);
        let r = check_gradients(&[a, b, row], 1e-5, |t, v| {
            let s = t.sub(v[0], v[1])?;
            let m = t.mul(s, v[0])?;
            let pos = t.sigmoid(v[1]);
            let d = t.div(m, pos)?;
            let ar = t.add_row(d, v[2])?;
            let th = t.tanh(ar);
            let ex = t.exp(th);
            let lg = t.log(ex);
            let mx = t.maximum(lg, v[1])?;
            let mn = t.minimum(mx, v[0])?;
            let pw = t.pow_scalar(pos, 2.5);
            let sc = t.mul_scalar(pw, -1.5);
            let sc = t.add_scalar(sc, 0.25);
            let rl = t.relu(v[0]);
            let cl = t.clamp(v[1], -0.5, 0.5);
            let cat = t.concat_cols(&[mn, sc])?;
            let sr = t.slice_rows(cat, 1, 3)?;
            let sc2 = t.slice_cols(cat, 2, 6)?;
            let tr = t.transpose(sc2)?;
            let tr = t.transpose(tr)?;
            let gr = t.gather_rows(tr, &[2, 0, 2])?;
            let rs = t.reshape(gr, &[12])?;
            let wv = t.constant(w.clone());
            let wp = t.mul(cat, wv)?;
            let s1 = t.sum(wp);
            let s2 = t.mean(sr);
            let s3 = t.sum(rs);
            let s4 = t.sum(rl);
            let s5 = t.sum(cl);
            let e = t.element(rs, 5)?;
            let s = t.add(s1, s2)?;
            let s = t.add(s, s3)?;
            let s = t.add(s, s4)?;
            let s = t.add(s, s5)?;
            t.add(s, e)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
