//! The building blocks of an ST-Conv module, expressed as tape operations.

use crate::tensor::{Tensor, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

fn flat<'t>(h: Var<'t>) -> Result<Var<'t>> {
    let shape = h.shape();
    let n = shape[0];
    h.reshape(&[n, shape[1..].iter().product()])
}

/// Graph convolution over one meta-path subgraph.
///
/// `h` is `(N, T, c_in)`, `propagation` is `N × N` and `kernels` is
/// `(c_out, c_in, T, T)`. Output channel `j` is `Σ_i relu(P · H_i · O_ji)`.
pub fn gcn_layer<'t>(h: Var<'t>, propagation: Var<'t>, kernels: Var<'t>) -> Result<Var<'t>> {
    let shape = h.shape();
    if shape.len() != 3 {
        return Err(TensorError::ShapeMismatch {
            op: "gcn_layer",
            lhs: shape,
            rhs: propagation.shape(),
        });
    }
    let spread = propagation.matmul(flat(h)?)?.reshape(&shape)?;
    spread.channel_mix(kernels)?.relu().sum_axis(3)
}

/// Row-normalised attention over a neighbour mask: `s_ij ∝ exp(leaky(a·[H_i ‖ H_j]))`
/// for `j` in the mask and exactly 0 elsewhere. `h` may have any trailing shape.
pub fn node_attention<'t>(h: Var<'t>, mask: &[bool], a: Var<'t>, slope: f64) -> Result<Var<'t>> {
    let x = flat(h)?;
    let (n, d) = (x.shape()[0], x.shape()[1]);
    if a.shape() != [2 * d, 1] || mask.len() != n * n {
        return Err(TensorError::ShapeMismatch {
            op: "node_attention",
            lhs: x.shape(),
            rhs: a.shape(),
        });
    }
    let tape = x.tape();
    let ones = tape.constant(Tensor::ones(&[1, n]));
    let src = x.matmul(a.narrow(0, 0, d)?)?.matmul(ones)?;
    let dst = x.matmul(a.narrow(0, d, d)?)?.matmul(ones)?.transpose()?;
    src.add(dst)?.leaky_relu(slope).masked_softmax(1, Some(mask))
}

/// `S · H` applied to every (time, channel) column; keeps the shape of `h`.
pub fn node_aggregate<'t>(s: Var<'t>, h: Var<'t>) -> Result<Var<'t>> {
    let shape = h.shape();
    s.matmul(flat(h)?)?.reshape(&shape)
}

/// Softmax-normalised importance of each meta-path embedding:
/// `e_p = mean_i r·tanh(Q·H_i + b)`.
pub fn metapath_attention<'t>(h_paths: &[Var<'t>], query: Var<'t>, bias: Var<'t>, context: Var<'t>) -> Result<Var<'t>> {
    let first = *h_paths.first().ok_or(TensorError::Empty {
        op: "metapath_attention",
    })?;
    let tape = first.tape();
    let n = first.shape()[0];
    let ones = tape.constant(Tensor::ones(&[n, 1]));
    let spread_bias = ones.matmul(bias)?;
    let scores = h_paths
        .iter()
        .map(|&h| {
            flat(h)?
                .matmul(query)?
                .add(spread_bias)?
                .tanh()
                .matmul(context)
                .map(Var::mean)
        })
        .collect::<Result<Vec<_>>>()?;
    Var::concat(&scores, 0)?.softmax(0)
}

/// `Σ_p w_p · H_p`.
pub fn metapath_fuse<'t>(weights: Var<'t>, h_paths: &[Var<'t>]) -> Result<Var<'t>> {
    if weights.shape() != [h_paths.len()] || h_paths.is_empty() {
        return Err(TensorError::ShapeMismatch {
            op: "metapath_fuse",
            lhs: weights.shape(),
            rhs: vec![h_paths.len()],
        });
    }
    let mut acc = h_paths[0].scale_by(weights.narrow(0, 0, 1)?)?;
    for (p, &h) in h_paths.iter().enumerate().skip(1) {
        acc = acc.add(h.scale_by(weights.narrow(0, p, 1)?)?)?;
    }
    Ok(acc)
}

/// Valid cross-correlation over (node, time) followed by the rectifier.
pub fn temporal_conv<'t>(h: Var<'t>, kernels: Var<'t>) -> Result<Var<'t>> {
    Ok(h.conv(kernels)?.relu())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn gcn_single_node_identity_passes_through() {
        let tape = Tape::new();
        let h = tape.constant(t(&[1, 3, 1], &[0.5, 2.0, 1.0]));
        let p = tape.constant(t(&[1, 1], &[1.0]));
        let o = tape.constant(Tensor::eye(3).reshaped(&[1, 1, 3, 3]).unwrap());
        let out = gcn_layer(h, p, o).unwrap();
        assert_eq!(*out.value(), t(&[1, 3, 1], &[0.5, 2.0, 1.0]));
    }

    #[test]
    fn gcn_isolated_nodes_do_not_mix() {
        let tape = Tape::new();
        let o = tape.constant(Tensor::full(&[2, 1, 2, 2], 0.3));
        let p = tape.constant(Tensor::eye(2));
        let a = gcn_layer(tape.constant(t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0])), p, o).unwrap();
        let b = gcn_layer(tape.constant(t(&[2, 2, 1], &[1.0, 2.0, -7.0, 9.0])), p, o).unwrap();
        assert_eq!(a.value().data()[..4], b.value().data()[..4]);
    }

    #[test]
    fn gcn_two_node_hand_value() {
        // P = [[.5,.5],[.5,.5]], T = 2, one channel in, two channels out.
        let tape = Tape::new();
        let h = tape.constant(t(&[2, 2, 1], &[1.0, 2.0, 3.0, -4.0]));
        let p = tape.constant(Tensor::full(&[2, 2], 0.5));
        let o = tape.constant(t(&[2, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0]));
        let out = gcn_layer(h, p, o).unwrap();
        // P·H rows are both (2, -1); channel 0 is relu(identity) = (2, 0);
        // channel 1 maps (x0, x1) ↦ (x1, -x0) = (-1, -2) → relu (0, 0).
        assert_eq!(*out.value(), t(&[2, 2, 2], &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn attention_self_only_is_one() {
        let tape = Tape::new();
        let h = tape.constant(t(&[2, 1], &[1.0, 5.0]));
        let a = tape.constant(t(&[2, 1], &[0.3, -0.2]));
        let s = node_attention(h, &[true, false, false, true], a, 0.2).unwrap();
        assert_eq!(s.value().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn attention_identical_neighbors_split_evenly() {
        let tape = Tape::new();
        let h = tape.constant(t(&[3, 1], &[1.0, 2.0, 2.0]));
        let a = tape.constant(t(&[2, 1], &[0.7, 0.4]));
        let mask = [true, true, true, true, true, false, true, false, true];
        let s = node_attention(h, &mask, a, 0.2).unwrap();
        let v = s.value();
        assert!((v.at(&[0, 1]) - v.at(&[0, 2])).abs() < 1e-15);
        assert_eq!(v.at(&[1, 2]), 0.0);
    }

    #[test]
    fn attention_three_node_hand_value() {
        // Scores for row 0: leaky(1·h0 + 1·hj) with h = (0, 1, -2), slope 0.2
        // → (0, 1, -0.4); softmax of (0, 1, -0.4).
        let tape = Tape::new();
        let h = tape.constant(t(&[3, 1], &[0.0, 1.0, -2.0]));
        let a = tape.constant(t(&[2, 1], &[1.0, 1.0]));
        let s = node_attention(h, &[true; 9], a, 0.2).unwrap();
        let z = 1.0 + 1f64.exp() + (-0.4f64).exp();
        let want = [1.0 / z, 1f64.exp() / z, (-0.4f64).exp() / z];
        for (j, w) in want.iter().enumerate() {
            assert!((s.value().at(&[0, j]) - w).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_identity_and_one_hot() {
        let tape = Tape::new();
        let h = tape.constant(t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]));
        let id = node_aggregate(tape.constant(Tensor::eye(2)), h).unwrap();
        assert_eq!(*id.value(), *h.value());
        let copy = node_aggregate(tape.constant(t(&[2, 2], &[0.0, 1.0, 0.0, 1.0])), h).unwrap();
        assert_eq!(copy.value().data(), &[3.0, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn single_path_weight_is_exactly_one() {
        let tape = Tape::new();
        let h = tape.constant(t(&[2, 2], &[1.0, -2.0, 0.5, 3.0]));
        let q = tape.constant(t(&[2, 2], &[0.1, 0.2, 0.3, 0.4]));
        let b = tape.constant(Tensor::zeros(&[1, 2]));
        let r = tape.constant(t(&[2, 1], &[1.0, -1.0]));
        assert_eq!(metapath_attention(&[h], q, b, r).unwrap().value().data(), &[1.0]);
        let w = metapath_attention(&[h, h], q, b, r).unwrap();
        assert_eq!(w.value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn two_path_hand_value() {
        // D = 1, q = 1, Q = 1, b = 0, r = 1: e_p = mean_i tanh(h_pi).
        let tape = Tape::new();
        let h1 = tape.constant(t(&[2, 1], &[1.0, 0.0]));
        let h2 = tape.constant(t(&[2, 1], &[-1.0, 2.0]));
        let one = tape.constant(t(&[1, 1], &[1.0]));
        let b = tape.constant(Tensor::zeros(&[1, 1]));
        let w = metapath_attention(&[h1, h2], one, b, one).unwrap();
        let e1 = 1f64.tanh() / 2.0;
        let e2 = ((-1f64).tanh() + 2f64.tanh()) / 2.0;
        let want = e1.exp() / (e1.exp() + e2.exp());
        assert!((w.value().data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn fuse_cases() {
        let tape = Tape::new();
        let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.constant(t(&[1, 2], &[3.0, -4.0]));
        let c = tape.constant(t(&[1, 2], &[9.0, 9.0]));
        let w = tape.constant(t(&[3], &[1.0, 0.0, 0.0]));
        assert_eq!(metapath_fuse(w, &[a, b, c]).unwrap().value().data(), &[1.0, 2.0]);
        let w = tape.constant(t(&[2], &[0.3, 0.7]));
        let out = metapath_fuse(w, &[a, b]).unwrap().value();
        assert!((out.data()[0] - 2.4).abs() < 1e-15 && (out.data()[1] + 2.2).abs() < 1e-15);
        let same = metapath_fuse(w, &[a, a]).unwrap().value();
        assert!(same.max_abs_diff(&a.value()) < 1e-15);
    }

    #[test]
    fn temporal_unit_kernel_is_activation() {
        let tape = Tape::new();
        let h = tape.constant(t(&[2, 2, 1], &[1.0, -2.0, 3.0, -4.0]));
        let k = tape.constant(t(&[1, 1, 1, 1], &[1.0]));
        assert_eq!(temporal_conv(h, k).unwrap().value().data(), &[1.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn temporal_shape_law() {
        let tape = Tape::new();
        let h = tape.constant(Tensor::zeros(&[82, 20, 1]));
        let k = tape.constant(Tensor::zeros(&[8, 1, 3, 1]));
        assert_eq!(temporal_conv(h, k).unwrap().shape(), vec![82, 18, 8]);
    }

    fn random_mask(n: usize, bits: &[bool]) -> Vec<bool> {
        let mut m = vec![false; n * n];
        for i in 0..n {
            m[i * n + i] = true;
            for j in (i + 1)..n {
                let on = bits[(i * n + j) % bits.len()];
                m[i * n + j] = on;
                m[j * n + i] = on;
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn attention_rows_stochastic_on_mask(
            n in 1usize..8,
            vals in proptest::collection::vec(-3.0f64..3.0, 24),
            bits in proptest::collection::vec(any::<bool>(), 1..40),
        ) {
            let tape = Tape::new();
            let h = tape.constant(t(&[n, 2], &vals[..2 * n]));
            let a = tape.constant(t(&[4, 1], &vals[20..24]));
            let mask = random_mask(n, &bits);
            let s = node_attention(h, &mask, a, 0.2).unwrap().value();
            for i in 0..n {
                let row: f64 = (0..n).map(|j| s.at(&[i, j])).sum();
                prop_assert!((row - 1.0).abs() <= 1e-9);
                for j in 0..n {
                    if !mask[i * n + j] {
                        prop_assert_eq!(s.at(&[i, j]), 0.0);
                    }
                }
            }
        }

        #[test]
        fn metapath_weights_simplex(
            p in 1usize..5,
            vals in proptest::collection::vec(-3.0f64..3.0, 40),
        ) {
            let tape = Tape::new();
            let hs: Vec<_> = (0..p).map(|k| tape.constant(t(&[3, 2], &vals[6 * k..6 * k + 6]))).collect();
            let q = tape.constant(t(&[2, 3], &vals[30..36]));
            let b = tape.constant(t(&[1, 3], &vals[36..39]));
            let r = tape.constant(t(&[3, 1], &vals[..3]));
            let w = metapath_attention(&hs, q, b, r).unwrap().value();
            prop_assert!(w.data().iter().all(|&x| x > 0.0));
            prop_assert!((w.data().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            if p == 1 {
                prop_assert_eq!(w.data()[0], 1.0);
            }
        }

        #[test]
        fn aggregate_is_convex(
            vals in proptest::collection::vec(-5.0f64..5.0, 12),
            raw in proptest::collection::vec(0.01f64..1.0, 16),
        ) {
            let tape = Tape::new();
            let h = tape.constant(t(&[4, 3], &vals));
            let mut s = Tensor::zeros(&[4, 4]);
            for i in 0..4 {
                let z: f64 = raw[4 * i..4 * i + 4].iter().sum();
                for j in 0..4 {
                    s.set(&[i, j], raw[4 * i + j] / z);
                }
            }
            let out = node_aggregate(tape.constant(s), h).unwrap().value();
            for c in 0..3 {
                let col: Vec<f64> = (0..4).map(|i| vals[3 * i + c]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for i in 0..4 {
                    prop_assert!(out.at(&[i, c]) >= lo - 1e-12 && out.at(&[i, c]) <= hi + 1e-12);
                }
            }
        }
    }
}
