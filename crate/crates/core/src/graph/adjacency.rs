use super::{GraphError, GraphSlice, RelationType};
use crate::tensor::Tensor;

const MOTION_EPS: f64 = 1e-12;

/// Coherence time `λ / (v·cosθ)` in seconds.
pub fn coherence_time(wavelength_m: f64, speed_mps: f64, angle_rad: f64) -> Result<f64, GraphError> {
    if !(wavelength_m > 0.0) {
        return Err(GraphError::InvalidArgument(format!(
            "wavelength must be positive, got {wavelength_m}"
        )));
    }
    if !(speed_mps >= 0.0) {
        return Err(GraphError::InvalidArgument(format!(
            "speed must be non-negative, got {speed_mps}"
        )));
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&angle_rad) {
        return Err(GraphError::InvalidArgument(format!(
            "angle must lie in [0, π/2], got {angle_rad}"
        )));
    }
    let doppler = speed_mps * angle_rad.cos();
    if doppler <= MOTION_EPS {
        return Err(GraphError::DegenerateMotion(doppler));
    }
    Ok(wavelength_m / doppler)
}

/// Samples per coherence block at `sample_rate_hz`, never more than `cap`.
/// Degenerate motion falls back to `cap`.
pub fn coherence_block_samples(
    wavelength_m: f64,
    speed_mps: f64,
    angle_rad: f64,
    sample_rate_hz: f64,
    cap: usize,
) -> Result<usize, GraphError> {
    if cap == 0 || !(sample_rate_hz > 0.0) {
        return Err(GraphError::InvalidArgument(
            "cap and sample rate must be positive".into(),
        ));
    }
    match coherence_time(wavelength_m, speed_mps, angle_rad) {
        Ok(tc) => Ok(((tc * sample_rate_hz).floor() as usize).clamp(1, cap)),
        Err(GraphError::DegenerateMotion(_)) => Ok(cap),
        Err(e) => Err(e),
    }
}

/// Binary symmetric `N × N` adjacency, optionally restricted to one relation.
pub fn adjacency_matrix(slice: &GraphSlice, relation: Option<RelationType>) -> Tensor {
    let n = slice.n_nodes();
    let mut a = Tensor::zeros(&[n, n]);
    for e in slice.edges() {
        if relation.is_none_or(|r| r == e.relation) {
            a.set(&[e.src, e.dst], 1.0);
            a.set(&[e.dst, e.src], 1.0);
        }
    }
    a
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    /// `A + I`.
    pub a_tilde: Tensor,
    /// Diagonal of `D̃^{-1/2}` as a full matrix.
    pub d_inv_sqrt: Tensor,
    /// `D̃^{-1/2} Ã D̃^{-1/2}`.
    pub propagation: Tensor,
}

/// Self-loop augmented symmetric normalisation of a binary adjacency.
pub fn normalize_adjacency(a: &Tensor) -> Result<NormalizedAdjacency, GraphError> {
    if a.ndim() != 2 || a.shape()[0] != a.shape()[1] {
        return Err(GraphError::InvalidArgument(format!(
            "adjacency must be square, got {:?}",
            a.shape()
        )));
    }
    let n = a.shape()[0];
    let mut a_tilde = a.clone();
    for i in 0..n {
        a_tilde.set(&[i, i], a.at(&[i, i]) + 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / a_tilde.row(i).iter().sum::<f64>().sqrt())
        .collect();
    let mut d_inv_sqrt = Tensor::zeros(&[n, n]);
    let mut propagation = Tensor::zeros(&[n, n]);
    for i in 0..n {
        d_inv_sqrt.set(&[i, i], inv_sqrt[i]);
        for j in 0..n {
            let v = a_tilde.at(&[i, j]);
            if v != 0.0 {
                propagation.set(&[i, j], inv_sqrt[i] * v * inv_sqrt[j]);
            }
        }
    }
    Ok(NormalizedAdjacency {
        a_tilde,
        d_inv_sqrt,
        propagation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn coherence_time_examples() {
        assert!((coherence_time(0.1, 20.0, 0.0).unwrap() - 0.005).abs() < 1e-15);
        assert!(matches!(
            coherence_time(0.1, 0.0, 0.0),
            Err(GraphError::DegenerateMotion(_))
        ));
        assert!(matches!(
            coherence_time(0.1, 20.0, std::f64::consts::FRAC_PI_2),
            Err(GraphError::DegenerateMotion(_))
        ));
        assert!(matches!(
            coherence_time(-1.0, 20.0, 0.0),
            Err(GraphError::InvalidArgument(_))
        ));
    }

    #[test]
    fn block_samples_fall_back_to_cap() {
        assert_eq!(coherence_block_samples(0.1, 20.0, 0.0, 10_000.0, 1000).unwrap(), 50);
        assert_eq!(coherence_block_samples(0.1, 0.0, 0.0, 10_000.0, 1000).unwrap(), 1000);
        assert_eq!(coherence_block_samples(0.1, 0.001, 0.0, 10_000.0, 100).unwrap(), 100);
    }

    #[test]
    fn isolated_nodes_give_identity() {
        let p = normalize_adjacency(&Tensor::zeros(&[2, 2])).unwrap().propagation;
        assert_eq!(p, Tensor::eye(2));
    }

    #[test]
    fn single_edge_gives_halves() {
        let a = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let p = normalize_adjacency(&a).unwrap().propagation;
        for &v in p.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn path_graph_hand_values() {
        let a = Tensor::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        let n = normalize_adjacency(&a).unwrap();
        let p = &n.propagation;
        assert!((p.at(&[0, 0]) - 0.5).abs() < 1e-15);
        assert!((p.at(&[1, 1]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.at(&[2, 2]) - 0.5).abs() < 1e-15);
        assert!((p.at(&[0, 1]) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.at(&[0, 2]), 0.0);
        assert!((n.d_inv_sqrt.at(&[1, 1]) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(n.a_tilde.at(&[1, 1]), 1.0);
    }

    proptest! {
        #[test]
        fn propagation_symmetric_and_bounded(n in 1usize..=20, bits in proptest::collection::vec(any::<bool>(), 190)) {
            let mut a = Tensor::zeros(&[n, n]);
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if bits[k % bits.len()] {
                        a.set(&[i, j], 1.0);
                        a.set(&[j, i], 1.0);
                    }
                    k += 1;
                }
            }
            let p = normalize_adjacency(&a).unwrap().propagation;
            for i in 0..n {
                for j in 0..n {
                    let v = p.at(&[i, j]);
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert_eq!(v, p.at(&[j, i]));
                }
            }
        }
    }
}
