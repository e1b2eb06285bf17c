use super::{GraphError, GraphSlice};
use crate::tensor::Tensor;

/// Start offsets of overlapping windows within one block of `block` ticks.
pub fn frame_starts(block: usize, frame_len: usize, stride: usize) -> Result<Vec<usize>, GraphError> {
    if frame_len == 0 || stride == 0 || stride > frame_len {
        return Err(GraphError::InvalidArgument(format!(
            "need 1 ≤ stride ≤ frame_len, got frame_len={frame_len} stride={stride}"
        )));
    }
    if frame_len > block {
        return Err(GraphError::FrameTooLong { frame_len, block });
    }
    Ok((0..=block - frame_len).step_by(stride).collect())
}

/// Cuts the slice telemetry into `N × frame_len` windows that never leave the slice.
pub fn frame_data(slice: &GraphSlice, frame_len: usize, stride: usize) -> Result<Vec<Tensor>, GraphError> {
    let starts = frame_starts(slice.len(), frame_len, stride)?;
    let n = slice.n_nodes();
    Ok(starts
        .into_iter()
        .map(|s| {
            let mut buf = Vec::with_capacity(n * frame_len);
            for i in 0..n {
                buf.extend_from_slice(&slice.series(i)[s..s + frame_len]);
            }
            Tensor::new(vec![n, frame_len], buf).expect("shape")
        })
        .collect())
}
