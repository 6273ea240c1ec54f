//! Concatenation, slicing, and space/depth rearrangement.

use crate::error::{CottadError, Result};
use crate::tensor::{Element, Tensor};

/// Concatenate along `axis`; every other dimension must agree.
pub fn concat<T: Element>(tensors: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = tensors
        .first()
        .ok_or_else(|| CottadError::shape("concat", "no tensors given".to_string()))?;
    if axis >= first.rank() {
        return Err(CottadError::shape(
            "concat",
            format!("axis {axis} out of range for rank {}", first.rank()),
        ));
    }
    let mut axis_total = 0;
    for (i, t) in tensors.iter().enumerate() {
        if t.rank() != first.rank() {
            return Err(CottadError::shape(
                "concat",
                format!("tensor {i} has rank {} != {}", t.rank(), first.rank()),
            ));
        }
        for d in 0..first.rank() {
            if d != axis && t.dim(d) != first.dim(d) {
                return Err(CottadError::shape(
                    "concat",
                    format!(
                        "tensor {i} dim {d} is {} but expected {}",
                        t.dim(d),
                        first.dim(d)
                    ),
                ));
            }
        }
        axis_total += t.dim(axis);
    }
    let mut out_shape = first.shape().to_vec();
    out_shape[axis] = axis_total;

    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(outer * axis_total * inner);
    for o in 0..outer {
        for t in tensors {
            let block = t.dim(axis) * inner;
            data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
        }
    }
    Tensor::new(&out_shape, data)
}

/// Contiguous slice `[start, start+len)` along `axis`.
pub fn slice_axis<T: Element>(
    input: &Tensor<T>,
    axis: usize,
    start: usize,
    len: usize,
) -> Result<Tensor<T>> {
    if axis >= input.rank() {
        return Err(CottadError::shape(
            "slice_axis",
            format!("axis {axis} out of range for rank {}", input.rank()),
        ));
    }
    if start + len > input.dim(axis) || len == 0 {
        return Err(CottadError::shape(
            "slice_axis",
            format!(
                "slice [{start}, {}) exceeds axis {axis} of size {}",
                start + len,
                input.dim(axis)
            ),
        ));
    }
    let outer: usize = input.shape()[..axis].iter().product();
    let inner: usize = input.shape()[axis + 1..].iter().product();
    let axis_len = input.dim(axis);
    let mut out_shape = input.shape().to_vec();
    out_shape[axis] = len;
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * axis_len + start) * inner;
        data.extend_from_slice(&input.data()[base..base + len * inner]);
    }
    Tensor::new(&out_shape, data)
}

/// Scatter `dy` back into a zero tensor of `input_shape` at the slice spot.
pub fn slice_axis_backward<T: Element>(
    input_shape: &[usize],
    axis: usize,
    start: usize,
    dy: &Tensor<T>,
) -> Tensor<T> {
    let outer: usize = input_shape[..axis].iter().product();
    let inner: usize = input_shape[axis + 1..].iter().product();
    let axis_len = input_shape[axis];
    let len = dy.shape()[axis];
    let mut dx = Tensor::zeros(input_shape);
    for o in 0..outer {
        let src = &dy.data()[o * len * inner..(o + 1) * len * inner];
        let dst_base = (o * axis_len + start) * inner;
        dx.data_mut()[dst_base..dst_base + len * inner].copy_from_slice(src);
    }
    dx
}

/// Rearrange `scale x scale` spatial blocks into channels. The output
/// channel index is `c * scale^2 + dr * scale + dc` with the block offsets
/// `(dr, dc)` taken in raster order, original channels outermost.
pub fn space_to_depth<T: Element>(input: &Tensor<T>, scale: usize) -> Result<Tensor<T>> {
    if input.rank() != 4 {
        return Err(CottadError::shape(
            "space_to_depth",
            format!("input must be NCHW, got rank {}", input.rank()),
        ));
    }
    if scale == 0 {
        return Err(CottadError::Config("space_to_depth: scale must be positive".into()));
    }
    let (n_batch, channels, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    if h % scale != 0 || w % scale != 0 {
        return Err(CottadError::shape(
            "space_to_depth",
            format!("spatial size {h}x{w} not divisible by scale {scale}"),
        ));
    }
    let (oh, ow) = (h / scale, w / scale);
    let mut out = Tensor::zeros(&[n_batch, channels * scale * scale, oh, ow]);
    let x = input.data();
    let od = out.data_mut();
    for n in 0..n_batch {
        for c in 0..channels {
            for dr in 0..scale {
                for dc in 0..scale {
                    let oc = (c * scale + dr) * scale + dc;
                    for oy in 0..oh {
                        let iy = oy * scale + dr;
                        let src_row = (n * channels + c) * h * w + iy * w;
                        let dst_row = (n * channels * scale * scale + oc) * oh * ow + oy * ow;
                        for ox in 0..ow {
                            od[dst_row + ox] = x[src_row + ox * scale + dc];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`space_to_depth`].
pub fn depth_to_space<T: Element>(input: &Tensor<T>, scale: usize) -> Result<Tensor<T>> {
    if input.rank() != 4 {
        return Err(CottadError::shape(
            "depth_to_space",
            format!("input must be NCHW, got rank {}", input.rank()),
        ));
    }
    if scale == 0 {
        return Err(CottadError::Config("depth_to_space: scale must be positive".into()));
    }
    let (n_batch, in_c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    if in_c % (scale * scale) != 0 {
        return Err(CottadError::shape(
            "depth_to_space",
            format!("channel count {in_c} not divisible by scale^2 = {}", scale * scale),
        ));
    }
    let channels = in_c / (scale * scale);
    let (oh, ow) = (h * scale, w * scale);
    let mut out = Tensor::zeros(&[n_batch, channels, oh, ow]);
    let x = input.data();
    let od = out.data_mut();
    for n in 0..n_batch {
        for c in 0..channels {
            for dr in 0..scale {
                for dc in 0..scale {
                    let ic = (c * scale + dr) * scale + dc;
                    for iy in 0..h {
                        let oy = iy * scale + dr;
                        let src_row = (n * in_c + ic) * h * w + iy * w;
                        let dst_row = (n * channels + c) * oh * ow + oy * ow;
                        for ix in 0..w {
                            od[dst_row + ix * scale + dc] = x[src_row + ix];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    #[test]
    fn concat_of_one_is_identity() {
        let a = Tensor::new(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(concat(&[&a], 1).unwrap(), a);
    }

    #[test]
    fn concat_doubles_channel_axis() {
        let a = Tensor::full(&[1, 3, 2, 2], 1.0);
        let b = Tensor::full(&[1, 3, 2, 2], 2.0);
        let y = concat(&[&a, &b], 1).unwrap();
        assert_eq!(y.shape(), [1, 6, 2, 2]);
        assert!(y.data()[..12].iter().all(|&v| v == 1.0));
        assert!(y.data()[12..].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn concat_then_slice_recovers_inputs_bitwise() {
        let mut rng = Rng64::new(5);
        let a = Tensor::randn(&[2, 3, 4, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[2, 5, 4, 4], 1.0, &mut rng);
        let y = concat(&[&a, &b], 1).unwrap();
        assert_eq!(slice_axis(&y, 1, 0, 3).unwrap(), a);
        assert_eq!(slice_axis(&y, 1, 3, 5).unwrap(), b);
    }

    #[test]
    fn concat_rejects_mismatched_non_axis_dims() {
        let a = Tensor::full(&[1, 2, 2, 2], 1.0);
        let b = Tensor::full(&[1, 2, 3, 2], 1.0);
        let err = concat(&[&a, &b], 1).unwrap_err();
        assert!(err.to_string().contains("dim 2"), "{err}");
    }

    #[test]
    fn space_to_depth_raster_order() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = space_to_depth(&x, 2).unwrap();
        assert_eq!(y.shape(), [1, 4, 1, 1]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn scale_one_is_identity() {
        let x = Tensor::new(&[1, 2, 2, 2], (0..8).map(|i| i as f64).collect()).unwrap();
        assert_eq!(space_to_depth(&x, 1).unwrap(), x);
        assert_eq!(depth_to_space(&x, 1).unwrap(), x);
    }

    #[test]
    fn depth_to_space_inverts_space_to_depth_bitwise() {
        let mut rng = Rng64::new(17);
        for &(c, s, size) in &[(1usize, 2usize, 4usize), (3, 2, 6), (2, 3, 9)] {
            let x = Tensor::randn(&[2, c, size, size], 1.0, &mut rng);
            let y = space_to_depth(&x, s).unwrap();
            assert_eq!(y.shape(), [2, c * s * s, size / s, size / s]);
            let back = depth_to_space(&y, s).unwrap();
            assert_eq!(back, x);
        }
    }

    #[test]
    fn indivisible_spatial_dim_is_an_error() {
        let x = Tensor::full(&[1, 1, 3, 3], 0.0);
        let err = space_to_depth(&x, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('2'), "{msg}");
    }
}
