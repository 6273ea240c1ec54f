//! Max pooling (negative-infinity padding), global average pooling, and
//! nearest-neighbour upsampling.

use super::for_each_chunk;
use crate::error::{CottadError, Result};
use crate::tensor::{Element, Tensor};

/// Max-pool output together with the flat input index that won each cell,
/// which the backward pass routes gradient through.
pub struct MaxPoolOut<T: Element> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Square max pooling. Padded cells are treated as negative infinity, so
/// they can never win; ties go to the first cell in scan order.
pub fn maxpool2d<T: Element>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<MaxPoolOut<T>> {
    if input.rank() != 4 {
        return Err(CottadError::shape(
            "maxpool2d",
            format!("input must be NCHW, got rank {}", input.rank()),
        ));
    }
    if kernel == 0 || stride == 0 {
        return Err(CottadError::Config(
            "maxpool2d: kernel and stride must be positive".into(),
        ));
    }
    if padding >= kernel {
        return Err(CottadError::Config(format!(
            "maxpool2d: padding {padding} must be smaller than kernel {kernel}"
        )));
    }
    let (n_batch, channels, in_h, in_w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    if in_h + 2 * padding < kernel || in_w + 2 * padding < kernel {
        return Err(CottadError::shape(
            "maxpool2d",
            format!("input {in_h}x{in_w} smaller than kernel {kernel} with padding {padding}"),
        ));
    }
    let out_h = (in_h + 2 * padding - kernel) / stride + 1;
    let out_w = (in_w + 2 * padding - kernel) / stride + 1;
    let plane = out_h * out_w;

    let mut output = Tensor::zeros(&[n_batch, channels, out_h, out_w]);
    let mut argmax = vec![0usize; output.numel()];
    let x = input.data();

    // Two passes over the same chunking keeps output and argmax in step.
    let in_plane = in_h * in_w;
    {
        let arg_chunks: Vec<&mut [usize]> = argmax.chunks_mut(plane).collect();
        let out_data = output.data_mut();
        // zip chunks manually; serial loop here, the op is cheap
        for ((chan_idx, out_plane), arg_plane) in
            out_data.chunks_mut(plane).enumerate().zip(arg_chunks)
        {
            let x_chan = &x[chan_idx * in_plane..][..in_plane];
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let y0 = oy * stride;
                    let x0 = ox * stride;
                    let mut best = T::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for ky in 0..kernel {
                        let iy = y0 + ky;
                        if iy < padding || iy >= in_h + padding {
                            continue;
                        }
                        let row = (iy - padding) * in_w;
                        for kx in 0..kernel {
                            let ix = x0 + kx;
                            if ix < padding || ix >= in_w + padding {
                                continue;
                            }
                            let v = x_chan[row + ix - padding];
                            if v > best {
                                best = v;
                                best_idx = chan_idx * in_plane + row + ix - padding;
                            }
                        }
                    }
                    out_plane[oy * out_w + ox] = best;
                    arg_plane[oy * out_w + ox] = best_idx;
                }
            }
        }
    }
    Ok(MaxPoolOut { output, argmax })
}

/// Stride-1 max pool that preserves the spatial size. Requires an odd
/// kernel; an even kernel cannot pad symmetrically.
pub fn maxpool2d_same<T: Element>(input: &Tensor<T>, kernel: usize) -> Result<MaxPoolOut<T>> {
    if kernel % 2 == 0 {
        return Err(CottadError::Config(format!(
            "maxpool2d_same: kernel {kernel} is even, same-size pooling needs an odd kernel"
        )));
    }
    maxpool2d(input, kernel, 1, kernel / 2)
}

pub fn maxpool2d_backward<T: Element>(
    input_shape: &[usize],
    argmax: &[usize],
    dy: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        dxd[idx] += g;
    }
    dx
}

/// Mean over the spatial dims: `[N,C,H,W] -> [N,C,1,1]`.
pub fn global_avg_pool<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    if input.rank() != 4 {
        return Err(CottadError::shape(
            "global_avg_pool",
            format!("input must be NCHW, got rank {}", input.rank()),
        ));
    }
    let (n_batch, channels, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let plane = h * w;
    let inv = T::from_f64(1.0 / plane as f64);
    let mut out = Tensor::zeros(&[n_batch, channels, 1, 1]);
    for (o, chan) in out.data_mut().iter_mut().zip(input.data().chunks(plane)) {
        let mut acc = T::zero();
        for &v in chan {
            acc += v;
        }
        *o = acc * inv;
    }
    Ok(out)
}

pub fn global_avg_pool_backward<T: Element>(input_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let plane = input_shape[2] * input_shape[3];
    let inv = T::from_f64(1.0 / plane as f64);
    let mut dx = Tensor::zeros(input_shape);
    for (chan, &g) in dx.data_mut().chunks_mut(plane).zip(dy.data()) {
        let gv = g * inv;
        for d in chan {
            *d = gv;
        }
    }
    dx
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn upsample_nearest<T: Element>(input: &Tensor<T>, scale: usize) -> Result<Tensor<T>> {
    if input.rank() != 4 {
        return Err(CottadError::shape(
            "upsample_nearest",
            format!("input must be NCHW, got rank {}", input.rank()),
        ));
    }
    if scale == 0 {
        return Err(CottadError::Config("upsample scale must be positive".into()));
    }
    let (n_batch, channels, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (oh, ow) = (h * scale, w * scale);
    let mut out = Tensor::zeros(&[n_batch, channels, oh, ow]);
    let x = input.data();
    for_each_chunk(out.data_mut(), oh * ow, |chan_idx, out_plane| {
        let x_chan = &x[chan_idx * h * w..][..h * w];
        for oy in 0..oh {
            let iy = oy / scale;
            for ox in 0..ow {
                out_plane[oy * ow + ox] = x_chan[iy * w + ox / scale];
            }
        }
    });
    Ok(out)
}

pub fn upsample_nearest_backward<T: Element>(
    input_shape: &[usize],
    scale: usize,
    dy: &Tensor<T>,
) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (oh, ow) = (h * scale, w * scale);
    let mut dx = Tensor::zeros(input_shape);
    let g = dy.data();
    for (chan_idx, dx_plane) in dx.data_mut().chunks_mut(h * w).enumerate() {
        let g_chan = &g[chan_idx * oh * ow..][..oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                dx_plane[(oy / scale) * w + ox / scale] += g_chan[oy * ow + ox];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    #[test]
    fn constant_input_is_preserved_by_same_pool() {
        let x = Tensor::full(&[1, 2, 5, 5], 3.25);
        let y = maxpool2d_same(&x, 5).unwrap().output;
        assert_eq!(y, x);
    }

    #[test]
    fn interior_peak_spreads_to_kernel_neighbourhood() {
        let mut x = Tensor::full(&[1, 1, 9, 9], 0.0);
        let idx = x.idx4(0, 0, 4, 4);
        x.data_mut()[idx] = 7.0;
        let y = maxpool2d_same(&x, 3).unwrap().output;
        for yy in 0..9 {
            for xx in 0..9 {
                let expect = if (3..=5).contains(&yy) && (3..=5).contains(&xx) {
                    7.0
                } else {
                    0.0
                };
                assert_eq!(y.at4(0, 0, yy, xx), expect);
            }
        }
    }

    #[test]
    fn cascaded_five_pools_match_nine_and_thirteen() {
        let mut rng = Rng64::new(11);
        for _ in 0..4 {
            let x = Tensor::randn(&[1, 2, 16, 16], 1.0, &mut rng);
            let p5 = maxpool2d_same(&x, 5).unwrap().output;
            let p55 = maxpool2d_same(&p5, 5).unwrap().output;
            let p9 = maxpool2d_same(&x, 9).unwrap().output;
            assert_eq!(p55, p9);
            let p555 = maxpool2d_same(&p55, 5).unwrap().output;
            let p13 = maxpool2d_same(&x, 13).unwrap().output;
            assert_eq!(p555, p13);
        }
    }

    #[test]
    fn even_kernel_same_pool_is_rejected() {
        let x = Tensor::full(&[1, 1, 4, 4], 1.0);
        assert!(maxpool2d_same(&x, 4).is_err());
    }

    #[test]
    fn negative_constant_survives_padding() {
        // Zero-padding would corrupt this; -inf padding must not.
        let x = Tensor::full(&[1, 1, 3, 3], -5.0);
        let y = maxpool2d_same(&x, 3).unwrap().output;
        assert!(y.data().iter().all(|&v| v == -5.0));
    }

    #[test]
    fn global_avg_pool_examples() {
        let c = Tensor::full(&[2, 3, 4, 4], 2.5);
        let y = global_avg_pool(&c).unwrap();
        assert_eq!(y.shape(), [2, 3, 1, 1]);
        assert!(y.data().iter().all(|&v| v == 2.5));

        let one = Tensor::new(&[1, 1, 1, 1], vec![9.0]).unwrap();
        assert_eq!(global_avg_pool(&one).unwrap().data(), &[9.0]);

        let m = Tensor::new(&[1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(global_avg_pool(&m).unwrap().data(), &[4.0]);
    }

    #[test]
    fn upsample_then_sum_backward_shapes() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_nearest(&x, 2).unwrap();
        assert_eq!(y.shape(), [1, 1, 4, 4]);
        assert_eq!(y.at4(0, 0, 0, 1), 1.0);
        assert_eq!(y.at4(0, 0, 3, 3), 4.0);
        let dy = Tensor::full(&[1, 1, 4, 4], 1.0);
        let dx = upsample_nearest_backward(&[1, 1, 2, 2], 2, &dy);
        assert!(dx.data().iter().all(|&v| v == 4.0));
    }
}
