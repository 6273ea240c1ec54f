//! Direct 2-d convolution (cross-correlation) with groups and dilation.

use super::{for_each_chunk, ConvParams};
use crate::error::{CottadError, Result};
use crate::tensor::{Element, Tensor};

fn check_conv_shapes<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    p: &ConvParams,
) -> Result<(usize, usize)> {
    p.validate()?;
    if input.rank() != 4 {
        return Err(CottadError::shape(
            "conv2d",
            format!("input must be NCHW, got rank {}", input.rank()),
        ));
    }
    if input.dim(1) != p.in_channels {
        return Err(CottadError::shape(
            "conv2d",
            format!(
                "input has {} channels, params expect in_channels {}",
                input.dim(1),
                p.in_channels
            ),
        ));
    }
    let expect_w = [
        p.out_channels,
        p.in_channels / p.groups,
        p.kernel_h,
        p.kernel_w,
    ];
    if weight.shape() != expect_w {
        return Err(CottadError::shape(
            "conv2d",
            format!("weight shape {:?} != expected {:?}", weight.shape(), expect_w),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [p.out_channels] {
            return Err(CottadError::shape(
                "conv2d",
                format!(
                    "bias shape {:?} != [out_channels {}]",
                    b.shape(),
                    p.out_channels
                ),
            ));
        }
    }
    p.out_hw(input.dim(2), input.dim(3))
}

/// Range of output positions `o` with `o*stride + k_off - pad` inside `[0, extent)`.
#[inline]
fn valid_out_range(extent: usize, out: usize, stride: usize, k_off: usize, pad: usize) -> (usize, usize) {
    // o*stride + k_off - pad >= 0  =>  o >= ceil((pad - k_off) / stride)
    let lo = if pad > k_off {
        (pad - k_off).div_ceil(stride)
    } else {
        0
    };
    // o*stride + k_off - pad <= extent-1  =>  o <= (extent-1 + pad - k_off) / stride
    let hi = if extent + pad > k_off {
        ((extent - 1 + pad - k_off) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Cross-correlation (no kernel flip), zero padding.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    p: &ConvParams,
) -> Result<Tensor<T>> {
    let (out_h, out_w) = check_conv_shapes(input, weight, bias, p)?;
    let (n_batch, in_h, in_w) = (input.dim(0), input.dim(2), input.dim(3));
    let cin_g = p.in_channels / p.groups;
    let cout_g = p.out_channels / p.groups;
    let plane = out_h * out_w;

    let mut out = Tensor::zeros(&[n_batch, p.out_channels, out_h, out_w]);
    let x = input.data();
    let w = weight.data();

    for_each_chunk(out.data_mut(), plane, |idx, out_plane| {
        let n = idx / p.out_channels;
        let co = idx % p.out_channels;
        let g = co / cout_g;
        if let Some(b) = bias {
            out_plane.fill(b.data()[co]);
        }
        for ci_local in 0..cin_g {
            let ci = g * cin_g + ci_local;
            let x_chan = &x[(n * p.in_channels + ci) * in_h * in_w..][..in_h * in_w];
            for ky in 0..p.kernel_h {
                let (oy_lo, oy_hi) = valid_out_range(in_h, out_h, p.stride, ky * p.dilation, p.pad_h);
                for kx in 0..p.kernel_w {
                    let wv = w[((co * cin_g + ci_local) * p.kernel_h + ky) * p.kernel_w + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let (ox_lo, ox_hi) =
                        valid_out_range(in_w, out_w, p.stride, kx * p.dilation, p.pad_w);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * p.stride + ky * p.dilation - p.pad_h;
                        let out_row = &mut out_plane[oy * out_w + ox_lo..oy * out_w + ox_hi];
                        if p.stride == 1 {
                            let ix0 = ox_lo + kx * p.dilation - p.pad_w;
                            let x_row = &x_chan[iy * in_w + ix0..][..out_row.len()];
                            for (o, &v) in out_row.iter_mut().zip(x_row) {
                                *o += wv * v;
                            }
                        } else {
                            for (j, o) in out_row.iter_mut().enumerate() {
                                let ix = (ox_lo + j) * p.stride + kx * p.dilation - p.pad_w;
                                *o += wv * x_chan[iy * in_w + ix];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Depthwise convolution: `groups == channels`, weight `[C, 1, kh, kw]`.
pub fn depthwise_conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    p: &ConvParams,
) -> Result<Tensor<T>> {
    if p.groups != p.in_channels || p.groups != p.out_channels {
        return Err(CottadError::Config(format!(
            "depthwise conv requires groups == channels, got groups {} for {} -> {} channels",
            p.groups, p.in_channels, p.out_channels
        )));
    }
    conv2d(input, weight, bias, p)
}

/// Gradients of a convolution with respect to its inputs.
pub struct ConvGrads<T: Element> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Option<Tensor<T>>,
}

/// Reverse-mode step for [`conv2d`]. `dy` has the forward output shape.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    has_bias: bool,
    p: &ConvParams,
    dy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (out_h, out_w) = check_conv_shapes(input, weight, None, p)?;
    if dy.shape() != [input.dim(0), p.out_channels, out_h, out_w] {
        return Err(CottadError::shape(
            "conv2d_backward",
            format!("dy shape {:?} does not match forward output", dy.shape()),
        ));
    }
    let (n_batch, in_h, in_w) = (input.dim(0), input.dim(2), input.dim(3));
    let cin_g = p.in_channels / p.groups;
    let cout_g = p.out_channels / p.groups;
    let x = input.data();
    let w = weight.data();
    let g_out = dy.data();

    // d/d input: scatter each dy row back through the kernel taps.
    let mut dx = Tensor::zeros(input.shape());
    for_each_chunk(dx.data_mut(), in_h * in_w, |idx, dx_chan| {
        let n = idx / p.in_channels;
        let ci = idx % p.in_channels;
        let g = ci / cin_g;
        let ci_local = ci % cin_g;
        for co_local in 0..cout_g {
            let co = g * cout_g + co_local;
            let dy_chan = &g_out[(n * p.out_channels + co) * out_h * out_w..][..out_h * out_w];
            for ky in 0..p.kernel_h {
                let (oy_lo, oy_hi) = valid_out_range(in_h, out_h, p.stride, ky * p.dilation, p.pad_h);
                for kx in 0..p.kernel_w {
                    let wv = w[((co * cin_g + ci_local) * p.kernel_h + ky) * p.kernel_w + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let (ox_lo, ox_hi) =
                        valid_out_range(in_w, out_w, p.stride, kx * p.dilation, p.pad_w);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * p.stride + ky * p.dilation - p.pad_h;
                        let dy_row = &dy_chan[oy * out_w + ox_lo..oy * out_w + ox_hi];
                        if p.stride == 1 {
                            let ix0 = ox_lo + kx * p.dilation - p.pad_w;
                            let dx_row = &mut dx_chan[iy * in_w + ix0..][..dy_row.len()];
                            for (d, &gv) in dx_row.iter_mut().zip(dy_row) {
                                *d += wv * gv;
                            }
                        } else {
                            for (j, &gv) in dy_row.iter().enumerate() {
                                let ix = (ox_lo + j) * p.stride + kx * p.dilation - p.pad_w;
                                dx_chan[iy * in_w + ix] += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    });

    // d/d weight: one task per output channel keeps accumulators disjoint.
    let mut dw = Tensor::zeros(weight.shape());
    let w_plane = cin_g * p.kernel_h * p.kernel_w;
    for_each_chunk(dw.data_mut(), w_plane, |co, dw_co| {
        let g = co / cout_g;
        for n in 0..n_batch {
            let dy_chan = &g_out[(n * p.out_channels + co) * out_h * out_w..][..out_h * out_w];
            for ci_local in 0..cin_g {
                let ci = g * cin_g + ci_local;
                let x_chan = &x[(n * p.in_channels + ci) * in_h * in_w..][..in_h * in_w];
                for ky in 0..p.kernel_h {
                    let (oy_lo, oy_hi) =
                        valid_out_range(in_h, out_h, p.stride, ky * p.dilation, p.pad_h);
                    for kx in 0..p.kernel_w {
                        let (ox_lo, ox_hi) =
                            valid_out_range(in_w, out_w, p.stride, kx * p.dilation, p.pad_w);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let mut acc = T::zero();
                        for oy in oy_lo..oy_hi {
                            let iy = oy * p.stride + ky * p.dilation - p.pad_h;
                            let dy_row = &dy_chan[oy * out_w + ox_lo..oy * out_w + ox_hi];
                            if p.stride == 1 {
                                let ix0 = ox_lo + kx * p.dilation - p.pad_w;
                                let x_row = &x_chan[iy * in_w + ix0..][..dy_row.len()];
                                for (&gv, &xv) in dy_row.iter().zip(x_row) {
                                    acc += gv * xv;
                                }
                            } else {
                                for (j, &gv) in dy_row.iter().enumerate() {
                                    let ix = (ox_lo + j) * p.stride + kx * p.dilation - p.pad_w;
                                    acc += gv * x_chan[iy * in_w + ix];
                                }
                            }
                        }
                        dw_co[(ci_local * p.kernel_h + ky) * p.kernel_w + kx] += acc;
                    }
                }
            }
        }
    });

    let db = if has_bias {
        let mut db = Tensor::zeros(&[p.out_channels]);
        for n in 0..n_batch {
            for co in 0..p.out_channels {
                let dy_chan = &g_out[(n * p.out_channels + co) * out_h * out_w..][..out_h * out_w];
                let mut acc = T::zero();
                for &gv in dy_chan {
                    acc += gv;
                }
                db.data_mut()[co] += acc;
            }
        }
        Some(db)
    } else {
        None
    };

    Ok(ConvGrads { dx, dw, db })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn all_ones_two_by_two_kernel_sums_to_four() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 2, 2], 1.0);
        let p = ConvParams {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 2,
            kernel_w: 2,
            stride: 1,
            pad_h: 0,
            pad_w: 0,
            dilation: 1,
            groups: 1,
        };
        let y = conv2d(&x, &w, None, &p).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn one_by_one_identity_kernel_preserves_input() {
        let x = ramp(&[1, 1, 4, 4]);
        let w = Tensor::full(&[1, 1, 1, 1], 1.0);
        let p = ConvParams::same(1, 1, 1);
        let y = conv2d(&x, &w, None, &p).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn averaging_kernel_center_value() {
        // 4x4 ramp 0..15 under a 3x3 kernel of 1/9 with pad 1: output (1,1)
        // averages elements {0,1,2,4,5,6,8,9,10} = 45/9 = 5.
        let x = ramp(&[1, 1, 4, 4]);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0);
        let p = ConvParams::same(1, 1, 3);
        let y = conv2d(&x, &w, None, &p).unwrap();
        assert!((y.at4(0, 0, 1, 1) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn depthwise_identity_and_channel_scaling() {
        let x = ramp(&[1, 2, 3, 3]);
        // channel 0 doubles, channel 1 zeroes
        let w = Tensor::new(&[2, 1, 1, 1], vec![2.0, 0.0]).unwrap();
        let p = ConvParams::depthwise_same(2, 1, 1, 1);
        let y = depthwise_conv2d(&x, &w, None, &p).unwrap();
        for i in 0..9 {
            assert_eq!(y.data()[i], x.data()[i] * 2.0);
            assert_eq!(y.data()[9 + i], 0.0);
        }
    }

    #[test]
    fn depthwise_rejects_wrong_groups() {
        let x = ramp(&[1, 2, 3, 3]);
        let w = Tensor::full(&[2, 2, 1, 1], 1.0);
        let p = ConvParams::same(2, 2, 1);
        assert!(depthwise_conv2d(&x, &w, None, &p).is_err());
    }

    #[test]
    fn dilated_row_kernel_taps() {
        // row [1,2,3,4,5], 1x3 kernel of ones, dilation 2, pad 2:
        // center output = x[0] + x[2] + x[4] = 9.
        let x = Tensor::new(&[1, 1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let w = Tensor::full(&[1, 1, 1, 3], 1.0);
        let p = ConvParams::depthwise_same(1, 1, 3, 2);
        let y = depthwise_conv2d(&x, &w, None, &p).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 5]);
        assert_eq!(y.at4(0, 0, 0, 2), 9.0);
    }

    #[test]
    fn shape_errors_name_the_dimension() {
        let x = ramp(&[1, 3, 4, 4]);
        let w = Tensor::full(&[1, 1, 2, 2], 1.0);
        let p = ConvParams::same(1, 1, 2);
        let err = conv2d(&x, &w, None, &p).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }

    #[test]
    fn strided_output_shape_formula() {
        let x = ramp(&[2, 3, 7, 9]);
        let w = Tensor::full(&[4, 3, 3, 3], 0.1);
        let p = ConvParams::same(3, 4, 3).with_stride(2);
        let y = conv2d(&x, &w, None, &p).unwrap();
        // floor((7 + 2 - 2 - 1)/2) + 1 = 4, floor((9 + 2 - 2 - 1)/2) + 1 = 5
        assert_eq!(y.shape(), [2, 4, 4, 5]);
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let x = Tensor::full(&[1, 1, 2, 2], 0.0);
        let w = Tensor::full(&[2, 1, 1, 1], 1.0);
        let b = Tensor::new(&[2], vec![0.5, -1.5]).unwrap();
        let p = ConvParams::same(1, 2, 1);
        let y = conv2d(&x, &w, Some(&b), &p).unwrap();
        assert!(y.data()[..4].iter().all(|&v| v == 0.5));
        assert!(y.data()[4..].iter().all(|&v| v == -1.5));
    }
}
