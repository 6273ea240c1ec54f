//! Pure tensor kernels: convolution, pooling, rearrangement, dense ops.
//!
//! Every function here is a pure map from immutable inputs to a fresh
//! output tensor; none of them mutate arguments. Reverse-mode wrappers
//! that record onto a tape live in [`crate::autograd`].

mod conv;
mod dense;
mod map;
mod pool;
mod reshape;

pub use conv::{conv2d, conv2d_backward, depthwise_conv2d, ConvGrads};
pub use dense::{linear, linear_backward, softmax, softmax_backward, LinearGrads};
pub use map::{
    broadcast_kind, elementwise_add, elementwise_mul, reduce_to_broadcast_shape, scale, sum_all,
    BroadcastKind,
};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2d, maxpool2d_backward, maxpool2d_same,
    upsample_nearest, upsample_nearest_backward, MaxPoolOut,
};
pub use reshape::{concat, depth_to_space, slice_axis, slice_axis_backward, space_to_depth};

use serde::{Deserialize, Serialize};

use crate::error::{CottadError, Result};

/// Geometry of a 2-d convolution. Padding is symmetric per axis and the
/// padded value is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvParams {
    /// Square-kernel constructor with stride 1, same-padding for odd `k`,
    /// dilation 1 and a single group.
    pub fn same(in_channels: usize, out_channels: usize, k: usize) -> Self {
        ConvParams {
            in_channels,
            out_channels,
            kernel_h: k,
            kernel_w: k,
            stride: 1,
            pad_h: (k - 1) / 2,
            pad_w: (k - 1) / 2,
            dilation: 1,
            groups: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    /// Rectangular depthwise kernel (groups == channels), stride 1, padding
    /// chosen to preserve the spatial size for odd effective extents.
    pub fn depthwise_same(channels: usize, kh: usize, kw: usize, dilation: usize) -> Self {
        ConvParams {
            in_channels: channels,
            out_channels: channels,
            kernel_h: kh,
            kernel_w: kw,
            stride: 1,
            pad_h: (kh - 1) * dilation / 2,
            pad_w: (kw - 1) * dilation / 2,
            dilation,
            groups: channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(CottadError::Config(format!(
                "conv params must be positive: kernel {}x{}, stride {}, dilation {}",
                self.kernel_h, self.kernel_w, self.stride, self.dilation
            )));
        }
        if self.groups == 0
            || self.in_channels % self.groups != 0
            || self.out_channels % self.groups != 0
        {
            return Err(CottadError::Config(format!(
                "in_channels {} and out_channels {} must both divide by groups {}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    /// Output extent along one axis: floor((in + 2*pad - d*(k-1) - 1) / stride) + 1.
    fn out_extent(&self, input: usize, k: usize, pad: usize) -> Result<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = input + 2 * pad;
        if padded < span {
            return Err(CottadError::shape(
                "conv2d",
                format!(
                    "input extent {input} with padding {pad} is smaller than the \
                     dilated kernel span {span}"
                ),
            ));
        }
        Ok((padded - span) / self.stride + 1)
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            self.out_extent(h, self.kernel_h, self.pad_h)?,
            self.out_extent(w, self.kernel_w, self.pad_w)?,
        ))
    }
}

/// Run `f(i, chunk)` over equally sized chunks of `data`, in parallel when
/// the workload is large enough to pay for it. Each chunk is written by
/// exactly one task, so results do not depend on scheduling.
pub(crate) fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if data.len() >= 16384 && data.len() / chunk.max(1) >= 2 {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
