//! Elementwise arithmetic with deliberately narrow broadcasting.
//!
//! Two shapes combine when they are identical, or when `b` is an NCHW map
//! of ones in the spatial dims, i.e. `[N, C, 1, 1]` (per-channel scales)
//! or `[N, 1, 1, 1]` (per-sample scales) against `a: [N, C, H, W]`.
//! Nothing wider is supported, which keeps the gradient code auditable.

use crate::error::{CottadError, Result};
use crate::tensor::{Element, Tensor};

/// How `b` is replicated against `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadcastKind {
    Same,
    /// `b` is `[N, C, 1, 1]` against `a = [N, C, H, W]`.
    PerChannel,
    /// `b` is `[N, 1, 1, 1]` against `a = [N, C, H, W]`.
    PerSample,
}

pub fn broadcast_kind<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<BroadcastKind> {
    if a.shape() == b.shape() {
        return Ok(BroadcastKind::Same);
    }
    if a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) && b.dim(2) == 1 && b.dim(3) == 1 {
        if b.dim(1) == a.dim(1) {
            return Ok(BroadcastKind::PerChannel);
        }
        if b.dim(1) == 1 {
            return Ok(BroadcastKind::PerSample);
        }
    }
    Err(CottadError::shape(
        "elementwise",
        format!(
            "shapes {:?} and {:?} neither match nor form a trailing-singleton broadcast",
            a.shape(),
            b.shape()
        ),
    ))
}

fn zip_broadcast<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    let kind = broadcast_kind(a, b)?;
    let mut out = a.clone();
    match kind {
        BroadcastKind::Same => {
            for (o, &bv) in out.data_mut().iter_mut().zip(b.data()) {
                *o = f(*o, bv);
            }
        }
        BroadcastKind::PerChannel | BroadcastKind::PerSample => {
            let plane = a.dim(2) * a.dim(3);
            let channels = a.dim(1);
            for (idx, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
                let n = idx / channels;
                let c = idx % channels;
                let bv = match kind {
                    BroadcastKind::PerChannel => b.data()[n * channels + c],
                    _ => b.data()[n],
                };
                for o in chunk {
                    *o = f(*o, bv);
                }
            }
        }
    }
    Ok(out)
}

pub fn elementwise_add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_broadcast(a, b, |x, y| x + y)
}

pub fn elementwise_mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_broadcast(a, b, |x, y| x * y)
}

/// Sum `grad` (shaped like `a`) down to the broadcast shape of `b`.
pub fn reduce_to_broadcast_shape<T: Element>(
    grad: &Tensor<T>,
    b_shape: &[usize],
    kind: BroadcastKind,
) -> Tensor<T> {
    match kind {
        BroadcastKind::Same => grad.clone(),
        BroadcastKind::PerChannel | BroadcastKind::PerSample => {
            let plane = grad.dim(2) * grad.dim(3);
            let channels = grad.dim(1);
            let mut out = Tensor::zeros(b_shape);
            for (idx, chunk) in grad.data().chunks(plane).enumerate() {
                let n = idx / channels;
                let c = idx % channels;
                let slot = match kind {
                    BroadcastKind::PerChannel => n * channels + c,
                    _ => n,
                };
                let mut acc = T::zero();
                for &v in chunk {
                    acc += v;
                }
                out.data_mut()[slot] += acc;
            }
            out
        }
    }
}

pub fn scale<T: Element>(input: &Tensor<T>, factor: f64) -> Tensor<T> {
    let f = T::from_f64(factor);
    input.map(|v| v * f)
}

pub fn sum_all<T: Element>(input: &Tensor<T>) -> T {
    let mut acc = T::zero();
    for &v in input.data() {
        acc += v;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_shape_add_and_mul() {
        let a = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 2], vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(elementwise_add(&a, &b).unwrap().data(), &[11.0, 22.0, 33.0, 44.0]);
        assert_eq!(elementwise_mul(&a, &b).unwrap().data(), &[10.0, 40.0, 90.0, 160.0]);
    }

    #[test]
    fn per_channel_map_scales_full_maps() {
        let a = Tensor::full(&[1, 2, 2, 2], 3.0);
        let b = Tensor::new(&[1, 2, 1, 1], vec![2.0, -1.0]).unwrap();
        let y = elementwise_mul(&a, &b).unwrap();
        assert!(y.data()[..4].iter().all(|&v| v == 6.0));
        assert!(y.data()[4..].iter().all(|&v| v == -3.0));
    }

    #[test]
    fn per_sample_scalar_broadcast() {
        let a = Tensor::full(&[2, 3, 2, 2], 1.0);
        let b = Tensor::new(&[2, 1, 1, 1], vec![5.0, 7.0]).unwrap();
        let y = elementwise_mul(&a, &b).unwrap();
        assert!(y.data()[..12].iter().all(|&v| v == 5.0));
        assert!(y.data()[12..].iter().all(|&v| v == 7.0));
    }

    #[test]
    fn general_broadcasting_is_rejected() {
        let a = Tensor::full(&[2, 3, 4, 4], 1.0);
        let b = Tensor::full(&[2, 3, 4, 1], 1.0);
        assert!(elementwise_add(&a, &b).is_err());
    }

    #[test]
    fn reduce_matches_broadcast_structure() {
        let g = Tensor::full(&[2, 3, 2, 2], 1.0);
        let r = reduce_to_broadcast_shape(&g, &[2, 3, 1, 1], BroadcastKind::PerChannel);
        assert!(r.data().iter().all(|&v| v == 4.0));
        let r2 = reduce_to_broadcast_shape(&g, &[2, 1, 1, 1], BroadcastKind::PerSample);
        assert!(r2.data().iter().all(|&v| v == 12.0));
    }
}
