//! Fully connected layer and softmax.

use super::for_each_chunk;
use crate::error::{CottadError, Result};
use crate::tensor::{Element, Tensor};

/// `y[..., o] = sum_i x[..., i] * w[o, i] + b[o]`. Leading dimensions are
/// treated as a flat batch.
pub fn linear<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    if weight.rank() != 2 {
        return Err(CottadError::shape(
            "linear",
            format!("weight must be [out, in], got {:?}", weight.shape()),
        ));
    }
    let (d_out, d_in) = (weight.dim(0), weight.dim(1));
    if input.rank() == 0 || *input.shape().last().unwrap() != d_in {
        return Err(CottadError::shape(
            "linear",
            format!(
                "input last dim {:?} != weight in dim {d_in}",
                input.shape().last()
            ),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [d_out] {
            return Err(CottadError::shape(
                "linear",
                format!("bias shape {:?} != [{d_out}]", b.shape()),
            ));
        }
    }
    let rows = input.numel() / d_in;
    let mut out_shape = input.shape().to_vec();
    *out_shape.last_mut().unwrap() = d_out;

    let mut out = Tensor::zeros(&out_shape);
    let x = input.data();
    let w = weight.data();
    for_each_chunk(out.data_mut(), d_out, |m, out_row| {
        debug_assert!(m < rows);
        let x_row = &x[m * d_in..][..d_in];
        for (o, out_v) in out_row.iter_mut().enumerate() {
            let w_row = &w[o * d_in..][..d_in];
            let mut acc = match bias {
                Some(b) => b.data()[o],
                None => T::zero(),
            };
            for (&xv, &wv) in x_row.iter().zip(w_row) {
                acc += xv * wv;
            }
            *out_v = acc;
        }
    });
    Ok(out)
}

pub struct LinearGrads<T: Element> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Option<Tensor<T>>,
}

pub fn linear_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    has_bias: bool,
    dy: &Tensor<T>,
) -> LinearGrads<T> {
    let (d_out, d_in) = (weight.dim(0), weight.dim(1));
    let rows = input.numel() / d_in;
    let x = input.data();
    let w = weight.data();
    let g = dy.data();

    let mut dx = Tensor::zeros(input.shape());
    for_each_chunk(dx.data_mut(), d_in, |m, dx_row| {
        let g_row = &g[m * d_out..][..d_out];
        for (o, &gv) in g_row.iter().enumerate() {
            if gv == T::zero() {
                continue;
            }
            let w_row = &w[o * d_in..][..d_in];
            for (d, &wv) in dx_row.iter_mut().zip(w_row) {
                *d += gv * wv;
            }
        }
    });

    let mut dw = Tensor::zeros(weight.shape());
    for_each_chunk(dw.data_mut(), d_in, |o, dw_row| {
        for m in 0..rows {
            let gv = g[m * d_out + o];
            if gv == T::zero() {
                continue;
            }
            let x_row = &x[m * d_in..][..d_in];
            for (d, &xv) in dw_row.iter_mut().zip(x_row) {
                *d += gv * xv;
            }
        }
    });

    let db = if has_bias {
        let mut db = Tensor::zeros(&[d_out]);
        for m in 0..rows {
            for (o, d) in db.data_mut().iter_mut().enumerate() {
                *d += g[m * d_out + o];
            }
        }
        Some(db)
    } else {
        None
    };

    LinearGrads { dx, dw, db }
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Element>(input: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= input.rank() {
        return Err(CottadError::shape(
            "softmax",
            format!("axis {axis} out of range for rank {}", input.rank()),
        ));
    }
    let axis_len = input.dim(axis);
    let inner: usize = input.shape()[axis + 1..].iter().product();
    let outer: usize = input.shape()[..axis].iter().product();
    let mut out = input.clone();
    let d = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut max = T::neg_infinity();
            for j in 0..axis_len {
                max = max.max(d[base + j * inner]);
            }
            let mut sum = T::zero();
            for j in 0..axis_len {
                let e = (d[base + j * inner] - max).exp();
                d[base + j * inner] = e;
                sum += e;
            }
            for j in 0..axis_len {
                d[base + j * inner] /= sum;
            }
        }
    }
    Ok(out)
}

/// Backward from the softmax *output* `y`: `dx = y * (dy - sum(dy * y))`.
pub fn softmax_backward<T: Element>(output: &Tensor<T>, axis: usize, dy: &Tensor<T>) -> Tensor<T> {
    let axis_len = output.dim(axis);
    let inner: usize = output.shape()[axis + 1..].iter().product();
    let outer: usize = output.shape()[..axis].iter().product();
    let y = output.data();
    let g = dy.data();
    let mut dx = Tensor::zeros(output.shape());
    let d = dx.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut dot = T::zero();
            for j in 0..axis_len {
                dot += g[base + j * inner] * y[base + j * inner];
            }
            for j in 0..axis_len {
                let idx = base + j * inner;
                d[idx] = y[idx] * (g[idx] - dot);
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_preserves_input() {
        let x = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(linear(&x, &w, None).unwrap(), x);
    }

    #[test]
    fn zero_weight_with_bias_yields_bias() {
        let x = Tensor::new(&[1, 3], vec![5.0, -2.0, 0.5]).unwrap();
        let w = Tensor::zeros(&[2, 3]);
        let b = Tensor::new(&[2], vec![0.25, -0.75]).unwrap();
        let y = linear(&x, &w, Some(&b)).unwrap();
        assert_eq!(y.data(), &[0.25, -0.75]);
    }

    #[test]
    fn small_matrix_example() {
        // [1,2] * [[1,1],[1,-1]]^T = [3, -1]
        let x = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(&[2, 2], vec![1.0, 1.0, 1.0, -1.0]).unwrap();
        let y = linear(&x, &w, None).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);
    }

    #[test]
    fn softmax_slices_sum_to_one() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 100.0]).unwrap();
        let y = softmax(&x, 1).unwrap();
        for row in y.data().chunks(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "sum {s}");
        }
    }

    #[test]
    fn softmax_of_single_logit_is_exactly_one() {
        let x = Tensor::new(&[3, 1], vec![-4.0, 0.0, 9.5]).unwrap();
        let y = softmax(&x, 1).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 1.0]);
    }
}
