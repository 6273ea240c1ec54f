//! Dense row-major tensor and the CTEN binary container.
//!
//! Tensors are plain `(shape, data)` pairs over `f64` (verification mode)
//! or `f32` (bench mode). Operations on them live in [`crate::ops`] and
//! never mutate their inputs.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CottadError, Result};
use crate::rng::Rng64;

/// Element dtype codes used by the CTEN container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

/// Scalar element of a tensor. Implemented for `f32` and `f64`.
pub trait Element:
    num_traits::Float
    + num_traits::NumAssign
    + num_traits::FromPrimitive
    + Copy
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    const DTYPE: Dtype;
    const BYTES: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;
    const BYTES: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
    }
}

impl Element for f64 {
    const DTYPE: Dtype = Dtype::F64;
    const BYTES: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
    }
}

/// Dense N-dimensional array, row-major. Image batches use NCHW layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Element = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(CottadError::shape(
                "tensor",
                format!("zero-sized dimension in shape {shape:?}"),
            ));
        }
        if numel != data.len() {
            return Err(CottadError::shape(
                "tensor",
                format!(
                    "shape {shape:?} implies {numel} elements but {} were provided",
                    data.len()
                ),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); numel],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// Scalar tensor of shape `[1]`.
    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// i.i.d. gaussian entries with the given standard deviation.
    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng64) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| T::from_f64(rng.gaussian() * std))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Dimension `i`, named for NCHW readability at call sites.
    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    /// Reinterpret as a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(CottadError::shape(
                "reshape",
                format!(
                    "cannot reshape {:?} ({} elements) to {shape:?} ({numel} elements)",
                    self.shape,
                    self.data.len()
                ),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat offset of `[n, c, y, x]` in an NCHW tensor.
    #[inline]
    pub fn idx4(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx4(n, c, y, x)]
    }

    /// Largest elementwise |a - b|; shapes must match.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// CTEN container
//
// magic "CTEN", u8 version = 1, u8 dtype (0 = f32, 1 = f64), u8 rank,
// u8 reserved = 0, rank x u32 little-endian dims, then the row-major
// payload in little-endian order.
// ---------------------------------------------------------------------------

const CTEN_MAGIC: &[u8; 4] = b"CTEN";
const CTEN_VERSION: u8 = 1;

impl<T: Element> Tensor<T> {
    pub fn to_cten_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.rank() + self.numel() * T::BYTES);
        out.extend_from_slice(CTEN_MAGIC);
        out.push(CTEN_VERSION);
        out.push(T::DTYPE as u8);
        out.push(self.rank() as u8);
        out.push(0);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_cten_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(CottadError::Format("CTEN: truncated header".into()));
        }
        if &bytes[0..4] != CTEN_MAGIC {
            return Err(CottadError::Format(format!(
                "CTEN: bad magic {:?}",
                &bytes[0..4]
            )));
        }
        if bytes[4] != CTEN_VERSION {
            return Err(CottadError::Format(format!(
                "CTEN: unsupported version {}",
                bytes[4]
            )));
        }
        let dtype = bytes[5];
        if dtype != T::DTYPE as u8 {
            return Err(CottadError::Format(format!(
                "CTEN: dtype code {dtype} does not match requested element type"
            )));
        }
        let rank = bytes[6] as usize;
        let header = 8 + 4 * rank;
        if bytes.len() < header {
            return Err(CottadError::Format("CTEN: truncated dims".into()));
        }
        let mut shape = Vec::with_capacity(rank);
        for i in 0..rank {
            let off = 8 + 4 * i;
            shape.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = &bytes[header..];
        if payload.len() != numel * T::BYTES {
            return Err(CottadError::Format(format!(
                "CTEN: payload holds {} bytes, shape {shape:?} needs {}",
                payload.len(),
                numel * T::BYTES
            )));
        }
        let data = payload
            .chunks_exact(T::BYTES)
            .map(|c| T::read_le(c))
            .collect();
        Tensor::new(&shape, data)
    }

    pub fn save_cten(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_cten_bytes())?;
        Ok(())
    }

    pub fn load_cten(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_cten_bytes(&bytes)
    }
}
