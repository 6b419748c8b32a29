use std::fmt::Debug;

use num_traits::Float;

/// Storage scalar for embeddings and metrics.
///
/// Implemented for `f32` and `f64`. The snapshot codec writes the scalar
/// little-endian at its native width.
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {
    /// Byte width in snapshot records.
    const WIDTH: usize;

    fn write_le(self, out: &mut Vec<u8>);

    /// `bytes.len()` must equal `WIDTH`.
    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64_lossy(v: f64) -> Self;

    fn to_f64_lossless(self) -> f64;
}

impl Scalar for f32 {
    const WIDTH: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("f32 width"))
    }

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    const WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("f64 width"))
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn to_f64_lossless(self) -> f64 {
        self
    }
}
