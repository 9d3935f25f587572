use crate::graph::{DataType, WeightEntry};
use crate::kernels::{TensorView, TensorViewMut};

/// Owned tensor contents.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I32(Vec<i32>),
}

impl TensorData {
    pub fn zeros(dtype: DataType, len: usize) -> Self {
        match dtype {
            DataType::F32 => TensorData::F32(vec![0.0; len]),
            DataType::I32 => TensorData::I32(vec![0; len]),
        }
    }

    pub fn from_entry(entry: &WeightEntry) -> Self {
        match entry.dtype {
            DataType::F32 => TensorData::F32(entry.to_f32()),
            DataType::I32 => TensorData::I32(entry.to_i32()),
        }
    }

    /// Decodes little-endian bytes; the length must be a multiple of 4.
    pub fn from_le_bytes(dtype: DataType, bytes: &[u8]) -> Option<Self> {
        if bytes.len() % 4 != 0 {
            return None;
        }
        let words = bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
        Some(match dtype {
            DataType::F32 => TensorData::F32(words.map(f32::from_le_bytes).collect()),
            DataType::I32 => TensorData::I32(words.map(i32::from_le_bytes).collect()),
        })
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn dtype(&self) -> DataType {
        match self {
            TensorData::F32(_) => DataType::F32,
            TensorData::I32(_) => DataType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_len(&self) -> u64 {
        (self.len() * self.dtype().byte_width()) as u64
    }

    pub fn view(&self) -> TensorView<'_> {
        match self {
            TensorData::F32(v) => TensorView::F32(v),
            TensorData::I32(v) => TensorView::I32(v),
        }
    }

    pub fn view_mut(&mut self) -> TensorViewMut<'_> {
        match self {
            TensorData::F32(v) => TensorViewMut::F32(v),
            TensorData::I32(v) => TensorViewMut::I32(v),
        }
    }

    /// Values widened to f64, for diffing.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_round_trip() {
        let t = TensorData::F32(vec![1.0, -2.5, f32::MIN_POSITIVE]);
        let back = TensorData::from_le_bytes(DataType::F32, &t.to_le_bytes()).unwrap();
        assert_eq!(t, back);
        assert!(TensorData::from_le_bytes(DataType::I32, &[0, 1, 2]).is_none());
    }
}
