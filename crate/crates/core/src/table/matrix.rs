use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major matrix with a shared, immutable buffer.
///
/// Cloning is cheap; "mutating" a table builds new matrices and shares
/// untouched ones.
#[derive(Clone, Debug)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Arc<Vec<T>>,
}

impl<T: Copy> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix buffer".into(),
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: Arc::new(data),
        })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: Arc::new(vec![value; rows * cols]),
        }
    }

    /// Builds a matrix from column vectors, all of length `rows`.
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for col in columns {
            if col.len() != rows {
                return Err(Error::LengthMismatch {
                    what: "matrix column".into(),
                    expected: rows,
                    actual: col.len(),
                });
            }
        }
        for i in 0..rows {
            for col in columns {
                data.push(col[i]);
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<T>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn take_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data: Arc::new(data),
        }
    }

    /// Row-wise concatenation; all parts must have the same column count.
    pub fn concat_rows(parts: &[&Matrix<T>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for part in parts {
            if part.cols != cols {
                return Err(Error::LengthMismatch {
                    what: "matrix columns".into(),
                    expected: cols,
                    actual: part.cols,
                });
            }
            data.extend_from_slice(part.as_slice());
            rows += part.rows;
        }
        Self::new(rows, cols, data)
    }
}

/// Exact bit pattern of a stored element, for bit-exact comparisons.
pub trait BitPattern: Copy {
    fn bit_pattern(self) -> u64;
}

impl BitPattern for f32 {
    fn bit_pattern(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl BitPattern for f64 {
    fn bit_pattern(self) -> u64 {
        self.to_bits()
    }
}

impl BitPattern for u32 {
    fn bit_pattern(self) -> u64 {
        u64::from(self)
    }
}

impl<T: BitPattern> Matrix<T> {
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.bit_pattern() == b.bit_pattern())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_columns_is_row_major() {
        let m = Matrix::from_columns(2, &[vec![1.0f32, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(m.column(1), vec![3.0, 4.0]);
    }

    #[test]
    fn bad_buffer_length() {
        assert!(matches!(
            Matrix::new(2, 2, vec![0.0f32; 3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bits_eq_distinguishes_nan_payloads() {
        let a = Matrix::new(1, 1, vec![f32::NAN]).unwrap();
        let b = Matrix::new(1, 1, vec![f32::from_bits(0x7fc0_0001)]).unwrap();
        assert!(a.bits_eq(&a.clone()));
        assert!(!a.bits_eq(&b));
    }
}
