//! Dense row-major tensors of `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense tensor stored in row-major order.
///
/// `shape.iter().product() == data.len()` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Returns a tensor with the same data and a new shape of equal size.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Size of everything after the leading axis.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Number of entries along the leading axis.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack<'a, I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let mut iter = items.into_iter().peekable();
        let inner = match iter.peek() {
            Some(t) => t.shape.clone(),
            None => return Err(Error::Config("cannot stack zero tensors".into())),
        };
        let mut data = Vec::new();
        let mut count = 0;
        for t in iter {
            if t.shape != inner {
                return Err(Error::Shape {
                    expected: inner,
                    actual: t.shape.clone(),
                });
            }
            data.extend_from_slice(&t.data);
            count += 1;
        }
        let mut shape = Vec::with_capacity(inner.len() + 1);
        shape.push(count);
        shape.extend(inner);
        Ok(Self { shape, data })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}
