//! Dense row-major `f64` tensors and the elementwise activations used by
//! every network in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense n-dimensional array of `f64` stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || expected != data.len() {
            return Err(Error::DataLength { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Self { shape: vec![data.len()], data }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Number of rows when viewed as a matrix (1 for vectors).
    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.len() / self.rows();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(Error::DataLength { shape, len: self.data.len() });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic sigmoid.
pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(logistic)
}

pub fn tanh_act(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Softmax over each row of a `K x d` matrix, with per-row max subtraction.
/// A vector is treated as a single row.
pub fn softmax_rows(raw: &Tensor) -> Tensor {
    let rows = raw.rows();
    let cols = raw.len() / rows;
    let mut out = Vec::with_capacity(raw.len());
    for r in 0..rows {
        let row = raw.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..start + cols] {
            *v /= total;
        }
    }
    Tensor { shape: raw.shape.clone(), data: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).data(), &[0.5]);
        assert!(sigmoid(&Tensor::scalar(20.0)).data()[0] > 1.0 - 1e-8);
        // 1/(1+e^{1}) and 1/(1+e^{-1}) to 20 digits
        let s = sigmoid(&Tensor::vector(vec![-1.0, 1.0]));
        assert!((s.data()[0] - 0.268_941_421_369_995_120_75).abs() < 1e-15);
        assert!((s.data()[1] - 0.731_058_578_630_004_879_25).abs() < 1e-15);
    }

    #[test]
    fn tanh_values() {
        assert_eq!(tanh_act(&Tensor::scalar(0.0)).data(), &[0.0]);
        let t = tanh_act(&Tensor::scalar(0.5)).data()[0];
        assert!((t - 0.462_117_157_260_009_758_5).abs() < 1e-15);
        let a = tanh_act(&Tensor::vector(vec![0.3, -1.7]));
        let b = tanh_act(&Tensor::vector(vec![-0.3, 1.7]));
        assert_eq!(a.data()[0], -b.data()[0]);
        assert_eq!(a.data()[1], -b.data()[1]);
    }

    #[test]
    fn softmax_closed_forms() {
        let u = softmax_rows(&Tensor::matrix(1, 4, vec![0.0; 4]).unwrap());
        assert_eq!(u.data(), &[0.25; 4]);
        let s = softmax_rows(&Tensor::matrix(1, 2, vec![2f64.ln(), 0.0]).unwrap());
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(raw in proptest::collection::vec(-1e4f64..1e4, 32)) {
            let t = Tensor::matrix(4, 8, raw).unwrap();
            let s = softmax_rows(&t);
            for r in 0..4 {
                let row = s.row(r);
                prop_assert!(row.iter().all(|&v| v >= 0.0 && v.is_finite()));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
