use serde::{Deserialize, Serialize};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Tensor::new(shape, vec![v; shape.iter().product()])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(&[1], vec![v])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(&[rows, cols], data)
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

    /// Leading dimension (1 for scalars).
    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Product of the trailing dimensions (the full length for 1-D).
    pub fn cols(&self) -> usize {
        if self.shape.len() <= 1 {
            self.data.len()
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let bp = &b[p * n..(p + 1) * n];
            for (cv, bv) in ci.iter_mut().zip(bp) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`
pub(crate) fn matmul_bt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let ai = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let bp = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (x, y) in ai.iter().zip(bp) {
                s += x * y;
            }
            c[i * k + p] += s;
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn matmul_at_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let bi = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let cp = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in cp.iter_mut().zip(bi) {
                *cv += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3x2
        let mut c = [0.0; 4];
        matmul_acc(&a, &b, &mut c, 2, 3, 2);
        assert_eq!(c, [1.0 - 2.0 + 1.5, 0.0 + 4.0 + 3.0, 4.0 - 5.0 + 3.0, 10.0 + 6.0]);
        // b transposed is 2x3
        let bt = [1.0, -1.0, 0.5, 0.0, 2.0, 1.0];
        let mut c2 = [0.0; 4];
        matmul_bt_acc(&a, &bt, &mut c2, 2, 3, 2);
        assert_eq!(c, c2);
        // aᵀ (3x2) · a (2x3)
        let mut g = [0.0; 9];
        matmul_at_acc(&a, &a, &mut g, 2, 3, 3);
        assert_eq!(g[0], 1.0 + 16.0);
        assert_eq!(g[5], 2.0 * 3.0 + 5.0 * 6.0);
    }
}
