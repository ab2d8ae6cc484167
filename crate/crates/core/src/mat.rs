//! Small dense row-major matrices over any [`Scalar`]; used where entries are jets.

use crate::jet::Scalar;
use nalgebra::DMatrix;

#[derive(Clone, Debug)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::cst(1.0);
        }
        m
    }

    pub fn from_f64(m: &DMatrix<f64>) -> Self {
        let mut out = Mat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = S::cst(m[(i, j)]);
            }
        }
        out
    }

    pub fn value(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].value())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, o: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, o.rows);
        let mut out = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut acc: Option<S> = None;
                for k in 0..self.cols {
                    let p = self[(i, k)].clone() * o[(k, j)].clone();
                    acc = Some(match acc {
                        None => p,
                        Some(a) => a + p,
                    });
                }
                out[(i, j)] = acc.unwrap_or_else(S::zero);
            }
        }
        out
    }

    pub fn add(&self, o: &Mat<S>) -> Mat<S> {
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.clone() + b.clone()).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, o: &Mat<S>) -> Mat<S> {
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.clone() - b.clone()).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, k: f64) -> Mat<S> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.clone() * k).collect() }
    }

    pub fn d(&self, var: usize) -> Mat<S> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.d(var)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.value().abs()).fold(0.0, f64::max)
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `a x = b` by Gaussian elimination, pivoting on the values of the entries.
/// Returns `None` when a pivot falls below `floor` times the largest entry.
pub fn solve<S: Scalar>(a: &Mat<S>, b: &Mat<S>, floor: f64) -> Option<Mat<S>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    let mut a = a.clone();
    let mut b = b.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[(i, col)].value().abs().total_cmp(&a[(j, col)].value().abs())
        })?;
        if a[(piv, col)].value().abs() <= floor * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.data.swap(piv * n + j, col * n + j);
            }
            for j in 0..b.cols {
                b.data.swap(piv * b.cols + j, col * b.cols + j);
            }
        }
        let inv = a[(col, col)].recip();
        for r in col + 1..n {
            let f = a[(r, col)].clone() * inv.clone();
            for j in col..n {
                let v = a[(r, j)].clone() - f.clone() * a[(col, j)].clone();
                a[(r, j)] = v;
            }
            for j in 0..b.cols {
                let v = b[(r, j)].clone() - f.clone() * b[(col, j)].clone();
                b[(r, j)] = v;
            }
        }
    }
    let mut x: Mat<S> = Mat::zeros(n, b.cols);
    for j in 0..b.cols {
        for i in (0..n).rev() {
            let mut acc = b[(i, j)].clone();
            for k in i + 1..n {
                acc = acc - a[(i, k)].clone() * x[(k, j)].clone();
            }
            x[(i, j)] = acc / a[(i, i)].clone();
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{layout, Jet};

    #[test]
    fn solve_matches_direct_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 0.5, -1.0, 3.0, 0.0, 2.0]);
        let b = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let x = solve(&Mat::<f64>::from_f64(&a), &Mat::from_f64(&b), 1e-14).unwrap().value();
        let expect = a.clone().try_inverse().unwrap() * b;
        assert!((x - expect).amax() < 1e-14);
    }

    #[test]
    fn solve_differentiates_through_jets() {
        // x(u) solving [[u, 1], [1, 2]] x = (1, 0): x0 = 2 / (2u − 1).
        let l = layout(1, 2);
        let u = Jet::variable(l, 0, 1.5);
        let mut a = Mat::<Jet>::identity(2);
        a[(0, 0)] = u;
        a[(0, 1)] = Jet::cst(1.0);
        a[(1, 0)] = Jet::cst(1.0);
        a[(1, 1)] = Jet::cst(2.0);
        let mut b = Mat::<Jet>::zeros(2, 1);
        b[(0, 0)] = Jet::cst(1.0);
        let x = solve(&a, &b, 1e-14).unwrap();
        let x0 = &x[(0, 0)];
        assert!((x0.value() - 1.0).abs() < 1e-14);
        assert!((x0.partial(&[1]) + 4.0 / 4.0).abs() < 1e-14);
        assert!((x0.partial(&[2]) - 16.0 / 8.0).abs() < 1e-13);
    }
}
