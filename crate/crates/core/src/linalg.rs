//! Small dense vector and matrix helpers.
//!
//! Every reduction walks its input front to back so that results are
//! bit-reproducible across runs and platforms with the same float semantics.

use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&ai, &bi) in a.iter().zip(b) {
        acc = acc + ai * bi;
    }
    acc
}

#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

#[inline]
pub fn sum<T: Scalar>(a: &[T]) -> T {
    let mut acc = T::zero();
    for &ai in a {
        acc = acc + ai;
    }
    acc
}

pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&ai, &bi) in a.iter().zip(b) {
        let d = ai - bi;
        acc = acc + d * d;
    }
    acc
}

pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    dist_sq(a, b).sqrt()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&ai, &bi)| ai - bi).collect()
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn scaled<T: Scalar>(alpha: T, x: &[T]) -> Vec<T> {
    x.iter().map(|&xi| alpha * xi).collect()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub fn to_f64_vec<T: Scalar>(a: &[T]) -> Vec<f64> {
    a.iter().map(|v| v.as_f64()).collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, falling back to the absolute difference when
/// both vectors are numerically zero.
pub fn relative_deviation<T: Scalar>(a: &[T], b: &[T]) -> T {
    let diff = dist(a, b);
    let scale = norm(a).max(norm(b));
    if scale < T::lit(1e-12) {
        diff
    } else {
        diff / scale
    }
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.n {
            let mut row = T::zero();
            for j in 0..self.n {
                row = row + self[(i, j)].abs();
            }
            best = best.max(row);
        }
        best
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn set_column(&mut self, j: usize, col: &[T]) {
        for (i, &v) in col.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    /// Solves `self · x = rhs` by LU factorisation with partial pivoting.
    /// Returns `None` when a pivot vanishes.
    pub fn solve(&self, rhs: &[T]) -> Option<Vec<T>> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for row in col + 1..n {
                let v = a[row * n + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                b.swap(col, piv);
            }
            let d = a[col * n + col];
            for row in col + 1..n {
                let factor = a[row * n + col] / d;
                if factor == T::zero() {
                    continue;
                }
                a[row * n + col] = T::zero();
                for j in col + 1..n {
                    a[row * n + j] = a[row * n + j] - factor * a[col * n + j];
                }
                b[row] = b[row] - factor * b[col];
            }
        }
        let mut x = vec![T::zero(); n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for j in row + 1..n {
                acc = acc - a[row * n + j] * x[j];
            }
            x[row] = acc / a[row * n + row];
        }
        if all_finite(&x) {
            Some(x)
        } else {
            None
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}
