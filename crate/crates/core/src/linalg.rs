//! Small dense vector and matrix helpers.

use crate::scalar::Scalar;

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<S: Scalar>(a: &[S]) -> S {
    // scaled to avoid overflow for large coordinates
    let amax = a.iter().fold(S::zero(), |m, &v| m.max(v.abs()));
    if amax == S::zero() || !amax.is_finite() {
        return amax;
    }
    let s = a.iter().fold(S::zero(), |acc, &v| {
        let w = v / amax;
        acc + w * w
    });
    amax * s.sqrt()
}

pub fn norm_sq<S: Scalar>(a: &[S]) -> S {
    dot(a, a)
}

pub fn norm1<S: Scalar>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |acc, &v| acc + v.abs())
}

pub fn norm_inf<S: Scalar>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |acc, &v| acc.max(v.abs()))
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<S: Scalar>(a: &[S], s: S) -> Vec<S> {
    a.iter().map(|&x| x * s).collect()
}

/// `y += alpha * x`
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    norm(&sub(a, b))
}

/// Linear interpolation `(1 - w) a + w b`.
pub fn lerp<S: Scalar>(a: &[S], b: &[S], w: S) -> Vec<S> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x + (y - x) * w)
        .collect()
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn tr_mul_vec(&self, y: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            axpy(yi, self.row(i), &mut out);
        }
        out
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `tol * max|A|`.
pub fn solve<S: Scalar>(a: &Matrix<S>, b: &[S], tol: S) -> Option<Vec<S>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.data.iter().fold(S::zero(), |acc, &v| acc.max(v.abs()));
    if n > 0 && scale == S::zero() {
        return None;
    }
    for k in 0..n {
        let mut piv = k;
        let mut best = m.get(k, k).abs();
        for i in k + 1..n {
            let v = m.get(i, k).abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best <= tol * scale {
            return None;
        }
        if piv != k {
            for j in 0..n {
                m.data.swap(k * n + j, piv * n + j);
            }
            rhs.swap(k, piv);
        }
        let d = m.get(k, k);
        for i in k + 1..n {
            let f = m.get(i, k) / d;
            if f == S::zero() {
                continue;
            }
            for j in k..n {
                let v = m.get(i, j) - f * m.get(k, j);
                m.set(i, j, v);
            }
            rhs[i] = rhs[i] - f * rhs[k];
        }
    }
    let mut x = vec![S::zero(); n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for j in k + 1..n {
            s -= m.get(k, j) * x[j];
        }
        x[k] = s / m.get(k, k);
    }
    Some(x)
}

/// Gram matrix `V V^T` of a list of vectors.
pub fn gram<S: Scalar>(vs: &[&[S]]) -> Matrix<S> {
    let k = vs.len();
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = dot(vs[i], vs[j]);
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    g
}
