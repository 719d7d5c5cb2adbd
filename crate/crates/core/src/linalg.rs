//! Small dense vector/matrix helpers for low-dimensional geometry (n <= ~8).

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn neg(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| -x).collect()
}

/// a + s*b
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn basis_vector(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Square matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let n = cols.len();
        assert!(cols.iter().all(|c| c.len() == n));
        let mut data = Vec::with_capacity(n * n);
        for c in cols {
            data.extend_from_slice(c);
        }
        Mat { n, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat {
            n,
            data: vec![0.0; n * n],
        };
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                let c = self.col(j);
                for i in 0..n {
                    y[i] += c[i] * xj;
                }
            }
        }
        y
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[k * n + i].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return 0.0;
            }
            if piv != k {
                for j in 0..n {
                    a.swap(j * n + k, j * n + piv);
                }
                det = -det;
            }
            let d = a[k * n + k];
            det *= d;
            for i in (k + 1)..n {
                let f = a[k * n + i] / d;
                if f != 0.0 {
                    for j in k..n {
                        a[j * n + i] -= f * a[j * n + k];
                    }
                }
            }
        }
        det
    }

    /// Max-abs entry of Mᵀ·M − I.
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.n;
        let mut res: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = dot(self.col(i), self.col(j)) - if i == j { 1.0 } else { 0.0 };
                res = res.max(v.abs());
            }
        }
        res
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// given in row-major dense form. Returns None if not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves L·x = b for lower-triangular L (row-major).
pub fn forward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
