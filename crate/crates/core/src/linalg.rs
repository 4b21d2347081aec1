//! Small complex linear-algebra kernels: dense LU with partial pivoting and a
//! compressed-row sparse matrix with triangular solves.

use num_complex::Complex64 as C64;

/// Pivot-ratio threshold above which a factorization is reported singular.
pub const CONDITION_LIMIT: f64 = 1e14;

/// Row-major dense complex square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn from_row_major(n: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub(crate) fn reset(&mut self, n: usize) {
        self.n = n;
        self.data.clear();
        self.data.resize(n * n, C64::new(0.0, 0.0));
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| self.data[i * n..(i + 1) * n].iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == C64::new(0.0, 0.0)))
    }

    pub fn is_upper_triangular(&self) -> bool {
        self.transpose().is_lower_triangular()
    }
}

/// In-place LU factorization with partial pivoting. Buffers are reused across
/// calls so a single instance can serve many solves of the same size.
#[derive(Debug, Clone, Default)]
pub struct LuWorkspace {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
}

/// Outcome of a factorization that failed the conditioning test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub condition: f64,
}

impl LuWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Factors the row-major `n`×`n` matrix `a`.
    ///
    /// The condition estimate is the ratio of the largest to the smallest
    /// pivot modulus. It is cheap and catches exact and near-exact
    /// singularity, which is all the callers need.
    pub fn factor(&mut self, n: usize, a: &[C64]) -> Result<f64, Singular> {
        debug_assert_eq!(a.len(), n * n);
        self.n = n;
        self.lu.clear();
        self.lu.extend_from_slice(a);
        self.perm.clear();
        self.perm.extend(0..n);
        let lu = &mut self.lu;
        let mut pmax = 0.0f64;
        let mut pmin = f64::INFINITY;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].norm_sqr();
            for i in k + 1..n {
                let v = lu[i * n + k].norm_sqr();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                self.perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            let pabs = pivot.norm();
            pmax = pmax.max(pabs);
            pmin = pmin.min(pabs);
            if pabs == 0.0 || !pabs.is_finite() {
                return Err(Singular {
                    condition: f64::INFINITY,
                });
            }
            let inv = pivot.inv();
            for i in k + 1..n {
                let f = lu[i * n + k] * inv;
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                lu[i * n + k] = f;
                let (top, bottom) = lu.split_at_mut(i * n);
                let row_k = &top[k * n + k + 1..k * n + n];
                let row_i = &mut bottom[k + 1..n];
                for (x, y) in row_i.iter_mut().zip(row_k) {
                    *x -= f * y;
                }
            }
        }
        let condition = if n == 0 { 1.0 } else { pmax / pmin };
        if condition > CONDITION_LIMIT {
            return Err(Singular { condition });
        }
        Ok(condition)
    }

    /// Solves A x = b for the last factored A. `b` is overwritten with x.
    pub fn solve_in_place(&self, b: &mut [C64], scratch: &mut Vec<C64>) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        scratch.clear();
        scratch.extend(self.perm.iter().map(|&p| b[p]));
        let lu = &self.lu;
        for i in 0..n {
            let mut s = scratch[i];
            for j in 0..i {
                s -= lu[i * n + j] * scratch[j];
            }
            scratch[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = scratch[i];
            for j in i + 1..n {
                s -= lu[i * n + j] * scratch[j];
            }
            scratch[i] = s / lu[i * n + i];
        }
        b.copy_from_slice(scratch);
    }
}

/// Compressed-row sparse complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    pub(crate) fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self {
            n,
            row_ptr,
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    /// Appends the next row. Entries must have strictly increasing columns.
    pub(crate) fn push_row(&mut self, entries: &[(usize, C64)]) {
        for &(c, v) in entries {
            self.cols.push(c as u32);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(C64::new(0.0, 0.0), |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                d.set(i, c, v);
            }
        }
        d
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(c, _)| c <= i))
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(c, _)| c >= i))
    }

    /// Forward substitution for a lower-triangular matrix; `b` becomes x.
    pub fn solve_lower_in_place(&self, b: &mut [C64]) -> Result<f64, Singular> {
        let mut tracker = PivotTracker::default();
        for i in 0..self.n {
            let mut s = b[i];
            let mut d = C64::new(0.0, 0.0);
            for (c, v) in self.row(i) {
                if c < i {
                    s -= v * b[c];
                } else if c == i {
                    d = v;
                }
            }
            tracker.see(d)?;
            b[i] = s / d;
        }
        tracker.finish()
    }

    /// Back substitution for an upper-triangular matrix; `b` becomes x.
    pub fn solve_upper_in_place(&self, b: &mut [C64]) -> Result<f64, Singular> {
        let mut tracker = PivotTracker::default();
        for i in (0..self.n).rev() {
            let mut s = b[i];
            let mut d = C64::new(0.0, 0.0);
            for (c, v) in self.row(i) {
                if c > i {
                    s -= v * b[c];
                } else if c == i {
                    d = v;
                }
            }
            tracker.see(d)?;
            b[i] = s / d;
        }
        tracker.finish()
    }
}

#[derive(Default)]
struct PivotTracker {
    max: f64,
    min: Option<f64>,
}

impl PivotTracker {
    fn see(&mut self, d: C64) -> Result<(), Singular> {
        let a = d.norm();
        if a == 0.0 || !a.is_finite() {
            return Err(Singular {
                condition: f64::INFINITY,
            });
        }
        self.max = self.max.max(a);
        self.min = Some(self.min.map_or(a, |m| m.min(a)));
        Ok(())
    }

    fn finish(self) -> Result<f64, Singular> {
        let c = self.min.map_or(1.0, |m| self.max / m);
        if c > CONDITION_LIMIT {
            Err(Singular { condition: c })
        } else {
            Ok(c)
        }
    }
}

/// Euclidean norm of a complex vector.
pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
