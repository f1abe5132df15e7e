//! Small dense solves and a complex banded LU used by the implicit time stepper.

use num_complex::Complex64;

/// Solve `a x = b` in place for a small dense row-major `n x n` system with
/// partial pivoting. `b` is overwritten with the solution.
pub fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
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
        if best == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Some(())
}

/// Complex banded matrix with `kl` sub- and `ku` super-diagonals.
///
/// Rows are stored with `kl` extra superdiagonals of fill so the factorization
/// can pivot within the band. Entry (i, j) is valid for -kl <= j - i <= ku
/// before factoring, and for j - i <= kl + ku afterwards.
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![Complex64::new(0.0, 0.0); width * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // column offset inside row i: j - (i - kl)
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i},{j}) outside the declared band"
        );
        let s = self.idx(i, j);
        self.data[s] += v;
    }

    /// Clear row i and put 1 on the diagonal (Dirichlet row).
    pub fn set_row_unit(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.kl + self.ku).min(self.n - 1);
        for j in lo..=hi {
            if j + self.kl >= i {
                let s = self.idx(i, j);
                self.data[s] = Complex64::new(0.0, 0.0);
            }
        }
        let s = self.idx(i, i);
        self.data[s] = Complex64::new(1.0, 0.0);
    }

    /// y = A x over the declared band (call before factoring).
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            let mut s = Complex64::new(0.0, 0.0);
            for j in j0..=j1 {
                s += self.data[self.idx(i, j)] * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// In-place banded LU with partial pivoting; returns the pivot vector.
    pub fn factor(&mut self) -> Option<Vec<usize>> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        for j in 0..n {
            let i_max = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.data[self.idx(j, j)].norm_sqr();
            for i in j + 1..=i_max {
                let v = self.data[self.idx(i, j)].norm_sqr();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            piv[j] = p;
            if p != j {
                let c_hi = (j + kv).min(n - 1);
                for c in j..=c_hi {
                    let a = self.idx(j, c);
                    let b = self.idx(p, c);
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(j, j)];
            let c_hi = (j + kv).min(n - 1);
            for i in j + 1..=i_max {
                let l = self.data[self.idx(i, j)] / d;
                let li = self.idx(i, j);
                self.data[li] = l;
                if l != Complex64::new(0.0, 0.0) {
                    for c in j + 1..=c_hi {
                        let a = self.data[self.idx(j, c)];
                        let ti = self.idx(i, c);
                        self.data[ti] -= l * a;
                    }
                }
            }
        }
        Some(piv)
    }

    /// Solve with a factorization produced by [`BandedMatrix::factor`].
    pub fn solve_factored(&self, piv: &[usize], b: &mut [Complex64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = piv[j];
            if p != j {
                b.swap(j, p);
            }
            let i_max = (j + self.kl).min(n - 1);
            let bj = b[j];
            for i in j + 1..=i_max {
                b[i] -= self.data[self.idx(i, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            for c in j + 1..=((j + kv).min(n - 1)) {
                s -= self.data[self.idx(j, c)] * b[c];
            }
            b[j] = s / self.data[self.idx(j, j)];
        }
    }
}
