/// Banded LU without pivoting, for M-matrices and other diagonally dominant
/// systems where pivoting is unnecessary.
#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    n: usize,
    w: usize,
    /// Row `i` stores columns `i−w ..= i+w`.
    a: Vec<f64>,
}

impl BandLu {
    pub fn zeros(n: usize, w: usize) -> Self {
        BandLu { n, w, a: vec![0.0; n * (2 * w + 1)] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (2 * self.w + 1) + (j + self.w - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i.abs_diff(j) <= self.w);
        let k = self.at(i, j);
        self.a[k] += v;
    }

    /// In-place factorization; fails on a zero pivot.
    pub fn factor(mut self) -> Option<Self> {
        let (n, w) = (self.n, self.w);
        for k in 0..n {
            let pivot = self.a[self.at(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            let last = (k + w).min(n - 1);
            for i in k + 1..=last {
                let ik = self.at(i, k);
                if self.a[ik] == 0.0 {
                    continue;
                }
                let l = self.a[ik] / pivot;
                self.a[ik] = l;
                for j in k + 1..=last {
                    let kj = self.a[self.at(k, j)];
                    if kj != 0.0 {
                        let ij = self.at(i, j);
                        self.a[ij] -= l * kj;
                    }
                }
            }
        }
        Some(self)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, w) = (self.n, self.w);
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(w)..i {
                s -= self.a[self.at(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + w).min(n - 1) {
                s -= self.a[self.at(i, j)] * b[j];
            }
            b[i] = s / self.a[self.at(i, i)];
        }
    }
}
