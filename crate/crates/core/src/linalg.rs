//! Direct and iterative solvers for the sparse systems the discretizations
//! produce.
//!
//! Both the finite-difference and the local-basis matching systems are
//! banded when unknowns are numbered x-fastest, so the workhorse is an LU
//! factorization in band storage with partial pivoting. Systems too large
//! for band fill-in fall back to BiCGSTAB.

use crate::error::{Error, Result};

/// General banded matrix in column-band storage.
///
/// Entry `(i, j)` with `-ku <= i - j <= kl` is stored at row
/// `kl + ku + i - j` of column `j`. The extra `kl` rows at the top hold
/// fill-in created by row pivoting during factorization.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    /// `(2 * kl + ku + 1) x n`, laid out band-row major.
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let rows = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ab: vec![0.0; rows * n] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) * self.n + j
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let s = self.slot(i, j);
        self.ab[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.ab[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
    }

    /// Estimated factorization storage in bytes, for choosing a solver.
    pub fn factor_bytes(n: usize, kl: usize, ku: usize) -> usize {
        (2 * kl + ku + 1) * n * std::mem::size_of::<f64>()
    }

    /// LU factorization with partial pivoting, consuming the matrix.
    pub fn factor(self) -> Result<BandLu> {
        let BandMatrix { n, kl, ku, mut ab } = self;
        let kv = kl + ku;
        let rows = 2 * kl + ku + 1;
        debug_assert_eq!(ab.len(), rows * n);
        let mut pivots = vec![0usize; n];
        let at = |r: usize, c: usize| r * n + c;
        // ju tracks the rightmost column touched by pivoting so row swaps
        // stay inside the filled part of the band.
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0usize;
            let mut best = ab[at(kv, j)].abs();
            for t in 1..=km {
                let v = ab[at(kv + t, j)].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            pivots[j] = j + jp;
            if best == 0.0 {
                return Err(Error::LinearSolve(format!(
                    "singular pivot at column {j} of {n}"
                )));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let r1 = at(kv + j - c, c);
                    let r2 = at(kv + j + jp - c, c);
                    ab.swap(r1, r2);
                }
            }
            if km > 0 {
                let piv = ab[at(kv, j)];
                for t in 1..=km {
                    ab[at(kv + t, j)] /= piv;
                }
                for c in (j + 1)..=ju {
                    let ajc = ab[at(kv + j - c, c)];
                    if ajc != 0.0 {
                        for t in 1..=km {
                            ab[at(kv + j - c + t, c)] -= ab[at(kv + t, j)] * ajc;
                        }
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ab, pivots })
    }
}

/// Factored form of a [`BandMatrix`]; solves run in O(n * band).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kv = self.kl + self.ku;
        let at = |r: usize, c: usize| r * n + c;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for t in 1..=km {
                    b[j + t] -= self.ab[at(kv + t, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[at(kv, j)];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= self.ab[at(kv + i - j, j)] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Matrix plus its factorization, for repeated solves with one round of
/// iterative refinement against the unfactored entries.
#[derive(Debug, Clone)]
pub struct BandSolver {
    a: BandMatrix,
    lu: BandLu,
}

impl BandSolver {
    pub fn new(a: BandMatrix) -> Result<Self> {
        let lu = a.clone().factor()?;
        Ok(BandSolver { a, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.lu.solve(b);
        // One refinement pass knocks the residual down to the level the
        // conditioning allows; further passes change nothing measurable.
        let mut r = vec![0.0; b.len()];
        self.a.matvec(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        self.lu.solve_in_place(&mut r);
        for (xi, di) in x.iter_mut().zip(&r) {
            *xi += di;
        }
        x
    }

    pub fn matrix(&self) -> &BandMatrix {
        &self.a
    }
}

/// Compressed sparse rows, for systems whose band profile would not fit
/// in memory. Only needs to support matrix-vector products.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_counts = vec![0usize; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_counts[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_counts[r + 1] += row_counts[r];
        }
        CsrMatrix { n, row_ptr: row_counts, cols, vals }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    d[i] += self.vals[k];
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BiCGSTAB with optional diagonal (Jacobi) preconditioning.
///
/// `apply` computes `y = A x`. Converges when the true relative residual
/// drops below `tol`; returns the iterate and the iteration count.
pub fn bicgstab(
    apply: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    diag: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let precond = |v: &[f64], out: &mut Vec<f64>| {
        out.clear();
        match diag {
            Some(d) => out.extend(v.iter().zip(d).map(|(vi, di)| vi / di)),
            None => out.extend_from_slice(v),
        }
    };
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rhat = r.clone();
    let mut rho = dot(&rhat, &r);
    let mut p = r.clone();
    let mut v = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut phat = Vec::with_capacity(n);
    let mut shat = Vec::with_capacity(n);
    let tiny = f64::MIN_POSITIVE.sqrt();
    for it in 1..=max_iter {
        precond(&p, &mut phat);
        apply(&phat, &mut v);
        let denom = dot(&rhat, &v);
        if denom.abs() < tiny * rho.abs().max(tiny) {
            // Breakdown: restart from the current residual.
            rhat.copy_from_slice(&r);
            rho = dot(&rhat, &r);
            p.copy_from_slice(&r);
            continue;
        }
        let alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) / bnorm < tol {
            for (xi, pi) in x.iter_mut().zip(&phat) {
                *xi += alpha * pi;
            }
            return Ok((x, it));
        }
        precond(&s, &mut shat);
        apply(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::LinearSolve("stagnated with zero update direction".into()));
        }
        let omega = dot(&t, &s) / tt;
        for ((xi, pi), si) in x.iter_mut().zip(&phat).zip(&shat) {
            *xi += alpha * pi + omega * si;
        }
        for ((ri, si), ti) in r.iter_mut().zip(&s).zip(&t) {
            *ri = si - omega * ti;
        }
        if norm(&r) / bnorm < tol {
            return Ok((x, it));
        }
        let rho_new = dot(&rhat, &r);
        if rho_new.abs() < tiny || omega.abs() < tiny {
            rhat.copy_from_slice(&r);
            rho = dot(&rhat, &r);
            p.copy_from_slice(&r);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for ((pi, ri), vi) in p.iter_mut().zip(&r).zip(&v) {
            *pi = ri + beta * (*pi - omega * vi);
        }
        rho = rho_new;
    }
    Err(Error::LinearSolve(format!(
        "no convergence in {max_iter} iterations, relative residual {:.3e}",
        norm(&r) / bnorm
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::new(n, kl, ku);
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                if j != i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    a.set(i, j, v);
                    row_sum += v.abs();
                }
            }
            // Diagonal dominance keeps the test about accuracy, not
            // conditioning.
            a.set(i, i, row_sum + 1.0);
        }
        a
    }

    fn residual(a: &BandMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; b.len()];
        a.matvec(x, &mut ax);
        ax.iter()
            .zip(b)
            .map(|(l, r)| (l - r).abs())
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn band_lu_solves_random_systems() {
        for (n, kl, ku, seed) in [(40, 3, 5, 1), (75, 7, 2, 2), (9, 8, 8, 3), (50, 0, 0, 4)] {
            let a = random_banded(n, kl, ku, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let solver = BandSolver::new(a).unwrap();
            let x = solver.solve(&b);
            assert!(residual(solver.matrix(), &x, &b) < 1e-12, "n={n} kl={kl} ku={ku}");
        }
    }

    #[test]
    fn band_lu_pivots_through_zero_diagonal() {
        // Antidiagonal permutation: unsolvable without row swaps.
        let mut a = BandMatrix::new(4, 3, 3);
        for i in 0..4 {
            a.set(i, 3 - i, 1.0);
        }
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let x = a.clone().factor().unwrap().solve(&b);
        for i in 0..4 {
            assert!((x[i] - b[3 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn band_lu_reports_singular() {
        let mut a = BandMatrix::new(3, 1, 1);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        // Rows 0 and 1 proportional, row 2 ties into them.
        a.set(1, 2, 0.0);
        a.set(2, 1, 0.0);
        a.set(2, 2, 0.0);
        assert!(matches!(a.factor(), Err(Error::LinearSolve(_))));
    }

    #[test]
    fn tridiagonal_poisson_exact() {
        // -u'' = pi^2 sin(pi x) on (0, 1), u(0) = u(1) = 0, second-order
        // differences; discrete solution interpolates sin at grid accuracy.
        let n = 199;
        let h = 1.0 / (n as f64 + 1.0);
        let mut a = BandMatrix::new(n, 1, 1);
        for i in 0..n {
            a.set(i, i, 2.0 / (h * h));
            if i > 0 {
                a.set(i, i - 1, -1.0 / (h * h));
            }
            if i + 1 < n {
                a.set(i, i + 1, -1.0 / (h * h));
            }
        }
        let pi = std::f64::consts::PI;
        let b: Vec<f64> = (0..n)
            .map(|i| pi * pi * (pi * (i as f64 + 1.0) * h).sin())
            .collect();
        let x = BandSolver::new(a).unwrap().solve(&b);
        let err = (0..n)
            .map(|i| (x[i] - (pi * (i as f64 + 1.0) * h).sin()).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-3, "discretization error {err}");
    }

    #[test]
    fn bicgstab_matches_direct() {
        let n = 120;
        let a = random_banded(n, 4, 4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = BandSolver::new(a.clone()).unwrap().solve(&b);
        let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        let apply = |x: &[f64], y: &mut [f64]| a.matvec(x, y);
        let (x, iters) = bicgstab(&apply, &b, None, Some(&diag), 1e-12, 500).unwrap();
        assert!(iters < 500);
        let diff = x
            .iter()
            .zip(&direct)
            .map(|(l, r)| (l - r).abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-9, "iterative vs direct gap {diff}");
    }

    #[test]
    fn csr_matches_band() {
        let a = random_banded(30, 2, 3, 5);
        let mut entries = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                let v = a.get(i, j);
                if v != 0.0 {
                    // Split some values to exercise duplicate merging.
                    entries.push((i, j, 0.25 * v));
                    entries.push((i, j, 0.75 * v));
                }
            }
        }
        let csr = CsrMatrix::from_triplets(30, entries);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut yb = vec![0.0; 30];
        let mut yc = vec![0.0; 30];
        a.matvec(&x, &mut yb);
        csr.apply(&x, &mut yc);
        for (l, r) in yb.iter().zip(&yc) {
            assert!((l - r).abs() < 1e-12);
        }
        for i in 0..30 {
            assert!((csr.diagonal()[i] - a.get(i, i)).abs() < 1e-12);
        }
    }

    #[test]
    fn bicgstab_zero_rhs() {
        let apply = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let (x, iters) = bicgstab(&apply, &[0.0; 5], None, None, 1e-12, 10).unwrap();
        assert_eq!(iters, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
