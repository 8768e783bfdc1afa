//! Linear solvers for symmetric positive definite systems: Jacobi-preconditioned
//! conjugate gradients, a sparse Cholesky factorisation with nested-dissection
//! ordering, and a dense LU used as a test oracle.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::math;
use crate::mesh::Point;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinearSolver {
    /// Sparse direct factorisation.
    #[default]
    Cholesky,
    /// Jacobi-preconditioned CG to relative residual `tol`.
    Pcg { tol: f64, max_iter: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgReport {
    pub iterations: usize,
    /// Relative residual `|r_k| / |b|` after each iteration, starting with `k = 0`.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pcg(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, PcgReport)> {
    pcg_observed(a, b, x0, tol, max_iter, &mut |_| {})
}

/// [`pcg`] that hands every iterate to `observe`.
pub fn pcg_observed(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    observe: &mut dyn FnMut(&[f64]),
) -> Result<(Vec<f64>, PcgReport)> {
    let n = a.n();
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let bnorm = math::sqrt(dot(b, b));
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], PcgReport { iterations: 0, history: vec![0.0] }));
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = vec![0.0; n];
    a.mul_vec(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = vec![math::sqrt(dot(&r, &r)) / bnorm];
    for it in 1..=max_iter {
        if *history.last().unwrap() <= tol {
            return Ok((x, PcgReport { iterations: it - 1, history }));
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        observe(&x);
        history.push(math::sqrt(dot(&r, &r)) / bnorm);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if *history.last().unwrap() <= tol {
        return Ok((x, PcgReport { iterations: max_iter, history }));
    }
    Err(Error::LinearSolver { iterations: max_iter, history })
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[p][k] == 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: k });
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * b[j]).sum();
        b[k] = (b[k] - s) / a[k][k];
    }
    Ok(b)
}

const NONE: u32 = u32::MAX;

/// Ordering that numbers the two halves of a coordinate bisection before the
/// vertex separator between them, recursively.
pub fn nested_dissection(row_ptr: &[usize], col_idx: &[u32], coords: &[Point]) -> Vec<u32> {
    struct Nd<'a> {
        row_ptr: &'a [usize],
        col_idx: &'a [u32],
        coords: &'a [Point],
        side: Vec<(u32, u8)>,
        generation: u32,
        order: Vec<u32>,
    }
    impl Nd<'_> {
        fn run(&mut self, mut nodes: Vec<u32>) {
            if nodes.len() <= 48 {
                self.order.extend_from_slice(&nodes);
                return;
            }
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &v in &nodes {
                let p = self.coords[v as usize];
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
            let axis = usize::from(hi[1] - lo[1] > hi[0] - lo[0]);
            let c = self.coords;
            nodes.sort_unstable_by(|&a, &b| {
                c[a as usize][axis].total_cmp(&c[b as usize][axis]).then(a.cmp(&b))
            });
            let b_half = nodes.split_off(nodes.len() / 2);
            self.generation += 1;
            let g = self.generation;
            for &v in &nodes {
                self.side[v as usize] = (g, 1);
            }
            for &v in &b_half {
                self.side[v as usize] = (g, 2);
            }
            let (mut a_part, mut sep) = (Vec::new(), Vec::new());
            for &v in &nodes {
                let v = v as usize;
                let touches_b = self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
                    .iter()
                    .any(|&w| self.side[w as usize] == (g, 2));
                if touches_b {
                    sep.push(v as u32);
                } else {
                    a_part.push(v as u32);
                }
            }
            self.run(a_part);
            self.run(b_half);
            self.order.extend_from_slice(&sep);
        }
    }
    let n = row_ptr.len() - 1;
    let mut nd = Nd { row_ptr, col_idx, coords, side: vec![(0, 0); n], generation: 0, order: Vec::with_capacity(n) };
    nd.run((0..n as u32).collect());
    nd.order
}

/// Symbolic Cholesky analysis of a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct CholeskySymbolic {
    perm: Vec<u32>,
    // Upper triangle of the permuted matrix by column, with source offsets
    // into the value array of the unpermuted matrix.
    cp: Vec<usize>,
    ci: Vec<u32>,
    src: Vec<u32>,
    parent: Vec<u32>,
    lp: Vec<usize>,
}

impl CholeskySymbolic {
    /// Analyses the pattern `row_ptr`/`col_idx` (full symmetric storage). With
    /// `coords` the unknowns are ordered by nested dissection, otherwise the
    /// natural order is kept.
    pub fn new(row_ptr: &[usize], col_idx: &[u32], coords: Option<&[Point]>) -> Self {
        let n = row_ptr.len() - 1;
        let perm = match coords {
            Some(c) => nested_dissection(row_ptr, col_idx, c),
            None => (0..n as u32).collect(),
        };
        let mut pinv = vec![0u32; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p as usize] = k as u32;
        }
        let mut count = vec![0usize; n + 1];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let (pi, pj) = (pinv[i], pinv[col_idx[k] as usize]);
                if pi <= pj {
                    count[pj as usize + 1] += 1;
                }
            }
        }
        for j in 0..n {
            count[j + 1] += count[j];
        }
        let cp = count.clone();
        let mut next = count;
        let mut ci = vec![0u32; cp[n]];
        let mut src = vec![0u32; cp[n]];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let (pi, pj) = (pinv[i], pinv[col_idx[k] as usize]);
                if pi <= pj {
                    let slot = next[pj as usize];
                    next[pj as usize] += 1;
                    ci[slot] = pi;
                    src[slot] = k as u32;
                }
            }
        }

        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &i0 in &ci[cp[k]..cp[k + 1]] {
                let mut i = i0;
                while i != NONE && (i as usize) < k {
                    let inext = ancestor[i as usize];
                    ancestor[i as usize] = k as u32;
                    if inext == NONE {
                        parent[i as usize] = k as u32;
                    }
                    i = inext;
                }
            }
        }

        let mut sym = CholeskySymbolic { perm, cp, ci, src, parent, lp: Vec::new() };
        let mut colcount = vec![1usize; n];
        let mut s = vec![0u32; n];
        let mut w = vec![NONE; n];
        for k in 0..n {
            let top = sym.ereach(k, &mut s, &mut w);
            for &j in &s[top..] {
                colcount[j as usize] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + colcount[j];
        }
        sym.lp = lp;
        sym
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Nonzeros of the factor.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n()]
    }

    // Pattern of row k of L (columns < k) in s[top..n], topologically ordered.
    fn ereach(&self, k: usize, s: &mut [u32], w: &mut [u32]) -> usize {
        let n = self.n();
        let mut top = n;
        w[k] = k as u32;
        for &i0 in &self.ci[self.cp[k]..self.cp[k + 1]] {
            let mut i = i0;
            if i as usize == k {
                continue;
            }
            let mut len = 0;
            while w[i as usize] != k as u32 {
                s[len] = i;
                len += 1;
                w[i as usize] = k as u32;
                i = self.parent[i as usize];
            }
            while len > 0 {
                top -= 1;
                len -= 1;
                s[top] = s[len];
            }
        }
        top
    }

    /// Numeric factorisation of a matrix with the analysed pattern.
    pub fn factor(&self, values: &[f64]) -> Result<Cholesky<'_>> {
        let n = self.n();
        let nnz = self.factor_nnz();
        let mut li = vec![0u32; nnz];
        let mut lx = vec![0.0; nnz];
        let mut c: Vec<usize> = self.lp[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut s = vec![0u32; n];
        let mut w = vec![NONE; n];
        for k in 0..n {
            let top = self.ereach(k, &mut s, &mut w);
            for p in self.cp[k]..self.cp[k + 1] {
                x[self.ci[p] as usize] = values[self.src[p] as usize];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &j in &s[top..] {
                let j = j as usize;
                let lkj = x[j] / lx[self.lp[j]];
                x[j] = 0.0;
                for p in self.lp[j] + 1..c[j] {
                    x[li[p] as usize] -= lx[p] * lkj;
                }
                d -= lkj * lkj;
                let p = c[j];
                c[j] += 1;
                li[p] = k as u32;
                lx[p] = lkj;
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: self.perm[k] as usize });
            }
            let p = c[k];
            c[k] += 1;
            li[p] = k as u32;
            lx[p] = math::sqrt(d);
        }
        Ok(Cholesky { sym: self, li, lx })
    }
}

/// Numeric factor `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<'a> {
    sym: &'a CholeskySymbolic,
    li: Vec<u32>,
    lx: Vec<f64>,
}

impl Cholesky<'_> {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let lp = &self.sym.lp;
        let perm = &self.sym.perm;
        let n = perm.len();
        let mut y: Vec<f64> = perm.iter().map(|&p| b[p as usize]).collect();
        for j in 0..n {
            y[j] /= self.lx[lp[j]];
            let yj = y[j];
            for p in lp[j] + 1..lp[j + 1] {
                y[self.li[p] as usize] -= self.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in lp[j] + 1..lp[j + 1] {
                s -= self.lx[p] * y[self.li[p] as usize];
            }
            y[j] = s / self.lx[lp[j]];
        }
        let mut x = vec![0.0; n];
        for (k, &p) in perm.iter().enumerate() {
            x[p as usize] = y[k];
        }
        x
    }
}

/// Solves an SPD system without cached analysis.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64], solver: LinearSolver) -> Result<Vec<f64>> {
    match solver {
        LinearSolver::Cholesky => {
            let sym = CholeskySymbolic::new(&a.row_ptr, &a.col_idx, None);
            Ok(sym.factor(&a.values)?.solve(b))
        }
        LinearSolver::Pcg { tol, max_iter } => pcg(a, b, None, tol, max_iter).map(|r| r.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::{RngCore, SeedableRng};

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn identity() {
        let b = [1.0, -2.0, 3.5];
        let a = CsrMatrix::identity(3);
        assert_eq!(solve_sparse(&a, &b, LinearSolver::Cholesky).unwrap(), b);
        let x = solve_sparse(&a, &b, LinearSolver::Pcg { tol: 1e-12, max_iter: 10 }).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let n = 100;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let oracle = dense_solve(a.to_dense(), b.clone()).unwrap();
        let (x, rep) = pcg(&a, &b, None, 1e-12, 500).unwrap();
        assert!(*rep.history.last().unwrap() <= 1e-12);
        let x2 = solve_sparse(&a, &b, LinearSolver::Cholesky).unwrap();
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() < 1e-9);
            assert!((x2[i] - oracle[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_error_decreases_in_energy_norm() {
        let n = 50;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut u = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..i {
                if u() > 0.3 {
                    let v = u();
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        let a0 = CsrMatrix::from_triplets(n, &t);
        for i in 0..n {
            let off: f64 = a0.row(i).map(|(_, v)| v.abs()).sum();
            t.push((i, i, off + 1.0));
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let x_true: Vec<f64> = (0..n).map(|_| u()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x_true, &mut b);
        let mut energy = Vec::new();
        let _ = pcg_observed(&a, &b, None, 1e-14, 60, &mut |x| {
            let e: Vec<f64> = x.iter().zip(&x_true).map(|(a, b)| a - b).collect();
            let mut ae = vec![0.0; n];
            a.mul_vec(&e, &mut ae);
            energy.push(dot(&e, &ae));
        })
        .unwrap();
        assert!(energy.len() > 3);
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-28);
        }
    }

    #[test]
    fn nested_dissection_on_grid() {
        let m = 30;
        let n = m * m;
        let mut t = Vec::new();
        let mut coords = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let v = j * m + i;
                coords.push([i as f64, j as f64]);
                t.push((v, v, 4.0 + 1e-3));
                if i > 0 {
                    t.push((v, v - 1, -1.0));
                    t.push((v - 1, v, -1.0));
                }
                if j > 0 {
                    t.push((v, v - m, -1.0));
                    t.push((v - m, v, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let natural = CholeskySymbolic::new(&a.row_ptr, &a.col_idx, None);
        let nd = CholeskySymbolic::new(&a.row_ptr, &a.col_idx, Some(&coords));
        let mut perm = nd.perm.clone();
        perm.sort_unstable();
        assert_eq!(perm, (0..n as u32).collect::<Vec<_>>());
        assert!(nd.factor_nnz() < natural.factor_nnz());
        let b: Vec<f64> = (0..n).map(|i| (i % 7) as f64 - 3.0).collect();
        let x = nd.factor(&a.values).unwrap().solve(&b);
        let mut r = vec![0.0; n];
        a.mul_vec(&x, &mut r);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_rejected() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            solve_sparse(&a, &[1.0, 1.0], LinearSolver::Cholesky),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn cg_reports_history_on_failure() {
        let a = laplace_1d(200);
        let b = vec![1.0; 200];
        match pcg(&a, &b, None, 1e-14, 3) {
            Err(Error::LinearSolver { iterations, history }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("{other:?}"),
        }
    }
}
