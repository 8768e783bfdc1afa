use super::dof::DofMap;
use crate::mesh::Mesh;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

/// Square matrix in compressed sparse row format with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix { row_ptr: (0..=n).collect(), col_idx: (0..n as u32).collect(), values: vec![1.0; n] }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets.to_vec();
        t.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c as u32);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { row_ptr, col_idx, values }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().map(|&c| c as usize).zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k] as usize];
            }
            *yi = s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.n())
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// One `row col value` line per stored entry, zero-based.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n() {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:.17e}");
            }
        }
        s
    }
}

const SKIP: u32 = u32::MAX;

/// Sparsity structure of a P1 space together with the position of every
/// element-matrix entry in the value array.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    /// Per element, row-major 3x3 offsets into `values` (`u32::MAX` when the
    /// row or column is not free or the element lies outside the space).
    scatter: Vec<[u32; 9]>,
}

impl Pattern {
    pub fn new(mesh: &Mesh, dofs: &DofMap) -> Self {
        let n = dofs.num_dofs();
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(9 * mesh.num_elements());
        for el in mesh.elements().iter().filter(|e| dofs.covers(e.region)) {
            for &a in &el.vertices {
                let Some(i) = dofs.dof(a as usize) else { continue };
                for &b in &el.vertices {
                    if let Some(j) = dofs.dof(b as usize) {
                        pairs.push((i as u32, j as u32));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _) in &pairs {
            row_ptr[i as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let scatter = mesh
            .elements()
            .iter()
            .map(|el| {
                let mut s = [SKIP; 9];
                if !dofs.covers(el.region) {
                    return s;
                }
                for (a, &va) in el.vertices.iter().enumerate() {
                    let Some(i) = dofs.dof(va as usize) else { continue };
                    for (b, &vb) in el.vertices.iter().enumerate() {
                        if let Some(j) = dofs.dof(vb as usize) {
                            let r = row_ptr[i]..row_ptr[i + 1];
                            let k = col_idx[r.clone()].binary_search(&(j as u32)).unwrap();
                            s[3 * a + b] = (r.start + k) as u32;
                        }
                    }
                }
                s
            })
            .collect();
        Pattern { row_ptr, col_idx, scatter }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn zero_matrix(&self) -> CsrMatrix {
        CsrMatrix { row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values: vec![0.0; self.col_idx.len()] }
    }

    /// Adds the element matrix of element `t` into `values`.
    #[inline]
    pub fn add_element(&self, t: usize, local: &[[f64; 3]; 3], values: &mut [f64]) {
        let s = &self.scatter[t];
        for a in 0..3 {
            for b in 0..3 {
                let k = s[3 * a + b];
                if k != SKIP {
                    values[k as usize] += local[a][b];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, -1.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        let mut y = [0.0; 2];
        a.mul_vec(&[1.0, 1.0], &mut y);
        assert_eq!(y, [3.0, 2.0]);
        assert_eq!(a.to_coordinate_text().lines().count(), 3);
        assert_eq!(a.asymmetry(), 3.0);
    }
}
