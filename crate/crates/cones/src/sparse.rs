//! Sparse matrix assembly and the factorized solve contracts used by the
//! pipeline: the pinned Yamabe system, positive-definite Dirichlet blocks,
//! and the (non-symmetric) cut-mesh system.
//!
//! Factorizations are computed once per matrix and reused across many
//! right-hand sides. Multi-RHS solves go wide with rayon when the `parallel`
//! feature is enabled; each column solve is independent, so results are
//! bitwise identical to the sequential path.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

const SYMMETRY_REL_TOL: f64 = 1e-9;

/// Symmetric sparse matrix in coordinate (map) form. Both triangles are
/// stored; `assemble` rejects input whose two triangles disagree.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    map: BTreeMap<(usize, usize), f64>,
}

impl SparseSym {
    /// Sum duplicate triplets, then verify symmetry of the result.
    pub fn assemble(triplets: &[(usize, usize, f64)], n: usize) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut max_abs = 0.0f64;
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "triplet ({i},{j}) out of range for n={n}"
                )));
            }
            *map.entry((i, j)).or_insert(0.0) += v;
        }
        map.retain(|_, v| *v != 0.0);
        for &v in map.values() {
            max_abs = max_abs.max(v.abs());
        }
        let tol = SYMMETRY_REL_TOL * max_abs.max(1.0);
        for (&(i, j), &v) in &map {
            if i < j {
                let vt = map.get(&(j, i)).copied().unwrap_or(0.0);
                if (v - vt).abs() > tol {
                    return Err(Error::Numerical(format!(
                        "asymmetric assembly at ({i},{j}): {v} vs {vt}"
                    )));
                }
            }
        }
        Ok(SparseSym { n, map })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.map.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.map.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.map.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (&(i, j), &v) in &self.map {
            y[i] += v * x[j];
        }
        y
    }

    /// Copy with row/column `p` zeroed and a unit diagonal entry at `p`.
    pub fn pinned(&self, p: usize) -> SparseSym {
        let mut map: BTreeMap<(usize, usize), f64> = self
            .map
            .iter()
            .filter(|(&(i, j), _)| i != p && j != p)
            .map(|(&k, &v)| (k, v))
            .collect();
        map.insert((p, p), 1.0);
        SparseSym { n: self.n, map }
    }

    /// Principal submatrix on `keep` (indices in ascending order), with the
    /// row mapping returned alongside.
    pub fn submatrix(&self, keep: &[usize]) -> SparseSym {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &v) in keep.iter().enumerate() {
            pos[v] = k;
        }
        let map = self
            .map
            .iter()
            .filter(|(&(i, j), _)| pos[i] != usize::MAX && pos[j] != usize::MAX)
            .map(|(&(i, j), &v)| ((pos[i], pos[j]), v))
            .collect();
        SparseSym { n: keep.len(), map }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .map
            .iter()
            .map(|(&(i, j), &v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::Numerical(format!("sparse matrix creation failed: {e:?}")))
    }
}

/// General (possibly non-symmetric) sparse matrix; used for the cut-mesh
/// Laplacian whose rows and columns live in different index conventions.
#[derive(Debug, Clone)]
pub struct SparseGen {
    n_rows: usize,
    n_cols: usize,
    map: BTreeMap<(usize, usize), f64>,
}

impl SparseGen {
    pub fn assemble(triplets: &[(usize, usize, f64)], n_rows: usize, n_cols: usize) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::InvalidInput(format!(
                    "triplet ({i},{j}) out of range for {n_rows}x{n_cols}"
                )));
            }
            *map.entry((i, j)).or_insert(0.0) += v;
        }
        map.retain(|_, v| *v != 0.0);
        Ok(SparseGen { n_rows, n_cols, map })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.map.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.map.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for (&(i, j), &v) in &self.map {
            y[i] += v * x[j];
        }
        y
    }

    pub fn pinned(&self, p: usize) -> SparseGen {
        assert_eq!(self.n_rows, self.n_cols);
        let mut map: BTreeMap<(usize, usize), f64> = self
            .map
            .iter()
            .filter(|(&(i, j), _)| i != p && j != p)
            .map(|(&k, &v)| (k, v))
            .collect();
        map.insert((p, p), 1.0);
        SparseGen { n_rows: self.n_rows, n_cols: self.n_cols, map }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .map
            .iter()
            .map(|(&(i, j), &v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &triplets)
            .map_err(|e| Error::Numerical(format!("sparse matrix creation failed: {e:?}")))
    }
}

enum Factor {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl Factor {
    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let rhs = MatMut::from_column_major_slice_mut(x, n, 1);
        match self {
            Factor::Llt(f) => f.solve_in_place(rhs),
            Factor::Lu(f) => f.solve_in_place(rhs),
        }
    }
}

fn factorize(mat: &SparseColMat<usize, f64>, spd_expected: bool) -> Result<Factor> {
    if spd_expected {
        if let Ok(sym) = SymbolicLlt::try_new(mat.symbolic(), Side::Lower) {
            if let Ok(llt) = Llt::try_new_with_symbolic(sym, mat.as_ref(), Side::Lower) {
                return Ok(Factor::Llt(llt));
            }
        }
    }
    let sym = SymbolicLu::try_new(mat.symbolic())
        .map_err(|e| Error::Numerical(format!("symbolic LU failed: {e:?}")))?;
    let lu = Lu::try_new_with_symbolic(sym, mat.as_ref())
        .map_err(|e| Error::Numerical(format!("LU factorization failed: {e:?}")))?;
    Ok(Factor::Lu(lu))
}

/// Factorized solver for the full-rank Yamabe system obtained by pinning one
/// vertex `p` of a rank-deficient Laplacian: row/col `p` are replaced by the
/// identity row, and right-hand sides are masked to zero at `p`.
pub struct PinnedSystem {
    n: usize,
    p: usize,
    factor: Factor,
}

impl PinnedSystem {
    pub fn new(l: &SparseSym, p: usize) -> Result<Self> {
        if p >= l.n() {
            return Err(Error::InvalidInput(format!("pin {p} out of range")));
        }
        let mat = l.pinned(p).to_faer()?;
        Ok(PinnedSystem { n: l.n(), p, factor: factorize(&mat, true)? })
    }

    /// Pinned LU variant for a non-symmetric square system.
    pub fn new_general(l: &SparseGen, p: usize) -> Result<Self> {
        if l.n_rows() != l.n_cols() || p >= l.n_rows() {
            return Err(Error::InvalidInput("pinned system must be square".into()));
        }
        let mat = l.pinned(p).to_faer()?;
        Ok(PinnedSystem { n: l.n_rows(), p, factor: factorize(&mat, false)? })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn pin(&self) -> usize {
        self.p
    }

    /// Solve L̂ x = M b where M masks entry `p` to zero.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut x = rhs.to_vec();
        x[self.p] = 0.0;
        self.factor.solve_in_place(&mut x);
        x
    }

    /// Solve many independent right-hand sides; `parallel` fans columns out
    /// over rayon (no effect without the `parallel` feature).
    pub fn solve_many(&self, rhss: &[Vec<f64>], parallel: bool) -> Vec<Vec<f64>> {
        #[cfg(feature = "parallel")]
        if parallel {
            return rhss.par_iter().map(|r| self.solve(r)).collect();
        }
        let _ = parallel;
        rhss.iter().map(|r| self.solve(r)).collect()
    }
}

/// Factorized solver for a positive-definite system (no pinning), e.g. the
/// interior block of the Laplacian under Dirichlet conditions.
pub struct SpdSystem {
    n: usize,
    factor: Factor,
}

impl SpdSystem {
    pub fn new(a: &SparseSym) -> Result<Self> {
        let mat = a.to_faer()?;
        Ok(SpdSystem { n: a.n(), factor: factorize(&mat, true)? })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut x = rhs.to_vec();
        self.factor.solve_in_place(&mut x);
        x
    }

    pub fn solve_many(&self, rhss: &[Vec<f64>], parallel: bool) -> Vec<Vec<f64>> {
        #[cfg(feature = "parallel")]
        if parallel {
            return rhss.par_iter().map(|r| self.solve(r)).collect();
        }
        let _ = parallel;
        rhss.iter().map(|r| self.solve(r)).collect()
    }
}
