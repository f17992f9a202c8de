//! Shared helpers for the integration tests: dense linear-algebra oracles
//! (via nalgebra) and small utilities.

#![allow(dead_code)]

use cones::mesh::Mesh;
use cones::sparse::SparseSym;
use nalgebra::{DMatrix, DVector};

/// Dense copy of a sparse symmetric matrix.
pub fn dense_sym(l: &SparseSym) -> DMatrix<f64> {
    let n = l.n();
    let mut m = DMatrix::zeros(n, n);
    for (i, j, v) in l.entries() {
        m[(i, j)] = v;
    }
    m
}

/// Dense pinned solve: row/column `p` replaced by the identity, rhs[p] = 0.
pub fn dense_pinned_solve(l: &SparseSym, p: usize, rhs: &[f64]) -> Vec<f64> {
    let n = l.n();
    let mut m = dense_sym(l);
    for k in 0..n {
        m[(p, k)] = 0.0;
        m[(k, p)] = 0.0;
    }
    m[(p, p)] = 1.0;
    let mut b = DVector::from_column_slice(rhs);
    b[p] = 0.0;
    let x = m.lu().solve(&b).expect("dense pinned solve");
    x.iter().copied().collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Serialize a mesh as Wavefront OBJ text.
pub fn to_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for p in mesh.positions() {
        s.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    for f in mesh.faces() {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    s
}

/// Euler characteristic from the genus/boundary report.
pub fn euler_characteristic(mesh: &Mesh) -> i64 {
    let (g, b) = mesh.genus();
    2 - 2 * (g as i64) - (b as i64)
}
