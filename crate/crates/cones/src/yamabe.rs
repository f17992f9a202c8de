//! Log conformal factors and Hencky distortion from a cone configuration.
//!
//! On closed meshes the Yamabe system L u = k^tar − k^ori is rank-deficient
//! by one; pinning one vertex makes it solvable and a free global scale `a`
//! restores the lost degree of freedom. The map from integer cone multipliers
//! to u is affine, so it is cached as one dense column per cone plus a base
//! vector: u(z, a) = G z + d + a·1.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{PinnedSystem, SparseSym, SpdSystem};

pub const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cone {
    pub vertex: usize,
    pub z: i64,
}

/// Cone configuration plus the pinned vertex (never a cone).
#[derive(Debug, Clone)]
pub struct ConeState {
    pub cones: Vec<Cone>,
    pub pin: usize,
}

impl ConeState {
    pub fn new(pin: usize) -> Self {
        ConeState { cones: Vec::new(), pin }
    }

    pub fn sum_z(&self) -> i64 {
        self.cones.iter().map(|c| c.z).sum()
    }

    pub fn has_cone_at(&self, v: usize) -> bool {
        self.cones.iter().any(|c| c.vertex == v)
    }

    pub fn index_of(&self, v: usize) -> Option<usize> {
        self.cones.iter().position(|c| c.vertex == v)
    }

    /// Number of nonzero-angle cones.
    pub fn n_c(&self) -> usize {
        self.cones.iter().filter(|c| c.z != 0).count()
    }

    /// Number of zero-angle cones.
    pub fn n_0(&self) -> usize {
        self.cones.iter().filter(|c| c.z == 0).count()
    }

    pub fn validate(&self, bounds: (i64, i64)) -> Result<()> {
        for (i, c) in self.cones.iter().enumerate() {
            if c.vertex == self.pin {
                return Err(Error::InvalidInput(format!("cone {i} sits on the pinned vertex")));
            }
            if c.z < bounds.0 || c.z > bounds.1 {
                return Err(Error::InvalidInput(format!(
                    "cone multiplier {} outside [{}, {}]",
                    c.z, bounds.0, bounds.1
                )));
            }
            if self.cones[i + 1..].iter().any(|d| d.vertex == c.vertex) {
                return Err(Error::InvalidInput(format!("duplicate cone at vertex {}", c.vertex)));
            }
        }
        Ok(())
    }
}

/// Linear solve backend for one boundary regime.
pub enum ConformalSystem {
    /// Closed surface: pinned Laplacian, free global scale.
    Closed { pinned: PinnedSystem, n: usize },
    /// Boundary surface, fixed boundary values b: SPD interior block.
    Dirichlet {
        spd: SpdSystem,
        /// interior[k] = original vertex id of interior slot k
        interior: Vec<usize>,
        /// slot[v] = Some(k) for interior v
        slot: Vec<Option<usize>>,
        b: Vec<f64>,
        /// (L_IB b)_k, per interior slot
        lib_b: Vec<f64>,
        n: usize,
    },
}

impl ConformalSystem {
    pub fn new_closed(l: &SparseSym, pin: usize) -> Result<Self> {
        Ok(ConformalSystem::Closed { pinned: PinnedSystem::new(l, pin)?, n: l.n() })
    }

    /// `b` holds the prescribed value for every boundary vertex (indexed by
    /// original vertex id; entries at interior vertices are ignored).
    pub fn new_dirichlet(mesh: &Mesh, l: &SparseSym, b: &[f64]) -> Result<Self> {
        if !mesh.has_boundary() {
            return Err(Error::InvalidInput("Dirichlet mode requires a boundary mesh".into()));
        }
        let n = mesh.n_vertices();
        let interior: Vec<usize> = (0..n).filter(|&v| !mesh.is_boundary(v)).collect();
        let mut slot = vec![None; n];
        for (k, &v) in interior.iter().enumerate() {
            slot[v] = Some(k);
        }
        let mut lib_b = vec![0.0; interior.len()];
        for (i, j, val) in l.entries() {
            if let Some(k) = slot[i] {
                if slot[j].is_none() {
                    lib_b[k] += val * b[j];
                }
            }
        }
        let spd = SpdSystem::new(&l.submatrix(&interior))?;
        Ok(ConformalSystem::Dirichlet { spd, interior, slot, b: b.to_vec(), lib_b, n })
    }

    pub fn n(&self) -> usize {
        match self {
            ConformalSystem::Closed { n, .. } | ConformalSystem::Dirichlet { n, .. } => *n,
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, ConformalSystem::Closed { .. })
    }

    /// Whether the free global scale `a` participates in the objective.
    pub fn uses_scale(&self) -> bool {
        self.is_closed()
    }

    /// Response to a unit (π/2) curvature impulse at vertex `c`: the reduced
    /// map's column for a cone at `c`.
    pub fn cone_column(&self, c: usize) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n()];
        rhs[c] = HALF_PI;
        self.solve_rhs(&rhs)
    }

    /// Base vector d: the response to −k^ori (plus boundary data under
    /// Dirichlet conditions).
    pub fn base(&self, k_ori: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = k_ori.iter().map(|&k| -k).collect();
        self.solve_rhs(&rhs)
    }

    /// Solve for u given a full-length curvature right-hand side.
    fn solve_rhs(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            ConformalSystem::Closed { pinned, .. } => pinned.solve(rhs),
            ConformalSystem::Dirichlet { spd, interior, slot, b, lib_b, n } => {
                let red: Vec<f64> = interior
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| rhs[v] - lib_b[k])
                    .collect();
                let ui = spd.solve(&red);
                let mut u = vec![0.0; *n];
                for v in 0..*n {
                    u[v] = match slot[v] {
                        Some(k) => ui[k],
                        None => b[v],
                    };
                }
                u
            }
        }
    }

    fn solve_rhs_many(&self, rhss: &[Vec<f64>], parallel: bool) -> Vec<Vec<f64>> {
        match self {
            ConformalSystem::Closed { pinned, .. } => pinned.solve_many(rhss, parallel),
            ConformalSystem::Dirichlet { .. } => {
                // Reduction to the interior block is cheap; reuse the scalar
                // path per column (the SPD solve dominates).
                #[cfg(feature = "parallel")]
                if parallel {
                    use rayon::prelude::*;
                    return rhss.par_iter().map(|r| self.solve_rhs(r)).collect();
                }
                let _ = parallel;
                rhss.iter().map(|r| self.solve_rhs(r)).collect()
            }
        }
    }

    /// Columns for several cones at once.
    pub fn cone_columns(&self, vertices: &[usize], parallel: bool) -> Vec<Vec<f64>> {
        let rhss: Vec<Vec<f64>> = vertices
            .iter()
            .map(|&c| {
                let mut r = vec![0.0; self.n()];
                r[c] = HALF_PI;
                r
            })
            .collect();
        self.solve_rhs_many(&rhss, parallel)
    }
}

/// Cached affine map z ↦ u: one column per cone plus the base vector.
#[derive(Debug, Clone)]
pub struct ReducedMap {
    /// columns[i] corresponds to cones[i]; includes the π/2 factor.
    pub columns: Vec<Vec<f64>>,
    /// Vertex each column was computed for (for incremental refresh).
    pub column_vertex: Vec<usize>,
    pub d: Vec<f64>,
}

impl ReducedMap {
    pub fn build(
        sys: &ConformalSystem,
        cones: &ConeState,
        k_ori: &[f64],
        parallel: bool,
    ) -> ReducedMap {
        let vertices: Vec<usize> = cones.cones.iter().map(|c| c.vertex).collect();
        ReducedMap {
            columns: sys.cone_columns(&vertices, parallel),
            column_vertex: vertices,
            d: sys.base(k_ori),
        }
    }

    /// Bring the column cache in line with `cones`, recomputing only columns
    /// whose vertex changed; falls back to a full rebuild when more than 25%
    /// of the columns are stale.
    pub fn sync(&mut self, sys: &ConformalSystem, cones: &ConeState, parallel: bool) {
        let target: Vec<usize> = cones.cones.iter().map(|c| c.vertex).collect();
        if target == self.column_vertex {
            return;
        }
        // Reuse columns for vertices we already have.
        let mut old: std::collections::HashMap<usize, Vec<f64>> = self
            .column_vertex
            .iter()
            .copied()
            .zip(std::mem::take(&mut self.columns))
            .collect();
        let missing: Vec<usize> = target
            .iter()
            .copied()
            .filter(|v| !old.contains_key(v))
            .collect();
        let fresh = if missing.len() * 4 > target.len() {
            sys.cone_columns(&target, parallel)
        } else {
            let cols = sys.cone_columns(&missing, parallel);
            for (v, col) in missing.iter().zip(cols) {
                old.insert(*v, col);
            }
            target
                .iter()
                .map(|v| old.get(v).cloned().expect("column present"))
                .collect()
        };
        self.columns = fresh;
        self.column_vertex = target;
    }

    /// u = G z + d + a·1.
    pub fn u(&self, z: &[i64], a: f64) -> Vec<f64> {
        assert_eq!(z.len(), self.columns.len());
        let mut u = self.d.clone();
        for (col, &zi) in self.columns.iter().zip(z) {
            if zi != 0 {
                let zf = zi as f64;
                for (ui, &ci) in u.iter_mut().zip(col) {
                    *ui += zf * ci;
                }
            }
        }
        for ui in &mut u {
            *ui += a;
        }
        u
    }

    /// Residual vector r = G z + d (no scale term).
    pub fn residual(&self, z: &[i64]) -> Vec<f64> {
        self.u(z, 0.0)
    }
}

/// Minimizer of ‖A^{1/2}(r + a·1)‖² given Σ A_ii = 1.
pub fn optimal_scale(r: &[f64], area_weights: &[f64]) -> f64 {
    -r.iter().zip(area_weights).map(|(ri, ai)| ai * ri).sum::<f64>()
}

/// Hencky distortion E = sqrt(uᵀ A u).
pub fn distortion(u: &[f64], area_weights: &[f64]) -> f64 {
    u.iter()
        .zip(area_weights)
        .map(|(ui, ai)| ai * ui * ui)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// Distortion of a residual after optimizing the global scale (closed) or
/// as-is (boundary).
pub fn scaled_distortion(r: &[f64], area_weights: &[f64], uses_scale: bool) -> (f64, f64) {
    let a = if uses_scale { optimal_scale(r, area_weights) } else { 0.0 };
    let u: Vec<f64> = r.iter().map(|ri| ri + a).collect();
    (distortion(&u, area_weights), a)
}

/// Max-norm of the masked Yamabe residual M(L u − (π/2)Tz + k^ori); the audit
/// used by the driver at termination.
pub fn yamabe_residual(
    l: &SparseSym,
    u: &[f64],
    cones: &ConeState,
    k_ori: &[f64],
    masked_rows: &[usize],
) -> f64 {
    let lu = l.mul_vec(u);
    let mut target = vec![0.0; u.len()];
    for c in &cones.cones {
        target[c.vertex] += HALF_PI * c.z as f64;
    }
    let mask: std::collections::HashSet<usize> = masked_rows.iter().copied().collect();
    let mut worst = 0.0f64;
    for i in 0..u.len() {
        if mask.contains(&i) {
            continue;
        }
        worst = worst.max((lu[i] - target[i] + k_ori[i]).abs());
    }
    worst
}

/// Natural-boundary solve: pin one vertex of the full Laplacian, check the
/// right-hand side is compatible, and report the boundary slack.
pub fn neumann_solve(
    mesh: &Mesh,
    l: &SparseSym,
    cones: &ConeState,
    k_ori: &[f64],
    k_b_tar: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !mesh.has_boundary() {
        return Err(Error::InvalidInput("Neumann mode requires a boundary mesh".into()));
    }
    let n = mesh.n_vertices();
    let mut rhs = vec![0.0; n];
    for v in 0..n {
        rhs[v] = if mesh.is_boundary(v) { k_b_tar[v] - k_ori[v] } else { -k_ori[v] };
    }
    for c in &cones.cones {
        if !mesh.is_boundary(c.vertex) {
            rhs[c.vertex] += HALF_PI * c.z as f64;
        }
    }
    let total: f64 = rhs.iter().sum();
    let scale = rhs.iter().fold(1.0f64, |m, &r| m.max(r.abs()));
    if total.abs() > 1e-8 * scale * n as f64 {
        return Err(Error::Numerical(format!(
            "incompatible natural-boundary right-hand side (sum = {total:e})"
        )));
    }
    let pinned = PinnedSystem::new(l, cones.pin)?;
    let u = pinned.solve(&rhs);
    let lu = l.mul_vec(&u);
    let h: Vec<f64> = (0..n)
        .map(|v| if mesh.is_boundary(v) { rhs[v] - lu[v] } else { 0.0 })
        .collect();
    Ok((u, h))
}
