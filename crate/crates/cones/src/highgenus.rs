//! Holonomy handling for genus g ≥ 1: cut along the homology basis, build
//! the merged-variable system with 2g extra unknowns and sparse seam offsets
//! δu, and solve the penalized mixed-integer least squares for the holonomy
//! integers r.
//!
//! Variable scheme (per basis pair, crossing at vertex x):
//!   - each non-crossing loop vertex keeps one shared variable; its right-side
//!     copy reads u_v + δu_v with δu_v a penalized offset,
//!   - the four corners at x carry three variables: the quadrant pair adjacent
//!     across the α seam shares the original index, the other two quadrants
//!     get the two new variables.
//! Rows of L_g: one merged curvature row per original vertex (all copies
//! summed) plus one holonomy row per loop, so L_g is square (N+2g) but not
//! symmetric; L_g·1 = 0 still holds row-wise.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::homology::HomologyBasis;
use crate::mesh::Mesh;
use crate::miqp::{branch_and_bound, ReducedQP};
use crate::sparse::{PinnedSystem, SparseGen};
use crate::yamabe::{distortion, ConeState, HALF_PI};

/// Cut topology: the (vertex, face) → (variable, δ-slot) resolution table.
#[derive(Debug, Clone)]
pub struct CutMesh {
    pub n: usize,
    pub genus: usize,
    /// N + 2g.
    pub n_vars: usize,
    pub n_delta: usize,
    /// Non-trivial corner resolutions; (v, f) pairs absent here resolve to
    /// (v, no δ).
    table: HashMap<(usize, usize), (usize, Option<usize>)>,
    /// slot → (loop index, vertex) for reporting.
    pub delta_vertex: Vec<(usize, usize)>,
    /// Variable pairs whose difference is a corner seam jump (3 per pair).
    pub corner_pairs: Vec<(usize, usize)>,
    /// Per basis pair: (crossing vertex, new var A, new var B).
    pub crossing_vars: Vec<(usize, usize, usize)>,
    /// Vertices lying on any loop (pin selection must avoid them).
    pub loop_vertices: Vec<usize>,
}

impl CutMesh {
    pub fn resolve(&self, v: usize, f: usize) -> (usize, Option<usize>) {
        self.table.get(&(v, f)).copied().unwrap_or((v, None))
    }

    /// Area weights over the N+2g variables: the original normalized weights,
    /// with each crossing vertex's weight split equally among its three
    /// corner variables.
    pub fn area_weights(&self, base: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_vars];
        w[..self.n].copy_from_slice(base);
        for &(x, a, b) in &self.crossing_vars {
            let third = base[x] / 3.0;
            w[x] = third;
            w[a] = third;
            w[b] = third;
        }
        w
    }
}

/// Cut the mesh along the basis loops.
pub fn cut_mesh(mesh: &Mesh, basis: &HomologyBasis) -> Result<CutMesh> {
    let n = mesh.n_vertices();
    let g = basis.pairs.len();
    if g == 0 {
        return Err(Error::Topology("cut_mesh requires genus ≥ 1".into()));
    }

    // Loops may share vertices only at their pair's crossing, and never edges.
    {
        let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (li, lp) in basis.loops().iter().enumerate() {
            let m = lp.len();
            for j in 0..m {
                let (a, b) = (lp.vertices[j], lp.vertices[(j + 1) % m]);
                let key = (a.min(b), a.max(b));
                if let Some(other) = edge_owner.insert(key, li) {
                    if other != li {
                        return Err(Error::Topology(format!(
                            "basis loops {other} and {li} share edge ({}, {}); \
                             a different basis is required",
                            key.0, key.1
                        )));
                    }
                }
            }
        }
    }

    let mut table = HashMap::new();
    let mut delta_vertex = Vec::new();
    let mut corner_pairs = Vec::new();
    let mut crossing_vars = Vec::new();
    let mut loop_vertices = Vec::new();

    for (k, (alpha, beta)) in basis.pairs.iter().enumerate() {
        let x = basis.crossings[k];
        let var_a = n + 2 * k;
        let var_b = n + 2 * k + 1;

        // δ slots for the right-side copies of non-crossing loop vertices.
        for (li, lp) in [(2 * k, alpha), (2 * k + 1, beta)] {
            let m = lp.len();
            for j in 0..m {
                let v = lp.vertices[j];
                loop_vertices.push(v);
                if v == x {
                    continue;
                }
                let prev = lp.vertices[(j + m - 1) % m];
                let next = lp.vertices[(j + 1) % m];
                let slot = delta_vertex.len();
                delta_vertex.push((li, v));
                for f in mesh.fan_faces(v, prev, next) {
                    table.insert((v, f), (v, Some(slot)));
                }
            }
        }

        // Quadrants at the crossing. β starts at x and leaves into the left
        // fan of α, so the CCW order of cut edges is
        // α_next, β_next, α_prev, β_prev.
        let ja = alpha
            .vertices
            .iter()
            .position(|&v| v == x)
            .ok_or_else(|| Error::Topology("crossing vertex not on α".into()))?;
        let ma = alpha.len();
        let a_prev = alpha.vertices[(ja + ma - 1) % ma];
        let a_next = alpha.vertices[(ja + 1) % ma];
        debug_assert_eq!(beta.vertices[0], x);
        let b_next = beta.vertices[1];
        let b_prev = *beta.vertices.last().unwrap();

        let q0 = mesh.fan_faces(x, a_next, b_next);
        let q1 = mesh.fan_faces(x, b_next, a_prev);
        let q2 = mesh.fan_faces(x, a_prev, b_prev);
        let q3 = mesh.fan_faces(x, b_prev, a_next);
        for f in q0.iter().chain(&q3) {
            table.insert((x, *f), (x, None));
        }
        for &f in &q1 {
            table.insert((x, f), (var_a, None));
        }
        for &f in &q2 {
            table.insert((x, f), (var_b, None));
        }
        // Seam jumps at the corner: across α (the non-shared pair) and across
        // the two β cut edges; the shared pair (Q3, Q0) jumps by zero.
        corner_pairs.push((var_a, var_b));
        corner_pairs.push((x, var_a));
        corner_pairs.push((var_b, x));
        crossing_vars.push((x, var_a, var_b));
    }

    loop_vertices.sort_unstable();
    loop_vertices.dedup();

    Ok(CutMesh {
        n,
        genus: g,
        n_vars: n + 2 * g,
        n_delta: delta_vertex.len(),
        table,
        delta_vertex,
        corner_pairs,
        crossing_vars,
        loop_vertices,
    })
}

/// Per-face cotangent contributions for the corner at `v`:
/// Σ w·(val_v − val_other) over the two opposite corners.
fn corner_weights(mesh: &Mesh, f: usize, v: usize) -> [(usize, f64); 2] {
    let face = mesh.faces()[f];
    let k = face.iter().position(|&w| w == v).expect("vertex not in face");
    let w = face[(k + 1) % 3];
    let x = face[(k + 2) % 3];
    let cot_x = 0.5 / mesh.angle_at(f, x).tan();
    let cot_w = 0.5 / mesh.angle_at(f, w).tan();
    [(w, cot_x), (x, cot_w)]
}

/// Left-side holonomy rows on the *uncut* mesh (coefficients over original
/// vertex ids) plus the geodesic curvature sum, one per loop.
pub fn holonomy_rows(mesh: &Mesh, basis: &HomologyBasis) -> Vec<(HashMap<usize, f64>, f64)> {
    basis
        .loops()
        .iter()
        .map(|lp| {
            let mut row: HashMap<usize, f64> = HashMap::new();
            for (j, &v) in lp.vertices.iter().enumerate() {
                for &f in &lp.left_fans[j] {
                    for (other, w8) in corner_weights(mesh, f, v) {
                        *row.entry(v).or_insert(0.0) += w8;
                        *row.entry(other).or_insert(0.0) -= w8;
                    }
                }
            }
            (row, lp.total_k_g())
        })
        .collect()
}

/// The assembled cut-mesh system: L_g u = rhs(r) + K δu with
/// rhs(r) = rhs_base + (π/2) Σ r_i e_{N+i}.
pub struct HolonomySystem {
    pub l_g: SparseGen,
    pub k: SparseGen,
    /// Right-hand side with r = 0: (π/2 z − k^ori ; −Σ k^g).
    pub rhs_base: Vec<f64>,
    /// Σ_j k^g_{i,j} per loop.
    pub k_g_sums: Vec<f64>,
    /// Area weights over the N+2g variables.
    pub area_w: Vec<f64>,
    pub n: usize,
    pub n_vars: usize,
    /// A vertex off all loops and cones, suitable for pinning.
    pub default_pin: usize,
}

pub fn assemble_system(
    mesh: &Mesh,
    cut: &CutMesh,
    basis: &HomologyBasis,
    cones: &ConeState,
    k_ori: &[f64],
    area_weights: &[f64],
) -> Result<HolonomySystem> {
    let n = cut.n;
    let nv = cut.n_vars;
    let mut l_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut k_trip: Vec<(usize, usize, f64)> = Vec::new();

    let mut add_corner = |row: usize, v: usize, f: usize| {
        let (var_v, d_v) = cut.resolve(v, f);
        for (other, w8) in corner_weights(mesh, f, v) {
            let (var_o, d_o) = cut.resolve(other, f);
            l_trip.push((row, var_v, w8));
            l_trip.push((row, var_o, -w8));
            // K = −D: δ coefficients move to the right-hand side.
            if let Some(s) = d_v {
                k_trip.push((row, s, -w8));
            }
            if let Some(s) = d_o {
                k_trip.push((row, s, w8));
            }
        }
    };

    // Merged curvature row per original vertex: every incident face corner.
    for v in 0..n {
        for &f in mesh.ring_faces(v) {
            add_corner(v, v, f);
        }
    }
    // Holonomy row per loop from the left fans.
    let loops = basis.loops();
    for (i, lp) in loops.iter().enumerate() {
        let row = n + i;
        for (j, &v) in lp.vertices.iter().enumerate() {
            for &f in &lp.left_fans[j] {
                add_corner(row, v, f);
            }
        }
    }

    let l_g = SparseGen::assemble(&l_trip, nv, nv)?;
    let k = SparseGen::assemble(&k_trip, nv, cut.n_delta)?;

    // Null-vector audit: L_g·1 = 0.
    let ones = vec![1.0; nv];
    let lg1 = l_g.mul_vec(&ones);
    let scale = l_g.entries().fold(1.0f64, |m, (_, _, v)| m.max(v.abs()));
    if lg1.iter().any(|&r| r.abs() > 1e-10 * scale) {
        return Err(Error::Numerical("cut-system assembly broke L_g·1 = 0".into()));
    }

    let mut rhs_base = vec![0.0; nv];
    for v in 0..n {
        rhs_base[v] = -k_ori[v];
    }
    for c in &cones.cones {
        rhs_base[c.vertex] += HALF_PI * c.z as f64;
    }
    let mut k_g_sums = Vec::with_capacity(loops.len());
    for (i, lp) in loops.iter().enumerate() {
        let s = lp.total_k_g();
        rhs_base[n + i] = -s;
        k_g_sums.push(s);
    }

    let cone_vs: std::collections::HashSet<usize> =
        cones.cones.iter().map(|c| c.vertex).collect();
    let on_loop: std::collections::HashSet<usize> = cut.loop_vertices.iter().copied().collect();
    let default_pin = (0..n)
        .find(|v| !on_loop.contains(v) && !cone_vs.contains(v))
        .ok_or_else(|| Error::Topology("no pinnable vertex off the loops".into()))?;

    Ok(HolonomySystem {
        l_g,
        k,
        rhs_base,
        k_g_sums,
        area_w: cut.area_weights(area_weights),
        n,
        n_vars: nv,
        default_pin,
    })
}

#[derive(Debug, Clone)]
pub struct HolonomyOutcome {
    pub r: Vec<i64>,
    pub delta: Vec<f64>,
    pub a: f64,
    /// Conformal factors over the N+2g variables.
    pub u: Vec<f64>,
    pub e: f64,
    pub e_dif: f64,
    pub objective: f64,
    /// True when some r_i landed on the search-box edge (box heuristic may be
    /// too tight).
    pub on_box_edge: bool,
    pub nodes: usize,
}

/// Minimize ‖A^{1/2}u(r,δ,a)‖² + λ_d(Σδ² + Σ corner jumps²) over integer r
/// and continuous (δ, a): the continuous block is eliminated exactly via a
/// Schur complement, the integer block by branch and bound over
/// r_i ∈ round(Σk^g·2/π) ± half_width.
pub fn solve_holonomy(
    sys: &HolonomySystem,
    cut: &CutMesh,
    lambda_d: f64,
    half_width: i64,
    pin: usize,
    parallel: bool,
) -> Result<HolonomyOutcome> {
    let nv = sys.n_vars;
    let n2g = 2 * cut.genus;
    let nd = cut.n_delta;
    let t = n2g + nd + 1; // r block, δ block, a

    let solver = PinnedSystem::new_general(&sys.l_g, pin)?;
    let u0 = solver.solve(&sys.rhs_base);

    // Response columns for each unknown.
    let mut rhss: Vec<Vec<f64>> = Vec::with_capacity(n2g + nd);
    for i in 0..n2g {
        let mut r = vec![0.0; nv];
        r[sys.n + i] = HALF_PI;
        rhss.push(r);
    }
    for s in 0..nd {
        let mut r = vec![0.0; nv];
        for (row, col, v) in sys.k.entries() {
            if col == s {
                r[row] = v;
            }
        }
        rhss.push(r);
    }
    let mut cols = solver.solve_many(&rhss, parallel);
    cols.push(vec![1.0; nv]); // the global scale column

    // Quadratic model over y = (r, δ, a):
    //   F(y) = (u0 + V y)ᵀ A (u0 + V y) + λ_d Σ δ² + λ_d Σ (cᵀ(u0 + V y))².
    let a_dot = |x: &[f64], y: &[f64]| -> f64 {
        x.iter().zip(y).zip(&sys.area_w).map(|((a, b), w)| w * a * b).sum()
    };
    let jump = |u: &[f64], pair: (usize, usize)| u[pair.0] - u[pair.1];

    let mut q = vec![vec![0.0; t]; t];
    let mut b = vec![0.0; t];
    let mut c0 = a_dot(&u0, &u0);
    for pair in &cut.corner_pairs {
        c0 += lambda_d * jump(&u0, *pair).powi(2);
    }
    for i in 0..t {
        for j in i..t {
            let mut v = a_dot(&cols[i], &cols[j]);
            for pair in &cut.corner_pairs {
                v += lambda_d * jump(&cols[i], *pair) * jump(&cols[j], *pair);
            }
            if i == j && i >= n2g && i < n2g + nd {
                v += lambda_d; // direct δ penalty
            }
            q[i][j] = v;
            q[j][i] = v;
        }
        let mut v = a_dot(&cols[i], &u0);
        for pair in &cut.corner_pairs {
            v += lambda_d * jump(&cols[i], *pair) * jump(&u0, *pair);
        }
        b[i] = v;
    }

    // Schur-eliminate the continuous block w = (δ, a).
    let nw = nd + 1;
    let q_ww: Vec<Vec<f64>> = (0..nw)
        .map(|i| (0..nw).map(|j| q[n2g + i][n2g + j]).collect())
        .collect();
    let chol = DenseChol::new(&q_ww)?;
    // Columns Q_wr and the vector b_w, solved through Q_ww.
    let mut solved: Vec<Vec<f64>> = Vec::with_capacity(n2g + 1);
    for jr in 0..n2g {
        let col: Vec<f64> = (0..nw).map(|i| q[n2g + i][jr]).collect();
        solved.push(chol.solve(&col));
    }
    let bw: Vec<f64> = (0..nw).map(|i| b[n2g + i]).collect();
    let bw_sol = chol.solve(&bw);

    let mut h_r = vec![vec![0.0; n2g]; n2g];
    let mut g_r = vec![0.0; n2g];
    for i in 0..n2g {
        for j in 0..n2g {
            let mut v = q[i][j];
            for kk in 0..nw {
                v -= q[i][n2g + kk] * solved[j][kk];
            }
            h_r[i][j] = v;
        }
        let mut v = b[i];
        for kk in 0..nw {
            v -= q[i][n2g + kk] * bw_sol[kk];
        }
        g_r[i] = v;
    }
    let mut c_r = c0;
    for kk in 0..nw {
        c_r -= bw[kk] * bw_sol[kk];
    }

    let centers: Vec<i64> = sys
        .k_g_sums
        .iter()
        .map(|&s| (s / HALF_PI).round() as i64)
        .collect();
    let qp = ReducedQP {
        h: h_r,
        g: g_r,
        c0: c_r,
        lo: centers.iter().map(|&c| c - half_width).collect(),
        hi: centers.iter().map(|&c| c + half_width).collect(),
        elim: None,
    };
    let result = branch_and_bound(&qp, Some(&centers))?;

    // Recover the continuous block: w* = −Q_ww⁻¹(Q_wr r + b_w).
    let mut w_rhs = bw.clone();
    for (jr, &ri) in result.y.iter().enumerate() {
        for kk in 0..nw {
            w_rhs[kk] += q[n2g + kk][jr] * ri as f64;
        }
    }
    let w_sol = chol.solve(&w_rhs);
    let delta: Vec<f64> = (0..nd).map(|s| -w_sol[s]).collect();
    let a = -w_sol[nd];

    // Reconstruct u.
    let mut u = u0;
    for (jr, &ri) in result.y.iter().enumerate() {
        let rf = ri as f64;
        for (ui, &ci) in u.iter_mut().zip(&cols[jr]) {
            *ui += rf * ci;
        }
    }
    for (s, &ds) in delta.iter().enumerate() {
        for (ui, &ci) in u.iter_mut().zip(&cols[n2g + s]) {
            *ui += ds * ci;
        }
    }
    for ui in &mut u {
        *ui += a;
    }

    let e = distortion(&u, &sys.area_w);
    let mut dif2: f64 = delta.iter().map(|d| d * d).sum();
    for pair in &cut.corner_pairs {
        dif2 += jump(&u, *pair).powi(2);
    }
    let e_dif = dif2.max(0.0).sqrt();
    let on_box_edge = result
        .y
        .iter()
        .zip(&qp.lo)
        .zip(&qp.hi)
        .any(|((v, lo), hi)| v == lo || v == hi);

    Ok(HolonomyOutcome {
        r: result.y,
        delta,
        a,
        u,
        e,
        e_dif,
        objective: result.objective,
        on_box_edge,
        nodes: result.nodes,
    })
}

/// Residuals of the assembled equations at a reconstructed solution,
/// (vertex rows max, holonomy rows max), skipping the pinned row.
pub fn audit_residuals(
    sys: &HolonomySystem,
    r: &[i64],
    delta: &[f64],
    u: &[f64],
    pin: usize,
) -> (f64, f64) {
    let lu = sys.l_g.mul_vec(u);
    let kd = sys.k.mul_vec(delta);
    let mut vertex_max = 0.0f64;
    let mut holo_max = 0.0f64;
    for row in 0..sys.n_vars {
        if row == pin {
            continue;
        }
        let mut rhs = sys.rhs_base[row] + kd[row];
        if row >= sys.n {
            rhs += HALF_PI * r[row - sys.n] as f64;
        }
        let res = (lu[row] - rhs).abs();
        if row < sys.n {
            vertex_max = vertex_max.max(res);
        } else {
            holo_max = holo_max.max(res);
        }
    }
    (vertex_max, holo_max)
}

/// Small dense Cholesky (the continuous Schur block is tiny).
struct DenseChol {
    l: Vec<Vec<f64>>,
}

impl DenseChol {
    fn new(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Numerical(
                            "continuous holonomy block is not positive definite".into(),
                        ));
                    }
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Ok(DenseChol { l })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i][k] * y[k];
            }
            y[i] /= self.l[i][i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k][i] * y[k];
            }
            y[i] /= self.l[i][i];
        }
        y
    }
}
