//! Bounded-integer least squares for cone multipliers: active-set pruning,
//! sum-constraint elimination, and a self-contained best-first branch and
//! bound over the integer box.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::yamabe::{ConeState, ReducedMap};

/// Indices (into `ConeState::cones`) of the cones whose multipliers are free
/// in the current solve; all others are frozen at their current values.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
}

/// All newly added cones, topped up with the existing cones nearest (BFS edge
/// distance) to any new cone; ties broken by lower vertex id.
pub fn select_active(
    mesh: &Mesh,
    cones: &ConeState,
    newly_added: &[usize],
    n_g: usize,
) -> ActiveSet {
    let n_c = cones.cones.len();
    if n_c <= n_g {
        return ActiveSet { indices: (0..n_c).collect() };
    }
    let new_set: std::collections::HashSet<usize> = newly_added.iter().copied().collect();
    let mut indices: Vec<usize> = (0..n_c)
        .filter(|&i| new_set.contains(&cones.cones[i].vertex))
        .collect();
    let dist = if newly_added.is_empty() {
        vec![0usize; mesh.n_vertices()]
    } else {
        mesh.multi_source_distances(newly_added)
    };
    let mut rest: Vec<usize> = (0..n_c)
        .filter(|&i| !new_set.contains(&cones.cones[i].vertex))
        .collect();
    rest.sort_by_key(|&i| (dist[cones.cones[i].vertex], cones.cones[i].vertex));
    indices.extend(rest.into_iter().take(n_g.saturating_sub(indices.len())));
    indices.sort_unstable();
    ActiveSet { indices }
}

/// Sum-constraint elimination data: the eliminated variable's value is
/// `target − Σ y` and must land in [lo, hi].
#[derive(Debug, Clone, Copy)]
pub struct ElimInfo {
    pub target: i64,
    pub lo: i64,
    pub hi: i64,
}

/// Dense reduced QP: objective(y) = yᵀHy + 2gᵀy + c0 over integer y in the
/// per-variable box, optionally subject to the eliminated-variable range.
#[derive(Debug, Clone)]
pub struct ReducedQP {
    pub h: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub c0: f64,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    pub elim: Option<ElimInfo>,
}

impl ReducedQP {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, y: &[i64]) -> f64 {
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        self.objective_f(&yf)
    }

    fn objective_f(&self, y: &[f64]) -> f64 {
        let m = self.dim();
        let mut val = self.c0;
        for i in 0..m {
            let mut hy = 0.0;
            for j in 0..m {
                hy += self.h[i][j] * y[j];
            }
            val += y[i] * hy + 2.0 * self.g[i] * y[i];
        }
        val
    }

    pub fn feasible(&self, y: &[i64]) -> bool {
        if y.iter().zip(&self.lo).any(|(v, l)| v < l)
            || y.iter().zip(&self.hi).any(|(v, h)| v > h)
        {
            return false;
        }
        match self.elim {
            Some(e) => {
                let s: i64 = y.iter().sum();
                let x = e.target - s;
                x >= e.lo && x <= e.hi
            }
            None => true,
        }
    }

    /// Multi-line text dump of the instance (objective + bounds) for external
    /// cross-checking.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let m = self.dim();
        let mut s = String::new();
        let _ = writeln!(s, "\\ reduced integer QP, {m} variables");
        let _ = write!(s, "Minimize\n obj: [");
        for i in 0..m {
            for j in 0..m {
                if self.h[i][j] != 0.0 {
                    let _ = write!(s, " + {:.17e} y{i} * y{j}", self.h[i][j]);
                }
            }
        }
        let _ = write!(s, " ] / 1");
        for i in 0..m {
            if self.g[i] != 0.0 {
                let _ = write!(s, " + {:.17e} y{i}", 2.0 * self.g[i]);
            }
        }
        let _ = writeln!(s, " + {:.17e}", self.c0);
        let _ = writeln!(s, "Subject To");
        if let Some(e) = self.elim {
            let _ = writeln!(
                s,
                " sum: {} <= {} - (y0 + ... + y{}) <= {}",
                e.lo,
                e.target,
                m.saturating_sub(1),
                e.hi
            );
        }
        let _ = writeln!(s, "Bounds");
        for i in 0..m {
            let _ = writeln!(s, " {} <= y{i} <= {}", self.lo[i], self.hi[i]);
        }
        let _ = writeln!(s, "General\n {}", (0..m).map(|i| format!("y{i}")).collect::<Vec<_>>().join(" "));
        let _ = writeln!(s, "End");
        s
    }
}

/// Mapping from reduced variables back to cone indices.
#[derive(Debug, Clone)]
pub struct QpLayout {
    /// var_cones[k] = cone index of reduced variable y_k.
    pub var_cones: Vec<usize>,
    /// Cone index of the eliminated variable (closed meshes).
    pub elim_cone: Option<usize>,
}

/// Assemble the reduced QP from the column cache. `sum_target` carries the
/// Gauss–Bonnet sum Σz = 8(1−g) on closed meshes and is `None` for boundary
/// meshes. With a sum target, the active cone with the largest vertex id is
/// eliminated.
pub fn build_reduced_qp(
    map: &ReducedMap,
    cones: &ConeState,
    active: &ActiveSet,
    sum_target: Option<i64>,
    bounds: (i64, i64),
    area_weights: &[f64],
    uses_scale: bool,
) -> Result<(ReducedQP, QpLayout)> {
    let n = map.d.len();
    let active_set: std::collections::HashSet<usize> = active.indices.iter().copied().collect();

    // Frozen contribution folded into the base vector.
    let mut d1 = map.d.clone();
    let mut frozen_sum = 0i64;
    for (i, c) in cones.cones.iter().enumerate() {
        if !active_set.contains(&i) {
            frozen_sum += c.z;
            if c.z != 0 {
                let zf = c.z as f64;
                for (dv, &cv) in d1.iter_mut().zip(&map.columns[i]) {
                    *dv += zf * cv;
                }
            }
        }
    }

    let (lo, hi) = bounds;
    let m_active = active.indices.len();
    let (var_cones, elim_cone, elim, base): (Vec<usize>, Option<usize>, Option<ElimInfo>, Vec<f64>);

    match sum_target {
        Some(s) => {
            let target = s - frozen_sum;
            if m_active == 0 {
                return Err(Error::Infeasible(
                    "sum constraint with no active cones".into(),
                ));
            }
            // Eliminate the active cone with the largest vertex id.
            let &e_idx = active
                .indices
                .iter()
                .max_by_key(|&&i| cones.cones[i].vertex)
                .unwrap();
            let vars: Vec<usize> =
                active.indices.iter().copied().filter(|&i| i != e_idx).collect();
            // Quick infeasibility check over the whole box.
            let k = vars.len() as i64;
            if target < lo + k * lo || target > hi + k * hi {
                return Err(Error::Infeasible(format!(
                    "sum target {target} unreachable with {} variables in [{lo}, {hi}]",
                    k + 1
                )));
            }
            // Substitute x_e = target − Σ y: r = Σ y_k (col_k − col_e) + d1 + target·col_e.
            let col_e = &map.columns[e_idx];
            let mut d2 = d1;
            for (dv, &cv) in d2.iter_mut().zip(col_e) {
                *dv += target as f64 * cv;
            }
            var_cones = vars;
            elim_cone = Some(e_idx);
            elim = Some(ElimInfo { target, lo, hi });
            base = d2;
        }
        None => {
            var_cones = active.indices.clone();
            elim_cone = None;
            elim = None;
            base = d1;
        }
    }

    // Effective columns.
    let cols: Vec<Vec<f64>> = var_cones
        .iter()
        .map(|&i| match elim_cone {
            Some(e) => map.columns[i]
                .iter()
                .zip(&map.columns[e])
                .map(|(a, b)| a - b)
                .collect(),
            None => map.columns[i].clone(),
        })
        .collect();

    // Quadratic form through W = A − A11ᵀA (closed) or W = A (boundary).
    let w_dot = |x: &[f64], y: &[f64]| -> f64 {
        let mut axy = 0.0;
        let mut ax = 0.0;
        let mut ay = 0.0;
        for i in 0..n {
            axy += area_weights[i] * x[i] * y[i];
            ax += area_weights[i] * x[i];
            ay += area_weights[i] * y[i];
        }
        if uses_scale {
            axy - ax * ay
        } else {
            axy
        }
    };

    let m = cols.len();
    let mut h = vec![vec![0.0; m]; m];
    let mut g = vec![0.0; m];
    for i in 0..m {
        for j in i..m {
            let v = w_dot(&cols[i], &cols[j]);
            h[i][j] = v;
            h[j][i] = v;
        }
        g[i] = w_dot(&cols[i], &base);
    }
    let c0 = w_dot(&base, &base);

    let qp = ReducedQP {
        h,
        g,
        c0,
        lo: vec![lo; m],
        hi: vec![hi; m],
        elim,
    };
    Ok((qp, QpLayout { var_cones, elim_cone }))
}

pub const NODE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone)]
pub struct SolveAnglesOutcome {
    /// True when the multipliers changed.
    pub changed: bool,
    /// Node-budget exhaustion flag from the branch and bound.
    pub exhausted: bool,
    pub nodes: usize,
    /// Instance dump when requested.
    pub dump: Option<String>,
}

/// One angle solve on the pipeline state: prune to an active set, reduce,
/// optimize, and accept the new multipliers only if distortion does not
/// increase (the previous multipliers are a feasible incumbent, so this is
/// guaranteed in exact arithmetic).
pub fn solve_angles(
    state: &mut crate::state::PipelineState,
    newly_added: &[usize],
    n_g: usize,
    want_dump: bool,
) -> Result<SolveAnglesOutcome> {
    state.refresh();
    let active = select_active(&state.mesh, &state.cones, newly_added, n_g);
    let (qp, layout) = build_reduced_qp(
        &state.map,
        &state.cones,
        &active,
        state.sum_target,
        state.bounds,
        &state.curv.area_weights,
        state.sys.uses_scale(),
    )?;
    let dump = want_dump.then(|| qp.dump());

    let incumbent: Vec<i64> = layout
        .var_cones
        .iter()
        .map(|&i| state.cones.cones[i].z)
        .collect();
    let warm = qp.feasible(&incumbent).then_some(incumbent);
    let result = branch_and_bound(&qp, warm.as_deref())?;

    let mut trial = state.cones.clone();
    for (k, &ci) in layout.var_cones.iter().enumerate() {
        trial.cones[ci].z = result.y[k];
    }
    if let Some(e_idx) = layout.elim_cone {
        let target = qp.elim.expect("elimination implies sum constraint").target;
        trial.cones[e_idx].z = target - result.y.iter().sum::<i64>();
    }
    let e_new = state.eval(&trial);
    let changed = trial.cones.iter().zip(&state.cones.cones).any(|(a, b)| a.z != b.z);
    // If the current multipliers were infeasible (e.g. the all-zero start
    // before the sum constraint is first enforced), the solution must be
    // taken regardless of the distortion comparison.
    let must_accept = warm.is_none();
    if changed && (must_accept || e_new <= state.e) {
        state.cones = trial;
        state.refresh();
        return Ok(SolveAnglesOutcome { changed: true, exhausted: result.exhausted, nodes: result.nodes, dump });
    }
    Ok(SolveAnglesOutcome { changed: false, exhausted: result.exhausted, nodes: result.nodes, dump })
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub y: Vec<i64>,
    pub objective: f64,
    pub nodes: usize,
    /// True when the node budget ran out and the result is the best incumbent
    /// rather than a certified optimum.
    pub exhausted: bool,
}

struct Node {
    lo: Vec<i64>,
    hi: Vec<i64>,
    /// Warm start for the box relaxation (parent's relaxed point, clamped).
    start: Vec<f64>,
    bound: f64,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; we pop through Reverse, so order by
        // (bound, seq) ascending for deterministic best-first search.
        self.bound
            .total_cmp(&other.bound)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Exact minimization of the reduced QP over the integer box. Best-first on a
/// convex lower bound from the box relaxation (cyclic coordinate descent plus
/// a gradient correction), branching on the most fractional variable.
pub fn branch_and_bound(qp: &ReducedQP, incumbent: Option<&[i64]>) -> Result<BnbResult> {
    let m = qp.dim();
    let mut best: Option<(Vec<i64>, f64)> = None;
    if let Some(inc) = incumbent {
        if inc.len() == m && qp.feasible(inc) {
            best = Some((inc.to_vec(), qp.objective(inc)));
        }
    }
    if m == 0 {
        let y = Vec::new();
        if !qp.feasible(&y) {
            return Err(Error::Infeasible("empty integer box".into()));
        }
        return Ok(BnbResult { y, objective: qp.c0, nodes: 1, exhausted: false });
    }

    // Uniform convexity floor from Gershgorin discs: y'Hy >= lam_lb * |y|^2.
    // Usually zero for correlated columns, but sharpens the bound when the
    // Hessian is diagonally dominant.
    let lam_lb = (0..m)
        .map(|i| {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| qp.h[i][j].abs()).sum();
            qp.h[i][i] - off
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0);

    let mut heap: BinaryHeap<Reverse<Node>> = BinaryHeap::new();
    let mut scratch = NewtonScratch::new(m);
    for i in 0..m {
        scratch.h[i * m..(i + 1) * m].copy_from_slice(&qp.h[i]);
    }
    let mut seq = 0usize;
    let root_start: Vec<f64> = (0..m)
        .map(|i| 0.0f64.clamp(qp.lo[i] as f64, qp.hi[i] as f64))
        .collect();
    let root = Node {
        lo: qp.lo.clone(),
        hi: qp.hi.clone(),
        start: root_start,
        bound: f64::NEG_INFINITY,
        seq,
    };
    heap.push(Reverse(root));
    let mut nodes = 0usize;
    let mut exhausted = false;

    while let Some(Reverse(node)) = heap.pop() {
        if let Some((_, bv)) = &best {
            if node.bound >= *bv {
                continue;
            }
        }
        nodes += 1;
        if nodes > NODE_BUDGET {
            exhausted = true;
            break;
        }

        // Node-level sum-feasibility pruning (superset relaxation otherwise).
        if let Some(e) = qp.elim {
            let smin: i64 = node.lo.iter().sum();
            let smax: i64 = node.hi.iter().sum();
            if e.target - smax > e.hi || e.target - smin < e.lo {
                continue;
            }
        }

        let Node { lo: nlo, hi: nhi, start, .. } = node;

        // The root gets a fully converged relaxation; children warm-start
        // from the parent's point and need only a few Newton rounds. The
        // root also tracks the best objective seen across Newton steps.
        let is_root = nodes == 1;
        let newton_iters = if is_root { 20 } else { 3 };
        let relax = box_relaxation(qp, &nlo, &nhi, start, newton_iters, is_root, &mut scratch);
        scratch.gradient(&qp.g, &relax);
        // q(y) = c0 + 2 g'y + y'Hy = c0 + g'y + (grad'y)/2 with grad = 2(Hy+g).
        let mut bound = qp.c0;
        for i in 0..m {
            let grad_i = scratch.g[i];
            bound += (qp.g[i] + 0.5 * grad_i) * relax[i];
            let t_lo = nlo[i] as f64 - relax[i];
            let t_hi = nhi[i] as f64 - relax[i];
            let term = |t: f64| grad_i * t + lam_lb * t * t;
            let mut lo_term = term(t_lo).min(term(t_hi)).min(0.0);
            if lam_lb > 0.0 {
                let t_star = (-grad_i / (2.0 * lam_lb)).clamp(t_lo, t_hi);
                lo_term = lo_term.min(term(t_star));
            }
            bound += lo_term;
        }
        if let Some((_, bv)) = &best {
            if bound >= *bv {
                continue;
            }
        }

        // Rounded relaxation as a candidate.
        for i in 0..m {
            scratch.rounded[i] = (relax[i].round() as i64).clamp(nlo[i], nhi[i]);
        }
        if qp.feasible(&scratch.rounded) {
            let val = qp.objective(&scratch.rounded);
            if best.as_ref().is_none_or(|(_, bv)| val < *bv) {
                best = Some((scratch.rounded.clone(), val));
            }
        }
        // Polishing the incumbent at the root makes pruning effective from
        // the start; later nodes already sit near the incumbent.
        if is_root {
            if let Some((y, val)) = best.take() {
                best = Some(polish(qp, y, val));
            }
        }

        // Fully fixed node: the candidate above was its only point.
        if nlo == nhi {
            continue;
        }

        // Branch on the most fractional unfixed variable; ties to lower index.
        let mut pick = usize::MAX;
        let mut pick_frac = -1.0;
        for i in 0..m {
            if nlo[i] == nhi[i] {
                continue;
            }
            let frac = (relax[i] - relax[i].round()).abs();
            if frac > pick_frac + 1e-15 {
                pick_frac = frac;
                pick = i;
            }
        }
        debug_assert!(pick != usize::MAX);
        let split = (relax[pick].floor() as i64).clamp(nlo[pick], nhi[pick] - 1);
        // The start point only needs re-clamping at the branched coordinate;
        // every other coordinate already lies inside the child box. The
        // second child takes ownership of the relaxation point.
        let mut relax = Some(relax);
        for (k, (lo_i, hi_i)) in
            [(nlo[pick], split), (split + 1, nhi[pick])].into_iter().enumerate()
        {
            let mut lo = nlo.clone();
            let mut hi = nhi.clone();
            lo[pick] = lo_i;
            hi[pick] = hi_i;
            let mut start = if k == 0 {
                relax.as_ref().expect("first child clones").clone()
            } else {
                relax.take().expect("second child consumes")
            };
            start[pick] = start[pick].clamp(lo_i as f64, hi_i as f64);
            // The incumbent may have improved since the bound was computed
            // (rounded candidate above); skip children it already dominates.
            if let Some((_, bv)) = &best {
                if bound >= *bv {
                    continue;
                }
            }
            seq += 1;
            heap.push(Reverse(Node { lo, hi, start, bound, seq }));
        }
    }

    match best {
        Some((y, objective)) => Ok(BnbResult { y, objective, nodes, exhausted }),
        None => Err(Error::Infeasible(
            "no integer point satisfies the sum constraint within bounds".into(),
        )),
    }
}

/// Deterministic integer descent from an incumbent: best-improvement single
/// steps of +/-1 and sum-preserving pair exchanges, repeated until a full
/// pass finds no improvement. Objective deltas are evaluated in O(m) via a
/// maintained gradient, so a pass costs O(m^2).
fn polish(qp: &ReducedQP, mut y: Vec<i64>, mut val: f64) -> (Vec<i64>, f64) {
    let m = qp.dim();
    // gy[i] = (H y + g)_i; objective delta for y_i += s is s^2 h_ii + 2 s gy_i.
    let mut gy: Vec<f64> = (0..m)
        .map(|i| qp.g[i] + (0..m).map(|j| qp.h[i][j] * y[j] as f64).sum::<f64>())
        .collect();
    let mut sum: i64 = y.iter().sum();
    for _ in 0..50 * m.max(1) {
        let mut best_delta = -1e-12 * (1.0 + val.abs());
        let mut best_move: Option<(usize, i64, Option<usize>)> = None;
        for i in 0..m {
            for s in [-1i64, 1] {
                let yi = y[i] + s;
                if yi < qp.lo[i] || yi > qp.hi[i] {
                    continue;
                }
                let sf = s as f64;
                // Single step; check the eliminated-variable range if any.
                let ok = match qp.elim {
                    Some(e) => {
                        let z = e.target - (sum + s);
                        z >= e.lo && z <= e.hi
                    }
                    None => true,
                };
                if ok {
                    let d = qp.h[i][i] + 2.0 * sf * gy[i];
                    if d < best_delta {
                        best_delta = d;
                        best_move = Some((i, s, None));
                    }
                }
                // Sum-preserving exchange with every other coordinate.
                for j in 0..m {
                    if j == i {
                        continue;
                    }
                    let yj = y[j] - s;
                    if yj < qp.lo[j] || yj > qp.hi[j] {
                        continue;
                    }
                    let d = qp.h[i][i] + qp.h[j][j] - 2.0 * qp.h[i][j]
                        + 2.0 * sf * (gy[i] - gy[j]);
                    if d < best_delta {
                        best_delta = d;
                        best_move = Some((i, s, Some(j)));
                    }
                }
            }
        }
        let Some((i, s, pair)) = best_move else { break };
        let sf = s as f64;
        y[i] += s;
        for k in 0..m {
            gy[k] += sf * qp.h[k][i];
        }
        if let Some(j) = pair {
            y[j] -= s;
            for k in 0..m {
                gy[k] -= sf * qp.h[k][j];
            }
        } else {
            sum += s;
        }
        val += best_delta;
    }
    // Recompute exactly to avoid drift from accumulated deltas.
    (y.clone(), qp.objective(&y))
}

/// Reusable workspace for the box-QP relaxation, sized once per solve.
struct NewtonScratch {
    /// Flattened row-major copy of H for cache-friendly node processing.
    h: Vec<f64>,
    /// Row-major k×k Cholesky workspace over the free set.
    a: Vec<f64>,
    rhs: Vec<f64>,
    free: Vec<usize>,
    g: Vec<f64>,
    rounded: Vec<i64>,
}

impl NewtonScratch {
    fn new(m: usize) -> Self {
        NewtonScratch {
            h: vec![0.0; m * m],
            a: vec![0.0; m * m],
            rhs: vec![0.0; m],
            free: Vec::with_capacity(m),
            g: vec![0.0; m],
            rounded: vec![0; m],
        }
    }

    /// g ← 2 (H y + g0), using the flattened copy of H.
    fn gradient(&mut self, g0: &[f64], y: &[f64]) {
        let m = y.len();
        for i in 0..m {
            let row = &self.h[i * m..(i + 1) * m];
            let mut hy = g0[i];
            for j in 0..m {
                hy += row[j] * y[j];
            }
            self.g[i] = 2.0 * hy;
        }
    }
}

/// In-place dense Cholesky A = R'R on the leading k×k block of `a`;
/// returns false if a pivot is not positive.
fn cholesky_in_place(a: &mut [f64], k: usize) -> bool {
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                a[i * k + i] = s.sqrt();
            } else {
                a[i * k + j] = s / a[j * k + j];
            }
        }
    }
    true
}

/// Solve (R'R) x = b in place given the Cholesky factor from
/// `cholesky_in_place`.
fn cholesky_solve(a: &[f64], k: usize, b: &mut [f64]) {
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= a[i * k + p] * b[p];
        }
        b[i] = s / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for p in i + 1..k {
            s -= a[p * k + i] * b[p];
        }
        b[i] = s / a[i * k + i];
    }
}

/// Continuous minimizer of the reduced quadratic over the box via projected
/// Newton: bind coordinates whose KKT multiplier sign is already correct,
/// take a Newton step on the free block (ridge-regularized when the block is
/// singular), clamp, and repeat to 1e-8 stationarity. The node bound derived
/// from the result stays valid at any feasible point, so an early exit only
/// loosens pruning, never correctness.
fn box_relaxation(
    qp: &ReducedQP,
    lo: &[i64],
    hi: &[i64],
    start: Vec<f64>,
    iters: usize,
    track_best: bool,
    ws: &mut NewtonScratch,
) -> Vec<f64> {
    let m = qp.dim();
    let NewtonScratch { h, a, rhs, free, g, .. } = ws;
    let mut y = start;
    for i in 0..m {
        y[i] = y[i].clamp(lo[i] as f64, hi[i] as f64);
    }
    let scale = (0..m).map(|i| h[i * m + i].abs()).fold(1.0f64, f64::max);
    let mut best: Option<(Vec<f64>, f64)> =
        track_best.then(|| (y.clone(), qp.objective_f(&y)));
    for _ in 0..iters {
        // Gradient of the objective: 2 (H y + g).
        for i in 0..m {
            let row = &h[i * m..(i + 1) * m];
            let mut hy = qp.g[i];
            for j in 0..m {
                hy += row[j] * y[j];
            }
            g[i] = 2.0 * hy;
        }
        free.clear();
        let mut pg = 0.0f64;
        for i in 0..m {
            if lo[i] == hi[i] {
                continue;
            }
            let at_lo = y[i] <= lo[i] as f64 + 1e-9;
            let at_hi = y[i] >= hi[i] as f64 - 1e-9;
            if (at_lo && g[i] >= 0.0) || (at_hi && g[i] <= 0.0) {
                continue;
            }
            pg = pg.max(g[i].abs());
            free.push(i);
        }
        let k = free.len();
        if k == 0 || pg < 1e-8 {
            break;
        }
        // Newton step on the free block: H_FF d = -(H y + g)_F.
        let mut ridge = 1e-12 * scale;
        loop {
            for (r, &fi) in free.iter().enumerate() {
                let row = &h[fi * m..(fi + 1) * m];
                for (c, &fj) in free.iter().enumerate() {
                    a[r * k + c] = row[fj];
                }
                a[r * k + r] += ridge;
                rhs[r] = -0.5 * g[fi];
            }
            if cholesky_in_place(a, k) {
                break;
            }
            ridge = (ridge * 100.0).max(1e-10 * scale);
        }
        cholesky_solve(a, k, &mut rhs[..k]);
        let mut step = 0.0f64;
        for (r, &fi) in free.iter().enumerate() {
            let new = (y[fi] + rhs[r]).clamp(lo[fi] as f64, hi[fi] as f64);
            step = step.max((new - y[fi]).abs());
            y[fi] = new;
        }
        // Clamping can break the pure Newton descent guarantee; at the root
        // keep the best point seen so the returned bound never degrades.
        if let Some((by, bv)) = &mut best {
            let val = qp.objective_f(&y);
            if val < *bv {
                *bv = val;
                by.copy_from_slice(&y);
            }
        }
        if step < 1e-10 {
            break;
        }
    }
    match best {
        Some((by, _)) => by,
        None => y,
    }
}
