//! Cone relocation with fixed angles: move each cone to the one-ring
//! neighbor with the most negative directional derivative of the distortion,
//! accepting only strict decreases.
//!
//! The derivative uses the adjoint field h solving Δh = −2u (L h = 2 Â u
//! in the positive-semidefinite cotangent convention); the edge
//! derivatives are one-sided finite differences along the hop edge.

use crate::error::{Error, Result};
use crate::state::PipelineState;
use crate::yamabe::{distortion, ConeState, ConformalSystem};

/// Below this distortion relocation reports convergence instead of dividing
/// by 2E.
pub const EPS_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct MoveProposal {
    /// Index into `ConeState::cones`.
    pub cone: usize,
    pub target: usize,
    pub derivative: f64,
}

/// One executed hop (for monotonicity and predictiveness audits).
#[derive(Debug, Clone, Copy)]
pub struct MoveRecord {
    pub cone_vertex: usize,
    pub target: usize,
    pub derivative: f64,
    pub delta_e: f64,
    pub accepted: bool,
    /// True when this hop was part of a simultaneous (all-cones) trial.
    pub simultaneous: bool,
}

#[derive(Debug, Default, Clone)]
pub struct MoveStats {
    pub records: Vec<MoveRecord>,
    pub passes: usize,
}

/// Solve the adjoint equation Δh = −2u: with the positive-semidefinite
/// cotangent convention (L ≈ −Δ in weak form) this reads L h = 2 Â u
/// (zero at the pin / on the boundary). Requires the compatibility
/// condition Σ Â_ii u_i = 0 on closed meshes, which holds at the optimal
/// global scale.
pub fn solve_adjoint(sys: &ConformalSystem, u: &[f64], area_weights: &[f64]) -> Result<Vec<f64>> {
    if sys.is_closed() {
        let centered: f64 = u.iter().zip(area_weights).map(|(ui, ai)| ai * ui).sum();
        if centered.abs() > 1e-9 * (1.0 + distortion(u, area_weights)) {
            return Err(Error::Numerical(format!(
                "adjoint right-hand side incompatible (Σ A u = {centered:e}); \
                 re-optimize the global scale first"
            )));
        }
    }
    let rhs: Vec<f64> = u
        .iter()
        .zip(area_weights)
        .map(|(ui, ai)| 2.0 * ai * ui)
        .collect();
    Ok(sys.solve_adjoint_rhs(&rhs))
}

/// Variant with h pinned to zero at every cone vertex (the uncorrected
/// multiplier equation); kept only for side-by-side comparison.
pub fn solve_adjoint_lm(state: &PipelineState, u: &[f64]) -> Result<Vec<f64>> {
    let cone_vs: std::collections::HashSet<usize> =
        state.cones.cones.iter().map(|c| c.vertex).collect();
    let n = state.l.n();
    let mut triplets: Vec<(usize, usize, f64)> = state
        .l
        .entries()
        .filter(|(i, j, _)| !cone_vs.contains(i) && !cone_vs.contains(j))
        .collect();
    for &v in &cone_vs {
        triplets.push((v, v, 1.0));
    }
    // Also pin the regular pin vertex to keep the system nonsingular.
    let l_pinned = crate::sparse::SparseSym::assemble(&triplets, n)?;
    let sys = crate::sparse::PinnedSystem::new(&l_pinned, state.cones.pin)?;
    let mut rhs: Vec<f64> = u
        .iter()
        .zip(&state.curv.area_weights)
        .map(|(ui, ai)| 2.0 * ai * ui)
        .collect();
    for &v in &cone_vs {
        rhs[v] = 0.0;
    }
    Ok(sys.solve(&rhs))
}

impl ConformalSystem {
    /// Adjoint solve: same operator as the conformal-factor solve but with
    /// homogeneous boundary data.
    pub fn solve_adjoint_rhs(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            ConformalSystem::Closed { pinned, .. } => pinned.solve(rhs),
            ConformalSystem::Dirichlet { spd, interior, slot, n, .. } => {
                let red: Vec<f64> = interior.iter().map(|&v| rhs[v]).collect();
                let hi = spd.solve(&red);
                let mut h = vec![0.0; *n];
                for v in 0..*n {
                    if let Some(k) = slot[v] {
                        h[v] = hi[k];
                    }
                }
                h
            }
        }
    }
}

/// ∇_n E along the edge from cone vertex c to neighbor w.
pub fn directional_derivative(
    u: &[f64],
    h: &[f64],
    e: f64,
    c: usize,
    w: usize,
    edge_len: f64,
) -> f64 {
    let du = (u[w] - u[c]) / edge_len;
    let dh = (h[w] - h[c]) / edge_len;
    (u[c] * u[c] - du * dh) / (2.0 * e)
}

/// Per cone, the admissible neighbor with the most negative derivative;
/// collisions on a target keep the more negative proposal (tie: lower cone
/// index).
pub fn propose_moves(state: &PipelineState, u: &[f64], h: &[f64]) -> Vec<MoveProposal> {
    let mut proposals: Vec<MoveProposal> = Vec::new();
    // The distortion and the adjoint both live on the unit-total-area
    // normalization of the metric; edge derivatives must be taken in the
    // same normalization (lengths scale with the square root of area), or
    // the product term is suppressed by the total surface area and the
    // pointwise u² term always wins.
    let total_area: f64 = state.curv.vertex_areas.iter().sum();
    let len_scale = total_area.sqrt();
    for (ci, cone) in state.cones.cones.iter().enumerate() {
        if cone.z == 0 {
            continue; // zero-angle cones do not influence E
        }
        let c = cone.vertex;
        let mut best: Option<MoveProposal> = None;
        for &w in state.mesh.one_ring(c) {
            if w == state.cones.pin || state.cones.has_cone_at(w) {
                continue;
            }
            if !state.sys.is_closed() && state.mesh.is_boundary(w) {
                continue;
            }
            let len = state.mesh.edge_length(c, w) / len_scale;
            let d = directional_derivative(u, h, state.e, c, w, len);
            if d < 0.0 && best.as_ref().is_none_or(|b| d < b.derivative) {
                best = Some(MoveProposal { cone: ci, target: w, derivative: d });
            }
        }
        if let Some(p) = best {
            proposals.push(p);
        }
    }
    // Collision rule: one winner per target vertex.
    proposals.sort_by(|a, b| {
        a.target
            .cmp(&b.target)
            .then(a.derivative.total_cmp(&b.derivative))
            .then(a.cone.cmp(&b.cone))
    });
    proposals.dedup_by_key(|p| p.target);
    proposals.sort_by_key(|p| p.cone);
    proposals
}

fn apply_moves(cones: &ConeState, moves: &[MoveProposal]) -> ConeState {
    let mut trial = cones.clone();
    for m in moves {
        trial.cones[m.cone].vertex = m.target;
    }
    trial
}

/// Relocation loop: try all proposals simultaneously; if that does not
/// strictly decrease E, retry one at a time in descending |derivative| order.
/// Repeat until a full pass accepts nothing. E never increases.
pub fn move_cones(state: &mut PipelineState, use_lm_h: bool) -> Result<MoveStats> {
    let mut stats = MoveStats::default();
    loop {
        if state.e < EPS_MIN {
            return Ok(stats); // converged; derivatives would divide by ~0
        }
        let h = if use_lm_h {
            solve_adjoint_lm(state, &state.u.clone())?
        } else {
            solve_adjoint(&state.sys, &state.u, &state.curv.area_weights)?
        };
        let proposals = propose_moves(state, &state.u.clone(), &h);
        if proposals.is_empty() {
            return Ok(stats);
        }
        stats.passes += 1;

        // Phase 1: all proposals at once.
        let trial = apply_moves(&state.cones, &proposals);
        let e_new = state.eval(&trial);
        if e_new < state.e {
            for p in &proposals {
                stats.records.push(MoveRecord {
                    cone_vertex: state.cones.cones[p.cone].vertex,
                    target: p.target,
                    derivative: p.derivative,
                    delta_e: e_new - state.e,
                    accepted: true,
                    simultaneous: true,
                });
            }
            state.cones = trial;
            state.refresh();
            continue;
        }

        // Phase 2: one cone at a time, steepest first.
        let mut order = proposals.clone();
        order.sort_by(|a, b| {
            a.derivative
                .abs()
                .total_cmp(&b.derivative.abs())
                .reverse()
                .then(a.cone.cmp(&b.cone))
        });
        let mut accepted_any = false;
        for p in &order {
            // Revalidate: earlier accepted moves may have occupied the target.
            if state.cones.has_cone_at(p.target) || p.target == state.cones.pin {
                continue;
            }
            let trial = apply_moves(&state.cones, std::slice::from_ref(p));
            let e_new = state.eval(&trial);
            let accept = e_new < state.e;
            stats.records.push(MoveRecord {
                cone_vertex: state.cones.cones[p.cone].vertex,
                target: p.target,
                derivative: p.derivative,
                delta_e: e_new - state.e,
                accepted: accept,
                simultaneous: false,
            });
            if accept {
                state.cones = trial;
                state.refresh();
                accepted_any = true;
            }
        }
        if !accepted_any {
            return Ok(stats);
        }
    }
}
