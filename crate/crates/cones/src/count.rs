//! Cone insertion and removal: branch-driven placement on a scalar field
//! (curvature at initialization, conformal factors afterwards) and paired
//! removal under a geometrically decaying acceptance threshold.

use crate::error::Result;
use crate::mesh::{CurvatureData, Mesh};
use crate::state::PipelineState;
use crate::yamabe::{Cone, ConeState};

/// Maximal connected same-sign vertex set above the field threshold.
#[derive(Debug, Clone)]
pub struct Branch {
    pub vertices: Vec<usize>,
    /// Σ Area(v)·f(v)² over the set (raw, unnormalized areas).
    pub energy: f64,
    /// Vertex of maximal |f| (tie: lower id).
    pub extremal: usize,
}

/// Decaying relative-increase budget for removals.
#[derive(Debug, Clone, Copy)]
pub struct RemovalBudget {
    pub eta: f64,
}

impl RemovalBudget {
    pub fn new(eta0: f64) -> Self {
        RemovalBudget { eta: eta0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RemovalRecord {
    pub vertices: (usize, usize),
    pub distance: usize,
    pub relative_change: f64,
    pub accepted: bool,
}

/// Connected same-sign components with |f| > f_thres, sorted by energy
/// descending (tie: lower minimum vertex id).
pub fn find_branches(mesh: &Mesh, f: &[f64], f_thres: f64, vertex_areas: &[f64]) -> Vec<Branch> {
    let n = mesh.n_vertices();
    let mut visited = vec![false; n];
    let mut branches = Vec::new();
    for v0 in 0..n {
        if visited[v0] || f[v0].abs() <= f_thres {
            continue;
        }
        let sign = f[v0] > 0.0;
        let mut members = Vec::new();
        let mut stack = vec![v0];
        visited[v0] = true;
        while let Some(v) = stack.pop() {
            members.push(v);
            for &w in mesh.one_ring(v) {
                if !visited[w] && f[w].abs() > f_thres && (f[w] > 0.0) == sign {
                    visited[w] = true;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        let energy = members.iter().map(|&v| vertex_areas[v] * f[v] * f[v]).sum();
        let extremal = members
            .iter()
            .copied()
            .max_by(|&a, &b| f[a].abs().total_cmp(&f[b].abs()).then(b.cmp(&a)))
            .unwrap();
        branches.push(Branch { vertices: members, energy, extremal });
    }
    branches.sort_by(|a, b| {
        b.energy
            .total_cmp(&a.energy)
            .then(a.vertices[0].cmp(&b.vertices[0]))
    });
    branches
}

/// Cone sites from the top branches of `f`, skipping inadmissible vertices;
/// shortfalls are filled with the globally largest-|f| unused vertices.
fn site_cones(
    mesh: &Mesh,
    f: &[f64],
    f_thres_ratio: f64,
    vertex_areas: &[f64],
    count: usize,
    admissible: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let f_max = f.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let mut sites = Vec::new();
    if f_max > 0.0 {
        let branches = find_branches(mesh, f, f_thres_ratio * f_max, vertex_areas);
        for b in &branches {
            if sites.len() == count {
                break;
            }
            // Prefer the extremal vertex; fall back to the best admissible
            // member of the branch.
            let mut members: Vec<usize> = b.vertices.clone();
            members.sort_by(|&a, &b2| f[a].abs().total_cmp(&f[b2].abs()).reverse().then(a.cmp(&b2)));
            if let Some(&v) = members.iter().find(|&&v| admissible(v) && !sites.contains(&v)) {
                sites.push(v);
            }
        }
    }
    if sites.len() < count {
        // Global fallback: largest |f| first.
        let mut order: Vec<usize> = (0..mesh.n_vertices()).collect();
        order.sort_by(|&a, &b| f[a].abs().total_cmp(&f[b].abs()).reverse().then(a.cmp(&b)));
        for v in order {
            if sites.len() == count {
                break;
            }
            if admissible(v) && !sites.contains(&v) {
                sites.push(v);
            }
        }
    }
    sites
}

/// Initial-cone candidate sites with no pin exclusion; used by the driver to
/// pick the pinned vertex before any cones exist.
pub fn candidate_sites(mesh: &Mesh, curv: &CurvatureData, f_thres_ratio: f64) -> Vec<usize> {
    let (g, _) = mesh.genus();
    let n_a = initial_cone_count(g);
    site_cones(mesh, &curv.k_ori, f_thres_ratio, &curv.vertex_areas, n_a, |v| {
        !mesh.is_boundary(v)
    })
}

/// Number of initial cones: 8 on genus-0 surfaces (closed or boundary),
/// |8(1−g)| for g ≥ 1 (zero on the torus).
pub fn initial_cone_count(genus: usize) -> usize {
    if genus == 0 {
        8
    } else {
        (8i64 * (1 - genus as i64)).unsigned_abs() as usize
    }
}

/// Initial cones at the extrema of the angle-defect field, all with z = 0.
pub fn initial_cones(
    mesh: &Mesh,
    curv: &CurvatureData,
    pin: usize,
    f_thres_ratio: f64,
) -> ConeState {
    let (g, _) = mesh.genus();
    let n_a = initial_cone_count(g);
    let sites = site_cones(mesh, &curv.k_ori, f_thres_ratio, &curv.vertex_areas, n_a, |v| {
        v != pin && !mesh.is_boundary(v)
    });
    ConeState {
        cones: sites.into_iter().map(|vertex| Cone { vertex, z: 0 }).collect(),
        pin,
    }
}

/// m = ⌊E/ε_tar⌋; insert min{m, 10} when m ≥ 2 and the cone count already
/// exceeds N_g, otherwise one.
pub fn adaptive_add_count(e: f64, eps_tar: f64, n_c: usize, n_g: usize) -> usize {
    let m = (e / eps_tar).floor() as usize;
    if m >= 2 && n_c > n_g {
        m.min(10)
    } else {
        1
    }
}

/// Insert `count` zero-angle cones at the extrema of the current conformal
/// factors. Returns the vertices actually added (may be fewer when no
/// admissible site remains).
pub fn add_cones(state: &mut PipelineState, count: usize, f_thres_ratio: f64) -> Vec<usize> {
    let u = state.u.clone();
    let sites = {
        let mesh = &state.mesh;
        let cones = &state.cones;
        site_cones(mesh, &u, f_thres_ratio, &state.curv.vertex_areas, count, |v| {
            v != cones.pin && !cones.has_cone_at(v) && !mesh.is_boundary(v)
        })
    };
    for &v in &sites {
        state.cones.cones.push(Cone { vertex: v, z: 0 });
    }
    if !sites.is_empty() {
        state.refresh();
    }
    sites
}

/// Remove opposite-multiplier cone pairs that are close on the mesh when the
/// relative distortion increase stays under the current η; every acceptance
/// decays η by 0.9 and refreshes the reference distortion.
pub fn remove_pairs(
    state: &mut PipelineState,
    budget: &mut RemovalBudget,
) -> Result<Vec<RemovalRecord>> {
    let n = state.mesh.n_vertices();
    let thr = 5e-4 * n as f64;
    let cap = thr.ceil() as usize + 2;

    // Candidate pairs: opposite nonzero multipliers, close enough.
    let mut candidates: Vec<(usize, usize, usize, usize)> = Vec::new(); // (dist, va, vb, _)
    let cones = &state.cones.cones;
    for i in 0..cones.len() {
        for j in i + 1..cones.len() {
            if cones[i].z == 0 || cones[i].z != -cones[j].z {
                continue;
            }
            let (va, vb) = (cones[i].vertex.min(cones[j].vertex), cones[i].vertex.max(cones[j].vertex));
            if let Some(d) = state.mesh.bfs_edge_distance(va, vb, cap)? {
                // Adjacent pairs always qualify even when 5e-4·N < 1.
                if (d as f64) < thr || d == 1 {
                    candidates.push((d, va, vb, 0));
                }
            }
        }
    }
    candidates.sort_unstable();

    let mut records = Vec::new();
    for (d, va, vb, _) in candidates {
        let (Some(i), Some(j)) = (state.cones.index_of(va), state.cones.index_of(vb)) else {
            continue; // one of them already removed
        };
        if state.cones.cones[i].z != -state.cones.cones[j].z || state.cones.cones[i].z == 0 {
            continue;
        }
        let mut trial = state.cones.clone();
        let (hi_idx, lo_idx) = (i.max(j), i.min(j));
        trial.cones.remove(hi_idx);
        trial.cones.remove(lo_idx);
        let e_new = state.eval(&trial);
        let rel = (e_new - state.e) / state.e.max(f64::MIN_POSITIVE);
        let accepted = rel < budget.eta;
        records.push(RemovalRecord {
            vertices: (va, vb),
            distance: d,
            relative_change: rel,
            accepted,
        });
        if accepted {
            state.cones = trial;
            state.refresh();
            budget.eta *= 0.9;
        }
    }
    Ok(records)
}
