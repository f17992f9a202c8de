//! Homology basis for closed genus-g surfaces: g pairs of non-contractible
//! loops (α_k, β_k) that cross each other at exactly one vertex and are
//! vertex-disjoint across pairs.
//!
//! α candidates come from a tree-cotree decomposition (fundamental cycles of
//! the primal spanning tree), filtered to non-separating cycles. Each β is
//! grown by a BFS that leaves α into its left fan at one loop vertex and
//! returns from the right fan, guaranteeing odd (=1) crossing number.

use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// One oriented loop with its left-side data. "Left" is the side swept when
/// walking the fan CCW from the outgoing loop edge to the incoming one.
#[derive(Debug, Clone)]
pub struct HomologyLoop {
    /// Cyclic vertex sequence (no repeats).
    pub vertices: Vec<usize>,
    /// left_fans[j]: faces of the left fan at vertices[j].
    pub left_fans: Vec<Vec<usize>>,
    /// Left-side geodesic curvature per loop vertex: π − Σ left-fan angles.
    pub k_g: Vec<f64>,
}

impl HomologyLoop {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
    pub fn total_k_g(&self) -> f64 {
        self.k_g.iter().sum()
    }
    pub fn contains(&self, v: usize) -> bool {
        self.vertices.contains(&v)
    }
}

#[derive(Debug, Clone)]
pub struct HomologyBasis {
    /// (α_k, β_k) pairs; loops within a pair cross at exactly one vertex,
    /// loops of different pairs are vertex-disjoint.
    pub pairs: Vec<(HomologyLoop, HomologyLoop)>,
    /// Crossing vertex of each pair.
    pub crossings: Vec<usize>,
}

impl HomologyBasis {
    /// The 2g loops in order α_1, β_1, α_2, β_2, …
    pub fn loops(&self) -> Vec<&HomologyLoop> {
        self.pairs.iter().flat_map(|(a, b)| [a, b]).collect()
    }
}

/// Compute a homology basis for a closed mesh of genus g ≥ 1.
pub fn homology_loops(mesh: &Mesh) -> Result<HomologyBasis> {
    if mesh.has_boundary() {
        return Err(Error::Topology("homology basis requires a closed mesh".into()));
    }
    let (g, _) = mesh.genus();
    if g == 0 {
        return Err(Error::Topology("mesh has genus 0: no non-contractible loops".into()));
    }

    let mut candidates = fundamental_cycles(mesh)?;
    candidates.retain(|c| is_non_separating(mesh, c));
    // Deterministic preference: short loops first, then lowest vertex id.
    candidates.sort_by_key(|c| (c.len(), *c.iter().min().unwrap()));

    let mut pairs = Vec::new();
    let mut crossings = Vec::new();
    let mut used: HashSet<usize> = HashSet::new();

    for cand in &candidates {
        if pairs.len() == g {
            break;
        }
        if cand.iter().any(|v| used.contains(v)) {
            continue;
        }
        if let Some((beta, cross)) = transversal_loop(mesh, cand, &used) {
            used.extend(cand.iter().copied());
            used.extend(beta.iter().copied());
            pairs.push((make_loop(mesh, cand.clone()), make_loop(mesh, beta)));
            crossings.push(cross);
        }
    }

    if pairs.len() != g {
        return Err(Error::Topology(format!(
            "found only {} of {} transversal loop pairs",
            pairs.len(),
            g
        )));
    }
    Ok(HomologyBasis { pairs, crossings })
}

/// Fundamental cycles of a tree-cotree decomposition: primal BFS tree, dual
/// BFS tree over the remaining edges; each edge in neither tree closes one of
/// the 2g generator cycles through the primal tree.
fn fundamental_cycles(mesh: &Mesh) -> Result<Vec<Vec<usize>>> {
    let n = mesh.n_vertices();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0usize; n];
    let mut in_tree: HashSet<(usize, usize)> = HashSet::new();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in mesh.one_ring(v) {
            if !seen[w] {
                seen[w] = true;
                parent[w] = v;
                depth[w] = depth[v] + 1;
                in_tree.insert(ekey(v, w));
                queue.push_back(w);
            }
        }
    }

    // Dual spanning tree across edges not in the primal tree.
    let nf = mesh.n_faces();
    let mut face_adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nf]; // (face, edge id)
    for (ei, e) in mesh.edges().iter().enumerate() {
        let fs = edge_faces(mesh, e[0], e[1]);
        if let [f0, f1] = fs[..] {
            face_adj[f0].push((f1, ei));
            face_adj[f1].push((f0, ei));
        }
    }
    let mut crossed = vec![false; mesh.n_edges()];
    let mut seen_f = vec![false; nf];
    let mut queue = VecDeque::from([0usize]);
    seen_f[0] = true;
    while let Some(f) = queue.pop_front() {
        for &(f2, ei) in &face_adj[f] {
            let e = mesh.edges()[ei];
            if !seen_f[f2] && !in_tree.contains(&ekey(e[0], e[1])) {
                seen_f[f2] = true;
                crossed[ei] = true;
                queue.push_back(f2);
            }
        }
    }

    let mut cycles = Vec::new();
    for (ei, e) in mesh.edges().iter().enumerate() {
        if crossed[ei] || in_tree.contains(&ekey(e[0], e[1])) {
            continue;
        }
        // Close through the primal tree: walk both endpoints to their LCA.
        let (mut a, mut b) = (e[0], e[1]);
        let mut pa = vec![a];
        let mut pb = vec![b];
        while depth[a] > depth[b] {
            a = parent[a];
            pa.push(a);
        }
        while depth[b] > depth[a] {
            b = parent[b];
            pb.push(b);
        }
        while a != b {
            a = parent[a];
            b = parent[b];
            pa.push(a);
            pb.push(b);
        }
        // pa ends at the LCA; append pb reversed without repeating it.
        pb.pop();
        pa.extend(pb.into_iter().rev());
        cycles.push(pa);
    }
    Ok(cycles)
}

fn ekey(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Faces incident to edge (a, b).
fn edge_faces(mesh: &Mesh, a: usize, b: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (k, &w) in mesh.one_ring(a).iter().enumerate() {
        let ring = mesh.one_ring(a);
        let next = ring[(k + 1) % ring.len()];
        if k < mesh.ring_faces(a).len() && (w == b || next == b) {
            let f = mesh.ring_faces(a)[k];
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    out
}

/// A cycle is non-separating iff cutting the surface along it (removing dual
/// edges that cross it) leaves the face graph connected.
fn is_non_separating(mesh: &Mesh, cycle: &[usize]) -> bool {
    let mut cut_edges: HashSet<(usize, usize)> = HashSet::new();
    for k in 0..cycle.len() {
        cut_edges.insert(ekey(cycle[k], cycle[(k + 1) % cycle.len()]));
    }
    let nf = mesh.n_faces();
    let mut seen = vec![false; nf];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(f) = queue.pop_front() {
        let face = mesh.faces()[f];
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            if cut_edges.contains(&ekey(a, b)) {
                continue;
            }
            let fs = edge_faces(mesh, a, b);
            for &f2 in &fs {
                if !seen[f2] {
                    seen[f2] = true;
                    count += 1;
                    queue.push_back(f2);
                }
            }
        }
    }
    count == nf
}

/// Build a loop crossing `alpha` at exactly one vertex: leave into the left
/// fan at some α vertex, walk through the complement of α (and of `used`
/// vertices), and re-enter from the right fan of the same vertex.
fn transversal_loop(
    mesh: &Mesh,
    alpha: &[usize],
    used: &HashSet<usize>,
) -> Option<(Vec<usize>, usize)> {
    let on_alpha: HashSet<usize> = alpha.iter().copied().collect();
    let m = alpha.len();
    // Deterministic order: α vertices by ascending id.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&j| alpha[j]);

    for &j in &order {
        let v = alpha[j];
        let prev = alpha[(j + m - 1) % m];
        let next = alpha[(j + 1) % m];
        let ring = mesh.one_ring(v);
        let ip = ring.iter().position(|&w| w == prev)?;
        let inx = ring.iter().position(|&w| w == next)?;
        // Left side: strictly between next and prev walking CCW; right side:
        // strictly between prev and next.
        let side = |from: usize, to: usize| -> Vec<usize> {
            let mut out = Vec::new();
            let mut i = (from + 1) % ring.len();
            while i != to {
                out.push(ring[i]);
                i = (i + 1) % ring.len();
            }
            out
        };
        let left: Vec<usize> = side(inx, ip)
            .into_iter()
            .filter(|w| !on_alpha.contains(w) && !used.contains(w))
            .collect();
        let right: HashSet<usize> = side(ip, inx)
            .into_iter()
            .filter(|w| !on_alpha.contains(w) && !used.contains(w))
            .collect();
        if left.is_empty() || right.is_empty() {
            continue;
        }

        // BFS from the left set to the right set avoiding α and used vertices.
        let n = mesh.n_vertices();
        let mut pred = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for &s in &left {
            if !seen[s] {
                seen[s] = true;
                pred[s] = s;
                queue.push_back(s);
            }
        }
        let mut hit = None;
        'bfs: while let Some(x) = queue.pop_front() {
            if right.contains(&x) {
                hit = Some(x);
                break 'bfs;
            }
            for &w in mesh.one_ring(x) {
                if !seen[w] && !on_alpha.contains(&w) && !used.contains(&w) {
                    seen[w] = true;
                    pred[w] = x;
                    queue.push_back(w);
                }
            }
        }
        let Some(hit) = hit else { continue };
        let mut path = vec![hit];
        let mut x = hit;
        while pred[x] != x {
            x = pred[x];
            path.push(x);
        }
        // path runs right→left; prepend v so the cycle is v, left…, right.
        path.push(v);
        path.reverse();
        return Some((path, v));
    }
    None
}

/// Attach left fans and geodesic curvature to an ordered vertex cycle.
pub fn make_loop(mesh: &Mesh, vertices: Vec<usize>) -> HomologyLoop {
    let m = vertices.len();
    let mut left_fans = Vec::with_capacity(m);
    let mut k_g = Vec::with_capacity(m);
    for j in 0..m {
        let v = vertices[j];
        let prev = vertices[(j + m - 1) % m];
        let next = vertices[(j + 1) % m];
        let fan = mesh.fan_faces(v, next, prev);
        let angle_sum: f64 = fan.iter().map(|&f| mesh.angle_at(f, v)).sum();
        k_g.push(std::f64::consts::PI - angle_sum);
        left_fans.push(fan);
    }
    HomologyLoop { vertices, left_fans, k_g }
}
