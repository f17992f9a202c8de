//! Triangle mesh with adjacency and the discrete differential quantities
//! (angle defects, cotangent Laplacian, area weights) consumed everywhere else.
//!
//! Geometry is derived from edge lengths. By default lengths come from the
//! embedded vertex positions; a prescribed metric can be supplied instead,
//! which is how the flat torus test surfaces are built.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseSym;

const DEGENERATE_REL_AREA: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Mesh {
    positions: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_ids: HashMap<(usize, usize), usize>,
    /// Ordered one-ring neighbors, CCW (face orientation). Cyclic for interior
    /// vertices, open chain for boundary vertices.
    one_rings: Vec<Vec<usize>>,
    /// ring_faces[v][k] is the face (v, ring[k], ring[k+1]); for interior
    /// vertices the list wraps around.
    ring_faces: Vec<Vec<usize>>,
    boundary: Vec<bool>,
    edge_len: Vec<f64>,
    corner_angle: Vec<[f64; 3]>,
    face_area: Vec<f64>,
}

/// Per-vertex angle defects and area weights.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    /// Angle defect: 2π − Σ incident angles (interior), π − Σ (boundary).
    pub k_ori: Vec<f64>,
    /// Normalized vertex areas, Σ = 1.
    pub area_weights: Vec<f64>,
    pub vertex_areas: Vec<f64>,
}

impl Mesh {
    pub fn new(positions: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::build(positions, faces, None)
    }

    /// Construct with prescribed edge lengths instead of lengths measured from
    /// the embedding. `lengths` maps an undirected vertex pair to its metric
    /// length.
    pub fn with_metric(
        positions: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
        lengths: &HashMap<(usize, usize), f64>,
    ) -> Result<Self> {
        Self::build(positions, faces, Some(lengths))
    }

    fn build(
        positions: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
        metric: Option<&HashMap<(usize, usize), f64>>,
    ) -> Result<Self> {
        let n = positions.len();
        if n == 0 || faces.is_empty() {
            return Err(Error::InvalidInput("empty mesh".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("face {fi} references vertex {v} out of range"),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!("face {fi} repeats a vertex")));
            }
        }

        // Directed edges: each must appear at most once, or orientation is
        // inconsistent / the mesh is non-manifold.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if directed.insert((a, b), fi).is_some() {
                    return Err(Error::Topology(format!(
                        "directed edge ({a},{b}) appears in more than one face"
                    )));
                }
            }
        }

        // Undirected edge list.
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        for &(a, b) in directed.keys() {
            let key = (a.min(b), a.max(b));
            if !edge_ids.contains_key(&key) {
                edge_ids.insert(key, edges.len());
                edges.push([key.0, key.1]);
            }
        }
        edges.sort_unstable();
        edge_ids.clear();
        for (i, e) in edges.iter().enumerate() {
            edge_ids.insert((e[0], e[1]), i);
        }

        let mut boundary = vec![false; n];
        for e in &edges {
            let fwd = directed.contains_key(&(e[0], e[1]));
            let bwd = directed.contains_key(&(e[1], e[0]));
            if !(fwd && bwd) {
                boundary[e[0]] = true;
                boundary[e[1]] = true;
            }
        }

        // Ordered one-rings from the `w -> x` successor map induced by face
        // corners (v, w, x).
        let mut succ: Vec<HashMap<usize, (usize, usize)>> = vec![HashMap::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (v, w, x) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                if succ[v].insert(w, (x, fi)).is_some() {
                    return Err(Error::Topology(format!(
                        "non-manifold fan at vertex {v}"
                    )));
                }
            }
        }
        let mut one_rings = vec![Vec::new(); n];
        let mut ring_faces = vec![Vec::new(); n];
        for v in 0..n {
            if succ[v].is_empty() {
                return Err(Error::Topology(format!("isolated vertex {v}")));
            }
            let start = if boundary[v] {
                // Unique neighbor with no incoming successor.
                let image: std::collections::HashSet<usize> =
                    succ[v].values().map(|&(x, _)| x).collect();
                let mut starts: Vec<usize> =
                    succ[v].keys().copied().filter(|w| !image.contains(w)).collect();
                starts.sort_unstable();
                if starts.len() != 1 {
                    return Err(Error::Topology(format!(
                        "non-manifold boundary fan at vertex {v}"
                    )));
                }
                starts[0]
            } else {
                *succ[v].keys().min().unwrap()
            };
            let mut ring = vec![start];
            let mut rf = Vec::new();
            let mut cur = start;
            loop {
                match succ[v].get(&cur) {
                    Some(&(nxt, fi)) => {
                        rf.push(fi);
                        if nxt == start {
                            break; // interior: closed cycle
                        }
                        ring.push(nxt);
                        cur = nxt;
                    }
                    None => break, // boundary: open chain ends
                }
            }
            let expected = succ[v].len() + if boundary[v] { 1 } else { 0 };
            if ring.len() != expected {
                return Err(Error::Topology(format!(
                    "vertex {v} has a disconnected fan (non-manifold)"
                )));
            }
            one_rings[v] = ring;
            ring_faces[v] = rf;
        }

        // Connectivity.
        {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            let mut count = 1;
            while let Some(v) = queue.pop_front() {
                for &w in &one_rings[v] {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        queue.push_back(w);
                    }
                }
            }
            if count != n {
                return Err(Error::Topology(format!(
                    "mesh is disconnected ({count} of {n} vertices reachable)"
                )));
            }
        }

        // Metric quantities.
        let edge_len: Vec<f64> = edges
            .iter()
            .map(|e| match metric {
                Some(m) => m
                    .get(&(e[0], e[1]))
                    .or_else(|| m.get(&(e[1], e[0])))
                    .copied()
                    .ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "metric missing edge ({}, {})",
                            e[0], e[1]
                        ))
                    }),
                None => {
                    let (p, q) = (positions[e[0]], positions[e[1]]);
                    Ok(dist3(p, q))
                }
            })
            .collect::<Result<_>>()?;

        let scale2 = edge_len.iter().fold(0.0f64, |m, &l| m.max(l * l));
        let mut corner_angle = vec![[0.0; 3]; faces.len()];
        let mut face_area = vec![0.0; faces.len()];
        for (fi, f) in faces.iter().enumerate() {
            let l = [
                edge_len[edge_ids[&key(f[1], f[2])]],
                edge_len[edge_ids[&key(f[2], f[0])]],
                edge_len[edge_ids[&key(f[0], f[1])]],
            ];
            let area = heron(l[0], l[1], l[2]).ok_or(Error::DegenerateFace {
                face: fi,
                area: 0.0,
            })?;
            if area < DEGENERATE_REL_AREA * scale2 {
                return Err(Error::DegenerateFace { face: fi, area });
            }
            face_area[fi] = area;
            for k in 0..3 {
                // angle at corner k is opposite edge l[k]
                let (a, b, c) = (l[k], l[(k + 1) % 3], l[(k + 2) % 3]);
                let cos = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0);
                corner_angle[fi][k] = cos.acos();
            }
        }

        Ok(Mesh {
            positions,
            faces,
            edges,
            edge_ids,
            one_rings,
            ring_faces,
            boundary,
            edge_len,
            corner_angle,
            face_area,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }
    pub fn has_boundary(&self) -> bool {
        self.boundary.iter().any(|&b| b)
    }
    pub fn one_ring(&self, v: usize) -> &[usize] {
        &self.one_rings[v]
    }
    pub fn ring_faces(&self, v: usize) -> &[usize] {
        &self.ring_faces[v]
    }
    pub fn face_area(&self, f: usize) -> f64 {
        self.face_area[f]
    }
    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids.get(&key(a, b)).copied()
    }
    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        self.edge_len[self.edge_ids[&key(a, b)]]
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Corner index of vertex `v` inside face `f`.
    pub fn corner_of(&self, f: usize, v: usize) -> usize {
        let face = self.faces[f];
        face.iter().position(|&w| w == v).expect("vertex not in face")
    }

    /// Angle at vertex `v` inside face `f`.
    pub fn angle_at(&self, f: usize, v: usize) -> f64 {
        self.corner_angle[f][self.corner_of(f, v)]
    }

    /// Faces of the fan at `v` from neighbor `from` to neighbor `to`,
    /// walking in ring (CCW) order. Both neighbors must be in the one-ring.
    pub fn fan_faces(&self, v: usize, from: usize, to: usize) -> Vec<usize> {
        let ring = &self.one_rings[v];
        let m = ring.len();
        let start = ring.iter().position(|&w| w == from).expect("not a neighbor");
        let mut out = Vec::new();
        let mut i = start;
        loop {
            if ring[i] == to {
                break;
            }
            assert!(
                i < self.ring_faces[v].len(),
                "fan walk fell off an open boundary ring"
            );
            out.push(self.ring_faces[v][i]);
            i = (i + 1) % m;
            assert!(i != start, "fan walk did not terminate");
        }
        out
    }

    /// Angle defect per vertex (discrete Gaussian curvature).
    pub fn angle_defects(&self) -> Vec<f64> {
        let n = self.n_vertices();
        let mut sums = vec![0.0; n];
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                sums[f[k]] += self.corner_angle[fi][k];
            }
        }
        (0..n)
            .map(|v| {
                let full = if self.boundary[v] {
                    std::f64::consts::PI
                } else {
                    2.0 * std::f64::consts::PI
                };
                full - sums[v]
            })
            .collect()
    }

    /// Normalized vertex area weights plus raw areas and defects.
    pub fn curvature(&self) -> CurvatureData {
        let n = self.n_vertices();
        let mut areas = vec![0.0; n];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                areas[v] += self.face_area[fi] / 3.0;
            }
        }
        let total: f64 = areas.iter().sum();
        CurvatureData {
            k_ori: self.angle_defects(),
            area_weights: areas.iter().map(|a| a / total).collect(),
            vertex_areas: areas,
        }
    }

    /// Cotangent Laplacian, positive semidefinite convention
    /// (diagonal positive, off-diagonals −(cot α + cot β)/2).
    pub fn cotan_laplacian(&self) -> Result<SparseSym> {
        let mut triplets = Vec::with_capacity(self.faces.len() * 12);
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (f[(k + 1) % 3], f[(k + 2) % 3]);
                let w = 0.5 / self.corner_angle[fi][k].tan();
                triplets.push((i, j, -w));
                triplets.push((j, i, -w));
                triplets.push((i, i, w));
                triplets.push((j, j, w));
            }
        }
        SparseSym::assemble(&triplets, self.n_vertices())
    }

    /// Genus and number of boundary loops.
    pub fn genus(&self) -> (usize, usize) {
        let chi = self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64;
        let loops = self.boundary_loops().len();
        let g = (2 - loops as i64 - chi) / 2;
        (g.max(0) as usize, loops)
    }

    /// Boundary loops as vertex cycles.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        // boundary successor: last ring neighbor -> v is a boundary edge; walk
        // v -> first ring neighbor.
        let mut loops = Vec::new();
        let mut seen = vec![false; self.n_vertices()];
        for v0 in 0..self.n_vertices() {
            if !self.boundary[v0] || seen[v0] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut v = v0;
            loop {
                seen[v] = true;
                cycle.push(v);
                let next = *self.one_rings[v].first().unwrap();
                if next == v0 {
                    break;
                }
                v = next;
            }
            loops.push(cycle);
        }
        loops
    }

    /// Unweighted shortest edge count between `a` and `b`, early exit past
    /// `cap`; `None` means the distance exceeds the cap.
    pub fn bfs_edge_distance(&self, a: usize, b: usize, cap: usize) -> Result<Option<usize>> {
        let n = self.n_vertices();
        if a >= n || b >= n {
            return Err(Error::InvalidInput(format!("vertex id out of range ({a}, {b})")));
        }
        if a == b {
            return Ok(Some(0));
        }
        let mut dist = vec![usize::MAX; n];
        dist[a] = 0;
        let mut queue = VecDeque::from([a]);
        while let Some(v) = queue.pop_front() {
            if dist[v] >= cap {
                return Ok(None);
            }
            for &w in &self.one_rings[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    if w == b {
                        return Ok(Some(dist[w]));
                    }
                    queue.push_back(w);
                }
            }
        }
        Ok(None)
    }

    /// BFS distances from a source set; unreachable stays usize::MAX.
    pub fn multi_source_distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] == usize::MAX {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.one_rings[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn dist3(p: [f64; 3], q: [f64; 3]) -> f64 {
    let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Numerically stable Heron formula (Kahan). Returns None for invalid
/// (non-triangle-inequality) length triples.
fn heron(a: f64, b: f64, c: f64) -> Option<f64> {
    let mut l = [a, b, c];
    l.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let (a, b, c) = (l[0], l[1], l[2]);
    if c - (a - b) < 0.0 {
        return None;
    }
    let t = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    Some(0.25 * t.max(0.0).sqrt())
}

/// Load an ASCII OBJ (`v x y z`, `f i j k`, 1-based indices; other records
/// ignored). Triangles only.
pub fn load_obj<P: AsRef<Path>>(path: P) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|s| {
                        s.parse().map_err(|_| Error::Parse {
                            line: lineno,
                            msg: format!("bad coordinate '{s}'"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "vertex needs 3 coordinates".into(),
                    });
                }
                positions.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| {
                        let first = s.split('/').next().unwrap_or(s);
                        let i: i64 = first.parse().map_err(|_| Error::Parse {
                            line: lineno,
                            msg: format!("bad face index '{s}'"),
                        })?;
                        if i < 1 || i as usize > positions.len() {
                            return Err(Error::Parse {
                                line: lineno,
                                msg: format!("face index {i} out of range"),
                            });
                        }
                        Ok(i as usize - 1)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("non-triangle face with {} vertices", idx.len()),
                    });
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {} // ignore other records
        }
    }
    Mesh::new(positions, faces)
}
