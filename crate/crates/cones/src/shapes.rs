//! Procedural test surfaces: cube, icospheres, tori (embedded and intrinsic
//! flat), disks, caps, and a bumpy blob. Shared between the test suites and
//! the benchmarks.

use std::collections::HashMap;

use crate::mesh::Mesh;

/// Regular tetrahedron.
pub fn tetrahedron() -> Mesh {
    let positions = vec![
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let faces = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
    Mesh::new(positions, faces).expect("tetrahedron")
}

/// Axis-aligned cube surface, each side an n×n quad grid split into
/// triangles; corners and edges are preserved exactly. n = 10 gives 602
/// vertices.
pub fn cube(n: usize) -> Mesh {
    assert!(n >= 1);
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut index: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let scale = n as f64;
    let mut vertex = |p: [f64; 3]| -> usize {
        let key = (
            (p[0] * scale).round() as i64,
            (p[1] * scale).round() as i64,
            (p[2] * scale).round() as i64,
        );
        *index.entry(key).or_insert_with(|| {
            positions.push(p);
            positions.len() - 1
        })
    };
    // Each side: origin corner + two edge directions, oriented outward.
    let sides: [([f64; 3], [f64; 3], [f64; 3]); 6] = [
        ([-1.0, -1.0, 1.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]), // +z
        ([1.0, -1.0, -1.0], [-2.0, 0.0, 0.0], [0.0, 2.0, 0.0]), // −z
        ([-1.0, 1.0, -1.0], [0.0, 0.0, 2.0], [2.0, 0.0, 0.0]), // +y
        ([-1.0, -1.0, -1.0], [2.0, 0.0, 0.0], [0.0, 0.0, 2.0]), // −y
        ([1.0, -1.0, -1.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]), // +x
        ([-1.0, -1.0, -1.0], [0.0, 0.0, 2.0], [0.0, 2.0, 0.0]), // −x
    ];
    for (origin, du, dv) in sides {
        let at = |i: usize, j: usize| -> [f64; 3] {
            let (s, t) = (i as f64 / n as f64, j as f64 / n as f64);
            [
                origin[0] + s * du[0] + t * dv[0],
                origin[1] + s * du[1] + t * dv[1],
                origin[2] + s * du[2] + t * dv[2],
            ]
        };
        for i in 0..n {
            for j in 0..n {
                let a = vertex(at(i, j));
                let b = vertex(at(i + 1, j));
                let c = vertex(at(i + 1, j + 1));
                let d = vertex(at(i, j + 1));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
    }
    Mesh::new(positions, faces).expect("cube")
}

/// Icosphere with `subdiv` midpoint subdivisions: 10·4^s + 2 vertices
/// (s = 3 → 642, 4 → 2562, 5 → 10242, 6 → 40962).
pub fn icosphere(subdiv: usize) -> Mesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut positions: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for p in &mut positions {
        normalize(p);
    }
    for _ in 0..subdiv {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let mut p = [
                        (positions[a][0] + positions[b][0]) / 2.0,
                        (positions[a][1] + positions[b][1]) / 2.0,
                        (positions[a][2] + positions[b][2]) / 2.0,
                    ];
                    normalize(&mut p);
                    positions.push(p);
                    positions.len() - 1
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }
    Mesh::new(positions, faces).expect("icosphere")
}

fn normalize(p: &mut [f64; 3]) {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    p[0] /= n;
    p[1] /= n;
    p[2] /= n;
}

fn grid_torus_faces(nx: usize, ny: usize) -> Vec<[usize; 3]> {
    let mut faces = Vec::with_capacity(2 * nx * ny);
    let at = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    faces
}

/// Genus-1 grid torus with a prescribed *flat* metric: axis edges of length 1,
/// diagonals √2. The embedding coordinates are only for visualization.
pub fn flat_grid_torus(nx: usize, ny: usize) -> Mesh {
    assert!(nx >= 3 && ny >= 3);
    let faces = grid_torus_faces(nx, ny);
    let positions = torus_positions(nx, ny, 2.0, 0.7, 0.0);
    let mut lengths: HashMap<(usize, usize), f64> = HashMap::new();
    let at = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    for j in 0..ny {
        for i in 0..nx {
            let a = at(i, j);
            lengths.insert(key(a, at(i + 1, j)), 1.0);
            lengths.insert(key(a, at(i, j + 1)), 1.0);
            lengths.insert(key(a, at(i + 1, j + 1)), 2.0f64.sqrt());
        }
    }
    Mesh::with_metric(positions, faces, &lengths).expect("flat grid torus")
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn torus_positions(nx: usize, ny: usize, big_r: f64, small_r: f64, bump: f64) -> Vec<[f64; 3]> {
    let mut positions = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / nx as f64;
            let phi = 2.0 * std::f64::consts::PI * j as f64 / ny as f64;
            let r = small_r * (1.0 + bump * (3.0 * theta).sin() * (2.0 * phi).cos());
            let w = big_r + r * phi.cos();
            positions.push([w * theta.cos(), w * theta.sin(), r * phi.sin()]);
        }
    }
    positions
}

/// Embedded (curved) torus of revolution; `bump > 0` deforms the tube radius
/// so the intrinsic metric is not flat.
pub fn embedded_torus(nx: usize, ny: usize, bump: f64) -> Mesh {
    let faces = grid_torus_faces(nx, ny);
    Mesh::new(torus_positions(nx, ny, 2.0, 0.7, bump), faces).expect("embedded torus")
}

/// Flat triangulated unit disk: center vertex plus `rings` concentric rings
/// (ring k has 6k vertices).
pub fn disk(rings: usize) -> Mesh {
    assert!(rings >= 1);
    let mut positions = vec![[0.0, 0.0, 0.0]];
    let mut ring_start = vec![0usize; rings + 1];
    for k in 1..=rings {
        ring_start[k] = positions.len();
        let m = 6 * k;
        for s in 0..m {
            let t = 2.0 * std::f64::consts::PI * s as f64 / m as f64;
            let r = k as f64 / rings as f64;
            positions.push([r * t.cos(), r * t.sin(), 0.0]);
        }
    }
    let mut faces = Vec::new();
    // Innermost fan.
    for s in 0..6 {
        faces.push([0, 1 + s, 1 + (s + 1) % 6]);
    }
    // Ring k−1 to ring k strips, stitched per hexagon sector: k outer edges
    // face k−1 inner edges.
    for k in 2..=rings {
        let (inner, outer) = (ring_start[k - 1], ring_start[k]);
        let (mi, mo) = (6 * (k - 1), 6 * k);
        for s in 0..6 {
            let o = |t: usize| outer + (s * k + t) % mo;
            let i = |t: usize| inner + (s * (k - 1) + t) % mi;
            for t in 0..k - 1 {
                faces.push([o(t), o(t + 1), i(t)]);
                faces.push([i(t), o(t + 1), i(t + 1)]);
            }
            faces.push([o(k - 1), o(k), i(k - 1)]);
        }
    }
    Mesh::new(positions, faces).expect("disk")
}

/// Spherical cap (boundary at the rim): polar grid on the unit sphere down to
/// `max_polar` radians (π/2 = hemisphere).
pub fn spherical_cap(rings: usize, max_polar: f64) -> Mesh {
    assert!(rings >= 1);
    let mut positions = vec![[0.0, 0.0, 1.0]];
    let mut ring_start = vec![0usize; rings + 1];
    for k in 1..=rings {
        ring_start[k] = positions.len();
        let m = 6 * k;
        let polar = max_polar * k as f64 / rings as f64;
        for s in 0..m {
            let t = 2.0 * std::f64::consts::PI * s as f64 / m as f64;
            positions.push([
                polar.sin() * t.cos(),
                polar.sin() * t.sin(),
                polar.cos(),
            ]);
        }
    }
    // Same connectivity as the disk.
    let flat = disk(rings);
    Mesh::new(positions, flat.faces().to_vec()).expect("spherical cap")
}

/// Closed genus-0 "organic" blob: a UV sphere with smooth radial bumps.
/// `rows = cols = 70` gives 4832 vertices.
pub fn blob(rows: usize, cols: usize) -> Mesh {
    assert!(rows >= 3 && cols >= 3);
    let radius = |polar: f64, azimuth: f64| -> f64 {
        1.0 + 0.25 * (3.0 * polar).sin() * (2.0 * azimuth).cos()
            + 0.15 * (5.0 * azimuth).sin() * (2.0 * polar).cos()
    };
    let mut positions = vec![[0.0, 0.0, radius(0.0, 0.0)]];
    for j in 1..rows {
        let polar = std::f64::consts::PI * j as f64 / rows as f64;
        for i in 0..cols {
            let azimuth = 2.0 * std::f64::consts::PI * i as f64 / cols as f64;
            let r = radius(polar, azimuth);
            positions.push([
                r * polar.sin() * azimuth.cos(),
                r * polar.sin() * azimuth.sin(),
                r * polar.cos(),
            ]);
        }
    }
    let south = positions.len();
    positions.push([0.0, 0.0, -radius(std::f64::consts::PI, 0.0)]);

    let at = |j: usize, i: usize| 1 + (j - 1) * cols + (i % cols);
    let mut faces = Vec::new();
    for i in 0..cols {
        faces.push([0, at(1, i), at(1, i + 1)]);
    }
    for j in 1..rows - 1 {
        for i in 0..cols {
            let (a, b, c, d) = (at(j, i), at(j + 1, i), at(j + 1, i + 1), at(j, i + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for i in 0..cols {
        faces.push([south, at(rows - 1, i + 1), at(rows - 1, i)]);
    }
    Mesh::new(positions, faces).expect("blob")
}
