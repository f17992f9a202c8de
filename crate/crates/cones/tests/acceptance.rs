//! Acceptance gate: one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::collections::HashSet;
use std::f64::consts::PI;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

use cones::driver::{run_pipeline, Config};
use cones::highgenus::{assemble_system, cut_mesh, solve_holonomy};
use cones::homology::homology_loops;
use cones::mesh::Mesh;
use cones::miqp::{branch_and_bound, ElimInfo, ReducedQP};
use cones::relocate::{move_cones, propose_moves, solve_adjoint};
use cones::shapes;
use cones::sparse::PinnedSystem;
use cones::state::PipelineState;
use cones::yamabe::{scaled_distortion, Cone, ConeState, ConformalSystem, ReducedMap, HALF_PI};
use common::{dense_pinned_solve, euler_characteristic, max_abs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Run a criterion body, printing exactly one ACCEPTANCE line.
fn criterion<F: FnOnce() + std::panic::UnwindSafe>(n: usize, body: F) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("ACCEPTANCE {n}: PASS"),
        Err(e) => {
            println!("ACCEPTANCE {n}: FAIL");
            resume_unwind(e);
        }
    }
}

fn corner_vertices(mesh: &Mesh) -> Vec<usize> {
    (0..mesh.n_vertices())
        .filter(|&v| mesh.positions()[v].iter().all(|c| c.abs() > 1.0 - 1e-9))
        .collect()
}

#[test]
fn acceptance_01_cube_exact_flat() {
    criterion(1, || {
        let mesh = shapes::cube(10); // 602 vertices
        let corners: HashSet<usize> = corner_vertices(&mesh).into_iter().collect();
        assert_eq!(corners.len(), 8);
        let start = Instant::now();
        let report = run_pipeline(mesh, &Config::default()).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        assert!(elapsed <= 5.0, "took {elapsed:.2}s");
        assert!(report.distortion <= 1e-6, "E = {}", report.distortion);
        let active: Vec<(usize, i64)> =
            report.cones.iter().copied().filter(|&(_, z)| z != 0).collect();
        assert_eq!(active.len(), 8);
        for (v, z) in active {
            assert_eq!(z, 1, "corner multiplier");
            assert!(corners.contains(&v), "cone off-corner at {v}");
        }
    });
}

#[test]
fn acceptance_02_gauss_bonnet_audits() {
    criterion(2, || {
        // Σ k_ori = 2πχ on every test mesh.
        let meshes: Vec<(&str, Mesh)> = vec![
            ("tetrahedron", shapes::tetrahedron()),
            ("cube", shapes::cube(10)),
            ("icosphere", shapes::icosphere(3)),
            ("flat torus", shapes::flat_grid_torus(8, 8)),
            ("embedded torus", shapes::embedded_torus(16, 12, 0.3)),
            ("disk", shapes::disk(5)),
            ("cap", shapes::spherical_cap(5, PI / 2.0)),
            ("blob", shapes::blob(40, 40)),
        ];
        for (name, mesh) in meshes {
            let total: f64 = mesh.angle_defects().iter().sum();
            let expect = 2.0 * PI * euler_characteristic(&mesh) as f64;
            assert!(
                (total - expect).abs() <= 1e-9 * expect.abs().max(1.0),
                "{name}: Σk = {total} vs {expect}"
            );
        }
        // Σ z = 8(1−g) at every pipeline event on closed meshes.
        for (mesh, g) in [
            (shapes::cube(8), 0usize),
            (shapes::icosphere(3), 0),
            (shapes::flat_grid_torus(8, 8), 1),
        ] {
            let report = run_pipeline(mesh, &Config::default()).unwrap();
            let want = 8 * (1 - g as i64);
            for t in &report.trace {
                // The very first events may predate the first angle solve.
                if t.event == "init" && t.sum_z == 0 && want != 0 {
                    continue;
                }
                assert_eq!(t.sum_z, want, "event {} at iter {}", t.event, t.iteration);
            }
        }
    });
}

#[test]
fn acceptance_03_reduced_solve_correctness() {
    criterion(3, || {
        let mesh = shapes::icosphere(3); // closest dyadic size to 1k vertices
        let n = mesh.n_vertices();
        let l = mesh.cotan_laplacian().unwrap();
        let curv = mesh.curvature();
        let pin = 0usize;
        let sys = ConformalSystem::new_closed(&l, pin).unwrap();
        let direct = PinnedSystem::new(&l, pin).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..20 {
            let mut cones = ConeState::new(pin);
            let count = rng.gen_range(4..=12);
            while cones.cones.len() < count {
                let v = rng.gen_range(1..n);
                if !cones.has_cone_at(v) {
                    cones.cones.push(Cone { vertex: v, z: rng.gen_range(-1i64..=1) });
                }
            }
            let map = ReducedMap::build(&sys, &cones, &curv.k_ori, false);
            let z: Vec<i64> = cones.cones.iter().map(|c| c.z).collect();
            let r = map.residual(&z);
            let (e, a) = scaled_distortion(&r, &curv.area_weights, true);
            let u = map.u(&z, a);
            // Masked Yamabe residual.
            let res = cones::yamabe::yamabe_residual(&l, &u, &cones, &curv.k_ori, &[pin]);
            assert!(res <= 1e-8, "residual {res}");
            // Direct pinned solve oracle.
            let mut rhs: Vec<f64> = curv.k_ori.iter().map(|k| -k).collect();
            for c in &cones.cones {
                rhs[c.vertex] += HALF_PI * c.z as f64;
            }
            let ud = direct.solve(&rhs);
            let (ed, _) = scaled_distortion(&ud, &curv.area_weights, true);
            assert!((e - ed).abs() <= 1e-10, "E {e} vs direct {ed}");
        }
    });
}

#[test]
fn acceptance_04_miqp_optimality() {
    criterion(4, || {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let instance = |dim: usize, bound: i64, rng: &mut ChaCha8Rng| -> ReducedQP {
            let m: Vec<Vec<f64>> = (0..dim)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let mut h = vec![vec![0.0; dim]; dim];
            for i in 0..dim {
                for j in 0..dim {
                    h[i][j] = (0..dim).map(|k| m[k][i] * m[k][j]).sum();
                }
            }
            let with_sum = rng.gen_bool(0.5);
            ReducedQP {
                h,
                g: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                c0: 0.0,
                lo: vec![-bound; dim],
                hi: vec![bound; dim],
                elim: with_sum.then(|| ElimInfo {
                    target: rng.gen_range(-2..=2),
                    lo: -bound,
                    hi: bound,
                }),
            }
        };
        let enumerate = |qp: &ReducedQP| -> Option<f64> {
            let dim = qp.dim();
            let mut best: Option<f64> = None;
            let mut y = qp.lo.clone();
            loop {
                if qp.feasible(&y) {
                    let v = qp.objective(&y);
                    if best.map_or(true, |b| v < b) {
                        best = Some(v);
                    }
                }
                let mut k = 0;
                loop {
                    if k == dim {
                        return best;
                    }
                    y[k] += 1;
                    if y[k] <= qp.hi[k] {
                        break;
                    }
                    y[k] = qp.lo[k];
                    k += 1;
                }
            }
        };
        for trial in 0..60 {
            let qp = if trial < 50 {
                instance(rng.gen_range(2..=8), 1, &mut rng)
            } else {
                instance(rng.gen_range(2..=5), 3, &mut rng)
            };
            let start = Instant::now();
            let got = branch_and_bound(&qp, None);
            assert!(start.elapsed().as_secs_f64() <= 1.0, "trial {trial} too slow");
            match (enumerate(&qp), got) {
                (Some(want), Ok(res)) => {
                    assert_eq!(res.objective, want, "trial {trial}");
                    assert_eq!(qp.objective(&res.y), want);
                }
                (None, Err(_)) => {}
                (w, g) => panic!("trial {trial}: {w:?} vs {g:?}"),
            }
        }
    });
}

#[test]
fn acceptance_05_monotonicity_suite() {
    criterion(5, || {
        let mut cfg = Config::default();
        cfg.epsilon_tar = 0.05; // exercise several iterations
        // Cap the loop before the active set saturates: at tight targets the
        // reduced solves hit the node budget, which is correct but slow.
        cfg.max_iter = 25;
        for (name, mesh) in [
            ("cube", shapes::cube(10)),
            ("icosphere", shapes::icosphere(3)),
            ("blob", shapes::blob(70, 70)), // ~5k vertices, organic
        ] {
            let report = run_pipeline(mesh, &cfg).unwrap();
            let mut prev_e = f64::INFINITY;
            let mut prev_eta = cfg.eta0;
            let mut expected_eta = cfg.eta0;
            for t in &report.trace {
                match t.event {
                    "solve-angles" | "move" => {
                        assert!(
                            t.e <= prev_e + 1e-12 * (1.0 + prev_e),
                            "{name}: E rose at {} ({} -> {})",
                            t.event,
                            prev_e,
                            t.e
                        );
                    }
                    "remove" => {
                        if t.e > prev_e && prev_e > 0.0 {
                            let rel = (t.e - prev_e) / prev_e;
                            assert!(rel < prev_eta, "{name}: removal increase {rel} ≥ η {prev_eta}");
                        }
                        // η decays by exactly 0.9 per accepted removal.
                        let decays = (t.eta / expected_eta).ln() / 0.9f64.ln();
                        assert!(
                            (decays - decays.round()).abs() < 1e-9 && decays >= -1e-9,
                            "{name}: η {} is not η0·0.9^k",
                            t.eta
                        );
                        expected_eta = t.eta;
                    }
                    _ => {}
                }
                prev_e = t.e;
                prev_eta = t.eta;
            }
        }
    });
}

#[test]
fn acceptance_06_adjoint_correctness() {
    criterion(6, || {
        for mesh in [shapes::icosphere(2), shapes::tetrahedron(), shapes::cube(5)] {
            assert!(mesh.n_vertices() <= 500);
            let l = mesh.cotan_laplacian().unwrap();
            let curv = mesh.curvature();
            let pin = 0usize;
            let sys = ConformalSystem::new_closed(&l, pin).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(606);
            let mut u: Vec<f64> =
                (0..l.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean: f64 = u.iter().zip(&curv.area_weights).map(|(x, w)| w * x).sum();
            for x in &mut u {
                *x -= mean;
            }
            let h = solve_adjoint(&sys, &u, &curv.area_weights).unwrap();
            // Masked residual ‖M(L h − 2 Â u)‖∞ (weak form of Δh = −2u with the
            // positive-semidefinite Laplacian) against the dense oracle.
            let lh = l.mul_vec(&h);
            for v in 0..l.n() {
                if v == pin {
                    continue;
                }
                let r = lh[v] - 2.0 * curv.area_weights[v] * u[v];
                assert!(r.abs() <= 1e-8, "residual {r}");
            }
            let rhs: Vec<f64> =
                u.iter().zip(&curv.area_weights).map(|(x, w)| 2.0 * w * x).collect();
            let hd = dense_pinned_solve(&l, pin, &rhs);
            let diff: Vec<f64> = h.iter().zip(&hd).map(|(a, b)| a - b).collect();
            assert!(max_abs(&diff) <= 1e-8, "dense mismatch {}", max_abs(&diff));
        }

        // Ranking invariance under h → h + c.
        let mesh = shapes::icosphere(3);
        let l = mesh.cotan_laplacian().unwrap();
        let curv = mesh.curvature();
        let sys = ConformalSystem::new_closed(&l, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(607);
        let mut cones = ConeState::new(0);
        while cones.n_c() < 8 {
            let v = rng.gen_range(1..mesh.n_vertices());
            if !cones.has_cone_at(v) {
                cones.cones.push(Cone { vertex: v, z: 1 });
            }
        }
        let state =
            PipelineState::new(mesh, l, curv, sys, cones, Some(8), (-1, 1), false).unwrap();
        let u = state.u.clone();
        let h = solve_adjoint(&state.sys, &u, &state.curv.area_weights).unwrap();
        let shifted: Vec<f64> = h.iter().map(|x| x + 12.5).collect();
        let p1 = propose_moves(&state, &u, &h);
        let p2 = propose_moves(&state, &u, &shifted);
        assert_eq!(p1.len(), p2.len());
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!((a.cone, a.target), (b.cone, b.target), "ranking changed");
        }
    });
}

#[test]
fn acceptance_07_gradient_predictiveness() {
    criterion(7, || {
        let build = || -> PipelineState {
            let mesh = shapes::icosphere(3);
            let l = mesh.cotan_laplacian().unwrap();
            let curv = mesh.curvature();
            let pin = 0usize;
            let sys = ConformalSystem::new_closed(&l, pin).unwrap();
            // Seeded off-optimum configuration: 8 fixed z = 1 cones.
            let mut rng = ChaCha8Rng::seed_from_u64(707);
            let mut cones = ConeState::new(pin);
            while cones.n_c() < 8 {
                let v = rng.gen_range(1..mesh.n_vertices());
                if !cones.has_cone_at(v) {
                    cones.cones.push(Cone { vertex: v, z: 1 });
                }
            }
            PipelineState::new(mesh, l, curv, sys, cones, Some(8), (-1, 1), false).unwrap()
        };

        // Corrected adjoint: predictive and effective.
        let mut state = build();
        let initial: HashSet<usize> = state.cones.cones.iter().map(|c| c.vertex).collect();
        let e0 = state.e;
        let stats = move_cones(&mut state, false).unwrap();
        let singles: Vec<_> = stats.records.iter().filter(|r| !r.simultaneous).collect();
        if !singles.is_empty() {
            let good = singles.iter().filter(|r| r.delta_e < 0.0).count();
            let frac = good as f64 / singles.len() as f64;
            assert!(frac >= 0.70, "only {frac:.2} of single hops decreased E");
        }
        for r in &stats.records {
            if !r.accepted {
                assert!(
                    state.cones.cones.iter().all(|c| c.vertex != r.target)
                        || initial.contains(&r.target)
                        || r.simultaneous,
                    "rejected hop was applied"
                );
            }
        }
        assert!(state.e < e0, "corrected adjoint failed to move cones");
        let moved = state.cones.cones.iter().filter(|c| !initial.contains(&c.vertex)).count();
        assert!(moved >= 1, "no cone moved under the corrected adjoint");

        // Legacy variant (h pinned to zero at the cones): at least one cone
        // stays stuck at its seed vertex.
        let mut legacy = build();
        move_cones(&mut legacy, true).unwrap();
        let stuck = legacy.cones.cones.iter().filter(|c| initial.contains(&c.vertex)).count();
        assert!(stuck >= 1, "legacy adjoint unexpectedly moved every cone");
        assert!(moved >= 8 - stuck || state.e <= legacy.e + 1e-12,
            "corrected adjoint should do at least as well as the legacy one");
    });
}

#[test]
fn acceptance_08_boundary_modes() {
    criterion(8, || {
        // A flat disk is already flat: no cones, zero distortion.
        let report = run_pipeline(shapes::disk(6), &Config::default()).unwrap();
        assert_eq!(report.n_c, 0, "flat disk grew cones");
        assert!(report.distortion <= 1e-12, "flat disk E = {}", report.distortion);
        assert!(report.reached_target());

        // Hemispherical cap under Dirichlet b = 0.
        let report = run_pipeline(shapes::spherical_cap(12, PI / 2.0), &Config::default()).unwrap();
        assert!(report.distortion <= 0.2, "cap E = {}", report.distortion);
        assert!(report.reached_target());
        // Σ z is unconstrained with boundary: just audit the bounds.
        assert!(report.audit.bounds_ok);
    });
}

#[test]
fn acceptance_09_high_genus_suite() {
    criterion(9, || {
        // Structure on the 8×8 grid torus.
        let mesh = shapes::flat_grid_torus(8, 8);
        let n = mesh.n_vertices();
        let basis = homology_loops(&mesh).unwrap();
        assert_eq!(basis.loops().len(), 2, "expected 2 basis loops");
        let cut = cut_mesh(&mesh, &basis).unwrap();
        assert_eq!(cut.n_vars, n + 2, "expected exactly 2 extra variables");
        let curv = mesh.curvature();
        let cones = ConeState::new(0);
        let sys =
            assemble_system(&mesh, &cut, &basis, &cones, &curv.k_ori, &curv.area_weights).unwrap();
        let ones = vec![1.0; sys.n_vars];
        assert!(max_abs(&sys.l_g.mul_vec(&ones)) <= 1e-12, "L_g·1 != 0");

        // Numeric rank N+1 via the SVD oracle.
        let nv = sys.n_vars;
        let mut dense = nalgebra::DMatrix::zeros(nv, nv);
        for (i, j, v) in sys.l_g.entries() {
            dense[(i, j)] = v;
        }
        let svd = dense.svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[nv - 1] < 1e-10 * sv[0]);
        assert!(sv[nv - 2] > 1e-8 * sv[0], "rank < N+1");

        // No cones: the flat torus needs no correction at all.
        let out = solve_holonomy(&sys, &cut, 1e6, 2, sys.default_pin, false).unwrap();
        assert_eq!(out.r, vec![0, 0]);
        assert!(out.e <= 1e-9, "E = {}", out.e);
        assert!(out.e_dif <= 1e-9, "E_dif = {}", out.e_dif);

        // Deformed torus with stage-1 cones: residuals and search optimality.
        let report =
            run_pipeline(shapes::embedded_torus(16, 12, 0.3), &Config::default()).unwrap();
        let h = report.holonomy.as_ref().expect("holonomy block missing");
        assert!(h.vertex_residual <= 1e-8, "vertex residual {}", h.vertex_residual);
        assert!(h.holonomy_residual <= 1e-8, "holonomy residual {}", h.holonomy_residual);

        // Rebuild the same system and enumerate the 25-point box.
        let mesh = shapes::embedded_torus(16, 12, 0.3);
        let curv = mesh.curvature();
        let basis = homology_loops(&mesh).unwrap();
        let cut = cut_mesh(&mesh, &basis).unwrap();
        let mut cones = ConeState::new(report.pin);
        cones.cones = report.cones.iter().map(|&(vertex, z)| Cone { vertex, z }).collect();
        let sys =
            assemble_system(&mesh, &cut, &basis, &cones, &curv.k_ori, &curv.area_weights).unwrap();
        let pin = report.pin;
        let lambda = 1e6;
        let out = solve_holonomy(&sys, &cut, lambda, 2, pin, false).unwrap();
        assert_eq!(out.r, h.r, "driver and direct solve disagree");
        let centers: Vec<i64> =
            sys.k_g_sums.iter().map(|&s| (s / HALF_PI).round() as i64).collect();
        let solver = PinnedSystem::new_general(&sys.l_g, pin).unwrap();
        let eval = |r: &[i64]| -> f64 {
            // Continuous minimum over (δ, a) at fixed r: dense oracle.
            let nd = cut.n_delta;
            let mut rhs = sys.rhs_base.clone();
            for (i, &ri) in r.iter().enumerate() {
                rhs[sys.n + i] += HALF_PI * ri as f64;
            }
            let u_base = solver.solve(&rhs);
            let mut cols: Vec<Vec<f64>> = Vec::with_capacity(nd + 1);
            for s in 0..nd {
                let mut kr = vec![0.0; sys.n_vars];
                for (row, col, v) in sys.k.entries() {
                    if col == s {
                        kr[row] = v;
                    }
                }
                cols.push(solver.solve(&kr));
            }
            cols.push(vec![1.0; sys.n_vars]);
            let t = nd + 1;
            let a_dot = |x: &[f64], y: &[f64]| -> f64 {
                x.iter().zip(y).zip(&sys.area_w).map(|((p, q), w)| w * p * q).sum()
            };
            let jump = |u: &[f64], pair: &(usize, usize)| u[pair.0] - u[pair.1];
            let mut q = nalgebra::DMatrix::zeros(t, t);
            let mut b = nalgebra::DVector::zeros(t);
            let mut c0 = a_dot(&u_base, &u_base);
            for pair in &cut.corner_pairs {
                c0 += lambda * jump(&u_base, pair).powi(2);
            }
            for i in 0..t {
                for j in 0..t {
                    let mut v = a_dot(&cols[i], &cols[j]);
                    for pair in &cut.corner_pairs {
                        v += lambda * jump(&cols[i], pair) * jump(&cols[j], pair);
                    }
                    if i == j && i < nd {
                        v += lambda;
                    }
                    q[(i, j)] = v;
                }
                let mut v = a_dot(&cols[i], &u_base);
                for pair in &cut.corner_pairs {
                    v += lambda * jump(&cols[i], pair) * jump(&u_base, pair);
                }
                b[i] = v;
            }
            let w = q.clone().lu().solve(&(-b.clone())).unwrap();
            c0 + (w.transpose() * (&q * &w))[(0, 0)] + 2.0 * b.dot(&w)
        };
        let mut best: Option<(Vec<i64>, f64)> = None;
        for d0 in -2..=2i64 {
            for d1 in -2..=2i64 {
                let r = vec![centers[0] + d0, centers[1] + d1];
                let v = eval(&r);
                if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                    best = Some((r, v));
                }
            }
        }
        let (r_star, _) = best.unwrap();
        assert_eq!(out.r, r_star, "2-integer search != 25-point enumeration");
    });
}

#[test]
fn acceptance_10_scale_behavior() {
    criterion(10, || {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for subdiv in [4usize, 5, 6] {
            let mesh = shapes::icosphere(subdiv); // 2562 / 10242 / 40962
            let n = mesh.n_vertices() as f64;
            let start = Instant::now();
            let report = run_pipeline(mesh, &Config::default()).unwrap();
            let elapsed = start.elapsed().as_secs_f64();
            assert!(report.reached_target(), "N = {n} did not converge");
            // Per-iteration cost; the init solve counts as one iteration.
            let iters = (report.iterations + 1) as f64;
            pts.push((n.ln(), (elapsed / iters).ln()));
        }
        // Least-squares slope on the log–log points.
        let k = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        println!("scale: log–log slope = {slope:.3}");
        assert!(slope <= 1.6, "per-iteration cost slope {slope:.3} > 1.6");
    });
}
