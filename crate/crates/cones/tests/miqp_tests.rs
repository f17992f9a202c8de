//! Integer quadratic minimization against exhaustive enumeration.

mod common;

use cones::miqp::{branch_and_bound, select_active, ElimInfo, ReducedQP};
use cones::shapes;
use cones::yamabe::{Cone, ConeState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random positive semidefinite H = MᵀM (+ optional tiny diagonal).
fn random_qp(rng: &mut ChaCha8Rng, dim: usize, bound: i64, with_sum: Option<i64>) -> ReducedQP {
    let m: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut h = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            h[i][j] = (0..dim).map(|k| m[k][i] * m[k][j]).sum();
        }
    }
    let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let elim = with_sum.map(|target| ElimInfo { target, lo: -bound, hi: bound });
    ReducedQP {
        h,
        g,
        c0: rng.gen_range(-1.0..1.0),
        lo: vec![-bound; dim],
        hi: vec![bound; dim],
        elim,
    }
}

/// Brute-force minimum over the integer box.
fn enumerate_min(qp: &ReducedQP) -> Option<(Vec<i64>, f64)> {
    let dim = qp.dim();
    let mut best: Option<(Vec<i64>, f64)> = None;
    let mut y: Vec<i64> = qp.lo.clone();
    loop {
        if qp.feasible(&y) {
            let v = qp.objective(&y);
            if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                best = Some((y.clone(), v));
            }
        }
        // Odometer increment.
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
}

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..60 {
        let (dim, bound) = if trial < 40 {
            (rng.gen_range(2..=8), 1)
        } else {
            (rng.gen_range(2..=5), 3)
        };
        let sum = if trial % 2 == 0 {
            Some(rng.gen_range(-(dim as i64)..=dim as i64))
        } else {
            None
        };
        let qp = random_qp(&mut rng, dim, bound, sum);
        let want = enumerate_min(&qp);
        let got = branch_and_bound(&qp, None);
        match (want, got) {
            (Some((_, wv)), Ok(res)) => {
                assert!(!res.exhausted);
                assert_eq!(res.objective, wv, "trial {trial}: objective mismatch");
                assert!(qp.feasible(&res.y));
                assert_eq!(qp.objective(&res.y), res.objective);
            }
            (None, Err(_)) => {}
            (w, g) => panic!("trial {trial}: feasibility disagreement {w:?} vs {g:?}"),
        }
    }
}

#[test]
fn identity_unconstrained_minimum_is_zero() {
    let dim = 5;
    let mut h = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        h[i][i] = 1.0;
    }
    let qp = ReducedQP {
        h,
        g: vec![0.0; dim],
        c0: 2.5,
        lo: vec![-3; dim],
        hi: vec![3; dim],
        elim: None,
    };
    let res = branch_and_bound(&qp, None).unwrap();
    assert_eq!(res.y, vec![0; dim]);
    assert_eq!(res.objective, 2.5);
}

#[test]
fn infeasible_sum_constraint_is_reported() {
    // All variables pinned to 0 but the eliminated variable needs Σ = 8
    // while its own range is [0, 0]: no feasible point exists.
    let qp = ReducedQP {
        h: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        g: vec![0.0, 0.0],
        c0: 0.0,
        lo: vec![0, 0],
        hi: vec![0, 0],
        elim: Some(ElimInfo { target: 8, lo: 0, hi: 0 }),
    };
    assert!(branch_and_bound(&qp, None).is_err());
}

#[test]
fn warm_start_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let qp = random_qp(&mut rng, 4, 2, None);
        let cold = branch_and_bound(&qp, None).unwrap();
        let warm_point = vec![1i64, -1, 0, 2];
        let warm = branch_and_bound(&qp, Some(&warm_point)).unwrap();
        assert_eq!(cold.objective, warm.objective);
    }
}

#[test]
fn active_set_keeps_new_cones_and_nearest_neighbors() {
    let mesh = shapes::icosphere(3);
    let n = mesh.n_vertices();
    let mut cones = ConeState::new(0);
    // Many cones spread over the vertex range.
    let vertices: Vec<usize> = (1..n).step_by(n / 40).collect();
    cones.cones = vertices.iter().map(|&v| Cone { vertex: v, z: 1 }).collect();
    let newly = vec![vertices[3], vertices[10]];
    let n_g = 12;
    let active = select_active(&mesh, &cones, &newly, n_g);
    assert_eq!(active.indices.len(), n_g);
    // All newly added cones are in.
    for nv in &newly {
        let idx = cones.index_of(*nv).unwrap();
        assert!(active.indices.contains(&idx), "new cone dropped");
    }
    // Selected neighbors are no farther from the new cones than excluded ones
    // (ties may go either way by vertex id).
    let dist = mesh.multi_source_distances(&newly);
    let selected: Vec<usize> = active
        .indices
        .iter()
        .map(|&i| dist[cones.cones[i].vertex])
        .collect();
    let excluded_min = (0..cones.cones.len())
        .filter(|i| !active.indices.contains(i))
        .map(|i| dist[cones.cones[i].vertex])
        .min()
        .unwrap();
    assert!(selected.iter().all(|&d| d <= excluded_min));

    // With few cones everything stays active.
    let mut small = ConeState::new(0);
    small.cones = vec![Cone { vertex: 2, z: 1 }, Cone { vertex: 9, z: -1 }];
    let all = select_active(&mesh, &small, &[], 30);
    assert_eq!(all.indices, vec![0, 1]);
}

#[test]
fn bnb_respects_sum_elimination_range() {
    // Two variables in [-1,1], eliminated variable must land in [-1,1] with
    // target 3: only points with y0+y1 ∈ [2,4] qualify, i.e. sums ≥ 2.
    let qp = ReducedQP {
        h: vec![vec![1.0, 0.2], vec![0.2, 1.0]],
        g: vec![0.3, -0.1],
        c0: 0.0,
        lo: vec![-1, -1],
        hi: vec![1, 1],
        elim: Some(ElimInfo { target: 3, lo: -1, hi: 1 }),
    };
    let res = branch_and_bound(&qp, None).unwrap();
    let s: i64 = res.y.iter().sum();
    assert!((-1..=1).contains(&(3 - s)));
    let (wy, wv) = enumerate_min(&qp).unwrap();
    assert_eq!(res.objective, wv);
    assert_eq!(qp.objective(&wy), wv);
}
