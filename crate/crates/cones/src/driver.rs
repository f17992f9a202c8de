//! End-to-end pipeline: initialization, the add → solve-angles → move →
//! remove loop, the high-genus holonomy stage, and artifact emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::count::{self, RemovalBudget};
use crate::error::{Error, Result};
use crate::highgenus;
use crate::homology;
use crate::mesh::Mesh;
use crate::miqp;
use crate::relocate;
use crate::state::PipelineState;
use crate::yamabe::{self, ConformalSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Dirichlet,
    Neumann,
}

impl std::fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryMode::Dirichlet => write!(f, "dirichlet"),
            BoundaryMode::Neumann => write!(f, "neumann"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub epsilon_tar: f64,
    pub n_g: usize,
    pub n_b: (i64, i64),
    pub lambda_d: f64,
    pub eta0: f64,
    pub max_iter: usize,
    pub boundary: BoundaryMode,
    pub f_thres_ratio: f64,
    /// Half-width of the holonomy integer search box around the rounded
    /// geodesic-curvature estimate.
    pub r_half_width: i64,
    /// Fan multi-RHS solves out over rayon (no effect without the `parallel`
    /// feature).
    pub parallel: bool,
    /// Attach the reduced-QP text dump of every angle solve to the report.
    pub debug_dump: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            epsilon_tar: 0.200,
            n_g: 30,
            n_b: (-1, 1),
            lambda_d: 1e6,
            eta0: 0.10,
            max_iter: 1000,
            boundary: BoundaryMode::Dirichlet,
            f_thres_ratio: 0.3,
            r_half_width: 2,
            parallel: true,
            debug_dump: false,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_tar <= 0.0 {
            return Err(Error::InvalidInput("target distortion must be positive".into()));
        }
        if self.n_b.0 > 0 || self.n_b.1 < 0 {
            return Err(Error::InvalidInput("multiplier bounds must contain 0".into()));
        }
        if self.n_g < 2 {
            return Err(Error::InvalidInput("active-set size must be at least 2".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if self.lambda_d <= 0.0 || self.eta0 <= 0.0 || !(0.0..=1.0).contains(&self.f_thres_ratio)
        {
            return Err(Error::InvalidInput("invalid scalar parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub event: &'static str,
    pub e: f64,
    pub n_c: usize,
    pub iteration: usize,
    pub sum_z: i64,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct LoopReport {
    pub vertices: Vec<usize>,
    pub crossing: usize,
}

#[derive(Debug, Clone)]
pub struct HolonomyReport {
    pub r: Vec<i64>,
    pub e_dif: f64,
    pub on_box_edge: bool,
    pub loops: Vec<LoopReport>,
    pub vertex_residual: f64,
    pub holonomy_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Audit {
    pub yamabe_residual: f64,
    pub sum_z_ok: bool,
    pub bounds_ok: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub n_vertices: usize,
    pub genus: usize,
    pub n_boundary_loops: usize,
    pub config: Config,
    /// (vertex, z) pairs, every tracked cone including zero-angle ones.
    pub cones: Vec<(usize, i64)>,
    pub pin: usize,
    pub n_c: usize,
    pub n_0: usize,
    pub distortion: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEvent>,
    pub holonomy: Option<HolonomyReport>,
    /// Phase name → accumulated seconds.
    pub timings: BTreeMap<&'static str, f64>,
    pub termination: &'static str,
    pub audit: Audit,
    pub warnings: Vec<String>,
    /// Final conformal factors (original vertex order).
    pub u: Vec<f64>,
    pub qp_dumps: Vec<String>,
}

impl SolveReport {
    pub fn reached_target(&self) -> bool {
        self.termination == "target-reached"
    }
}

/// Pin selection: the vertex farthest (BFS) from the initial cone candidate
/// sites, excluding homology-loop vertices on g ≥ 1 meshes and boundary
/// vertices; falls back to the first admissible vertex.
fn select_pin(mesh: &Mesh, candidates: &[usize], avoid: &[usize]) -> usize {
    let avoid: std::collections::HashSet<usize> = avoid.iter().copied().collect();
    let admissible =
        |v: usize| -> bool { !avoid.contains(&v) && !mesh.is_boundary(v) };
    if candidates.is_empty() {
        return (0..mesh.n_vertices()).find(|&v| admissible(v)).unwrap_or(0);
    }
    let dist = mesh.multi_source_distances(candidates);
    let mut best = usize::MAX;
    let mut best_d = 0usize;
    for v in 0..mesh.n_vertices() {
        if !admissible(v) || dist[v] == usize::MAX {
            continue;
        }
        if best == usize::MAX || dist[v] > best_d {
            best = v;
            best_d = dist[v];
        }
    }
    if best == usize::MAX {
        0
    } else {
        best
    }
}

pub fn run_pipeline(mesh: Mesh, config: &Config) -> Result<SolveReport> {
    config.validate()?;
    let mut timings: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut qp_dumps: Vec<String> = Vec::new();
    let clock = Instant::now();

    let curv = mesh.curvature();
    let l = mesh.cotan_laplacian()?;
    let (genus, n_boundary_loops) = mesh.genus();
    let closed = !mesh.has_boundary();

    // Homology basis first on g ≥ 1 (its vertices are excluded from pinning).
    let basis = if closed && genus >= 1 {
        Some(homology::homology_loops(&mesh)?)
    } else {
        None
    };
    let loop_vertices: Vec<usize> = basis
        .as_ref()
        .map(|b| b.loops().iter().flat_map(|lp| lp.vertices.clone()).collect())
        .unwrap_or_default();

    let candidates = count::candidate_sites(&mesh, &curv, config.f_thres_ratio);
    let pin = select_pin(&mesh, &candidates, &loop_vertices);
    timings.insert("setup", clock.elapsed().as_secs_f64());

    let sum_target = if closed { Some(8 * (1 - genus as i64)) } else { None };
    let t = Instant::now();
    let sys = if closed {
        ConformalSystem::new_closed(&l, pin)?
    } else {
        match config.boundary {
            BoundaryMode::Dirichlet => {
                let b = vec![0.0; mesh.n_vertices()];
                ConformalSystem::new_dirichlet(&mesh, &l, &b)?
            }
            // Natural conditions: full-Laplacian pinned solve, free scale,
            // no sum constraint.
            BoundaryMode::Neumann => ConformalSystem::new_closed(&l, pin)?,
        }
    };
    timings.insert("factorization", t.elapsed().as_secs_f64());

    let cones = count::initial_cones(&mesh, &curv, pin, config.f_thres_ratio);
    let initial_vertices: Vec<usize> = cones.cones.iter().map(|c| c.vertex).collect();
    let mut state = PipelineState::new(
        mesh,
        l,
        curv,
        sys,
        cones,
        sum_target,
        config.n_b,
        config.parallel,
    )?;

    let mut budget = RemovalBudget::new(config.eta0);
    let mut trace: Vec<TraceEvent> = Vec::new();
    let push = |trace: &mut Vec<TraceEvent>,
                state: &PipelineState,
                event: &'static str,
                iteration: usize,
                eta: f64| {
        trace.push(TraceEvent {
            event,
            e: state.e,
            n_c: state.cones.cones.len(),
            iteration,
            sum_z: state.cones.sum_z(),
            eta,
        });
    };

    // Initializations: one angle solve on the initial cones.
    let t = Instant::now();
    let outcome = if state.cones.cones.is_empty() && sum_target == Some(0) {
        // Torus-like start: no cones, constraint already satisfied.
        state.refresh();
        None
    } else {
        Some(miqp::solve_angles(&mut state, &initial_vertices, config.n_g, config.debug_dump)?)
    };
    if let Some(o) = outcome {
        if o.exhausted {
            warnings.push("initial angle solve hit the node budget".into());
        }
        if let Some(d) = o.dump {
            qp_dumps.push(d);
        }
    }
    *timings.entry("solve-angles").or_insert(0.0) += t.elapsed().as_secs_f64();
    push(&mut trace, &state, "init", 0, budget.eta);

    let mut iterations = 0usize;
    while iterations < config.max_iter && state.e > config.epsilon_tar {
        iterations += 1;

        let t = Instant::now();
        let n_cones = state.cones.cones.len();
        let want =
            count::adaptive_add_count(state.e, config.epsilon_tar, n_cones, config.n_g);
        let added = count::add_cones(&mut state, want, config.f_thres_ratio);
        if added.is_empty() {
            warnings.push(format!("iteration {iterations}: no admissible cone site"));
        }
        *timings.entry("add-cones").or_insert(0.0) += t.elapsed().as_secs_f64();
        push(&mut trace, &state, "add", iterations, budget.eta);

        let t = Instant::now();
        let outcome = miqp::solve_angles(&mut state, &added, config.n_g, config.debug_dump)?;
        if outcome.exhausted {
            warnings.push(format!("iteration {iterations}: angle solve hit the node budget"));
        }
        if let Some(d) = outcome.dump {
            qp_dumps.push(d);
        }
        *timings.entry("solve-angles").or_insert(0.0) += t.elapsed().as_secs_f64();
        push(&mut trace, &state, "solve-angles", iterations, budget.eta);

        let t = Instant::now();
        relocate::move_cones(&mut state, false)?;
        *timings.entry("move-cones").or_insert(0.0) += t.elapsed().as_secs_f64();
        push(&mut trace, &state, "move", iterations, budget.eta);

        let t = Instant::now();
        count::remove_pairs(&mut state, &mut budget)?;
        *timings.entry("remove-pairs").or_insert(0.0) += t.elapsed().as_secs_f64();
        push(&mut trace, &state, "remove", iterations, budget.eta);
    }

    // Stage 2: one holonomy solve with the cone configuration fixed.
    let holonomy = match &basis {
        Some(basis) if genus >= 1 => {
            let t = Instant::now();
            let cut = highgenus::cut_mesh(&state.mesh, basis)?;
            let sys_h = highgenus::assemble_system(
                &state.mesh,
                &cut,
                basis,
                &state.cones,
                &state.curv.k_ori,
                &state.curv.area_weights,
            )?;
            let pin_h = if loop_vertices.contains(&state.cones.pin) {
                sys_h.default_pin
            } else {
                state.cones.pin
            };
            let out = highgenus::solve_holonomy(
                &sys_h,
                &cut,
                config.lambda_d,
                config.r_half_width,
                pin_h,
                config.parallel,
            )?;
            if out.on_box_edge {
                warnings.push("holonomy optimum on the search-box edge; widen r_half_width".into());
            }
            let (vres, hres) = highgenus::audit_residuals(&sys_h, &out.r, &out.delta, &out.u, pin_h);
            *timings.entry("holonomy").or_insert(0.0) += t.elapsed().as_secs_f64();
            Some(HolonomyReport {
                r: out.r,
                e_dif: out.e_dif,
                on_box_edge: out.on_box_edge,
                loops: basis
                    .pairs
                    .iter()
                    .zip(&basis.crossings)
                    .flat_map(|((a, b), &x)| {
                        [
                            LoopReport { vertices: a.vertices.clone(), crossing: x },
                            LoopReport { vertices: b.vertices.clone(), crossing: x },
                        ]
                    })
                    .collect(),
                vertex_residual: vres,
                holonomy_residual: hres,
            })
        }
        _ => None,
    };

    // Independent constraint audit.
    let masked: Vec<usize> = if state.sys.is_closed() {
        vec![state.cones.pin]
    } else {
        (0..state.mesh.n_vertices())
            .filter(|&v| state.mesh.is_boundary(v))
            .collect()
    };
    let audit = Audit {
        yamabe_residual: yamabe::yamabe_residual(
            &state.l,
            &state.u,
            &state.cones,
            &state.curv.k_ori,
            &masked,
        ),
        sum_z_ok: sum_target.is_none_or(|s| state.cones.sum_z() == s),
        bounds_ok: state.cones.validate(config.n_b).is_ok(),
    };
    if !audit.sum_z_ok {
        warnings.push("Gauss–Bonnet sum constraint violated at termination".into());
    }
    if !audit.bounds_ok {
        warnings.push("cone state invalid at termination".into());
    }

    let termination = if state.e <= config.epsilon_tar {
        "target-reached"
    } else {
        "iteration-cap"
    };
    Ok(SolveReport {
        n_vertices: state.mesh.n_vertices(),
        genus,
        n_boundary_loops,
        config: config.clone(),
        cones: state.cones.cones.iter().map(|c| (c.vertex, c.z)).collect(),
        pin: state.cones.pin,
        n_c: state.cones.n_c(),
        n_0: state.cones.n_0(),
        distortion: state.e,
        iterations,
        trace,
        holonomy,
        timings,
        termination,
        audit,
        warnings,
        u: state.u.clone(),
        qp_dumps,
    })
}

/// Round to 12 significant digits so the JSON is reproducible across runs.
fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

pub fn report_json(report: &SolveReport) -> serde_json::Value {
    use serde_json::json;
    let mut root = json!({
        "mesh": {
            "n_vertices": report.n_vertices,
            "genus": report.genus,
            "n_boundary_loops": report.n_boundary_loops,
        },
        "config": {
            "epsilon_tar": sig12(report.config.epsilon_tar),
            "n_g": report.config.n_g,
            "n_b": [report.config.n_b.0, report.config.n_b.1],
            "lambda_d": sig12(report.config.lambda_d),
            "eta0": sig12(report.config.eta0),
            "max_iter": report.config.max_iter,
            "boundary": report.config.boundary.to_string(),
            "f_thres_ratio": sig12(report.config.f_thres_ratio),
        },
        "cones": report
            .cones
            .iter()
            .map(|&(vertex, z)| json!({"vertex": vertex, "z": z}))
            .collect::<Vec<_>>(),
        "n_c": report.n_c,
        "n_0": report.n_0,
        "distortion": sig12(report.distortion),
        "iterations": report.iterations,
        "trace": report
            .trace
            .iter()
            .map(|t| json!({"event": t.event, "E": sig12(t.e), "n_c": t.n_c}))
            .collect::<Vec<_>>(),
        "timings": report
            .timings
            .iter()
            .map(|(k, v)| (k.to_string(), json!(sig12(*v))))
            .collect::<serde_json::Map<String, serde_json::Value>>(),
        "termination": report.termination,
    });
    if let Some(h) = &report.holonomy {
        root["holonomy"] = json!({
            "r": h.r,
            "e_dif": sig12(h.e_dif),
            "loops": h
                .loops
                .iter()
                .map(|l| json!({"vertices": l.vertices, "crossing": l.crossing}))
                .collect::<Vec<_>>(),
        });
    }
    root
}

pub fn emit_report<P: AsRef<Path>>(report: &SolveReport, path: P) -> Result<()> {
    let value = report_json(report);
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&value).expect("JSON serialization"))?;
    Ok(())
}

/// ASCII PLY with the conformal factor as a per-vertex `quality` property;
/// vertex order matches the input.
pub fn emit_field_ply<P: AsRef<Path>>(mesh: &Mesh, u: &[f64], path: P) -> Result<()> {
    if u.len() != mesh.n_vertices() {
        return Err(Error::InvalidInput("field length != vertex count".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "ply")?;
    writeln!(f, "format ascii 1.0")?;
    writeln!(f, "element vertex {}", mesh.n_vertices())?;
    writeln!(f, "property float x")?;
    writeln!(f, "property float y")?;
    writeln!(f, "property float z")?;
    writeln!(f, "property float quality")?;
    writeln!(f, "element face {}", mesh.n_faces())?;
    writeln!(f, "property list uchar int vertex_indices")?;
    writeln!(f, "end_header")?;
    for (p, ui) in mesh.positions().iter().zip(u) {
        writeln!(f, "{:.6} {:.6} {:.6} {:.6}", p[0], p[1], p[2], ui)?;
    }
    for face in mesh.faces() {
        writeln!(f, "3 {} {} {}", face[0], face[1], face[2])?;
    }
    Ok(())
}

pub fn emit_trace_csv<P: AsRef<Path>>(report: &SolveReport, path: P) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,event,E,n_c,sum_z,eta")?;
    for t in &report.trace {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            t.iteration,
            t.event,
            sig12(t.e),
            t.n_c,
            t.sum_z,
            sig12(t.eta)
        )?;
    }
    Ok(())
}
