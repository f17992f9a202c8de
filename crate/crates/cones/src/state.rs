//! Mutable pipeline state shared by the angle solve, relocation, and cone
//! count steps, with a per-vertex column cache so trial evaluations (moves,
//! removals) reuse previously computed solves.

use std::collections::HashMap;

use crate::error::Result;
use crate::mesh::{CurvatureData, Mesh};
use crate::sparse::SparseSym;
use crate::yamabe::{scaled_distortion, ConeState, ConformalSystem, ReducedMap};

pub struct PipelineState {
    pub mesh: Mesh,
    pub l: SparseSym,
    pub curv: CurvatureData,
    pub sys: ConformalSystem,
    pub cones: ConeState,
    pub map: ReducedMap,
    /// Current conformal factors, scale, and distortion for `cones`.
    pub u: Vec<f64>,
    pub a: f64,
    pub e: f64,
    /// Σz target on closed meshes; None for boundary meshes.
    pub sum_target: Option<i64>,
    pub bounds: (i64, i64),
    pub parallel: bool,
    col_cache: HashMap<usize, Vec<f64>>,
}

impl PipelineState {
    pub fn new(
        mesh: Mesh,
        l: SparseSym,
        curv: CurvatureData,
        sys: ConformalSystem,
        cones: ConeState,
        sum_target: Option<i64>,
        bounds: (i64, i64),
        parallel: bool,
    ) -> Result<Self> {
        let d = sys.base(&curv.k_ori);
        let map = ReducedMap {
            columns: Vec::new(),
            column_vertex: Vec::new(),
            d,
        };
        let mut state = PipelineState {
            mesh,
            l,
            curv,
            sys,
            cones,
            map,
            u: Vec::new(),
            a: 0.0,
            e: 0.0,
            sum_target,
            bounds,
            parallel,
            col_cache: HashMap::new(),
        };
        state.refresh();
        Ok(state)
    }

    /// Compute (and cache) reduced-map columns for the given vertices.
    pub fn ensure_columns(&mut self, vertices: &[usize]) {
        let missing: Vec<usize> = {
            let mut seen = std::collections::HashSet::new();
            vertices
                .iter()
                .copied()
                .filter(|v| !self.col_cache.contains_key(v) && seen.insert(*v))
                .collect()
        };
        if missing.is_empty() {
            return;
        }
        let cols = self.sys.cone_columns(&missing, self.parallel);
        for (v, col) in missing.into_iter().zip(cols) {
            self.col_cache.insert(v, col);
        }
    }

    pub fn column(&mut self, v: usize) -> &[f64] {
        self.ensure_columns(&[v]);
        &self.col_cache[&v]
    }

    /// Re-align the column cache with the current cone list and recompute
    /// (u, a, E).
    pub fn refresh(&mut self) {
        let vertices: Vec<usize> = self.cones.cones.iter().map(|c| c.vertex).collect();
        self.ensure_columns(&vertices);
        self.map.columns = vertices.iter().map(|v| self.col_cache[v].clone()).collect();
        self.map.column_vertex = vertices;
        let z: Vec<i64> = self.cones.cones.iter().map(|c| c.z).collect();
        let r = self.map.residual(&z);
        let (e, a) = scaled_distortion(&r, &self.curv.area_weights, self.sys.uses_scale());
        self.u = r.iter().map(|ri| ri + a).collect();
        self.a = a;
        self.e = e;
    }

    /// Distortion of an arbitrary trial cone configuration (no state change
    /// besides cache growth).
    pub fn eval(&mut self, trial: &ConeState) -> f64 {
        let vertices: Vec<usize> = trial.cones.iter().map(|c| c.vertex).collect();
        self.ensure_columns(&vertices);
        let mut r = self.map.d.clone();
        for c in &trial.cones {
            if c.z != 0 {
                let col = &self.col_cache[&c.vertex];
                let zf = c.z as f64;
                for (ri, &ci) in r.iter_mut().zip(col) {
                    *ri += zf * ci;
                }
            }
        }
        scaled_distortion(&r, &self.curv.area_weights, self.sys.uses_scale()).0
    }
}
