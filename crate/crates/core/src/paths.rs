//! Reproducible Brownian/Poisson paths on the finest jump-adapted mesh and
//! their exact coarsening onto coarser meshes of the same path.
//!
//! Every path draws from its own ChaCha stream keyed by the global seed, so a
//! path is a pure function of `(global_seed, path_index)` and results do not
//! depend on thread count or execution order. Jump epochs and Brownian
//! increments come from disjoint substreams; changing `lambda` leaves the
//! Brownian draws untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mesh::{build_mesh, sample_jump_times, JumpAdaptedMesh, DEDUP_REL_TOL};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Jumps = 0,
    Brownian = 1,
}

/// Per-path random stream derived from `(global_seed, path_index)`.
pub fn path_rng(global_seed: u64, path_index: u64, substream: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    rng.set_stream(path_index.wrapping_mul(2).wrapping_add(substream as u64));
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub global_seed: u64,
    pub path_index: u64,
    pub jump_times: Vec<f64>,
    pub fine_mesh: JumpAdaptedMesh,
    /// Brownian increment over each interval of `fine_mesh`.
    pub dw_fine: Vec<f64>,
}

pub fn generate_bundle(params: &ModelParams, m_ref: usize, global_seed: u64, path_index: u64) -> Result<PathBundle> {
    if m_ref == 0 {
        return Err(Error::Input("M_ref must be at least 1".into()));
    }
    let mut jump_rng = path_rng(global_seed, path_index, Substream::Jumps);
    let jump_times = sample_jump_times(params.lambda, params.horizon, &mut jump_rng);
    let fine_mesh = build_mesh(m_ref, params.horizon, &jump_times)?;

    let mut bm_rng = path_rng(global_seed, path_index, Substream::Brownian);
    let dw_fine = fine_mesh
        .dt()
        .iter()
        .map(|&dt| {
            let z: f64 = StandardNormal.sample(&mut bm_rng);
            z * dt.sqrt()
        })
        .collect();
    Ok(PathBundle {
        global_seed,
        path_index,
        jump_times,
        fine_mesh,
        dw_fine,
    })
}

impl PathBundle {
    /// Sums the fine increments over each interval of `coarse`, whose nodes
    /// must all be nodes of the fine mesh. Sums run left to right.
    pub fn increments_on(&self, coarse: &JumpAdaptedMesh) -> Result<Vec<f64>> {
        let fine = self.fine_mesh.nodes();
        let tol = DEDUP_REL_TOL * self.fine_mesh.horizon();
        let mut out = Vec::with_capacity(coarse.intervals());
        let mut j = 0;
        for &target in &coarse.nodes()[1..] {
            let mut acc = 0.0;
            loop {
                if j >= self.dw_fine.len() {
                    return Err(Error::Coarsen(format!("coarse node {target} beyond fine mesh")));
                }
                acc += self.dw_fine[j];
                j += 1;
                let node = fine[j];
                if (node - target).abs() <= tol {
                    break;
                }
                if node > target {
                    return Err(Error::Coarsen(format!("coarse node {target} is not a fine node")));
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Coarse mesh for `m_coarse` with this path's jumps, plus its increments.
    pub fn coarsen(&self, m_coarse: usize) -> Result<(JumpAdaptedMesh, Vec<f64>)> {
        self.check_dyadic(m_coarse)?;
        let mesh = build_mesh(m_coarse, self.fine_mesh.horizon(), &self.jump_times)?;
        let dw = self.increments_on(&mesh)?;
        Ok((mesh, dw))
    }

    /// Increments and Poisson counts on the plain uniform grid of `m` steps,
    /// as used by the regular-mesh backward Euler baseline.
    pub fn uniform_increments(&self, m: usize) -> Result<(Vec<f64>, Vec<u32>)> {
        self.check_dyadic(m)?;
        let horizon = self.fine_mesh.horizon();
        let mesh = build_mesh(m, horizon, &[])?;
        let dw = self.increments_on(&mesh)?;
        let tol = DEDUP_REL_TOL * horizon;
        let mut counts = vec![0u32; m];
        for &t in &self.jump_times {
            let scaled = t / horizon * m as f64;
            let nearest = scaled.round();
            // a jump on a grid node belongs to the interval that ends there
            let k = if (crate::mesh::grid_node(horizon, nearest as usize, m) - t).abs() <= tol {
                nearest as usize - 1
            } else {
                scaled.floor() as usize
            };
            counts[k.min(m - 1)] += 1;
        }
        Ok((dw, counts))
    }

    fn check_dyadic(&self, m_coarse: usize) -> Result<()> {
        let m_ref = self.fine_mesh.grid_steps();
        if m_coarse == 0 || !m_ref.is_multiple_of(m_coarse) {
            return Err(Error::Coarsen(format!("M = {m_coarse} does not divide M_ref = {m_ref}")));
        }
        if !(m_ref / m_coarse).is_power_of_two() {
            return Err(Error::Coarsen(format!("M_ref / M = {} is not a power of two", m_ref / m_coarse)));
        }
        Ok(())
    }
}

/// Free-function form of [`PathBundle::coarsen`].
pub fn coarsen_increments(bundle: &PathBundle, m_coarse: usize) -> Result<(JumpAdaptedMesh, Vec<f64>)> {
    bundle.coarsen(m_coarse)
}
