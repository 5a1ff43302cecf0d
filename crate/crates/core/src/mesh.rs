//! Jump-adapted time grids: the uniform grid `{i T / M}` merged with the
//! Poisson jump epochs of one path.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// Times closer than `DEDUP_REL_TOL * T` are treated as one node.
pub const DEDUP_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct JumpAdaptedMesh {
    nodes: Vec<f64>,
    is_jump: Vec<bool>,
    dt: Vec<f64>,
    base_dt: f64,
    m: usize,
}

impl JumpAdaptedMesh {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn is_jump(&self) -> &[bool] {
        &self.is_jump
    }

    /// Step sizes `t_{k+1} - t_k`.
    pub fn dt(&self) -> &[f64] {
        &self.dt
    }

    /// `T / M` of the underlying uniform grid.
    pub fn base_dt(&self) -> f64 {
        self.base_dt
    }

    pub fn grid_steps(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("mesh has at least two nodes")
    }

    pub fn intervals(&self) -> usize {
        self.dt.len()
    }

    pub fn jump_count(&self) -> usize {
        self.is_jump.iter().filter(|&&j| j).count()
    }

    /// Mesh dump with columns `t,is_jump`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,is_jump\n");
        for (t, j) in self.nodes.iter().zip(&self.is_jump) {
            out.push_str(&format!("{t},{j}\n"));
        }
        out
    }
}

/// Node `i` of the uniform grid; computed as `T * (i / M)` so that the same
/// rational gives the same double on every dyadic refinement.
#[inline]
pub(crate) fn grid_node(horizon: f64, i: usize, m: usize) -> f64 {
    horizon * (i as f64 / m as f64)
}

/// Jump epochs of a Poisson process with intensity `lambda` on `(0, T)`.
pub fn sample_jump_times<R: Rng + ?Sized>(lambda: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    if !(lambda > 0.0) {
        return times;
    }
    let exp = Exp::new(lambda).expect("positive intensity");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= horizon {
            return times;
        }
        times.push(t);
    }
}

/// Merges `{i T / M : i = 0..M}` with `jump_times`. A jump within the
/// tolerance of a grid node (or of a previous jump) flags that node instead
/// of adding a new one.
pub fn build_mesh(m: usize, horizon: f64, jump_times: &[f64]) -> Result<JumpAdaptedMesh> {
    if m == 0 {
        return Err(Error::Mesh("M must be positive".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Mesh(format!("horizon {horizon} must be positive")));
    }
    let tol = DEDUP_REL_TOL * horizon;
    let mut grid_flags = vec![false; m + 1];
    let mut extra: Vec<f64> = Vec::new();
    let mut prev = 0.0;
    for &t in jump_times {
        if !(t > tol && t < horizon) {
            return Err(Error::Mesh(format!("jump time {t} outside (0, {horizon})")));
        }
        if t < prev {
            return Err(Error::Mesh("jump times must be sorted".into()));
        }
        prev = t;
        let i = ((t / horizon) * m as f64).round() as usize;
        let i = i.min(m);
        if (grid_node(horizon, i, m) - t).abs() <= tol {
            grid_flags[i] = true;
        } else if extra.last().is_some_and(|&last| t - last <= tol) {
            // coincides with the previous off-grid jump
        } else {
            extra.push(t);
        }
    }

    let mut nodes = Vec::with_capacity(m + 1 + extra.len());
    let mut is_jump = Vec::with_capacity(m + 1 + extra.len());
    let mut extra_iter = extra.into_iter().peekable();
    for (i, &flag) in grid_flags.iter().enumerate() {
        let g = grid_node(horizon, i, m);
        while let Some(&t) = extra_iter.peek() {
            if t < g {
                nodes.push(t);
                is_jump.push(true);
                extra_iter.next();
            } else {
                break;
            }
        }
        nodes.push(g);
        is_jump.push(flag);
    }
    let dt = nodes.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(JumpAdaptedMesh {
        nodes,
        is_jump,
        dt,
        base_dt: horizon / m as f64,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_grid() {
        let mesh = build_mesh(2, 1.0, &[]).unwrap();
        assert_eq!(mesh.nodes(), &[0.0, 0.5, 1.0]);
        assert_eq!(mesh.is_jump(), &[false, false, false]);
    }

    #[test]
    fn one_off_grid_jump() {
        let mesh = build_mesh(2, 1.0, &[0.3]).unwrap();
        assert_eq!(mesh.nodes(), &[0.0, 0.3, 0.5, 1.0]);
        assert_eq!(mesh.is_jump(), &[false, true, false, false]);
        let want = [0.3, 0.2, 0.5];
        for (a, b) in mesh.dt().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn near_grid_jump_is_merged() {
        let mesh = build_mesh(4, 1.0, &[0.25 + 1e-15]).unwrap();
        assert_eq!(mesh.nodes().len(), 5);
        assert_eq!(mesh.nodes()[1], 0.25);
        assert!(mesh.is_jump()[1]);
    }

    #[test]
    fn jump_next_to_horizon_flags_terminal_node() {
        let mesh = build_mesh(4, 1.0, &[1.0 - 1e-14]).unwrap();
        assert_eq!(mesh.nodes().len(), 5);
        assert!(*mesh.is_jump().last().unwrap());
    }

    #[test]
    fn rejects_out_of_range_jumps() {
        assert!(build_mesh(4, 1.0, &[0.0]).is_err());
        assert!(build_mesh(4, 1.0, &[1.0]).is_err());
        assert!(build_mesh(4, 1.0, &[1.5]).is_err());
        assert!(build_mesh(4, 1.0, &[0.6, 0.2]).is_err());
        assert!(build_mesh(0, 1.0, &[]).is_err());
    }

    #[test]
    fn zero_intensity_has_no_jumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_jump_times(0.0, 1.0, &mut rng).is_empty());
    }

    #[test]
    fn poisson_count_statistics() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut total = 0usize;
        let mut zeros = 0usize;
        for _ in 0..n {
            let k = sample_jump_times(5.0, 1.0, &mut rng).len();
            total += k;
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 5.0).abs() <= 3.0 * (5.0 / n as f64).sqrt(), "mean {mean}");

        for _ in 0..n {
            if sample_jump_times(1.0, 1.0, &mut rng).is_empty() {
                zeros += 1;
            }
        }
        let p0 = zeros as f64 / n as f64;
        assert!((p0 - (-1f64).exp()).abs() < 0.005, "P(N=0) = {p0}");
    }

    #[test]
    fn jump_times_sorted_inside_horizon() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = sample_jump_times(5.0, 2.0, &mut rng);
            assert!(t.windows(2).all(|w| w[0] < w[1]));
            assert!(t.iter().all(|&s| s > 0.0 && s < 2.0));
        }
    }
}
