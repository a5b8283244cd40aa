//! Convergence study against manufactured solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::MemoryKernel;
use crate::solver::{self, ForcingVariant, Manufactured, RunOptions, SolverConfig, SourceMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsPlan {
    pub length: f64,
    pub p: f64,
    pub t_final: f64,
    /// grids for the spatial study (analytic forcing, time error removed by extrapolation)
    pub spatial_n: Vec<usize>,
    pub spatial_dt: f64,
    /// step sizes for the temporal study (discrete forcing)
    pub temporal_dt: Vec<f64>,
    pub temporal_n: usize,
}

impl Default for MmsPlan {
    fn default() -> Self {
        Self {
            length: 1.0,
            p: 3.0,
            t_final: 1.0,
            spatial_n: vec![50, 100, 200],
            spatial_dt: 1e-3,
            temporal_dt: vec![4e-3, 2e-3, 1e-3],
            temporal_n: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub error: f64,
    /// observed order against the previous row
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub spatial: Vec<ConvergenceRow>,
    pub temporal: Vec<ConvergenceRow>,
    pub spatial_order: f64,
    pub temporal_order: f64,
    pub passed: bool,
}

/// Final nodal state of a manufactured run.
fn final_state(m: &Manufactured, k: &MemoryKernel, grid: &Grid, p: f64, dt: f64, t_final: f64) -> Result<Vec<f64>> {
    let mut cfg = SolverConfig::new(dt, p, t_final);
    cfg.source_mode = SourceMode::Manufactured(*m);
    cfg.sample_stride = usize::MAX;
    let history = m.history(grid)?;
    let out = solver::run(&cfg, grid, k, &history, &m.velocity(grid, 0.0), &RunOptions::default())?;
    if let Some(e) = out.failure {
        return Err(e);
    }
    Ok(out.state.y)
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn orders(rows: &mut [ConvergenceRow], by_dx: bool) -> f64 {
    let mut worst = f64::INFINITY;
    for i in 1..rows.len() {
        let (a, b) = (rows[i - 1], rows[i]);
        let ratio = if by_dx { a.dx / b.dx } else { a.dt / b.dt };
        let o = (a.error / b.error).ln() / ratio.ln();
        rows[i].order = Some(o);
        worst = worst.min(o);
    }
    worst
}

/// Runs both studies. Requires a nonzero amplitude and a closed-form memory integral.
pub fn mms_study(m: &Manufactured, k: &MemoryKernel, plan: &MmsPlan) -> Result<MmsReport> {
    if m.amplitude == 0.0 {
        return Err(Error::UnsupportedManufactured("zero exact solution: orders undefined".into()));
    }
    m.history_integral(k, 0.0)?;
    if plan.spatial_n.len() < 2 || plan.temporal_dt.len() < 2 {
        return Err(Error::InvalidParameter("convergence study needs at least two levels each".into()));
    }

    let analytic = Manufactured { variant: ForcingVariant::Analytic, ..*m };
    let mut spatial = Vec::new();
    for &n in &plan.spatial_n {
        let grid = Grid::new(plan.length, n)?;
        let coarse = final_state(&analytic, k, &grid, plan.p, plan.spatial_dt, plan.t_final)?;
        let fine = final_state(&analytic, k, &grid, plan.p, 0.5 * plan.spatial_dt, plan.t_final)?;
        let extrapolated: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| 2.0 * f - c).collect();
        let exact = m.exact(&grid, plan.t_final);
        spatial.push(ConvergenceRow { n, dx: grid.dx(), dt: plan.spatial_dt, error: max_err(&extrapolated, &exact), order: None });
    }

    let discrete = Manufactured { variant: ForcingVariant::Discrete, ..*m };
    let grid = Grid::new(plan.length, plan.temporal_n)?;
    let exact = m.exact(&grid, plan.t_final);
    let mut temporal = Vec::new();
    for &dt in &plan.temporal_dt {
        let y = final_state(&discrete, k, &grid, plan.p, dt, plan.t_final)?;
        temporal.push(ConvergenceRow { n: plan.temporal_n, dx: grid.dx(), dt, error: max_err(&y, &exact), order: None });
    }

    let spatial_order = orders(&mut spatial, true);
    let temporal_order = orders(&mut temporal, false);
    Ok(MmsReport {
        passed: spatial_order >= 1.8 && temporal_order >= 0.9,
        spatial,
        temporal,
        spatial_order,
        temporal_order,
    })
}
