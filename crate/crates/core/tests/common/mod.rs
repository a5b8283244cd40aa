//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use love_decay::grid::Grid;
use love_decay::history::{HistoryFamily, PrescribedHistory};
use love_decay::kernel::MemoryKernel;
use love_decay::solver::{self, BackendChoice, RunOptions, SolverConfig};

pub const ORACLE_N: usize = 4;
pub const ORACLE_DT: f64 = 0.05;
pub const ORACLE_A: f64 = 0.7;
pub const ORACLE_B: f64 = 1.3;
pub const ORACLE_P: f64 = 3.0;

/// Inverse of a small dense matrix by Gauss-Jordan elimination with partial pivoting.
pub fn dense_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        for x in a[c].iter_mut() {
            *x /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                let pivot_row = a[c].clone();
                for (x, p) in a[r].iter_mut().zip(&pivot_row) {
                    *x -= f * p;
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Dense second-difference matrix with homogeneous Dirichlet ends.
pub fn dense_laplacian(n: usize, dx: f64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = -2.0 / (dx * dx);
        if i > 0 {
            m[i][i - 1] = 1.0 / (dx * dx);
        }
        if i + 1 < n {
            m[i][i + 1] = 1.0 / (dx * dx);
        }
    }
    m
}

/// `|y|^(p-2) y + (|y_x|^(p-2) y_x)_x` with one-sided differences on a zero-padded copy of `y`.
fn source(y: &[f64], dx: f64, p: f64) -> Vec<f64> {
    let mut padded = vec![0.0];
    padded.extend_from_slice(y);
    padded.push(0.0);
    let flux: Vec<f64> = padded
        .windows(2)
        .map(|w| {
            let g = (w[1] - w[0]) / dx;
            g.abs().powf(p - 2.0) * g
        })
        .collect();
    y.iter()
        .enumerate()
        .map(|(i, &v)| v.abs().powf(p - 2.0) * v + (flux[i + 1] - flux[i]) / dx)
        .collect()
}

/// `int_0^inf a e^(-b s) y(t - s) ds` for a stored path `path[m] = y(m dt)`,
/// interpolated linearly in time and equal to `path[0]` for negative times.
fn exponential_memory(path: &[Vec<f64>], dt: f64, a: f64, b: f64) -> Vec<f64> {
    let n = path.len() - 1;
    let e = (-b * dt).exp();
    // int_0^dt e^(-b s) ds and int_0^dt s e^(-b s) ds
    let i0 = (1.0 - e) / b;
    let i1 = (1.0 - e * (1.0 + b * dt)) / (b * b);
    let mut out = vec![0.0; path[0].len()];
    for m in 0..n {
        // ages [m dt, (m + 1) dt] joining path[n - m] to path[n - m - 1]
        let shift = a * (-b * m as f64 * dt).exp();
        let w_new = shift * (i0 - i1 / dt);
        let w_old = shift * i1 / dt;
        for j in 0..out.len() {
            out[j] += w_new * path[n - m][j] + w_old * path[n - m - 1][j];
        }
    }
    let tail = a * (-b * n as f64 * dt).exp() / b;
    for j in 0..out.len() {
        out[j] += tail * path[0][j];
    }
    out
}

pub fn oracle_initial(grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let y0 = grid.sample(|x| 0.6 * (PI * x).sin() - 0.3 * (2.0 * PI * x).sin());
    let y1 = grid.sample(|x| 0.4 * (PI * x).sin() + 0.2 * (3.0 * PI * x).sin());
    (y0, y1)
}

/// Max nodal difference in `(y, v)` after two steps between the solver and a
/// dense-matrix rebuild of the same scheme.
pub fn dense_oracle_error(backend: BackendChoice) -> f64 {
    let grid = Grid::new(1.0, ORACLE_N).unwrap();
    let dx = grid.dx();
    let (y0, y1) = oracle_initial(&grid);

    let lap = dense_laplacian(ORACLE_N, dx);
    let shifted: Vec<Vec<f64>> = lap
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(j, v)| if i == j { 1.0 - v } else { -v }).collect())
        .collect();
    let inv = dense_inverse(&shifted);
    let mut y = y0.clone();
    let mut v = y1.clone();
    let mut path = vec![y0.clone()];
    for _ in 0..2 {
        let conv = exponential_memory(&path, ORACLE_DT, ORACLE_A, ORACLE_B);
        let w: Vec<f64> = (0..ORACLE_N).map(|i| y[i] + v[i] - conv[i]).collect();
        let s = source(&y, dx, ORACLE_P);
        let rhs: Vec<f64> = mat_vec(&lap, &w).iter().zip(&s).map(|(a, b)| a + b).collect();
        let acc = mat_vec(&inv, &rhs);
        for i in 0..ORACLE_N {
            v[i] += ORACLE_DT * acc[i];
            y[i] += ORACLE_DT * v[i];
        }
        path.push(y.clone());
    }

    let k = MemoryKernel::exponential(ORACLE_A, ORACLE_B).unwrap();
    let history = PrescribedHistory::new(&grid, HistoryFamily::Stationary, y0).unwrap();
    let mut cfg = SolverConfig::new(ORACLE_DT, ORACLE_P, 2.0 * ORACLE_DT);
    cfg.sample_stride = 1;
    let opts = RunOptions { backend, ..RunOptions::default() };
    let out = solver::run(&cfg, &grid, &k, &history, &y1, &opts).unwrap();
    assert!(out.failure.is_none());
    assert_eq!(out.trace.len(), 3);
    let dy = out.state.y.iter().zip(&y).map(|(a, b)| (a - b).abs());
    let dv = out.state.v.iter().zip(&v).map(|(a, b)| (a - b).abs());
    dy.chain(dv).fold(0.0, f64::max)
}
