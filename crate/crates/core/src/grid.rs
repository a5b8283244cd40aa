//! Uniform Dirichlet grid on `(0, L)`.
//!
//! Fields live on the `N` interior nodes `x_i = (i + 1) dx`, `dx = L / (N + 1)`;
//! both boundary values are pinned to zero. Gradients live on the `N + 1`
//! cell edges so that `<-D2 u, v> = <G u, G v>` holds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    length: f64,
    interior: usize,
}

impl Grid {
    pub fn new(length: f64, interior: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("domain length {length} must be positive")));
        }
        if interior < 3 {
            return Err(Error::InvalidParameter(format!("need at least 3 interior nodes, got {interior}")));
        }
        Ok(Self { length, interior })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.interior
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.interior + 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.interior).map(|i| self.x(i)).collect()
    }

    /// Midpoints of the `N + 1` edges.
    pub fn edge_midpoints(&self) -> Vec<f64> {
        (0..=self.interior).map(|j| (j as f64 + 0.5) * self.dx()).collect()
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.interior]
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.interior).map(|i| f(self.x(i))).collect()
    }

    /// Forward differences on edges with zero ghosts.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.interior + 1];
        self.gradient_into(u, &mut g);
        g
    }

    pub fn gradient_into(&self, u: &[f64], g: &mut [f64]) {
        let n = self.interior;
        let inv = 1.0 / self.dx();
        g[0] = u[0] * inv;
        for j in 1..n {
            g[j] = (u[j] - u[j - 1]) * inv;
        }
        g[n] = -u[n - 1] * inv;
    }

    /// Nodal divergence of an edge field (the adjoint of `-gradient`).
    pub fn divergence(&self, w: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.dx();
        (0..self.interior).map(|i| (w[i + 1] - w[i]) * inv).collect()
    }

    /// `(u_{i-1} - 2 u_i + u_{i+1}) / dx^2`
    pub fn d2_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.interior;
        let inv = 1.0 / (self.dx() * self.dx());
        (0..n)
            .map(|i| {
                let l = if i > 0 { u[i - 1] } else { 0.0 };
                let r = if i + 1 < n { u[i + 1] } else { 0.0 };
                (l - 2.0 * u[i] + r) * inv
            })
            .collect()
    }

    /// `(u_{i+1} - u_{i-1}) / (2 dx)`
    pub fn d1_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.interior;
        let inv = 0.5 / self.dx();
        (0..n)
            .map(|i| {
                let l = if i > 0 { u[i - 1] } else { 0.0 };
                let r = if i + 1 < n { u[i + 1] } else { 0.0 };
                (r - l) * inv
            })
            .collect()
    }

    /// Trapezoidal `int u v dx` (boundary values are zero).
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.dx() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `int g h dx` for edge fields.
    pub fn edge_inner(&self, g: &[f64], h: &[f64]) -> f64 {
        self.dx() * g.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `int |u|^p dx` (the integral, not its p-th root).
    pub fn lp_norm(&self, u: &[f64], p: f64) -> f64 {
        self.dx() * u.iter().map(|v| v.abs().powf(p)).sum::<f64>()
    }

    /// `int |g|^p dx` for edge fields.
    pub fn edge_lp(&self, g: &[f64], p: f64) -> f64 {
        self.lp_norm(g, p)
    }

    /// Best Poincaré constant `L / pi` on `H_0^1(0, L)`.
    pub fn poincare_constant(&self) -> f64 {
        self.length / std::f64::consts::PI
    }

    pub fn solve_shifted(&self, rhs: &[f64], alpha: f64) -> Vec<f64> {
        ShiftedOperator::new(self, alpha).solve(rhs)
    }
}

/// Factored `I - (1 + alpha) D2` for repeated solves.
#[derive(Debug, Clone)]
pub struct ShiftedOperator {
    off: f64,
    /// modified super-diagonal from forward elimination
    upper: Vec<f64>,
    /// reciprocal pivots
    pivot_inv: Vec<f64>,
}

impl ShiftedOperator {
    pub fn new(grid: &Grid, alpha: f64) -> Self {
        assert!(alpha >= 0.0, "alpha must be non-negative");
        let n = grid.len();
        let beta = (1.0 + alpha) / (grid.dx() * grid.dx());
        let diag = 1.0 + 2.0 * beta;
        let off = -beta;
        let mut upper = vec![0.0; n];
        let mut pivot_inv = vec![0.0; n];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let pivot = diag - if i > 0 { off * prev_upper } else { 0.0 };
            pivot_inv[i] = 1.0 / pivot;
            upper[i] = off / pivot;
            prev_upper = upper[i];
        }
        Self { off, upper, pivot_inv }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let prev = if i > 0 { w[i - 1] } else { 0.0 };
            w[i] = (rhs[i] - self.off * prev) * self.pivot_inv[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            w[i] -= self.upper[i] * w[i + 1];
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn d2_examples() {
        let g = Grid::new(1.0, 3).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.d2_apply(&[0.0, 1.0, 0.0]), vec![16.0, -32.0, 16.0]);
        assert_eq!(g.d2_apply(&[0.0; 3]), vec![0.0; 3]);

        let g = Grid::new(1.0, 200).unwrap();
        let u = g.sample(|x| (PI * x).sin());
        let d2 = g.d2_apply(&u);
        let err = d2.iter().zip(&u).map(|(a, b)| (a + PI * PI * b).abs()).fold(0.0, f64::max);
        assert!(err <= PI.powi(4) / 12.0 * g.dx().powi(2) * 1.001);
    }

    #[test]
    fn d1_examples() {
        let g = Grid::new(1.0, 100).unwrap();
        let u = g.nodes();
        let d1 = g.d1_apply(&u);
        for v in &d1[..g.len() - 1] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let u = g.sample(|x| (PI * x).sin());
        let d1 = g.d1_apply(&u);
        for (i, v) in d1.iter().enumerate() {
            assert!((v - PI * (PI * g.x(i)).cos()).abs() < PI.powi(3) / 6.0 * g.dx().powi(2) * 1.01);
        }
        assert_eq!(g.d1_apply(&g.zeros()), g.zeros());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn shifted_solve_small_dense() {
        // (I - D2) with dx = 1/4: tridiag(-16, 33, -16); dense Gaussian elimination oracle
        let g = Grid::new(1.0, 3).unwrap();
        let w = g.solve_shifted(&[1.0, 0.0, 0.0], 0.0);
        let mut a = [[33.0, -16.0, 0.0, 1.0], [-16.0, 33.0, -16.0, 0.0], [0.0, -16.0, 33.0, 0.0]];
        for k in 0..3 {
            for r in (k + 1)..3 {
                let f = a[r][k] / a[k][k];
                for c in k..4 {
                    a[r][c] -= f * a[k][c];
                }
            }
        }
        let mut x = [0.0; 3];
        for r in (0..3).rev() {
            let s: f64 = ((r + 1)..3).map(|c| a[r][c] * x[c]).sum();
            x[r] = (a[r][3] - s) / a[r][r];
        }
        for i in 0..3 {
            assert!((w[i] - x[i]).abs() < 1e-15);
        }
        assert_eq!(g.solve_shifted(&[0.0; 3], 0.3), vec![0.0; 3]);
    }

    #[test]
    fn lp_and_poincare() {
        let g = Grid::new(1.0, 400).unwrap();
        let u = g.sample(|x| (PI * x).sin());
        assert!((g.lp_norm(&u, 2.0) - 0.5).abs() < 1e-5);
        assert!((g.lp_norm(&u, 3.0) - 4.0 / (3.0 * PI)).abs() < 1e-5);
        assert_eq!(g.lp_norm(&g.zeros(), 2.0), 0.0);
        assert!((Grid::new(1.0, 3).unwrap().poincare_constant() - 1.0 / PI).abs() < 1e-16);
        assert!((Grid::new(PI, 3).unwrap().poincare_constant() - 1.0).abs() < 1e-16);
        assert!((Grid::new(2.0, 3).unwrap().poincare_constant() - 2.0 / PI).abs() < 1e-16);
    }

    #[test]
    fn invalid_grids() {
        assert!(Grid::new(0.0, 10).is_err());
        assert!(Grid::new(1.0, 2).is_err());
    }

    fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, n)
    }

    proptest! {
        #[test]
        fn d2_symmetric_negative((n, u, v) in (3usize..40).prop_flat_map(|n| (Just(n), field(n), field(n)))) {
            let g = Grid::new(1.3, n).unwrap();
            let lhs = g.inner(&g.d2_apply(&u), &v);
            let rhs = g.inner(&u, &g.d2_apply(&v));
            let scale = 1.0 / (g.dx() * g.dx());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
            prop_assert!(g.inner(&g.d2_apply(&u), &u) <= 1e-12 * scale);
            // summation by parts on edges
            let gu = g.gradient(&u);
            let sbp = -g.inner(&g.d2_apply(&u), &u) - g.edge_inner(&gu, &gu);
            prop_assert!(sbp.abs() <= 1e-12 * scale);
            let div = g.divergence(&gu);
            prop_assert!(max_abs(&div.iter().zip(g.d2_apply(&u)).map(|(a, b)| a - b).collect::<Vec<_>>()) <= 1e-12 * scale);
        }

        #[test]
        fn shifted_round_trip(idx in 0usize..3, alpha in 0.0f64..2.0, seed in field(200)) {
            let n = [3usize, 17, 200][idx];
            let g = Grid::new(1.0, n).unwrap();
            let w: Vec<f64> = seed[..n].to_vec();
            let d2 = g.d2_apply(&w);
            let rhs: Vec<f64> = w.iter().zip(&d2).map(|(a, b)| a - (1.0 + alpha) * b).collect();
            let back = g.solve_shifted(&rhs, alpha);
            let res: Vec<f64> = {
                let d2b = g.d2_apply(&back);
                back.iter().zip(&d2b).zip(&rhs).map(|((a, b), r)| a - (1.0 + alpha) * b - r).collect()
            };
            prop_assert!(max_abs(&res) <= 1e-12 * max_abs(&rhs).max(1e-300));
            let diff: Vec<f64> = back.iter().zip(&w).map(|(a, b)| a - b).collect();
            prop_assert!(max_abs(&diff) <= 1e-12);
        }

        #[test]
        fn discrete_poincare(n in 100usize..300, u in field(300)) {
            let g = Grid::new(1.0, n).unwrap();
            let u = &u[..n];
            let gu = g.gradient(u);
            let lhs = g.lp_norm(u, 2.0).sqrt();
            let rhs = g.poincare_constant() * g.edge_inner(&gu, &gu).sqrt();
            prop_assert!(lhs <= 1.05 * rhs + 1e-14);
        }
    }
}
