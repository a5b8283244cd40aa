//! Energy, Lyapunov and stable-set functionals along discrete trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::history::HistoryBuffer;
use crate::kernel::MemoryKernel;
use crate::solver::SimState;

/// One row of a trace. The first fifteen fields form the CSV columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergySample {
    pub t: f64,
    pub e: f64,
    pub j: f64,
    pub i: f64,
    pub phi: f64,
    pub xi: f64,
    pub l: f64,
    pub mu_tail: f64,
    pub mu_prime_tail: f64,
    /// `1/2 int |y'|^2`
    pub kin: f64,
    /// `1/2 int |y'_x|^2`
    pub kin_grad: f64,
    pub lp_grad: f64,
    pub lp_val: f64,
    pub de_dt: f64,
    pub bound_rhs: f64,
    /// `int |y_x|^2`
    pub grad_sq: f64,
    /// `int |y(t) - y(t - s)|^2` for each requested lag `s`
    pub lag_norms: Vec<f64>,
    /// max nodal error against a manufactured solution
    pub exact_error: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 15] = [
    "t", "E", "J", "I", "phi", "xi", "L", "mu_tail", "mu_prime_tail", "kin", "kin_grad", "lp_grad",
    "lp_val", "dE_dt", "bound_rhs",
];

impl EnergySample {
    pub fn columns(&self) -> [f64; 15] {
        [
            self.t,
            self.e,
            self.j,
            self.i,
            self.phi,
            self.xi,
            self.l,
            self.mu_tail,
            self.mu_prime_tail,
            self.kin,
            self.kin_grad,
            self.lp_grad,
            self.lp_val,
            self.de_dt,
            self.bound_rhs,
        ]
    }

    pub fn from_columns(c: [f64; 15]) -> Self {
        Self {
            t: c[0],
            e: c[1],
            j: c[2],
            i: c[3],
            phi: c[4],
            xi: c[5],
            l: c[6],
            mu_tail: c[7],
            mu_prime_tail: c[8],
            kin: c[9],
            kin_grad: c[10],
            lp_grad: c[11],
            lp_val: c[12],
            de_dt: c[13],
            bound_rhs: c[14],
            ..Self::default()
        }
    }
}

/// Terms of `E = 1/2 |y'|^2 + 1/2 |y'_x|^2 + J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub e: f64,
    pub j: f64,
    pub kin: f64,
    pub kin_grad: f64,
    pub grad_sq: f64,
    pub mu_tail: f64,
    pub lp_grad: f64,
    pub lp_val: f64,
    pub ell: f64,
    pub p: f64,
}

impl EnergyParts {
    /// `I = l |y_x|^2 + mu_tail + int |y_x|^p - int |y|^p`
    pub fn modified(&self) -> f64 {
        self.ell * self.grad_sq + self.mu_tail + self.lp_grad - self.lp_val
    }
}

pub fn energy_parts(grid: &Grid, y: &[f64], v: &[f64], mu_tail: f64, ell: f64, p: f64) -> EnergyParts {
    let gy = grid.gradient(y);
    let gv = grid.gradient(v);
    let kin = 0.5 * grid.inner(v, v);
    let kin_grad = 0.5 * grid.edge_inner(&gv, &gv);
    let grad_sq = grid.edge_inner(&gy, &gy);
    let lp_grad = grid.edge_lp(&gy, p);
    let lp_val = grid.lp_norm(y, p);
    let j = 0.5 * ell * grad_sq + 0.5 * mu_tail + (lp_grad - lp_val) / p;
    EnergyParts { e: kin + kin_grad + j, j, kin, kin_grad, grad_sq, mu_tail, lp_grad, lp_val, ell, p }
}

/// Energy of `state`, whose history through `state.t` is held in `buf`.
pub fn energy(state: &SimState, buf: &HistoryBuffer, k: &MemoryKernel, p: f64) -> Result<EnergyParts> {
    let mu_tail = buf.mu_tail_norm(k, state.t)?;
    Ok(energy_parts(buf.grid(), &state.y, &state.v, mu_tail, k.ell(), p))
}

pub fn modified_energy_i(state: &SimState, buf: &HistoryBuffer, k: &MemoryKernel, p: f64) -> Result<f64> {
    Ok(energy(state, buf, k, p)?.modified())
}

/// `phi = int y y' + 1/2 int |y_x|^2 + int y_x y'_x`
pub fn phi(grid: &Grid, y: &[f64], v: &[f64]) -> f64 {
    let gy = grid.gradient(y);
    let gv = grid.gradient(v);
    grid.inner(y, v) + 0.5 * grid.edge_inner(&gy, &gy) + grid.edge_inner(&gy, &gv)
}

/// Running state of `xi`, whose last two terms are time integrals.
#[derive(Debug, Clone, Default)]
pub struct XiAccumulator {
    integral: f64,
    last: Option<f64>,
}

impl XiAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Integral part so far.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Adds the integrand `int (y'_x + y''_x)(mu <> y)_x dx` at the next step time (trapezoid).
    pub fn advance(&mut self, integrand: f64, dt: f64) {
        if let Some(prev) = self.last {
            self.integral += 0.5 * dt * (prev + integrand);
        }
        self.last = Some(integrand);
    }
}

/// `(mu <> y)(t) = int_0^inf mu(s) (y(t) - y(t - s)) ds` from the nodal convolution.
pub fn diamond(y: &[f64], conv: &[f64], mass: f64) -> Vec<f64> {
    y.iter().zip(conv).map(|(a, c)| mass * a - c).collect()
}

/// Integrand of the `xi` time integrals at one instant.
pub fn xi_integrand(grid: &Grid, v: &[f64], a: &[f64], diamond: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().zip(a).map(|(p, q)| p + q).collect();
    grid.edge_inner(&grid.gradient(&w), &grid.gradient(diamond))
}

/// Feeds the current integrand to `acc` and returns
/// `xi = -int y' (mu <> y) - int_0^t int (y'_x + y''_x) (mu <> y)_x`.
pub fn xi_accumulate(acc: &mut XiAccumulator, grid: &Grid, state: &SimState, diamond: &[f64], dt: f64) -> f64 {
    acc.advance(xi_integrand(grid, &state.v, &state.a, diamond), dt);
    -grid.inner(&state.v, diamond) - acc.integral
}

/// `L = eps1 E + phi + eps2 xi`
pub fn lyapunov_l(e: f64, phi: f64, xi: f64, eps1: f64, eps2: f64) -> Result<f64> {
    if !(eps1 > 0.0) || !(eps2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps1 = {eps1} must be positive and eps2 = {eps2} nonnegative")));
    }
    Ok(eps1 * e + phi + eps2 * xi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    pub eps1: f64,
    pub eps2: f64,
    pub c1: f64,
    pub c2: f64,
    pub verified: bool,
}

/// Bounds `c1 E <= L <= c2 E` over the trace. Samples with `E = L = 0` are skipped.
pub fn equivalence_fit(trace: &[EnergySample], eps1: f64, eps2: f64) -> Result<Equivalence> {
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::NEG_INFINITY;
    for (index, s) in trace.iter().enumerate() {
        let l = lyapunov_l(s.e, s.phi, s.xi, eps1, eps2)?;
        if s.e <= 0.0 {
            if l == 0.0 && s.e == 0.0 {
                continue;
            }
            return Err(Error::EquivalenceUndefined { index, energy: s.e, lyapunov: l });
        }
        c1 = c1.min(l / s.e);
        c2 = c2.max(l / s.e);
    }
    if !c1.is_finite() || !c2.is_finite() {
        return Err(Error::DegenerateFit("no sample with positive energy".into()));
    }
    Ok(Equivalence { eps1, eps2, c1, c2, verified: 0.0 < c1 && c1 <= c2 })
}

/// Smallest `eps1` of the form `2 max |phi + eps2 xi| / E`, which gives `c2 / c1 <= 3`.
pub fn fit_eps1(trace: &[EnergySample], eps2: f64) -> f64 {
    let worst = trace
        .iter()
        .filter(|s| s.e > 0.0)
        .map(|s| (s.phi + eps2 * s.xi).abs() / s.e)
        .fold(0.0f64, f64::max);
    (2.0 * worst).max(1e-12)
}

/// Rewrites the `L` column with the given weights.
pub fn refill_lyapunov(trace: &mut [EnergySample], eps1: f64, eps2: f64) -> Result<()> {
    for s in trace.iter_mut() {
        s.l = lyapunov_l(s.e, s.phi, s.xi, eps1, eps2)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub skipped: bool,
    pub reason: Option<String>,
    pub intervals: usize,
    /// max over intervals of `dE/dt - (-|y'_x|^2 + 1/2 mu_prime_tail)` at the interval midpoint
    pub max_violation: f64,
    /// largest increase `E_{n+1} - E_n`
    pub max_increase: f64,
    pub worst_index: Option<usize>,
}

/// Compares discrete energy change with the instantaneous dissipation bound.
pub fn dissipation_check(trace: &[EnergySample], forced: bool) -> DissipationReport {
    if forced {
        return DissipationReport {
            skipped: true,
            reason: Some("forcing present".into()),
            intervals: 0,
            max_violation: 0.0,
            max_increase: 0.0,
            worst_index: None,
        };
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_increase = f64::NEG_INFINITY;
    let mut worst_index = None;
    for (n, w) in trace.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        let rate = (w[1].e - w[0].e) / dt;
        let bound = |s: &EnergySample| -2.0 * s.kin_grad + 0.5 * s.mu_prime_tail;
        let violation = rate - 0.5 * (bound(&w[0]) + bound(&w[1]));
        if violation > max_violation {
            max_violation = violation;
        }
        let inc = w[1].e - w[0].e;
        if inc > max_increase {
            max_increase = inc;
            worst_index = Some(n);
        }
    }
    let intervals = trace.len().saturating_sub(1);
    if intervals == 0 {
        max_violation = 0.0;
        max_increase = 0.0;
    }
    DissipationReport { skipped: false, reason: None, intervals, max_violation, max_increase, worst_index }
}

/// Supremum of `j(nu) = J(nu y)` over `nu >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariBound {
    /// maximiser, `None` when `j` is unbounded
    pub nu_star: Option<f64>,
    pub level: f64,
}

/// `j(nu) = nu^2 Q + nu^p P` with `Q = 1/2 (l |y_x|^2 + mu_tail)` and `P = (int |y_x|^p - int |y|^p) / p`.
pub fn nehari_scale(grid: &Grid, y: &[f64], mu_tail: f64, ell: f64, p: f64) -> Result<NehariBound> {
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::UndefinedScaling("zero state".into()));
    }
    let parts = energy_parts(grid, y, &grid.zeros(), mu_tail, ell, p);
    let q = 0.5 * (ell * parts.grad_sq + mu_tail);
    let pp = (parts.lp_grad - parts.lp_val) / p;
    let unbounded = NehariBound { nu_star: None, level: f64::INFINITY };
    let at_zero = NehariBound { nu_star: Some(0.0), level: 0.0 };
    if p == 2.0 {
        return Ok(if q + pp > 0.0 { unbounded } else { at_zero });
    }
    if pp >= 0.0 {
        return Ok(if q > 0.0 || pp > 0.0 { unbounded } else { at_zero });
    }
    if q <= 0.0 {
        return Ok(at_zero);
    }
    let nu = (2.0 * q / (-p * pp)).powf(1.0 / (p - 2.0));
    Ok(NehariBound { nu_star: Some(nu), level: nu * nu * q + nu.powf(p) * pp })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExponentVariant {
    /// `(p - 2) / 2`
    HalfPminus2,
    /// `p - 2`
    Pminus2,
}

impl ExponentVariant {
    pub fn exponent(self, p: f64) -> f64 {
        match self {
            Self::HalfPminus2 => 0.5 * (p - 2.0),
            Self::Pminus2 => p - 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalCondition {
    pub variant: ExponentVariant,
    pub applicable: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

/// `C^p l^(1-p) (2p/(p-2) E0)^e < l`; not applicable for `p <= 2`.
pub fn global_condition(e0: f64, ell: f64, c: f64, p: f64, variant: ExponentVariant) -> GlobalCondition {
    if p <= 2.0 {
        return GlobalCondition { variant, applicable: false, lhs: f64::NAN, rhs: ell, passed: false };
    }
    let lhs = c.powf(p) * ell.powf(1.0 - p) * (2.0 * p / (p - 2.0) * e0).powf(variant.exponent(p));
    GlobalCondition { variant, applicable: true, lhs, rhs: ell, passed: lhs < ell }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub stable_set_member: bool,
    pub d_upper: f64,
    pub global_condition_lhs: f64,
    pub global_condition_rhs: f64,
    pub exponent_variant: ExponentVariant,
    pub passed: bool,
    /// the other exponent variant on the same inputs
    pub alternate: GlobalCondition,
}

/// Stable-set and global-existence certificate at the initial state.
pub fn certificate(
    grid: &Grid,
    first: &EnergySample,
    y0: &[f64],
    ell: f64,
    p: f64,
    variant: ExponentVariant,
) -> CertificateReport {
    let d_upper = nehari_scale(grid, y0, first.mu_tail, ell, p).map_or(f64::NAN, |b| b.level);
    let c = grid.poincare_constant();
    let main = global_condition(first.e, ell, c, p, variant);
    let other = match variant {
        ExponentVariant::HalfPminus2 => ExponentVariant::Pminus2,
        ExponentVariant::Pminus2 => ExponentVariant::HalfPminus2,
    };
    CertificateReport {
        stable_set_member: first.i > 0.0,
        d_upper,
        global_condition_lhs: main.lhs,
        global_condition_rhs: main.rhs,
        exponent_variant: variant,
        passed: main.passed,
        alternate: global_condition(first.e, ell, c, p, other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    pub a: f64,
    pub b: f64,
    pub a_positive: bool,
    pub b_positive: bool,
}

/// Constants `a` and `b` of the Lyapunov derivative estimate; `c_nu` and `c_embed` default to 1 upstream.
pub fn lemma_constants(nu: f64, ell: f64, p: f64, e0: f64, m0: f64, c_embed: f64, c_nu: f64) -> Result<LemmaConstants> {
    if !(ell > 0.0 && ell < 1.0) {
        return Err(Error::Precondition(format!("l = {ell} must lie in (0, 1)")));
    }
    if !(nu > 0.0 && nu < 1.0 - ell) {
        return Err(Error::Precondition(format!("nu = {nu} must lie in (0, 1 - l)")));
    }
    if !(p > 2.0) {
        return Err(Error::Precondition(format!("p = {p} must exceed 2")));
    }
    let m = 1.0 - ell;
    let e = 0.5 * (p - 2.0);
    let a = c_nu * (1.0 + 2.0 * m * m - (2.0 * p / ((p - 2.0) * ell) * e0).powf(e));
    let b = m / (4.0 * nu)
        + (2.0 * nu + 1.0 / (4.0 * nu)) * m
        + 2.0 * nu * m.powf(p - 1.0) * c_embed * (8.0 / m * e0 + 2.0 * m0 * m0).powf(e);
    Ok(LemmaConstants { a, b, a_positive: a > 0.0, b_positive: b > 0.0 })
}
