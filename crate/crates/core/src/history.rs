//! Prescribed past and computed trajectory, and the hereditary integrals over both.
//!
//! The `s`-integral `int_0^inf mu(s) w(t - s) ds` is split at `s = t`: ages in
//! `[0, t]` come from stored records through product-trapezoid weights (exact
//! for `w` affine between records), ages beyond `t` come from the prescribed
//! history in closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::MemoryKernel;
use crate::kernel::profile::{phi1, phi2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum HistoryFamily {
    Zero,
    /// `y0(x, tau) = Y(x)`
    Stationary,
    /// `y0(x, tau) = exp(-rate tau) Y(x)`
    Decaying { rate: f64 },
    /// `y0(x, tau) = Re[exp(-rho tau)] Y(x)`; carries the past of manufactured solutions.
    Manufactured { rho_re: f64, rho_im: f64 },
}

/// Past data `y(x, -tau) = y0(x, tau)` for `tau >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrescribedHistory {
    family: HistoryFamily,
    profile: Vec<f64>,
    profile_grad_sq: f64,
}

impl PrescribedHistory {
    pub fn new(grid: &Grid, family: HistoryFamily, profile: Vec<f64>) -> Result<Self> {
        if profile.len() != grid.len() {
            return Err(Error::InvalidParameter("history profile length does not match grid".into()));
        }
        if let HistoryFamily::Decaying { rate } = family {
            if !(rate > 0.0) {
                return Err(Error::InvalidParameter(format!("decay rate {rate} must be positive")));
            }
        }
        let profile = if family == HistoryFamily::Zero { grid.zeros() } else { profile };
        let g = grid.gradient(&profile);
        Ok(Self { family, profile_grad_sq: grid.edge_inner(&g, &g), profile })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self::new(grid, HistoryFamily::Zero, grid.zeros()).unwrap()
    }

    pub fn family(&self) -> HistoryFamily {
        self.family
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Exponent `rho` of the time factor `Re[exp(-rho tau)]`; `None` for zero history.
    pub fn rho(&self) -> Option<Complex64> {
        match self.family {
            HistoryFamily::Zero => None,
            HistoryFamily::Stationary => Some(Complex64::new(0.0, 0.0)),
            HistoryFamily::Decaying { rate } => Some(Complex64::new(rate, 0.0)),
            HistoryFamily::Manufactured { rho_re, rho_im } => Some(Complex64::new(rho_re, rho_im)),
        }
    }

    pub fn time_factor(&self, tau: f64) -> f64 {
        self.rho().map_or(0.0, |rho| (-rho * tau).exp().re)
    }

    pub fn at(&self, tau: f64) -> Vec<f64> {
        let f = self.time_factor(tau);
        self.profile.iter().map(|v| f * v).collect()
    }

    /// `m0 = sup_{tau >= 0} int |d_x y0(tau)|^2 dx`
    pub fn m0(&self) -> f64 {
        match self.rho() {
            None => 0.0,
            Some(_) if self.profile_grad_sq == 0.0 => 0.0,
            Some(rho) if rho.re < 0.0 => f64::INFINITY,
            Some(_) => self.profile_grad_sq,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Record {
    pub t: f64,
    pub y: Vec<f64>,
}

/// Merge policy for old records. `tolerance = 0` keeps every record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarsenPolicy {
    pub tolerance: f64,
    /// records younger than this are never merged
    pub min_age: f64,
    /// pushes between automatic passes
    pub every: usize,
}

impl Default for CoarsenPolicy {
    fn default() -> Self {
        Self { tolerance: 1e-9, min_age: 0.0, every: 16 }
    }
}

impl CoarsenPolicy {
    pub fn disabled() -> Self {
        Self { tolerance: 0.0, min_age: f64::INFINITY, every: usize::MAX }
    }
}

/// Hereditary integrals at one instant.
#[derive(Debug, Clone)]
pub struct MemoryEval {
    /// nodal `int_0^inf mu(s) y(t - s) ds`
    pub conv: Vec<f64>,
    pub mu_tail: Option<f64>,
    pub mu_prime_tail: Option<f64>,
}

/// Recursive convolution state for a kernel written as `sum_j c_j exp(-beta_j s)`.
///
/// Each mode carries `int_0^t c e^(-beta s) w(t - s) ds` for `w = y` (nodal),
/// `w = 1` and `w = |y_x|^2`, updated exactly for `w` affine on each step.
#[derive(Debug, Clone)]
struct Modal {
    modes: Vec<(f64, f64)>,
    conv: Vec<Vec<f64>>,
    weight: Vec<f64>,
    sq: Vec<f64>,
    last_sq: f64,
}

impl Modal {
    fn advance(&mut self, prev: &[f64], next: &[f64], next_sq: f64, h: f64) {
        for (j, &(c, beta)) in self.modes.iter().enumerate() {
            let x = beta * h;
            let decay = (-x).exp();
            let p1 = phi1(x);
            let p2 = phi2(x);
            let w_old = c * h * p2;
            let w_new = c * h * (p1 - p2);
            for ((m, a), b) in self.conv[j].iter_mut().zip(prev).zip(next) {
                *m = decay * *m + w_old * a + w_new * b;
            }
            self.weight[j] = decay * self.weight[j] + w_old + w_new;
            self.sq[j] = decay * self.sq[j] + w_old * self.last_sq + w_new * next_sq;
        }
        self.last_sq = next_sq;
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Direct { policy: CoarsenPolicy, since_coarsen: usize },
    Modal { state: Box<Modal>, retain: Option<f64> },
}

/// `sum w_r`, `sum w_r y_r` and `sum w_r |G y_r|^2` over the computed part of the trajectory.
struct Head {
    weight: f64,
    conv: Vec<f64>,
    sq: f64,
}

#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    grid: Grid,
    prescribed: PrescribedHistory,
    records: Vec<Record>,
    origin: Option<f64>,
    backend: Backend,
}

impl HistoryBuffer {
    /// Record-based buffer: product-trapezoid quadrature over every stored record.
    pub fn new(grid: Grid, prescribed: PrescribedHistory, policy: CoarsenPolicy) -> Self {
        Self {
            grid,
            prescribed,
            records: Vec::new(),
            origin: None,
            backend: Backend::Direct { policy, since_coarsen: 0 },
        }
    }

    /// Recursive buffer for kernels with an exponential-sum form on `[0, horizon]`.
    ///
    /// Results are only valid for the kernel passed here. Records older than
    /// `retain` are dropped (they are kept only for [`Self::state_at`]).
    pub fn modal(
        grid: Grid,
        prescribed: PrescribedHistory,
        k: &MemoryKernel,
        horizon: f64,
        retain: Option<f64>,
    ) -> Result<Self> {
        let modes = k.exponential_sum(horizon, 1e-10).ok_or_else(|| {
            Error::InvalidParameter("kernel has no exponential-sum representation".into())
        })?;
        let m = modes.len();
        let state = Modal {
            conv: vec![grid.zeros(); m],
            weight: vec![0.0; m],
            sq: vec![0.0; m],
            last_sq: 0.0,
            modes,
        };
        Ok(Self {
            grid,
            prescribed,
            records: Vec::new(),
            origin: None,
            backend: Backend::Modal { state: Box::new(state), retain },
        })
    }

    pub fn is_modal(&self) -> bool {
        matches!(self.backend, Backend::Modal { .. })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn prescribed(&self) -> &PrescribedHistory {
        &self.prescribed
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn newest(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn push_state(&mut self, t: f64, y: Vec<f64>) -> Result<()> {
        if let Some(last) = self.records.last() {
            if !(t > last.t) {
                return Err(Error::Ordering { last: last.t, new: t });
            }
        }
        if y.len() != self.grid.len() {
            return Err(Error::InvalidParameter("state length does not match grid".into()));
        }
        match &mut self.backend {
            Backend::Direct { since_coarsen, .. } => *since_coarsen += 1,
            Backend::Modal { state, retain } => {
                let g = self.grid.gradient(&y);
                let sq = self.grid.edge_inner(&g, &g);
                match self.records.last() {
                    Some(prev) => state.advance(&prev.y, &y, sq, t - prev.t),
                    None => state.last_sq = sq,
                }
                if let Some(window) = *retain {
                    let keep_from = self.records.partition_point(|r| r.t < t - window).saturating_sub(1);
                    if keep_from > 0 {
                        self.records.drain(..keep_from);
                    }
                }
            }
        }
        self.origin.get_or_insert(t);
        self.records.push(Record { t, y });
        Ok(())
    }

    /// True when an automatic coarsening pass is due.
    pub fn coarsen_due(&self) -> bool {
        match self.backend {
            Backend::Direct { policy, since_coarsen } => {
                policy.tolerance > 0.0 && since_coarsen >= policy.every && self.records.len() > 4
            }
            Backend::Modal { .. } => false,
        }
    }

    fn check_cover(&self, t: f64) -> Result<()> {
        let (origin, last) = match (self.origin, self.records.last()) {
            (Some(o), Some(l)) => (o, l),
            _ => return Err(Error::MissingHistory { t, age: 0.0 }),
        };
        if origin.abs() > 1e-12 {
            return Err(Error::MissingHistory { t, age: t - origin });
        }
        if (t - last.t).abs() > 1e-12 * (1.0 + t.abs()) {
            return Err(Error::MissingHistory { t, age: 0.0 });
        }
        Ok(())
    }

    /// Product-trapezoid weights per record for `mu` (or `mu'`).
    fn weights(&self, k: &MemoryKernel, t: f64, derivative: bool) -> Vec<f64> {
        let n = self.records.len();
        let mut w = vec![0.0; n];
        for r in 0..n.saturating_sub(1) {
            let older = t - self.records[r].t;
            let newer = t - self.records[r + 1].t;
            let (w_newer, w_older) = if derivative {
                k.derivative_linear_weights(newer.max(0.0), older)
            } else {
                k.linear_weights(newer.max(0.0), older)
            };
            w[r] += w_older;
            w[r + 1] += w_newer;
        }
        w
    }

    fn direct_head(&self, w: &[f64], squares: bool) -> Head {
        let grid = &self.grid;
        let mut conv = grid.zeros();
        let mut g = vec![0.0; grid.len() + 1];
        let mut sq = 0.0;
        for (rec, &wr) in self.records.iter().zip(w) {
            if wr == 0.0 {
                continue;
            }
            for (c, y) in conv.iter_mut().zip(&rec.y) {
                *c += wr * y;
            }
            if squares {
                grid.gradient_into(&rec.y, &mut g);
                sq += wr * grid.edge_inner(&g, &g);
            }
        }
        Head { weight: w.iter().sum(), conv, sq }
    }

    fn modal_head(&self, state: &Modal, derivative: bool) -> Head {
        let mut conv = self.grid.zeros();
        let (mut weight, mut sq) = (0.0, 0.0);
        for (j, &(_, beta)) in state.modes.iter().enumerate() {
            let f = if derivative { -beta } else { 1.0 };
            for (c, m) in conv.iter_mut().zip(&state.conv[j]) {
                *c += f * m;
            }
            weight += f * state.weight[j];
            sq += f * state.sq[j];
        }
        Head { weight, conv, sq }
    }

    fn head(&self, k: &MemoryKernel, t: f64, derivative: bool, squares: bool) -> Head {
        match &self.backend {
            Backend::Direct { .. } => self.direct_head(&self.weights(k, t, derivative), squares),
            Backend::Modal { state, .. } => self.modal_head(state, derivative),
        }
    }

    /// `int_0^inf f(s) |G(y_now - y(t - s))|^2 ds` from a head and the prescribed tail.
    fn tail_norm(
        &self,
        head: &Head,
        g_now: &[f64],
        t: f64,
        tail: &dyn Fn(f64, Complex64) -> Result<Complex64>,
    ) -> Result<f64> {
        let grid = &self.grid;
        let a = grid.edge_inner(g_now, g_now);
        let g_conv = grid.gradient(&head.conv);
        let mut total = a * head.weight - 2.0 * grid.edge_inner(g_now, &g_conv) + head.sq;
        let zero = Complex64::new(0.0, 0.0);
        total += a * tail(t, zero)?.re;
        if let Some(rho) = self.prescribed.rho() {
            let g_y = grid.gradient(&self.prescribed.profile);
            let b = grid.edge_inner(g_now, &g_y);
            let c = self.prescribed.profile_grad_sq;
            if b != 0.0 {
                total -= 2.0 * b * tail(t, rho)?.re;
            }
            if c != 0.0 {
                let two_re = Complex64::new(2.0 * rho.re, 0.0);
                total += c * 0.5 * (tail(t, two_re)?.re + tail(t, 2.0 * rho)?.re);
            }
        }
        Ok(total)
    }

    /// Evaluates the convolution and, optionally, both squared-gradient tails at `t`.
    pub fn evaluate(&self, k: &MemoryKernel, t: f64, tails: bool) -> Result<MemoryEval> {
        self.check_cover(t)?;
        let head = self.head(k, t, false, tails);
        let mut conv = head.conv.clone();
        let lap = match self.prescribed.rho() {
            Some(rho) => k.exp_tail(t, rho)?.re,
            None => 0.0,
        };
        if lap != 0.0 {
            for (c, y) in conv.iter_mut().zip(&self.prescribed.profile) {
                *c += lap * y;
            }
        }
        if !tails {
            return Ok(MemoryEval { conv, mu_tail: None, mu_prime_tail: None });
        }
        let g_now = self.grid.gradient(&self.records.last().unwrap().y);
        // a history growing faster than the kernel decays has no finite tail
        let settle = |r: Result<f64>| match r {
            Ok(v) => Ok(v),
            Err(Error::NonIntegrableKernel(_)) => Ok(f64::NAN),
            Err(e) => Err(e),
        };
        let mu_tail = settle(self.tail_norm(&head, &g_now, t, &|t, r| k.exp_tail(t, r)))?;
        let dhead = self.head(k, t, true, true);
        let mu_prime_tail = settle(self.tail_norm(&dhead, &g_now, t, &|t, r| k.derivative_exp_tail(t, r)))?;
        let mu_tail = if mu_tail < 0.0 { 0.0 } else { mu_tail };
        let mu_prime_tail = if mu_prime_tail > 0.0 { 0.0 } else { mu_prime_tail };
        Ok(MemoryEval { conv, mu_tail: Some(mu_tail), mu_prime_tail: Some(mu_prime_tail) })
    }

    /// Nodal `int_0^inf mu(s) y(t - s) ds`.
    pub fn convolve(&self, k: &MemoryKernel, t: f64) -> Result<Vec<f64>> {
        Ok(self.evaluate(k, t, false)?.conv)
    }

    /// `int_0^inf mu(s) y_xx(t - s) ds` in divergence form.
    pub fn memory_convolution(&self, k: &MemoryKernel, t: f64) -> Result<Vec<f64>> {
        Ok(self.grid.d2_apply(&self.convolve(k, t)?))
    }

    /// `int int mu(s) |y_x(t) - y_x(t - s)|^2 ds dx`
    pub fn mu_tail_norm(&self, k: &MemoryKernel, t: f64) -> Result<f64> {
        Ok(self.evaluate(k, t, true)?.mu_tail.unwrap())
    }

    /// `int int mu'(s) |y_x(t) - y_x(t - s)|^2 ds dx`
    pub fn mu_prime_tail_norm(&self, k: &MemoryKernel, t: f64) -> Result<f64> {
        Ok(self.evaluate(k, t, true)?.mu_prime_tail.unwrap())
    }

    /// `y(., time)` for any `time <= newest`, interpolating linearly between records.
    pub fn state_at(&self, time: f64) -> Result<Vec<f64>> {
        if time < 0.0 {
            return Ok(self.prescribed.at(-time));
        }
        let last = self.records.last().ok_or(Error::MissingHistory { t: time, age: 0.0 })?;
        if time > last.t + 1e-12 {
            return Err(Error::MissingHistory { t: time, age: 0.0 });
        }
        if time < self.records[0].t - 1e-12 {
            return Err(Error::MissingHistory { t: last.t, age: last.t - time });
        }
        let i = self.records.partition_point(|r| r.t < time);
        if i == 0 {
            return Ok(self.records[0].y.clone());
        }
        if i >= self.records.len() {
            return Ok(last.y.clone());
        }
        let (a, b) = (&self.records[i - 1], &self.records[i]);
        let th = (time - a.t) / (b.t - a.t);
        Ok(a.y.iter().zip(&b.y).map(|(u, v)| u + th * (v - u)).collect())
    }
    /// One pass merging adjacent old record pairs by `mu`-weighted averaging.
    ///
    /// A pair merges when the kernel mass it spans (as a fraction of the total)
    /// times the merged record's departure from the affine interpolant of its
    /// neighbours (relative to the current state) is below the tolerance.
    pub fn coarsen(&mut self, k: &MemoryKernel) {
        let tol = match &mut self.backend {
            Backend::Direct { policy, since_coarsen } => {
                *since_coarsen = 0;
                policy.tolerance
            }
            Backend::Modal { .. } => return,
        };
        let min_age = match self.backend {
            Backend::Direct { policy, .. } => policy.min_age,
            Backend::Modal { .. } => unreachable!(),
        };
        let n = self.records.len();
        if tol <= 0.0 || n < 5 {
            return;
        }
        let t = self.records[n - 1].t;
        let scale = self.records[n - 1].y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mass = k.mass();
        let mut out: Vec<Record> = Vec::with_capacity(n);
        let mut old = std::mem::take(&mut self.records).into_iter().map(Some).collect::<Vec<_>>();
        out.push(old[0].take().unwrap());
        let mut r = 1;
        while r + 2 < n {
            let (tr, tr1) = (old[r].as_ref().unwrap().t, old[r + 1].as_ref().unwrap().t);
            if t - tr1 < min_age {
                break;
            }
            let prev = out.last().unwrap();
            let next = old[r + 2].as_ref().unwrap();
            let (wr, wr1) = (k.value(t - tr).abs(), k.value(t - tr1).abs());
            let (a, b) = if wr + wr1 > 0.0 { (wr / (wr + wr1), wr1 / (wr + wr1)) } else { (0.5, 0.5) };
            let tm = a * tr + b * tr1;
            let yr = &old[r].as_ref().unwrap().y;
            let yr1 = &old[r + 1].as_ref().unwrap().y;
            let th = (tm - prev.t) / (next.t - prev.t);
            let mut defect = 0.0f64;
            let ym: Vec<f64> = yr
                .iter()
                .zip(yr1)
                .zip(prev.y.iter().zip(&next.y))
                .map(|((u, v), (p, q))| {
                    let m = a * u + b * v;
                    defect = defect.max((m - (p + th * (q - p))).abs());
                    m
                })
                .collect();
            let span = if mass > 0.0 { k.integral(t - next.t, t - prev.t) / mass } else { 0.0 };
            if span * defect <= tol * scale {
                out.push(Record { t: tm, y: ym });
                r += 2;
            } else {
                out.push(old[r].take().unwrap());
                r += 1;
            }
        }
        for rec in old.into_iter().skip(r).flatten() {
            out.push(rec);
        }
        self.records = out;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup(n: usize) -> (Grid, Vec<f64>) {
        let g = Grid::new(1.0, n).unwrap();
        let y = g.sample(|x| (PI * x).sin());
        (g, y)
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn zero_everything() {
        let (g, _) = setup(10);
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let mut buf = HistoryBuffer::new(g, PrescribedHistory::zero(&g), CoarsenPolicy::disabled());
        buf.push_state(0.0, g.zeros()).unwrap();
        buf.push_state(0.1, g.zeros()).unwrap();
        assert_eq!(buf.memory_convolution(&k, 0.1).unwrap(), g.zeros());
        assert_eq!(buf.mu_tail_norm(&k, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn frozen_trajectory_is_split_invariant() {
        let (g, y) = setup(20);
        let expected: Vec<f64> = g.d2_apply(&y).iter().map(|v| 0.5 * v).collect();
        for k in [MemoryKernel::exponential(0.5, 1.0).unwrap(), MemoryKernel::polynomial(1.0, 3.0).unwrap()] {
            let hist = PrescribedHistory::new(&g, HistoryFamily::Stationary, y.clone()).unwrap();
            let mut buf = HistoryBuffer::new(g, hist, CoarsenPolicy::disabled());
            for i in 0..=100 {
                let t = i as f64 * 0.01;
                buf.push_state(t, y.clone()).unwrap();
                let m = buf.memory_convolution(&k, t).unwrap();
                assert!(max_diff(&m, &expected) < 1e-12 * 200.0, "t = {t}");
                let e = buf.evaluate(&k, t, true).unwrap();
                assert!(e.mu_tail.unwrap().abs() < 1e-14);
                assert!(e.mu_prime_tail.unwrap().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_trajectory_against_stationary_history() {
        let (g, y) = setup(30);
        let gy = g.gradient(&y);
        let norm = g.edge_inner(&gy, &gy);
        let cases = [
            (MemoryKernel::exponential(0.5, 1.0).unwrap(), 0.5),
            (MemoryKernel::polynomial(1.0, 3.0).unwrap(), 1.0),
        ];
        for (k, mu0) in cases {
            let hist = PrescribedHistory::new(&g, HistoryFamily::Stationary, y.clone()).unwrap();
            let mut buf = HistoryBuffer::new(g, hist, CoarsenPolicy::disabled());
            // the trajectory is zero only from t = 0 on: ages <= t see zero, older see Y
            buf.push_state(0.0, g.zeros()).unwrap();
            // evaluating at t = 0: all ages see the history, the current state is zero
            let e = buf.evaluate(&k, 0.0, true).unwrap();
            assert!((e.mu_tail.unwrap() - k.mass() * norm).abs() < 1e-12 * norm);
            assert!((e.mu_prime_tail.unwrap() + mu0 * norm).abs() < 1e-12 * norm);
        }
    }

    #[test]
    fn synthetic_exponential_profile_tail() {
        // y(t) - y(t - s) has gradient c (1 - e^{-s}) on every edge: y(t-s) = -(1-e^{-s}) Y with
        // y(t) = 0 ... build via records y(t - s) = (1 - e^{-s}) * Y so difference is -(1-e^{-s}) Y.
        let (g, y) = setup(16);
        let gy = g.gradient(&y);
        let norm = g.edge_inner(&gy, &gy);
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let t_end = 40.0;
        let hist = PrescribedHistory::new(&g, HistoryFamily::Stationary, y.clone()).unwrap();
        let mut buf = HistoryBuffer::new(g, hist, CoarsenPolicy::disabled());
        let steps = 40_000;
        for i in 0..=steps {
            let t = t_end * i as f64 / steps as f64;
            let s = t_end - t;
            let f = -(-s).exp_m1();
            buf.push_state(t, y.iter().map(|v| f * v).collect()).unwrap();
        }
        // int_0^40 0.5 e^{-s} (1 - e^{-s})^2 ds + int_40^inf 0.5 e^{-s} ds (history Y vs current 0)
        let s = t_end;
        let exact = 0.5 * ((1.0 - (-s).exp()) - (1.0 - (-2.0 * s).exp()) + (1.0 - (-3.0 * s).exp()) / 3.0)
            + 0.5 * (-s).exp();
        let got = buf.mu_tail_norm(&k, t_end).unwrap();
        assert!((got - exact * norm).abs() < 1e-7 * norm, "{got} vs {}", exact * norm);
    }

    #[test]
    fn ordering_and_missing_history() {
        let (g, y) = setup(5);
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let mut buf = HistoryBuffer::new(g, PrescribedHistory::zero(&g), CoarsenPolicy::disabled());
        assert!(matches!(buf.convolve(&k, 0.0), Err(Error::MissingHistory { .. })));
        buf.push_state(0.0, y.clone()).unwrap();
        assert!(matches!(buf.push_state(0.0, y.clone()), Err(Error::Ordering { .. })));
        assert!(matches!(buf.convolve(&k, 0.5), Err(Error::MissingHistory { .. })));
        buf.push_state(0.5, y.clone()).unwrap();
        assert_eq!(buf.newest().unwrap().y, y);
        assert_eq!(buf.state_at(0.25).unwrap(), y);
    }

    #[test]
    fn coarsen_empty_is_noop() {
        let (g, _) = setup(5);
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let mut buf = HistoryBuffer::new(g, PrescribedHistory::zero(&g), CoarsenPolicy::default());
        buf.coarsen(&k);
        assert!(buf.is_empty());
    }

    #[test]
    fn coarsened_convolution_tracks_full() {
        let (g, y) = setup(12);
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let hist = PrescribedHistory::new(&g, HistoryFamily::Stationary, y.clone()).unwrap();
        let policy = CoarsenPolicy { tolerance: 1e-9, min_age: 0.0, every: 16 };
        let mut full = HistoryBuffer::new(g, hist.clone(), CoarsenPolicy::disabled());
        let mut coarse = HistoryBuffer::new(g, hist, policy);
        let dt = 1e-3;
        for i in 0..10_000 {
            let t = i as f64 * dt;
            let f = (-0.3 * t).exp() * (2.0 * t).cos();
            let state: Vec<f64> = y.iter().map(|v| f * v).collect();
            full.push_state(t, state.clone()).unwrap();
            coarse.push_state(t, state).unwrap();
            if coarse.coarsen_due() {
                coarse.coarsen(&k);
            }
        }
        let t = 9999.0 * dt;
        let a = full.convolve(&k, t).unwrap();
        let b = coarse.convolve(&k, t).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff(&a, &b) <= 1e-8 * scale, "{}", max_diff(&a, &b) / scale);
        assert!(coarse.len() * 10 < full.len() * 7, "{} records", coarse.len());
    }

    #[test]
    fn linearity_in_trajectory() {
        let (g, y) = setup(9);
        let z = g.sample(|x| x * (1.0 - x));
        let k = MemoryKernel::polynomial(1.0, 3.0).unwrap();
        let build = |f: &dyn Fn(f64) -> Vec<f64>| {
            let mut b = HistoryBuffer::new(g, PrescribedHistory::zero(&g), CoarsenPolicy::disabled());
            for i in 0..50 {
                let t = i as f64 * 0.02;
                b.push_state(t, f(t)).unwrap();
            }
            b.memory_convolution(&k, 0.98).unwrap()
        };
        let a = build(&|t| y.iter().map(|v| v * t.sin()).collect());
        let b = build(&|t| z.iter().map(|v| v * t * t).collect());
        let c = build(&|t| y.iter().zip(&z).map(|(u, v)| u * t.sin() + v * t * t).collect());
        let sum: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        assert!(max_diff(&sum, &c) < 1e-12);
    }

    #[test]
    fn m0_values() {
        let (g, y) = setup(50);
        let gy = g.gradient(&y);
        let n = g.edge_inner(&gy, &gy);
        let st = PrescribedHistory::new(&g, HistoryFamily::Stationary, y.clone()).unwrap();
        assert_eq!(st.m0(), n);
        let dec = PrescribedHistory::new(&g, HistoryFamily::Decaying { rate: 2.0 }, y.clone()).unwrap();
        assert_eq!(dec.m0(), n);
        assert_eq!(PrescribedHistory::zero(&g).m0(), 0.0);
        let grow = PrescribedHistory::new(&g, HistoryFamily::Manufactured { rho_re: -1.0, rho_im: 0.0 }, y).unwrap();
        assert!(grow.m0().is_infinite());
    }

    fn run_pair(k: &MemoryKernel, family: HistoryFamily, steps: usize) -> (HistoryBuffer, HistoryBuffer, f64) {
        let (g, y) = setup(24);
        let hist = PrescribedHistory::new(&g, family, y.clone()).unwrap();
        let mut direct = HistoryBuffer::new(g, hist.clone(), CoarsenPolicy::disabled());
        let mut modal = HistoryBuffer::modal(g, hist, k, 50.0, None).unwrap();
        let dt = 0.01;
        for i in 0..=steps {
            let t = i as f64 * dt;
            let state: Vec<f64> = y.iter().enumerate().map(|(j, v)| v * (1.3 * t + 0.1 * j as f64).cos()).collect();
            direct.push_state(t, state.clone()).unwrap();
            modal.push_state(t, state).unwrap();
        }
        (direct, modal, steps as f64 * dt)
    }

    #[test]
    fn modal_matches_direct() {
        let cases = [
            (MemoryKernel::exponential(0.5, 1.0).unwrap(), 1e-12),
            (MemoryKernel::polynomial(1.0, 3.0).unwrap(), 1e-8),
        ];
        for (k, tol) in cases {
            for family in [HistoryFamily::Stationary, HistoryFamily::Decaying { rate: 0.7 }, HistoryFamily::Zero] {
                let (direct, modal, t) = run_pair(&k, family, 500);
                let a = direct.evaluate(&k, t, true).unwrap();
                let b = modal.evaluate(&k, t, true).unwrap();
                assert!(max_diff(&a.conv, &b.conv) < tol, "{family:?}");
                let (ma, mb) = (a.mu_tail.unwrap(), b.mu_tail.unwrap());
                assert!((ma - mb).abs() < tol * (1.0 + ma.abs()), "{ma} vs {mb}");
                let (da, db) = (a.mu_prime_tail.unwrap(), b.mu_prime_tail.unwrap());
                assert!((da - db).abs() < 10.0 * tol * (1.0 + da.abs()), "{da} vs {db}");
            }
        }
    }

    #[test]
    fn modal_retention_window() {
        let (g, y) = setup(8);
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let hist = PrescribedHistory::new(&g, HistoryFamily::Stationary, y.clone()).unwrap();
        let mut buf = HistoryBuffer::modal(g, hist, &k, 50.0, Some(1.0)).unwrap();
        for i in 0..=500 {
            let t = i as f64 * 0.01;
            buf.push_state(t, y.iter().map(|v| v * (1.0 + t)).collect()).unwrap();
        }
        assert!(buf.len() <= 102);
        let back = buf.state_at(4.0).unwrap();
        assert!(max_diff(&back, &y.iter().map(|v| v * 5.0).collect::<Vec<_>>()) < 1e-12);
        assert!(matches!(buf.state_at(1.0), Err(Error::MissingHistory { .. })));
        assert!(buf.convolve(&k, 5.0).is_ok());
    }
}
