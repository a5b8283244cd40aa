//! Semi-implicit time stepping and manufactured solutions.
//!
//! The update solves `(I - (1 + alpha) D2) a = D2 (y + v - conv) + S(y) + f`
//! for the acceleration, then `v += dt a`, `y += dt v`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{self, EnergySample, XiAccumulator};
use crate::grid::{Grid, ShiftedOperator};
use crate::history::{CoarsenPolicy, HistoryBuffer, HistoryFamily, MemoryEval, PrescribedHistory};
use crate::kernel::{KernelFamily, MemoryKernel};

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub t: f64,
}

impl SimState {
    pub fn new(y: Vec<f64>, v: Vec<f64>) -> Self {
        let a = vec![0.0; y.len()];
        Self { y, v, a, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().chain(&self.v).chain(&self.a).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase")]
pub enum TimeProfile {
    /// `T(t) = exp(-lambda t)`
    Exponential { lambda: f64 },
    /// `T(t) = cos(omega t)`
    Cosine { omega: f64 },
}

/// How the manufactured forcing treats space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ForcingVariant {
    /// discrete operators: the semi-discrete solution is exact, only time error remains
    #[default]
    Discrete,
    /// continuous operators: exposes the spatial truncation error
    Analytic,
}

/// Exact solution `y*(x, t) = amplitude T(t) sin(pi x / L)` continued to negative times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manufactured {
    #[serde(flatten)]
    pub profile: TimeProfile,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub variant: ForcingVariant,
}

fn one() -> f64 {
    1.0
}

impl Manufactured {
    pub fn exponential(lambda: f64) -> Self {
        Self { profile: TimeProfile::Exponential { lambda }, amplitude: 1.0, variant: ForcingVariant::Discrete }
    }

    /// `T(t) = Re exp(-sigma t)`
    fn sigma(&self) -> Complex64 {
        match self.profile {
            TimeProfile::Exponential { lambda } => Complex64::new(lambda, 0.0),
            TimeProfile::Cosine { omega } => Complex64::new(0.0, -omega),
        }
    }

    /// `(T, T', T'')`
    pub fn temporal(&self, t: f64) -> (f64, f64, f64) {
        let s = self.sigma();
        let e = (-s * t).exp();
        (e.re, (-s * e).re, (s * s * e).re)
    }

    fn mode(&self, grid: &Grid) -> Vec<f64> {
        let k = PI / grid.length();
        grid.sample(|x| self.amplitude * (k * x).sin())
    }

    pub fn exact(&self, grid: &Grid, t: f64) -> Vec<f64> {
        let f = self.temporal(t).0;
        self.mode(grid).into_iter().map(|v| f * v).collect()
    }

    pub fn velocity(&self, grid: &Grid, t: f64) -> Vec<f64> {
        let f = self.temporal(t).1;
        self.mode(grid).into_iter().map(|v| f * v).collect()
    }

    /// Past data `y*(x, -tau)`.
    pub fn history(&self, grid: &Grid) -> Result<PrescribedHistory> {
        let rho = -self.sigma();
        PrescribedHistory::new(grid, HistoryFamily::Manufactured { rho_re: rho.re, rho_im: rho.im }, self.mode(grid))
    }

    /// `int_0^inf mu(s) T(t - s) ds`, available in closed form for exponential kernels.
    pub fn history_integral(&self, k: &MemoryKernel, t: f64) -> Result<f64> {
        if !matches!(k.family(), KernelFamily::Exponential { .. }) {
            return Err(Error::UnsupportedManufactured("closed-form memory needs an exponential kernel".into()));
        }
        let s = self.sigma();
        let lap = k
            .exp_tail(0.0, -s)
            .map_err(|e| Error::UnsupportedManufactured(format!("memory integral diverges: {e}")))?;
        Ok(((-s * t).exp() * lap).re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SourceMode {
    /// `S(y) = |y|^(p-2) y + (|y_x|^(p-2) y_x)_x`
    #[default]
    Power,
    /// `S(y) + f` with `f` manufactured from an exact solution
    Manufactured(Manufactured),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub p: f64,
    pub t_final: f64,
    #[serde(default = "one_usize")]
    pub sample_stride: usize,
    #[serde(default)]
    pub damping_implicit: bool,
    #[serde(default)]
    pub source_mode: SourceMode,
    /// accept `dt > 0.5 dx` with a warning
    #[serde(default)]
    pub allow_large_dt: bool,
}

fn one_usize() -> usize {
    1
}

impl SolverConfig {
    pub fn new(dt: f64, p: f64, t_final: f64) -> Self {
        Self {
            dt,
            p,
            t_final,
            sample_stride: 1,
            damping_implicit: false,
            source_mode: SourceMode::Power,
            allow_large_dt: false,
        }
    }

    /// Checks the configuration; returns warnings for accepted overrides.
    pub fn validate(&self, grid: &Grid) -> Result<Vec<String>> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.p >= 2.0) {
            return Err(Error::InvalidParameter(format!("p = {} must be at least 2", self.p)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("T_final = {} must be nonnegative", self.t_final)));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParameter("sample_stride must be positive".into()));
        }
        let mut warnings = vec![];
        if self.dt > 0.5 * grid.dx() {
            if !self.allow_large_dt {
                return Err(Error::InvalidParameter(format!(
                    "dt = {} exceeds 0.5 dx = {}; set allow_large_dt to override",
                    self.dt,
                    0.5 * grid.dx()
                )));
            }
            warnings.push(format!("dt = {} exceeds 0.5 dx = {}", self.dt, 0.5 * grid.dx()));
        }
        Ok(warnings)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn forced(&self) -> bool {
        matches!(self.source_mode, SourceMode::Manufactured(_))
    }
}

fn signed_pow(x: f64, e: f64) -> f64 {
    x.signum() * x.abs().powf(e)
}

/// Nodal `|y|^(p-2) y + div(|G y|^(p-2) G y)`.
pub fn power_source(grid: &Grid, y: &[f64], p: f64) -> Vec<f64> {
    let g = grid.gradient(y);
    if p == 2.0 {
        let d = grid.divergence(&g);
        return y.iter().zip(d).map(|(a, b)| a + b).collect();
    }
    let flux: Vec<f64> = g.iter().map(|v| signed_pow(*v, p - 1.0)).collect();
    let d = grid.divergence(&flux);
    y.iter().zip(d).map(|(a, b)| signed_pow(*a, p - 1.0) + b).collect()
}

/// Forcing that makes the manufactured solution exact.
pub fn mms_forcing(grid: &Grid, m: &Manufactured, k: &MemoryKernel, p: f64, t: f64) -> Result<Vec<f64>> {
    let c = m.history_integral(k, t)?;
    if m.amplitude == 0.0 {
        return Ok(grid.zeros());
    }
    let (tt, t1, t2) = m.temporal(t);
    let mode = m.mode(grid);
    let kk = PI / grid.length();
    match m.variant {
        ForcingVariant::Discrete => {
            let h = grid.dx();
            let lam = (2.0 / h * (0.5 * kk * h).sin()).powi(2);
            let y: Vec<f64> = mode.iter().map(|v| tt * v).collect();
            let s = power_source(grid, &y, p);
            let coef = t2 + lam * (tt + t1 + t2) - lam * c;
            Ok(mode.iter().zip(s).map(|(v, s)| coef * v - s).collect())
        }
        ForcingVariant::Analytic => {
            let lam = kk * kk;
            let coef = t2 + lam * (tt + t1 + t2) - lam * c;
            let amp = m.amplitude;
            Ok(grid
                .nodes()
                .into_iter()
                .map(|x| {
                    let (sn, cs) = (kk * x).sin_cos();
                    let y = amp * tt * sn;
                    let yx = amp * tt * kk * cs;
                    let yxx = -amp * tt * kk * kk * sn;
                    let s = if p == 2.0 {
                        y + yxx
                    } else {
                        signed_pow(y, p - 1.0) + (p - 1.0) * yx.abs().powf(p - 2.0) * yxx
                    };
                    coef * amp * sn - s
                })
                .collect())
        }
    }
}

/// Right-hand source for the configured mode.
pub fn source_eval(grid: &Grid, y: &[f64], p: f64, t: f64, mode: &SourceMode, k: &MemoryKernel) -> Result<Vec<f64>> {
    match mode {
        SourceMode::None => Ok(grid.zeros()),
        SourceMode::Power => Ok(power_source(grid, y, p)),
        SourceMode::Manufactured(m) => {
            let f = mms_forcing(grid, m, k, p, t)?;
            Ok(power_source(grid, y, p).into_iter().zip(f).map(|(a, b)| a + b).collect())
        }
    }
}

fn shift(cfg: &SolverConfig) -> f64 {
    if cfg.damping_implicit {
        cfg.dt
    } else {
        0.0
    }
}

/// Acceleration at `state` given the memory convolution there.
fn acceleration(
    grid: &Grid,
    op: &ShiftedOperator,
    state: &SimState,
    conv: &[f64],
    cfg: &SolverConfig,
    k: &MemoryKernel,
) -> Result<Vec<f64>> {
    let w: Vec<f64> = state.y.iter().zip(&state.v).zip(conv).map(|((y, v), c)| y + v - c).collect();
    let source = source_eval(grid, &state.y, cfg.p, state.t, &cfg.source_mode, k)?;
    let rhs: Vec<f64> = grid.d2_apply(&w).into_iter().zip(source).map(|(a, b)| a + b).collect();
    Ok(op.solve(&rhs))
}

fn advance(state: &SimState, a: Vec<f64>, dt: f64) -> SimState {
    let v: Vec<f64> = state.v.iter().zip(&a).map(|(v, a)| v + dt * a).collect();
    let y: Vec<f64> = state.y.iter().zip(&v).map(|(y, v)| y + dt * v).collect();
    SimState { y, v, a, t: state.t + dt }
}

/// One step from `state`; `buf` must hold the trajectory through `state.t` and receives the new state.
pub fn step(state: &SimState, cfg: &SolverConfig, buf: &mut HistoryBuffer, k: &MemoryKernel) -> Result<SimState> {
    let grid = *buf.grid();
    let op = ShiftedOperator::new(&grid, shift(cfg));
    let conv = buf.convolve(k, state.t)?;
    let a = acceleration(&grid, &op, state, &conv, cfg, k)?;
    let next = advance(state, a, cfg.dt);
    if !next.is_finite() {
        return Err(Error::Divergence { step: 0, t: next.t });
    }
    buf.push_state(next.t, next.y.clone())?;
    Ok(next)
}

/// Storage strategy for the hereditary integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendChoice {
    /// recursive exponential-sum form when the kernel admits one, records otherwise
    #[default]
    Auto,
    Records {
        #[serde(default)]
        coarsen: Option<CoarsenPolicy>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    #[serde(default)]
    pub backend: BackendChoice,
    /// lags `s` at which `int |y(t) - y(t - s)|^2` is sampled
    #[serde(default)]
    pub history_lags: Vec<f64>,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
}

fn default_eps1() -> f64 {
    1.0
}

fn default_eps2() -> f64 {
    1e-3
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { backend: BackendChoice::Auto, history_lags: vec![], eps1: default_eps1(), eps2: default_eps2() }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<EnergySample>,
    pub state: SimState,
    pub warnings: Vec<String>,
    /// set when the run stopped early; `trace` holds the samples up to that point
    pub failure: Option<Error>,
    pub history_records: usize,
}

fn build_buffer(
    grid: &Grid,
    k: &MemoryKernel,
    history: &PrescribedHistory,
    cfg: &SolverConfig,
    opts: &RunOptions,
) -> Result<HistoryBuffer> {
    let retain = opts.history_lags.iter().cloned().fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
    match opts.backend {
        BackendChoice::Auto => {
            let horizon = cfg.t_final + 2.0 * cfg.dt;
            if k.exponential_sum(horizon, 1e-10).is_some() {
                let retain = Some(retain.map_or(0.0, |r| r + 2.0 * cfg.dt));
                return HistoryBuffer::modal(*grid, history.clone(), k, horizon, retain);
            }
            Ok(HistoryBuffer::new(*grid, history.clone(), CoarsenPolicy::default()))
        }
        BackendChoice::Records { coarsen } => Ok(HistoryBuffer::new(
            *grid,
            history.clone(),
            coarsen.unwrap_or_else(CoarsenPolicy::disabled),
        )),
    }
}

struct Sampler<'a> {
    grid: &'a Grid,
    k: &'a MemoryKernel,
    cfg: &'a SolverConfig,
    opts: &'a RunOptions,
    exact: Option<Manufactured>,
}

impl Sampler<'_> {
    fn sample(&self, state: &SimState, eval: &MemoryEval, xi: f64, buf: &HistoryBuffer) -> Result<EnergySample> {
        let mu_tail = eval.mu_tail.unwrap_or(f64::NAN);
        let parts = functionals::energy_parts(self.grid, &state.y, &state.v, mu_tail, self.k.ell(), self.cfg.p);
        let phi = functionals::phi(self.grid, &state.y, &state.v);
        let l = functionals::lyapunov_l(parts.e, phi, xi, self.opts.eps1, self.opts.eps2)?;
        let mut lag_norms = Vec::with_capacity(self.opts.history_lags.len());
        for &s in &self.opts.history_lags {
            let past = buf.state_at(state.t - s)?;
            let d: Vec<f64> = state.y.iter().zip(&past).map(|(a, b)| a - b).collect();
            lag_norms.push(self.grid.inner(&d, &d));
        }
        let exact_error = self.exact.map(|m| {
            let ex = m.exact(self.grid, state.t);
            ex.iter().zip(&state.y).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
        });
        Ok(EnergySample {
            t: state.t,
            e: parts.e,
            j: parts.j,
            i: parts.modified(),
            phi,
            xi,
            l,
            mu_tail,
            mu_prime_tail: eval.mu_prime_tail.unwrap_or(f64::NAN),
            kin: parts.kin,
            kin_grad: parts.kin_grad,
            lp_grad: parts.lp_grad,
            lp_val: parts.lp_val,
            de_dt: 0.0,
            bound_rhs: f64::NAN,
            grad_sq: parts.grad_sq,
            lag_norms,
            exact_error,
        })
    }
}

/// Runs from `t = 0` to `T_final`, sampling every `sample_stride` steps and at the end.
///
/// `y(., 0)` is taken from the prescribed history; `y1` is the initial velocity.
pub fn run(
    cfg: &SolverConfig,
    grid: &Grid,
    k: &MemoryKernel,
    history: &PrescribedHistory,
    y1: &[f64],
    opts: &RunOptions,
) -> Result<RunOutput> {
    let warnings = cfg.validate(grid)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    if y1.len() != grid.len() {
        return Err(Error::InvalidParameter("initial velocity length does not match grid".into()));
    }
    let mut buf = build_buffer(grid, k, history, cfg, opts)?;
    let op = ShiftedOperator::new(grid, shift(cfg));
    let exact = match cfg.source_mode {
        SourceMode::Manufactured(m) => Some(m),
        _ => None,
    };
    let sampler = Sampler { grid, k, cfg, opts, exact };
    let steps = cfg.steps();
    let mass = k.mass();

    let mut state = SimState::new(history.at(0.0), y1.to_vec());
    buf.push_state(0.0, state.y.clone())?;
    let mut xi_acc = XiAccumulator::new();
    let mut trace: Vec<EnergySample> = Vec::with_capacity(steps / cfg.sample_stride + 2);
    let mut failure = None;

    for n in 0..=steps {
        let sampling = n % cfg.sample_stride == 0 || n == steps;
        let eval = buf.evaluate(k, state.t, sampling)?;
        state.a = acceleration(grid, &op, &state, &eval.conv, cfg, k)?;
        if !state.is_finite() {
            failure = Some(Error::Divergence { step: n, t: state.t });
            break;
        }
        let dmd = functionals::diamond(&state.y, &eval.conv, mass);
        let xi = functionals::xi_accumulate(&mut xi_acc, grid, &state, &dmd, cfg.dt);
        if sampling {
            let mut s = sampler.sample(&state, &eval, xi, &buf)?;
            if let Some(prev) = trace.last() {
                s.de_dt = (s.e - prev.e) / (s.t - prev.t);
            }
            if !s.e.is_finite() && s.mu_tail.is_finite() {
                failure = Some(Error::Divergence { step: n, t: state.t });
                break;
            }
            trace.push(s);
        }
        if n == steps {
            break;
        }
        let a = std::mem::take(&mut state.a);
        let mut next = advance(&state, a, cfg.dt);
        next.t = (n + 1) as f64 * cfg.dt;
        if !next.is_finite() {
            failure = Some(Error::Divergence { step: n + 1, t: next.t });
            break;
        }
        buf.push_state(next.t, next.y.clone())?;
        if buf.coarsen_due() {
            buf.coarsen(k);
        }
        state = next;
    }
    Ok(RunOutput { trace, state, warnings, failure, history_records: buf.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(1.0, 40).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = grid();
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let cfg = SolverConfig::new(1e-3, 3.0, 0.05);
        let out = run(&cfg, &g, &k, &PrescribedHistory::zero(&g), &g.zeros(), &RunOptions::default()).unwrap();
        assert!(out.failure.is_none());
        assert!(out.state.y.iter().all(|v| *v == 0.0));
        assert!(out.trace.iter().all(|s| s.e == 0.0));
        assert_eq!(out.trace.len(), cfg.steps() + 1);
    }

    #[test]
    fn zero_final_time_gives_one_sample() {
        let g = grid();
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        let cfg = SolverConfig::new(1e-3, 3.0, 0.0);
        let y = g.sample(|x| 0.1 * (PI * x).sin());
        let h = PrescribedHistory::new(&g, HistoryFamily::Stationary, y).unwrap();
        let out = run(&cfg, &g, &k, &h, &g.zeros(), &RunOptions::default()).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].t, 0.0);
    }

    #[test]
    fn source_cases() {
        let g = grid();
        assert!(power_source(&g, &g.zeros(), 3.0).iter().all(|v| *v == 0.0));
        let y = g.sample(|x| (PI * x).sin() + x);
        let s = power_source(&g, &y, 2.0);
        let d = g.d2_apply(&y);
        for i in 0..g.len() {
            assert!((s[i] - (y[i] + d[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn power_source_against_symbolic_derivative() {
        // p = 3, y = sin(pi x): S = |y| y + 2 |y_x| y_xx, at x = 1/4
        let g = Grid::new(1.0, 399).unwrap();
        let y = g.sample(|x| (PI * x).sin());
        let s = power_source(&g, &y, 3.0);
        let i = 99;
        assert!((g.x(i) - 0.25).abs() < 1e-15);
        let x = 0.25f64;
        let (sn, cs) = (PI * x).sin_cos();
        let exact = sn * sn + 2.0 * (PI * cs).abs() * (-PI * PI * sn);
        assert!((s[i] - exact).abs() < 1e-3 * exact.abs(), "{} vs {exact}", s[i]);
    }

    #[test]
    fn unsupported_manufactured_cases() {
        let g = grid();
        let m = Manufactured::exponential(1.0);
        let k1 = MemoryKernel::exponential(0.5, 1.0).unwrap();
        assert!(matches!(mms_forcing(&g, &m, &k1, 3.0, 0.0), Err(Error::UnsupportedManufactured(_))));
        let kp = MemoryKernel::polynomial(1.0, 3.0).unwrap();
        assert!(matches!(mms_forcing(&g, &m, &kp, 3.0, 0.0), Err(Error::UnsupportedManufactured(_))));
        let k2 = MemoryKernel::exponential(0.5, 2.0).unwrap();
        // a / (b - lambda) e^{-t}
        assert!((m.history_integral(&k2, 0.7).unwrap() - 0.5 * (-0.7f64).exp()).abs() < 1e-15);
        let zero = Manufactured { amplitude: 0.0, ..m };
        assert!(mms_forcing(&g, &zero, &k2, 3.0, 0.3).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_history_integral() {
        let k = MemoryKernel::exponential(0.5, 2.0).unwrap();
        let m = Manufactured { profile: TimeProfile::Cosine { omega: 3.0 }, amplitude: 1.0, variant: ForcingVariant::Discrete };
        let t = 0.4f64;
        let (b, w) = (2.0, 3.0);
        let exact = 0.5 * (b * (w * t).cos() + w * (w * t).sin()) / (b * b + w * w);
        assert!((m.history_integral(&k, t).unwrap() - exact).abs() < 1e-15);
    }

    #[test]
    fn large_dt_needs_override() {
        let g = grid();
        let mut cfg = SolverConfig::new(0.1, 3.0, 1.0);
        assert!(cfg.validate(&g).is_err());
        cfg.allow_large_dt = true;
        assert_eq!(cfg.validate(&g).unwrap().len(), 1);
    }
}
