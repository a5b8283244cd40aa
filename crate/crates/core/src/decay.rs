//! Rate function `H1`, its inverse, and fitting of the decay bound
//! `E(t) <= kappa1 H1^{-1}(kappa t + kappa0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::EnergySample;
use crate::kernel::ConvexModulus;
use crate::quad;

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("kappa = {kappa} must be positive")))
    }
}

/// `H1(tau) = int_tau^1 ds / (s H'(kappa s))`, closed form.
pub fn h1(tau: f64, h: &ConvexModulus, kappa: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("H1 needs tau in (0, 1], got {tau}")));
    }
    check_kappa(kappa)?;
    h.validate()?;
    Ok(match *h {
        ConvexModulus::Linear { c } => -tau.ln() / c,
        ConvexModulus::Power { r, c } => {
            // (tau^(1-r) - 1) / (r - 1), written to stay accurate near tau = 1
            let e = (1.0 - r) * tau.ln();
            e.exp_m1() / ((r - 1.0) * c * r * kappa.powf(r - 1.0))
        }
    })
}

/// `H1` by adaptive quadrature in `u = ln s`.
pub fn h1_quadrature(tau: f64, h: &ConvexModulus, kappa: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("H1 needs tau in (0, 1], got {tau}")));
    }
    check_kappa(kappa)?;
    h.validate()?;
    let q = quad::integrate(|u| 1.0 / h.derivative(kappa * u.exp()), tau.ln(), 0.0, 1e-12);
    Ok(q.value)
}

/// `H1^{-1}(z)`, closed form.
pub fn h1_inverse(z: f64, h: &ConvexModulus, kappa: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("H1 inverse needs z >= 0, got {z}")));
    }
    check_kappa(kappa)?;
    h.validate()?;
    Ok(inverse_unchecked(z, h, kappa))
}

fn inverse_unchecked(z: f64, h: &ConvexModulus, kappa: f64) -> f64 {
    match *h {
        ConvexModulus::Linear { c } => (-c * z).exp(),
        ConvexModulus::Power { r, c } => {
            let k = (r - 1.0) * c * r * kappa.powf(r - 1.0);
            (-(k * z).ln_1p() / (r - 1.0)).exp()
        }
    }
}

/// `H1^{-1}(z)` by bisection in `ln tau` on quadrature values of `H1`.
pub fn h1_inverse_bisect(z: f64, h: &ConvexModulus, kappa: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("H1 inverse needs z >= 0, got {z}")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let mut hi = 0.0f64;
    let mut lo = -1.0f64;
    while h1_quadrature(lo.exp(), h, kappa)? < z {
        lo *= 2.0;
        if lo < -700.0 {
            return Ok(0.0);
        }
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if h1_quadrature(mid.exp(), h, kappa)? < z {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn regress(xs: &[f64], ys: &[f64]) -> Option<Regression> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(Regression { slope, intercept: my - slope * mx, r2 })
}

/// Least-squares rates over the trailing half of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRates {
    /// `ln E ~ -rate t`
    pub exponential_rate: f64,
    pub exponential_r2: f64,
    /// `ln E ~ -exponent ln(1 + t)`
    pub algebraic_exponent: f64,
    pub algebraic_r2: f64,
}

pub fn empirical_rates(trace: &[EnergySample]) -> Option<EmpiricalRates> {
    let t_end = trace.last()?.t;
    let tail: Vec<&EnergySample> = trace.iter().filter(|s| s.t >= 0.5 * t_end && s.e > 0.0).collect();
    let ln_e: Vec<f64> = tail.iter().map(|s| s.e.ln()).collect();
    let ts: Vec<f64> = tail.iter().map(|s| s.t).collect();
    let lts: Vec<f64> = tail.iter().map(|s| s.t.ln_1p()).collect();
    let ex = regress(&ts, &ln_e)?;
    let al = regress(&lts, &ln_e)?;
    Some(EmpiricalRates {
        exponential_rate: -ex.slope,
        exponential_r2: ex.r2,
        algebraic_exponent: -al.slope,
        algebraic_r2: al.r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub modulus: ConvexModulus,
    pub kappa: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    /// `max_n (E_n - bound_n)`; nonpositive when the bound holds
    pub max_violation: f64,
    /// emitted as the `bound_rhs` trace column rather than in reports
    #[serde(skip)]
    pub bound_curve: Vec<f64>,
    pub initial_bound: f64,
    pub terminal_bound: f64,
    pub terminal_energy: f64,
    /// terminal bound above half the initial bound
    pub non_decaying: bool,
    pub empirical: Option<EmpiricalRates>,
}

/// Search grid for [`fit_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitGrid {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub kappa_points: usize,
    pub kappa0_max: f64,
    pub kappa0_points: usize,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self { kappa_min: 1e-3, kappa_max: 1e2, kappa_points: 201, kappa0_max: 10.0, kappa0_points: 41 }
    }
}

/// Tightest-terminal bound of the family `kappa1 H1^{-1}(kappa t + kappa0)` over the grid,
/// with `kappa1` the smallest value making the bound hold at every sample.
pub fn fit_bound(trace: &[EnergySample], h: &ConvexModulus) -> Result<DecayFit> {
    fit_bound_on(trace, h, &FitGrid::default())
}

pub fn fit_bound_on(trace: &[EnergySample], h: &ConvexModulus, grid: &FitGrid) -> Result<DecayFit> {
    h.validate()?;
    let last = trace.last().ok_or_else(|| Error::DegenerateFit("empty trace".into()))?;
    if trace.iter().all(|s| s.e == 0.0) {
        return Err(Error::DegenerateFit("energy vanishes identically".into()));
    }
    if trace.iter().any(|s| !s.e.is_finite()) {
        return Err(Error::DegenerateFit("non-finite energy in trace".into()));
    }
    let t_end = last.t;
    let kappas: Vec<f64> = (0..grid.kappa_points)
        .map(|i| {
            let f = if grid.kappa_points > 1 { i as f64 / (grid.kappa_points - 1) as f64 } else { 0.0 };
            let lg = grid.kappa_min.log10() + f * (grid.kappa_max.log10() - grid.kappa_min.log10());
            10f64.powf(lg)
        })
        .collect();
    let kappa0s: Vec<f64> = (0..grid.kappa0_points)
        .map(|j| if grid.kappa0_points > 1 { grid.kappa0_max * j as f64 / (grid.kappa0_points - 1) as f64 } else { 0.0 })
        .collect();
    let cells: Vec<(f64, f64)> = kappas.iter().flat_map(|&k| kappa0s.iter().map(move |&k0| (k, k0))).collect();
    let scored: Vec<(f64, f64, f64, f64)> = cells
        .par_iter()
        .map(|&(kappa, kappa0)| {
            let kappa1 = trace
                .iter()
                .map(|s| s.e / inverse_unchecked(kappa * s.t + kappa0, h, kappa))
                .fold(0.0f64, f64::max);
            let terminal = kappa1 * inverse_unchecked(kappa * t_end + kappa0, h, kappa);
            (kappa, kappa0, kappa1, terminal)
        })
        .collect();
    let mut best = scored[0];
    for &cell in &scored[1..] {
        // ties go to the earliest (smallest kappa, then kappa0) cell
        if cell.3.is_finite() && cell.3 < best.3 * (1.0 - 1e-12) {
            best = cell;
        }
    }
    let (kappa, kappa0, kappa1, terminal) = best;
    let bound_curve: Vec<f64> = trace.iter().map(|s| kappa1 * inverse_unchecked(kappa * s.t + kappa0, h, kappa)).collect();
    let max_violation = trace.iter().zip(&bound_curve).map(|(s, b)| s.e - b).fold(f64::NEG_INFINITY, f64::max);
    let initial_bound = kappa1 * inverse_unchecked(kappa0, h, kappa);
    Ok(DecayFit {
        modulus: *h,
        kappa,
        kappa0,
        kappa1,
        max_violation,
        bound_curve,
        initial_bound,
        terminal_bound: terminal,
        terminal_energy: last.e,
        non_decaying: terminal > 0.5 * initial_bound,
        empirical: empirical_rates(trace),
    })
}

/// Copies the fitted bound into the `bound_rhs` column.
pub fn fill_bound(trace: &mut [EnergySample], fit: &DecayFit) {
    for (s, b) in trace.iter_mut().zip(&fit.bound_curve) {
        s.bound_rhs = *b;
    }
}
