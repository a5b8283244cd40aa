use serde::{Deserialize, Serialize};

use super::profile::Profile;
use super::{ConvexModulus, MemoryKernel};
use crate::error::{Error, Result};
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
}

impl Clause {
    fn new(name: &str, passed: bool, value: Option<f64>) -> Self {
        Self { name: name.to_string(), passed, value }
    }
}

/// Outcome of a certification; failing clauses are entries, not errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub check: String,
    pub passed: bool,
    pub clauses: Vec<Clause>,
    pub ell: Option<f64>,
    /// `sup_s mu(s) / H^{-1}(-mu'(s))`
    pub kappa1_sup: Option<f64>,
    /// `int_0^inf mu(s) / H^{-1}(-mu'(s)) ds`
    pub kappa2_integral: Option<f64>,
    pub flags: Vec<String>,
}

impl CertReport {
    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn failed_clauses(&self) -> Vec<&str> {
        self.clauses.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Checks nonnegativity, monotonicity, `l > 0`, and `mu(0) > 0` on a sample grid.
pub fn certify_hyp1(k: &MemoryKernel, sample_count: usize) -> Result<CertReport> {
    if sample_count < 16 {
        return Err(Error::Precondition(format!("sample_count = {sample_count} < 16")));
    }
    let mut grid = vec![0.0];
    grid.extend(geometric_grid(1e-6, k.default_horizon(), sample_count - 1));
    let values: Vec<f64> = grid.iter().map(|&s| k.value(s)).collect();

    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let worst_rise = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let ell = k.ell();
    let mu0 = k.mu0();
    let clauses = vec![
        Clause::new("nonnegative", min >= 0.0, Some(min)),
        Clause::new("non-increasing", worst_rise <= 1e-12, Some(worst_rise)),
        Clause::new("l>0", ell > 0.0, Some(ell)),
        Clause::new("mu(0)>0", mu0 > 0.0, Some(mu0)),
    ];
    Ok(CertReport {
        check: "hyp1".into(),
        passed: clauses.iter().all(|c| c.passed),
        clauses,
        ell: Some(ell),
        kappa1_sup: None,
        kappa2_integral: None,
        flags: vec![],
    })
}

fn ratio(k: &MemoryKernel, h: &ConvexModulus, s: f64) -> Result<f64> {
    let mu = k.value(s);
    let dmu = k.derivative(s);
    if dmu > 0.0 {
        return Err(Error::Domain(format!("mu'({s}) = {dmu} > 0: kernel is not non-increasing")));
    }
    let denom = h.inverse(-dmu)?;
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok(if denom == 0.0 { f64::INFINITY } else { mu / denom })
}

/// Integral of the ratio beyond `s0` and whether the ratio stays bounded there.
fn ratio_tail(k: &MemoryKernel, h: &ConvexModulus, s0: f64) -> (f64, bool) {
    match (k.profile().asymptotic(), *h) {
        (Profile::Exp { amp, .. }, _) if *amp == 0.0 => (0.0, true),
        (Profile::Pow { amp, .. }, _) if *amp == 0.0 => (0.0, true),
        // constant ratio c / rate
        (Profile::Exp { .. }, ConvexModulus::Linear { .. }) => (f64::INFINITY, true),
        (Profile::Exp { rate, .. }, ConvexModulus::Power { r, c }) => {
            let mu = k.value(s0);
            let coef = (c / rate).powf(1.0 / r);
            (coef * mu.powf(1.0 - 1.0 / r) / (rate * (1.0 - 1.0 / r)), true)
        }
        // ratio grows like c (1 + s) / q
        (Profile::Pow { .. }, ConvexModulus::Linear { .. }) => (f64::INFINITY, false),
        (Profile::Pow { amp, q }, ConvexModulus::Power { r, c }) => {
            let e = -q + (q + 1.0) / r;
            let coef = amp * (c / (q * amp)).powf(1.0 / r);
            let integral = if e < -1.0 {
                coef * (1.0 + s0).powf(e + 1.0) / (-e - 1.0)
            } else {
                f64::INFINITY
            };
            (integral, e <= 0.0)
        }
        (Profile::Segments { .. }, _) => unreachable!("asymptotic profile is analytic"),
    }
}

/// Estimates both constants of the kernel/modulus compatibility condition.
///
/// The integral is adaptive quadrature on `[0, s_max]` plus a closed-form tail
/// from the kernel's analytic asymptotics; the supremum is taken over a
/// 512-point geometric grid on `[1e-6, s_max]`. Both quantities are reported
/// separately since an infinite integral alone does not block simulation.
pub fn certify_condition_h(k: &MemoryKernel, h: &ConvexModulus, s_max: f64, tol: f64) -> Result<CertReport> {
    h.validate()?;
    if !(s_max > 0.0) {
        return Err(Error::Precondition(format!("s_max = {s_max} must be positive")));
    }
    let s_max = s_max.max(k.profile().last_knot());

    let mut sup = ratio(k, h, 0.0)?;
    for s in geometric_grid(1e-6, s_max, 512) {
        sup = sup.max(ratio(k, h, s)?);
    }
    let (tail, bounded) = ratio_tail(k, h, s_max);
    if !bounded {
        sup = f64::INFINITY;
    }

    let integral = if tail.is_infinite() || sup.is_infinite() {
        f64::INFINITY
    } else {
        let err = std::cell::RefCell::new(None);
        let head = quad::integrate(
            |s| match ratio(k, h, s) {
                Ok(v) => v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            0.0,
            s_max,
            tol,
        );
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        head.value + tail
    };

    let clauses = vec![
        Clause::new("integral-finite", integral.is_finite(), Some(integral)),
        Clause::new("sup-finite", sup.is_finite(), Some(sup)),
    ];
    let mut flags = vec![];
    if h.is_relaxed() {
        flags.push("relaxed-modulus".to_string());
    }
    Ok(CertReport {
        check: "condition-h".into(),
        passed: clauses.iter().all(|c| c.passed),
        clauses,
        ell: Some(k.ell()),
        kappa1_sup: Some(sup),
        kappa2_integral: Some(integral),
        flags,
    })
}
