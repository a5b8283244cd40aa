use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::profile::{Profile, Segment};
use crate::error::{Error, Result};

/// Analytic continuation of a tabulated kernel beyond its last sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailDecl {
    /// `mu(s) = mu_last * exp(-rate (s - s_last))`
    Exponential { rate: f64 },
    /// `mu(s) = mu_last * ((1 + s) / (1 + s_last))^(-exponent)`
    Polynomial { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelFamily {
    /// `a * exp(-b s)`
    Exponential { a: f64, b: f64 },
    /// `a * (1 + s)^(-q)`
    Polynomial { a: f64, q: f64 },
    /// Piecewise-linear through `(s_i, mu_i)` with `s_0 = 0`, then `tail`.
    Tabulated { points: Vec<(f64, f64)>, tail: TailDecl },
}

/// Relaxation kernel of the hereditary term.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryKernel {
    family: KernelFamily,
    profile: Profile,
    derivative: Profile,
    mass: f64,
}

/// `int_0^inf mu(s) ds` for a kernel family.
pub fn kernel_mass(family: &KernelFamily) -> Result<f64> {
    Ok(MemoryKernel::new(family.clone())?.mass())
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

impl MemoryKernel {
    pub fn new(family: KernelFamily) -> Result<Self> {
        let (profile, derivative) = match &family {
            KernelFamily::Exponential { a, b } => {
                finite("a", *a)?;
                finite("b", *b)?;
                if *b <= 0.0 {
                    return Err(Error::NonIntegrableKernel(format!("exponential rate b = {b} must be positive")));
                }
                if *a < 0.0 {
                    return Err(Error::InvalidParameter(format!("exponential amplitude a = {a} is negative")));
                }
                (
                    Profile::Exp { amp: *a, rate: *b, shift: 0.0 },
                    Profile::Exp { amp: -a * b, rate: *b, shift: 0.0 },
                )
            }
            KernelFamily::Polynomial { a, q } => {
                finite("a", *a)?;
                finite("q", *q)?;
                if *q <= 1.0 {
                    return Err(Error::NonIntegrableKernel(format!("polynomial exponent q = {q} must exceed 1")));
                }
                if *a < 0.0 {
                    return Err(Error::InvalidParameter(format!("polynomial amplitude a = {a} is negative")));
                }
                (Profile::Pow { amp: *a, q: *q }, Profile::Pow { amp: -a * q, q: q + 1.0 })
            }
            KernelFamily::Tabulated { points, tail } => tabulated_profiles(points, tail)?,
        };
        let mass = profile.tail_mass(0.0)?;
        Ok(Self { family, profile, derivative, mass })
    }

    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential { a, b })
    }

    pub fn polynomial(a: f64, q: f64) -> Result<Self> {
        Self::new(KernelFamily::Polynomial { a, q })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn value(&self, s: f64) -> f64 {
        self.profile.value(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.derivative.value(s)
    }

    /// `int_0^inf mu`
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `l = 1 - int_0^inf mu`
    pub fn ell(&self) -> f64 {
        1.0 - self.mass
    }

    pub fn mu0(&self) -> f64 {
        self.profile.value(0.0)
    }

    /// Default certification horizon for this family.
    pub fn default_horizon(&self) -> f64 {
        match &self.family {
            KernelFamily::Exponential { .. } => 50.0,
            KernelFamily::Polynomial { .. } => 1e3,
            KernelFamily::Tabulated { tail, .. } => {
                let base: f64 = match tail {
                    TailDecl::Exponential { .. } => 50.0,
                    TailDecl::Polynomial { .. } => 1e3,
                };
                base.max(2.0 * self.profile.last_knot())
            }
        }
    }

    /// `int_t^inf mu(s) ds`
    pub fn tail_mass(&self, t: f64) -> f64 {
        self.profile.tail_mass(t).unwrap_or(f64::INFINITY)
    }

    /// `int_t^inf mu(s) exp(-rho (s - t)) ds`
    pub fn exp_tail(&self, t: f64, rho: Complex64) -> Result<Complex64> {
        self.profile.exp_tail(t, rho)
    }

    /// Same as [`Self::exp_tail`] with `mu'` in place of `mu`.
    pub fn derivative_exp_tail(&self, t: f64, rho: Complex64) -> Result<Complex64> {
        self.derivative.exp_tail(t, rho)
    }

    /// Product-trapezoid weights of `mu` on the age interval `[a, b]`.
    pub fn linear_weights(&self, a: f64, b: f64) -> (f64, f64) {
        self.profile.linear_weights(a, b)
    }

    /// Product-trapezoid weights of `mu'` on `[a, b]`.
    pub fn derivative_linear_weights(&self, a: f64, b: f64) -> (f64, f64) {
        self.derivative.linear_weights(a, b)
    }

    /// `int_a^b mu`
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.profile.integral(a, b)
    }

    pub(crate) fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Pairs `(c_j, beta_j)` with `mu(s) ~ sum_j c_j exp(-beta_j s)` on `[0, horizon]`.
    ///
    /// Exact (one term) for the exponential family. The polynomial family uses
    /// trapezoidal quadrature of `(1 + s)^(-q) = int e^(q u - e^u (1 + s)) du / Gamma(q)`,
    /// refined until the relative error is below `rel_tol`. `None` for tabulated kernels.
    pub fn exponential_sum(&self, horizon: f64, rel_tol: f64) -> Option<Vec<(f64, f64)>> {
        match self.family {
            KernelFamily::Exponential { a, b } => Some(vec![(a, b)]),
            KernelFamily::Polynomial { a, q } => {
                let probes: Vec<f64> = (0..=400)
                    .map(|i| (1.0 + horizon).powf(i as f64 / 400.0) - 1.0)
                    .collect();
                let mut h = 0.5;
                for _ in 0..8 {
                    let modes = power_law_modes(a, q, horizon, rel_tol, h);
                    let worst = probes.iter().fold(0.0f64, |m, &s| {
                        let approx: f64 = modes.iter().map(|(c, b)| c * (-b * s).exp()).sum();
                        let exact = self.value(s);
                        m.max((approx - exact).abs() / exact)
                    });
                    if worst <= rel_tol {
                        return Some(modes);
                    }
                    h *= 0.7;
                }
                None
            }
            KernelFamily::Tabulated { .. } => None,
        }
    }
}

fn power_law_modes(a: f64, q: f64, horizon: f64, rel_tol: f64, h: f64) -> Vec<(f64, f64)> {
    let u_min = -(1.0 + horizon).ln() - (1.0 / rel_tol).ln() / q - 2.0;
    let u_max = 60f64.ln();
    let n = ((u_max - u_min) / h).ceil() as usize;
    let nodes: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let u = u_min + k as f64 * h;
            (h * (q * u - u.exp()).exp(), u.exp())
        })
        .collect();
    let gamma: f64 = nodes.iter().map(|(w, _)| w).sum();
    nodes.into_iter().map(|(w, b)| (a * w / gamma, b)).collect()
}

fn tabulated_profiles(points: &[(f64, f64)], tail: &TailDecl) -> Result<(Profile, Profile)> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("tabulated kernel needs at least two samples".into()));
    }
    if points[0].0 != 0.0 {
        return Err(Error::InvalidParameter("tabulated kernel must start at s = 0".into()));
    }
    for (i, w) in points.windows(2).enumerate() {
        finite("sample", w[1].0)?;
        finite("sample", w[1].1)?;
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidParameter(format!("sample abscissae not increasing at index {}", i + 1)));
        }
    }
    let pieces: Vec<Segment> = points
        .windows(2)
        .map(|w| Segment { s0: w[0].0, s1: w[1].0, v0: w[0].1, v1: w[1].1 })
        .collect();
    let slopes: Vec<Segment> = points
        .windows(2)
        .map(|w| {
            let k = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            Segment { s0: w[0].0, s1: w[1].0, v0: k, v1: k }
        })
        .collect();
    let &(s_last, mu_last) = points.last().unwrap();
    let (tail_p, tail_d) = match *tail {
        TailDecl::Exponential { rate } => {
            if !(rate > 0.0) {
                return Err(Error::NonIntegrableKernel(format!("tail rate {rate} must be positive")));
            }
            (
                Profile::Exp { amp: mu_last, rate, shift: s_last },
                Profile::Exp { amp: -mu_last * rate, rate, shift: s_last },
            )
        }
        TailDecl::Polynomial { exponent } => {
            if !(exponent > 1.0) {
                return Err(Error::NonIntegrableKernel(format!("tail exponent {exponent} must exceed 1")));
            }
            let amp = mu_last * (1.0 + s_last).powf(exponent);
            (
                Profile::Pow { amp, q: exponent },
                Profile::Pow { amp: -amp * exponent, q: exponent + 1.0 },
            )
        }
    };
    Ok((
        Profile::Segments { pieces, tail: Box::new(tail_p) },
        Profile::Segments { pieces: slopes, tail: Box::new(tail_d) },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_masses() {
        let k = MemoryKernel::exponential(0.5, 1.0).unwrap();
        assert!((k.mass() - 0.5).abs() < 1e-15);
        assert!((k.ell() - 0.5).abs() < 1e-15);
        let z = MemoryKernel::exponential(0.0, 1.0).unwrap();
        assert_eq!(z.mass(), 0.0);
        assert_eq!(z.ell(), 1.0);
        let p = MemoryKernel::polynomial(1.0, 3.0).unwrap();
        assert!((p.mass() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn divergent_polynomial_rejected() {
        assert!(matches!(
            kernel_mass(&KernelFamily::Polynomial { a: 1.0, q: 1.0 }),
            Err(Error::NonIntegrableKernel(_))
        ));
        assert!(matches!(
            MemoryKernel::polynomial(1.0, 0.5),
            Err(Error::NonIntegrableKernel(_))
        ));
    }

    #[test]
    fn tabulated_matches_exponential() {
        // samples of 0.5 e^{-s} on a fine grid plus the exact tail
        let pts: Vec<(f64, f64)> = (0..=400).map(|i| {
            let s = i as f64 * 0.01;
            (s, 0.5 * (-s).exp())
        }).collect();
        let k = MemoryKernel::new(KernelFamily::Tabulated {
            points: pts,
            tail: TailDecl::Exponential { rate: 1.0 },
        })
        .unwrap();
        // trapezoid error O(h^2) on the tabulated part
        assert!((k.mass() - 0.5).abs() < 1e-5);
        assert!((k.value(10.0) - 0.5 * (-10.0f64).exp()).abs() < 1e-15);
        assert!((k.derivative(5.0) + 0.5 * (-5.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn serde_tagged_records() {
        let f: KernelFamily = serde_json::from_str(r#"{"family":"exponential","a":0.5,"b":1.0}"#).unwrap();
        assert_eq!(f, KernelFamily::Exponential { a: 0.5, b: 1.0 });
        let t: KernelFamily = serde_json::from_str(
            r#"{"family":"tabulated","points":[[0,1],[1,0.5]],"tail":{"kind":"polynomial","exponent":3}}"#,
        )
        .unwrap();
        assert!(MemoryKernel::new(t).is_ok());
    }

    #[test]
    fn exponential_sums() {
        let e = MemoryKernel::exponential(0.5, 1.0).unwrap();
        assert_eq!(e.exponential_sum(100.0, 1e-10).unwrap(), vec![(0.5, 1.0)]);
        let p = MemoryKernel::polynomial(1.0, 3.0).unwrap();
        let modes = p.exponential_sum(200.0, 1e-10).unwrap();
        assert!(modes.len() < 120);
        for i in 0..=1000 {
            let s = 200.0 * (i as f64 / 1000.0).powi(2);
            let approx: f64 = modes.iter().map(|(c, b)| c * (-b * s).exp()).sum();
            let exact = (1.0 + s).powi(-3);
            assert!((approx - exact).abs() <= 1e-10 * exact, "s = {s}");
        }
        let mass: f64 = modes.iter().map(|(c, b)| c / b).sum();
        assert!((mass - 0.5).abs() < 1e-4);
    }
}
