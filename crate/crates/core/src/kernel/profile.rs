//! Scalar weight functions on `s >= 0` with exact product-integration moments.
//!
//! A `Profile` backs both a memory kernel `mu` and its derivative `mu'`. The
//! history quadrature only ever asks for the zeroth and first moments of a
//! profile over an interval, so every family provides those in closed form.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad;

/// `(1 - e^{-x}) / x`
pub(crate) fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-300 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(1 - e^{-x}(1 + x)) / x^2`
pub(crate) fn phi2(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // sum_{n>=2} (-1)^n (n-1)/n! x^(n-2)
        let mut sum = 0.0;
        let mut fact = 2.0;
        let mut pow = 1.0;
        for n in 2..30 {
            if n > 2 {
                fact *= n as f64;
                pow *= -x;
            }
            let term = (n as f64 - 1.0) / fact * pow;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (1.0 - (-x).exp() * (1.0 + x)) / (x * x)
    }
}

/// `int_1^{1+r} u^{-q} du` and `int_1^{1+r} u^{-q} (u - 1) du`.
fn power_moments(q: f64, r: f64) -> (f64, f64) {
    if r < 0.1 {
        let mut i1 = 0.0;
        let mut i2 = 0.0;
        let mut binom = 1.0; // binom(-q, k)
        let mut rp = r; // r^(k+1)
        for k in 0..200 {
            let t1 = binom * rp / (k as f64 + 1.0);
            let t2 = binom * rp * r / (k as f64 + 2.0);
            i1 += t1;
            i2 += t2;
            if t1.abs() < 1e-18 * i1.abs() && k > 2 {
                break;
            }
            binom *= (-q - k as f64) / (k as f64 + 1.0);
            rp *= r;
        }
        (i1, i2)
    } else {
        let u = 1.0 + r;
        let i1 = if (q - 1.0).abs() < 1e-14 {
            u.ln()
        } else {
            (u.powf(1.0 - q) - 1.0) / (1.0 - q)
        };
        let j = if (q - 2.0).abs() < 1e-14 {
            u.ln()
        } else {
            (u.powf(2.0 - q) - 1.0) / (2.0 - q)
        };
        (i1, j - i1)
    }
}

/// Linear piece on `[s0, s1]` running from `v0` to `v1`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Segment {
    pub s0: f64,
    pub s1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Segment {
    fn at(&self, s: f64) -> f64 {
        let h = self.s1 - self.s0;
        if h <= 0.0 {
            return self.v0;
        }
        self.v0 + (self.v1 - self.v0) * (s - self.s0) / h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Profile {
    /// `amp * exp(-rate * (s - shift))`
    Exp { amp: f64, rate: f64, shift: f64 },
    /// `amp * (1 + s)^(-q)`
    Pow { amp: f64, q: f64 },
    /// Piecewise-linear segments covering `[0, end]` followed by an analytic tail.
    Segments { pieces: Vec<Segment>, tail: Box<Profile> },
}

impl Profile {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Profile::Exp { amp, rate, shift } => amp * (-rate * (s - shift)).exp(),
            Profile::Pow { amp, q } => amp * (1.0 + s).powf(-q),
            Profile::Segments { pieces, tail } => match locate(pieces, s) {
                Some(i) => pieces[i].at(s),
                None => tail.value(s),
            },
        }
    }

    /// The analytic profile governing `s` beyond every tabulated knot.
    pub fn asymptotic(&self) -> &Profile {
        match self {
            Profile::Segments { tail, .. } => tail.asymptotic(),
            p => p,
        }
    }

    /// Last tabulated abscissa (0 for analytic families).
    pub fn last_knot(&self) -> f64 {
        match self {
            Profile::Segments { pieces, .. } => pieces.last().map_or(0.0, |p| p.s1),
            _ => 0.0,
        }
    }

    /// `(int_c^d p, int_c^d p(s) (s - c) ds)`
    pub fn moments(&self, c: f64, d: f64) -> (f64, f64) {
        let h = d - c;
        if h <= 0.0 {
            return (0.0, 0.0);
        }
        match self {
            Profile::Exp { rate, .. } => {
                let vc = self.value(c);
                let x = rate * h;
                (vc * h * phi1(x), vc * h * h * phi2(x))
            }
            Profile::Pow { amp, q } => {
                let z = 1.0 + c;
                let (i1, i2) = power_moments(*q, h / z);
                let base = amp * z.powf(1.0 - q);
                (base * i1, base * z * i2)
            }
            Profile::Segments { pieces, tail } => {
                let mut m0 = 0.0;
                let mut m1 = 0.0;
                let end = pieces.last().map_or(0.0, |p| p.s1);
                let mut lo = c;
                if lo < end {
                    let mut i = locate(pieces, lo).unwrap_or(0);
                    while lo < d.min(end) && i < pieces.len() {
                        let hi = d.min(pieces[i].s1);
                        if hi > lo {
                            let a = pieces[i].at(lo);
                            let b = pieces[i].at(hi);
                            let w = hi - lo;
                            let p0 = 0.5 * (a + b) * w;
                            let p1 = w * w * (a / 6.0 + b / 3.0);
                            m1 += p1 + (lo - c) * p0;
                            m0 += p0;
                        }
                        lo = hi;
                        i += 1;
                    }
                }
                if d > lo {
                    let (p0, p1) = tail.moments(lo, d);
                    m1 += p1 + (lo - c) * p0;
                    m0 += p0;
                }
                (m0, m1)
            }
        }
    }

    /// Product-trapezoid weights `(w_a, w_b)` such that
    /// `int_a^b p(s) g(s) ds = w_a g(a) + w_b g(b)` for every affine `g`.
    pub fn linear_weights(&self, a: f64, b: f64) -> (f64, f64) {
        let h = b - a;
        if h <= 0.0 {
            return (0.0, 0.0);
        }
        let (m0, m1) = self.moments(a, b);
        let wb = m1 / h;
        (m0 - wb, wb)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.moments(a, b).0
    }

    /// `int_t^inf p(s) exp(-rho (s - t)) ds`.
    pub fn exp_tail(&self, t: f64, rho: Complex64) -> Result<Complex64> {
        match self {
            Profile::Exp { amp, rate, .. } => {
                if *amp == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let denom = rho + rate;
                if denom.re <= 0.0 {
                    return Err(Error::NonIntegrableKernel(format!(
                        "exponential weight with rate {rate} against history growth {}",
                        -rho.re
                    )));
                }
                Ok(self.value(t) / denom)
            }
            Profile::Pow { amp, q } => {
                if *amp == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                if rho.re < 0.0 {
                    return Err(Error::NonIntegrableKernel(format!(
                        "polynomial weight against growing history (rate {})",
                        -rho.re
                    )));
                }
                if rho.norm() == 0.0 {
                    return Ok(Complex64::new(amp * (1.0 + t).powf(1.0 - q) / (q - 1.0), 0.0));
                }
                // Truncate where the remaining mass times the exponential factor is negligible.
                let mut span = 1.0 + t;
                let bound = |sp: f64| amp.abs() * (1.0 + t + sp).powf(1.0 - q) / (q - 1.0) * (-rho.re * sp).exp();
                while bound(span) > 1e-14 * amp.abs() && span < 1e12 {
                    span *= 2.0;
                }
                Ok(numeric_exp_tail(self, t, t + span, rho))
            }
            Profile::Segments { pieces, tail } => {
                let end = pieces.last().map_or(0.0, |p| p.s1);
                if t >= end {
                    return tail.exp_tail(t, rho);
                }
                let head = if rho.norm() == 0.0 {
                    Complex64::new(self.integral(t, end), 0.0)
                } else {
                    numeric_exp_tail(self, t, end, rho)
                };
                let shift = (-rho * (end - t)).exp();
                Ok(head + shift * tail.exp_tail(end, rho)?)
            }
        }
    }

    pub fn tail_mass(&self, t: f64) -> Result<f64> {
        Ok(self.exp_tail(t, Complex64::new(0.0, 0.0))?.re)
    }
}

fn numeric_exp_tail(p: &Profile, t: f64, end: f64, rho: Complex64) -> Complex64 {
    let mut knots = vec![t];
    // split on a geometric grid so the adaptive rule sees comparable panels
    let mut x = t + 1.0;
    while x < end {
        knots.push(x);
        x = t + 2.0 * (x - t);
    }
    knots.push(end);
    let mut acc = Complex64::new(0.0, 0.0);
    for w in knots.windows(2) {
        let re = quad::integrate(|s| p.value(s) * (-rho * (s - t)).exp().re, w[0], w[1], 1e-15);
        let im = quad::integrate(|s| p.value(s) * (-rho * (s - t)).exp().im, w[0], w[1], 1e-15);
        acc += Complex64::new(re.value, im.value);
    }
    acc
}

fn locate(pieces: &[Segment], s: f64) -> Option<usize> {
    let end = pieces.last()?.s1;
    if s > end || s < pieces[0].s0 {
        return None;
    }
    let i = pieces.partition_point(|p| p.s1 < s);
    Some(i.min(pieces.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_moments(p: &Profile, c: f64, d: f64) -> (f64, f64) {
        let m0 = quad::integrate(|s| p.value(s), c, d, 1e-16).value;
        let m1 = quad::integrate(|s| p.value(s) * (s - c), c, d, 1e-16).value;
        (m0, m1)
    }

    #[test]
    fn phi_series_matches_direct() {
        for &x in &[1e-6f64, 1e-3, 0.1, 0.49, 0.5, 0.51, 2.0] {
            let direct = if x < 0.01 {
                0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0
            } else {
                (1.0 - (-x).exp() * (1.0 + x)) / (x * x)
            };
            let tol = 1e-12;
            assert!((phi2(x) - direct).abs() < tol, "x={x}");
        }
        assert!((phi2(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn moments_match_quadrature() {
        let profiles = [
            Profile::Exp { amp: 0.5, rate: 1.0, shift: 0.0 },
            Profile::Exp { amp: -0.5, rate: 2.0, shift: 0.0 },
            Profile::Pow { amp: 1.0, q: 3.0 },
            Profile::Pow { amp: 1.0, q: 2.0 },
            Profile::Segments {
                pieces: vec![
                    Segment { s0: 0.0, s1: 1.0, v0: 1.0, v1: 0.5 },
                    Segment { s0: 1.0, s1: 2.0, v0: 0.5, v1: 0.25 },
                ],
                tail: Box::new(Profile::Exp { amp: 0.25, rate: 1.0, shift: 2.0 }),
            },
        ];
        let intervals = [(0.0, 1e-3), (0.3, 0.7), (5.0, 5.001), (0.5, 3.5), (10.0, 40.0)];
        for p in &profiles {
            for &(c, d) in &intervals {
                let (m0, m1) = p.moments(c, d);
                let (b0, b1) = brute_moments(p, c, d);
                assert!((m0 - b0).abs() <= 1e-13 * (1.0 + b0.abs()), "{p:?} {c} {d}: {m0} vs {b0}");
                assert!((m1 - b1).abs() <= 1e-13 * (1.0 + b1.abs()), "{p:?} {c} {d}: {m1} vs {b1}");
            }
        }
    }

    #[test]
    fn exp_tail_closed_forms() {
        let e = Profile::Exp { amp: 0.5, rate: 2.0, shift: 0.0 };
        let v = e.exp_tail(1.0, Complex64::new(-1.0, 0.0)).unwrap();
        assert!((v.re - 0.5 * (-2.0f64).exp() / 1.0).abs() < 1e-15);
        assert!(e.exp_tail(0.0, Complex64::new(-2.0, 0.0)).is_err());
        let p = Profile::Pow { amp: 1.0, q: 3.0 };
        assert!((p.tail_mass(0.0).unwrap() - 0.5).abs() < 1e-15);
        let num = p.exp_tail(0.5, Complex64::new(0.3, 0.0)).unwrap().re;
        let brute = quad::integrate(|s| (1.0 + s).powf(-3.0) * (-0.3 * (s - 0.5)).exp(), 0.5, 400.0, 1e-14).value;
        assert!((num - brute).abs() < 1e-10);
    }
}
