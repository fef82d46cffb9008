//! Increasing utilities `s` with `s(0) = 0` and `s(1) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{invert_increasing, INVERSE_TOL};

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Utility {
    Identity,
    /// `(1 - exp(-alpha x)) / (1 - exp(-alpha))`.
    ExponentialCara {
        alpha: f64,
    },
    /// `log2(1 + x)`.
    LogShift,
    /// `sum_i w_i x^{a_i}` with exponents in (0, 1] and weights summing to 1.
    PowerMixture {
        atoms: Vec<PowerAtom>,
    },
    Tabulated(MonotoneCubic),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAtom {
    pub exponent: f64,
    pub weight: f64,
}

impl Utility {
    pub fn exponential(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(format!("CARA coefficient must be positive, got {alpha}")));
        }
        Ok(Utility::ExponentialCara { alpha })
    }

    pub fn power_mixture(atoms: Vec<PowerAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("power mixture needs at least one atom"));
        }
        for a in &atoms {
            if !(a.exponent > 0.0 && a.exponent <= 1.0) {
                return Err(invalid(format!("exponent {} outside (0, 1]", a.exponent)));
            }
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(invalid(format!("negative weight {}", a.weight)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(Utility::PowerMixture { atoms })
    }

    /// Equal-weight mixture whose exponents are the midpoints of `m` equal
    /// cells of `(0, a]`.
    pub fn uniform_power_mixture(a: f64, m: usize) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) || m == 0 {
            return Err(invalid("uniform power mixture needs a in (0, 1] and m >= 1"));
        }
        let w = 1.0 / m as f64;
        let mut atoms: Vec<PowerAtom> =
            (0..m).map(|i| PowerAtom { exponent: a * (i as f64 + 0.5) / m as f64, weight: w }).collect();
        // Absorb rounding so the weights sum to one exactly enough.
        let total: f64 = atoms.iter().map(|x| x.weight).sum();
        atoms[m - 1].weight += 1.0 - total;
        Self::power_mixture(atoms)
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        Ok(Utility::Tabulated(MonotoneCubic::new(xs, ys)?))
    }

    /// Short identifier written into output metadata.
    pub fn tag(&self) -> String {
        match self {
            Utility::Identity => "identity".into(),
            Utility::ExponentialCara { alpha } => format!("exp(alpha={alpha})"),
            Utility::LogShift => "log".into(),
            Utility::PowerMixture { atoms } => {
                format!("power-mixture(atoms={},max={})", atoms.len(), self.max_exponent().unwrap_or(1.0))
            }
            Utility::Tabulated(t) => format!("tabulated(knots={})", t.xs.len()),
        }
    }

    pub fn max_exponent(&self) -> Option<f64> {
        match self {
            Utility::PowerMixture { atoms } => {
                atoms.iter().filter(|a| a.weight > 0.0).map(|a| a.exponent).reduce(f64::max)
            }
            _ => None,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Utility::Identity => x,
            Utility::ExponentialCara { alpha } => (-alpha * x).exp_m1() / (-alpha).exp_m1(),
            Utility::LogShift => x.ln_1p() / std::f64::consts::LN_2,
            Utility::PowerMixture { atoms } => atoms.iter().map(|a| a.weight * x.powf(a.exponent)).sum(),
            Utility::Tabulated(t) => t.value(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Utility::Identity => 1.0,
            Utility::ExponentialCara { alpha } => alpha * (-alpha * x).exp() / -(-alpha).exp_m1(),
            Utility::LogShift => 1.0 / ((1.0 + x) * std::f64::consts::LN_2),
            Utility::PowerMixture { atoms } => {
                atoms.iter().map(|a| a.weight * a.exponent * x.powf(a.exponent - 1.0)).sum()
            }
            Utility::Tabulated(t) => t.deriv(x),
        }
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        match self {
            Utility::Identity => 0.0,
            Utility::ExponentialCara { alpha } => -alpha * alpha * (-alpha * x).exp() / -(-alpha).exp_m1(),
            Utility::LogShift => -1.0 / ((1.0 + x) * (1.0 + x) * std::f64::consts::LN_2),
            Utility::PowerMixture { atoms } => {
                atoms.iter().map(|a| a.weight * a.exponent * (a.exponent - 1.0) * x.powf(a.exponent - 2.0)).sum()
            }
            Utility::Tabulated(t) => t.deriv2(x),
        }
    }

    /// Supremum of the range of `s` on `[0, inf)`.
    pub fn range_sup(&self) -> f64 {
        match self {
            Utility::ExponentialCara { alpha } => 1.0 / -(-alpha).exp_m1(),
            Utility::Tabulated(t) => t.range_sup(),
            _ => f64::INFINITY,
        }
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        let sup = self.range_sup();
        if !(y >= 0.0 && y < sup) {
            return Err(Error::OutOfRange { value: y, sup });
        }
        match self {
            Utility::Identity => Ok(y),
            Utility::ExponentialCara { alpha } => Ok(-(y * (-alpha).exp_m1()).ln_1p() / alpha),
            Utility::LogShift => Ok((y * std::f64::consts::LN_2).exp_m1()),
            _ => invert_increasing(&|x| self.value(x), y, INVERSE_TOL),
        }
    }

    /// True when concavity is known: every built-in family, and tables
    /// whose knot secants are nonincreasing.
    pub fn is_concave(&self) -> bool {
        match self {
            Utility::Tabulated(t) => t.concave_on_knots(),
            _ => true,
        }
    }
}

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes,
/// extended linearly past the last knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(invalid("table needs at least two knots and matching lengths"));
        }
        if xs[0] != 0.0 || ys[0] != 0.0 {
            return Err(invalid("table must start at (0, 0)"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().any(|x| !x.is_finite()) {
            return Err(invalid("table abscissae must be finite and strictly increasing"));
        }
        if ys.windows(2).any(|w| w[1] < w[0]) || ys.iter().any(|y| !y.is_finite()) {
            return Err(invalid("table values must be finite and nondecreasing"));
        }
        let secants: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = secants[0];
            slopes[1] = secants[0];
        } else {
            for i in 1..n - 1 {
                let (d0, d1) = (secants[i - 1], secants[i]);
                if d0 * d1 <= 0.0 {
                    slopes[i] = 0.0;
                } else {
                    let h0 = xs[i] - xs[i - 1];
                    let h1 = xs[i + 1] - xs[i];
                    let w1 = 2.0 * h1 + h0;
                    let w2 = h1 + 2.0 * h0;
                    slopes[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = end_slope(xs[1] - xs[0], xs[2] - xs[1], secants[0], secants[1]);
            slopes[n - 1] = end_slope(xs[n - 1] - xs[n - 2], xs[n - 2] - xs[n - 3], secants[n - 2], secants[n - 3]);
        }
        let table = Self { xs, ys, slopes };
        if table.value(1.0) <= 0.0 || (table.value(1.0) - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!("table must satisfy s(1) = 1, got {}", table.value(1.0))));
        }
        Ok(table)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn last_knot(&self) -> f64 {
        *self.xs.last().expect("nonempty")
    }

    fn range_sup(&self) -> f64 {
        if *self.slopes.last().expect("nonempty") > 0.0 {
            f64::INFINITY
        } else {
            *self.ys.last().expect("nonempty")
        }
    }

    pub fn concave_on_knots(&self) -> bool {
        let secants: Vec<f64> =
            self.xs.windows(2).zip(self.ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).collect();
        secants.windows(2).all(|w| w[1] <= w[0] + 1e-12)
    }

    fn locate(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&k| k <= x);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    fn hermite(&self, x: f64) -> (f64, f64, f64) {
        let last = self.xs.len() - 1;
        if x >= self.xs[last] {
            let d = self.slopes[last];
            return (self.ys[last] + d * (x - self.xs[last]), d, 0.0);
        }
        let i = self.locate(x.max(0.0));
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v =
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let dv = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        let ddv = (12.0 * t - 6.0) * y0 + (6.0 * t - 4.0) * m0 + (-12.0 * t + 6.0) * y1 + (6.0 * t - 2.0) * m1;
        (v, dv / h, ddv / (h * h))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.hermite(x).0
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.hermite(x).1
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        self.hermite(x).2
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
