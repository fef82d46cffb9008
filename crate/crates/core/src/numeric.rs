//! Compensated summation, quadrature and monotone inversion.

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = kahan_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Below a few ulps of the piece the difference is rounding noise.
    let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= (15.0 * tol).max(noise) || m <= a || m >= b {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integral over `[0, x]` for integrands that may misbehave at 0: the
/// interval is split dyadically toward the origin.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(f: &F, x: f64, tol: f64) -> f64 {
    const PIECES: i32 = 40;
    if x <= 0.0 {
        return 0.0;
    }
    let piece_tol = tol / f64::from(PIECES + 1);
    let mut acc = KahanSum::new();
    let mut hi = x;
    for _ in 0..PIECES {
        let lo = 0.5 * hi;
        acc.add(adaptive_simpson(f, lo, hi, piece_tol));
        hi = lo;
    }
    // Tail piece: open midpoint rule avoids evaluating at 0.
    acc.add(hi * f(0.5 * hi));
    acc.value()
}

/// Eight-point Gauss-Legendre rule on [-1, 1] as (node, weight) pairs.
pub const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329, 0.313_706_645_877_887),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

pub fn gauss8<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (t, w) in GAUSS8 {
        s += w * f(mid + half * t);
    }
    s * half
}

pub const INVERSE_TOL: f64 = 1e-12;

/// Solves `f(x) = y` for nondecreasing `f` on `[0, inf)` with `f(0) <= y`,
/// doubling the upper bracket as needed. `tol` is relative to the root.
pub fn invert_increasing<F: Fn(f64) -> f64>(f: &F, y: f64, tol: f64) -> Result<f64> {
    if f(0.0) >= y {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while f(hi) < y {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 || !hi.is_finite() {
            return Err(Error::Convergence(format!("no bracket found for level {y}")));
        }
    }
    // Relative stopping rule keeps accuracy where f is steep near 0.
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * hi || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut s = KahanSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn simpson_polynomial_exact() {
        let v = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn simpson_smooth() {
        let v = adaptive_simpson(&f64::cos, 0.0, 3.0, 1e-12);
        assert_abs_diff_eq!(v, 3f64.sin(), epsilon = 1e-11);
    }

    #[test]
    fn from_zero_handles_sqrt_cusp() {
        let v = integrate_from_zero(&|x: f64| x.sqrt(), 4.0, 1e-11);
        assert_abs_diff_eq!(v, 16.0 / 3.0, epsilon = 1e-9);
        let w = integrate_from_zero(&|x: f64| x.powf(-0.5), 1.0, 1e-10);
        assert_abs_diff_eq!(w, 2.0, epsilon = 2e-6);
    }

    #[test]
    fn gauss_exact_to_degree_fifteen() {
        let v = gauss8(&|x: f64| x.powi(15) + x.powi(14), 0.0, 1.0);
        assert_abs_diff_eq!(v, 1.0 / 16.0 + 1.0 / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn inverse_of_exp() {
        let x = invert_increasing(&|x: f64| x.exp_m1(), 5.0, 1e-13).unwrap();
        assert_abs_diff_eq!(x, 6f64.ln(), epsilon = 1e-11);
        let big = invert_increasing(&|x: f64| x.sqrt(), 1e3, 1e-13).unwrap();
        assert_abs_diff_eq!(big, 1e6, epsilon = 1e-5);
    }

    #[test]
    fn mean_stderr_basic() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
    }
}
