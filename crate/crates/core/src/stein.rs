//! Stein-equation solutions by iterated averaging.
//!
//! With `t = s^theta`, `A_x h = t(x)^{-1} int_0^x h t'` and
//! `h^{(k+1)}(x) = A_{x+1} h^{(k)}`, the truncated sum
//! `f = sum_{k <= K} A_x h^{(k)}` solves
//! `(t/t') f' + f(x) - f(x+1) = h(x) - E h(D)` up to `h^{(K+1)}`.
//!
//! Iterates live on a uniform grid of step 1/512 as values and derivatives
//! with cubic Hermite interpolation in between. Integrals over grid cells
//! use eight-point Gauss rules; the cell at the origin uses exact moments of
//! the weight against the interpolating cubic.

use std::io::Write;

use serde::Serialize;

use crate::dickman::rho_bound;
use crate::dickman::{certified_d1, check_theta, DickmanSpec};
use crate::error::{invalid, Error, Result};
use crate::numeric::{gauss8, integrate_from_zero, KahanSum, GAUSS8};
use crate::testfn::TestFunction;
use crate::utility::Utility;

pub const STEPS_PER_UNIT: usize = 512;
pub const GRID_STEP: f64 = 1.0 / STEPS_PER_UNIT as f64;
/// Target error for the deterministic centering and mean computations.
const CENTERING_TOL: f64 = 1e-12;
const MAX_CENTERING_DEPTH: usize = 2000;

/// A function sampled with its derivative at `i * GRID_STEP`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl GridFunction {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> f64 {
        (self.len() - 1) as f64 * GRID_STEP
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * GRID_STEP
    }

    fn cell(&self, x: f64) -> (usize, f64) {
        let pos = (x / GRID_STEP).max(0.0);
        let i = (pos.floor() as usize).min(self.len() - 2);
        (i, pos - i as f64)
    }

    /// Hermite interpolant; constant extension beyond the ends.
    pub fn eval(&self, x: f64) -> f64 {
        if x >= self.end() {
            return *self.values.last().expect("nonempty");
        }
        let (i, u) = self.cell(x);
        let b = hermite_basis(u);
        b[0] * self.values[i]
            + b[1] * GRID_STEP * self.derivs[i]
            + b[2] * self.values[i + 1]
            + b[3] * GRID_STEP * self.derivs[i + 1]
    }

    pub fn sup_norm(&self, up_to: f64) -> f64 {
        let n = ((up_to / GRID_STEP).round() as usize).min(self.len() - 1);
        self.values[..=n].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn hermite_basis(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2]
}

fn hermite_basis_deriv(u: f64) -> [f64; 4] {
    let u2 = u * u;
    [6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u]
}

/// `t = s^theta` and its derivatives, tabulated for the grid.
struct Weight {
    spec: DickmanSpec,
    t: Vec<f64>,
    dt: Vec<f64>,
    d2t: Vec<f64>,
    gauss_t: Vec<[f64; 8]>,
    gauss_dt: Vec<[f64; 8]>,
    /// `int_0^delta v^j t(v) dv` and `int_0^delta v^j t'(v) dv`.
    mom_t: [f64; 4],
    mom_dt: [f64; 4],
    basis: [[f64; 4]; 8],
    basis_deriv: [[f64; 4]; 8],
}

fn weight_t(spec: &DickmanSpec, x: f64) -> f64 {
    spec.utility.value(x).powf(spec.theta)
}

fn weight_dt(spec: &DickmanSpec, x: f64) -> f64 {
    let th = spec.theta;
    match spec.utility {
        Utility::Identity => th * x.powf(th - 1.0),
        ref s => th * s.value(x).powf(th - 1.0) * s.deriv(x),
    }
}

fn weight_d2t(spec: &DickmanSpec, x: f64) -> f64 {
    let th = spec.theta;
    match spec.utility {
        Utility::Identity => th * (th - 1.0) * x.powf(th - 2.0),
        ref s => {
            let v = s.value(x);
            let d = s.deriv(x);
            th * (th - 1.0) * v.powf(th - 2.0) * d * d + th * v.powf(th - 1.0) * s.deriv2(x)
        }
    }
}

impl Weight {
    fn new(spec: &DickmanSpec, cells: usize) -> Self {
        let d = GRID_STEP;
        let nodes = |f: &dyn Fn(f64) -> f64| (0..=cells).map(|i| f(i as f64 * d)).collect::<Vec<f64>>();
        let t = nodes(&|x| weight_t(spec, x));
        let dt = nodes(&|x| weight_dt(spec, x));
        let d2t = nodes(&|x| weight_d2t(spec, x));
        let gauss = |f: &dyn Fn(f64) -> f64| {
            (0..cells)
                .map(|i| {
                    let mid = (i as f64 + 0.5) * d;
                    let mut out = [0.0; 8];
                    for (slot, (z, _)) in out.iter_mut().zip(GAUSS8) {
                        *slot = f(mid + 0.5 * d * z);
                    }
                    out
                })
                .collect::<Vec<[f64; 8]>>()
        };
        let gauss_t = gauss(&|x| weight_t(spec, x));
        let gauss_dt = gauss(&|x| weight_dt(spec, x));
        let t_delta = weight_t(spec, d);
        let mut mom_t = [0.0; 4];
        for (j, m) in mom_t.iter_mut().enumerate() {
            let scale = d.powi(j as i32 + 1) * t_delta;
            *m = integrate_from_zero(&|v: f64| v.powi(j as i32) * weight_t(spec, v), d, 1e-14 * scale);
        }
        // Integration by parts, since t(0) = 0.
        let mut mom_dt = [t_delta, 0.0, 0.0, 0.0];
        for j in 1..4 {
            mom_dt[j] = d.powi(j as i32) * t_delta - j as f64 * mom_t[j - 1];
        }
        let mut basis = [[0.0; 4]; 8];
        let mut basis_deriv = [[0.0; 4]; 8];
        for (q, (z, _)) in GAUSS8.iter().enumerate() {
            basis[q] = hermite_basis(0.5 * (1.0 + z));
            basis_deriv[q] = hermite_basis_deriv(0.5 * (1.0 + z));
        }
        Self { spec: spec.clone(), t, dt, d2t, gauss_t, gauss_dt, mom_t, mom_dt, basis, basis_deriv }
    }
}

/// Function being averaged: a closed form or a grid iterate.
enum Source<'a> {
    Closed(&'a TestFunction),
    Grid(&'a GridFunction),
}

impl Source<'_> {
    fn node(&self, i: usize) -> (f64, f64) {
        match self {
            Source::Closed(h) => {
                let x = i as f64 * GRID_STEP;
                (h.eval(x), h.deriv(x))
            }
            Source::Grid(g) => (g.values[i], g.derivs[i]),
        }
    }
}

/// `A_x h`, `(A_x h)'` and `(A_x h)''` on nodes `0..=cells`. Node 0 holds
/// `h(0)` and NaN derivatives.
struct Averaged {
    a: Vec<f64>,
    da: Vec<f64>,
    d2a: Vec<f64>,
}

fn apply_average(w: &Weight, src: &Source, cells: usize) -> Averaged {
    let d = GRID_STEP;
    let mut a = vec![0.0; cells + 1];
    let mut da = vec![f64::NAN; cells + 1];
    let mut d2a = vec![f64::NAN; cells + 1];
    a[0] = src.node(0).0;
    let mut j_sum = KahanSum::new();
    let mut m_sum = KahanSum::new();
    let (mut y0, mut m0) = src.node(0);
    for i in 0..cells {
        let (y1, m1) = src.node(i + 1);
        let (jint, mint) = if i == 0 {
            // Cubic through the end data, integrated against exact moments.
            let c = [
                y0,
                m0,
                (-3.0 * y0 - 2.0 * d * m0 + 3.0 * y1 - d * m1) / (d * d),
                (2.0 * y0 + d * m0 - 2.0 * y1 + d * m1) / (d * d * d),
            ];
            let jint: f64 = (0..4).map(|k| c[k] * w.mom_dt[k]).sum();
            let mint: f64 = (1..4).map(|k| k as f64 * c[k] * w.mom_t[k - 1]).sum();
            (jint, mint)
        } else {
            cell_integrals(w, src, i, [y0, d * m0, y1, d * m1])
        };
        j_sum.add(jint);
        m_sum.add(mint);
        let node = i + 1;
        let (t, dt, d2t) = (w.t[node], w.dt[node], w.d2t[node]);
        a[node] = j_sum.value() / t;
        da[node] = dt * m_sum.value() / (t * t);
        d2a[node] = dt / t * m1 + (d2t / dt - 2.0 * dt / t) * da[node];
        y0 = y1;
        m0 = m1;
    }
    Averaged { a, da, d2a }
}

/// `(int h t', int h' t)` over cell `i`.
fn cell_integrals(w: &Weight, src: &Source, i: usize, ends: [f64; 4]) -> (f64, f64) {
    let d = GRID_STEP;
    let (lo, hi) = (i as f64 * d, (i + 1) as f64 * d);
    if let Source::Closed(h) = src {
        if let Some(k) = h.kinks().into_iter().find(|&k| k > lo && k < hi) {
            let spec = &w.spec;
            let piece = |a: f64, b: f64| {
                (gauss8(&|x| h.eval(x) * weight_dt(spec, x), a, b), gauss8(&|x| h.deriv(x) * weight_t(spec, x), a, b))
            };
            let (j1, m1) = piece(lo, k);
            let (j2, m2) = piece(k, hi);
            return (j1 + j2, m1 + m2);
        }
    }
    let (mut jint, mut mint) = (0.0, 0.0);
    for (q, (z, wq)) in GAUSS8.iter().enumerate() {
        let (hv, hd) = match src {
            Source::Closed(h) => {
                let x = lo + 0.5 * d * (1.0 + z);
                (h.eval(x), h.deriv(x))
            }
            Source::Grid(_) => {
                let b = &w.basis[q];
                let bd = &w.basis_deriv[q];
                (
                    b[0] * ends[0] + b[1] * ends[1] + b[2] * ends[2] + b[3] * ends[3],
                    (bd[0] * ends[0] + bd[1] * ends[1] + bd[2] * ends[2] + bd[3] * ends[3]) / d,
                )
            }
        };
        jint += wq * hv * w.gauss_dt[i][q];
        mint += wq * hd * w.gauss_t[i][q];
    }
    (0.5 * d * jint, 0.5 * d * mint)
}

/// Next iterate `x -> A_{x+1} h` from an averaged function.
fn shift_by_one(avg: &Averaged) -> GridFunction {
    GridFunction { values: avg.a[STEPS_PER_UNIT..].to_vec(), derivs: avg.da[STEPS_PER_UNIT..].to_vec() }
}

fn cells_for(length: f64) -> usize {
    (length * STEPS_PER_UNIT as f64).ceil() as usize
}

/// `A_x h` at one point by adaptive quadrature of
/// `int_0^1 h(s^{-1}(u^{1/theta} s(x))) du`.
pub fn averaging_operator(spec: &DickmanSpec, h: &dyn Fn(f64) -> f64, x: f64) -> Result<f64> {
    check_theta(spec.theta)?;
    if x < 0.0 {
        return Err(invalid("averaging point must be nonnegative"));
    }
    if x == 0.0 {
        return Ok(h(0.0));
    }
    let inv = 1.0 / spec.theta;
    let sx = spec.utility.value(x);
    let sup = spec.utility.range_sup();
    let failed = std::cell::Cell::new(false);
    let integrand = |u: f64| {
        let v = u.powf(inv);
        let y = match spec.utility {
            Utility::Identity => v * x,
            // s(x) can round onto its supremum for bounded utilities
            _ if v * sx >= sup => x,
            ref s => s.inverse(v * sx).map(|y| y.min(x)).unwrap_or_else(|_| {
                failed.set(true);
                f64::NAN
            }),
        };
        h(y)
    };
    let v = integrate_from_zero(&integrand, 1.0, 1e-12);
    if failed.get() {
        return Err(Error::Convergence("utility inverse failed inside average".into()));
    }
    Ok(v)
}

/// Least `K` with `lip (mu + x_max) rho^{K+1} / (1 - rho) <= epsilon`.
pub fn truncation_depth(mu: f64, x_max: f64, rho: f64, epsilon: f64, lip: f64) -> Result<usize> {
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::NotContracting { rho });
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(invalid("epsilon must be positive"));
    }
    let mut k = 0usize;
    while lip * (mu + x_max) * rho.powi(k as i32 + 1) / (1.0 - rho) > epsilon {
        k += 1;
        if k > 100_000 {
            return Err(Error::Convergence("truncation depth exceeds 100000".into()));
        }
    }
    Ok(k)
}

fn contraction_rho(spec: &DickmanSpec) -> Result<f64> {
    let rho = rho_bound(spec)?.value;
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::NotContracting { rho });
    }
    Ok(rho)
}

/// Least depth whose certified chain distance, times `lip`, is below the
/// centering tolerance.
fn centering_depth(spec: &DickmanSpec, lip: f64) -> Result<usize> {
    let base = certified_d1(spec, 0)?.ok_or(Error::NotContracting { rho: f64::NAN })?;
    let r = spec.theta / (spec.theta + 1.0);
    let mut k = 0;
    while lip * base * r.powi(k as i32) > CENTERING_TOL {
        k += 1;
        if k > MAX_CENTERING_DEPTH {
            return Err(Error::Resource("centering depth exceeds limit".into()));
        }
    }
    Ok(k)
}

/// `E h(W_k)` for the chain from 0, via `k` averaging steps on the grid;
/// equals `(A_{.+1})^k h (0)`.
fn chain_expectation(w: &Weight, h: &TestFunction, k: usize) -> f64 {
    if k == 0 {
        return h.eval(0.0);
    }
    let mut cur: Option<GridFunction> = None;
    for step in 0..k {
        let cells = (k - step) * STEPS_PER_UNIT;
        let avg = match &cur {
            None => apply_average(w, &Source::Closed(h), cells),
            Some(g) => apply_average(w, &Source::Grid(g), cells),
        };
        cur = Some(shift_by_one(&avg));
    }
    cur.expect("k >= 1").values[0]
}

/// `E h(D)` with its certified error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Centering {
    pub value: f64,
    pub error: f64,
    pub depth: usize,
}

fn compute_centering(spec: &DickmanSpec, w: &Weight, h: &TestFunction) -> Result<Centering> {
    let lip = h.lipschitz();
    let depth = centering_depth(spec, lip)?;
    let value = chain_expectation(w, h, depth);
    let error = lip * certified_d1(spec, depth)?.unwrap_or(f64::INFINITY);
    Ok(Centering { value, error, depth })
}

/// `E h(D_{theta,s})` computed on a fresh grid.
pub fn limit_expectation(spec: &DickmanSpec, h: &TestFunction) -> Result<Centering> {
    check_theta(spec.theta)?;
    let depth = centering_depth(spec, h.lipschitz())?;
    let w = Weight::new(spec, depth.max(1) * STEPS_PER_UNIT);
    compute_centering(spec, &w, h)
}

/// Mean of `D_{theta,s}` with its certified error.
pub fn limit_mean(spec: &DickmanSpec) -> Result<Centering> {
    if spec.utility == Utility::Identity {
        return Ok(Centering { value: spec.theta, error: 0.0, depth: 0 });
    }
    limit_expectation(spec, &TestFunction::Linear)
}

/// The iterates `h^{(0)}, ..., h^{(K)}`, with `h^{(k)}` on `[0, x_max + K - k]`.
pub fn iterate_averages(spec: &DickmanSpec, h: &TestFunction, k_max: usize, x_max: f64) -> Result<Vec<GridFunction>> {
    check_theta(spec.theta)?;
    contraction_rho(spec)?;
    let total = cells_for(x_max) + k_max * STEPS_PER_UNIT;
    let w = Weight::new(spec, total + STEPS_PER_UNIT);
    let mut out = Vec::with_capacity(k_max + 1);
    let first = GridFunction {
        values: (0..=total).map(|i| h.eval(i as f64 * GRID_STEP)).collect(),
        derivs: (0..=total).map(|i| h.deriv(i as f64 * GRID_STEP)).collect(),
    };
    out.push(first);
    for k in 0..k_max {
        let cells = total - k * STEPS_PER_UNIT;
        let avg = if k == 0 {
            apply_average(&w, &Source::Closed(h), cells)
        } else {
            apply_average(&w, &Source::Grid(&out[k]), cells)
        };
        out.push(shift_by_one(&avg));
    }
    Ok(out)
}

/// Derivative bounds of `A_x h` over the grid on `(0, x_end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AverageDerivatives {
    pub max_first: f64,
    pub max_second: f64,
}

/// `sup |(A_{x+1} h)'|` and `sup |(A_{x+1} h)''|` over `x in [0, x_end]`.
pub fn shifted_average_derivatives(spec: &DickmanSpec, h: &TestFunction, x_end: f64) -> Result<AverageDerivatives> {
    check_theta(spec.theta)?;
    let cells = cells_for(x_end + 1.0);
    let w = Weight::new(spec, cells);
    let avg = apply_average(&w, &Source::Closed(h), cells);
    let range = STEPS_PER_UNIT..=cells;
    Ok(AverageDerivatives {
        max_first: avg.da[range.clone()].iter().fold(0.0, |m, v| m.max(v.abs())),
        max_second: avg.d2a[range].iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteinSolution {
    pub theta: f64,
    pub utility: String,
    /// Grid on `(0, x_max]`.
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub f_double_prime: Vec<f64>,
    /// Truncated sum `g = sum_{k <= K} h^{(k)}` of centered iterates.
    pub g: Vec<f64>,
    /// `(t/t') f' + f(x) - f(x+1) - (h(x) - E h(D))`.
    pub residual: Vec<f64>,
    pub k_terms: usize,
    pub rho: f64,
    pub mu: f64,
    /// Bound on the sup of the first omitted iterate over `[0, x_max]`.
    pub tail_bound: f64,
    pub centering: Centering,
}

impl SteinSolution {
    pub fn max_abs(values: &[f64]) -> f64 {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# theta={}", self.theta)?;
        writeln!(out, "# utility={}", self.utility)?;
        writeln!(out, "# K={}", self.k_terms)?;
        writeln!(out, "# tail_bound={:e}", self.tail_bound)?;
        writeln!(out, "# centering={} centering_error={:e}", self.centering.value, self.centering.error)?;
        writeln!(out, "x,f,f_prime,f_double_prime")?;
        for i in 0..self.x.len() {
            writeln!(out, "{},{},{},{}", self.x[i], self.f[i], self.f_prime[i], self.f_double_prime[i])?;
        }
        Ok(())
    }
}

/// Solves the Stein equation for `h` on `(0, x_max]`, keeping enough terms
/// that the omitted tail is at most `epsilon`.
pub fn solve_stein(spec: &DickmanSpec, h: &TestFunction, epsilon: f64, x_max: f64) -> Result<SteinSolution> {
    check_theta(spec.theta)?;
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(invalid("x_max must be positive"));
    }
    let rho = contraction_rho(spec)?;
    let lip = h.lipschitz();
    let mean = limit_mean(spec)?;
    let mu = mean.value + mean.error;
    let k_terms = truncation_depth(mu, x_max, rho, epsilon, lip)?;
    let tail_bound = lip * (mu + x_max) * rho.powi(k_terms as i32 + 1) / (1.0 - rho);

    let report_cells = cells_for(x_max);
    let needed = report_cells + STEPS_PER_UNIT + k_terms * STEPS_PER_UNIT;
    let centering_depth = centering_depth(spec, lip)?;
    let total = needed.max(centering_depth * STEPS_PER_UNIT) + 2 * STEPS_PER_UNIT;
    let w = Weight::new(spec, total);
    let centering = compute_centering(spec, &w, h)?;
    let c = centering.value;

    // f, f', f'' and g accumulate on [0, x_max + 1].
    let keep = report_cells + STEPS_PER_UNIT;
    let mut f = vec![KahanSum::new(); keep + 1];
    let mut fp = vec![KahanSum::new(); keep + 1];
    let mut fpp = vec![KahanSum::new(); keep + 1];
    let mut g = vec![KahanSum::new(); keep + 1];
    let mut cur: Option<GridFunction> = None;
    for k in 0..=k_terms {
        let cells = needed - k * STEPS_PER_UNIT;
        let avg = match &cur {
            None => apply_average(&w, &Source::Closed(h), cells),
            Some(gk) => apply_average(&w, &Source::Grid(gk), cells),
        };
        for i in 0..=keep {
            f[i].add(avg.a[i] - c);
            fp[i].add(avg.da[i]);
            fpp[i].add(avg.d2a[i]);
            let hk = match &cur {
                None => h.eval(i as f64 * GRID_STEP),
                Some(gk) => gk.values[i],
            };
            g[i].add(hk - c);
        }
        if k < k_terms {
            cur = Some(shift_by_one(&avg));
        }
    }
    let f: Vec<f64> = f.iter().map(KahanSum::value).collect();
    let fp: Vec<f64> = fp.iter().map(KahanSum::value).collect();
    let fpp: Vec<f64> = fpp.iter().map(KahanSum::value).collect();
    let g: Vec<f64> = g.iter().map(KahanSum::value).collect();

    let range = 1..=report_cells;
    let x: Vec<f64> = range.clone().map(|i| i as f64 * GRID_STEP).collect();
    let residual = range
        .clone()
        .map(|i| {
            let ratio = w.t[i] / w.dt[i];
            ratio * fp[i] + f[i] - f[i + STEPS_PER_UNIT] - (h.eval(i as f64 * GRID_STEP) - c)
        })
        .collect();
    Ok(SteinSolution {
        theta: spec.theta,
        utility: spec.utility.tag(),
        x,
        f: f[range.clone()].to_vec(),
        f_prime: fp[range.clone()].to_vec(),
        f_double_prime: fpp[range.clone()].to_vec(),
        g: g[range].to_vec(),
        residual,
        k_terms,
        rho,
        mu,
        tail_bound,
        centering,
    })
}

/// `A_x (v - b)_+ = (x - b)^2 / (2x)` for `x > b` and `theta = 1`, with
/// its first two derivatives.
pub fn hinge_average(b: f64, x: f64) -> (f64, f64, f64) {
    if x <= b {
        return (0.0, 0.0, 0.0);
    }
    let r = b / x;
    ((x - b) * (x - b) / (2.0 * x), 0.5 * (1.0 - r * r), r * r / x)
}

/// Right limit at `x = b` of the second derivative of `A_x (v - b)_+`,
/// equal to `1/b`: unbounded as `b -> 0`.
pub fn counterexample_curvature(b: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid("b must be positive"));
    }
    // right limit at the kink of the closed form r^2 / x with r = b / x
    let x = b;
    Ok((b / x).powi(2) / x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cos_centered() -> TestFunction {
        TestFunction::Cos { omega: 1.0 }
    }

    #[test]
    fn depth_for_unit_theta() {
        assert_eq!(truncation_depth(1.0, 10.0, 0.5, 1e-6, 1.0).unwrap(), 24);
        assert!(matches!(truncation_depth(1.0, 10.0, 1.0, 1e-6, 1.0), Err(Error::NotContracting { .. })));
    }

    #[test]
    fn counterexample_values() {
        for b in [1.0, 0.1, 0.01] {
            assert_eq!(counterexample_curvature(b).unwrap(), 1.0 / b);
        }
        let (v, d1, d2) = hinge_average(0.5, 1.0);
        assert_abs_diff_eq!(v, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(d1, 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(d2, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn pointwise_operator_on_monomials() {
        for theta in [0.5, 1.0, 2.0] {
            let spec = DickmanSpec::identity(theta).unwrap();
            let v = averaging_operator(&spec, &|y| y, 3.0).unwrap();
            assert_abs_diff_eq!(v, 3.0 * theta / (theta + 1.0), epsilon = 1e-10);
            let c = averaging_operator(&spec, &|_| 4.5, 2.0).unwrap();
            assert_abs_diff_eq!(c, 4.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_average_matches_pointwise() {
        for (theta, s) in [(0.5, Utility::Identity), (2.0, Utility::Identity), (1.0, Utility::LogShift)] {
            let spec = DickmanSpec::new(theta, s).unwrap();
            let h = TestFunction::Sin { omega: 1.3 };
            let cells = 4 * STEPS_PER_UNIT;
            let w = Weight::new(&spec, cells);
            let avg = apply_average(&w, &Source::Closed(&h), cells);
            for node in [1, 7, 300, 1024, 2048] {
                let x = node as f64 * GRID_STEP;
                let exact = averaging_operator(&spec, &|y| h.eval(y), x).unwrap();
                assert_abs_diff_eq!(avg.a[node], exact, epsilon = 1e-10);
                let hstep = 1e-5;
                let fd = (averaging_operator(&spec, &|y| h.eval(y), x + hstep).unwrap()
                    - averaging_operator(&spec, &|y| h.eval(y), x - hstep).unwrap())
                    / (2.0 * hstep);
                assert_abs_diff_eq!(avg.da[node], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn second_derivative_of_hinge_average() {
        let spec = DickmanSpec::identity(1.0).unwrap();
        let b = 0.5;
        let h = TestFunction::Hinge { center: b };
        let cells = 3 * STEPS_PER_UNIT;
        let w = Weight::new(&spec, cells);
        let avg = apply_average(&w, &Source::Closed(&h), cells);
        for node in [100, 257, 600, 1500] {
            let (v, d1, d2) = hinge_average(b, node as f64 * GRID_STEP);
            assert_abs_diff_eq!(avg.a[node], v, epsilon = 1e-12);
            assert_abs_diff_eq!(avg.da[node], d1, epsilon = 1e-12);
            assert_abs_diff_eq!(avg.d2a[node], d2, epsilon = 1e-9);
        }
    }

    #[test]
    fn centering_matches_closed_form() {
        // E[D_1] = 1 and E[exp(-D_1)] is not closed form, but E D_theta = theta.
        for theta in [0.5, 1.0, 2.0] {
            let spec = DickmanSpec::identity(theta).unwrap();
            let c = limit_expectation(&spec, &TestFunction::Linear).unwrap();
            assert_abs_diff_eq!(c.value, theta, epsilon = 1e-10);
        }
    }

    #[test]
    fn centering_of_cos_agrees_with_sampling() {
        let spec = DickmanSpec::identity(1.0).unwrap();
        let c = limit_expectation(&spec, &cos_centered()).unwrap();
        let batch = crate::metrics::reference_oracle(1.0, 1e-6, 400_000, 8).unwrap();
        let vals: Vec<f64> = batch.values.iter().map(|x| x.cos()).collect();
        let (m, se) = crate::numeric::mean_stderr(&vals);
        assert!((m - c.value).abs() < 5.0 * se + 1e-6, "{m} vs {}", c.value);
    }

    #[test]
    fn log_utility_mean() {
        let spec = DickmanSpec::new(1.0, Utility::LogShift).unwrap();
        let m = limit_mean(&spec).unwrap();
        let batch = crate::dickman::sample_dtheta_s(&spec, 40, 100_000, 4).unwrap();
        let (mc, se) = crate::numeric::mean_stderr(&batch.values);
        assert!((mc - m.value).abs() < 5.0 * se, "{mc} vs {}", m.value);
    }

    #[test]
    fn solution_residual_small() {
        let spec = DickmanSpec::identity(1.0).unwrap();
        let sol = solve_stein(&spec, &cos_centered(), 1e-6, 4.0).unwrap();
        assert_eq!(sol.k_terms, truncation_depth(1.0, 4.0, 0.5, 1e-6, 1.0).unwrap());
        let r = SteinSolution::max_abs(&sol.residual);
        assert!(r <= 1e-6 + 1e-7, "residual {r}");
        assert!(SteinSolution::max_abs(&sol.f_prime) <= 1.0 + 1e-6);
        assert!(SteinSolution::max_abs(&sol.f_double_prime) <= 0.5 + 1e-6);
    }

    #[test]
    fn refuses_non_contracting_utility() {
        let s = Utility::tabulated(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.05, 1.0, 3.0]).unwrap();
        let spec = DickmanSpec::new(1.0, s).unwrap();
        let rho = rho_bound(&spec).unwrap();
        if rho.value >= 1.0 {
            assert!(matches!(solve_stein(&spec, &cos_centered(), 1e-6, 2.0), Err(Error::NotContracting { .. })));
        }
    }

    #[test]
    fn csv_layout() {
        let spec = DickmanSpec::identity(1.0).unwrap();
        let sol = solve_stein(&spec, &cos_centered(), 1e-4, 1.0).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().take_while(|l| l.starts_with('#')).count() >= 4);
        assert!(text.contains("\nx,f,f_prime,f_double_prime\n"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + STEPS_PER_UNIT);
    }
}
