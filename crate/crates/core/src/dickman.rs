//! Perpetuity samplers for `D_theta` and its utility-distorted variant.
//!
//! The depth-`n` chain `W_{k+1} = s^{-1}(U^{1/theta} s(W_k + 1))`, `W_0 = 0`,
//! is run for each sample. The certified Wasserstein-1 distance to the limit
//! travels with the batch.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numeric::{adaptive_simpson, gauss8, integrate_from_zero, DEFAULT_TOL};
use crate::rng::{domain, uniform_pos, Streams};
use crate::utility::Utility;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DickmanSpec {
    pub theta: f64,
    pub utility: Utility,
}

impl DickmanSpec {
    pub fn new(theta: f64, utility: Utility) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { theta, utility })
    }

    pub fn identity(theta: f64) -> Result<Self> {
        Self::new(theta, Utility::Identity)
    }

    /// One step of the chain from `w` driven by the uniform `u`.
    pub fn step(&self, w: f64, u: f64) -> Result<f64> {
        bias_transform_sample(self, w, u)
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("theta must be positive and finite, got {theta}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub theta: f64,
    pub depth: usize,
    pub seed: u64,
    pub utility: String,
    /// Certified bound on the Wasserstein-1 distance to the limit law, when
    /// the utility admits one.
    pub certified_d1: Option<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `theta (theta / (theta + 1))^n`.
pub fn certified_d1_identity(theta: f64, depth: usize) -> f64 {
    theta * contraction_power(theta, depth)
}

fn contraction_power(theta: f64, depth: usize) -> f64 {
    (theta / (theta + 1.0)).powi(depth.min(i32::MAX as usize) as i32)
}

/// `s^{-1}(u^{1/theta} s(w + 1))`: a draw from the bias transform of the
/// point mass at `w` when `u` is uniform.
pub fn bias_transform_sample(spec: &DickmanSpec, w: f64, u: f64) -> Result<f64> {
    let v = u.powf(1.0 / spec.theta);
    match &spec.utility {
        Utility::Identity => Ok(v * (w + 1.0)),
        s => {
            let target = v * s.value(w + 1.0);
            // a saturated bounded utility leaves no room below w + 1
            if target >= s.range_sup() {
                return Ok(w + 1.0);
            }
            Ok(s.inverse(target)?.min(w + 1.0))
        }
    }
}

/// `m` independent draws of the depth-`n` chain with identity utility.
pub fn sample_dtheta(theta: f64, depth: usize, m: usize, seed: u64) -> Result<SampleBatch> {
    check_theta(theta)?;
    let values = identity_chain(theta, depth, m, Streams::new(seed, domain::DICKMAN));
    Ok(SampleBatch {
        values,
        theta,
        depth,
        seed,
        utility: Utility::Identity.tag(),
        certified_d1: Some(certified_d1_identity(theta, depth)),
    })
}

pub(crate) fn identity_chain(theta: f64, depth: usize, m: usize, streams: Streams) -> Vec<f64> {
    let inv = 1.0 / theta;
    streams.generate(m, |rng| {
        let mut w = 0.0;
        for _ in 0..depth {
            w = uniform_pos(rng).powf(inv) * (w + 1.0);
        }
        w
    })
}

/// `m` independent draws of the depth-`n` chain for a general utility.
pub fn sample_dtheta_s(spec: &DickmanSpec, depth: usize, m: usize, seed: u64) -> Result<SampleBatch> {
    check_theta(spec.theta)?;
    let certified_d1 = certified_d1(spec, depth)?;
    let draws = Streams::new(seed, domain::DICKMAN_S).generate(m, |rng| {
        let mut w = 0.0;
        for _ in 0..depth {
            w = bias_transform_sample(spec, w, uniform_pos(rng))?;
        }
        Ok(w)
    });
    let values = draws.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(SampleBatch { values, theta: spec.theta, depth, seed, utility: spec.utility.tag(), certified_d1 })
}

/// `(1 - rho)^{-1} (theta/(theta+1))^n E[s^{-1}(U^{1/theta})]`, or `None`
/// when no contraction constant is certified for the utility.
pub fn certified_d1(spec: &DickmanSpec, depth: usize) -> Result<Option<f64>> {
    if spec.utility == Utility::Identity {
        return Ok(Some(certified_d1_identity(spec.theta, depth)));
    }
    let Some(rho) = certified_rho(spec) else {
        return Ok(None);
    };
    let first = mean_first_step(spec)?;
    Ok(Some(contraction_power(spec.theta, depth) * first / (1.0 - rho)))
}

/// `E[s^{-1}(U^{1/theta})]`, the mean of the first step from 0.
pub fn mean_first_step(spec: &DickmanSpec) -> Result<f64> {
    let inv = 1.0 / spec.theta;
    let s = &spec.utility;
    if *s == Utility::Identity {
        return Ok(spec.theta / (spec.theta + 1.0));
    }
    let failed = std::cell::Cell::new(false);
    let f = |u: f64| {
        s.inverse(u.powf(inv)).unwrap_or_else(|_| {
            failed.set(true);
            f64::NAN
        })
    };
    let v = integrate_from_zero(&f, 1.0, DEFAULT_TOL);
    if failed.get() || !v.is_finite() {
        return Err(Error::Convergence("first-step mean: utility inverse failed".into()));
    }
    Ok(v)
}

/// Contraction constant usable in certificates.
///
/// Concave utilities give `theta/(theta+1)`. A power mixture at `theta = 1`
/// with largest exponent `a` gives `a/(a+1)`. Other cases have none.
pub fn certified_rho(spec: &DickmanSpec) -> Option<f64> {
    let theta = spec.theta;
    match &spec.utility {
        Utility::PowerMixture { .. } if theta == 1.0 => {
            let a = spec.utility.max_exponent()?;
            Some(a / (a + 1.0))
        }
        s if s.is_concave() => Some(theta / (theta + 1.0)),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RhoBound {
    /// Constant used downstream: the certified value when available,
    /// otherwise the grid estimate.
    pub value: f64,
    /// Largest value of `I(x)` on the evaluation grid.
    pub grid_sup: f64,
    pub certified: bool,
    pub certificate: String,
}

const RHO_GRID_POINTS: usize = 4096;
const RHO_GRID_MIN: f64 = 1e-8;
const RHO_GRID_MAX: f64 = 50.0;
const SAFE_MAGNITUDE: f64 = 1e250;

/// Bound on `sup_x I(x)` where
/// `I(x) = theta s'(x) s(x)^{-(theta+1)} int_0^x s(v)^theta dv`.
pub fn rho_bound(spec: &DickmanSpec) -> Result<RhoBound> {
    check_theta(spec.theta)?;
    let grid_sup = rho_grid_sup(spec);
    let theta = spec.theta;
    let (value, certified, certificate) = match &spec.utility {
        Utility::PowerMixture { .. } if theta == 1.0 => {
            let a = spec.utility.max_exponent().unwrap_or(1.0);
            (a / (a + 1.0), true, "power-mixture:a/(a+1)".to_string())
        }
        s if s.is_concave() => (theta / (theta + 1.0), true, "concave:theta/(theta+1)".to_string()),
        _ => (grid_sup, false, "grid-estimate".to_string()),
    };
    Ok(RhoBound { value, grid_sup, certified, certificate })
}

fn rho_grid_sup(spec: &DickmanSpec) -> f64 {
    let theta = spec.theta;
    let s = &spec.utility;
    if *s == Utility::Identity {
        return theta / (theta + 1.0);
    }
    let hi = match s {
        Utility::Tabulated(t) => t.last_knot().min(RHO_GRID_MAX),
        _ => RHO_GRID_MAX,
    };
    // Keep s^(theta+1) inside the normal floating-point range.
    let exponent = 1.0 / (theta + 1.0);
    let lo = match s.inverse(SAFE_MAGNITUDE.recip().powf(exponent)) {
        Ok(x) => x.max(RHO_GRID_MIN),
        Err(_) => RHO_GRID_MIN,
    };
    let hi = match s.inverse(SAFE_MAGNITUDE.powf(exponent)) {
        Ok(x) => x.min(hi),
        Err(_) => hi,
    };
    let pow = |v: f64| s.value(v).powf(theta);
    let ratio = (hi / lo).powf(1.0 / (RHO_GRID_POINTS - 1) as f64);
    let intensity = |x: f64, integral: f64| theta * s.deriv(x) * integral / s.value(x).powf(theta + 1.0);

    let mut xs = Vec::with_capacity(RHO_GRID_POINTS);
    let mut js = Vec::with_capacity(RHO_GRID_POINTS);
    let mut x = lo;
    let mut j = integrate_from_zero(&pow, x, relative_tol(&pow, 0.0, x));
    for i in 0..RHO_GRID_POINTS {
        if i > 0 {
            let next = if i == RHO_GRID_POINTS - 1 { hi } else { x * ratio };
            j += adaptive_simpson(&pow, x, next, relative_tol(&pow, x, next));
            x = next;
        }
        xs.push(x);
        js.push(j);
    }
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..xs.len() {
        let v = intensity(xs[i], js[i]);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // Refine between the neighbours of the grid maximum.
    let lo = best_i.saturating_sub(1);
    let hi_i = (best_i + 1).min(xs.len() - 1);
    const REFINE: usize = 64;
    for k in 1..REFINE {
        let x = xs[lo] + (xs[hi_i] - xs[lo]) * k as f64 / REFINE as f64;
        let integral = js[lo] + adaptive_simpson(&pow, xs[lo], x, relative_tol(&pow, xs[lo], x));
        best = best.max(intensity(x, integral));
    }
    best
}

/// Tolerance scaled to the piece's size; `s^theta` spans many orders of
/// magnitude when theta is large.
fn relative_tol<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    (1e-11 * gauss8(f, a, b).abs()).max(f64::MIN_POSITIVE)
}

/// Batches at several depths built from one set of uniforms per sample.
///
/// For maximal depth `D`, the depth-`n` value runs the chain over the last
/// `n` of the `D` uniforms, so every depth has the right marginal law and the
/// values are monotone in depth sample by sample.
pub fn nested_batches(spec: &DickmanSpec, depths: &[usize], m: usize, seed: u64) -> Result<Vec<SampleBatch>> {
    check_theta(spec.theta)?;
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    let cols = Streams::new(seed, domain::NESTED).generate_columns(m, depths.len(), |rng, row| {
        let us: Vec<f64> = (0..max_depth).map(|_| uniform_pos(rng)).collect();
        for (slot, &n) in row.iter_mut().zip(depths) {
            let mut w = 0.0;
            for &u in &us[max_depth - n..] {
                w = match bias_transform_sample(spec, w, u) {
                    Ok(v) => v,
                    Err(_) => {
                        failed.store(true, std::sync::atomic::Ordering::Relaxed);
                        f64::NAN
                    }
                };
            }
            *slot = w;
        }
    });
    if failed.into_inner() {
        return Err(Error::Convergence("chain step failed in nested batch".into()));
    }
    depths
        .iter()
        .zip(cols)
        .map(|(&depth, values)| {
            Ok(SampleBatch {
                values,
                theta: spec.theta,
                depth,
                seed,
                utility: spec.utility.tag(),
                certified_d1: certified_d1(spec, depth)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionProfile {
    /// `mean |s(V_k) - s(W_k)|` for `k = 0..=depth`.
    pub mean_gap: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Runs two chains on shared uniforms, one from 0 and one from an
/// independent first step, and records their mean gap on the `s` scale.
pub fn contraction_profile(spec: &DickmanSpec, depth: usize, m: usize, seed: u64) -> Result<ContractionProfile> {
    check_theta(spec.theta)?;
    let s = &spec.utility;
    let cols = Streams::new(seed, domain::CONTRACTION).generate_columns(m, depth + 1, |rng, row| {
        let mut w = 0.0;
        let mut v = bias_transform_sample(spec, 0.0, uniform_pos(rng)).unwrap_or(f64::NAN);
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = (s.value(v) - s.value(w)).abs();
            if k < depth {
                let u = uniform_pos(rng);
                w = bias_transform_sample(spec, w, u).unwrap_or(f64::NAN);
                v = bias_transform_sample(spec, v, u).unwrap_or(f64::NAN);
            }
        }
    });
    let (mean_gap, stderr) = cols.iter().map(|c| crate::numeric::mean_stderr(c)).unzip();
    Ok(ContractionProfile { mean_gap, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mean_stderr;
    use approx::assert_abs_diff_eq;

    #[test]
    fn forced_uniform_steps() {
        let spec = DickmanSpec::identity(1.0).unwrap();
        assert_eq!(bias_transform_sample(&spec, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(bias_transform_sample(&spec, 2.0, 0.5).unwrap(), 1.5);
        let spec2 = DickmanSpec::identity(2.0).unwrap();
        assert_abs_diff_eq!(bias_transform_sample(&spec2, 0.0, 0.25).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn saturated_cara_step() {
        let spec = DickmanSpec::new(1.0, Utility::exponential(1.6).unwrap()).unwrap();
        assert_eq!(bias_transform_sample(&spec, 40.0, 1.0).unwrap(), 41.0);
        let x = bias_transform_sample(&spec, 40.0, 0.5).unwrap();
        assert!(x > 0.0 && x < 41.0);
    }

    #[test]
    fn depth_zero_is_zero() {
        let b = sample_dtheta(1.5, 0, 100, 1).unwrap();
        assert!(b.values.iter().all(|&v| v == 0.0));
        assert_eq!(b.certified_d1, Some(1.5));
    }

    #[test]
    fn certified_bound_values() {
        assert_abs_diff_eq!(certified_d1_identity(1.0, 10), 1.0 / 1024.0, epsilon = 1e-18);
        assert_abs_diff_eq!(certified_d1_identity(2.0, 3), 2.0 * 8.0 / 27.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_theta() {
        assert!(sample_dtheta(0.0, 5, 10, 0).is_err());
        assert!(sample_dtheta(f64::NAN, 5, 10, 0).is_err());
        assert!(DickmanSpec::identity(-1.0).is_err());
    }

    #[test]
    fn mean_and_variance_match_limit() {
        for &theta in &[0.5, 1.0, 2.0] {
            let b = sample_dtheta(theta, 80, 200_000, 5).unwrap();
            let (m, se) = mean_stderr(&b.values);
            assert!((m - theta).abs() < 5.0 * se, "theta {theta}: mean {m}");
            let var = b.values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b.len() - 1) as f64;
            assert!((var - theta / 2.0).abs() < 0.03 * theta, "theta {theta}: var {var}");
        }
    }

    #[test]
    fn general_sampler_agrees_with_identity_path() {
        let spec = DickmanSpec::identity(1.0).unwrap();
        let b = sample_dtheta_s(&spec, 30, 50_000, 3).unwrap();
        let (m, se) = mean_stderr(&b.values);
        assert!((m - 1.0).abs() < 5.0 * se);
        assert_abs_diff_eq!(b.certified_d1.unwrap(), certified_d1_identity(1.0, 30), epsilon = 1e-18);
    }

    #[test]
    fn log_utility_bound() {
        let spec = DickmanSpec::new(1.0, Utility::LogShift).unwrap();
        let first = mean_first_step(&spec).unwrap();
        assert_abs_diff_eq!(first, 1.0 / std::f64::consts::LN_2 - 1.0, epsilon = 1e-9);
        let c = certified_d1(&spec, 5).unwrap().unwrap();
        assert_abs_diff_eq!(c, 2.0 * first / 32.0, epsilon = 1e-10);
    }

    #[test]
    fn rho_for_concave_builtins() {
        for s in [Utility::Identity, Utility::exponential(2.0).unwrap(), Utility::LogShift] {
            for &theta in &[0.5, 1.0, 2.0] {
                let spec = DickmanSpec::new(theta, s.clone()).unwrap();
                let r = rho_bound(&spec).unwrap();
                assert_eq!(r.value, theta / (theta + 1.0));
                assert!(r.certified);
                assert!(r.grid_sup <= r.value + 1e-6, "{} {theta}: {}", s.tag(), r.grid_sup);
            }
        }
    }

    #[test]
    fn identity_intensity_is_flat() {
        let spec = DickmanSpec::new(1.0, Utility::Identity).unwrap();
        assert_eq!(rho_bound(&spec).unwrap().grid_sup, 0.5);
    }

    #[test]
    fn cara_sup_approaches_limit_near_zero() {
        let spec = DickmanSpec::new(2.0, Utility::exponential(1.0).unwrap()).unwrap();
        let r = rho_bound(&spec).unwrap();
        assert!(r.grid_sup > 2.0 / 3.0 - 1e-6 && r.grid_sup <= 2.0 / 3.0 + 1e-6);
    }

    #[test]
    fn power_mixture_rho() {
        let spec = DickmanSpec::new(1.0, Utility::uniform_power_mixture(0.5, 32).unwrap()).unwrap();
        let r = rho_bound(&spec).unwrap();
        assert!(r.value <= 1.0 / 3.0 + 1e-6);
        assert!(r.grid_sup <= r.value + 1e-9, "{}", r.grid_sup);
        assert_eq!(r.certificate, "power-mixture:a/(a+1)");
    }

    #[test]
    fn non_concave_table_is_uncertified() {
        let s = Utility::tabulated(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.2, 1.0, 3.0]).unwrap();
        let spec = DickmanSpec::new(1.0, s).unwrap();
        let r = rho_bound(&spec).unwrap();
        assert!(!r.certified);
        assert_eq!(certified_d1(&spec, 10).unwrap(), None);
    }

    #[test]
    fn nested_batches_are_monotone_in_depth() {
        let spec = DickmanSpec::new(1.0, Utility::LogShift).unwrap();
        let bs = nested_batches(&spec, &[3, 8, 20], 2000, 9).unwrap();
        for i in 0..2000 {
            assert!(bs[0].values[i] <= bs[1].values[i] + 1e-12);
            assert!(bs[1].values[i] <= bs[2].values[i] + 1e-12);
        }
    }

    #[test]
    fn contraction_profile_decays() {
        let spec = DickmanSpec::identity(1.0).unwrap();
        let p = contraction_profile(&spec, 6, 100_000, 2).unwrap();
        for k in 0..6 {
            let ratio = p.mean_gap[k + 1] / p.mean_gap[k];
            assert!(ratio < 0.5 + 0.02, "step {k}: {ratio}");
        }
    }
}
