//! Empirical distances between samples and the certified reference law.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dickman::{certified_d1_identity, check_theta, identity_chain, SampleBatch};
use crate::error::{invalid, Result};
use crate::numeric::{kahan_sum, mean_stderr, KahanSum};
use crate::rng::{domain, Streams};
use crate::testfn::{smooth_dictionary, TestFunction};
use crate::utility::Utility;

pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// `int |F_a - F_b|` for sorted samples of any sizes.
pub fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    if a.len() == b.len() {
        return kahan_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs())) / a.len() as f64;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut acc = KahanSum::new();
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        acc.add((i as f64 / na - j as f64 / nb).abs() * (next - x));
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    acc.value()
}

/// Resample of a sorted array, already sorted, from multinomial counts.
fn sorted_resample<R: Rng>(xs: &[f64], rng: &mut R) -> Vec<f64> {
    let n = xs.len();
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    let mut out = Vec::with_capacity(n);
    for (x, &c) in xs.iter().zip(&counts) {
        out.extend(std::iter::repeat_n(*x, c as usize));
    }
    out
}

/// Order-statistic Wasserstein-1 distance with a bootstrap standard error
/// from 200 independent resamples of each batch.
pub fn wasserstein1_empirical(a: &[f64], b: &[f64]) -> Result<Estimate> {
    wasserstein1_with_seed(a, b, 0)
}

pub fn wasserstein1_with_seed(a: &[f64], b: &[f64], seed: u64) -> Result<Estimate> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("empty sample"));
    }
    let sa = sorted(a);
    let sb = sorted(b);
    let value = wasserstein1_sorted(&sa, &sb);
    let streams = Streams::new(seed, domain::BOOTSTRAP);
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.rng(r as u64);
            let ra = sorted_resample(&sa, &mut rng);
            let rb = sorted_resample(&sb, &mut rng);
            wasserstein1_sorted(&ra, &rb)
        })
        .collect();
    let (_, se_of_mean) = mean_stderr(&boots);
    let stderr = se_of_mean * (boots.len() as f64).sqrt();
    Ok(Estimate { value, stderr })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothDistance {
    pub value: f64,
    pub stderr: f64,
    pub witness: String,
}

/// `max_h |mean_a h - mean_b h|` over the dictionary: a lower bound on the
/// distance over functions with `|h'|, |h''| <= 1`, up to sampling error.
pub fn smooth_distance_lower(a: &[f64], b: &[f64], dictionary: &[TestFunction]) -> Result<SmoothDistance> {
    if a.is_empty() || b.is_empty() || dictionary.is_empty() {
        return Err(invalid("empty sample or dictionary"));
    }
    let per_function: Vec<(f64, f64)> = dictionary
        .par_iter()
        .map(|h| {
            let ha: Vec<f64> = a.iter().map(|&x| h.eval(x)).collect();
            let hb: Vec<f64> = b.iter().map(|&x| h.eval(x)).collect();
            let (ma, sa) = mean_stderr(&ha);
            let (mb, sb) = mean_stderr(&hb);
            ((ma - mb).abs(), (sa * sa + sb * sb).sqrt())
        })
        .collect();
    let (best, &(value, stderr)) =
        per_function.iter().enumerate().max_by(|x, y| x.1 .0.total_cmp(&y.1 .0)).expect("nonempty");
    Ok(SmoothDistance { value, stderr, witness: dictionary[best].name() })
}

/// Dictionary whose smoothed hinges sit at the reference quartiles.
pub fn reference_dictionary(reference: &[f64]) -> Vec<TestFunction> {
    let s = sorted(reference);
    let q = |p: f64| s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
    smooth_dictionary(&[q(0.25), q(0.5), q(0.75)])
}

/// Least depth whose certified distance `theta (theta/(theta+1))^n` is at
/// most `epsilon`.
pub fn reference_depth(theta: f64, epsilon: f64) -> Result<usize> {
    check_theta(theta)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(invalid("epsilon must be positive"));
    }
    let raw = ((theta / epsilon).ln() / ((theta + 1.0) / theta).ln()).ceil().max(0.0);
    let mut n = raw as usize;
    while certified_d1_identity(theta, n) > epsilon {
        n += 1;
    }
    while n > 0 && certified_d1_identity(theta, n - 1) <= epsilon {
        n -= 1;
    }
    Ok(n)
}

/// Identity-utility batch within certified distance `epsilon` of `D_theta`,
/// drawn from its own stream domain.
pub fn reference_oracle(theta: f64, epsilon: f64, m: usize, seed: u64) -> Result<SampleBatch> {
    let depth = reference_depth(theta, epsilon)?;
    let values = identity_chain(theta, depth, m, Streams::new(seed, domain::REFERENCE));
    Ok(SampleBatch {
        values,
        theta,
        depth,
        seed,
        utility: Utility::Identity.tag(),
        certified_d1: Some(certified_d1_identity(theta, depth)),
    })
}
