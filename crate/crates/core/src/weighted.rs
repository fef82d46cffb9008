//! Weighted sums `W_n = n^{-1} sum_k Y_k B_k` of independent Bernoulli or
//! Poisson counts.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::dickman::check_theta;
use crate::error::{invalid, Result};
use crate::numeric::{kahan_sum, KahanSum};
use crate::rng::{domain, uniform, uniform_pos, Streams};

/// Law of the weights `Y_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weights {
    /// `Y_k = k`.
    Unit,
    /// `Y_k = k G_k`, `G_k` Gamma with mean 1 and variance `variance / k^epsilon`,
    /// so `Var(Y_k) = variance * k^(2 - epsilon)`.
    Scaled { variance: f64, epsilon: f64 },
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Weights::Unit => Ok(()),
            Weights::Scaled { variance, epsilon } => {
                if variance >= 0.0 && variance.is_finite() && epsilon.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("weight variance must be finite and nonnegative"))
                }
            }
        }
    }

    /// `Var(Y_k)`.
    pub fn variance(&self, k: usize) -> f64 {
        match *self {
            Weights::Unit => 0.0,
            Weights::Scaled { variance, epsilon } => variance * (k as f64).powf(2.0 - epsilon),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        let kf = k as f64;
        match *self {
            Weights::Unit => kf,
            Weights::Scaled { variance, epsilon } => {
                if variance == 0.0 {
                    return kf;
                }
                let rel = variance / kf.powf(epsilon);
                let g = Gamma::new(1.0 / rel, rel).expect("positive gamma parameters");
                kf * g.sample(rng)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Bernoulli,
    Poisson { theta: f64 },
}

/// Indices `k <= n` with `B_k = 1`, `B_k ~ Ber(1/k)`, generated by jumping
/// from one success to the next: after a success at `j` the next one
/// exceeds `m` with probability `j / m`.
fn bernoulli_successes<R: Rng + ?Sized>(n: usize, rng: &mut R, mut visit: impl FnMut(usize, &mut R)) {
    if n == 0 {
        return;
    }
    let mut j = 1usize;
    visit(j, rng);
    loop {
        let next = (j as f64 / uniform_pos(rng)).floor() + 1.0;
        if next > n as f64 {
            break;
        }
        j = next as usize;
        visit(j, rng);
    }
}

pub fn sample_bernoulli_weighted(n: usize, weights: Weights, m: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    weights.validate()?;
    let inv_n = 1.0 / n as f64;
    Ok(Streams::new(seed, domain::BERNOULLI_SUM).generate(m, |rng| {
        let mut acc = KahanSum::new();
        bernoulli_successes(n, rng, |k, r| acc.add(weights.draw(k, r)));
        acc.value() * inv_n
    }))
}

/// Harmonic numbers `H_1..H_n`.
fn harmonic_table(n: usize) -> Vec<f64> {
    let mut acc = KahanSum::new();
    (1..=n)
        .map(|k| {
            acc.add(1.0 / k as f64);
            acc.value()
        })
        .collect()
}

/// Poisson variate by sequential inversion for moderate means.
pub(crate) fn poisson_inversion<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda > 500.0 {
        return Poisson::new(lambda).expect("finite mean").sample(rng) as u64;
    }
    let u = uniform(rng);
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u >= cdf {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            break;
        }
    }
    k
}

/// `sum_k k P_k` is a Poisson point process on `{1..n}` with intensity
/// `theta / k`: draw the total count, then each location with probability
/// proportional to `1/k`.
pub fn sample_poisson_weighted(n: usize, theta: f64, weights: Weights, m: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    check_theta(theta)?;
    weights.validate()?;
    let harmonic = harmonic_table(n);
    let total = harmonic[n - 1];
    let inv_n = 1.0 / n as f64;
    Ok(Streams::new(seed, domain::POISSON_SUM).generate(m, |rng| {
        let count = poisson_inversion(theta * total, rng) as usize;
        let mut idx: Vec<usize> = (0..count)
            .map(|_| {
                let target = uniform(rng) * total;
                harmonic.partition_point(|&h| h <= target).min(n - 1) + 1
            })
            .collect();
        idx.sort_unstable();
        let mut acc = KahanSum::new();
        let mut i = 0;
        while i < idx.len() {
            let k = idx[i];
            let mut c = 0;
            while i < idx.len() && idx[i] == k {
                c += 1;
                i += 1;
            }
            acc.add(weights.draw(k, rng) * c as f64);
        }
        acc.value() * inv_n
    }))
}

/// `n^{-1} sum_k k R_k` where `R_k` marks the lower-record times of `n`
/// i.i.d. uniform heights.
pub fn sample_record_sum(n: usize, m: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let inv_n = 1.0 / n as f64;
    Ok(Streams::new(seed, domain::RECORD_SUM).generate(m, |rng| {
        let mut low = f64::INFINITY;
        let mut sum = 0.0;
        for k in 1..=n {
            let h = uniform(rng);
            if h < low {
                low = h;
                sum += k as f64;
            }
        }
        sum * inv_n
    }))
}

/// Upper bound on the smooth-function distance between `W_n` and the
/// Dickman limit of the family.
pub fn theoretical_bound(family: Family, n: usize, weights: Weights) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    weights.validate()?;
    let nf = n as f64;
    let cross = kahan_sum((1..=n).map(|k| {
        let var = weights.variance(k);
        let kf = k as f64;
        ((var + kf * kf) * var).sqrt() / kf
    }));
    match family {
        Family::Bernoulli => Ok(0.75 / nf + cross / (2.0 * nf * nf)),
        Family::Poisson { theta } => {
            check_theta(theta)?;
            let sd = kahan_sum((1..=n).map(|k| weights.variance(k).sqrt() / k as f64));
            Ok(theta / (4.0 * nf) + theta * sd / nf + theta * cross / (2.0 * nf * nf))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mean_stderr;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_weight_bounds() {
        assert_eq!(theoretical_bound(Family::Bernoulli, 1, Weights::Unit).unwrap(), 0.75);
        let forced = Weights::Scaled { variance: 0.0, epsilon: 1.0 };
        assert_eq!(theoretical_bound(Family::Bernoulli, 1, forced).unwrap(), 0.75);
        assert_abs_diff_eq!(
            theoretical_bound(Family::Poisson { theta: 2.0 }, 100, Weights::Unit).unwrap(),
            2.0 / 400.0,
            epsilon = 1e-18
        );
    }

    #[test]
    fn scaled_weight_variance() {
        let w = Weights::Scaled { variance: 1.0, epsilon: 1.0 };
        for k in 1..50 {
            assert_abs_diff_eq!(w.variance(k), k as f64, epsilon = 1e-12);
        }
        let mut rng = Streams::new(4, 0).rng(0);
        let ys: Vec<f64> = (0..200_000).map(|_| w.draw(9, &mut rng)).collect();
        let (m, _) = mean_stderr(&ys);
        let var = ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / ys.len() as f64;
        assert!((m - 9.0).abs() < 0.05 && (var - 9.0).abs() < 0.3, "{m} {var}");
    }

    #[test]
    fn n_one_and_two() {
        let w = sample_bernoulli_weighted(1, Weights::Unit, 100, 0).unwrap();
        assert!(w.iter().all(|&x| x == 1.0));
        let w2 = sample_bernoulli_weighted(2, Weights::Unit, 40_000, 1).unwrap();
        let ones = w2.iter().filter(|&&x| x == 1.5).count() as f64 / 40_000.0;
        assert!(w2.iter().all(|&x| x == 0.5 || x == 1.5));
        assert!((ones - 0.5).abs() < 0.015);
    }

    #[test]
    fn skipping_matches_indicator_probabilities() {
        let n = 12;
        let mut rng = Streams::new(2, 0).rng(0);
        let mut hits = vec![0usize; n + 1];
        let trials = 200_000;
        for _ in 0..trials {
            bernoulli_successes(n, &mut rng, |k, _| hits[k] += 1);
        }
        for (k, &hit) in hits.iter().enumerate().skip(1) {
            let p = hit as f64 / trials as f64;
            let sd = ((1.0 / k as f64) * (1.0 - 1.0 / k as f64) / trials as f64).sqrt();
            assert!((p - 1.0 / k as f64).abs() <= 5.0 * sd + 1e-12, "k={k}: {p}");
        }
    }

    #[test]
    fn means_match() {
        let b = sample_bernoulli_weighted(50, Weights::Unit, 100_000, 3).unwrap();
        let (m, se) = mean_stderr(&b);
        assert!((m - 1.0).abs() < 5.0 * se);
        let p = sample_poisson_weighted(50, 2.0, Weights::Unit, 100_000, 3).unwrap();
        let (m, se) = mean_stderr(&p);
        assert!((m - 2.0).abs() < 5.0 * se);
        let r = sample_record_sum(50, 100_000, 3).unwrap();
        let (m, se) = mean_stderr(&r);
        assert!((m - 1.0).abs() < 5.0 * se);
    }

    #[test]
    fn poisson_inversion_mean() {
        let mut rng = Streams::new(8, 0).rng(0);
        for lambda in [0.3, 4.0, 40.0, 900.0] {
            let xs: Vec<f64> = (0..50_000).map(|_| poisson_inversion(lambda, &mut rng) as f64).collect();
            let (m, se) = mean_stderr(&xs);
            assert!((m - lambda).abs() < 5.0 * se, "{lambda}: {m}");
        }
    }
}
