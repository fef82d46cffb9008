//! Sums `S_n = (log p_n)^{-1} sum_k X_k log p_k` over the first `n` primes,
//! the index coupling `(T, U)` and the size-bias identity.
//!
//! Marks are mostly zero, so a draw jumps between nonzero marks using the
//! cumulative hazard `sum_k -log P(X_k = 0)`.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::numeric::{kahan_sum, mean_stderr, KahanSum};
use crate::primes::PrimeTable;
use crate::report::BoundReport;
use crate::rng::{domain, uniform, uniform_pos, Streams};
use crate::testfn::{half_lipschitz_dictionary, TestFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MarkLaw {
    /// `P(X_k = m) = p_k^{-m} (1 - 1/p_k)`.
    Geometric,
    /// `X_k ~ Ber(1/(1 + p_k))`.
    Bernoulli,
    /// `X_k ~ Poi(1/(1 + p_k))`.
    PoissonInvPrime,
    /// `X_k ~ Poi(1 - log p_{k-1} / log p_k)` with `p_0 = 1`.
    PoissonLogRatio,
}

impl MarkLaw {
    pub const ALL: [MarkLaw; 4] =
        [MarkLaw::Geometric, MarkLaw::Bernoulli, MarkLaw::PoissonInvPrime, MarkLaw::PoissonLogRatio];

    pub fn name(&self) -> &'static str {
        match self {
            MarkLaw::Geometric => "geometric",
            MarkLaw::Bernoulli => "bernoulli",
            MarkLaw::PoissonInvPrime => "poisson-inv-prime",
            MarkLaw::PoissonLogRatio => "poisson-log-ratio",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        MarkLaw::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| invalid(format!("unknown mark law `{s}`")))
    }
}

/// A realized `S_n` together with its nonzero marks `(index, value)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimeDraw {
    pub s: f64,
    pub marks: Vec<(usize, u64)>,
}

impl PrimeDraw {
    pub fn mark(&self, k: usize) -> u64 {
        self.marks.iter().find(|(i, _)| *i == k).map_or(0, |&(_, x)| x)
    }
}

/// Per-index quantities for one mark law over one prime table.
#[derive(Clone, Debug)]
pub struct PrimeSumModel {
    law: MarkLaw,
    primes: Vec<u64>,
    /// `log p_k / log p_n`.
    scaled_log: Vec<f64>,
    /// Poisson means, empty for the other laws.
    lambda: Vec<f64>,
    hazard: Vec<f64>,
    coupling_cdf: Vec<f64>,
    mu: f64,
}

impl PrimeSumModel {
    pub fn new(table: &PrimeTable, law: MarkLaw) -> Self {
        let n = table.len();
        let log_pn = table.log_pn();
        let logs = table.logs();
        let primes = table.primes().to_vec();
        let scaled_log: Vec<f64> = logs.iter().map(|l| l / log_pn).collect();
        let lambda: Vec<f64> = match law {
            MarkLaw::PoissonInvPrime => primes.iter().map(|&p| 1.0 / (1.0 + p as f64)).collect(),
            MarkLaw::PoissonLogRatio => {
                (0..n).map(|k| if k == 0 { 1.0 } else { 1.0 - logs[k - 1] / logs[k] }).collect()
            }
            _ => Vec::new(),
        };
        let mut acc = KahanSum::new();
        let hazard = (0..n)
            .map(|k| {
                let p = primes[k] as f64;
                acc.add(match law {
                    MarkLaw::Geometric => -(-1.0 / p).ln_1p(),
                    MarkLaw::Bernoulli => -(-1.0 / (1.0 + p)).ln_1p(),
                    _ => lambda[k],
                });
                acc.value()
            })
            .collect();
        let (coupling_cdf, mu) = match law {
            MarkLaw::Geometric => (table.breakpoints().to_vec(), table.mu_geometric()),
            MarkLaw::Bernoulli | MarkLaw::PoissonInvPrime => {
                let cum = table.cum_bernoulli();
                let total = cum[n - 1];
                let mut cdf: Vec<f64> = cum.iter().map(|c| c / total).collect();
                cdf[n - 1] = 1.0;
                (cdf, table.mu_bernoulli())
            }
            MarkLaw::PoissonLogRatio => {
                // Weights telescope, so F_j = log p_j / log p_n and mu = 1.
                let mut cdf = scaled_log.clone();
                cdf[n - 1] = 1.0;
                (cdf, (logs[n - 1] - 0.0) / log_pn)
            }
        };
        Self { law, primes, scaled_log, lambda, hazard, coupling_cdf, mu }
    }

    pub fn law(&self) -> MarkLaw {
        self.law
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn scaled_log(&self) -> &[f64] {
        &self.scaled_log
    }

    /// `P(I <= j)`, indexed from 0.
    pub fn coupling_cdf(&self) -> &[f64] {
        &self.coupling_cdf
    }

    /// `E[X_k]`.
    pub fn mark_mean(&self, k: usize) -> f64 {
        let p = self.primes[k] as f64;
        match self.law {
            MarkLaw::Geometric => 1.0 / (p - 1.0),
            MarkLaw::Bernoulli => 1.0 / (1.0 + p),
            _ => self.lambda[k],
        }
    }

    /// `P(X_k = 0)`.
    pub fn zero_probability(&self, k: usize) -> f64 {
        let below = if k == 0 { 0.0 } else { self.hazard[k - 1] };
        (-(self.hazard[k] - below)).exp()
    }

    fn positive_mark<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> u64 {
        match self.law {
            MarkLaw::Geometric => {
                let p = self.primes[k] as f64;
                1 + (-uniform_pos(rng).ln() / p.ln()).floor() as u64
            }
            MarkLaw::Bernoulli => 1,
            _ => truncated_poisson(self.lambda[k], rng),
        }
    }

    /// Draws one `S_n`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> PrimeDraw {
        let mut marks = Vec::new();
        let mut s = KahanSum::new();
        let mut base = 0.0;
        loop {
            let target = base - uniform_pos(rng).ln();
            let k = self.hazard.partition_point(|&h| h < target);
            if k >= self.len() {
                break;
            }
            let x = self.positive_mark(k, rng);
            s.add(x as f64 * self.scaled_log[k]);
            marks.push((k, x));
            base = self.hazard[k];
        }
        PrimeDraw { s: s.value(), marks }
    }

    /// Index `I` with `F_{I-1} <= u < F_I`.
    pub fn coupling_index(&self, u: f64) -> usize {
        self.coupling_cdf.partition_point(|&f| f <= u).min(self.len() - 1)
    }

    /// `T` given the index and the mark at that index.
    pub fn coupling_t(&self, i: usize, mark_at_i: u64) -> f64 {
        let a = self.scaled_log[i];
        match self.law {
            MarkLaw::Bernoulli => a - mark_at_i as f64 * a,
            _ => a,
        }
    }
}

/// Poisson conditioned to be positive, by inversion.
fn truncated_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let u = uniform(rng) * -(-lambda).exp_m1();
    let mut k = 1u64;
    let mut p = lambda * (-lambda).exp();
    let mut cdf = p;
    while u >= cdf && p > 0.0 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

pub fn sample_prime_sum(table: &PrimeTable, law: MarkLaw, m: usize, seed: u64) -> Vec<f64> {
    let model = PrimeSumModel::new(table, law);
    Streams::new(seed, domain::PRIME_SUM).generate(m, |rng| model.draw(rng).s)
}

/// `mu_n` for the law: the mean of `S_n`.
pub fn mu_n(table: &PrimeTable, law: MarkLaw) -> f64 {
    PrimeSumModel::new(table, law).mu()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSample {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub index: Vec<usize>,
    pub mean_abs_gap: f64,
    pub stderr: f64,
}

/// Draws `(T, U)` pairs; a Bernoulli `X_I` is drawn afresh.
pub fn coupling_tu(table: &PrimeTable, law: MarkLaw, m: usize, seed: u64) -> CouplingSample {
    let model = PrimeSumModel::new(table, law);
    let rows = Streams::new(seed, domain::COUPLING).generate(m, |rng| {
        let u = uniform(rng);
        let i = model.coupling_index(u);
        let x = match law {
            MarkLaw::Bernoulli => u64::from(uniform(rng) < model.mark_mean(i)),
            _ => 0,
        };
        (model.coupling_t(i, x), u, i)
    });
    let gaps: Vec<f64> = rows.iter().map(|(t, u, _)| (t - u).abs()).collect();
    let (mean_abs_gap, stderr) = mean_stderr(&gaps);
    let mut t = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    let mut index = Vec::with_capacity(m);
    for (a, b, c) in rows {
        t.push(a);
        u.push(b);
        index.push(c);
    }
    CouplingSample { t, u, index, mean_abs_gap, stderr }
}

/// `E|c - U|` for `U` uniform on `[lo, hi]`.
fn mean_abs_to_uniform(c: f64, lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if c <= lo {
        mid - c
    } else if c >= hi {
        c - mid
    } else {
        ((c - lo) * (c - lo) + (hi - c) * (hi - c)) / (2.0 * (hi - lo))
    }
}

/// `E|T - U|` computed exactly from the breakpoints.
pub fn exact_coupling_gap(table: &PrimeTable, law: MarkLaw) -> f64 {
    let model = PrimeSumModel::new(table, law);
    let cdf = model.coupling_cdf();
    kahan_sum((0..model.len()).map(|j| {
        let lo = if j == 0 { 0.0 } else { cdf[j - 1] };
        let hi = cdf[j];
        if hi <= lo {
            return 0.0;
        }
        let a = model.scaled_log[j];
        let gap = match law {
            MarkLaw::Bernoulli => {
                let q = model.mark_mean(j);
                (1.0 - q) * mean_abs_to_uniform(a, lo, hi) + q * mean_abs_to_uniform(0.0, lo, hi)
            }
            _ => mean_abs_to_uniform(a, lo, hi),
        };
        (hi - lo) * gap
    }))
}

/// `(2 log^2 p_n)^{-1} sum_k log^2 p_k / (p_k - 1)^2`, a bound on the
/// geometric remainder over half-Lipschitz test functions.
pub fn remainder_envelope(table: &PrimeTable) -> f64 {
    let log_pn = table.log_pn();
    let sum = kahan_sum(table.primes().iter().zip(table.logs()).map(|(&p, &l)| {
        let d = p as f64 - 1.0;
        l * l / (d * d)
    }));
    sum / (2.0 * log_pn * log_pn)
}

/// Per-draw remainder contribution for geometric marks; its mean is
/// `R_{n, phi}`.
fn remainder_sample(model: &PrimeSumModel, draw: &PrimeDraw, phi: &TestFunction) -> f64 {
    let base = phi.eval(draw.s);
    draw.marks
        .iter()
        .map(|&(k, x)| {
            let a = model.scaled_log[k];
            a * model.mark_mean(k) * x as f64 * (phi.eval(draw.s + a) - base)
        })
        .sum()
}

/// Monte Carlo estimate of the geometric remainder `R_{n, phi}` with its
/// standard error.
pub fn remainder_term(table: &PrimeTable, phi: &TestFunction, m: usize, seed: u64) -> (f64, f64) {
    let model = PrimeSumModel::new(table, MarkLaw::Geometric);
    let xs = Streams::new(seed, domain::REMAINDER).generate(m, |rng| {
        let d = model.draw(rng);
        remainder_sample(&model, &d, phi)
    });
    mean_stderr(&xs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeBiasEntry {
    pub function: String,
    /// Mean of `S phi(S) - mu phi(S + T) - r_phi`.
    pub discrepancy: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeBiasCheck {
    pub entries: Vec<SizeBiasEntry>,
    pub report: BoundReport,
}

/// Checks `E[S phi(S)] = mu E[phi(S + T)] + R_phi` over the half-Lipschitz
/// dictionary. Both sides use the same draws of `S` and `I`, so each entry
/// is the mean of a per-draw difference.
pub fn size_bias_check(table: &PrimeTable, law: MarkLaw, m: usize, seed: u64) -> SizeBiasCheck {
    let model = PrimeSumModel::new(table, law);
    let dict = half_lipschitz_dictionary();
    let mu = model.mu();
    let cols = Streams::new(seed, domain::SIZE_BIAS).generate_columns(m, dict.len(), |rng, row| {
        let draw = model.draw(rng);
        let i = model.coupling_index(uniform(rng));
        let t = model.coupling_t(i, draw.mark(i));
        for (slot, phi) in row.iter_mut().zip(&dict) {
            let r = match law {
                MarkLaw::Geometric => remainder_sample(&model, &draw, phi),
                _ => 0.0,
            };
            *slot = draw.s * phi.eval(draw.s) - mu * phi.eval(draw.s + t) - r;
        }
    });
    let entries: Vec<SizeBiasEntry> = dict
        .iter()
        .zip(&cols)
        .map(|(phi, col)| {
            let (discrepancy, stderr) = mean_stderr(col);
            SizeBiasEntry { function: phi.name(), discrepancy, stderr }
        })
        .collect();
    let worst = entries.iter().max_by(|a, b| z_score(a).total_cmp(&z_score(b))).expect("nonempty dictionary");
    let report = BoundReport::identity(format!("size-bias-{}", law.name()), worst.discrepancy, worst.stderr, m);
    SizeBiasCheck { entries, report }
}

fn z_score(e: &SizeBiasEntry) -> f64 {
    if e.stderr > 0.0 {
        e.discrepancy.abs() / e.stderr
    } else if e.discrepancy == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}
