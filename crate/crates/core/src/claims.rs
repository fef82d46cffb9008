//! Registry of checkable distance bounds.

use crate::dickman::{certified_d1, nested_batches, DickmanSpec};
use crate::error::{invalid, Error, Result};
use crate::metrics::{reference_dictionary, reference_oracle, smooth_distance_lower, wasserstein1_sorted};
use crate::numeric::mean_stderr;
use crate::prime_sums::{exact_coupling_gap, mu_n, remainder_envelope, sample_prime_sum, size_bias_check, MarkLaw};
use crate::primes::{build_prime_table, PrimeTable};
use crate::report::{BoundReport, Verdict};
use crate::utility::Utility;
use crate::weighted::{
    sample_bernoulli_weighted, sample_poisson_weighted, sample_record_sum, theoretical_bound, Family, Weights,
};

/// Certified accuracy of the reference batches used as stand-ins for `D_theta`.
pub const REFERENCE_EPSILON: f64 = 1e-3;
/// Allowed relative spread of `bound * log n` across sizes.
pub const STABILITY_BAND: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct ClaimParams {
    pub n: Option<usize>,
    pub theta: Option<f64>,
    pub depth: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub utility: Utility,
    pub weights: Weights,
}

impl Default for ClaimParams {
    fn default() -> Self {
        Self {
            n: None,
            theta: None,
            depth: None,
            samples: 100_000,
            seed: 0,
            utility: Utility::Identity,
            weights: Weights::Unit,
        }
    }
}

pub struct ClaimInfo {
    pub id: &'static str,
    pub statement: &'static str,
}

pub const CLAIMS: &[ClaimInfo] = &[
    ClaimInfo { id: "weighted-bernoulli", statement: "d11(W_n, D_1) <= 3/(4n) + (2n^2)^-1 sum_k k^-1 sqrt((s_k^2 + k^2) s_k^2) for Bernoulli(1/k) counts" },
    ClaimInfo { id: "weighted-poisson", statement: "d11(W_n, D_theta) <= theta/(4n) + (theta/n) sum_k s_k/k + (theta/(2n^2)) sum_k k^-1 sqrt((s_k^2 + k^2) s_k^2) for Poisson(theta/k) counts" },
    ClaimInfo { id: "record-sum", statement: "lower-record times: d11(n^-1 sum_k k R_k, D_1) <= 3/(4n)" },
    ClaimInfo { id: "recursion-bound", statement: "d1(W_n, D_theta,s) <= (1-rho)^-1 (theta/(theta+1))^n E[s^-1(U^(1/theta))]" },
    ClaimInfo { id: "recursion-decay", statement: "d1(s(W_{n+1}), s(D)) / d1(s(W_n), s(D)) <= theta/(theta+1)" },
    ClaimInfo { id: "utility-contraction", statement: "d1(s(W_n), s(D_theta,s)) <= (theta/(theta+1))^n E[s(D_theta,s)]" },
    ClaimInfo { id: "prime-geometric", statement: "geometric marks: d11(S_n, D_1) <= |mu_n - 1| + E|T-U|/2 + sup|R|, of order 1/log n" },
    ClaimInfo { id: "prime-bernoulli", statement: "Bernoulli(1/(1+p)) marks: d11(S_n, D_1) <= |mu_n - 1| + E|T-U|/2, of order 1/log n" },
    ClaimInfo { id: "prime-poisson-inv-prime", statement: "Poisson(1/(1+p)) marks: d11(S_n, D_1) <= |mu_n - 1| + E|T-U|/2, of order 1/log n" },
    ClaimInfo { id: "prime-poisson-log-ratio", statement: "Poisson(1 - log p_{k-1}/log p_k) marks: d11(S_n, D_1) <= log 2 / (2 log p_n)" },
    ClaimInfo { id: "coupling-log-ratio", statement: "Poisson log-ratio coupling: E|T - U| <= log 2 / log p_n" },
    ClaimInfo { id: "mertens", statement: "(mu_n - 1) log p_n for geometric marks is within 0.05 of minus Euler's constant" },
    ClaimInfo { id: "size-bias-geometric", statement: "E[S phi(S)] = mu E[phi(S+T)] + R_phi for half-Lipschitz phi, geometric marks" },
    ClaimInfo { id: "size-bias-bernoulli", statement: "E[S phi(S)] = mu E[phi(S+T)] for half-Lipschitz phi, Bernoulli marks" },
    ClaimInfo { id: "size-bias-poisson-inv-prime", statement: "E[S phi(S)] = mu E[phi(S+T)] for half-Lipschitz phi, Poisson(1/(1+p)) marks" },
    ClaimInfo { id: "size-bias-poisson-log-ratio", statement: "E[S phi(S)] = mu E[phi(S+T)] for half-Lipschitz phi, Poisson log-ratio marks" },
];

pub fn list_claims() -> &'static [ClaimInfo] {
    CLAIMS
}

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Runs the named claim and compares its empirical side with the bound.
pub fn check_bound(claim_id: &str, p: &ClaimParams) -> Result<BoundReport> {
    if p.samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    match claim_id {
        "weighted-bernoulli" => {
            let n = p.n.unwrap_or(100);
            let w = sample_bernoulli_weighted(n, p.weights, p.samples, p.seed)?;
            dictionary_claim(claim_id, &w, 1.0, theoretical_bound(Family::Bernoulli, n, p.weights)?, p)
        }
        "weighted-poisson" => {
            let n = p.n.unwrap_or(100);
            let theta = p.theta.unwrap_or(1.0);
            let w = sample_poisson_weighted(n, theta, p.weights, p.samples, p.seed)?;
            let bound = theoretical_bound(Family::Poisson { theta }, n, p.weights)?;
            dictionary_claim(claim_id, &w, theta, bound, p)
        }
        "record-sum" => {
            let n = p.n.unwrap_or(100);
            let w = sample_record_sum(n, p.samples, p.seed)?;
            dictionary_claim(claim_id, &w, 1.0, theoretical_bound(Family::Bernoulli, n, Weights::Unit)?, p)
        }
        "recursion-bound" => recursion_bound(p),
        "recursion-decay" => recursion_decay(p),
        "utility-contraction" => utility_contraction(p),
        "prime-geometric" => prime_claim(claim_id, MarkLaw::Geometric, p),
        "prime-bernoulli" => prime_claim(claim_id, MarkLaw::Bernoulli, p),
        "prime-poisson-inv-prime" => prime_claim(claim_id, MarkLaw::PoissonInvPrime, p),
        "prime-poisson-log-ratio" => prime_claim(claim_id, MarkLaw::PoissonLogRatio, p),
        "coupling-log-ratio" => {
            let table = build_prime_table(p.n.unwrap_or(10_000))?;
            let c = crate::prime_sums::coupling_tu(&table, MarkLaw::PoissonLogRatio, p.samples, p.seed);
            let bound = std::f64::consts::LN_2 / table.log_pn();
            Ok(BoundReport::upper_bound(claim_id, bound, c.mean_abs_gap, c.stderr, p.samples, 0.0))
        }
        "mertens" => {
            let table = build_prime_table(p.n.unwrap_or(1_000_000))?;
            let dev = (table.mertens_statistic() + EULER_GAMMA).abs();
            Ok(BoundReport::upper_bound(claim_id, 0.05, dev, 0.0, table.len(), 0.0))
        }
        id if id.starts_with("size-bias-") => {
            let law = MarkLaw::parse(&id["size-bias-".len()..])?;
            let table = build_prime_table(p.n.unwrap_or(1000))?;
            Ok(size_bias_check(&table, law, p.samples, p.seed).report)
        }
        other => Err(Error::UnknownClaim(other.to_string())),
    }
}

/// Smooth-dictionary lower bound of the sample against a certified
/// reference batch of `D_theta`.
fn dictionary_claim(id: &str, sample: &[f64], theta: f64, bound: f64, p: &ClaimParams) -> Result<BoundReport> {
    let reference = reference_oracle(theta, REFERENCE_EPSILON, p.samples, p.seed)?;
    let slack = reference.certified_d1.unwrap_or(REFERENCE_EPSILON);
    let d = smooth_distance_lower(sample, &reference.values, &reference_dictionary(&reference.values))?;
    Ok(BoundReport::upper_bound(id, bound, d.value, d.stderr, p.samples, slack))
}

fn spec_of(p: &ClaimParams) -> Result<DickmanSpec> {
    DickmanSpec::new(p.theta.unwrap_or(1.0), p.utility.clone())
}

/// Depth whose certified distance is at most 1e-6 (or deeper than `n` by
/// at least 20 steps).
fn deep_depth(spec: &DickmanSpec, n: usize) -> Result<usize> {
    let mut deep = n + 20;
    while certified_d1(spec, deep)?.is_some_and(|c| c > 1e-6) {
        deep += 1;
    }
    Ok(deep)
}

fn recursion_bound(p: &ClaimParams) -> Result<BoundReport> {
    let spec = spec_of(p)?;
    let n = p.depth.or(p.n).unwrap_or(5);
    let bound = certified_d1(&spec, n)?.ok_or_else(|| invalid("no certified contraction for this utility"))?;
    let deep = deep_depth(&spec, n)?;
    let bs = nested_batches(&spec, &[n, deep], p.samples, p.seed)?;
    let (_, est, se) = paired_w1(&bs[0].values, &bs[1].values);
    let slack = bs[1].certified_d1.unwrap_or(0.0);
    Ok(BoundReport::upper_bound("recursion-bound", bound, est, se, p.samples, slack))
}

/// W1 of a pathwise-ordered pair, which equals the mean gap, with the
/// gap's standard error.
fn paired_w1(shallow: &[f64], deep: &[f64]) -> (Vec<f64>, f64, f64) {
    let gaps: Vec<f64> = shallow.iter().zip(deep).map(|(a, b)| b - a).collect();
    let (m, se) = mean_stderr(&gaps);
    let mut sa = shallow.to_vec();
    let mut sb = deep.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    let w1 = wasserstein1_sorted(&sa, &sb);
    debug_assert!((w1 - m.abs()).abs() <= 1e-9 * (1.0 + m.abs()));
    (gaps, w1, se)
}

fn recursion_decay(p: &ClaimParams) -> Result<BoundReport> {
    let spec = spec_of(p)?;
    let theta = spec.theta;
    let n = p.depth.or(p.n).unwrap_or(5);
    let deep = deep_depth(&spec, n + 1)?;
    let bs = nested_batches(&spec, &[n, n + 1, deep], p.samples, p.seed)?;
    let s = |xs: &[f64]| xs.iter().map(|&x| spec.utility.value(x)).collect::<Vec<f64>>();
    let (sn, sn1, sd) = (s(&bs[0].values), s(&bs[1].values), s(&bs[2].values));
    let (g0, w0, _) = paired_w1(&sn, &sd);
    let (g1, w1, _) = paired_w1(&sn1, &sd);
    let ratio = w1 / w0;
    let z: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| (a - ratio * b) / w0).collect();
    let (_, se) = mean_stderr(&z);
    Ok(BoundReport::upper_bound("recursion-decay", theta / (theta + 1.0), ratio, se, p.samples, 0.0))
}

fn utility_contraction(p: &ClaimParams) -> Result<BoundReport> {
    let spec = spec_of(p)?;
    let theta = spec.theta;
    let n = p.depth.or(p.n).unwrap_or(5);
    let deep = deep_depth(&spec, n)?;
    let bs = nested_batches(&spec, &[n, deep], p.samples, p.seed)?;
    let s = |xs: &[f64]| xs.iter().map(|&x| spec.utility.value(x)).collect::<Vec<f64>>();
    let sd = s(&bs[1].values);
    let (_, est, se) = paired_w1(&s(&bs[0].values), &sd);
    let (mean_sd, se_sd) = mean_stderr(&sd);
    let bound = (theta / (theta + 1.0)).powi(n as i32) * (mean_sd + 5.0 * se_sd);
    Ok(BoundReport::upper_bound("utility-contraction", bound, est, se, p.samples, 0.0))
}

/// Explicit upper bound on `d11(S_n, D_1)` for the mark law.
pub fn prime_bound(table: &PrimeTable, law: MarkLaw) -> f64 {
    match law {
        MarkLaw::PoissonLogRatio => std::f64::consts::LN_2 / (2.0 * table.log_pn()),
        MarkLaw::Geometric => {
            (mu_n(table, law) - 1.0).abs() + 0.5 * exact_coupling_gap(table, law) + remainder_envelope(table)
        }
        _ => (mu_n(table, law) - 1.0).abs() + 0.5 * exact_coupling_gap(table, law),
    }
}

/// Relative spread `max |C_j - mean C| / mean C` of `C_j = bound_j log n_j`.
pub fn stability_spread(constants: &[f64]) -> f64 {
    let mean = constants.iter().sum::<f64>() / constants.len() as f64;
    constants.iter().map(|c| (c - mean).abs() / mean).fold(0.0, f64::max)
}

fn prime_claim(id: &str, law: MarkLaw, p: &ClaimParams) -> Result<BoundReport> {
    let n = p.n.unwrap_or(10_000);
    let table = build_prime_table(n)?;
    let sizes: Vec<usize> = [n / 100, n / 10, n].into_iter().filter(|&k| k >= 10).collect();
    let constants: Vec<f64> =
        sizes.iter().map(|&k| Ok(prime_bound(&table.prefix(k)?, law) * (k as f64).ln())).collect::<Result<_>>()?;
    let bound = prime_bound(&table, law);
    let sample = sample_prime_sum(&table, law, p.samples, p.seed);
    let report = dictionary_claim(id, &sample, 1.0, bound, p)?;
    if report.verdict != Verdict::Fail && constants.len() > 1 && stability_spread(&constants) > STABILITY_BAND {
        return Ok(report.with_verdict(Verdict::Inconclusive));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ClaimParams {
        ClaimParams { samples: 20_000, seed: 1, ..ClaimParams::default() }
    }

    #[test]
    fn every_listed_claim_runs() {
        for c in list_claims() {
            let mut p = quick();
            if c.id == "mertens" {
                p.n = Some(10_000);
            }
            let r = check_bound(c.id, &p).unwrap();
            assert_eq!(r.claim_id, c.id);
            assert_ne!(r.verdict, Verdict::Fail, "{} failed: {r:?}", c.id);
        }
    }

    #[test]
    fn unknown_claim() {
        assert!(matches!(check_bound("nope", &quick()), Err(Error::UnknownClaim(_))));
    }

    #[test]
    fn prime_bounds_shrink() {
        let t = build_prime_table(100_000).unwrap();
        for law in MarkLaw::ALL {
            let small = prime_bound(&t.prefix(1000).unwrap(), law);
            let large = prime_bound(&t, law);
            assert!(large < small, "{}", law.name());
        }
    }
}
