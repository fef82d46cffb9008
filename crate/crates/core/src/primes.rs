//! Prime tables with compensated cumulative sums, and their binary cache.
//!
//! Cache layout, little-endian: magic `DKPT`, `u32` version, `u64` count,
//! the primes as `u64`, then the geometric and Bernoulli means as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::numeric::KahanSum;

pub const DEFAULT_MAX_PRIMES: usize = 10_000_000;
const SEGMENT: usize = 1_000_000;
const MAGIC: &[u8; 4] = b"DKPT";
const VERSION: u32 = 1;
const CACHE_MEAN_TOL: f64 = 1e-12;

/// Upper bound on the `n`-th prime.
fn nth_prime_bound(n: usize) -> u64 {
    if n < 6 {
        return 13;
    }
    let x = n as f64;
    (x * (x.ln() + x.ln().ln())).ceil() as u64 + 10
}

fn small_odd_primes(limit: u64) -> Vec<u64> {
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut out = Vec::new();
    let mut p = 3;
    while p <= limit {
        if !composite[p] {
            out.push(p as u64);
            let mut q = p * p;
            while q <= limit {
                composite[q] = true;
                q += 2 * p;
            }
        }
        p += 2;
    }
    out
}

/// The first `n` primes from an odd-only segmented sieve.
pub fn first_primes(n: usize) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let limit = nth_prime_bound(n);
    let base = small_odd_primes((limit as f64).sqrt() as u64 + 1);
    let mut out = Vec::with_capacity(n);
    out.push(2);
    let mut seg = vec![false; SEGMENT];
    // Segment covers odd numbers lo, lo + 2, ..., lo + 2 (SEGMENT - 1).
    let mut lo = 3u64;
    while out.len() < n && lo <= limit {
        seg.iter_mut().for_each(|c| *c = false);
        let hi = lo + 2 * (SEGMENT as u64 - 1);
        for &p in &base {
            if p * p > hi {
                break;
            }
            let mut start = (p * p).max(lo.div_ceil(p) * p);
            if start % 2 == 0 {
                start += p;
            }
            let mut idx = ((start - lo) / 2) as usize;
            while idx < SEGMENT {
                seg[idx] = true;
                idx += p as usize;
            }
        }
        for (i, &c) in seg.iter().enumerate() {
            if !c {
                out.push(lo + 2 * i as u64);
                if out.len() == n {
                    break;
                }
            }
        }
        lo = hi + 2;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimeTable {
    primes: Vec<u64>,
    logs: Vec<f64>,
    /// Running `sum log p_k / (p_k - 1)`.
    cum_geometric: Vec<f64>,
    /// Running `sum log p_k / (p_k + 1)`.
    cum_bernoulli: Vec<f64>,
    /// Normalized `cum_geometric`; the last entry is exactly 1.
    breakpoints: Vec<f64>,
    mu_geometric: f64,
    mu_bernoulli: f64,
}

pub fn build_prime_table(n: usize) -> Result<PrimeTable> {
    build_prime_table_with_budget(n, DEFAULT_MAX_PRIMES)
}

pub fn build_prime_table_with_budget(n: usize, max_primes: usize) -> Result<PrimeTable> {
    if n == 0 {
        return Err(invalid("prime table needs n >= 1"));
    }
    if n > max_primes {
        return Err(Error::Resource(format!("{n} primes requested, budget is {max_primes}")));
    }
    Ok(PrimeTable::from_primes(first_primes(n)))
}

impl PrimeTable {
    fn from_primes(primes: Vec<u64>) -> Self {
        let n = primes.len();
        let logs: Vec<f64> = primes.iter().map(|&p| (p as f64).ln()).collect();
        let mut g = KahanSum::new();
        let mut b = KahanSum::new();
        let mut cum_geometric = Vec::with_capacity(n);
        let mut cum_bernoulli = Vec::with_capacity(n);
        for (&p, &l) in primes.iter().zip(&logs) {
            let pf = p as f64;
            g.add(l / (pf - 1.0));
            b.add(l / (pf + 1.0));
            cum_geometric.push(g.value());
            cum_bernoulli.push(b.value());
        }
        let total = cum_geometric[n - 1];
        let mut breakpoints: Vec<f64> = cum_geometric.iter().map(|c| c / total).collect();
        breakpoints[n - 1] = 1.0;
        let log_pn = logs[n - 1];
        Self {
            mu_geometric: total / log_pn,
            mu_bernoulli: cum_bernoulli[n - 1] / log_pn,
            primes,
            logs,
            cum_geometric,
            cum_bernoulli,
            breakpoints,
        }
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn logs(&self) -> &[f64] {
        &self.logs
    }

    pub fn log_pn(&self) -> f64 {
        self.logs[self.len() - 1]
    }

    pub fn cum_geometric(&self) -> &[f64] {
        &self.cum_geometric
    }

    pub fn cum_bernoulli(&self) -> &[f64] {
        &self.cum_bernoulli
    }

    /// `F_j = P(I <= j)` for the geometric marks, indexed from 0.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `(log p_n)^{-1} sum_k log p_k / (p_k - 1)`.
    pub fn mu_geometric(&self) -> f64 {
        self.mu_geometric
    }

    /// `(log p_n)^{-1} sum_k log p_k / (p_k + 1)`.
    pub fn mu_bernoulli(&self) -> f64 {
        self.mu_bernoulli
    }

    /// `(mu_n - 1) log p_n`, which tends to minus Euler's constant.
    pub fn mertens_statistic(&self) -> f64 {
        self.cum_geometric[self.len() - 1] - self.log_pn()
    }

    /// Table of the first `m` primes.
    pub fn prefix(&self, m: usize) -> Result<PrimeTable> {
        if m == 0 || m > self.len() {
            return Err(invalid(format!("prefix length {m} outside 1..={}", self.len())));
        }
        Ok(PrimeTable::from_primes(self.primes[..m].to_vec()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for p in &self.primes {
            w.write_all(&p.to_le_bytes())?;
        }
        w.write_all(&self.mu_geometric.to_le_bytes())?;
        w.write_all(&self.mu_bernoulli.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PrimeTable> {
        let mut r = BufReader::new(File::open(path)?);
        let mut head = [0u8; 16];
        r.read_exact(&mut head).map_err(|_| corrupt("truncated header"))?;
        if &head[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes")) as usize;
        if n == 0 || n > DEFAULT_MAX_PRIMES * 10 {
            return Err(corrupt(&format!("implausible count {n}")));
        }
        let mut bytes = vec![0u8; n * 8 + 16];
        r.read_exact(&mut bytes).map_err(|_| corrupt("truncated body"))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
        let primes: Vec<u64> = (0..n).map(word).collect();
        if primes[0] != 2 || primes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(corrupt("primes are not increasing from 2"));
        }
        let stored_g = f64::from_bits(word(n));
        let stored_b = f64::from_bits(word(n + 1));
        let table = PrimeTable::from_primes(primes);
        if !((table.mu_geometric - stored_g).abs() <= CACHE_MEAN_TOL
            && (table.mu_bernoulli - stored_b).abs() <= CACHE_MEAN_TOL)
        {
            return Err(corrupt("stored means disagree with recomputed values"));
        }
        Ok(table)
    }

    /// Loads the cache when it holds at least `n` primes, otherwise builds
    /// the table and rewrites the cache.
    pub fn load_or_build(path: &Path, n: usize) -> Result<PrimeTable> {
        if path.exists() {
            let cached = PrimeTable::load(path)?;
            if cached.len() == n {
                return Ok(cached);
            }
            if cached.len() > n {
                return cached.prefix(n);
            }
        }
        let table = build_prime_table(n)?;
        table.save(path)?;
        Ok(table)
    }
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptCache(msg.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_primes_small() {
        assert_eq!(first_primes(10), vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert_eq!(first_primes(1), vec![2]);
    }

    #[test]
    fn known_nth_primes() {
        let p = first_primes(100_000);
        assert_eq!(p[999], 7919);
        assert_eq!(p[9_999], 104_729);
        assert_eq!(p[99_999], 1_299_709);
    }

    #[test]
    fn single_prime_table() {
        let t = build_prime_table(1).unwrap();
        assert_abs_diff_eq!(t.mu_geometric(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.mu_bernoulli(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(t.breakpoints(), &[1.0]);
    }

    #[test]
    fn breakpoints_are_monotone() {
        let t = build_prime_table(5000).unwrap();
        assert!(t.breakpoints().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*t.breakpoints().last().unwrap(), 1.0);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(build_prime_table_with_budget(100, 50), Err(Error::Resource(_))));
    }

    #[test]
    fn prefix_matches_fresh_build() {
        let t = build_prime_table(3000).unwrap();
        assert_eq!(t.prefix(1000).unwrap(), build_prime_table(1000).unwrap());
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let t = build_prime_table(2000).unwrap();
        t.save(&path).unwrap();
        assert_eq!(PrimeTable::load(&path).unwrap(), t);
        assert_eq!(PrimeTable::load_or_build(&path, 500).unwrap(), t.prefix(500).unwrap());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[16 + 8 * 10] ^= 0x02;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(PrimeTable::load(&path), Err(Error::CorruptCache(_))));

        bytes.truncate(40);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(PrimeTable::load(&path), Err(Error::CorruptCache(_))));

        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(PrimeTable::load(&path), Err(Error::CorruptCache(_))));
    }
}
