use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use dickman::claims::{check_bound, list_claims, ClaimParams};
use dickman::dickman::{certified_d1, nested_batches, rho_bound, sample_dtheta_s};
use dickman::metrics::{smooth_distance_lower, wasserstein1_sorted};
use dickman::numeric::mean_stderr;
use dickman::prime_sums::{mu_n, sample_prime_sum, MarkLaw};
use dickman::primes::{build_prime_table, PrimeTable};
use dickman::report::Verdict;
use dickman::stein::solve_stein;
use dickman::testfn::{smooth_dictionary, TestFunction};
use dickman::{DickmanSpec, Utility};

use crate::args::{Cli, Command, Format, SpecArgs, UtilityKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] dickman::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Failed,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::Failed => 1,
        }
    }
}

/// Only a failed verdict is an unsuccessful run; inconclusive is reported
/// in the record itself.
pub fn outcome_of(verdict: Verdict) -> Outcome {
    match verdict {
        Verdict::Fail => Outcome::Failed,
        Verdict::Pass | Verdict::Inconclusive => Outcome::Ok,
    }
}

type Run = Result<(String, Outcome), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: &Cli) -> Run {
    let seed = cli.seed;
    match &cli.command {
        Command::Sample { spec, depth, samples } => {
            sample(spec, *depth, *samples, seed, cli.format.unwrap_or(Format::Csv))
        }
        Command::Distance { spec, depth, samples } => distance(spec, *depth, *samples, seed),
        Command::BoundCheck { claim, list, spec, n, depth, samples } => {
            if *list {
                return Ok((claim_list(cli.format.unwrap_or(Format::Csv)), Outcome::Ok));
            }
            let claim = claim.as_deref().ok_or_else(|| usage("--claim is required"))?;
            let params = ClaimParams {
                n: *n,
                theta: Some(spec.theta),
                depth: *depth,
                samples: *samples,
                seed,
                utility: utility(spec)?,
                ..ClaimParams::default()
            };
            let report = check_bound(claim, &params)?;
            Ok((format!("{}\n", report.to_json()), outcome_of(report.verdict)))
        }
        Command::PrimeSum { n, marks, samples, table_cache } => {
            prime_sum(*n, marks, *samples, seed, table_cache.as_deref(), cli.format.unwrap_or(Format::Csv))
        }
        Command::Stein { spec, test_fn, epsilon, x_max } => {
            stein(spec, test_fn, *epsilon, *x_max, cli.format.unwrap_or(Format::Csv))
        }
        Command::Rho { spec } => rho(spec, cli.format.unwrap_or(Format::Csv)),
        Command::PrimeTable { n, table_cache } => {
            prime_table(*n, table_cache.as_deref(), cli.format.unwrap_or(Format::Json))
        }
    }
}

pub fn utility(spec: &SpecArgs) -> Result<Utility, CliError> {
    let need_alpha = || spec.alpha.ok_or_else(|| usage("--alpha is required for this utility"));
    Ok(match spec.utility {
        UtilityKind::Identity => Utility::Identity,
        UtilityKind::Exp => Utility::exponential(need_alpha()?)?,
        UtilityKind::Log => Utility::LogShift,
        UtilityKind::PowerMixture => Utility::uniform_power_mixture(need_alpha()?, spec.atoms)?,
        UtilityKind::Tabulated => {
            let path = spec.table.as_ref().ok_or_else(|| usage("--table is required for a tabulated utility"))?;
            let (xs, ys) = read_table(path)?;
            Utility::tabulated(xs, ys)?
        }
    })
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path)?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let parsed = (parts.next().map(str::parse::<f64>), parts.next().map(str::parse::<f64>));
        match parsed {
            (Some(Ok(x)), Some(Ok(y))) => {
                xs.push(x);
                ys.push(y);
            }
            // a header row is tolerated
            _ if xs.is_empty() && lineno == 0 => {}
            _ => return Err(usage(format!("{}: bad row {}", path.display(), lineno + 1))),
        }
    }
    Ok((xs, ys))
}

fn spec_of(spec: &SpecArgs) -> Result<DickmanSpec, CliError> {
    Ok(DickmanSpec::new(spec.theta, utility(spec)?)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| format!("{v:e}"))
}

fn sample(args: &SpecArgs, depth: usize, samples: usize, seed: u64, format: Format) -> Run {
    let spec = spec_of(args)?;
    let batch = sample_dtheta_s(&spec, depth, samples, seed)?;
    let mut out = String::new();
    match format {
        Format::Csv => {
            writeln!(out, "# theta={}", batch.theta).unwrap();
            writeln!(out, "# utility={}", batch.utility).unwrap();
            writeln!(out, "# depth={}", batch.depth).unwrap();
            writeln!(out, "# samples={}", batch.len()).unwrap();
            writeln!(out, "# seed={}", batch.seed).unwrap();
            writeln!(out, "# certified_d1={}", opt(batch.certified_d1)).unwrap();
            out.push_str("value\n");
            for v in &batch.values {
                writeln!(out, "{v}").unwrap();
            }
        }
        Format::Json => {
            for v in &batch.values {
                writeln!(out, "{}", json!({ "value": v })).unwrap();
            }
        }
    }
    Ok((out, Outcome::Ok))
}

fn distance(args: &SpecArgs, depth: usize, samples: usize, seed: u64) -> Run {
    let spec = spec_of(args)?;
    let mut deep = depth + 20;
    while certified_d1(&spec, deep)?.is_some_and(|c| c > 1e-6) {
        deep += 1;
    }
    let bs = nested_batches(&spec, &[depth, deep], samples, seed)?;
    let gaps: Vec<f64> = bs[0].values.iter().zip(&bs[1].values).map(|(a, b)| b - a).collect();
    let (_, gap_se) = mean_stderr(&gaps);
    let mut a = bs[0].values.clone();
    let mut b = bs[1].values.clone();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let w1 = wasserstein1_sorted(&a, &b);
    let q = |p: f64| b[((b.len() - 1) as f64 * p) as usize];
    let dict = smooth_dictionary(&[q(0.25), q(0.5), q(0.75)]);
    let smooth = smooth_distance_lower(&bs[0].values, &bs[1].values, &dict)?;
    let record = json!({
        "theta": spec.theta,
        "utility": spec.utility.tag(),
        "depth": depth,
        "reference_depth": deep,
        "samples": samples,
        "w1": w1,
        "w1_stderr": gap_se,
        "d11_lower": smooth.value,
        "d11_stderr": smooth.stderr,
        "witness": smooth.witness,
        "certified_d1": certified_d1(&spec, depth)?,
        "reference_certified_d1": bs[1].certified_d1,
    });
    Ok((format!("{record}\n"), Outcome::Ok))
}

fn claim_list(format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str("claim,statement\n");
            for c in list_claims() {
                writeln!(out, "{},\"{}\"", c.id, c.statement).unwrap();
            }
        }
        Format::Json => {
            for c in list_claims() {
                writeln!(out, "{}", json!({ "claim": c.id, "statement": c.statement })).unwrap();
            }
        }
    }
    out
}

fn load_table(n: usize, cache: Option<&Path>) -> Result<PrimeTable, CliError> {
    Ok(match cache {
        Some(path) => PrimeTable::load_or_build(path, n)?,
        None => build_prime_table(n)?,
    })
}

fn prime_sum(n: usize, marks: &str, samples: usize, seed: u64, cache: Option<&Path>, format: Format) -> Run {
    let law = MarkLaw::parse(marks)?;
    let table = load_table(n, cache)?;
    let values = sample_prime_sum(&table, law, samples, seed);
    let mu = mu_n(&table, law);
    let mut out = String::new();
    match format {
        Format::Csv => {
            writeln!(out, "# n={n}").unwrap();
            writeln!(out, "# marks={}", law.name()).unwrap();
            writeln!(out, "# samples={samples}").unwrap();
            writeln!(out, "# seed={seed}").unwrap();
            writeln!(out, "# mu_n={mu}").unwrap();
            writeln!(out, "# log_pn={}", table.log_pn()).unwrap();
            out.push_str("value\n");
            for v in &values {
                writeln!(out, "{v}").unwrap();
            }
        }
        Format::Json => {
            for v in &values {
                writeln!(out, "{}", json!({ "value": v })).unwrap();
            }
        }
    }
    Ok((out, Outcome::Ok))
}

fn parse_test_fn(s: &str) -> Result<TestFunction, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> Result<f64, CliError> {
        parts.get(i).and_then(|p| p.parse::<f64>().ok()).ok_or_else(|| usage(format!("bad test function `{s}`")))
    };
    let f = match (parts[0], parts.len()) {
        ("linear", 1) => TestFunction::Linear,
        ("sin", 2) => TestFunction::Sin { omega: num(1)? },
        ("cos", 2) => TestFunction::Cos { omega: num(1)? },
        ("hinge", 2) => TestFunction::Hinge { center: num(1)? },
        ("smooth-hinge", 3) => TestFunction::SmoothHinge { center: num(1)?, width: num(2)? },
        _ => return Err(usage(format!("bad test function `{s}`"))),
    };
    Ok(f)
}

fn stein(args: &SpecArgs, test_fn: &str, epsilon: f64, x_max: f64, format: Format) -> Run {
    let spec = spec_of(args)?;
    let h = parse_test_fn(test_fn)?;
    let sol = solve_stein(&spec, &h, epsilon, x_max)?;
    let mut buf = Vec::new();
    match format {
        Format::Csv => sol.write_csv(&mut buf)?,
        Format::Json => {
            let record = json!({
                "theta": sol.theta,
                "utility": sol.utility,
                "test_fn": h.name(),
                "k_terms": sol.k_terms,
                "rho": sol.rho,
                "tail_bound": sol.tail_bound,
                "centering": sol.centering,
                "sup_f_prime": dickman::stein::SteinSolution::max_abs(&sol.f_prime),
                "sup_f_double_prime": dickman::stein::SteinSolution::max_abs(&sol.f_double_prime),
                "sup_residual": dickman::stein::SteinSolution::max_abs(&sol.residual),
            });
            buf.extend_from_slice(format!("{record}\n").as_bytes());
        }
    }
    Ok((String::from_utf8(buf).expect("ascii output"), Outcome::Ok))
}

fn rho(args: &SpecArgs, format: Format) -> Run {
    let spec = spec_of(args)?;
    let r = rho_bound(&spec)?;
    let out = match format {
        Format::Csv => format!(
            "rho,certificate,certified,grid_sup\n{},{},{},{}\n",
            r.value, r.certificate, r.certified, r.grid_sup
        ),
        Format::Json => format!("{}\n", serde_json::to_string(&r).expect("serializes")),
    };
    Ok((out, Outcome::Ok))
}

fn prime_table(n: usize, cache: Option<&Path>, format: Format) -> Run {
    let table = load_table(n, cache)?;
    let p_n = *table.primes().last().ok_or_else(|| usage("--n must be positive"))?;
    let out = match format {
        Format::Json => format!(
            "{}\n",
            json!({
                "n": table.len(),
                "p_n": p_n,
                "log_pn": table.log_pn(),
                "mu_geometric": table.mu_geometric(),
                "mu_bernoulli": table.mu_bernoulli(),
                "mertens_statistic": table.mertens_statistic(),
            })
        ),
        Format::Csv => format!(
            "n,p_n,log_pn,mu_geometric,mu_bernoulli,mertens_statistic\n{},{},{},{},{},{}\n",
            table.len(),
            p_n,
            table.log_pn(),
            table.mu_geometric(),
            table.mu_bernoulli(),
            table.mertens_statistic()
        ),
    };
    Ok((out, Outcome::Ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_map_to_exit_codes() {
        assert_eq!(outcome_of(Verdict::Pass).exit_code(), 0);
        assert_eq!(outcome_of(Verdict::Inconclusive).exit_code(), 0);
        assert_eq!(outcome_of(Verdict::Fail).exit_code(), 1);
    }

    #[test]
    fn test_function_syntax() {
        assert_eq!(parse_test_fn("linear").unwrap(), TestFunction::Linear);
        assert_eq!(parse_test_fn("hinge:0.5").unwrap(), TestFunction::Hinge { center: 0.5 });
        assert_eq!(
            parse_test_fn("smooth-hinge:1:0.25").unwrap(),
            TestFunction::SmoothHinge { center: 1.0, width: 0.25 }
        );
        assert!(parse_test_fn("sin").is_err());
        assert!(parse_test_fn("sin:x").is_err());
    }

    #[test]
    fn tabulated_file_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "x,s\n0,0\n1,1\n2,1.5\n4,2\n").unwrap();
        let (xs, ys) = read_table(&path).unwrap();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 4.0]);
        assert_eq!(ys, vec![0.0, 1.0, 1.5, 2.0]);
        std::fs::write(&path, "0,0\n1,oops\n").unwrap();
        assert!(read_table(&path).is_err());
    }
}
