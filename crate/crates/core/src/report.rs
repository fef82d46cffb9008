//! Verdicts comparing a theoretical bound with a Monte Carlo estimate.

use serde::Serialize;

/// Multiple of the standard error tolerated above the bound.
pub const SE_MULTIPLIER: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub claim_id: String,
    pub theoretical: f64,
    pub empirical: f64,
    pub mc_stderr: f64,
    pub samples: usize,
    pub verdict: Verdict,
}

impl BoundReport {
    /// Upper-bound claim: fails when `empirical` exceeds
    /// `theoretical + 5 se + slack`; inconclusive when the standard error is
    /// more than half the bound.
    pub fn upper_bound(
        claim_id: impl Into<String>,
        theoretical: f64,
        empirical: f64,
        mc_stderr: f64,
        samples: usize,
        slack: f64,
    ) -> Self {
        let verdict = if empirical.is_nan() || empirical > theoretical + SE_MULTIPLIER * mc_stderr + slack {
            Verdict::Fail
        } else if mc_stderr > theoretical / 2.0 {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        Self { claim_id: claim_id.into(), theoretical, empirical, mc_stderr, samples, verdict }
    }

    /// Exact identity with value zero: passes when `|empirical| <= 5 se`.
    pub fn identity(claim_id: impl Into<String>, empirical: f64, mc_stderr: f64, samples: usize) -> Self {
        let verdict = if empirical.abs() <= SE_MULTIPLIER * mc_stderr { Verdict::Pass } else { Verdict::Fail };
        Self { claim_id: claim_id.into(), theoretical: 0.0, empirical, mc_stderr, samples, verdict }
    }

    pub fn with_verdict(mut self, verdict: Verdict) -> Self {
        self.verdict = verdict;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
