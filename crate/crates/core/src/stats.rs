//! Violation counts, Fisher's exact test and odds ratios.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::momdp::EpisodeRecord;
use crate::{Error, Result};

/// 2x2 table: rows are methods, columns are (violated, not violated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self> {
        if a + b == 0 || c + d == 0 {
            return Err(Error::Domain(format!(
                "contingency table [[{a}, {b}], [{c}, {d}]] has an empty row"
            )));
        }
        Ok(ContingencyTable { a, b, c, d })
    }

    /// Table from violation counts out of `n1` and `n2` trials.
    pub fn from_counts(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<Self> {
        if x1 > n1 || x2 > n2 {
            return Err(Error::Domain("violation count exceeds trials".into()));
        }
        Self::new(x1, n1 - x1, x2, n2 - x2)
    }

    pub fn swapped(&self) -> Self {
        ContingencyTable {
            a: self.c,
            b: self.d,
            c: self.a,
            d: self.b,
        }
    }
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Two-sided exact p-value: total probability of all tables with the observed
/// margins that are no more likely than the observed one.
pub fn fisher_exact_two_sided(t: &ContingencyTable) -> Result<f64> {
    let t = ContingencyTable::new(t.a, t.b, t.c, t.d)?;
    let r1 = t.a + t.b;
    let r2 = t.c + t.d;
    let c1 = t.a + t.c;
    let n = r1 + r2;
    let lf = ln_factorials(n);
    let ln_p = |x: u64| {
        let (a, b, c, d) = (x, r1 - x, c1 - x, r2 - (c1 - x));
        lf[r1 as usize] + lf[r2 as usize] + lf[c1 as usize] + lf[(n - c1) as usize]
            - lf[n as usize]
            - lf[a as usize]
            - lf[b as usize]
            - lf[c as usize]
            - lf[d as usize]
    };
    let observed = ln_p(t.a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let threshold = observed + (1e-12f64).ln_1p();
    let p: f64 = (lo..=hi)
        .map(ln_p)
        .filter(|&lp| lp <= threshold)
        .map(f64::exp)
        .sum();
    Ok(p.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum OddsRatio {
    Finite(f64),
    Infinite,
    /// Neither method produced a violation.
    NotApplicable,
}

impl fmt::Display for OddsRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OddsRatio::Finite(v) => write!(f, "{v:.3}"),
            OddsRatio::Infinite => f.write_str("inf"),
            OddsRatio::NotApplicable => f.write_str("/"),
        }
    }
}

/// `(a/b) / (c/d)` without continuity correction.
pub fn odds_ratio(t: &ContingencyTable) -> OddsRatio {
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    if t.a == 0 && t.c == 0 {
        return OddsRatio::NotApplicable;
    }
    if t.b == 0 && t.d == 0 {
        return OddsRatio::NotApplicable;
    }
    if t.c == 0 || t.b == 0 {
        return OddsRatio::Infinite;
    }
    OddsRatio::Finite((a * d) / (b * c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "<0.01")]
    Below001,
    #[serde(rename = "<0.05")]
    Below005,
    #[serde(rename = ">=0.05")]
    NotSignificant,
}

impl Significance {
    pub fn of(p: f64) -> Self {
        if p < 0.01 {
            Significance::Below001
        } else if p < 0.05 {
            Significance::Below005
        } else {
            Significance::NotSignificant
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Significance::Below001 => "<0.01",
            Significance::Below005 => "<0.05",
            Significance::NotSignificant => ">=0.05",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Violation metric selectable for comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    VR1,
    VR2,
    VR1R2,
    /// Route violation counting every collision as one.
    VR2Inclusive,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::VR1, Metric::VR2, Metric::VR1R2, Metric::VR2Inclusive];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::VR1 => "v_r1",
            Metric::VR2 => "v_r2",
            Metric::VR1R2 => "v_r1_r2",
            Metric::VR2Inclusive => "v_r2_inclusive",
        }
    }

    pub fn violated(&self, r: &EpisodeRecord) -> bool {
        match self {
            Metric::VR1 => r.r1,
            Metric::VR2 => r.r2,
            Metric::VR1R2 => r.r1 && r.r2,
            Metric::VR2Inclusive => r.r2_inclusive,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown metric {s:?}; expected one of v_r1, v_r2, v_r1_r2, v_r2_inclusive"
                ))
            })
    }
}

/// Aggregate over one method's evaluation episodes. `None` marks a mean over
/// an empty set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: u64,
    pub v_r1: u64,
    pub v_r2: u64,
    pub v_r1_r2: u64,
    pub v_r2_inclusive: u64,
    pub ttc_r1: Option<f64>,
    pub rc_r2: Option<f64>,
    pub ttc_r1_r2: Option<f64>,
    pub rc_r1_r2: Option<f64>,
}

fn mean_of<'a>(records: impl Iterator<Item = &'a EpisodeRecord>, f: impl Fn(&EpisodeRecord) -> f64) -> Option<f64> {
    let (sum, n) = records.fold((0.0, 0u64), |(s, n), r| (s + f(r), n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(records: &[EpisodeRecord]) -> Result<MetricsSummary> {
    if records.is_empty() {
        return Err(Error::Contract("cannot aggregate an empty episode set".into()));
    }
    let count = |m: Metric| records.iter().filter(|r| m.violated(r)).count() as u64;
    Ok(MetricsSummary {
        episodes: records.len() as u64,
        v_r1: count(Metric::VR1),
        v_r2: count(Metric::VR2),
        v_r1_r2: count(Metric::VR1R2),
        v_r2_inclusive: count(Metric::VR2Inclusive),
        ttc_r1: mean_of(records.iter().filter(|r| r.r1), |r| r.mean_ttc),
        rc_r2: mean_of(records.iter().filter(|r| r.r2), |r| r.final_rc),
        ttc_r1_r2: mean_of(records.iter().filter(|r| r.r1_r2()), |r| r.mean_ttc),
        rc_r1_r2: mean_of(records.iter().filter(|r| r.r1_r2()), |r| r.final_rc),
    })
}

/// Fisher test and odds ratio of method A against method B on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub method_a: String,
    pub method_b: String,
    pub violations_a: u64,
    pub violations_b: u64,
    pub episodes_a: u64,
    pub episodes_b: u64,
    pub p_value: f64,
    pub odds_ratio: String,
    pub significance: Significance,
}

pub fn compare_counts(
    metric: &str,
    (name_a, x_a, n_a): (&str, u64, u64),
    (name_b, x_b, n_b): (&str, u64, u64),
) -> Result<Comparison> {
    let t = ContingencyTable::from_counts(x_a, n_a, x_b, n_b)?;
    let p = fisher_exact_two_sided(&t)?;
    Ok(Comparison {
        metric: metric.into(),
        method_a: name_a.into(),
        method_b: name_b.into(),
        violations_a: x_a,
        violations_b: x_b,
        episodes_a: n_a,
        episodes_b: n_b,
        p_value: p,
        odds_ratio: odds_ratio(&t).to_string(),
        significance: Significance::of(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_table_has_unit_p() {
        let t = ContingencyTable::new(10, 90, 10, 90).unwrap();
        assert!((fisher_exact_two_sided(&t).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(odds_ratio(&t), OddsRatio::Finite(1.0));
    }

    #[test]
    fn empty_row_rejected() {
        assert!(ContingencyTable::new(0, 0, 1, 2).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("v_r3".parse::<Metric>().is_err());
    }
}
