use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::wilcoxon::{wilcoxon_signed_rank_with_alpha, PairedSample, PairedTestResult};
use crate::error::{Error, Result};

pub const OVERALL_GROUP: &str = "overall";
pub const CSV_HEADER: &str = "group,n,mean_a,mean_b,w,p,method,significant";

/// Test outcome for one group of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum GroupOutcome {
    Tested(PairedTestResult),
    /// Every pair in the group had a zero difference.
    NoNonzeroDifferences,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub group: String,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub outcome: GroupOutcome,
}

impl ComparisonRow {
    pub fn test(&self) -> Option<&PairedTestResult> {
        match &self.outcome {
            GroupOutcome::Tested(t) => Some(t),
            GroupOutcome::NoNonzeroDifferences => None,
        }
    }

    pub fn significant(&self) -> bool {
        self.test().is_some_and(PairedTestResult::significant)
    }

    fn csv_line(&self) -> String {
        let mut line = format!("{},{},{:.6},{:.6},", self.group, self.n, self.mean_a, self.mean_b);
        match &self.outcome {
            GroupOutcome::Tested(t) => {
                let _ = write!(
                    line,
                    "{},{:.6e},{},{}",
                    t.w_statistic,
                    t.p_two_sided,
                    t.method.as_str(),
                    t.significant()
                );
            }
            GroupOutcome::NoNonzeroDifferences => line.push_str(",,no nonzero differences,false"),
        }
        line
    }
}

/// Overall row first, then one row per group in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, group: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

fn test_group(group: String, ids: Vec<String>, a: Vec<f64>, b: Vec<f64>, alpha: f64) -> Result<ComparisonRow> {
    let n = a.len();
    let mean_a = a.iter().sum::<f64>() / n as f64;
    let mean_b = b.iter().sum::<f64>() / n as f64;
    let sample = PairedSample::new(ids, a, b)?;
    let outcome = match wilcoxon_signed_rank_with_alpha(&sample, alpha) {
        Ok(t) => GroupOutcome::Tested(t),
        Err(Error::DegenerateSample) => GroupOutcome::NoNonzeroDifferences,
        Err(e) => return Err(e),
    };
    Ok(ComparisonRow {
        group,
        n,
        mean_a,
        mean_b,
        outcome,
    })
}

/// Pairs `a` and `b` by id and runs the signed-rank test overall and within
/// each group returned by `group_of`. Input order does not matter.
pub fn compare_methods<F>(
    a: &[(String, f64)],
    b: &[(String, f64)],
    group_of: F,
    alpha: f64,
) -> Result<ComparisonReport>
where
    F: Fn(&str) -> String,
{
    let index = |side: &[(String, f64)], name: &str| -> Result<BTreeMap<String, f64>> {
        let mut map = BTreeMap::new();
        for (id, v) in side {
            if map.insert(id.clone(), *v).is_some() {
                return Err(Error::Pairing(format!("duplicate id {id} in {name}")));
            }
        }
        Ok(map)
    };
    let ma = index(a, "a")?;
    let mb = index(b, "b")?;
    let ka: BTreeSet<&String> = ma.keys().collect();
    let kb: BTreeSet<&String> = mb.keys().collect();
    if ka != kb {
        let missing: Vec<&&String> = ka.symmetric_difference(&kb).take(5).collect();
        return Err(Error::Pairing(format!(
            "result sets cover different scans, e.g. {missing:?}"
        )));
    }
    if ma.is_empty() {
        return Err(Error::Pairing("no results to compare".into()));
    }

    let mut groups: BTreeMap<String, (Vec<String>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut all = (Vec::new(), Vec::new(), Vec::new());
    for (id, &va) in &ma {
        let vb = mb[id];
        let g = groups.entry(group_of(id)).or_default();
        g.0.push(id.clone());
        g.1.push(va);
        g.2.push(vb);
        all.0.push(id.clone());
        all.1.push(va);
        all.2.push(vb);
    }
    let mut rows = vec![test_group(OVERALL_GROUP.to_string(), all.0, all.1, all.2, alpha)?];
    for (name, (ids, va, vb)) in groups {
        rows.push(test_group(name, ids, va, vb, alpha)?);
    }
    Ok(ComparisonReport { alpha, rows })
}
