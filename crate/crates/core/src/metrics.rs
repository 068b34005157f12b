//! Disparate impact, inverse-propensity value, KS disparity and the
//! simulation-only value-loss oracle.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Treatment;
use crate::error::domain;
use crate::Result;

/// One evaluation row for [`estimate_value`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRow {
    pub score: f64,
    pub a: Treatment,
    pub r: f64,
    /// `π̂(1 | x, s)`
    pub prob_treated: f64,
}

/// Inverse-propensity value of the rule `sgn(score)`:
/// `(1/n) Σ r_i I(a_i = sgn(score_i)) / (a_i π̂_i + (1 − a_i)/2)`.
pub fn estimate_value(rows: &[ValueRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(domain("value estimate needs at least one row"));
    }
    let mut total = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let p = row.prob_treated;
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("row {i}: propensity {p} not in (0, 1)")));
        }
        if Treatment::from_score(row.score) == row.a {
            let a = row.a.sign();
            total += row.r / (a * p + (1.0 - a) / 2.0);
        }
    }
    Ok(total / rows.len() as f64)
}

/// Share of positive scores per group.
pub fn positive_rates(scores: &[(f64, usize)], n_groups: usize) -> Result<Vec<f64>> {
    let mut pos = vec![0usize; n_groups];
    let mut count = vec![0usize; n_groups];
    for &(u, s) in scores {
        if s >= n_groups {
            return Err(domain(format!("group index {s} out of range")));
        }
        count[s] += 1;
        if u > 0.0 {
            pos[s] += 1;
        }
    }
    if let Some(g) = count.iter().position(|&c| c == 0) {
        return Err(domain(format!("group {g} has no rows")));
    }
    Ok(pos.iter().zip(&count).map(|(&p, &c)| p as f64 / c as f64).collect())
}

/// Estimated disparate impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparateImpact {
    pub value: f64,
    /// Set when no group has any positive decision (reported as DI = 1).
    pub degenerate: bool,
    pub positive_rates: Vec<f64>,
}

/// `min_{s, s'} r_s / r_{s'}` over ordered group pairs.
pub fn estimate_di(scores: &[(f64, usize)], n_groups: usize) -> Result<DisparateImpact> {
    let rates = positive_rates(scores, n_groups)?;
    let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().copied().fold(0.0f64, f64::max);
    let (value, degenerate) = if hi == 0.0 { (1.0, true) } else { (lo / hi, false) };
    Ok(DisparateImpact { value, degenerate, positive_rates: rates })
}

/// Two-sample Kolmogorov-Smirnov statistic `sup_t |F_a(t) − F_b(t)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut best) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Largest pairwise two-sample KS statistic between groups.
pub fn ks_disparity(scores: &[(f64, usize)], n_groups: usize) -> Result<f64> {
    let mut by_group: Vec<Vec<f64>> = vec![Vec::new(); n_groups];
    for &(u, s) in scores {
        if s >= n_groups {
            return Err(domain(format!("group index {s} out of range")));
        }
        by_group[s].push(u);
    }
    if let Some(g) = by_group.iter().position(Vec::is_empty) {
        return Err(domain(format!("group {g} has no rows")));
    }
    let mut worst = 0.0f64;
    for i in 0..n_groups {
        for j in (i + 1)..n_groups {
            worst = worst.max(ks_statistic(&by_group[i], &by_group[j]));
        }
    }
    Ok(worst)
}

/// Scores of a policy next to the true optimal score and treatment effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub score: f64,
    pub optimal: f64,
    pub effect: f64,
}

/// Mean of `|τ*|` over rows where `f*·score ≤ 0`, averaged over all rows.
pub fn oracle_value_loss(rows: &[OracleRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.optimal * r.score <= 0.0).map(|r| r.effect.abs()).sum::<f64>() / rows.len() as f64
}

/// Fairness and value summary of one scored policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub di: f64,
    pub di_degenerate: bool,
    pub value: f64,
    pub positive_rates: BTreeMap<String, f64>,
    pub ks: f64,
    pub group_sizes: BTreeMap<String, usize>,
}

impl FairnessReport {
    pub fn compute(scores: &[(f64, usize)], groups: &[String], value: f64) -> Result<Self> {
        let di = estimate_di(scores, groups.len())?;
        let ks = ks_disparity(scores, groups.len())?;
        let mut sizes = vec![0usize; groups.len()];
        for &(_, s) in scores {
            sizes[s] += 1;
        }
        Ok(FairnessReport {
            di: di.value,
            di_degenerate: di.degenerate,
            value,
            positive_rates: groups.iter().cloned().zip(di.positive_rates).collect(),
            ks,
            group_sizes: groups.iter().cloned().zip(sizes).collect(),
        })
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("di,di_degenerate,value,ks");
        for g in self.positive_rates.keys() {
            h.push_str(&format!(",rate_{g}"));
        }
        for g in self.group_sizes.keys() {
            h.push_str(&format!(",n_{g}"));
        }
        h
    }

    /// One-line CSV record matching [`FairnessReport::csv_header`].
    pub fn csv_record(&self) -> String {
        let mut line = format!("{},{},{},{}", self.di, self.di_degenerate, self.value, self.ks);
        for v in self.positive_rates.values() {
            line.push_str(&format!(",{v}"));
        }
        for v in self.group_sizes.values() {
            line.push_str(&format!(",{v}"));
        }
        line
    }
}
