//! One-dimensional optimal transport onto the Wasserstein barycenter of the
//! group-wise score distributions.
//!
//! For a base scorer `f̂`, each group's (jittered) target-set scores define an
//! empirical CDF `F̂_s(t) = #{v < t}/N_s` and its left-continuous inverse
//! `Q̂_s(u) = v_(⌈u·N_s⌉)`. The fair score of a point is
//! `ĝ(x, s) = (1/m) Σ_l Σ_{s'} p̂_{s'} Q̂_{s'}(F̂_s(f̂(x, s) + ε'_l))`, and the
//! trade-off score blends it with `f̂` through the effect-based weight.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cate::{weight_from_effect, weight_unchecked, CateModel};
use crate::data::TargetDataset;
use crate::error::domain;
use crate::nuisance::DecisionModel;
use crate::rng::{hash_f64s, mix64, RngSeed, Stream};
use crate::{Error, Result};

const TAG_JITTER: u64 = 0x4A49_5454_4552_0000;
const TAG_EVAL: u64 = 0x4556_414C_0000_0000;

/// Sorted jittered scores of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistributions {
    groups: Vec<GroupSample>,
    sigma: f64,
    seed: RngSeed,
}

/// Per-group empirical score distributions of a target set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistributions")]
pub struct GroupDistributions {
    groups: Vec<GroupSample>,
    sigma: f64,
    seed: RngSeed,
}

impl TryFrom<RawDistributions> for GroupDistributions {
    type Error = Error;

    fn try_from(raw: RawDistributions) -> Result<Self> {
        GroupDistributions::from_sorted(raw.groups, raw.sigma, raw.seed)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("jitter half-width must be nonnegative, got {sigma}")))
    }
}

/// Smallest 1-based rank `k` with `k/n ≥ u`, rank 1 for `u ≤ 0`.
fn quantile_rank(u: f64, n: usize) -> usize {
    if !(u > 0.0) {
        return 1;
    }
    let nf = n as f64;
    let mut k = (libm::ceil(u * nf) as usize).clamp(1, n);
    while k > 1 && ((k - 1) as f64 / nf) >= u {
        k -= 1;
    }
    while k < n && (k as f64 / nf) < u {
        k += 1;
    }
    k
}

impl GroupDistributions {
    /// Validates already sorted, jittered per-group samples.
    pub fn from_sorted(groups: Vec<GroupSample>, sigma: f64, seed: RngSeed) -> Result<Self> {
        check_sigma(sigma)?;
        if groups.is_empty() {
            return Err(Error::Build("no groups".into()));
        }
        for g in &groups {
            if g.values.is_empty() {
                return Err(Error::Build(format!("group '{}' has no target rows", g.label)));
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Build(format!("group '{}' has non-finite scores", g.label)));
            }
            if g.values.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Build(format!("group '{}' is not sorted", g.label)));
            }
        }
        Ok(GroupDistributions { groups, sigma, seed })
    }

    /// Jitters `scores` (row `i` uses substream `i`) and sorts them by group.
    pub fn from_scores(labels: &[String], scores: &[(f64, usize)], sigma: f64, seed: RngSeed) -> Result<Self> {
        check_sigma(sigma)?;
        let mut values: Vec<Vec<f64>> = alloc::vec![Vec::new(); labels.len()];
        let family = seed.derive(TAG_JITTER);
        for (i, &(f, s)) in scores.iter().enumerate() {
            if s >= labels.len() {
                return Err(domain(format!("row {i}: group index {s} out of range")));
            }
            let eps = if sigma > 0.0 { family.stream(i as u64).uniform_range(-sigma, sigma) } else { 0.0 };
            values[s].push(f + eps);
        }
        let groups = labels
            .iter()
            .cloned()
            .zip(values)
            .map(|(label, mut values)| {
                values.sort_by(f64::total_cmp);
                GroupSample { label, values }
            })
            .collect();
        Self::from_sorted(groups, sigma, seed)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.label.as_str())
    }

    pub fn groups(&self) -> &[GroupSample] {
        &self.groups
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    fn group(&self, s: usize) -> Result<&[f64]> {
        self.groups.get(s).map(|g| g.values.as_slice()).ok_or_else(|| domain(format!("unknown group index {s}")))
    }

    pub fn count(&self, s: usize) -> Result<usize> {
        Ok(self.group(s)?.len())
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.values.len()).sum()
    }

    /// `p̂_s = N_s / N`
    pub fn frequency(&self, s: usize) -> Result<f64> {
        Ok(self.count(s)? as f64 / self.total() as f64)
    }

    /// `F̂_s(t) = (1/N_s)·#{v < t}`
    pub fn ecdf(&self, s: usize, t: f64) -> Result<f64> {
        let v = self.group(s)?;
        Ok(v.partition_point(|&x| x < t) as f64 / v.len() as f64)
    }

    /// `Q̂_s(u) = inf{y : F̂_s(y) ≥ u} = v_(⌈u·N_s⌉)`, with `Q̂_s(0) = v_(1)`.
    pub fn quantile(&self, s: usize, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(domain(format!("quantile level {u} not in [0, 1]")));
        }
        let v = self.group(s)?;
        Ok(v[quantile_rank(u, v.len()) - 1])
    }

    /// The barycenter map `t ↦ Σ_{s'} p̂_{s'} Q̂_{s'}(F̂_s(t))`.
    pub fn transport(&self, s: usize, t: f64) -> Result<f64> {
        let u = self.ecdf(s, t)?.clamp(0.0, 1.0);
        let total = self.total() as f64;
        Ok(self
            .groups
            .iter()
            .map(|g| {
                let v = &g.values;
                (v.len() as f64 / total) * v[quantile_rank(u, v.len()) - 1]
            })
            .sum())
    }

    /// Average of the barycenter map over `m` evaluation jitters drawn from `stream`.
    pub fn fair_score_from(&self, base: f64, s: usize, m: usize, stream: &mut Stream) -> Result<f64> {
        if m == 0 {
            return Err(domain("m must be at least 1"));
        }
        if self.sigma == 0.0 {
            return self.transport(s, base);
        }
        let mut acc = 0.0;
        for _ in 0..m {
            acc += self.transport(s, base + stream.uniform_range(-self.sigma, self.sigma))?;
        }
        Ok(acc / m as f64)
    }
}

/// Scores the target set with `base`, jitters and groups them.
pub fn build_group_distributions(
    base: &DecisionModel,
    target: &TargetDataset,
    sigma: f64,
    seed: RngSeed,
) -> Result<GroupDistributions> {
    let mut scores = Vec::with_capacity(target.len());
    for u in target.rows() {
        scores.push((base.score(&u.x, u.s)?, u.s));
    }
    GroupDistributions::from_scores(target.groups(), &scores, sigma, seed)
}

/// Base, fair and effect values at one point; the trade-off score for any
/// α follows without re-running the transport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointScores {
    pub base: f64,
    pub fair: f64,
    pub effect: f64,
}

impl PointScores {
    /// `w·f̂ + (1 − w)·ĝ` with `w = 1 − exp(−α|τ̂|)`.
    pub fn tradeoff(&self, alpha: f64) -> Result<f64> {
        weight_from_effect(self.effect, alpha)?;
        Ok(self.blend(alpha))
    }

    pub(crate) fn blend(&self, alpha: f64) -> f64 {
        let w = weight_unchecked(self.effect, alpha);
        w * self.base + (1.0 - w) * self.fair
    }
}

/// The composite `(f̂, ĝ, τ̂, α)` scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPolicy {
    pub base: DecisionModel,
    pub dists: GroupDistributions,
    pub cate: CateModel,
    pub alpha: f64,
    pub m: usize,
    pub eval_seed: RngSeed,
}

impl TradeoffPolicy {
    pub fn new(
        base: DecisionModel,
        dists: GroupDistributions,
        cate: CateModel,
        alpha: f64,
        m: usize,
        eval_seed: RngSeed,
    ) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(domain(format!("alpha must be nonnegative, got {alpha}")));
        }
        if m == 0 {
            return Err(domain("m must be at least 1"));
        }
        if dists.n_groups() != base.scaler.n_groups {
            return Err(domain("distributions and base model disagree on the number of groups"));
        }
        Ok(TradeoffPolicy { base, dists, cate, alpha, m, eval_seed })
    }

    /// Evaluation-jitter stream keyed by the point.
    fn eval_stream(&self, x: &[f64], s: usize) -> Stream {
        self.eval_seed.derive(TAG_EVAL ^ hash_f64s(x)).stream(mix64(s as u64))
    }

    /// `ĝ(x, s)`
    pub fn fair_score(&self, x: &[f64], s: usize) -> Result<f64> {
        let f = self.base.score(x, s)?;
        self.dists.fair_score_from(f, s, self.m, &mut self.eval_stream(x, s))
    }

    pub fn point_scores(&self, x: &[f64], s: usize) -> Result<PointScores> {
        let base = self.base.score(x, s)?;
        let fair = self.dists.fair_score_from(base, s, self.m, &mut self.eval_stream(x, s))?;
        let effect = self.cate.effect(x, s)?;
        Ok(PointScores { base, fair, effect })
    }

    /// `ĝ_α(x, s)`
    pub fn tradeoff_score(&self, x: &[f64], s: usize) -> Result<f64> {
        self.point_scores(x, s)?.tradeoff(self.alpha)
    }
}

/// Wasserstein-2 distance between two equally weighted empirical samples,
/// integrating the squared quantile difference exactly over the merged
/// breakpoints `{i/n} ∪ {j/m}`.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("wasserstein distance needs nonempty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as u128, b.len() as u128);
    let denom = (n * m) as f64;
    let (mut i, mut j, mut prev, mut acc) = (0usize, 0usize, 0u128, 0.0f64);
    while i < a.len() && j < b.len() {
        let end_a = (i as u128 + 1) * m;
        let end_b = (j as u128 + 1) * n;
        let end = end_a.min(end_b);
        let diff = a[i] - b[j];
        acc += diff * diff * ((end - prev) as f64 / denom);
        prev = end;
        if end_a == end {
            i += 1;
        }
        if end_b == end {
            j += 1;
        }
    }
    Ok(libm::sqrt(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn dists(groups: &[&[f64]]) -> GroupDistributions {
        let samples = groups
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut values = v.to_vec();
                values.sort_by(f64::total_cmp);
                GroupSample { label: i.to_string(), values }
            })
            .collect();
        GroupDistributions::from_sorted(samples, 0.0, RngSeed(0)).unwrap()
    }

    #[test]
    fn ecdf_is_strict() {
        let d = dists(&[&[3.0, 1.0, 2.0]]);
        assert_eq!(d.groups()[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(d.frequency(0).unwrap(), 1.0);
        assert!((d.ecdf(0, 2.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.ecdf(0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.ecdf(0, 0.0).unwrap(), 0.0);
        assert_eq!(d.ecdf(0, 9.0).unwrap(), 1.0);
        assert!(d.ecdf(1, 0.0).is_err());
    }

    #[test]
    fn quantile_ceiling_convention() {
        let d = dists(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(d.quantile(0, 0.5).unwrap(), 2.0);
        assert_eq!(d.quantile(0, 0.0).unwrap(), 1.0);
        assert_eq!(d.quantile(0, 1.0).unwrap(), 3.0);
        assert_eq!(d.quantile(0, 2.0 / 3.0).unwrap(), 2.0);
        assert!(d.quantile(0, 1.5).is_err());
        assert!(d.quantile(0, f64::NAN).is_err());
    }

    #[test]
    fn frequencies_from_counts() {
        let a: Vec<f64> = (0..30).map(f64::from).collect();
        let b: Vec<f64> = (0..70).map(f64::from).collect();
        let d = dists(&[&a, &b]);
        assert_eq!(d.frequency(0).unwrap(), 0.3);
        assert_eq!(d.frequency(1).unwrap(), 0.7);
    }

    #[test]
    fn two_group_hand_example() {
        let d = dists(&[&[1.0, 3.0], &[2.0, 4.0]]);
        assert_eq!(d.transport(0, 3.0).unwrap(), 1.5);
    }

    #[test]
    fn jitter_breaks_ties() {
        let scores: Vec<(f64, usize)> = (0..50).map(|_| (1.0, 0)).collect();
        let d = GroupDistributions::from_scores(&["g".to_string()], &scores, 0.1, RngSeed(3)).unwrap();
        let v = &d.groups()[0].values;
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(v.iter().all(|x| (x - 1.0).abs() <= 0.1));
    }

    #[test]
    fn empty_group_is_build_error() {
        let err = GroupDistributions::from_scores(&["a".to_string(), "b".to_string()], &[(1.0, 0)], 0.0, RngSeed(0));
        match err {
            Err(Error::Build(msg)) => assert!(msg.contains("'b'")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein2_1d(&[1.0, 5.0, 2.0], &[5.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein2_1d(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein2_1d(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 1.0);
        // unequal sizes: {0} vs {0, 2}: half the mass moves by 2
        assert!((wasserstein2_1d(&[0.0], &[0.0, 2.0]).unwrap() - libm::sqrt(2.0)).abs() < 1e-15);
        assert!(wasserstein2_1d(&[], &[1.0]).is_err());
    }
}
