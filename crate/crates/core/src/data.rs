//! Datasets, synthetic generators and train/test splitting.
//!
//! Group labels are opaque strings; rows carry the dense index of their label
//! in the dataset's `groups` list.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log};
use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::rng::{RngSeed, Stream};
use crate::Result;

const TAG_EXPERIMENT: u64 = 0x4558_5045_5249_4D00;
const TAG_MOTIVATING: u64 = 0x4D4F_5449_5641_5445;
const TAG_LOOKALIKE: u64 = 0x4E45_5854_3336_0000;
const TAG_SPLIT: u64 = 0x5350_4C49_5400_0000;

/// Treatment arm, coded ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Treatment {
    Treated,
    Control,
}

impl Treatment {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Treatment::Treated => 1.0,
            Treatment::Control => -1.0,
        }
    }

    /// The rule `sgn(u) = 2·I(u > 0) − 1`; zero maps to control.
    #[inline]
    pub fn from_score(u: f64) -> Self {
        if u > 0.0 {
            Treatment::Treated
        } else {
            Treatment::Control
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Treatment::Treated => Treatment::Control,
            Treatment::Control => Treatment::Treated,
        }
    }
}

impl From<Treatment> for i8 {
    fn from(t: Treatment) -> i8 {
        match t {
            Treatment::Treated => 1,
            Treatment::Control => -1,
        }
    }
}

impl TryFrom<i8> for Treatment {
    type Error = String;

    fn try_from(v: i8) -> core::result::Result<Self, String> {
        match v {
            1 => Ok(Treatment::Treated),
            -1 => Ok(Treatment::Control),
            other => Err(format!("treatment must be -1 or 1, got {other}")),
        }
    }
}

/// Covariates and sensitive group of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub x: Vec<f64>,
    pub s: usize,
}

/// A training row: unit, received treatment and observed reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub x: Vec<f64>,
    pub s: usize,
    pub a: Treatment,
    pub r: f64,
}

impl LabeledRow {
    pub fn unit(&self) -> Unit {
        Unit { x: self.x.clone(), s: self.s }
    }
}

fn check_rows<'a>(d: usize, groups: &[String], rows: impl Iterator<Item = (&'a [f64], usize)>) -> Result<usize> {
    if groups.is_empty() {
        return Err(domain("at least one group label is required"));
    }
    let mut n = 0;
    for (i, (x, s)) in rows.enumerate() {
        if x.len() != d {
            return Err(domain(format!("row {i}: expected {d} covariates, found {}", x.len())));
        }
        if s >= groups.len() {
            return Err(domain(format!("row {i}: group index {s} out of range")));
        }
        n += 1;
    }
    if n == 0 {
        return Err(domain("dataset has no rows"));
    }
    Ok(n)
}

/// Rows with treatment and reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    d: usize,
    groups: Vec<String>,
    rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    pub fn new(d: usize, groups: Vec<String>, rows: Vec<LabeledRow>) -> Result<Self> {
        check_rows(d, &groups, rows.iter().map(|r| (r.x.as_slice(), r.s)))?;
        if let Some(i) = rows.iter().position(|r| !r.r.is_finite()) {
            return Err(domain(format!("row {i}: reward is not finite")));
        }
        Ok(LabeledDataset { d, groups, rows })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.groups.len()];
        for r in &self.rows {
            counts[r.s] += 1;
        }
        counts
    }

    /// Drops treatment and reward.
    pub fn to_target(&self) -> TargetDataset {
        TargetDataset { d: self.d, groups: self.groups.clone(), rows: self.rows.iter().map(LabeledRow::unit).collect() }
    }

    /// Subset by row indices (in the given order).
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            d: self.d,
            groups: self.groups.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Rewards shifted to be strictly positive: `r − min r + 0.01·(max r − min r)`.
    ///
    /// A constant reward column is shifted to the constant 1.
    pub fn shifted_rewards(&self) -> Vec<f64> {
        let (lo, hi) =
            self.rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.r), hi.max(r.r)));
        let offset = if hi > lo { 0.01 * (hi - lo) } else { 1.0 };
        self.rows.iter().map(|r| r.r - lo + offset).collect()
    }
}

/// Rows with covariates and group only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDataset {
    d: usize,
    groups: Vec<String>,
    rows: Vec<Unit>,
}

impl TargetDataset {
    pub fn new(d: usize, groups: Vec<String>, rows: Vec<Unit>) -> Result<Self> {
        check_rows(d, &groups, rows.iter().map(|r| (r.x.as_slice(), r.s)))?;
        Ok(TargetDataset { d, groups, rows })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn rows(&self) -> &[Unit] {
        &self.rows
    }
}

/// A synthetic data-generating process with known mean reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// One of the four simulation designs (id 1..=4), 20 covariates.
    Experiment(u8),
    /// The three-covariate training-program example.
    Motivating,
    /// Admission-program lookalike: 2 covariates, binary 0/100 reward.
    Lookalike,
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

#[inline]
fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl Scenario {
    pub fn experiment(id: u8) -> Result<Self> {
        if (1..=4).contains(&id) {
            Ok(Scenario::Experiment(id))
        } else {
            Err(domain(format!("unknown experiment {id}; expected 1..=4")))
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Scenario::Experiment(_) => 20,
            Scenario::Motivating => 3,
            Scenario::Lookalike => 2,
        }
    }

    pub fn groups(self) -> Vec<String> {
        vec!["0".to_string(), "1".to_string()]
    }

    /// Noise-free reward `E[R | x, s, a]`.
    pub fn mean_reward(self, x: &[f64], s: usize, a: Treatment) -> f64 {
        let s = s as f64;
        let av = a.sign();
        let treated = ind(a == Treatment::Treated);
        match self {
            Scenario::Experiment(1) => {
                10.0 + x[0] + x[1] + 0.25 * x[2] + (x[0] + x[1] - 10.0 * (1.0 - s) * treated) * av
            }
            Scenario::Experiment(2) => 10.0 + (0.1 * x[0] * x[0] - x[1] - 10.0 * (1.0 - s) * treated) * av,
            Scenario::Experiment(3) => {
                let control = ind(a == Treatment::Control);
                0.1 * (-3.0 - 5.0 * x[0] - x[1] * x[1]) * (5.0 * x[0] + x[1] * x[1] - 20.0 - 10.0 * s * control) * av
                    + 10.0
            }
            Scenario::Experiment(4) => {
                let base = -0.5 * x[0] * x[0] * x[0] + log(x[1] * x[1] + 1.0) + 2.0 * x[2]
                    - 0.5 * (x[3] + x[4]) * (x[3] + x[4])
                    - 5.0;
                base * av + 10.0 * s * treated * av + 20.0
            }
            Scenario::Experiment(id) => panic!("invalid experiment id {id}"),
            Scenario::Motivating => 10.0 + x[2] * x[2] + (x[0] + x[1] - 10.0 * (1.0 - s) * treated) * av,
            Scenario::Lookalike => 100.0 * lookalike_success(x, s, av),
        }
    }

    /// Treatment effect `E[R(1) − R(−1) | x, s]`.
    pub fn cate(self, x: &[f64], s: usize) -> f64 {
        self.mean_reward(x, s, Treatment::Treated) - self.mean_reward(x, s, Treatment::Control)
    }

    /// Draws `n` rows; row `i` depends only on `(seed, i)`.
    pub fn generate(self, n: usize, seed: RngSeed) -> Result<LabeledDataset> {
        if n == 0 {
            return Err(domain("n must be at least 1"));
        }
        if let Scenario::Experiment(id) = self {
            Scenario::experiment(id)?;
        }
        let family = match self {
            Scenario::Experiment(id) => seed.derive(TAG_EXPERIMENT ^ id as u64),
            Scenario::Motivating => seed.derive(TAG_MOTIVATING),
            Scenario::Lookalike => seed.derive(TAG_LOOKALIKE),
        };
        let rows = (0..n).map(|i| self.draw_row(&mut family.stream(i as u64))).collect();
        LabeledDataset::new(self.dimension(), self.groups(), rows)
    }

    fn draw_row(self, st: &mut Stream) -> LabeledRow {
        let d = self.dimension();
        let (x, s, a) = match self {
            Scenario::Experiment(_) => {
                let x: Vec<f64> = (0..d).map(|_| st.uniform_range(-5.0, 5.0)).collect();
                let (p1, p2) = (logistic(x[0]), logistic(x[1]));
                let s = st.bernoulli(p1 / (p1 + p2)) as usize;
                let a = if st.bernoulli(0.5) { Treatment::Treated } else { Treatment::Control };
                (x, s, a)
            }
            Scenario::Motivating => {
                let x: Vec<f64> = (0..d).map(|_| st.uniform_range(-5.0, 5.0)).collect();
                let a = if st.bernoulli(0.5) { Treatment::Treated } else { Treatment::Control };
                let s = st.bernoulli(0.5) as usize;
                (x, s, a)
            }
            Scenario::Lookalike => {
                let s = st.bernoulli(246.0 / 335.0) as usize;
                // Interview score (0..10) and school ranking (1..100, lower is better).
                let score = (6.0 + 0.4 * s as f64 + 1.5 * st.normal()).clamp(0.0, 10.0);
                let rank = st.uniform_range(1.0, 100.0);
                let accept = logistic(0.35 + 0.6 * (score - 6.0) - 0.01 * (rank - 50.0));
                let a = if st.bernoulli(accept) { Treatment::Treated } else { Treatment::Control };
                (vec![score, rank], s, a)
            }
        };
        let r = match self {
            Scenario::Lookalike => {
                if st.bernoulli(lookalike_success(&x, s as f64, a.sign())) {
                    100.0
                } else {
                    0.0
                }
            }
            _ => self.mean_reward(&x, s, a) + st.normal(),
        };
        LabeledRow { x, s, a, r }
    }
}

fn lookalike_success(x: &[f64], s: f64, a: f64) -> f64 {
    let (score, rank) = (x[0], x[1]);
    let effect = 0.5 * (score - 6.0) - 0.012 * (rank - 50.0) + 1.2 * s - 0.6;
    logistic(-0.4 + 0.3 * (score - 6.0) + 0.5 * effect * a)
}

/// Simulation dataset for experiment `id` ∈ 1..=4.
pub fn generate_experiment(id: u8, n: usize, seed: RngSeed) -> Result<LabeledDataset> {
    Scenario::experiment(id)?.generate(n, seed)
}

pub fn generate_motivating(n: usize, seed: RngSeed) -> Result<LabeledDataset> {
    Scenario::Motivating.generate(n, seed)
}

/// Synthetic stand-in for a small admissions dataset (335 rows by default).
pub fn generate_lookalike(n: usize, seed: RngSeed) -> Result<LabeledDataset> {
    Scenario::Lookalike.generate(n, seed)
}

/// Uniformly random partition into `⌊fraction·n⌋` and the remaining rows.
pub fn split(data: &LabeledDataset, fraction: f64, seed: RngSeed) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(domain(format!("split fraction {fraction} not in (0, 1)")));
    }
    let n = data.len();
    let first = libm::floor(fraction * n as f64) as usize;
    if first == 0 || first == n {
        return Err(domain(format!("split of {n} rows at {fraction} leaves an empty side")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    seed.derive(TAG_SPLIT).stream(0).shuffle(&mut idx);
    let (a, b) = idx.split_at(first);
    Ok((data.select(a), data.select(b)))
}
