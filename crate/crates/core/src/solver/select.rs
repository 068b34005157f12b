//! Choice of α by surrogate-constrained IPW risk minimization over a grid of
//! smooth-indicator shapes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::isres::{isres_minimize_problem, ConstrainedProblem, IsresConfig};
use super::surrogate::{surrogate_H, surrogate_h, SurrogateParams};
use crate::data::{LabeledDataset, Treatment};
use crate::error::domain;
use crate::metrics::{estimate_value, ValueRow};
use crate::nuisance::PropensityModel;
use crate::transport::{PointScores, TradeoffPolicy};
use crate::Result;

/// Named `(β, γ)` grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateGrid {
    /// `β, γ ∈ {100 + 10j : 0 ≤ j ≤ 90}`, 8281 cells.
    Paper,
    /// `β, γ ∈ {100 + 100j : 0 ≤ j ≤ 9}`, 100 cells.
    Coarse,
}

impl SurrogateGrid {
    pub fn cells(self) -> Vec<SurrogateParams> {
        let axis: Vec<f64> = match self {
            SurrogateGrid::Paper => (0..=90).map(|j| 100.0 + 10.0 * j as f64).collect(),
            SurrogateGrid::Coarse => (0..=9).map(|j| 100.0 + 100.0 * j as f64).collect(),
        };
        let mut out = Vec::with_capacity(axis.len() * axis.len());
        for &beta in &axis {
            for &gamma in &axis {
                out.push(SurrogateParams::new(beta, gamma).expect("grid values are positive"));
            }
        }
        out
    }
}

/// Surrogate constraint of one ordered group pair at the selected α;
/// nonnegative slack means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSlack {
    pub group: usize,
    pub other: usize,
    pub slack: f64,
}

/// Result of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Surrogate IPW risk at `alpha`.
    pub risk: f64,
    /// `V̂` of the trade-off rule at `alpha`.
    pub value: f64,
    /// Largest surrogate constraint value (≤ 0 when feasible).
    pub max_constraint: f64,
    pub feasible: bool,
    pub discarded: usize,
}

/// Selected trade-off level with its grid trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha_hat: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    /// `V̂` at `alpha_hat`.
    pub value: f64,
    /// False when no cell found a feasible α; `alpha_hat` is then 0.
    pub feasible: bool,
    pub slack: Vec<PairSlack>,
    pub trace: Vec<GridRecord>,
}

struct AlphaProblem<'a> {
    scores: &'a [PointScores],
    treatment: Vec<Treatment>,
    group: Vec<usize>,
    coef: Vec<f64>,
    counts: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    rho: f64,
    params: SurrogateParams,
}

impl ConstrainedProblem for AlphaProblem<'_> {
    fn n_constraints(&self) -> usize {
        self.pairs.len()
    }

    fn evaluate(&self, x: &[f64], constraints: &mut [f64]) -> f64 {
        let alpha = x[0];
        let k = self.counts.len();
        let mut pos = vec![0.0; k];
        let mut neg = vec![0.0; k];
        let mut risk = 0.0;
        for (i, p) in self.scores.iter().enumerate() {
            let g = p.blend(alpha);
            risk += self.coef[i] * surrogate_h(self.treatment[i], g);
            let s = self.group[i];
            pos[s] += surrogate_H(self.params, g);
            neg[s] += surrogate_H(self.params, -g);
        }
        for (c, &(s, t)) in constraints.iter_mut().zip(&self.pairs) {
            *c = self.rho * (pos[t] / self.counts[t]) + neg[s] / self.counts[s] - 1.0;
        }
        risk / self.scores.len() as f64
    }
}

fn point_scores(policy: &TradeoffPolicy, data: &LabeledDataset) -> Result<Vec<PointScores>> {
    data.rows().iter().map(|r| policy.point_scores(&r.x, r.s)).collect()
}

fn value_at(scores: &[PointScores], rows: &[ValueRow], alpha: f64) -> Result<f64> {
    let rows: Vec<ValueRow> = scores.iter().zip(rows).map(|(p, r)| ValueRow { score: p.blend(alpha), ..*r }).collect();
    estimate_value(&rows)
}

/// Picks α on `train` with `V̂` also measured on `train`.
pub fn select_alpha(
    train: &LabeledDataset,
    policy: &TradeoffPolicy,
    prop: &PropensityModel,
    rho: f64,
    grid: &[SurrogateParams],
    config: &IsresConfig,
) -> Result<AlphaSelection> {
    select_alpha_with(train, train, policy, prop, rho, grid, config)
}

/// Picks α by minimizing the surrogate IPW risk on `train` under the
/// smoothed disparate-impact constraints, per grid cell, and keeps the cell
/// whose α has the largest `V̂` on `value_data`.
///
/// For every ordered pair `s ≠ s'` the constraint is
/// `ρ·mean_{S=s'} H(ĝ_α) + mean_{S=s} H(−ĝ_α) − 1 ≤ 0`.
pub fn select_alpha_with(
    train: &LabeledDataset,
    value_data: &LabeledDataset,
    policy: &TradeoffPolicy,
    prop: &PropensityModel,
    rho: f64,
    grid: &[SurrogateParams],
    config: &IsresConfig,
) -> Result<AlphaSelection> {
    if grid.is_empty() {
        return Err(domain("surrogate grid is empty"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(domain(format!("rho must be in [0, 1], got {rho}")));
    }
    config.validate()?;
    if config.dimension() != 1 || config.lower[0] < 0.0 {
        return Err(domain("alpha bounds must be one nonnegative interval"));
    }

    let scores = point_scores(policy, train)?;
    let shifted = train.shifted_rewards();
    let treatment: Vec<Treatment> = train.rows().iter().map(|r| r.a).collect();
    let group: Vec<usize> = train.rows().iter().map(|r| r.s).collect();
    let coef: Vec<f64> = train.rows().iter().zip(&shifted).map(|(r, w)| w / prop.prob(r.a, &r.x, r.s)).collect();
    let counts: Vec<f64> = train.group_counts().iter().map(|&c| c as f64).collect();
    let k = counts.len();
    let pairs: Vec<(usize, usize)> =
        (0..k).flat_map(|s| (0..k).filter(move |&t| t != s).map(move |t| (s, t))).collect();

    let value_scores = point_scores(policy, value_data)?;
    let value_rows: Vec<ValueRow> = value_data
        .rows()
        .iter()
        .map(|r| ValueRow { score: 0.0, a: r.a, r: r.r, prob_treated: prop.prob_treated(&r.x, r.s) })
        .collect();

    let mut problem = AlphaProblem { scores: &scores, treatment, group, coef, counts, pairs, rho, params: grid[0] };
    let mut cons = vec![0.0; problem.pairs.len()];
    let mut trace: Vec<GridRecord> = Vec::with_capacity(grid.len());
    let mut best: Option<usize> = None;
    for (cell, &params) in grid.iter().enumerate() {
        problem.params = params;
        let mut cell_config = config.clone();
        cell_config.seed = config.seed.derive(cell as u64);
        let result = isres_minimize_problem(&problem, &cell_config)?;
        let alpha = result.x[0];
        let risk = problem.evaluate(&[alpha], &mut cons);
        let max_constraint = cons.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let value = value_at(&value_scores, &value_rows, alpha)?;
        if result.feasible && best.map_or(true, |b: usize| value > trace[b].value) {
            best = Some(cell);
        }
        trace.push(GridRecord {
            beta: params.beta(),
            gamma: params.gamma(),
            alpha,
            risk,
            value,
            max_constraint,
            feasible: result.feasible,
            discarded: result.discarded,
        });
    }

    let (cell, alpha_hat, feasible) = match best {
        Some(b) => (b, trace[b].alpha, true),
        None => (0, 0.0, false),
    };
    problem.params = grid[cell];
    problem.evaluate(&[alpha_hat], &mut cons);
    let slack =
        problem.pairs.iter().zip(&cons).map(|(&(group, other), c)| PairSlack { group, other, slack: -c }).collect();
    let value = if feasible { trace[cell].value } else { value_at(&value_scores, &value_rows, 0.0)? };
    Ok(AlphaSelection {
        alpha_hat,
        beta: grid[cell].beta(),
        gamma: grid[cell].gamma(),
        rho,
        value,
        feasible,
        slack,
        trace,
    })
}
