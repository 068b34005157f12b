//! Improved stochastic ranking evolution strategy (Runarsson & Yao, 2005).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::rng::{RngSeed, Stream};
use crate::Result;

/// A box-constrained problem with inequality constraints `c_j(x) ≤ 0`.
pub trait ConstrainedProblem {
    fn n_constraints(&self) -> usize;

    /// Writes the constraint values into `constraints` and returns the objective.
    fn evaluate(&self, x: &[f64], constraints: &mut [f64]) -> f64;
}

/// Settings of the evolution strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsresConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Offspring per generation (λ).
    pub population: usize,
    /// Parents kept per generation (μ).
    pub parents: usize,
    pub max_evaluations: usize,
    /// Probability of comparing on the objective when penalties differ.
    pub ranking_pf: f64,
    /// Per-coordinate learning rate of the step sizes.
    pub tau: f64,
    /// Global learning rate of the step sizes.
    pub tau_prime: f64,
    /// Step of the differential variation toward the best parent.
    pub differential_gamma: f64,
    /// Exponential smoothing of step sizes.
    pub smoothing: f64,
    pub seed: RngSeed,
}

impl IsresConfig {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, seed: RngSeed) -> Self {
        let n = lower.len().max(1) as f64;
        let population = (20 * (lower.len() + 1)).min(60);
        IsresConfig {
            lower,
            upper,
            population,
            parents: population.div_ceil(7),
            max_evaluations: 2000,
            ranking_pf: 0.45,
            tau: 1.0 / libm::sqrt(2.0 * libm::sqrt(n)),
            tau_prime: 1.0 / libm::sqrt(2.0 * n),
            differential_gamma: 0.85,
            smoothing: 0.2,
            seed,
        }
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(domain("bounds must be nonempty and of equal length"));
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(domain(format!("coordinate {j}: bounds [{lo}, {hi}] are not a finite interval")));
            }
        }
        if self.population < 4 {
            return Err(domain("population must be at least 4"));
        }
        if self.parents == 0 || self.parents > self.population {
            return Err(domain("parents must be in 1..=population"));
        }
        if self.max_evaluations < self.population {
            return Err(domain("max evaluations must cover one generation"));
        }
        if !(self.ranking_pf > 0.0 && self.ranking_pf < 1.0) {
            return Err(domain("ranking probability must be in (0, 1)"));
        }
        let rates = [self.tau, self.tau_prime, self.differential_gamma, self.smoothing];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(domain("learning rates must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Outcome of [`isres_minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsresResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Whether `x` satisfies every constraint.
    pub feasible: bool,
    /// `Σ_j max(0, c_j(x))²`
    pub penalty: f64,
    pub evaluations: usize,
    /// Candidates dropped for a non-finite objective or constraint.
    pub discarded: usize,
}

#[derive(Clone)]
struct Individual {
    x: Vec<f64>,
    sigma: Vec<f64>,
    value: f64,
    penalty: f64,
}

struct Closures<'a, F> {
    objective: F,
    constraints: &'a [&'a dyn Fn(&[f64]) -> f64],
}

impl<F: Fn(&[f64]) -> f64> ConstrainedProblem for Closures<'_, F> {
    fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn evaluate(&self, x: &[f64], constraints: &mut [f64]) -> f64 {
        for (c, g) in constraints.iter_mut().zip(self.constraints) {
            *c = g(x);
        }
        (self.objective)(x)
    }
}

/// Minimizes `objective` subject to `g(x) ≤ 0` for each constraint.
pub fn isres_minimize(
    objective: impl Fn(&[f64]) -> f64,
    constraints: &[&dyn Fn(&[f64]) -> f64],
    config: &IsresConfig,
) -> Result<IsresResult> {
    isres_minimize_problem(&Closures { objective, constraints }, config)
}

/// Stochastic ranking bubble sort: adjacent pairs are compared on the
/// objective when both are feasible or with probability `pf`, otherwise on
/// the penalty.
fn stochastic_rank(pop: &[Individual], pf: f64, rng: &mut Stream) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    for _ in 0..pop.len() {
        let mut swapped = false;
        for j in 0..pop.len() - 1 {
            let (a, b) = (&pop[order[j]], &pop[order[j + 1]]);
            let u = rng.uniform();
            let worse = if (a.penalty == 0.0 && b.penalty == 0.0) || u < pf {
                a.value > b.value
            } else {
                a.penalty > b.penalty
            };
            if worse {
                order.swap(j, j + 1);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    order
}

fn in_bounds(x: &[f64], config: &IsresConfig) -> bool {
    x.iter().zip(config.lower.iter().zip(&config.upper)).all(|(v, (lo, hi))| v >= lo && v <= hi)
}

/// [`isres_minimize`] over a [`ConstrainedProblem`].
pub fn isres_minimize_problem(problem: &impl ConstrainedProblem, config: &IsresConfig) -> Result<IsresResult> {
    config.validate()?;
    let n = config.dimension();
    let lambda = config.population;
    let mu = config.parents;
    let mut rng = config.seed.stream(0);
    let mut cons = vec![0.0; problem.n_constraints()];
    let mut evaluations = 0usize;
    let mut discarded = 0usize;
    let mut best_feasible: Option<Individual> = None;
    let mut best_penalty: Option<Individual> = None;

    let mut evaluate = |x: Vec<f64>, sigma: Vec<f64>, evaluations: &mut usize, discarded: &mut usize| {
        *evaluations += 1;
        let value = problem.evaluate(&x, &mut cons);
        let penalty = cons.iter().fold(0.0, |acc, c| if *c > 0.0 { acc + c * c } else { acc });
        let bad = !value.is_finite() || cons.iter().any(|c| c.is_nan()) || penalty.is_nan();
        if bad {
            *discarded += 1;
            return Individual { x, sigma, value: f64::INFINITY, penalty: f64::INFINITY };
        }
        let ind = Individual { x, sigma, value, penalty };
        if penalty == 0.0 {
            if best_feasible.as_ref().map_or(true, |b| value < b.value) {
                best_feasible = Some(ind.clone());
            }
        } else if best_penalty
            .as_ref()
            .map_or(true, |b| penalty < b.penalty || (penalty == b.penalty && value < b.value))
        {
            best_penalty = Some(ind.clone());
        }
        ind
    };

    let mut pop: Vec<Individual> = (0..lambda)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|j| rng.uniform_range(config.lower[j], config.upper[j])).collect();
            let sigma: Vec<f64> = (0..n).map(|j| (config.upper[j] - config.lower[j]) / libm::sqrt(n as f64)).collect();
            evaluate(x, sigma, &mut evaluations, &mut discarded)
        })
        .collect();

    while evaluations + lambda <= config.max_evaluations {
        let order = stochastic_rank(&pop, config.ranking_pf, &mut rng);
        let parents: Vec<Individual> = order[..mu].iter().map(|&i| pop[i].clone()).collect();
        let mut next = Vec::with_capacity(lambda);
        for k in 0..lambda {
            let i = k % mu;
            let parent = &parents[i];
            if k < mu - 1 {
                let x: Vec<f64> = (0..n)
                    .map(|j| parent.x[j] + config.differential_gamma * (parents[0].x[j] - parents[i + 1].x[j]))
                    .collect();
                if in_bounds(&x, config) {
                    next.push(evaluate(x, parent.sigma.clone(), &mut evaluations, &mut discarded));
                    continue;
                }
            }
            let global = config.tau_prime * rng.normal();
            let mut x = parent.x.clone();
            let mut smoothed = parent.sigma.clone();
            for j in 0..n {
                let step = parent.sigma[j] * libm::exp(global + config.tau * rng.normal());
                // A coordinate that stays out of bounds after ten draws keeps
                // the parent's value and step size.
                for _ in 0..10 {
                    let trial = parent.x[j] + step * rng.normal();
                    if trial >= config.lower[j] && trial <= config.upper[j] {
                        x[j] = trial;
                        smoothed[j] = parent.sigma[j] + config.smoothing * (step - parent.sigma[j]);
                        break;
                    }
                }
            }
            next.push(evaluate(x, smoothed, &mut evaluations, &mut discarded));
        }
        pop = next;
    }

    let (best, feasible) = match (best_feasible, best_penalty) {
        (Some(b), _) => (b, true),
        (None, Some(b)) => (b, false),
        (None, None) => return Err(domain("every candidate had a non-finite objective")),
    };
    Ok(IsresResult { x: best.x, value: best.value, feasible, penalty: best.penalty, evaluations, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let c = IsresConfig::new(vec![0.0], vec![10.0], RngSeed(1));
        assert_eq!(c.population, 40);
        assert_eq!(c.parents, 6);
        let c = IsresConfig::new(vec![0.0; 3], vec![1.0; 3], RngSeed(1));
        assert_eq!(c.population, 60);
    }

    #[test]
    fn bound_constrained_quadratic() {
        let c = IsresConfig::new(vec![0.0], vec![10.0], RngSeed(5));
        let r = isres_minimize(|x| (x[0] - 1.0) * (x[0] - 1.0), &[], &c).unwrap();
        assert!(r.feasible);
        assert!((r.x[0] - 1.0).abs() < 1e-3, "{:?}", r);
        assert!(r.evaluations <= 2000);
    }

    #[test]
    fn nan_candidates_are_discarded() {
        let c = IsresConfig::new(vec![0.0], vec![10.0], RngSeed(5));
        let r = isres_minimize(|x| if x[0] > 5.0 { f64::NAN } else { (x[0] - 1.0).powi(2) }, &[], &c).unwrap();
        assert!(r.discarded > 0);
        assert!(r.value.is_finite());
    }

    #[test]
    fn invalid_config() {
        let mut c = IsresConfig::new(vec![1.0], vec![1.0], RngSeed(5));
        assert!(c.validate().is_err());
        c.upper = vec![2.0];
        c.population = 3;
        assert!(c.validate().is_err());
    }
}
