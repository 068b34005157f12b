use fairitr_core::rng::{RngSeed, Stream};
use fairitr_core::transport::{GroupDistributions, GroupSample};

fn instance(rng: &mut Stream) -> Vec<f64> {
    let n = 1 + rng.below(12) as usize;
    let spread = 1 + rng.below(8);
    let mut v: Vec<f64> = (0..n).map(|_| rng.below(spread) as f64 - 2.0).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn single(values: Vec<f64>) -> GroupDistributions {
    GroupDistributions::from_sorted(vec![GroupSample { label: "g".into(), values }], 0.0, RngSeed(0)).unwrap()
}

/// `(1/n)·#{v < t}` by direct count.
fn count_cdf(values: &[f64], t: f64) -> f64 {
    values.iter().filter(|&&v| v < t).count() as f64 / values.len() as f64
}

/// `inf{y ∈ ℝ : F(y) ≥ u}`. `F` is constant on each gap between distinct
/// values, so the set is `(v, ∞)` or `[v, ∞)` for the first distinct `v`
/// whose right-hand gap already satisfies the bound.
fn inf_quantile(values: &[f64], u: f64) -> f64 {
    if u <= 0.0 {
        return values[0];
    }
    let mut distinct = values.to_vec();
    distinct.dedup();
    for (i, &v) in distinct.iter().enumerate() {
        let right = distinct.get(i + 1).map_or(v + 1.0, |&w| 0.5 * (v + w));
        if count_cdf(values, right) >= u {
            return v;
        }
    }
    unreachable!("u above one")
}

#[test]
fn ecdf_matches_count_on_random_instances() {
    let mut rng = RngSeed(6).stream(0);
    for _ in 0..10_000 {
        let v = instance(&mut rng);
        let d = single(v.clone());
        let t = match rng.below(3) {
            0 => v[rng.below(v.len() as u64) as usize],
            1 => rng.uniform_range(-4.0, 8.0),
            _ => v[rng.below(v.len() as u64) as usize] + 0.5,
        };
        assert_eq!(d.ecdf(0, t).unwrap(), count_cdf(&v, t), "values {v:?} t {t}");
    }
}

#[test]
fn quantile_matches_inf_over_reals_on_random_instances() {
    let mut rng = RngSeed(7).stream(0);
    for _ in 0..10_000 {
        let v = instance(&mut rng);
        let d = single(v.clone());
        let n = v.len() as u64;
        let u = match rng.below(4) {
            0 => rng.below(n + 1) as f64 / n as f64,
            1 => rng.uniform(),
            2 => [0.0, 1.0][rng.below(2) as usize],
            _ => {
                let k = 1 + rng.below(n) as usize;
                count_cdf(&v, v[k - 1])
            }
        };
        assert_eq!(d.quantile(0, u).unwrap(), inf_quantile(&v, u), "values {v:?} u {u}");
    }
}

#[test]
fn quantile_rejects_levels_outside_unit_interval() {
    let d = single(vec![1.0, 2.0, 3.0]);
    for u in [-1e-12, 1.0 + 1e-12, f64::NAN] {
        assert!(d.quantile(0, u).is_err());
    }
    assert!(d.ecdf(1, 0.0).is_err());
}
