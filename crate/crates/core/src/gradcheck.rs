//! Analytic-vs-numeric gradient comparison over random instances.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bt::{batch_gradient, finite_diff_grad, AdaptConfig, PreferencePair};
use crate::embedding::{normalize, Embedding};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold on the relative error.
pub const MAX_RELATIVE_ERROR: f64 = 1e-6;
/// Upper bound on pairs per random instance.
pub const MAX_PAIRS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_relative_error: f64,
    pub worst_trial: usize,
    pub passed: bool,
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are ~0.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(e) = normalize(&v) {
            return e;
        }
    }
}

/// Relative error of one seeded instance: unit query, 1..=8 unit-vector pairs.
pub fn trial_error(dim: usize, cfg: &AdaptConfig, trial_seed: u64) -> Result<f64> {
    let mut rng = seed::rng(trial_seed);
    let x = random_unit(&mut rng, dim);
    let n_pairs = rng.random_range(1..=MAX_PAIRS);
    let items: Vec<Embedding> = (0..2 * n_pairs).map(|_| random_unit(&mut rng, dim)).collect();
    let pairs: Vec<PreferencePair<'_>> = items
        .chunks_exact(2)
        .map(|c| PreferencePair::new(&c[0], &c[1]))
        .collect::<Result<_>>()?;
    let analytic = batch_gradient(&x, &pairs, cfg)?;
    let numeric = finite_diff_grad(&x, &pairs, cfg, FD_STEP)?;
    Ok(relative_error(&analytic, &numeric))
}

pub fn run_gradcheck(
    dim: usize,
    trials: usize,
    seed: u64,
    cfg: &AdaptConfig,
    execution: Execution,
) -> Result<GradcheckReport> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::OutOfRange("trials must be at least 1".into()));
    }
    if dim == 0 {
        return Err(Error::OutOfRange("dimension must be at least 1".into()));
    }
    let errors = execution.try_map(trials, |t| {
        trial_error(dim, cfg, seed::derive(seed, &[dim as u64, t as u64]))
    })?;
    let (worst_trial, max_relative_error) =
        errors
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradcheckReport {
        dim,
        trials,
        seed,
        max_relative_error,
        worst_trial,
        passed: max_relative_error < MAX_RELATIVE_ERROR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[2.0, 0.0], &[1.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_dims_pass() {
        for dim in [2, 16] {
            let r = run_gradcheck(dim, 50, 3, &AdaptConfig::default(), Execution::Sequential).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run_gradcheck(2, 0, 0, &AdaptConfig::default(), Execution::Sequential).is_err());
    }
}
