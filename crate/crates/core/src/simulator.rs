//! Synthetic preference data with a known answer.
//!
//! A hidden unit direction `u` gives each item the strength `uᵀy`; simulated
//! annotators compare two items through the BT logistic at a chosen
//! sharpness. Adapted queries can then be scored against the Bayes-optimal
//! predictor that uses `u` itself.
//!
//! Generated vectors are rounded to 32-bit precision so that an in-memory
//! population is identical to the same population written to and read back
//! from a PEMB file.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bt::bt_probability;
use crate::dataio::{EmbeddingTable, IndexedPair, PreferenceDataset};
use crate::embedding::{normalize, Embedding};
use crate::error::{Error, Result};
use crate::eval::pairwise_accuracy;
use crate::seed;

pub const DEFAULT_GEN_TEMPERATURE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub u: Embedding,
    pub temperature_gen: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn new(u: Embedding, temperature_gen: f64, seed: u64) -> Result<Self> {
        if !(temperature_gen.is_finite() && temperature_gen > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "generator temperature must be positive, got {temperature_gen}"
            )));
        }
        let u = normalize(u.as_slice())?;
        Ok(Self {
            u,
            temperature_gen,
            seed,
        })
    }

    /// Isotropic random latent direction.
    pub fn random(dim: usize, temperature_gen: f64, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed::derive(seed, &[0x0074_7275_7468]));
        let u = normalize(&gaussian(&mut rng, dim))?;
        Self::new(u, temperature_gen, seed)
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    /// Strength of one item, `uᵀy`.
    pub fn strength(&self, y: &Embedding) -> Result<f64> {
        self.u.dot(y)
    }

    /// Unit query whose cosine with `u` is `alignment` (up to 32-bit rounding).
    pub fn query_with_alignment(&self, alignment: f64, seed: u64) -> Result<Embedding> {
        if !(-1.0..=1.0).contains(&alignment) {
            return Err(Error::OutOfRange(format!("alignment {alignment} outside [-1, 1]")));
        }
        let mut rng = seed::rng(seed);
        let u = self.u.as_slice();
        let orth = loop {
            let mut v = gaussian(&mut rng, u.len());
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            if let Ok(v) = normalize(&v) {
                break v;
            }
        };
        let perp = (1.0 - alignment * alignment).sqrt();
        let x: Vec<f64> = u
            .iter()
            .zip(orth.as_slice())
            .map(|(a, b)| alignment * a + perp * b)
            .collect();
        quantized_unit(&x)
    }
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn quantized_unit(v: &[f64]) -> Result<Embedding> {
    let unit = normalize(v)?;
    Embedding::new(unit.as_slice().iter().map(|&x| f64::from(x as f32)).collect())
}

/// `n` isotropic unit vectors with ids `img-00000`, `img-00001`, ….
pub fn gen_population(dim: usize, n: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim < 2 {
        return Err(Error::OutOfRange(format!("dimension must be at least 2, got {dim}")));
    }
    let mut rng = seed::rng(seed);
    let mut rows = Vec::with_capacity(n);
    while rows.len() < n {
        // A zero Gaussian draw has probability zero; redraw if it happens.
        if let Ok(e) = quantized_unit(&gaussian(&mut rng, dim)) {
            rows.push(e);
        }
    }
    let ids = (0..n).map(|i| format!("img-{i:05}")).collect();
    EmbeddingTable::new(dim, ids, rows)
}

/// Draws `n_pairs` BT-labelled comparisons between distinct uniform items.
pub fn sample_preferences(
    gt: &GroundTruth,
    table: Arc<EmbeddingTable>,
    n_pairs: usize,
    seed: u64,
) -> Result<PreferenceDataset> {
    let n = table.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 items to compare, table has {n}"
        )));
    }
    if table.dim() != gt.dim() {
        return Err(Error::DimensionMismatch {
            expected: gt.dim(),
            found: table.dim(),
        });
    }
    let strengths = table
        .rows()
        .iter()
        .map(|y| gt.strength(y))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seed::rng(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let p = bt_probability(strengths[a], strengths[b], gt.temperature_gen)?;
        let (winner, loser) = if rng.random::<f64>() < p { (a, b) } else { (b, a) };
        pairs.push(IndexedPair {
            winner,
            loser,
            query_id: None,
        });
    }
    PreferenceDataset::new(table, pairs)
}

/// Accuracy of predicting with the latent direction itself.
pub fn oracle_accuracy(gt: &GroundTruth, eval_set: &PreferenceDataset) -> Result<f64> {
    pairwise_accuracy(&gt.u, eval_set)
}

/// Parameters of a complete synthetic experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub dim: usize,
    pub n_items: usize,
    pub n_pairs: usize,
    pub temperature_gen: f64,
    /// Cosine between the starting query and the latent direction.
    pub alignment: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            n_items: 500,
            n_pairs: 3000,
            temperature_gen: DEFAULT_GEN_TEMPERATURE,
            alignment: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: GroundTruth,
    pub table: Arc<EmbeddingTable>,
    pub pool: PreferenceDataset,
    pub query: Embedding,
}

/// Latent direction, population, labelled pool and starting query, each
/// drawn from its own stream derived from `spec.seed`.
pub fn scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    if spec.n_items < 2 {
        return Err(Error::OutOfRange(format!(
            "need at least 2 items, got {}",
            spec.n_items
        )));
    }
    let s = |tag: u64| seed::derive(spec.seed, &[tag]);
    let truth = GroundTruth::random(spec.dim, spec.temperature_gen, s(1))?;
    let table = Arc::new(gen_population(spec.dim, spec.n_items, s(2))?);
    let pool = sample_preferences(&truth, Arc::clone(&table), spec.n_pairs, s(3))?;
    let query = truth.query_with_alignment(spec.alignment, s(4))?;
    Ok(Scenario {
        truth,
        table,
        pool,
        query,
    })
}
