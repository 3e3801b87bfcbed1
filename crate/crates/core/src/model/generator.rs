//! Layered synthetic Bayesian networks with controllable symmetry.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `GeneratorConfig::seed`, so a
//! configuration maps to the same model on every platform. Distributions are
//! drawn uniformly from the probability simplex (one draw per conditioning row);
//! noise is zero-mean Gaussian per table entry, clamped at zero.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{Factor, VariableId};
use crate::model::{Model, QuerySet};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub layer_sizes: Vec<usize>,
    pub domain_size: usize,
    pub parents_per_child: usize,
    /// Consecutive first-layer variables in one group share a prior table.
    pub prior_share_period: usize,
    /// How many children a single variable may parent.
    pub max_parent_fanout: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            layer_sizes: vec![1000, 500, 250],
            domain_size: 30,
            parents_per_child: 2,
            prior_share_period: 25,
            max_parent_fanout: usize::MAX,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Generation(m));
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return bad("layer sizes must be nonempty and positive".into());
        }
        if self.domain_size == 0 || self.parents_per_child == 0 {
            return bad("domain size and parents per child must be positive".into());
        }
        if self.prior_share_period == 0 || self.max_parent_fanout == 0 {
            return bad("prior share period and parent fanout must be positive".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise std {} must be a non-negative real", self.noise_std));
        }
        for w in self.layer_sizes.windows(2) {
            let (prev, cur) = (w[0], w[1]);
            if self.parents_per_child > prev {
                return bad(format!(
                    "{} parents per child exceed the previous layer size {prev}",
                    self.parents_per_child
                ));
            }
            let slots = prev.saturating_mul(self.max_parent_fanout);
            if cur.saturating_mul(self.parents_per_child) > slots {
                return bad(format!(
                    "{cur} children x {} parents need more than {prev} x {} parent slots",
                    self.parents_per_child, self.max_parent_fanout
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedModel<T> {
    pub model: Model<T>,
    pub queries: QuerySet,
    /// Variable index range of each layer.
    pub layers: Vec<Range<usize>>,
}

impl<T: Scalar> GeneratedModel<T> {
    /// Number of pairwise-distinct prior tables in the first layer.
    pub fn distinct_priors(&self) -> usize {
        let priors = &self.model.factors()[..self.layers[0].len()];
        distinct_count(priors)
    }

    /// Distinct CPT tables per layer after the first.
    pub fn distinct_cpts_per_layer(&self) -> Vec<usize> {
        let mut start = self.layers[0].len();
        let mut out = Vec::new();
        for layer in &self.layers[1..] {
            let fs = &self.model.factors()[start..start + layer.len()];
            out.push(distinct_count(fs));
            start += layer.len();
        }
        out
    }
}

fn distinct_count<T: Scalar>(fs: &[Factor<T>]) -> usize {
    let mut reps: Vec<&Factor<T>> = Vec::new();
    for f in fs {
        if !reps.iter().any(|r| r.is_shared(f)) {
            reps.push(f);
        }
    }
    reps.len()
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|d| d / total).collect();
        }
    }
}

/// Table over (child, parents...) where each parent configuration carries its
/// own distribution over the child.
fn conditional_table(rng: &mut ChaCha8Rng, domain: usize, parents: usize) -> Vec<f64> {
    let rows = domain.pow(parents as u32);
    let dists: Vec<Vec<f64>> = (0..rows).map(|_| simplex(rng, domain)).collect();
    let mut table = vec![0.0; domain * rows];
    for (r, d) in dists.iter().enumerate() {
        for (c, &p) in d.iter().enumerate() {
            table[c * rows + r] = p;
        }
    }
    table
}

pub fn generate_layered_bn<T: Scalar>(cfg: &GeneratorConfig) -> Result<GeneratedModel<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.domain_size;

    let mut layers = Vec::new();
    let mut next = 0;
    for &size in &cfg.layer_sizes {
        layers.push(next..next + size);
        next += size;
    }
    let n = next;

    let mut tables: Vec<(Vec<VariableId>, Vec<f64>)> = Vec::new();

    let first = layers[0].clone();
    let mut group_table = Vec::new();
    for (p, v) in first.enumerate() {
        if p % cfg.prior_share_period == 0 {
            group_table = simplex(&mut rng, d);
        }
        tables.push((vec![VariableId(v)], group_table.clone()));
    }

    for w in layers.windows(2) {
        let (prev, cur) = (w[0].clone(), w[1].clone());
        let cpt = conditional_table(&mut rng, d, cfg.parents_per_child);
        let mut uses = vec![0usize; prev.len()];
        for child in cur {
            let available: Vec<usize> = (0..prev.len())
                .filter(|&i| uses[i] < cfg.max_parent_fanout)
                .collect();
            if available.len() < cfg.parents_per_child {
                return Err(Error::Generation(format!(
                    "variable {child}: only {} parents left with spare fanout",
                    available.len()
                )));
            }
            let mut scope = vec![VariableId(child)];
            for pick in rand::seq::index::sample(&mut rng, available.len(), cfg.parents_per_child) {
                let parent = available[pick];
                uses[parent] += 1;
                scope.push(VariableId(prev.start + parent));
            }
            tables.push((scope, cpt.clone()));
        }
    }

    if cfg.noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std)
            .map_err(|e| Error::Generation(format!("noise distribution: {e}")))?;
        for (_, values) in &mut tables {
            for x in values.iter_mut() {
                *x = (*x + normal.sample(&mut rng)).max(0.0);
            }
        }
    }

    let mut factors = Vec::with_capacity(tables.len());
    for (scope, values) in tables {
        let shape = vec![d; scope.len()];
        let values = values
            .into_iter()
            .map(|x| T::from_f64(x).expect("probabilities are representable"))
            .collect();
        factors.push(Factor::new(scope, shape, values)?);
    }
    let model = Model::new(vec![d; n], factors)?;
    let last = layers.last().expect("at least one layer").clone();
    let queries = QuerySet::new(last.map(VariableId).collect())?;
    Ok(GeneratedModel {
        model,
        queries,
        layers,
    })
}
