//! Shared fixtures: the running example, its hand-built rv-elim graph, and a
//! corpus of small random models with deliberate table sharing.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvlift::rvelim::{GraphBuilder, RvElimGraph};
use rvlift::{ElimOp, Factor, Model, QuerySet, VariableId};

pub const FIG1: &str = "\
MARKOV
7
2 2 2 2 2 2 2
7
1 0
1 1
1 2
1 3
3 4 0 3
3 5 1 3
3 6 2 3
2 0.8 0.2
2 0.8 0.2
2 0.6 0.4
2 0.5 0.5
8 1 0 0 0 0 1 1 1
8 1 0 0 0 0 1 1 1
8 1 0 0 0 0 1 1 1
";

pub fn v(i: usize) -> VariableId {
    VariableId(i)
}

/// s1=0 s2=1 s3=2 t1=3 i1=4 i2=5 i3=6.
pub fn fig1() -> Model<f64> {
    rvlift::model::load_model(FIG1.as_bytes()).unwrap()
}

pub fn fig1_queries() -> QuerySet {
    QuerySet::new(vec![v(4), v(5), v(6)]).unwrap()
}

/// Roots 0..7 are the running example's factors, 7..10 are m_sj = (f_sj, f_ij; s_j)
/// and 10..13 are mu_ij = (m_sj, f_t1; t1), the marginal leaves.
pub fn figure_fixture() -> (Model<f64>, RvElimGraph) {
    let model = fig1();
    let mut b = GraphBuilder::new(&model);
    for i in 0..7 {
        b.add_root(i);
    }
    for j in 0..3 {
        b.add_internal(vec![j, 4 + j], Some(v(j)), ElimOp::Sum).unwrap();
    }
    for j in 0..3 {
        let mu = b.add_internal(vec![7 + j, 3], Some(v(3)), ElimOp::Sum).unwrap();
        b.mark_leaf(mu, v(4 + j)).unwrap();
    }
    let g = b.finish();
    (model, g)
}

pub struct Case {
    pub model: Model<f64>,
    pub queries: QuerySet,
    pub order: Vec<VariableId>,
}

/// A random model whose joint state space is at most `max_states`. Tables
/// are drawn from a small per-shape pool so that sharing is common.
pub fn random_case(rng: &mut ChaCha8Rng, max_states: u64) -> Case {
    loop {
        let n = rng.random_range(2..=8);
        let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
        let states: u64 = cards.iter().map(|&c| c as u64).product();
        if states > max_states {
            continue;
        }
        let mut pool: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        let mut factors = Vec::new();
        let extra = rng.random_range(0..=n);
        for k in 0..n + extra {
            let anchor = if k < n { k } else { rng.random_range(0..n) };
            let arity = rng.random_range(1..=3.min(n));
            let mut scope = vec![anchor];
            while scope.len() < arity {
                let x = rng.random_range(0..n);
                if !scope.contains(&x) {
                    scope.push(x);
                }
            }
            scope.shuffle(rng);
            let shape: Vec<usize> = scope.iter().map(|&x| cards[x]).collect();
            let len: usize = shape.iter().product();
            let reuse: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].0 == shape).collect();
            let values = if !reuse.is_empty() && rng.random_bool(0.7) {
                pool[reuse[rng.random_range(0..reuse.len())]].1.clone()
            } else {
                let t: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
                pool.push((shape.clone(), t.clone()));
                t
            };
            factors.push(Factor::new(scope.into_iter().map(VariableId).collect(), shape, values).unwrap());
        }
        let model = Model::new(cards, factors).unwrap();
        let mut vars: Vec<VariableId> = (0..n).map(VariableId).collect();
        vars.shuffle(rng);
        let nq = rng.random_range(1..=3.min(n));
        let queries = QuerySet::new(vars[..nq].to_vec()).unwrap();
        let order = vars[nq..].to_vec();
        return Case { model, queries, order };
    }
}

pub fn corpus(count: usize, seed: u64, max_states: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_case(&mut rng, max_states)).collect()
}

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}
