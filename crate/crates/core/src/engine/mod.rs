//! The inference pipeline: order, build, partition, compress, evaluate.

mod compressed;

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::elim_order::elimination_order;
use crate::error::{Error, Result};
use crate::factor::{OpCount, VariableId};
use crate::model::{Evidence, Model, QuerySet};
use crate::partition::{approx_bisimulation, exact_bisimulation, factor_binning_bisimulation, Partition};
use crate::rvelim::{build, build_minibucket, MiniBucketMode, RvElimGraph};
use crate::scalar::Scalar;

pub use compressed::{compress, evaluate_tables, CompressedGraph, CompressedNode, DroppedEdge};

/// Entries further than this from the reference count as incorrect.
pub const INCORRECT_THRESHOLD: f64 = 1e-8;

/// Largest joint state space the brute-force oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathLength {
    Finite(usize),
    Infinite,
}

impl fmt::Display for PathLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathLength::Finite(k) => write!(f, "{k}"),
            PathLength::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for PathLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinite" | "∞" => Ok(PathLength::Infinite),
            _ => s
                .parse()
                .map(PathLength::Finite)
                .map_err(|_| Error::Configuration(format!("path length `{s}` is neither `inf` nor an integer"))),
        }
    }
}

/// Mini-bucket setting: off, an argument-count limit, or a bucket-merge count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiniBuckets {
    #[default]
    Off,
    Args(usize),
    Merge(usize),
}

impl fmt::Display for MiniBuckets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MiniBuckets::Off => f.write_str("off"),
            MiniBuckets::Args(i) => write!(f, "args:{i}"),
            MiniBuckets::Merge(m) => write!(f, "merge:{m}"),
        }
    }
}

impl FromStr for MiniBuckets {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Configuration(format!("mini-bucket mode `{s}` is not off, args:<i> or merge:<m>"));
        if s == "off" {
            return Ok(MiniBuckets::Off);
        }
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        match kind {
            "args" => Ok(MiniBuckets::Args(n)),
            "merge" => Ok(MiniBuckets::Merge(n)),
            _ => Err(bad()),
        }
    }
}

/// The six engine knobs: lifting on/off, path length, binning threshold, and
/// the mini-bucket mode (which folds in its on/off switch, restriction kind
/// and restriction value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub use_bisimulation: bool,
    pub path_length: PathLength,
    pub epsilon: f64,
    pub minibuckets: MiniBuckets,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams::exact()
    }
}

impl EngineParams {
    /// Exact lifted inference.
    pub fn exact() -> Self {
        EngineParams {
            use_bisimulation: true,
            path_length: PathLength::Infinite,
            epsilon: 0.0,
            minibuckets: MiniBuckets::Off,
        }
    }

    /// Ground variable elimination.
    pub fn ground() -> Self {
        EngineParams {
            use_bisimulation: false,
            ..EngineParams::exact()
        }
    }

    pub fn use_minibuckets(&self) -> bool {
        self.minibuckets != MiniBuckets::Off
    }

    /// Whether the mini-bucket restriction counts arguments (else merged buckets).
    pub fn arg_count_restriction(&self) -> bool {
        matches!(self.minibuckets, MiniBuckets::Args(_))
    }

    pub fn minibucket_restriction(&self) -> Option<usize> {
        match self.minibuckets {
            MiniBuckets::Off => None,
            MiniBuckets::Args(n) | MiniBuckets::Merge(n) => Some(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Configuration(format!("epsilon {} must be a non-negative real", self.epsilon)));
        }
        if self.epsilon > 0.0 && !self.use_bisimulation {
            return Err(Error::Configuration("epsilon > 0 requires lifting".into()));
        }
        if self.epsilon > 0.0 && self.path_length != PathLength::Infinite {
            return Err(Error::Configuration(
                "factor binning runs on exact bisimulation; use an infinite path length with epsilon > 0".into(),
            ));
        }
        match self.minibuckets {
            MiniBuckets::Args(0) | MiniBuckets::Merge(0) => {
                Err(Error::Configuration("mini-bucket restriction must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether results are exact marginals (no approximation anywhere).
    pub fn is_exact(&self) -> bool {
        !self.use_minibuckets()
            && (!self.use_bisimulation || (self.path_length == PathLength::Infinite && self.epsilon == 0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marginal<T> {
    pub var: VariableId,
    pub unnormalized: Vec<T>,
    pub probabilities: Vec<T>,
}

impl<T: Scalar> Marginal<T> {
    /// Normalizes `unnormalized` by its own total.
    pub fn new(var: VariableId, unnormalized: Vec<T>) -> Result<Self> {
        let total = unnormalized.iter().fold(T::zero(), |a, &x| a + x);
        if !(total > T::zero()) {
            return Err(Error::ZeroMass(var));
        }
        let probabilities = unnormalized.iter().map(|&x| x / total).collect();
        Ok(Marginal {
            var,
            unnormalized,
            probabilities,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub wall_ms: f64,
    pub mults: u64,
    pub adds: u64,
    pub intermediate_factors: usize,
    pub blocks: usize,
    pub vertices: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult<T> {
    /// In query order.
    pub marginals: Vec<Marginal<T>>,
    /// Partition function, the total mass of any unnormalized marginal; exact modes only.
    pub z: Option<T>,
    pub stats: Stats,
}

impl<T: Scalar> InferenceResult<T> {
    pub fn marginal(&self, var: VariableId) -> Option<&Marginal<T>> {
        self.marginals.iter().find(|m| m.var == var)
    }

    /// One line per query: `var cardinality p_0 ... p_{k-1}`, 17 significant digits.
    pub fn format_marginals(&self) -> String {
        let mut out = String::new();
        for m in &self.marginals {
            let _ = write!(out, "{} {}", m.var, m.probabilities.len());
            for p in &m.probabilities {
                let _ = write!(out, " {:.16e}", p.to_f64().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }
}

fn leaf_marginals<T: Scalar>(
    queries: &QuerySet,
    leaf_table: impl Fn(VariableId) -> Result<Vec<T>>,
) -> Result<(Vec<Marginal<T>>, T)> {
    let mut marginals = Vec::with_capacity(queries.len());
    for &q in queries.vars() {
        marginals.push(Marginal::new(q, leaf_table(q)?)?);
    }
    let z = marginals
        .first()
        .map(|m| m.unnormalized.iter().fold(T::zero(), |a, &x| a + x))
        .unwrap_or_else(T::one);
    Ok((marginals, z))
}

/// Evaluates the compressed graph of `(g, p)` and reads every query leaf.
pub fn evaluate<T: Scalar>(
    g: &RvElimGraph,
    p: &Partition,
    model: &Model<T>,
    queries: &QuerySet,
) -> Result<InferenceResult<T>> {
    let start = Instant::now();
    let cg = compress(g, p)?;
    let mut ops = OpCount::default();
    let tables = evaluate_tables(&cg, g, p, model, &mut ops)?;
    let (marginals, z) = leaf_marginals(queries, |q| {
        let node = *cg
            .leaves
            .get(&q)
            .ok_or_else(|| Error::QueryMismatch(format!("no marginal leaf for variable {q}")))?;
        Ok(tables[node].as_ref().expect("all nodes evaluated").values().to_vec())
    })?;
    Ok(InferenceResult {
        marginals,
        z: Some(z),
        stats: Stats {
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            mults: ops.mults,
            adds: ops.adds,
            intermediate_factors: cg.num_internal(),
            blocks: cg.len(),
            vertices: g.len(),
        },
    })
}

/// Ground variable elimination over the whole graph.
pub fn ground_evaluate<T: Scalar>(g: &RvElimGraph, model: &Model<T>, queries: &QuerySet) -> Result<InferenceResult<T>> {
    evaluate(g, &Partition::identity(g), model, queries)
}

/// Reference marginals by enumerating every joint assignment of the free variables.
pub fn brute_force_marginals<T: Scalar>(model: &Model<T>, queries: &QuerySet) -> Result<Vec<Marginal<T>>> {
    model.check_queries(queries)?;
    let size = model.state_space();
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let free: Vec<VariableId> = model.free_variables().collect();
    let mut assignment = vec![0usize; model.num_variables()];
    for (&v, &x) in model.observed() {
        assignment[v.0] = x;
    }
    let mut mass: Vec<Vec<T>> = queries
        .vars()
        .iter()
        .map(|&q| vec![T::zero(); model.cardinality(q)])
        .collect();
    loop {
        let w = model.weight(&assignment);
        for (acc, &q) in mass.iter_mut().zip(queries.vars()) {
            acc[assignment[q.0]] += w;
        }
        let mut k = free.len();
        loop {
            if k == 0 {
                return queries.vars().iter().zip(mass).map(|(&q, m)| Marginal::new(q, m)).collect();
            }
            k -= 1;
            let v = free[k].0;
            assignment[v] += 1;
            if assignment[v] < model.cardinality(free[k]) {
                break;
            }
            assignment[v] = 0;
        }
    }
}

/// Count of marginal entries beyond `INCORRECT_THRESHOLD` of the reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub incorrect: usize,
    pub total: usize,
    pub fraction: f64,
    pub max_abs_error: f64,
}

/// Compares stored probabilities entry by entry.
pub fn compare<T: Scalar>(result: &[Marginal<T>], reference: &[Marginal<T>]) -> Result<ErrorReport> {
    if result.len() != reference.len() {
        return Err(Error::QueryMismatch(format!(
            "{} marginals against {} reference marginals",
            result.len(),
            reference.len()
        )));
    }
    let mut incorrect = 0;
    let mut total = 0;
    let mut max_abs_error = 0.0f64;
    for (r, e) in result.iter().zip(reference) {
        if r.var != e.var || r.probabilities.len() != e.probabilities.len() {
            return Err(Error::QueryMismatch(format!("variable {} against {}", r.var, e.var)));
        }
        for (&a, &b) in r.probabilities.iter().zip(&e.probabilities) {
            let d = (a - b).abs().to_f64().unwrap_or(f64::INFINITY);
            total += 1;
            if !(d <= INCORRECT_THRESHOLD) {
                incorrect += 1;
            }
            max_abs_error = max_abs_error.max(d);
        }
    }
    Ok(ErrorReport {
        incorrect,
        total,
        fraction: if total == 0 { 0.0 } else { incorrect as f64 / total as f64 },
        max_abs_error,
    })
}

/// Everything the pipeline produced, for inspection and debugging.
#[derive(Clone, Debug)]
pub struct RunArtifacts<T> {
    pub model: Model<T>,
    pub order: Vec<VariableId>,
    pub graph: RvElimGraph,
    pub partition: Partition,
    pub result: InferenceResult<T>,
}

/// Runs the whole pipeline. An explicit `order` replaces the computed one;
/// observed variables in it are skipped.
pub fn run<T: Scalar>(
    model: &Model<T>,
    queries: &QuerySet,
    evidence: &Evidence,
    params: &EngineParams,
    order: Option<&[VariableId]>,
) -> Result<InferenceResult<T>> {
    run_detailed(model, queries, evidence, params, order).map(|a| a.result)
}

pub fn run_detailed<T: Scalar>(
    model: &Model<T>,
    queries: &QuerySet,
    evidence: &Evidence,
    params: &EngineParams,
    order: Option<&[VariableId]>,
) -> Result<RunArtifacts<T>> {
    params.validate()?;
    let model = model.apply_evidence(evidence, queries)?;
    let start = Instant::now();
    let order: Vec<VariableId> = match order {
        Some(o) => o.iter().copied().filter(|&v| !model.is_observed(v)).collect(),
        None => elimination_order(&model, queries),
    };
    let graph = match params.minibuckets {
        MiniBuckets::Off => build(&model, &order, queries)?,
        MiniBuckets::Args(i) => build_minibucket(&model, &order, queries, MiniBucketMode::Args(i))?,
        MiniBuckets::Merge(m) => build_minibucket(&model, &order, queries, MiniBucketMode::Merge(m))?,
    };

    let (partition, mut result) = if params.use_bisimulation && params.epsilon > 0.0 {
        let eps = T::from_f64(params.epsilon)
            .ok_or_else(|| Error::Configuration(format!("epsilon {} not representable", params.epsilon)))?;
        let binned = factor_binning_bisimulation(&graph, &model, eps, |a, b| a.rms_distance(b))?;
        let p = binned.partition;
        let cg = compress(&graph, &p)?;
        let (marginals, z) = leaf_marginals(queries, |q| {
            let node = *cg
                .leaves
                .get(&q)
                .ok_or_else(|| Error::QueryMismatch(format!("no marginal leaf for variable {q}")))?;
            Ok(binned.tables[node].values().to_vec())
        })?;
        let result = InferenceResult {
            marginals,
            z: Some(z),
            stats: Stats {
                wall_ms: 0.0,
                mults: binned.ops.mults,
                adds: binned.ops.adds,
                intermediate_factors: cg.num_internal(),
                blocks: cg.len(),
                vertices: graph.len(),
            },
        };
        (p, result)
    } else {
        let p = if !params.use_bisimulation {
            Partition::identity(&graph)
        } else {
            match params.path_length {
                PathLength::Infinite => exact_bisimulation(&graph),
                PathLength::Finite(k) => approx_bisimulation(&graph, k),
            }
        };
        let result = evaluate(&graph, &p, &model, queries)?;
        (p, result)
    };
    result.stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    if !params.is_exact() {
        result.z = None;
    }
    Ok(RunArtifacts {
        model,
        order,
        graph,
        partition,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::fig1;
    use crate::rvelim::tests::{figure_fixture, v};

    fn fig1_queries() -> QuerySet {
        QuerySet::new(vec![v(4), v(5), v(6)]).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn brute_force_on_running_example() {
        let m = fig1();
        let r = brute_force_marginals(&m, &fig1_queries()).unwrap();
        assert!(close(&r[0].probabilities, &[0.4, 0.6]));
        assert!(close(&r[1].probabilities, &[0.4, 0.6]));
        assert!(close(&r[2].probabilities, &[0.3, 0.7]));
        // P(i_j = true) = P(s_j = true) P(t1 = true)
        assert!((r[0].probabilities[0] - 0.8 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn brute_force_single_uniform_variable() {
        let f = crate::factor::Factor::new(vec![v(0)], vec![2], vec![1.0, 1.0]).unwrap();
        let m = Model::new(vec![2], vec![f]).unwrap();
        let r = brute_force_marginals(&m, &QuerySet::new(vec![v(0)]).unwrap()).unwrap();
        assert_eq!(r[0].probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn brute_force_with_evidence_is_conditional() {
        let m = fig1();
        let q = QuerySet::new(vec![v(4)]).unwrap();
        let e: Evidence = [(v(3), 0)].into_iter().collect();
        let r = brute_force_marginals(&m.apply_evidence(&e, &q).unwrap(), &q).unwrap();
        // t1 = true: i1 <=> s1
        assert!(close(&r[0].probabilities, &[0.8, 0.2]));
    }

    #[test]
    fn exact_pipeline_on_running_example() {
        let m = fig1();
        let q = fig1_queries();
        let r = run(&m, &q, &Evidence::new(), &EngineParams::exact(), None).unwrap();
        assert!(close(&r.marginals[0].probabilities, &[0.4, 0.6]));
        assert!(close(&r.marginals[2].probabilities, &[0.3, 0.7]));
        assert!(close(&r.marginals[0].unnormalized, &[0.4, 0.6]));
        assert!((r.z.unwrap() - 1.0).abs() < 1e-12);
        let ground = run(&m, &q, &Evidence::new(), &EngineParams::ground(), None).unwrap();
        for (a, b) in r.marginals.iter().zip(&ground.marginals) {
            assert_eq!(a.unnormalized, b.unnormalized);
        }
        assert!(ground.stats.mults >= r.stats.mults);
        assert!(ground.stats.intermediate_factors > r.stats.intermediate_factors);
    }

    #[test]
    fn fixture_path_length_one_misreports_i3() {
        let (m, g) = figure_fixture();
        let q = fig1_queries();
        let p = approx_bisimulation(&g, 1);
        let r = evaluate(&g, &p, &m, &q).unwrap();
        assert!(close(&r.marginals[0].probabilities, &[0.4, 0.6]));
        assert!(close(&r.marginals[1].probabilities, &[0.4, 0.6]));
        assert!(close(&r.marginals[2].probabilities, &[0.4, 0.6]));
        let truth = brute_force_marginals(&m, &q).unwrap();
        let report = compare(&r.marginals, &truth).unwrap();
        assert_eq!(report.incorrect, 2);
        let exact = evaluate(&g, &exact_bisimulation(&g), &m, &q).unwrap();
        assert_eq!(compare(&exact.marginals, &truth).unwrap().incorrect, 0);
        assert_eq!(exact.stats.blocks, 8);
    }

    #[test]
    fn ground_counts_one_factor_per_elimination() {
        let (m, g) = figure_fixture();
        let r = ground_evaluate(&g, &m, &fig1_queries()).unwrap();
        assert_eq!(r.stats.intermediate_factors, g.num_internal());
        assert_eq!(r.stats.blocks, g.len());
    }

    #[test]
    fn compare_threshold_semantics() {
        let m = fig1();
        let truth = brute_force_marginals(&m, &fig1_queries()).unwrap();
        let same = compare(&truth, &truth).unwrap();
        assert_eq!((same.incorrect, same.total), (0, 6));
        let mut off = truth.clone();
        off[1].probabilities[0] += 1e-6;
        assert_eq!(compare(&off, &truth).unwrap().incorrect, 1);
        let renormalized = Marginal::new(v(5), vec![0.4 + 1e-6, 0.6]).unwrap();
        off[1] = renormalized;
        assert_eq!(compare(&off, &truth).unwrap().incorrect, 2);
        let mut tiny = truth.clone();
        tiny[0].probabilities[0] += 5e-9;
        assert_eq!(compare(&tiny, &truth).unwrap().incorrect, 0);
        assert!(compare(&truth[..2], &truth).is_err());
    }

    #[test]
    fn params_validation_and_parsing() {
        assert!(EngineParams::exact().validate().is_ok());
        let bad = EngineParams {
            epsilon: 0.1,
            ..EngineParams::ground()
        };
        assert!(bad.validate().is_err());
        let finite = EngineParams {
            epsilon: 0.1,
            path_length: PathLength::Finite(2),
            ..EngineParams::exact()
        };
        assert!(finite.validate().is_err());
        assert_eq!("inf".parse::<PathLength>().unwrap(), PathLength::Infinite);
        assert_eq!("3".parse::<PathLength>().unwrap(), PathLength::Finite(3));
        assert_eq!("args:4".parse::<MiniBuckets>().unwrap(), MiniBuckets::Args(4));
        assert_eq!("merge:2".parse::<MiniBuckets>().unwrap(), MiniBuckets::Merge(2));
        assert!("args:x".parse::<MiniBuckets>().is_err());
        let mb = EngineParams {
            minibuckets: MiniBuckets::Merge(2),
            ..EngineParams::exact()
        };
        assert!(mb.use_minibuckets() && !mb.arg_count_restriction());
        assert_eq!(mb.minibucket_restriction(), Some(2));
    }

    #[test]
    fn binning_on_running_example() {
        let m = fig1();
        let q = fig1_queries();
        let params = EngineParams {
            epsilon: 0.25,
            ..EngineParams::exact()
        };
        let r = run(&m, &q, &Evidence::new(), &params, None).unwrap();
        assert_eq!(r.marginals[0].probabilities, r.marginals[2].probabilities);
        assert_eq!(r.marginals[1].probabilities, r.marginals[2].probabilities);
        assert!(r.z.is_none());
    }

    #[test]
    fn marginal_output_format() {
        let m = fig1();
        let r = run(&m, &fig1_queries(), &Evidence::new(), &EngineParams::exact(), None).unwrap();
        let text = r.format_marginals();
        let first = text.lines().next().unwrap();
        let fields: Vec<&str> = first.split(' ').collect();
        assert_eq!(fields[..2], ["4", "2"]);
        assert_eq!(fields[2].parse::<f64>().unwrap(), r.marginals[0].probabilities[0]);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn deterministic_results() {
        let m = fig1();
        let q = fig1_queries();
        let a = run(&m, &q, &Evidence::new(), &EngineParams::exact(), None).unwrap();
        let b = run(&m, &q, &Evidence::new(), &EngineParams::exact(), None).unwrap();
        assert_eq!(a.marginals, b.marginals);
        assert_eq!((a.stats.mults, a.stats.adds), (b.stats.mults, b.stats.adds));
    }
}
