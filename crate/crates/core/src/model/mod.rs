//! Model container, evidence conditioning, and the query set.

mod generator;
mod io;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::factor::{Factor, VariableId};
use crate::scalar::Scalar;

pub use generator::{generate_layered_bn, GeneratedModel, GeneratorConfig};
pub use io::{load_model, parse_evidence, parse_order, parse_queries, save_model, write_model};

/// Factors over discrete variables; the unnormalized joint is their product.
///
/// Variables that have been observed keep their index but no longer appear in
/// any factor scope.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    cardinalities: Vec<usize>,
    factors: Vec<Factor<T>>,
    observed: BTreeMap<VariableId, usize>,
}

/// Ordered, duplicate-free set of variables whose marginals are wanted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QuerySet(Vec<VariableId>);

impl QuerySet {
    pub fn new(vars: Vec<VariableId>) -> Result<Self> {
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(Error::InvalidModel(format!("variable {v} queried twice")));
            }
        }
        Ok(QuerySet(vars))
    }

    pub fn vars(&self) -> &[VariableId] {
        &self.0
    }

    pub fn contains(&self, v: VariableId) -> bool {
        self.0.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Observed values, keyed by variable.
pub type Evidence = BTreeMap<VariableId, usize>;

impl<T: Scalar> Model<T> {
    pub fn new(cardinalities: Vec<usize>, factors: Vec<Factor<T>>) -> Result<Self> {
        let model = Model {
            cardinalities,
            factors,
            observed: BTreeMap::new(),
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::InvalidModel("model has no factors".into()));
        }
        if let Some(v) = self.cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::InvalidModel(format!("variable {v} has cardinality 0")));
        }
        let mut mentioned = vec![false; self.cardinalities.len()];
        for (i, f) in self.factors.iter().enumerate() {
            for (&v, &c) in f.scope().iter().zip(f.shape()) {
                let Some(&card) = self.cardinalities.get(v.0) else {
                    return Err(Error::FactorShape {
                        factor: i,
                        message: format!("variable {v} does not exist"),
                    });
                };
                if card != c {
                    return Err(Error::FactorShape {
                        factor: i,
                        message: format!("variable {v} has cardinality {card}, table uses {c}"),
                    });
                }
                if self.observed.contains_key(&v) {
                    return Err(Error::FactorShape {
                        factor: i,
                        message: format!("observed variable {v} still in scope"),
                    });
                }
                mentioned[v.0] = true;
            }
        }
        for (v, m) in mentioned.iter().enumerate() {
            if !m && !self.observed.contains_key(&VariableId(v)) {
                return Err(Error::InvalidModel(format!(
                    "variable {v} is not mentioned by any factor"
                )));
            }
        }
        Ok(())
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, v: VariableId) -> usize {
        self.cardinalities[v.0]
    }

    pub fn num_variables(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn factors(&self) -> &[Factor<T>] {
        &self.factors
    }

    pub fn observed(&self) -> &BTreeMap<VariableId, usize> {
        &self.observed
    }

    pub fn is_observed(&self, v: VariableId) -> bool {
        self.observed.contains_key(&v)
    }

    /// Variables still free, i.e. not absorbed as evidence.
    pub fn free_variables(&self) -> impl Iterator<Item = VariableId> + '_ {
        (0..self.cardinalities.len())
            .map(VariableId)
            .filter(|v| !self.observed.contains_key(v))
    }

    /// Checks that `queries` names existing, unobserved variables.
    pub fn check_queries(&self, queries: &QuerySet) -> Result<()> {
        for &q in queries.vars() {
            if q.0 >= self.cardinalities.len() {
                return Err(Error::InvalidModel(format!("query variable {q} does not exist")));
            }
            if self.is_observed(q) {
                return Err(Error::EvidenceConflict(q));
            }
        }
        Ok(())
    }

    /// Conditions the model on `evidence` by slicing every factor that mentions
    /// an observed variable.
    pub fn apply_evidence(&self, evidence: &Evidence, queries: &QuerySet) -> Result<Model<T>> {
        for (&v, &value) in evidence {
            let Some(&card) = self.cardinalities.get(v.0) else {
                return Err(Error::InvalidModel(format!("evidence variable {v} does not exist")));
            };
            if queries.contains(v) {
                return Err(Error::EvidenceConflict(v));
            }
            if value >= card {
                return Err(Error::Domain {
                    var: v,
                    value,
                    cardinality: card,
                });
            }
            if let Some(&prev) = self.observed.get(&v) {
                if prev != value {
                    return Err(Error::InvalidModel(format!(
                        "variable {v} already observed with value {prev}"
                    )));
                }
            }
        }
        let mut factors = Vec::with_capacity(self.factors.len());
        for f in &self.factors {
            let mut g = f.clone();
            for &v in f.scope() {
                if let Some(&value) = evidence.get(&v) {
                    g = g.reduce(v, value)?;
                }
            }
            factors.push(g);
        }
        let mut observed = self.observed.clone();
        observed.extend(evidence.iter().map(|(&k, &v)| (k, v)));
        let model = Model {
            cardinalities: self.cardinalities.clone(),
            factors,
            observed,
        };
        model.validate()?;
        model.check_queries(queries)?;
        Ok(model)
    }

    /// Unnormalized probability of a full assignment (indexed by variable;
    /// observed entries are ignored).
    pub fn weight(&self, assignment: &[usize]) -> T {
        let mut w = T::one();
        let mut buf = Vec::new();
        for f in &self.factors {
            buf.clear();
            buf.extend(f.scope().iter().map(|v| assignment[v.0]));
            w *= f.value_at(&buf);
        }
        w
    }

    /// Joint state-space size over free variables.
    pub fn state_space(&self) -> u128 {
        self.free_variables()
            .map(|v| self.cardinalities[v.0] as u128)
            .fold(1u128, |a, c| a.saturating_mul(c))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Priors 0.8/0.8/0.6/0.5 on s1,s2,s3,t1 and deterministic AND factors
    /// i_j <=> s_j & t1. Variables: s1=0 s2=1 s3=2 t1=3 i1=4 i2=5 i3=6.
    pub(crate) const FIG1: &str = "\
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

    pub(crate) fn fig1() -> Model<f64> {
        load_model(FIG1.as_bytes()).unwrap()
    }

    #[test]
    fn fig1_parses() {
        let m = fig1();
        assert_eq!(m.num_variables(), 7);
        assert!(m.cardinalities().iter().all(|&c| c == 2));
        assert_eq!(m.factors().len(), 7);
    }

    #[test]
    fn evidence_slices_and_factors() {
        let m = fig1();
        let q = QuerySet::new(vec![VariableId(4), VariableId(5), VariableId(6)]).unwrap();
        let e: Evidence = [(VariableId(3), 0)].into_iter().collect();
        let r = m.apply_evidence(&e, &q).unwrap();
        for j in 0..3 {
            let f = &r.factors()[4 + j];
            assert_eq!(f.scope(), &[VariableId(4 + j), VariableId(j)]);
            // t1 = true: i <=> s
            assert_eq!(f.values(), &[1.0, 0.0, 0.0, 1.0]);
        }
        assert!(r.factors()[3].scope().is_empty());
        assert!(r.is_observed(VariableId(3)));
        assert_eq!(r.free_variables().count(), 6);
    }

    #[test]
    fn empty_evidence_is_identity() {
        let m = fig1();
        let q = QuerySet::new(vec![VariableId(4)]).unwrap();
        assert_eq!(m.apply_evidence(&Evidence::new(), &q).unwrap(), m);
    }

    #[test]
    fn evidence_on_everything_but_queries() {
        let m = fig1();
        let queries: Vec<_> = (4..7).map(VariableId).collect();
        let q = QuerySet::new(queries.clone()).unwrap();
        let e: Evidence = (0..4).map(|v| (VariableId(v), 1)).collect();
        let r = m.apply_evidence(&e, &q).unwrap();
        for f in r.factors() {
            assert!(f.scope().iter().all(|v| queries.contains(v)));
        }
    }

    #[test]
    fn evidence_conflicts_with_query() {
        let m = fig1();
        let q = QuerySet::new(vec![VariableId(4)]).unwrap();
        let e: Evidence = [(VariableId(4), 0)].into_iter().collect();
        assert!(matches!(m.apply_evidence(&e, &q), Err(Error::EvidenceConflict(_))));
        let e: Evidence = [(VariableId(0), 2)].into_iter().collect();
        assert!(matches!(m.apply_evidence(&e, &q), Err(Error::Domain { .. })));
    }

    #[test]
    fn evidence_preserves_consistent_weights() {
        let m = fig1();
        let q = QuerySet::new(vec![VariableId(4)]).unwrap();
        let e: Evidence = [(VariableId(0), 0), (VariableId(6), 1)].into_iter().collect();
        let r = m.apply_evidence(&e, &q).unwrap();
        for bits in 0u32..128 {
            let a: Vec<usize> = (0..7).map(|i| ((bits >> i) & 1) as usize).collect();
            if a[0] != 0 || a[6] != 1 {
                continue;
            }
            assert_eq!(m.weight(&a), r.weight(&a));
        }
    }

    #[test]
    fn isolated_variables_rejected() {
        let f = Factor::new(vec![VariableId(0)], vec![2], vec![1.0, 1.0]).unwrap();
        assert!(Model::new(vec![2, 2], vec![f]).is_err());
        assert!(Model::<f64>::new(vec![2], vec![]).is_err());
    }
}
