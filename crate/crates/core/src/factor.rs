//! Dense discrete factors and the table kernels every other module builds on.
//!
//! Tables are stored row-major with the last scope position varying fastest.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of a random variable in its model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VariableId(pub usize);

impl VariableId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a variable is removed from a table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElimOp {
    Sum,
    Max,
}

/// Scalar operations performed by the table kernels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub mults: u64,
    pub adds: u64,
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        self.mults += rhs.mults;
        self.adds += rhs.adds;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor<T> {
    scope: Vec<VariableId>,
    shape: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Factor<T> {
    pub fn new(scope: Vec<VariableId>, shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if scope.len() != shape.len() {
            return Err(Error::InvalidFactor(format!(
                "scope has {} variables but shape has {} entries",
                scope.len(),
                shape.len()
            )));
        }
        for (i, v) in scope.iter().enumerate() {
            if scope[..i].contains(v) {
                return Err(Error::InvalidFactor(format!("variable {v} repeated in scope")));
            }
        }
        if let Some(p) = shape.iter().position(|&c| c == 0) {
            return Err(Error::InvalidFactor(format!(
                "variable {} has an empty domain",
                scope[p]
            )));
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::InvalidFactor(format!(
                "table has {} entries, shape requires {expected}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::InvalidFactor(format!(
                "table entry {bad} is negative or not finite"
            )));
        }
        Ok(Factor { scope, shape, values })
    }

    /// Empty-scope factor holding a single value.
    pub fn scalar(value: T) -> Self {
        Factor {
            scope: Vec::new(),
            shape: Vec::new(),
            values: vec![value],
        }
    }

    /// The multiplicative identity.
    pub fn unit() -> Self {
        Self::scalar(T::one())
    }

    pub fn scope(&self) -> &[VariableId] {
        &self.scope
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn position(&self, v: VariableId) -> Option<usize> {
        self.scope.iter().position(|&s| s == v)
    }

    pub fn cardinality_of(&self, v: VariableId) -> Option<usize> {
        self.position(v).map(|p| self.shape[p])
    }

    pub fn total(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Value at a full assignment given in scope order.
    pub fn value_at(&self, assignment: &[usize]) -> T {
        debug_assert_eq!(assignment.len(), self.scope.len());
        let mut idx = 0;
        for (a, s) in assignment.iter().zip(&self.shape) {
            idx = idx * s + a;
        }
        self.values[idx]
    }

    /// Same table over a different scope of the same length (positional re-labeling).
    pub fn rescoped(&self, scope: &[VariableId]) -> Result<Self> {
        if scope.len() != self.scope.len() {
            return Err(Error::InvalidFactor(format!(
                "cannot place a table of arity {} onto {} variables",
                self.scope.len(),
                scope.len()
            )));
        }
        Factor::new(scope.to_vec(), self.shape.clone(), self.values.clone())
    }

    /// Product of two factors; the result scope lists `self`'s variables first.
    pub fn multiply(&self, other: &Factor<T>) -> Result<Factor<T>> {
        combine(&[self, other], None, ElimOp::Sum, &mut OpCount::default())
    }

    pub fn eliminate(&self, v: VariableId, op: ElimOp) -> Result<Factor<T>> {
        if self.position(v).is_none() {
            return Err(Error::MissingVariable(v));
        }
        combine(&[self], Some(v), op, &mut OpCount::default())
    }

    /// Slice of the table at `v = value`, with `v` dropped from the scope.
    pub fn reduce(&self, v: VariableId, value: usize) -> Result<Factor<T>> {
        let pos = self.position(v).ok_or(Error::MissingVariable(v))?;
        let card = self.shape[pos];
        if value >= card {
            return Err(Error::Domain {
                var: v,
                value,
                cardinality: card,
            });
        }
        let inner: usize = self.shape[pos + 1..].iter().product();
        let outer: usize = self.shape[..pos].iter().product();
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * card + value) * inner;
            values.extend_from_slice(&self.values[start..start + inner]);
        }
        let mut scope = self.scope.clone();
        scope.remove(pos);
        let mut shape = self.shape.clone();
        shape.remove(pos);
        Ok(Factor { scope, shape, values })
    }

    /// Same input-output mapping, bit for bit, regardless of which variables are involved.
    pub fn is_shared(&self, other: &Factor<T>) -> bool {
        self.shape == other.shape
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.bit_pattern() == b.bit_pattern())
    }

    /// Root-mean-squared difference over the common joint domain, or infinity
    /// when the shapes differ.
    pub fn rms_distance(&self, other: &Factor<T>) -> T {
        if self.shape != other.shape {
            return T::infinity();
        }
        let n = T::from_usize(self.values.len()).expect("table size fits the scalar type");
        let sq = self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        (sq / n).sqrt()
    }
}

/// Union of the parents' scopes in first-appearance order, with cardinalities.
pub fn union_scope<T: Scalar>(parents: &[&Factor<T>]) -> Result<(Vec<VariableId>, Vec<usize>)> {
    let mut scope: Vec<VariableId> = Vec::new();
    let mut shape: Vec<usize> = Vec::new();
    for f in parents {
        for (&v, &c) in f.scope.iter().zip(&f.shape) {
            match scope.iter().position(|&s| s == v) {
                Some(p) if shape[p] != c => {
                    return Err(Error::ScopeConflict {
                        var: v,
                        left: shape[p],
                        right: c,
                    })
                }
                Some(_) => {}
                None => {
                    scope.push(v);
                    shape.push(c);
                }
            }
        }
    }
    Ok((scope, shape))
}

/// Multiplies `parents` and removes `eliminated` (if any) with `op`, in one pass.
///
/// The result scope is the first-appearance union of the parent scopes minus
/// the eliminated variable. Each table entry multiplies the parent values in
/// ascending value order and accumulates over the eliminated variable in
/// ascending domain order, so the bits of every entry depend only on the
/// multiset of parent tables and not on the order they were listed in.
pub fn combine<T: Scalar>(
    parents: &[&Factor<T>],
    eliminated: Option<VariableId>,
    op: ElimOp,
    ops: &mut OpCount,
) -> Result<Factor<T>> {
    if parents.is_empty() {
        return Err(Error::Structural("combine needs at least one table".into()));
    }
    let (union, union_shape) = union_scope(parents)?;
    let (out_scope, out_shape, elim_card, elim_pos) = match eliminated {
        Some(v) => {
            let p = union
                .iter()
                .position(|&s| s == v)
                .ok_or(Error::MissingVariable(v))?;
            let mut s = union.clone();
            s.remove(p);
            let mut sh = union_shape.clone();
            let card = sh.remove(p);
            (s, sh, card, Some(p))
        }
        None => (union.clone(), union_shape.clone(), 1, None),
    };

    // strides[k][u] = stride of union variable u inside parent k (0 if absent)
    let strides: Vec<Vec<usize>> = parents
        .iter()
        .map(|f| {
            let own = row_major_strides(&f.shape);
            union
                .iter()
                .map(|v| f.position(*v).map_or(0, |p| own[p]))
                .collect()
        })
        .collect();
    let out_vars: Vec<usize> = (0..union.len()).filter(|&u| Some(u) != elim_pos).collect();
    let elim_strides: Vec<usize> = match elim_pos {
        Some(p) => strides.iter().map(|s| s[p]).collect(),
        None => vec![0; parents.len()],
    };

    let out_len: usize = out_shape.iter().product();
    let mut values = Vec::with_capacity(out_len);
    let mut digits = vec![0usize; out_vars.len()];
    let mut base = vec![0usize; parents.len()];
    let mut scratch: Vec<T> = Vec::with_capacity(parents.len());
    let k = parents.len();

    for _ in 0..out_len {
        let mut acc = T::zero();
        for x in 0..elim_card {
            let term = match k {
                1 => parents[0].values[base[0] + x * elim_strides[0]],
                2 => {
                    parents[0].values[base[0] + x * elim_strides[0]]
                        * parents[1].values[base[1] + x * elim_strides[1]]
                }
                _ => {
                    scratch.clear();
                    for (j, f) in parents.iter().enumerate() {
                        scratch.push(f.values[base[j] + x * elim_strides[j]]);
                    }
                    scratch.sort_by(|a, b| a.partial_cmp(b).expect("finite table values"));
                    scratch[1..].iter().fold(scratch[0], |p, &v| p * v)
                }
            };
            acc = if x == 0 {
                term
            } else {
                match op {
                    ElimOp::Sum => acc + term,
                    ElimOp::Max => acc.max(term),
                }
            };
        }
        values.push(acc);

        // advance the output odometer, last output variable fastest
        for d in (0..out_vars.len()).rev() {
            let u = out_vars[d];
            digits[d] += 1;
            for (b, s) in base.iter_mut().zip(&strides) {
                *b += s[u];
            }
            if digits[d] < union_shape[u] {
                break;
            }
            for (b, s) in base.iter_mut().zip(&strides) {
                *b -= s[u] * union_shape[u];
            }
            digits[d] = 0;
        }
    }

    ops.mults += ((k - 1) * elim_card * out_len) as u64;
    if op == ElimOp::Sum {
        ops.adds += ((elim_card - 1) * out_len) as u64;
    }
    Ok(Factor {
        scope: out_scope,
        shape: out_shape,
        values,
    })
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(scope: &[usize], shape: &[usize], values: &[f64]) -> Factor<f64> {
        Factor::new(
            scope.iter().map(|&v| VariableId(v)).collect(),
            shape.to_vec(),
            values.to_vec(),
        )
        .unwrap()
    }

    const X: VariableId = VariableId(0);
    const Y: VariableId = VariableId(1);

    #[test]
    fn multiply_same_scope_is_pointwise() {
        let a = f(&[1], &[2], &[0.5, 0.5]);
        let p = a.multiply(&a).unwrap();
        assert_eq!(p.scope(), &[Y]);
        assert_eq!(p.values(), &[0.25, 0.25]);
    }

    #[test]
    fn multiply_binary_table_by_uniform() {
        let f1 = f(&[0, 1], &[2, 2], &[0.8, 0.2, 0.4, 0.6]);
        let f2 = f(&[1], &[2], &[0.5, 0.5]);
        let p = f1.multiply(&f2).unwrap();
        assert_eq!(p.scope(), &[X, Y]);
        assert_eq!(p.values(), &[0.4, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn multiply_by_unit_is_identity() {
        let a = f(&[0], &[2], &[0.7, 0.3]);
        assert_eq!(a.multiply(&Factor::unit()).unwrap(), a);
    }

    #[test]
    fn multiply_appends_new_variables_in_second_factor_order() {
        let a = f(&[2], &[2], &[1.0, 2.0]);
        let b = f(&[0, 2, 1], &[2, 2, 3], &[1.0; 12]);
        let p = a.multiply(&b).unwrap();
        assert_eq!(p.scope(), &[VariableId(2), VariableId(0), VariableId(1)]);
        assert_eq!(p.shape(), &[2, 2, 3]);
        assert_eq!(&p.values()[..6], &[1.0; 6]);
        assert_eq!(&p.values()[6..], &[2.0; 6]);
    }

    #[test]
    fn multiply_rejects_cardinality_conflict() {
        let a = f(&[0], &[2], &[1.0, 1.0]);
        let b = f(&[0], &[3], &[1.0, 1.0, 1.0]);
        assert!(matches!(a.multiply(&b), Err(Error::ScopeConflict { .. })));
    }

    #[test]
    fn eliminate_examples() {
        let p = f(&[0, 1], &[2, 2], &[0.4, 0.1, 0.2, 0.3]);
        let m = p.eliminate(Y, ElimOp::Sum).unwrap();
        assert_eq!(m.scope(), &[X]);
        assert_eq!(m.values(), &[0.5, 0.5]);

        let u = f(&[0, 1], &[2, 2], &[0.25; 4]);
        assert_eq!(u.eliminate(X, ElimOp::Sum).unwrap().values(), &[0.5, 0.5]);

        assert_eq!(p.eliminate(Y, ElimOp::Max).unwrap().values(), &[0.4, 0.3]);
        assert!(matches!(
            m.eliminate(Y, ElimOp::Sum),
            Err(Error::MissingVariable(_))
        ));
    }

    /// `i` is true iff `s` and `t` are; scope (i, s, t), index 0 = true.
    fn and_table(i: usize, s: usize, t: usize) -> Factor<f64> {
        let mut values = Vec::new();
        for iv in 0..2 {
            for sv in 0..2 {
                for tv in 0..2 {
                    let on = sv == 0 && tv == 0;
                    values.push(if (iv == 0) == on { 1.0 } else { 0.0 });
                }
            }
        }
        f(&[i, s, t], &[2, 2, 2], &values)
    }

    #[test]
    fn eliminate_prior_from_and_factor() {
        // brute force over the 8 rows of f_s(s) * f_i(i, s, t)
        let prior = f(&[0], &[2], &[0.8, 0.2]);
        let and = and_table(1, 0, 2);
        let mut expected = [0.0; 4];
        for i in 0..2 {
            for t in 0..2 {
                for s in 0..2 {
                    expected[i * 2 + t] += prior.value_at(&[s]) * and.value_at(&[i, s, t]);
                }
            }
        }
        assert_eq!(expected, [0.8, 0.0, 0.2, 1.0]);
        let m = prior.multiply(&and).unwrap().eliminate(VariableId(0), ElimOp::Sum).unwrap();
        assert_eq!(m.scope(), &[VariableId(1), VariableId(2)]);
        assert_eq!(m.values(), &expected);
    }

    #[test]
    fn reduce_examples() {
        let t = f(&[0, 1], &[2, 2], &[0.8, 0.2, 0.4, 0.6]);
        let r = t.reduce(Y, 0).unwrap();
        assert_eq!(r.scope(), &[X]);
        assert_eq!(r.values(), &[0.8, 0.4]);

        let x = f(&[0], &[2], &[0.7, 0.3]);
        let r = x.reduce(X, 1).unwrap();
        assert!(r.scope().is_empty());
        assert_eq!(r.values(), &[0.3]);

        assert!(matches!(x.reduce(X, 2), Err(Error::Domain { .. })));

        // reducing Y then summing X equals summing X then reading Y's slot
        let a = t.reduce(Y, 1).unwrap().eliminate(X, ElimOp::Sum).unwrap();
        let b = t.eliminate(X, ElimOp::Sum).unwrap();
        assert_eq!(a.values()[0], b.values()[1]);
    }

    #[test]
    fn sharedness_ignores_variables() {
        let s1 = f(&[0], &[2], &[0.8, 0.2]);
        let s2 = f(&[1], &[2], &[0.8, 0.2]);
        let s3 = f(&[2], &[2], &[0.6, 0.4]);
        assert!(s1.is_shared(&s2));
        assert!(!s1.is_shared(&s3));
        assert!(s3.is_shared(&s3));
        let wide = f(&[0], &[3], &[0.8, 0.2, 0.0]);
        assert!(!s1.is_shared(&wide));
    }

    #[test]
    fn rms_examples() {
        let a = f(&[0, 1], &[2, 2], &[0.8, 0.2, 0.4, 0.6]);
        let b = f(&[2, 3], &[2, 2], &[0.2, 0.8, 0.6, 0.4]);
        // (0.36 + 0.36 + 0.04 + 0.04) / 4 = 0.2
        assert!((a.rms_distance(&b) - 0.2f64.sqrt()).abs() < 1e-12);
        assert!((a.rms_distance(&b) - 0.4472135955).abs() < 1e-10);
        assert_eq!(a.rms_distance(&a), 0.0);
        let s1 = f(&[0], &[2], &[0.8, 0.2]);
        let s3 = f(&[2], &[2], &[0.6, 0.4]);
        assert!((s1.rms_distance(&s3) - 0.2).abs() < 1e-12);
        assert!(s1.rms_distance(&a).is_infinite());
    }

    #[test]
    fn combine_counts_operations() {
        let a = f(&[0, 1], &[2, 3], &[1.0; 6]);
        let b = f(&[1, 2], &[3, 2], &[1.0; 6]);
        let c = f(&[2], &[2], &[1.0; 2]);
        let mut ops = OpCount::default();
        let r = combine(&[&a, &b, &c], Some(VariableId(1)), ElimOp::Sum, &mut ops).unwrap();
        assert_eq!(r.scope(), &[VariableId(0), VariableId(2)]);
        assert_eq!(r.values(), &[3.0; 4]);
        assert_eq!(ops, OpCount { mults: 2 * 12, adds: 2 * 4 });
    }

    #[test]
    fn combine_is_bitwise_order_independent() {
        let a = f(&[0, 1], &[2, 2], &[0.1, 0.7, 0.3, 0.9]);
        let b = f(&[1, 2], &[2, 2], &[0.11, 0.37, 0.93, 0.21]);
        let c = f(&[2, 0], &[2, 2], &[0.13, 0.77, 0.31, 0.49]);
        let mut ops = OpCount::default();
        let r1 = combine(&[&a, &b, &c], Some(VariableId(1)), ElimOp::Sum, &mut ops).unwrap();
        let r2 = combine(&[&c, &a, &b], Some(VariableId(1)), ElimOp::Sum, &mut ops).unwrap();
        // layouts differ, so compare by assignment
        for x0 in 0..2 {
            for x2 in 0..2 {
                let v1 = r1.value_at(&[x0, x2]);
                let v2 = r2.value_at(&[x2, x0]);
                assert_eq!(v1.to_bits(), v2.to_bits());
            }
        }
    }

    #[test]
    fn constructor_validation() {
        assert!(Factor::new(vec![X], vec![2], vec![1.0f64]).is_err());
        assert!(Factor::new(vec![X, X], vec![2, 2], vec![1.0f64; 4]).is_err());
        assert!(Factor::new(vec![X], vec![2], vec![1.0f64, -0.5]).is_err());
        assert!(Factor::new(vec![X], vec![2], vec![1.0f64, f64::NAN]).is_err());
    }

    fn arb_factor(vars: Vec<usize>) -> impl Strategy<Value = Factor<f64>> {
        let shape: Vec<usize> = vars.iter().map(|&v| 2 + v % 2).collect();
        let len: usize = shape.iter().product();
        proptest::collection::vec(0.0f64..2.0, len).prop_map(move |values| {
            Factor::new(
                vars.iter().map(|&v| VariableId(v)).collect(),
                shape.clone(),
                values,
            )
            .unwrap()
        })
    }

    fn arb_scope() -> impl Strategy<Value = Vec<usize>> {
        proptest::sample::subsequence(vec![0usize, 1, 2, 3], 0..=3).prop_shuffle()
    }

    fn lookup(f: &Factor<f64>, full: &[usize]) -> f64 {
        let a: Vec<usize> = f.scope().iter().map(|v| full[v.0]).collect();
        f.value_at(&a)
    }

    fn all_assignments() -> Vec<Vec<usize>> {
        let mut out = vec![];
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..2 {
                    for d in 0..3 {
                        out.push(vec![a, b, c, d]);
                    }
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn multiply_commutes_by_assignment(
            (f1, f2) in (arb_scope(), arb_scope()).prop_flat_map(|(s1, s2)| (arb_factor(s1), arb_factor(s2)))
        ) {
            let p = f1.multiply(&f2).unwrap();
            let q = f2.multiply(&f1).unwrap();
            for a in all_assignments() {
                prop_assert_eq!(lookup(&p, &a).to_bits(), lookup(&q, &a).to_bits());
                prop_assert_eq!(lookup(&p, &a), lookup(&f1, &a) * lookup(&f2, &a));
            }
        }

        #[test]
        fn elimination_conserves_mass(
            (f1, pick) in arb_scope().prop_filter("nonempty", |s| !s.is_empty())
                .prop_flat_map(|s| { let n = s.len(); (arb_factor(s), 0..n) })
        ) {
            let v = f1.scope()[pick];
            let m = f1.eliminate(v, ElimOp::Sum).unwrap();
            let (a, b) = (m.total(), f1.total());
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn summation_distributes_over_product(
            f1 in arb_factor(vec![0, 1]),
            f2 in arb_factor(vec![1, 2, 3]),
        ) {
            let v = VariableId(3);
            let lhs = f1.multiply(&f2).unwrap().eliminate(v, ElimOp::Sum).unwrap();
            let rhs = f1.multiply(&f2.eliminate(v, ElimOp::Sum).unwrap()).unwrap();
            prop_assert_eq!(lhs.scope(), rhs.scope());
            for (a, b) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn rms_is_a_metric_on_same_shapes(
            a in arb_factor(vec![0, 1]),
            b in arb_factor(vec![2, 1]),
            c in arb_factor(vec![0, 3]),
        ) {
            prop_assert_eq!(a.rms_distance(&b), b.rms_distance(&a));
            prop_assert!(a.rms_distance(&c) <= a.rms_distance(&b) + b.rms_distance(&c) + 1e-12);
            prop_assert_eq!(a.rms_distance(&b) == 0.0, a.is_shared(&b));
            prop_assert!(a.is_shared(&a));
            prop_assert_eq!(a.is_shared(&b), b.is_shared(&a));
        }
    }
}
