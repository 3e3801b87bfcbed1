//! The rv-elim graph: a DAG recording one run of variable elimination.
//!
//! Roots stand for input factors, internal vertices for elimination steps
//! (multiply the parents in edge order, then sum or max out one variable), and
//! a designated vertex per query variable holds its unnormalized marginal.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::factor::{ElimOp, Factor, VariableId};
use crate::model::{Model, QuerySet};
use crate::scalar::Scalar;

pub type VertexId = usize;

/// Interned identity of a root factor's table: equal ids iff the tables are shared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RootLabel(pub u32);

type TableKey = (Vec<usize>, Vec<u64>);

fn table_key<T: Scalar>(f: &Factor<T>) -> TableKey {
    (f.shape().to_vec(), f.values().iter().map(|x| x.bit_pattern()).collect())
}

/// Interns factor contents: entries get equal labels iff their tables are shared.
pub fn root_labels<T: Scalar>(factors: &[Factor<T>]) -> Vec<RootLabel> {
    let mut interned: HashMap<TableKey, RootLabel> = HashMap::new();
    factors
        .iter()
        .map(|f| {
            let next = RootLabel(interned.len() as u32);
            *interned.entry(table_key(f)).or_insert(next)
        })
        .collect()
}

/// How the arguments of an elimination's parents overlap.
///
/// Variables get local ids 1, 2, ... in order of first appearance across the
/// parent scopes; each parent contributes its scope as a tuple of
/// `(local id, cardinality)`, followed by the local id of the eliminated variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InternalLabel {
    pub tuples: Vec<Vec<(u32, usize)>>,
    pub eliminated: Option<u32>,
    pub op: ElimOp,
}

impl InternalLabel {
    pub fn new(
        parent_scopes: &[&[VariableId]],
        cardinalities: &[usize],
        eliminated: Option<VariableId>,
        op: ElimOp,
    ) -> Result<Self> {
        let mut ids: Vec<VariableId> = Vec::new();
        let mut tuples = Vec::with_capacity(parent_scopes.len());
        for scope in parent_scopes {
            let mut t = Vec::with_capacity(scope.len());
            for &v in *scope {
                let id = match ids.iter().position(|&x| x == v) {
                    Some(p) => p,
                    None => {
                        ids.push(v);
                        ids.len() - 1
                    }
                };
                t.push((id as u32 + 1, cardinalities[v.0]));
            }
            tuples.push(t);
        }
        let eliminated = match eliminated {
            Some(e) => Some(
                ids.iter()
                    .position(|&x| x == e)
                    .ok_or_else(|| {
                        Error::Structural(format!("eliminated variable {e} is in no parent scope"))
                    })? as u32
                    + 1,
            ),
            None => None,
        };
        Ok(InternalLabel {
            tuples,
            eliminated,
            op,
        })
    }

    /// Label text without cardinality suffixes, e.g. `{[1],[2,1,3],1}`.
    pub fn plain(&self) -> String {
        self.render(false)
    }

    fn render(&self, with_cards: bool) -> String {
        let mut s = String::from("{");
        for (i, t) in self.tuples.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push('[');
            for (j, (id, card)) in t.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                if with_cards {
                    let _ = write!(s, "{id}:{card}");
                } else {
                    let _ = write!(s, "{id}");
                }
            }
            s.push(']');
        }
        if let Some(e) = self.eliminated {
            let _ = write!(s, ",{e}");
        }
        s.push('}');
        if self.op == ElimOp::Max {
            s.push_str("max");
        }
        s
    }
}

impl fmt::Display for InternalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(true))
    }
}

/// Output scope of an elimination: first-appearance union minus the eliminated variable.
pub fn result_scope(parent_scopes: &[&[VariableId]], eliminated: Option<VariableId>) -> Vec<VariableId> {
    let mut out: Vec<VariableId> = Vec::new();
    for scope in parent_scopes {
        for &v in *scope {
            if Some(v) != eliminated && !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum VertexKind {
    Root {
        factor: usize,
        label: RootLabel,
    },
    Internal {
        parents: Vec<VertexId>,
        eliminated: Option<VariableId>,
        op: ElimOp,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RvVertex {
    pub kind: VertexKind,
    /// Output scope with the parents taken in their listed order.
    pub scope: Vec<VariableId>,
    pub depth: usize,
    pub marginal_of: Option<VariableId>,
}

impl RvVertex {
    pub fn is_root(&self) -> bool {
        matches!(self.kind, VertexKind::Root { .. })
    }

    pub fn parents(&self) -> &[VertexId] {
        match &self.kind {
            VertexKind::Root { .. } => &[],
            VertexKind::Internal { parents, .. } => parents,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RvElimGraph {
    cardinalities: Vec<usize>,
    vertices: Vec<RvVertex>,
    leaves: BTreeMap<VariableId, VertexId>,
}

impl RvElimGraph {
    pub fn vertices(&self) -> &[RvVertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> &RvVertex {
        &self.vertices[v]
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Query variable to marginal-leaf vertex.
    pub fn leaves(&self) -> &BTreeMap<VariableId, VertexId> {
        &self.leaves
    }

    /// Largest depth, the number of elimination layers.
    pub fn height(&self) -> usize {
        self.vertices.iter().map(|v| v.depth).max().unwrap_or(0)
    }

    pub fn num_internal(&self) -> usize {
        self.vertices.iter().filter(|v| !v.is_root()).count()
    }

    /// Label of internal vertex `v` with its parents in the listed order.
    pub fn label(&self, v: VertexId) -> Option<InternalLabel> {
        match &self.vertices[v].kind {
            VertexKind::Root { .. } => None,
            VertexKind::Internal {
                parents,
                eliminated,
                op,
            } => {
                let scopes: Vec<&[VariableId]> =
                    parents.iter().map(|&p| self.vertices[p].scope.as_slice()).collect();
                InternalLabel::new(&scopes, &self.cardinalities, *eliminated, *op).ok()
            }
        }
    }

    /// Most variables any single elimination step multiplies together.
    pub fn max_step_width(&self) -> usize {
        self.vertices
            .iter()
            .filter(|v| !v.is_root())
            .map(|v| {
                let mut vars: HashSet<VariableId> = HashSet::new();
                for &p in v.parents() {
                    vars.extend(self.vertices[p].scope.iter().copied());
                }
                vars.len()
            })
            .max()
            .unwrap_or(0)
    }

    /// One line per vertex: `id depth kind label parents(eliminated)`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, v) in self.vertices.iter().enumerate() {
            match &v.kind {
                VertexKind::Root { factor, label } => {
                    let _ = write!(out, "{id} {} root r{} f{factor}", v.depth, label.0);
                }
                VertexKind::Internal {
                    parents,
                    eliminated,
                    ..
                } => {
                    let label = self.label(id).map(|l| l.to_string()).unwrap_or_default();
                    let ps: Vec<String> = parents.iter().map(|p| p.to_string()).collect();
                    let e = eliminated.map_or("-".to_string(), |e| e.to_string());
                    let _ = write!(out, "{id} {} internal {label} {}({e})", v.depth, ps.join(","));
                }
            }
            if let Some(q) = v.marginal_of {
                let _ = write!(out, " leaf:{q}");
            }
            out.push('\n');
        }
        out
    }
}

/// Incremental construction of an rv-elim graph over a model's factors.
pub struct GraphBuilder<'m, T> {
    model: &'m Model<T>,
    graph: RvElimGraph,
    interned: HashMap<TableKey, RootLabel>,
}

impl<'m, T: Scalar> GraphBuilder<'m, T> {
    pub fn new(model: &'m Model<T>) -> Self {
        GraphBuilder {
            model,
            graph: RvElimGraph {
                cardinalities: model.cardinalities().to_vec(),
                vertices: Vec::new(),
                leaves: BTreeMap::new(),
            },
            interned: HashMap::new(),
        }
    }

    pub fn add_root(&mut self, factor: usize) -> VertexId {
        let f = &self.model.factors()[factor];
        let key = table_key(f);
        let next = RootLabel(self.interned.len() as u32);
        let label = *self.interned.entry(key).or_insert(next);
        self.graph.vertices.push(RvVertex {
            kind: VertexKind::Root { factor, label },
            scope: f.scope().to_vec(),
            depth: 0,
            marginal_of: None,
        });
        self.graph.vertices.len() - 1
    }

    pub fn add_internal(
        &mut self,
        parents: Vec<VertexId>,
        eliminated: Option<VariableId>,
        op: ElimOp,
    ) -> Result<VertexId> {
        if parents.is_empty() {
            return Err(Error::Structural("internal vertex without parents".into()));
        }
        let n = self.graph.vertices.len();
        if let Some(&p) = parents.iter().find(|&&p| p >= n) {
            return Err(Error::Structural(format!("parent {p} does not exist yet")));
        }
        let scopes: Vec<&[VariableId]> = parents
            .iter()
            .map(|&p| self.graph.vertices[p].scope.as_slice())
            .collect();
        // validates that the eliminated variable is present
        InternalLabel::new(&scopes, &self.graph.cardinalities, eliminated, op)?;
        let scope = result_scope(&scopes, eliminated);
        let depth = 1 + parents
            .iter()
            .map(|&p| self.graph.vertices[p].depth)
            .max()
            .unwrap_or(0);
        self.graph.vertices.push(RvVertex {
            kind: VertexKind::Internal {
                parents,
                eliminated,
                op,
            },
            scope,
            depth,
            marginal_of: None,
        });
        Ok(n)
    }

    pub fn mark_leaf(&mut self, v: VertexId, query: VariableId) -> Result<()> {
        let vertex = &mut self.graph.vertices[v];
        if vertex.scope != [query] {
            return Err(Error::Structural(format!(
                "vertex {v} has scope {:?}, not the query variable {query}",
                vertex.scope
            )));
        }
        if self.graph.leaves.insert(query, v).is_some() {
            return Err(Error::Structural(format!("query {query} has two marginal leaves")));
        }
        vertex.marginal_of = Some(query);
        Ok(())
    }

    pub fn scope(&self, v: VertexId) -> &[VariableId] {
        &self.graph.vertices[v].scope
    }

    pub fn finish(self) -> RvElimGraph {
        self.graph
    }
}

/// How a variable's factors are split into mini-buckets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MiniBucketMode {
    /// At most this many distinct variables per mini-bucket.
    Args(usize),
    /// This many consecutive canonical buckets per mini-bucket.
    Merge(usize),
}

/// Ground variable elimination along `order`, then per-query finishing steps.
pub fn build<T: Scalar>(model: &Model<T>, order: &[VariableId], queries: &QuerySet) -> Result<RvElimGraph> {
    build_with(model, order, queries, None)
}

/// Variable elimination where each variable's factors are split into
/// mini-buckets; the first mini-bucket sums the variable out, the rest maximize it out.
pub fn build_minibucket<T: Scalar>(
    model: &Model<T>,
    order: &[VariableId],
    queries: &QuerySet,
    mode: MiniBucketMode,
) -> Result<RvElimGraph> {
    match mode {
        MiniBucketMode::Args(i) => {
            let widest = model.factors().iter().map(|f| f.arity()).max().unwrap_or(0);
            if i < widest {
                return Err(Error::Configuration(format!(
                    "argument restriction {i} is below the widest factor arity {widest}"
                )));
            }
        }
        MiniBucketMode::Merge(0) => {
            return Err(Error::Configuration("mini-bucket merge count must be positive".into()))
        }
        MiniBucketMode::Merge(_) => {}
    }
    build_with(model, order, queries, Some(mode))
}

fn check_inputs<T: Scalar>(model: &Model<T>, order: &[VariableId], queries: &QuerySet) -> Result<()> {
    model.check_queries(queries)?;
    if queries.is_empty() {
        return Err(Error::Configuration("no query variables".into()));
    }
    let mut seen = HashSet::new();
    for &v in order {
        if v.0 >= model.num_variables() {
            return Err(Error::Order(format!("variable {v} does not exist")));
        }
        if queries.contains(v) {
            return Err(Error::Configuration(format!(
                "elimination order mentions query variable {v}"
            )));
        }
        if model.is_observed(v) {
            return Err(Error::Order(format!("variable {v} is observed")));
        }
        if !seen.insert(v) {
            return Err(Error::Order(format!("variable {v} listed twice")));
        }
    }
    Ok(())
}

fn build_with<T: Scalar>(
    model: &Model<T>,
    order: &[VariableId],
    queries: &QuerySet,
    mode: Option<MiniBucketMode>,
) -> Result<RvElimGraph> {
    check_inputs(model, order, queries)?;
    let mut b = GraphBuilder::new(model);
    let mut pool: Vec<VertexId> = (0..model.factors().len()).map(|i| b.add_root(i)).collect();

    for &v in order {
        let members: Vec<VertexId> = pool.iter().copied().filter(|&u| b.scope(u).contains(&v)).collect();
        if members.is_empty() {
            return Err(Error::Structural(format!("no live factor mentions variable {v}")));
        }
        let groups = match mode {
            None => vec![members.clone()],
            Some(m) => mini_buckets(&b, &members, m),
        };
        pool.retain(|u| !members.contains(u));
        for (k, mut group) in groups.into_iter().enumerate() {
            // multiplication order follows pool insertion order
            group.sort_by_key(|u| members.iter().position(|m| m == u));
            let op = if k == 0 { ElimOp::Sum } else { ElimOp::Max };
            let id = b.add_internal(group, Some(v), op)?;
            pool.push(id);
        }
    }

    finish_queries(&mut b, &pool, queries)?;
    Ok(b.finish())
}

fn mini_buckets<T: Scalar>(b: &GraphBuilder<'_, T>, members: &[VertexId], mode: MiniBucketMode) -> Vec<Vec<VertexId>> {
    // canonical partition: a vertex joins the first bucket whose head subsumes it
    let mut by_arity = members.to_vec();
    by_arity.sort_by_key(|&u| std::cmp::Reverse(b.scope(u).len()));
    let mut buckets: Vec<Vec<VertexId>> = Vec::new();
    for u in by_arity {
        let scope = b.scope(u);
        match buckets
            .iter_mut()
            .find(|bk| scope.iter().all(|v| b.scope(bk[0]).contains(v)))
        {
            Some(bk) => bk.push(u),
            None => buckets.push(vec![u]),
        }
    }

    match mode {
        MiniBucketMode::Merge(m) => buckets
            .chunks(m)
            .map(|c| c.iter().flatten().copied().collect())
            .collect(),
        MiniBucketMode::Args(limit) => {
            let mut out: Vec<Vec<VertexId>> = Vec::new();
            let mut vars: HashSet<VariableId> = HashSet::new();
            for bk in buckets {
                let bvars: HashSet<VariableId> =
                    bk.iter().flat_map(|&u| b.scope(u).iter().copied()).collect();
                let fits = !out.is_empty() && vars.union(&bvars).count() <= limit;
                if fits {
                    vars.extend(bvars);
                    out.last_mut().expect("nonempty").extend(bk);
                } else {
                    vars = bvars;
                    out.push(bk);
                }
            }
            out
        }
    }
}

/// For each query, eliminates every other variable from the live vertices
/// connected to it. Steps that recur across queries are created once.
fn finish_queries<T: Scalar>(b: &mut GraphBuilder<'_, T>, pool: &[VertexId], queries: &QuerySet) -> Result<()> {
    let cards = b.graph.cardinalities.clone();
    let mut memo: HashMap<(Vec<VertexId>, Option<VariableId>), VertexId> = HashMap::new();

    for &q in queries.vars() {
        if !pool.iter().any(|&u| b.scope(u).contains(&q)) {
            return Err(Error::Structural(format!("query variable {q} is in no live factor")));
        }
        // every leaf keeps the whole pool so it carries the full unnormalized mass
        let mut live: Vec<VertexId> = pool.to_vec();

        loop {
            let mut remaining: Vec<VariableId> = live
                .iter()
                .flat_map(|&u| b.scope(u).iter().copied())
                .filter(|&v| v != q)
                .collect();
            remaining.sort();
            remaining.dedup();
            let Some(w) = remaining
                .iter()
                .copied()
                .min_by_key(|&w| (step_size(b, &live, w, &cards), w))
            else {
                break;
            };
            let members: Vec<VertexId> = live.iter().copied().filter(|&u| b.scope(u).contains(&w)).collect();
            let id = match memo.get(&(members.clone(), Some(w))) {
                Some(&id) => id,
                None => {
                    let id = b.add_internal(members.clone(), Some(w), ElimOp::Sum)?;
                    memo.insert((members.clone(), Some(w)), id);
                    id
                }
            };
            live.retain(|u| !members.contains(u));
            live.push(id);
        }

        let leaf = if live.len() == 1 {
            live[0]
        } else {
            match memo.get(&(live.clone(), None)) {
                Some(&id) => id,
                None => {
                    let id = b.add_internal(live.clone(), None, ElimOp::Sum)?;
                    memo.insert((live.clone(), None), id);
                    id
                }
            }
        };
        b.mark_leaf(leaf, q)?;
    }
    Ok(())
}

/// Table size of the product formed when eliminating `w` from `live`.
fn step_size<T: Scalar>(b: &GraphBuilder<'_, T>, live: &[VertexId], w: VariableId, cards: &[usize]) -> u128 {
    let mut vars: Vec<VariableId> = Vec::new();
    for &u in live {
        let s = b.scope(u);
        if s.contains(&w) {
            for &v in s {
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
        }
    }
    vars.iter()
        .fold(1u128, |acc, v| acc.saturating_mul(cards[v.0] as u128))
}
