//! Factor binning: exact bisimulation that also computes one table per block
//! and merges same-depth blocks whose tables are within a threshold.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use super::dominating::greedy_dominating_set;
use super::{assign_blocks, root_label_of, vertices_by_depth, Layout, Partition};
use crate::error::{Error, Result};
use crate::factor::{combine, Factor, OpCount, VariableId};
use crate::model::Model;
use crate::rvelim::{InternalLabel, RvElimGraph, VertexId, VertexKind};
use crate::scalar::Scalar;

/// A factor-binning partition with the table computed for every block.
#[derive(Clone, Debug)]
pub struct BinnedPartition<T> {
    pub partition: Partition,
    /// Indexed by block; each table is over its representative's scope.
    pub tables: Vec<Factor<T>>,
    /// Work spent computing the tables.
    pub ops: OpCount,
}

/// Places a block table onto `scope` position by position.
pub(crate) fn align<'a, T: Scalar>(
    table: &'a Factor<T>,
    scope: &[VariableId],
    cards: &[usize],
) -> Result<Cow<'a, Factor<T>>> {
    if table.scope() == scope {
        return Ok(Cow::Borrowed(table));
    }
    let shape: Vec<usize> = scope.iter().map(|v| cards[v.0]).collect();
    if table.shape() != shape.as_slice() {
        return Err(Error::CorruptedPartition(format!(
            "table of shape {:?} placed onto scope {scope:?} of shape {shape:?}",
            table.shape()
        )));
    }
    Ok(Cow::Owned(table.rescoped(scope)?))
}

pub fn factor_binning_bisimulation<T: Scalar>(
    g: &RvElimGraph,
    model: &Model<T>,
    eps: T,
    dist: impl Fn(&Factor<T>, &Factor<T>) -> T,
) -> Result<BinnedPartition<T>> {
    if !(eps >= T::zero()) {
        return Err(Error::Configuration(format!("threshold {eps} must be non-negative")));
    }
    let cards = g.cardinalities();
    let mut block = vec![usize::MAX; g.len()];
    let mut reps: HashMap<usize, VertexId> = HashMap::new();
    let mut tables: BTreeMap<usize, Factor<T>> = BTreeMap::new();
    let mut layout = Layout::new(g);
    let mut ops = OpCount::default();
    let mut next_id = 0;

    for (d, members) in vertices_by_depth(g).iter().enumerate() {
        let first_new = next_id;
        if d == 0 {
            assign_blocks(members, |v| root_label_of(g, v), &mut next_id, &mut block);
        } else {
            let mut keys: HashMap<VertexId, (InternalLabel, Vec<usize>)> = HashMap::new();
            for &v in members {
                let label = layout.arrange(g, v, &block);
                let parents = layout.order[v].iter().map(|&p| block[p]).collect();
                keys.insert(v, (label, parents));
            }
            assign_blocks(members, |v| keys[&v].clone(), &mut next_id, &mut block);
        }

        // one table per new block, from its smallest member
        let mut new_blocks: Vec<usize> = Vec::new();
        for &v in members {
            let b = block[v];
            if reps.contains_key(&b) {
                continue;
            }
            debug_assert!(b >= first_new);
            reps.insert(b, v);
            new_blocks.push(b);
            let table = match &g.vertex(v).kind {
                VertexKind::Root { factor, .. } => model.factors()[*factor].clone(),
                VertexKind::Internal { eliminated, op, .. } => {
                    let parents = layout.order[v]
                        .iter()
                        .map(|&p| align(&tables[&block[p]], &layout.scope[p], cards))
                        .collect::<Result<Vec<_>>>()?;
                    let refs: Vec<&Factor<T>> = parents.iter().map(|c| c.as_ref()).collect();
                    combine(&refs, *eliminated, *op, &mut ops)?
                }
            };
            tables.insert(b, table);
        }

        // merge near-identical blocks of equal shape
        let mut by_shape: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for &b in &new_blocks {
            by_shape.entry(tables[&b].shape().to_vec()).or_default().push(b);
        }
        let mut redirect: HashMap<usize, usize> = HashMap::new();
        for items in by_shape.values() {
            if items.len() < 2 {
                continue;
            }
            let cover = greedy_dominating_set(items.len(), |i, j| dist(&tables[&items[i]], &tables[&items[j]]), eps);
            for (i, &r) in cover.assigned.iter().enumerate() {
                if r != i {
                    redirect.insert(items[i], items[r]);
                }
            }
        }
        for &v in members {
            if let Some(&r) = redirect.get(&block[v]) {
                block[v] = r;
            }
        }
        for b in redirect.keys() {
            tables.remove(b);
            reps.remove(b);
        }
    }

    let partition = Partition::assemble(&block, &reps, layout.order, layout.scope);
    let tables = partition
        .blocks()
        .iter()
        .map(|members| tables.remove(&block[members[0]]).expect("every block has a table"))
        .collect();
    Ok(BinnedPartition {
        partition,
        tables,
        ops,
    })
}
