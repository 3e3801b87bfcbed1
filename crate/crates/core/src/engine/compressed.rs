//! One node per block, evaluated once per node.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::factor::{combine, ElimOp, Factor, OpCount, VariableId};
use crate::model::Model;
use crate::partition::{align, Partition};
use crate::rvelim::{RvElimGraph, VertexId, VertexKind};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedNode {
    pub representative: VertexId,
    /// Parent node per edge index.
    pub parents: Vec<usize>,
    pub eliminated: Option<VariableId>,
    pub op: ElimOp,
    pub depth: usize,
}

/// An edge `from -> to` at `edge` (0-based) that lost a conflict to a larger block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DroppedEdge {
    pub from: usize,
    pub to: usize,
    pub edge: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedGraph {
    /// Indexed by block id.
    pub nodes: Vec<CompressedNode>,
    /// Node ids with parents before children.
    pub order: Vec<usize>,
    pub leaves: BTreeMap<VariableId, usize>,
    pub dropped: Vec<DroppedEdge>,
}

impl CompressedGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_internal(&self) -> usize {
        self.nodes.iter().filter(|n| !n.parents.is_empty()).count()
    }
}

/// Collapses each block to one node. Where members of a block disagree on
/// the parent block at some edge index, the largest candidate block wins
/// (ties to the smaller id) and the other edges are dropped.
pub fn compress(g: &RvElimGraph, p: &Partition) -> Result<CompressedGraph> {
    if p.num_vertices() != g.len() {
        return Err(Error::Structural(format!(
            "partition covers {} vertices, graph has {}",
            p.num_vertices(),
            g.len()
        )));
    }
    let mut nodes = Vec::with_capacity(p.num_blocks());
    let mut dropped = Vec::new();
    for (b, members) in p.blocks().iter().enumerate() {
        let rep = p.representative(b);
        let vertex = g.vertex(rep);
        let (eliminated, op) = match &vertex.kind {
            VertexKind::Root { .. } => (None, ElimOp::Sum),
            VertexKind::Internal { eliminated, op, .. } => (*eliminated, *op),
        };
        if members.iter().any(|&m| g.vertex(m).is_root() != vertex.is_root()) {
            return Err(Error::Structural(format!("block {b} mixes roots and internal vertices")));
        }
        let arity = p.parent_order(rep).len();
        let mut parents = Vec::with_capacity(arity);
        for i in 0..arity {
            let candidates: BTreeSet<usize> = members
                .iter()
                .filter_map(|&m| p.parent_order(m).get(i).map(|&q| p.block_of(q)))
                .collect();
            let Some(&chosen) = candidates
                .iter()
                .max_by_key(|&&c| (p.block(c).len(), std::cmp::Reverse(c)))
            else {
                return Err(Error::Structural(format!("block {b} has no parent at edge {i}")));
            };
            for &c in candidates.iter().filter(|&&c| c != chosen) {
                dropped.push(DroppedEdge {
                    from: c,
                    to: b,
                    edge: i,
                });
            }
            parents.push(chosen);
        }
        nodes.push(CompressedNode {
            representative: rep,
            parents,
            eliminated,
            op,
            depth: vertex.depth,
        });
    }
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by_key(|&n| (nodes[n].depth, n));
    let leaves = g.leaves().iter().map(|(&q, &v)| (q, p.block_of(v))).collect();
    Ok(CompressedGraph {
        nodes,
        order,
        leaves,
        dropped,
    })
}

/// Computes every node's table bottom-up. Parent tables are placed onto the
/// representative's parent scopes position by position.
pub fn evaluate_tables<T: Scalar>(
    cg: &CompressedGraph,
    g: &RvElimGraph,
    p: &Partition,
    model: &Model<T>,
    ops: &mut OpCount,
) -> Result<Vec<Option<Factor<T>>>> {
    let cards = g.cardinalities();
    let mut tables: Vec<Option<Factor<T>>> = vec![None; cg.len()];
    for &n in &cg.order {
        let node = &cg.nodes[n];
        let table = match &g.vertex(node.representative).kind {
            VertexKind::Root { factor, .. } => model.factors()[*factor].clone(),
            VertexKind::Internal { .. } => {
                let rep_parents = p.parent_order(node.representative);
                let mut placed = Vec::with_capacity(node.parents.len());
                for (&parent, &rp) in node.parents.iter().zip(rep_parents) {
                    let t = tables[parent]
                        .as_ref()
                        .ok_or_else(|| Error::Structural(format!("node {parent} used before it was computed")))?;
                    placed.push(align(t, p.scope(rp), cards)?);
                }
                let refs: Vec<&Factor<T>> = placed.iter().map(|c| c.as_ref()).collect();
                combine(&refs, node.eliminated, node.op, ops)?
            }
        };
        tables[n] = Some(table);
    }
    Ok(tables)
}
