//! Partitions of rv-elim vertices into blocks of interchangeable factors.
//!
//! Three refinements are provided: exact bisimulation, k-path approximate
//! bisimulation, and factor binning, which additionally merges blocks whose
//! computed tables lie within a distance threshold.

mod binning;
mod dominating;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use crate::factor::VariableId;
use crate::rvelim::{result_scope, InternalLabel, RvElimGraph, VertexId, VertexKind};

pub(crate) use binning::align;
pub use binning::{factor_binning_bisimulation, BinnedPartition};
pub use dominating::{brute_force_dominating_set, greedy_dominating_set, is_cover, Cover};

/// Above this many candidate arrangements of tied parents, ties fall back to
/// a signature sort followed by edge index.
const ARRANGEMENT_BUDGET: u64 = 720;

/// Assignment of rv-elim vertices to blocks, plus the parent order every
/// vertex was labeled under (parents sorted by block id).
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<VertexId>>,
    representative: Vec<VertexId>,
    parent_order: Vec<Vec<VertexId>>,
    scope: Vec<Vec<VariableId>>,
}

impl Partition {
    /// Every vertex in its own block, parents in their original order.
    pub fn identity(g: &RvElimGraph) -> Self {
        let n = g.len();
        Partition {
            block_of: (0..n).collect(),
            blocks: (0..n).map(|v| vec![v]).collect(),
            representative: (0..n).collect(),
            parent_order: g.vertices().iter().map(|v| v.parents().to_vec()).collect(),
            scope: g.vertices().iter().map(|v| v.scope.clone()).collect(),
        }
    }

    /// Renumbers raw block ids by smallest member. `reps` overrides the
    /// representative (default: smallest member) of a raw block.
    fn assemble(
        raw: &[usize],
        reps: &HashMap<usize, VertexId>,
        parent_order: Vec<Vec<VertexId>>,
        scope: Vec<Vec<VariableId>>,
    ) -> Self {
        let mut renumber: HashMap<usize, usize> = HashMap::new();
        let mut blocks: Vec<Vec<VertexId>> = Vec::new();
        let mut representative = Vec::new();
        let mut block_of = Vec::with_capacity(raw.len());
        for (v, &r) in raw.iter().enumerate() {
            let b = *renumber.entry(r).or_insert_with(|| {
                blocks.push(Vec::new());
                representative.push(reps.get(&r).copied().unwrap_or(v));
                blocks.len() - 1
            });
            blocks[b].push(v);
            block_of.push(b);
        }
        Partition {
            block_of,
            blocks,
            representative,
            parent_order,
            scope,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_of(&self, v: VertexId) -> usize {
        self.block_of[v]
    }

    pub fn blocks(&self) -> &[Vec<VertexId>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[VertexId] {
        &self.blocks[b]
    }

    pub fn representative(&self, b: usize) -> VertexId {
        self.representative[b]
    }

    /// Parents of `v` in the order used for its label and its evaluation.
    pub fn parent_order(&self, v: VertexId) -> &[VertexId] {
        &self.parent_order[v]
    }

    /// Output scope of `v` under `parent_order`.
    pub fn scope(&self, v: VertexId) -> &[VariableId] {
        &self.scope[v]
    }

    /// Whether every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.num_vertices() != coarser.num_vertices() {
            return false;
        }
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&v| coarser.block_of[v] == coarser.block_of[b[0]]))
    }

    /// Same blocks as sets, regardless of numbering.
    pub fn same_blocks(&self, other: &Partition) -> bool {
        self.refines(other) && other.refines(self)
    }

    /// Block sizes in block order.
    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    /// `vertex block` lines followed by `block size: members` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (v, b) in self.block_of.iter().enumerate() {
            let _ = writeln!(out, "{v} {b}");
        }
        for (b, members) in self.blocks.iter().enumerate() {
            let ms: Vec<String> = members.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(out, "block {b} size {}: {}", members.len(), ms.join(" "));
        }
        out
    }
}

fn next_permutation(xs: &mut [usize]) -> bool {
    if xs.len() < 2 {
        return false;
    }
    let mut i = xs.len() - 1;
    while i > 0 && xs[i - 1] >= xs[i] {
        i -= 1;
    }
    if i == 0 {
        xs.reverse();
        return false;
    }
    let mut j = xs.len() - 1;
    while xs[j] <= xs[i - 1] {
        j -= 1;
    }
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}

/// Number of distinct arrangements of a multiset with the given class counts.
fn multinomial(counts: &[usize]) -> u64 {
    let mut total = 0u64;
    let mut acc = 1u64;
    for &c in counts {
        for i in 1..=c as u64 {
            total += 1;
            acc = acc.saturating_mul(total) / i;
        }
    }
    acc
}

/// Orders the parents of internal vertex `v` by block id. Parents sharing a
/// block are arranged to give the smallest label, which makes the label and
/// the parent-block sequence together an invariant of the vertex's
/// neighborhood up to renaming.
pub(crate) fn canonical_parents(
    g: &RvElimGraph,
    v: VertexId,
    block: &[usize],
    scope: &[Vec<VariableId>],
) -> (Vec<VertexId>, InternalLabel) {
    let VertexKind::Internal {
        parents,
        eliminated,
        op,
    } = &g.vertex(v).kind
    else {
        unreachable!("roots have no parents");
    };
    let cards = g.cardinalities();
    let label_of = |order: &[VertexId]| {
        let scopes: Vec<&[VariableId]> = order.iter().map(|&p| scope[p].as_slice()).collect();
        InternalLabel::new(&scopes, cards, *eliminated, *op).expect("eliminated variable is in some parent")
    };

    let mut order = parents.clone();
    order.sort_by_key(|&p| block[p]);
    let has_ties = order.windows(2).any(|w| block[w[0]] == block[w[1]]);
    if !has_ties {
        let label = label_of(&order);
        return (order, label);
    }

    // invariant signature of each parent: for every scope position, whether
    // the variable is eliminated and where else it occurs
    type Signature = Vec<(bool, usize, Vec<(usize, usize)>)>;
    let signature = |i: usize| -> Signature {
        scope[order[i]]
            .iter()
            .map(|&x| {
                let mut occ: Vec<(usize, usize)> = order
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .filter_map(|(_, &q)| scope[q].iter().position(|&y| y == x).map(|pos| (block[q], pos)))
                    .collect();
                occ.sort_unstable();
                (Some(x) == *eliminated, cards[x.0], occ)
            })
            .collect()
    };
    let sigs: Vec<Signature> = (0..order.len()).map(signature).collect();
    let mut idx: Vec<usize> = (0..order.len()).collect();
    idx.sort_by(|&a, &b| (block[order[a]], &sigs[a]).cmp(&(block[order[b]], &sigs[b])));
    let sorted: Vec<VertexId> = idx.iter().map(|&i| order[i]).collect();
    let sorted_sigs: Vec<&Signature> = idx.iter().map(|&i| &sigs[i]).collect();

    // runs of equal (block, signature): arrange distinct scopes within each run
    struct Run {
        start: usize,
        members: Vec<Vec<VertexId>>,
        arrangement: Vec<usize>,
    }
    let mut runs: Vec<Run> = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len()
            && block[sorted[end]] == block[sorted[start]]
            && sorted_sigs[end] == sorted_sigs[start]
        {
            end += 1;
        }
        if end - start > 1 {
            let mut members: Vec<Vec<VertexId>> = Vec::new();
            let mut arrangement = Vec::new();
            for &p in &sorted[start..end] {
                match members.iter().position(|c| scope[c[0]] == scope[p]) {
                    Some(c) => {
                        members[c].push(p);
                        arrangement.push(c);
                    }
                    None => {
                        members.push(vec![p]);
                        arrangement.push(members.len() - 1);
                    }
                }
            }
            if members.len() > 1 {
                arrangement.sort_unstable();
                runs.push(Run {
                    start,
                    members,
                    arrangement,
                });
            }
        }
        start = end;
    }

    let budget = runs.iter().fold(1u64, |acc, r| {
        let counts: Vec<usize> = r.members.iter().map(|c| c.len()).collect();
        acc.saturating_mul(multinomial(&counts))
    });
    if runs.is_empty() || budget > ARRANGEMENT_BUDGET {
        let label = label_of(&sorted);
        return (sorted, label);
    }

    let materialize = |runs: &[Run]| -> Vec<VertexId> {
        let mut out = sorted.clone();
        for r in runs {
            let mut cursor = vec![0usize; r.members.len()];
            for (k, &c) in r.arrangement.iter().enumerate() {
                out[r.start + k] = r.members[c][cursor[c]];
                cursor[c] += 1;
            }
        }
        out
    };

    let mut best_order = materialize(&runs);
    let mut best = label_of(&best_order);
    loop {
        // odometer over the runs' arrangements
        let mut advanced = false;
        for r in runs.iter_mut() {
            if next_permutation(&mut r.arrangement) {
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
        let candidate = materialize(&runs);
        let label = label_of(&candidate);
        if label < best {
            best = label;
            best_order = candidate;
        }
    }
    (best_order, best)
}

/// Hands out block ids to `members` (ascending) by first appearance of their key.
fn assign_blocks<K: Hash + Eq>(
    members: &[VertexId],
    key: impl Fn(VertexId) -> K,
    next_id: &mut usize,
    block: &mut [usize],
) {
    let mut ids: HashMap<K, usize> = HashMap::new();
    for &v in members {
        let id = *ids.entry(key(v)).or_insert_with(|| {
            *next_id += 1;
            *next_id - 1
        });
        block[v] = id;
    }
}

fn vertices_by_depth(g: &RvElimGraph) -> Vec<Vec<VertexId>> {
    let mut by_depth = vec![Vec::new(); g.height() + 1];
    for (v, x) in g.vertices().iter().enumerate() {
        by_depth[x.depth].push(v);
    }
    by_depth
}

fn root_label_of(g: &RvElimGraph, v: VertexId) -> u32 {
    match g.vertex(v).kind {
        VertexKind::Root { label, .. } => label.0,
        VertexKind::Internal { .. } => unreachable!("depth-0 vertices are roots"),
    }
}

/// Per-vertex parent order and scope, initialized from the graph.
pub(crate) struct Layout {
    pub order: Vec<Vec<VertexId>>,
    pub scope: Vec<Vec<VariableId>>,
}

impl Layout {
    pub fn new(g: &RvElimGraph) -> Self {
        Layout {
            order: g.vertices().iter().map(|v| v.parents().to_vec()).collect(),
            scope: g.vertices().iter().map(|v| v.scope.clone()).collect(),
        }
    }

    /// Orders the parents of `v` canonically under `block` and records the
    /// resulting scope; returns the label.
    pub fn arrange(&mut self, g: &RvElimGraph, v: VertexId, block: &[usize]) -> InternalLabel {
        let (order, label) = canonical_parents(g, v, block, &self.scope);
        let eliminated = match &g.vertex(v).kind {
            VertexKind::Internal { eliminated, .. } => *eliminated,
            VertexKind::Root { .. } => None,
        };
        let scopes: Vec<&[VariableId]> = order.iter().map(|&p| self.scope[p].as_slice()).collect();
        self.scope[v] = result_scope(&scopes, eliminated);
        self.order[v] = order;
        label
    }
}

/// Depth-by-depth refinement: roots by content label, then each internal
/// vertex by its label and the blocks of its ordered parents.
pub fn exact_bisimulation(g: &RvElimGraph) -> Partition {
    let mut block = vec![usize::MAX; g.len()];
    let mut layout = Layout::new(g);
    let mut next_id = 0;
    let by_depth = vertices_by_depth(g);
    assign_blocks(&by_depth[0], |v| root_label_of(g, v), &mut next_id, &mut block);
    for members in &by_depth[1..] {
        let mut keys: BTreeMap<VertexId, (InternalLabel, Vec<usize>)> = BTreeMap::new();
        for &v in members {
            let label = layout.arrange(g, v, &block);
            let parents = layout.order[v].iter().map(|&p| block[p]).collect();
            keys.insert(v, (label, parents));
        }
        assign_blocks(members, |v| keys[&v].clone(), &mut next_id, &mut block);
    }
    Partition::assemble(&block, &HashMap::new(), layout.order, layout.scope)
}

/// Vertices agree up to incoming label paths of length `k`. Each round
/// orders parents and builds keys from the previous round's blocks, and only
/// ever splits the current blocks.
pub fn approx_bisimulation(g: &RvElimGraph, k: usize) -> Partition {
    let n = g.len();
    let by_depth = vertices_by_depth(g);

    // roots by label, internal vertices by depth
    let mut x = vec![0usize; n];
    let mut next_id = 0;
    assign_blocks(&by_depth[0], |v| root_label_of(g, v), &mut next_id, &mut x);
    for members in &by_depth[1..] {
        assign_blocks(members, |_| (), &mut next_id, &mut x);
    }

    let mut layout = Layout::new(g);
    let mut labels: Vec<Option<InternalLabel>> = vec![None; n];
    let sweep = |layout: &mut Layout, labels: &mut Vec<Option<InternalLabel>>, x: &[usize]| {
        for members in &by_depth[1..] {
            for &v in members {
                labels[v] = Some(layout.arrange(g, v, x));
            }
        }
    };

    sweep(&mut layout, &mut labels, &x);
    let mut c = vec![0usize; n];
    let mut next_id = 0;
    assign_blocks(&by_depth[0], |v| root_label_of(g, v), &mut next_id, &mut c);
    for (d, members) in by_depth.iter().enumerate().skip(1) {
        assign_blocks(members, |v| (d, labels[v].clone()), &mut next_id, &mut c);
    }

    for _ in 0..k {
        let x = c.clone();
        let before = c.iter().collect::<std::collections::HashSet<_>>().len();
        sweep(&mut layout, &mut labels, &x);
        let mut next_id = 0;
        let all: Vec<VertexId> = (0..n).collect();
        assign_blocks(
            &all,
            |v| {
                let parents: Vec<usize> = layout.order[v].iter().map(|&p| x[p]).collect();
                (x[v], labels[v].clone(), parents)
            },
            &mut next_id,
            &mut c,
        );
        if next_id == before {
            break;
        }
    }
    Partition::assemble(&c, &HashMap::new(), layout.order, layout.scope)
}
