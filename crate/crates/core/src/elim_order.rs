//! Elimination order from a compressed interaction graph.
//!
//! Variables are grouped by bisimulation over the interaction graph, a
//! block-weighted min-size heuristic orders the groups, and each group is
//! expanded back to its member variables. Keeping symmetric variables adjacent
//! in the order is what lets the rv-elim graph expose shared computations.

use std::collections::{BTreeMap, BTreeSet};

use crate::factor::VariableId;
use crate::model::{Model, QuerySet};
use crate::rvelim::{root_labels, RootLabel};
use crate::scalar::Scalar;

/// Vertex color: cardinality, whether the variable is queried, and the sorted
/// `(factor label, scope position)` pairs of every factor it appears in.
pub type Color = (usize, bool, Vec<(RootLabel, usize)>);

/// Co-occurrence graph over the free variables of a model.
#[derive(Clone, Debug)]
pub struct InteractionGraph {
    vars: Vec<VariableId>,
    cards: Vec<usize>,
    query: Vec<bool>,
    colors: Vec<Color>,
    adj: Vec<BTreeSet<usize>>,
}

impl InteractionGraph {
    pub fn new<T: Scalar>(model: &Model<T>, queries: &QuerySet) -> Self {
        let vars: Vec<VariableId> = model.free_variables().collect();
        let local: BTreeMap<VariableId, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let labels = root_labels(model.factors());
        let mut pairs: Vec<Vec<(RootLabel, usize)>> = vec![Vec::new(); vars.len()];
        let mut adj = vec![BTreeSet::new(); vars.len()];
        for (f, &label) in model.factors().iter().zip(&labels) {
            let members: Vec<usize> = f.scope().iter().map(|v| local[v]).collect();
            for (pos, &a) in members.iter().enumerate() {
                pairs[a].push((label, pos));
                for &b in &members {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        let colors = vars
            .iter()
            .zip(pairs)
            .map(|(&v, mut p)| {
                p.sort();
                (model.cardinality(v), queries.contains(v), p)
            })
            .collect();
        InteractionGraph {
            cards: vars.iter().map(|&v| model.cardinality(v)).collect(),
            query: vars.iter().map(|&v| queries.contains(v)).collect(),
            vars,
            colors,
            adj,
        }
    }

    pub fn variables(&self) -> &[VariableId] {
        &self.vars
    }

    pub fn color(&self, v: VariableId) -> Option<&Color> {
        self.vars.iter().position(|&x| x == v).map(|i| &self.colors[i])
    }

    pub fn neighbors(&self, v: VariableId) -> Vec<VariableId> {
        match self.vars.iter().position(|&x| x == v) {
            Some(i) => self.adj[i].iter().map(|&j| self.vars[j]).collect(),
            None => Vec::new(),
        }
    }
}

/// Groups of bisimilar variables, numbered by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableBlocks {
    pub blocks: Vec<Vec<VariableId>>,
    /// Indexed like `InteractionGraph::variables`.
    block_of: Vec<usize>,
}

impl VariableBlocks {
    pub fn block_of(&self, g: &InteractionGraph, v: VariableId) -> Option<usize> {
        g.vars.iter().position(|&x| x == v).map(|i| self.block_of[i])
    }
}

fn renumber<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let distinct: BTreeSet<K> = keys.iter().cloned().collect();
    let index: BTreeMap<K, usize> = distinct.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
    keys.iter().map(|k| index[k]).collect()
}

/// Coarsest color-respecting partition in which same-block variables see
/// equal multisets of neighbor blocks.
pub fn model_bisimulation(g: &InteractionGraph) -> VariableBlocks {
    let mut block = renumber(&g.colors);
    let mut count = block.iter().collect::<BTreeSet<_>>().len();
    loop {
        let keys: Vec<(usize, Vec<usize>)> = (0..g.vars.len())
            .map(|i| {
                let mut nb: Vec<usize> = g.adj[i].iter().map(|&j| block[j]).collect();
                nb.sort_unstable();
                (block[i], nb)
            })
            .collect();
        let next = renumber(&keys);
        let next_count = next.iter().collect::<BTreeSet<_>>().len();
        block = next;
        if next_count == count {
            break;
        }
        count = next_count;
    }

    // renumber by smallest member so block ids read in variable order
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &b) in block.iter().enumerate() {
        first.entry(b).or_insert(i);
    }
    let mut order: Vec<(usize, usize)> = first.into_iter().map(|(b, i)| (i, b)).collect();
    order.sort();
    let rank: BTreeMap<usize, usize> = order.iter().enumerate().map(|(r, &(_, b))| (b, r)).collect();
    let block_of: Vec<usize> = block.iter().map(|b| rank[b]).collect();
    let mut blocks = vec![Vec::new(); order.len()];
    for (i, &b) in block_of.iter().enumerate() {
        blocks[b].push(g.vars[i]);
    }
    VariableBlocks { blocks, block_of }
}

/// Min-size heuristic on the block graph. Eliminating block `B` costs
/// `card(B)^(|B| if B is self-adjacent else 1) * prod_N card(N)^|N|` over the
/// neighbor blocks `N`; the cheapest eliminable block goes next, ties by id.
pub fn min_size_order(g: &InteractionGraph, p: &VariableBlocks) -> Vec<usize> {
    let nb = p.blocks.len();
    let size: Vec<usize> = p.blocks.iter().map(|b| b.len()).collect();
    let mut card = vec![1usize; nb];
    let mut eliminable = vec![true; nb];
    let mut adj = vec![BTreeSet::new(); nb];
    let mut self_loop = vec![false; nb];
    for i in 0..g.vars.len() {
        let b = p.block_of[i];
        card[b] = g.cards[i];
        if g.query[i] {
            eliminable[b] = false;
        }
        for &j in &g.adj[i] {
            let c = p.block_of[j];
            if c == b {
                self_loop[b] = true;
            } else {
                adj[b].insert(c);
            }
        }
    }

    let log_cost = |b: usize, adj: &[BTreeSet<usize>], self_loop: &[bool]| -> f64 {
        let own = if self_loop[b] { size[b] } else { 1 };
        let mut c = own as f64 * (card[b] as f64).log2();
        for &n in &adj[b] {
            c += size[n] as f64 * (card[n] as f64).log2();
        }
        c
    };

    let mut alive = vec![true; nb];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, usize)> = None;
        for b in (0..nb).filter(|&b| alive[b] && eliminable[b]) {
            let c = log_cost(b, &adj, &self_loop);
            if best.is_none_or(|(bc, _)| c < bc - 1e-9) {
                best = Some((c, b));
            }
        }
        let Some((_, b)) = best else { break };
        alive[b] = false;
        out.push(b);
        let ns: Vec<usize> = adj[b].iter().copied().collect();
        for &n in &ns {
            adj[n].remove(&b);
            if size[n] > 1 && size[b] < size[n] {
                self_loop[n] = true;
            }
            for &m in &ns {
                if m != n {
                    adj[n].insert(m);
                }
            }
        }
        adj[b].clear();
    }
    out
}

/// Concatenates block members (ascending) in block order, skipping query variables.
pub fn expand_order(order: &[usize], p: &VariableBlocks, queries: &QuerySet) -> Vec<VariableId> {
    let mut out = Vec::new();
    for &b in order {
        let mut members: Vec<VariableId> = p.blocks[b].iter().copied().filter(|&v| !queries.contains(v)).collect();
        members.sort();
        out.extend(members);
    }
    out
}

/// Full pipeline: interaction graph, bisimulation, min-size, expansion.
pub fn elimination_order<T: Scalar>(model: &Model<T>, queries: &QuerySet) -> Vec<VariableId> {
    let g = InteractionGraph::new(model, queries);
    let p = model_bisimulation(&g);
    let order = min_size_order(&g, &p);
    expand_order(&order, &p, queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::Factor;
    use crate::model::tests::fig1;

    fn v(i: usize) -> VariableId {
        VariableId(i)
    }

    fn fig1_queries() -> QuerySet {
        QuerySet::new(vec![v(4), v(5), v(6)]).unwrap()
    }

    #[test]
    fn fig1_variable_blocks() {
        let m = fig1();
        let g = InteractionGraph::new(&m, &fig1_queries());
        let p = model_bisimulation(&g);
        assert_eq!(
            p.blocks,
            vec![vec![v(0), v(1)], vec![v(2)], vec![v(3)], vec![v(4), v(5)], vec![v(6)]]
        );
    }

    #[test]
    fn fig1_order_eliminates_s_before_t() {
        let m = fig1();
        let order = elimination_order(&m, &fig1_queries());
        assert_eq!(order, vec![v(2), v(0), v(1), v(3)]);
    }

    #[test]
    fn refinement_is_idempotent() {
        let m = fig1();
        let g = InteractionGraph::new(&m, &fig1_queries());
        let p = model_bisimulation(&g);
        let again = model_bisimulation(&g);
        assert_eq!(p, again);
        // same-block variables have equal neighbor-block multisets
        for block in &p.blocks {
            let sig = |x: VariableId| {
                let mut s: Vec<usize> = g.neighbors(x).iter().map(|&n| p.block_of(&g, n).unwrap()).collect();
                s.sort();
                s
            };
            for &x in block {
                assert_eq!(sig(x), sig(block[0]));
                assert_eq!(g.color(x), g.color(block[0]));
            }
        }
    }

    fn star(leaves: usize) -> Model<f64> {
        let mut fs = vec![Factor::new(vec![v(0)], vec![2], vec![0.3, 0.7]).unwrap()];
        for i in 1..=leaves {
            fs.push(Factor::new(vec![v(i), v(0)], vec![2, 2], vec![0.1, 0.9, 0.4, 0.6]).unwrap());
        }
        Model::new(vec![2; leaves + 1], fs).unwrap()
    }

    #[test]
    fn star_leaves_form_one_block_eliminated_first() {
        let m = star(4);
        let q = QuerySet::default();
        let g = InteractionGraph::new(&m, &q);
        let p = model_bisimulation(&g);
        assert_eq!(p.blocks, vec![vec![v(0)], vec![v(1), v(2), v(3), v(4)]]);
        assert_eq!(min_size_order(&g, &p), vec![1, 0]);
        assert_eq!(elimination_order(&m, &q), vec![v(1), v(2), v(3), v(4), v(0)]);
    }

    #[test]
    fn single_block_and_all_queried() {
        let m = star(1);
        let q = QuerySet::new(vec![v(0)]).unwrap();
        assert_eq!(elimination_order(&m, &q), vec![v(1)]);
        let all = QuerySet::new(vec![v(0), v(1)]).unwrap();
        assert!(elimination_order(&m, &all).is_empty());
    }

    #[test]
    fn disconnected_identical_priors_share_a_block() {
        let f = Factor::new(vec![v(0)], vec![2], vec![0.5, 0.5]).unwrap();
        let g2 = Factor::new(vec![v(1)], vec![2], vec![0.5, 0.5]).unwrap();
        let h = Factor::new(vec![v(2)], vec![3], vec![0.2, 0.3, 0.5]).unwrap();
        let m = Model::new(vec![2, 2, 3], vec![f, g2, h]).unwrap();
        let q = QuerySet::default();
        let g = InteractionGraph::new(&m, &q);
        assert_eq!(model_bisimulation(&g).blocks, vec![vec![v(0), v(1)], vec![v(2)]]);
    }

    #[test]
    fn order_is_a_permutation_with_contiguous_blocks() {
        let cfg = crate::model::GeneratorConfig {
            layer_sizes: vec![12, 6, 3],
            domain_size: 2,
            parents_per_child: 2,
            prior_share_period: 3,
            max_parent_fanout: 1,
            noise_std: 0.0,
            seed: 3,
        };
        let gm = crate::model::generate_layered_bn::<f64>(&cfg).unwrap();
        let order = elimination_order(&gm.model, &gm.queries);
        let mut sorted = order.clone();
        sorted.sort();
        let expect: Vec<_> = (0..18).map(v).collect();
        assert_eq!(sorted, expect);

        let g = InteractionGraph::new(&gm.model, &gm.queries);
        let p = model_bisimulation(&g);
        for block in &p.blocks {
            let pos: Vec<usize> = block.iter().filter_map(|x| order.iter().position(|y| y == x)).collect();
            if let (Some(lo), Some(hi)) = (pos.iter().min(), pos.iter().max()) {
                assert_eq!(hi - lo + 1, pos.len());
            }
        }
        assert_eq!(order, elimination_order(&gm.model, &gm.queries));
    }
}
