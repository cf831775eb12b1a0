//! Network assembly.
//!
//! Construction code describes a DAG of ReLU units whose inputs are rational
//! linear combinations of earlier units; [`Graph::finish`] lowers the DAG to
//! a strictly layered [`QuantizedNetwork`]:
//!
//! - each unit lands on layer `1 + max(source layers)`;
//! - values consumed across a layer gap get pass-through ReLU chains
//!   (sound because every ReLU output is nonnegative; raw inputs may only be
//!   chained when the graph declares them nonnegative);
//! - every rational coefficient is lowered to parallel codebook edges, e.g.
//!   coefficient 2 under the {1/2, -1/2} book becomes a multiplicity-4 edge
//!   of weight 1/2. A coefficient that is not an integer combination of
//!   codebook values is a construction bug and panics.

use crate::codebook::WeightCodebook;
use crate::network::{Activation, Edge, Layer, QuantizedNetwork, Unit};
use crate::rational::Rat;
use num_traits::{Signed, Zero};
use std::collections::HashMap;

/// Handle to an input (first `input_dim` ids) or a ReLU unit of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node(usize);

/// A rational linear combination of nodes plus a constant term.
#[derive(Debug, Clone, Default)]
pub struct Comb {
    terms: Vec<(Node, Rat)>,
    bias: Rat,
}

impl Comb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn of(node: Node) -> Self {
        Self::new().term(node, Rat::from_integer(1.into()))
    }

    pub fn term(mut self, node: Node, coeff: Rat) -> Self {
        if !coeff.is_zero() {
            self.terms.push((node, coeff));
        }
        self
    }

    pub fn bias(mut self, b: Rat) -> Self {
        self.bias += b;
        self
    }

    pub fn neg(mut self) -> Self {
        for (_, c) in &mut self.terms {
            *c = -c.clone();
        }
        self.bias = -self.bias.clone();
        self
    }

    pub fn add(mut self, other: &Comb) -> Self {
        for (n, c) in &other.terms {
            self.terms.push((*n, c.clone()));
        }
        self.bias += &other.bias;
        self
    }

    pub fn scaled(mut self, s: &Rat) -> Self {
        for (_, c) in &mut self.terms {
            *c *= s;
        }
        self.bias *= s;
        self.terms.retain(|(_, c)| !c.is_zero());
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.bias.is_zero()
    }
}

/// Expresses `coeff` as an integer combination of codebook values:
/// repeatedly take the largest same-sign value not exceeding the remainder
/// (with maximal multiplicity), falling back to one overshooting copy of the
/// smallest same-sign value when every same-sign value is too large.
pub fn realize_coeff(codebook: &WeightCodebook, coeff: &Rat) -> Vec<(usize, u64)> {
    let mut picks: Vec<(usize, u64)> = Vec::new();
    let mut rem = coeff.clone();
    let mut steps = 0;
    while !rem.is_zero() {
        steps += 1;
        assert!(
            steps <= 4096,
            "coefficient {coeff} is not realizable over this codebook"
        );
        let want_pos = rem.is_positive();
        let fit = codebook
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_positive() == want_pos && !v.is_zero() && v.abs() <= rem.abs())
            .max_by(|a, b| a.1.abs().cmp(&b.1.abs()));
        if let Some((idx, v)) = fit {
            let mult: u64 = (&rem / v)
                .floor()
                .to_integer()
                .try_into()
                .expect("multiplicity fits u64");
            picks.push((idx, mult));
            rem -= v * Rat::from_integer(mult.into());
        } else {
            let (idx, v) = codebook
                .values()
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_positive() == want_pos && !v.is_zero())
                .min_by(|a, b| a.1.abs().cmp(&b.1.abs()))
                .unwrap_or_else(|| panic!("codebook has no value with the sign of {coeff}"));
            picks.push((idx, 1));
            rem -= v;
        }
    }
    picks
}

pub struct Graph {
    codebook: WeightCodebook,
    input_dim: usize,
    inputs_nonneg: bool,
    /// Pre-activation combination of each ReLU node, in creation order.
    nodes: Vec<Comb>,
}

impl Graph {
    /// `inputs_nonneg` permits pass-through chaining of raw inputs (valid
    /// only when the input domain is within `[0, inf)`).
    pub fn new(codebook: WeightCodebook, input_dim: usize, inputs_nonneg: bool) -> Self {
        Self {
            codebook,
            input_dim,
            inputs_nonneg,
            nodes: Vec::new(),
        }
    }

    pub fn codebook(&self) -> &WeightCodebook {
        &self.codebook
    }

    pub fn input(&self, i: usize) -> Node {
        assert!(i < self.input_dim, "input index {i} out of range");
        Node(i)
    }

    /// Adds a ReLU unit computing `max(0, comb)`.
    pub fn relu(&mut self, comb: Comb) -> Node {
        self.nodes.push(comb);
        Node(self.input_dim + self.nodes.len() - 1)
    }

    /// Lowers to a layered network with identity output units.
    pub fn finish(mut self, outputs: Vec<Comb>) -> QuantizedNetwork {
        assert!(!outputs.is_empty());
        let d = self.input_dim;
        let mut nodes = std::mem::take(&mut self.nodes);

        // Keep only nodes reachable from the outputs.
        let mut live = vec![false; nodes.len()];
        let mut stack: Vec<usize> = Vec::new();
        for c in &outputs {
            for (Node(id), _) in &c.terms {
                if *id >= d && !live[id - d] {
                    live[id - d] = true;
                    stack.push(id - d);
                }
            }
        }
        while let Some(i) = stack.pop() {
            for (Node(id), _) in &nodes[i].terms.clone() {
                if *id >= d && !live[id - d] {
                    live[id - d] = true;
                    stack.push(id - d);
                }
            }
        }
        let n_live = live.iter().filter(|&&l| l).count();
        if n_live < nodes.len() {
            // Compact, remapping ids.
            let mut remap: Vec<Option<usize>> = vec![None; nodes.len()];
            let mut kept = Vec::with_capacity(n_live);
            for (i, node) in nodes.into_iter().enumerate() {
                if live[i] {
                    remap[i] = Some(kept.len());
                    kept.push(node);
                }
            }
            let fix = |c: &mut Comb| {
                for (Node(id), _) in &mut c.terms {
                    if *id >= d {
                        *id = d + remap[*id - d].expect("live source");
                    }
                }
            };
            for c in &mut kept {
                fix(c);
            }
            nodes = kept;
            let mut outs = outputs;
            for c in &mut outs {
                fix(c);
            }
            return Self {
                codebook: self.codebook,
                input_dim: d,
                inputs_nonneg: self.inputs_nonneg,
                nodes,
            }
            .finish(outs);
        }

        // Levels: inputs at 0, each node one past its deepest source.
        let level_of = |levels: &Vec<usize>, Node(id): &Node| -> usize {
            if *id < d {
                0
            } else {
                levels[*id - d]
            }
        };
        let mut levels: Vec<usize> = Vec::with_capacity(nodes.len());
        for c in &nodes {
            let lv = 1 + c
                .terms
                .iter()
                .map(|(n, _)| level_of(&levels, n))
                .max()
                .unwrap_or(0);
            levels.push(lv);
        }
        let out_level = 1 + outputs
            .iter()
            .flat_map(|c| c.terms.iter())
            .map(|(n, _)| level_of(&levels, n))
            .max()
            .unwrap_or(0);

        // Pass-through chains for values consumed across layer gaps.
        let mut pass_memo: HashMap<(usize, usize), usize> = HashMap::new();
        let one = Rat::from_integer(1.into());
        let n_orig = nodes.len();
        let rep = |nodes: &mut Vec<Comb>,
                       levels: &mut Vec<usize>,
                       pass_memo: &mut HashMap<(usize, usize), usize>,
                       id: usize,
                       at: usize|
         -> usize {
            let base = if id < d { 0 } else { levels[id - d] };
            assert!(at >= base, "consumer above its source");
            if at == base {
                return id;
            }
            assert!(
                id >= d || self.inputs_nonneg,
                "cannot chain a possibly-negative raw input across layers"
            );
            let mut cur = id;
            for lv in base + 1..=at {
                cur = *pass_memo.entry((id, lv)).or_insert_with(|| {
                    nodes.push(Comb::new().term(Node(cur), one.clone()));
                    levels.push(lv);
                    d + nodes.len() - 1
                });
            }
            cur
        };
        for i in 0..n_orig {
            let target = levels[i] - 1;
            let mut terms = std::mem::take(&mut nodes[i].terms);
            for (n, _) in &mut terms {
                n.0 = rep(&mut nodes, &mut levels, &mut pass_memo, n.0, target);
            }
            nodes[i].terms = terms;
        }
        let mut outputs = outputs;
        for c in &mut outputs {
            for (n, _) in &mut c.terms {
                n.0 = rep(&mut nodes, &mut levels, &mut pass_memo, n.0, out_level - 1);
            }
        }

        // Group nodes by level and emit layers.
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); out_level];
        for (i, &lv) in levels.iter().enumerate() {
            assert!(lv < out_level, "unit deeper than the output layer");
            by_level[lv].push(i);
        }
        let mut slot: Vec<usize> = vec![usize::MAX; nodes.len()];
        for lv in 1..out_level {
            for (k, &i) in by_level[lv].iter().enumerate() {
                slot[i] = k;
            }
        }
        let src_slot = |Node(id): &Node| -> usize {
            if *id < d {
                *id
            } else {
                slot[*id - d]
            }
        };
        let mut layers: Vec<Layer> = Vec::new();
        for lv in 1..out_level {
            let prev_len = if lv == 1 { d } else { by_level[lv - 1].len() };
            let mut const_used = false;
            let units = by_level[lv]
                .iter()
                .map(|&i| {
                    self.lower_unit(&nodes[i], prev_len, &mut const_used, &src_slot)
                })
                .collect();
            layers.push(Layer {
                units,
                const_in_prev: const_used,
            });
        }
        // Identity output layer.
        let prev_len = if out_level == 1 {
            d
        } else {
            by_level[out_level - 1].len()
        };
        let mut const_used = false;
        let mut units: Vec<Unit> = outputs
            .iter()
            .map(|c| self.lower_unit(c, prev_len, &mut const_used, &src_slot))
            .collect();
        for u in &mut units {
            u.activation = Activation::Identity;
        }
        layers.push(Layer {
            units,
            const_in_prev: const_used,
        });
        QuantizedNetwork {
            codebook: self.codebook,
            layers,
            input_dim: d,
            domain: None,
        }
    }

    fn lower_unit(
        &self,
        comb: &Comb,
        prev_len: usize,
        const_used: &mut bool,
        src_slot: &dyn Fn(&Node) -> usize,
    ) -> Unit {
        let mut incoming = Vec::new();
        for (node, coeff) in &comb.terms {
            for (weight_idx, mult) in realize_coeff(&self.codebook, coeff) {
                incoming.push(Edge {
                    src: src_slot(node),
                    weight_idx,
                    mult,
                });
            }
        }
        if !comb.bias.is_zero() {
            *const_used = true;
            for (weight_idx, mult) in realize_coeff(&self.codebook, &comb.bias) {
                incoming.push(Edge {
                    src: prev_len,
                    weight_idx,
                    mult,
                });
            }
        }
        Unit {
            activation: Activation::Relu,
            incoming,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn half_book() -> WeightCodebook {
        WeightCodebook::nonlinear(vec![rat(1, 2), rat(-1, 2)]).unwrap()
    }

    #[test]
    fn lowers_integer_and_dyadic_coefficients() {
        let mut g = Graph::new(half_book(), 1, true);
        let x = g.input(0);
        // sigma(2x - 1/2)
        let u = g.relu(Comb::of(x).scaled(&rat_int(2)).bias(rat(-1, 2)));
        let net = g.finish(vec![Comb::of(u)]);
        assert!(net.validate().is_empty());
        assert_eq!(net.eval(&[rat(1, 2)]).unwrap(), rat(1, 2));
        assert_eq!(net.eval(&[rat(1, 8)]).unwrap(), rat_int(0));
        // coefficient 2 -> four parallel 1/2 edges; bias -1/2 -> one edge;
        // output coefficient 1 -> two 1/2 edges.
        assert_eq!(net.complexity().weight_count, 7);
    }

    #[test]
    fn inserts_pass_chains_across_gaps() {
        let mut g = Graph::new(half_book(), 1, true);
        let x = g.input(0);
        let a = g.relu(Comb::of(x)); // level 1
        let b = g.relu(Comb::of(a)); // level 2
        let c = g.relu(Comb::of(b)); // level 3
        // Output mixes levels 1 and 3: `a` needs a two-layer pass chain.
        let net = g.finish(vec![Comb::of(c).add(&Comb::of(a))]);
        assert!(net.validate().is_empty());
        assert_eq!(net.complexity().depth, 4);
        assert_eq!(net.eval(&[rat(2, 7)]).unwrap(), rat(4, 7));
    }

    #[test]
    fn pass_chains_are_shared() {
        let mut g = Graph::new(half_book(), 1, true);
        let x = g.input(0);
        let a = g.relu(Comb::of(x));
        let deep = g.relu(Comb::of(a));
        let deep2 = g.relu(Comb::of(deep));
        // Two consumers of `a` at the same level reuse one chain unit.
        let o1 = Comb::of(deep2).add(&Comb::of(a));
        let o2 = Comb::of(a).scaled(&rat_int(2));
        let net = g.finish(vec![o1, o2]);
        assert!(net.validate().is_empty());
        assert_eq!(net.complexity().max_width, 2); // chain unit + main chain
        assert_eq!(
            net.eval_vec(&[rat(1, 3)]).unwrap(),
            vec![rat(2, 3), rat(2, 3)]
        );
    }

    #[test]
    fn dead_nodes_are_pruned() {
        let mut g = Graph::new(half_book(), 1, true);
        let x = g.input(0);
        let a = g.relu(Comb::of(x));
        let _unused = g.relu(Comb::of(x).scaled(&rat_int(2)));
        let net = g.finish(vec![Comb::of(a)]);
        assert_eq!(net.complexity().max_width, 1);
    }

    #[test]
    fn bias_only_output() {
        let g = Graph::new(half_book(), 1, false);
        let net = g.finish(vec![Comb::new().bias(rat(1, 2))]);
        assert!(net.validate().is_empty());
        assert_eq!(net.eval(&[rat(1, 3)]).unwrap(), rat(1, 2));
    }

    #[test]
    fn zero_output_is_a_valid_empty_unit() {
        let g = Graph::new(half_book(), 1, false);
        let net = g.finish(vec![Comb::new()]);
        assert!(net.validate().is_empty());
        assert_eq!(net.eval(&[rat(-1, 3)]).unwrap(), rat_int(0));
    }

    #[test]
    #[should_panic(expected = "possibly-negative raw input")]
    fn signed_inputs_cannot_be_chained() {
        let mut g = Graph::new(half_book(), 1, false);
        let x = g.input(0);
        let a = g.relu(Comb::of(x));
        let b = g.relu(Comb::of(a));
        // x consumed at level 2 would need a chain, which is unsound here.
        let c = g.relu(Comb::of(b).add(&Comb::of(x)));
        let _ = g.finish(vec![Comb::of(c)]);
    }

    #[test]
    fn overshoot_on_linear_book() {
        // Linear book {-1, 1/4, 2/4, 3/4}: -1/2 must become -1 + 2/4.
        let picks = realize_coeff(&WeightCodebook::linear(4).unwrap(), &rat(-1, 2));
        let cb = WeightCodebook::linear(4).unwrap();
        let total: Rat = picks
            .iter()
            .map(|&(i, m)| cb.value(i).unwrap() * Rat::from_integer(m.into()))
            .sum();
        assert_eq!(total, rat(-1, 2));
    }

    #[test]
    #[should_panic(expected = "not realizable")]
    fn unrealizable_coefficient_panics() {
        realize_coeff(&half_book(), &rat(1, 3));
    }
}
