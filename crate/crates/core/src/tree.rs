//! H-based decision trees.
//!
//! Internal nodes hold hypothesis indices into an [`Instance`]; leaves hold a
//! 0/1 label. A point routes to the `left` child when the hypothesis value is
//! 1 and to the `right` child when it is 0. Serialized trees rely on this.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::instance::{Distribution, Instance};

/// Node cap for [`stack_majority`] unless the caller passes another.
pub const DEFAULT_STACK_CAP: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Internal { h: usize, left: usize, right: usize },
    Leaf { label: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: usize,
}

/// `G(q) = √(q(1−q))`, an upper bound on `min{q, 1−q}`.
pub fn surrogate_g(q: f64) -> f64 {
    (q * (1.0 - q)).max(0.0).sqrt()
}

impl DecisionTree {
    pub fn leaf(label: bool) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { label }],
            root: 0,
        }
    }

    /// Depth-1 tree on `h` with the given labels for `h(x) = 1` and `h(x) = 0`.
    pub fn stump(h: usize, left_label: bool, right_label: bool) -> Self {
        DecisionTree {
            nodes: vec![
                Node::Internal {
                    h,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { label: left_label },
                Node::Leaf { label: right_label },
            ],
            root: 0,
        }
    }

    /// Tree testing `h` at the root with the given subtrees.
    pub fn split(h: usize, left: DecisionTree, right: DecisionTree) -> Self {
        let mut nodes = vec![Node::Leaf { label: false }];
        let l = append(&mut nodes, &left);
        let r = append(&mut nodes, &right);
        nodes[0] = Node::Internal {
            h,
            left: l,
            right: r,
        };
        DecisionTree { nodes, root: 0 }
    }

    /// Validates that `nodes` form a full binary tree rooted at `root` with
    /// every node reachable exactly once.
    pub fn from_parts(nodes: Vec<Node>, root: usize) -> Result<Self> {
        if root >= nodes.len() {
            return Err(Error::Structural(format!("root {root} out of range")));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            if i >= nodes.len() {
                return Err(Error::Structural(format!("child index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Structural(format!(
                    "node {i} reached twice (cycle or shared child)"
                )));
            }
            seen[i] = true;
            if let Node::Internal { left, right, .. } = nodes[i] {
                stack.push(left);
                stack.push(right);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Structural(format!(
                "node {i} is unreachable from the root"
            )));
        }
        Ok(DecisionTree { nodes, root })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Internal { .. }))
            .count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_internal()
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.nodes[self.root], Node::Leaf { .. })
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 0)];
        while let Some((i, d)) = stack.pop() {
            match self.nodes[i] {
                Node::Internal { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
                Node::Leaf { .. } => best = best.max(d),
            }
        }
        best
    }

    /// Leaf node indices in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            match self.nodes[i] {
                Node::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
                Node::Leaf { .. } => out.push(i),
            }
        }
        out
    }

    pub fn label(&self, leaf: usize) -> Option<bool> {
        match self.nodes.get(leaf)? {
            Node::Leaf { label } => Some(*label),
            Node::Internal { .. } => None,
        }
    }

    pub fn set_label(&mut self, leaf: usize, label: bool) -> Result<()> {
        match self.nodes.get_mut(leaf) {
            Some(Node::Leaf { label: l }) => {
                *l = label;
                Ok(())
            }
            _ => Err(Error::Structural(format!("node {leaf} is not a leaf"))),
        }
    }

    pub fn flip_labels(&self) -> DecisionTree {
        let mut t = self.clone();
        for n in &mut t.nodes {
            if let Node::Leaf { label } = n {
                *label = !*label;
            }
        }
        t
    }

    /// Hypothesis indices used at internal nodes, in node order.
    pub fn hypotheses_used(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal { h, .. } => Some(*h),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    /// Errors if some internal node references a hypothesis outside `inst`.
    pub fn check(&self, inst: &Instance) -> Result<()> {
        for h in self.hypotheses_used() {
            inst.hypothesis(h)?;
        }
        Ok(())
    }

    pub fn evaluate(&self, point: usize, inst: &Instance) -> Result<bool> {
        if point >= inst.n_points() {
            return Err(Error::Structural(format!("point {point} out of range")));
        }
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                Node::Leaf { label } => return Ok(label),
                Node::Internal { h, left, right } => {
                    i = if inst.hypothesis(h)?.bits.get(point) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Sets of points reaching each leaf, as `(leaf node, region)`.
    pub fn leaf_regions(&self, inst: &Instance) -> Result<Vec<(usize, Bits)>> {
        self.leaf_regions_with(inst.n_points(), |h| Ok(&inst.hypothesis(h)?.bits))
    }

    /// Leaf regions for an arbitrary hypothesis table (e.g. atom-level extensions).
    pub fn leaf_regions_with<'a>(
        &self,
        width: usize,
        hyp: impl Fn(usize) -> Result<&'a Bits>,
    ) -> Result<Vec<(usize, Bits)>> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root, Bits::ones(width))];
        while let Some((i, region)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { .. } => out.push((i, region)),
                Node::Internal { h, left, right } => {
                    let hb = hyp(h)?;
                    stack.push((right, region.and_not(hb)));
                    stack.push((left, region.and(hb)));
                }
            }
        }
        Ok(out)
    }

    /// The classifier as the set of points labeled 1.
    pub fn behavior(&self, inst: &Instance) -> Result<Bits> {
        let mut b = Bits::zeros(inst.n_points());
        for (leaf, region) in self.leaf_regions(inst)? {
            if self.label(leaf) == Some(true) {
                b = b.or(&region);
            }
        }
        Ok(b)
    }

    /// `H_P(c|T) = Σ_z P(z) G(P(c=1|z))`; zero-mass leaves contribute nothing.
    pub fn surrogate(&self, inst: &Instance, dist: &Distribution) -> Result<f64> {
        let c = inst.concept();
        let not_c = c.not();
        let mut total = 0.0;
        for (_, region) in self.leaf_regions(inst)? {
            let pos = dist.mass(&region.and(c));
            let neg = dist.mass(&region.and(&not_c));
            // P(z) G(pos / P(z)) = √(pos · neg)
            total += (pos * neg).sqrt();
        }
        Ok(total)
    }

    /// Replaces leaf `leaf` with a copy of `sub`. Existing node indices are kept.
    pub fn graft(&mut self, leaf: usize, sub: &DecisionTree) -> Result<()> {
        if !matches!(self.nodes.get(leaf), Some(Node::Leaf { .. })) {
            return Err(Error::Structural(format!("node {leaf} is not a leaf")));
        }
        let offset = self.nodes.len();
        // sub's root lands on `leaf`; the rest are appended in order, skipping the root slot.
        let map = |j: usize| -> usize {
            if j == sub.root {
                leaf
            } else if j < sub.root {
                offset + j
            } else {
                offset + j - 1
            }
        };
        for (j, n) in sub.nodes.iter().enumerate() {
            let moved = match *n {
                Node::Internal { h, left, right } => Node::Internal {
                    h,
                    left: map(left),
                    right: map(right),
                },
                leaf_node => leaf_node,
            };
            if j == sub.root {
                self.nodes[leaf] = moved;
            } else {
                self.nodes.push(moved);
            }
        }
        Ok(())
    }

    /// Splits the deepest leaf on `h` (both children keep its label) until
    /// the tree has depth `d`. Behavior is unchanged.
    pub fn pad_to_depth(&mut self, d: usize, h: usize) {
        while self.depth() < d {
            let leaf = self.deepest_leaf();
            let label = self.label(leaf).expect("leaf");
            self.graft(leaf, &DecisionTree::stump(h, label, label))
                .expect("grafting onto a leaf");
        }
    }

    fn deepest_leaf(&self) -> usize {
        let mut best = (self.root, 0);
        let mut stack = vec![(self.root, 0)];
        while let Some((i, d)) = stack.pop() {
            match self.nodes[i] {
                Node::Internal { left, right, .. } => {
                    stack.push((right, d + 1));
                    stack.push((left, d + 1));
                }
                Node::Leaf { .. } => {
                    if d > best.1 {
                        best = (i, d);
                    }
                }
            }
        }
        best.0
    }

    pub fn to_json(&self) -> String {
        let f = TreeFile {
            nodes: self
                .nodes
                .iter()
                .map(|n| match *n {
                    Node::Internal { h, left, right } => NodeFile::Internal {
                        h,
                        l: left,
                        r: right,
                    },
                    Node::Leaf { label } => NodeFile::Leaf { leaf: label as u8 },
                })
                .collect(),
            root: self.root,
        };
        serde_json::to_string(&f).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TreeFile = serde_json::from_str(text)?;
        let nodes = f
            .nodes
            .into_iter()
            .map(|n| match n {
                NodeFile::Internal { h, l, r } => Ok(Node::Internal {
                    h,
                    left: l,
                    right: r,
                }),
                NodeFile::Leaf { leaf: 0 } => Ok(Node::Leaf { label: false }),
                NodeFile::Leaf { leaf: 1 } => Ok(Node::Leaf { label: true }),
                NodeFile::Leaf { leaf } => {
                    Err(Error::Structural(format!("leaf label {leaf} is not 0/1")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        DecisionTree::from_parts(nodes, f.root)
    }

    /// Graphviz rendering; internal nodes carry hypothesis names, edges the routed value.
    pub fn to_dot(&self, inst: &Instance) -> Result<String> {
        use std::fmt::Write;
        self.check(inst)?;
        let mut s = String::from("digraph tree {\n  node [fontname=\"Helvetica\"];\n");
        let mut order = Vec::new();
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            order.push(i);
            if let Node::Internal { left, right, .. } = self.nodes[i] {
                stack.push(right);
                stack.push(left);
            }
        }
        for &i in &order {
            match self.nodes[i] {
                Node::Internal { h, .. } => {
                    let name = inst.hypotheses()[h]
                        .name
                        .replace('\\', "\\\\")
                        .replace('"', "\\\"");
                    writeln!(s, "  n{i} [label=\"{name}\", shape=box];").unwrap();
                }
                Node::Leaf { label } => {
                    writeln!(s, "  n{i} [label=\"{}\", shape=ellipse];", label as u8).unwrap();
                }
            }
        }
        for &i in &order {
            if let Node::Internal { left, right, .. } = self.nodes[i] {
                writeln!(s, "  n{i} -> n{left} [label=\"1\"];").unwrap();
                writeln!(s, "  n{i} -> n{right} [label=\"0\"];").unwrap();
            }
        }
        s.push_str("}\n");
        Ok(s)
    }
}

fn append(nodes: &mut Vec<Node>, t: &DecisionTree) -> usize {
    let offset = nodes.len();
    nodes.extend(t.nodes.iter().map(|n| match *n {
        Node::Internal { h, left, right } => Node::Internal {
            h,
            left: left + offset,
            right: right + offset,
        },
        leaf => leaf,
    }));
    offset + t.root
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum NodeFile {
    Internal { h: usize, l: usize, r: usize },
    Leaf { leaf: u8 },
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    nodes: Vec<NodeFile>,
    root: usize,
}

/// Node count of the stacked tree, saturating.
fn stacked_size(trees: &[DecisionTree]) -> u128 {
    let mut rest: u128 = 1;
    for t in trees.iter().rev() {
        let internal = t.n_internal() as u128;
        let leaves = t.n_leaves() as u128;
        rest = internal.saturating_add(leaves.saturating_mul(rest));
    }
    rest
}

/// Majority vote of `trees` as a single tree: every leaf of `T₁` is replaced by
/// a copy of `T₂`, and so on; each final leaf takes the majority of the
/// constituent leaf labels on its path, ties going to 0.
pub fn stack_majority(trees: &[DecisionTree], node_cap: usize) -> Result<DecisionTree> {
    if trees.is_empty() {
        return Err(Error::Arity);
    }
    let size = stacked_size(trees);
    if size > node_cap as u128 {
        return Err(Error::Budget {
            what: "stack_majority",
            limit: node_cap,
            reached: size.min(usize::MAX as u128) as usize,
        });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut ones = 0usize;
    fn build(
        trees: &[DecisionTree],
        ti: usize,
        node: usize,
        ones: &mut usize,
        out: &mut Vec<Node>,
    ) -> usize {
        match trees[ti].nodes[node] {
            Node::Internal { h, left, right } => {
                let idx = out.len();
                out.push(Node::Leaf { label: false });
                let l = build(trees, ti, left, ones, out);
                let r = build(trees, ti, right, ones, out);
                out[idx] = Node::Internal {
                    h,
                    left: l,
                    right: r,
                };
                idx
            }
            Node::Leaf { label } => {
                *ones += label as usize;
                let idx = if ti + 1 == trees.len() {
                    out.push(Node::Leaf {
                        label: 2 * *ones > trees.len(),
                    });
                    out.len() - 1
                } else {
                    build(trees, ti + 1, trees[ti + 1].root, ones, out)
                };
                *ones -= label as usize;
                idx
            }
        }
    }
    let root = build(trees, 0, trees[0].root, &mut ones, &mut out);
    Ok(DecisionTree { nodes: out, root })
}

/// Random full binary tree over `n_hyps` hypotheses with depth at most `max_depth`.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n_hyps: usize, max_depth: usize) -> DecisionTree {
    fn grow<R: Rng + ?Sized>(rng: &mut R, n_hyps: usize, depth_left: usize) -> DecisionTree {
        if n_hyps == 0 || depth_left == 0 || rng.gen_bool(0.3) {
            return DecisionTree::leaf(rng.gen());
        }
        let h = rng.gen_range(0..n_hyps);
        let l = grow(rng, n_hyps, depth_left - 1);
        let r = grow(rng, n_hyps, depth_left - 1);
        DecisionTree::split(h, l, r)
    }
    grow(rng, n_hyps, max_depth)
}
