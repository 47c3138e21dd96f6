//! Draft trees for speculative decoding.
//!
//! A draft tree is rooted at the last token of the committed prefix. Every
//! other node holds a candidate continuation token together with the draft
//! model's conditional probability of that token given the path leading to
//! it. The product of conditional probabilities along the root path is the
//! node's `path_score`; summing path scores over all non-root nodes gives the
//! tree's expected acceptance length, the quantity the adaptive builder
//! maximizes.
//!
//! Nodes live in an arena (`Vec`) and are addressed by [`NodeId`]. The root
//! is always arena slot 0. The root carries no probability of its own: its
//! `path_score` is fixed at 1.0 so that children can multiply into it, and it
//! is excluded from every scoring and selection operation.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Index into a model vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Arena handle for a node of one particular [`DraftTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    /// Position in the owning tree's arena. Stable for the tree's lifetime.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("node {0} does not exist in this tree")]
    UnknownNode(usize),
    #[error("conditional probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("parent {parent} already has a child with token {token}")]
    DuplicateSiblingToken { parent: usize, token: TokenId },
}

/// One node of a draft tree.
#[derive(Debug, Clone)]
pub struct DraftNode {
    token: TokenId,
    cond_prob: f64,
    path_score: f64,
    parent: Option<NodeId>,
    depth: usize,
    children: Vec<NodeId>,
}

impl DraftNode {
    pub fn token(&self) -> TokenId {
        self.token
    }

    /// Draft probability of `token` conditioned on the path to the parent.
    /// 1.0 for the root.
    pub fn cond_prob(&self) -> f64 {
        self.cond_prob
    }

    /// Product of conditional probabilities along the root path, this node
    /// included. 1.0 for the root.
    pub fn path_score(&self) -> f64 {
        self.path_score
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    /// Edge distance from the root; the root is at depth 0.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Children in attachment order.
    pub fn children(&self) -> &[NodeId] {
        &self.children
    }
}

/// Sort key for ranking nodes by path score.
///
/// Orders by descending `path_score`, then ascending `depth`, then ascending
/// arena index. Because a parent always precedes its children in both depth
/// and arena order, any top-n prefix of this order is closed under taking
/// parents, which keeps selected node sets connected to the root.
#[derive(Debug, Clone, Copy)]
pub struct NodeScoreEntry {
    pub handle: NodeId,
    pub path_score: f64,
    pub depth: usize,
}

impl Ord for NodeScoreEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Path scores are products of probabilities in [0, 1]; never NaN.
        other
            .path_score
            .total_cmp(&self.path_score)
            .then(self.depth.cmp(&other.depth))
            .then(self.handle.cmp(&other.handle))
    }
}

impl PartialOrd for NodeScoreEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for NodeScoreEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for NodeScoreEntry {}

/// Rooted candidate tree produced by a draft model.
#[derive(Debug, Clone)]
pub struct DraftTree {
    nodes: Vec<DraftNode>,
    // layers[d] holds the nodes at depth d in arena (= attachment) order.
    layers: Vec<Vec<NodeId>>,
}

impl DraftTree {
    /// Creates a tree holding only the root. `root_token` should be the last
    /// token of the committed prefix.
    pub fn new(root_token: TokenId) -> Self {
        let root = DraftNode {
            token: root_token,
            cond_prob: 1.0,
            path_score: 1.0,
            parent: None,
            depth: 0,
            children: Vec::new(),
        };
        DraftTree {
            nodes: vec![root],
            layers: vec![vec![NodeId(0)]],
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &DraftNode {
        &self.nodes[id.0]
    }

    /// Total node count, root included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a tree always has its root
    }

    /// Number of candidate nodes, i.e. everything but the root.
    pub fn candidate_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Depth of the deepest node; 0 for a root-only tree.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Nodes grouped by depth, each layer in arena order.
    pub fn layers(&self) -> &[Vec<NodeId>] {
        &self.layers
    }

    /// The deepest layer, the only place new growth attaches during
    /// level-wise construction.
    pub fn deepest_layer(&self) -> &[NodeId] {
        self.layers.last().expect("tree always has a root layer")
    }

    /// Arena handles in insertion order, root first.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Attaches a child under `parent`. The child's `path_score` is the
    /// parent's `path_score` times `cond_prob`. Siblings must carry distinct
    /// tokens; `cond_prob` must lie in [0, 1].
    pub fn attach_child(
        &mut self,
        parent: NodeId,
        token: TokenId,
        cond_prob: f64,
    ) -> Result<NodeId, TreeError> {
        if parent.0 >= self.nodes.len() {
            return Err(TreeError::UnknownNode(parent.0));
        }
        if !(0.0..=1.0).contains(&cond_prob) || cond_prob.is_nan() {
            return Err(TreeError::InvalidProbability(cond_prob));
        }
        let parent_node = &self.nodes[parent.0];
        if parent_node
            .children
            .iter()
            .any(|&c| self.nodes[c.0].token == token)
        {
            return Err(TreeError::DuplicateSiblingToken {
                parent: parent.0,
                token,
            });
        }
        let child = DraftNode {
            token,
            cond_prob,
            path_score: parent_node.path_score * cond_prob,
            parent: Some(parent),
            depth: parent_node.depth + 1,
            children: Vec::new(),
        };
        let id = NodeId(self.nodes.len());
        let depth = child.depth;
        self.nodes.push(child);
        self.nodes[parent.0].children.push(id);
        if depth == self.layers.len() {
            self.layers.push(Vec::new());
        }
        self.layers[depth].push(id);
        Ok(id)
    }

    /// Sum of path scores over all non-root nodes: the expected number of
    /// draft tokens the target model will accept if per-node acceptance
    /// probability equals the path score.
    pub fn expected_acceptance(&self) -> f64 {
        self.nodes[1..].iter().map(|n| n.path_score).sum()
    }

    /// All non-root nodes sorted by [`NodeScoreEntry`] order.
    pub fn score_order(&self) -> Vec<NodeScoreEntry> {
        let mut entries: Vec<NodeScoreEntry> = self.nodes[1..]
            .iter()
            .enumerate()
            .map(|(i, n)| NodeScoreEntry {
                handle: NodeId(i + 1),
                path_score: n.path_score,
                depth: n.depth,
            })
            .collect();
        entries.sort();
        entries
    }

    /// Largest expected acceptance achievable by any rooted subtree with at
    /// most `n` candidate nodes, together with the nodes realizing it.
    ///
    /// Because a node's path score never exceeds its parent's, the best such
    /// subtree is simply the n highest-scoring nodes, and that set is always
    /// connected to the root. Ties resolve by [`NodeScoreEntry`] order, so
    /// the selection is deterministic.
    pub fn e_sub(&self, n: usize) -> (f64, Vec<NodeId>) {
        assert!(n >= 1, "subtree budget must be at least 1");
        let order = self.score_order();
        let take = n.min(order.len());
        let mut selected: Vec<NodeId> = order[..take].iter().map(|e| e.handle).collect();
        let sum = order[..take].iter().map(|e| e.path_score).sum();
        selected.sort(); // arena order is convenient for callers
        (sum, selected)
    }

    /// Extracts the subtree realizing [`DraftTree::e_sub`] as a new tree.
    /// Relative arena order, tokens, probabilities and depths carry over.
    pub fn select_top_n_subtree(&self, n: usize) -> DraftTree {
        let (_, selected) = self.e_sub(n);
        let mut out = DraftTree::new(self.nodes[0].token);
        let mut remap = vec![None; self.nodes.len()];
        remap[0] = Some(out.root());
        for id in selected {
            let node = &self.nodes[id.0];
            let parent = node.parent.expect("selected nodes are never the root");
            let new_parent = remap[parent.0]
                .expect("score order is parent-closed, parent selected before child");
            let new_id = out
                .attach_child(new_parent, node.token, node.cond_prob)
                .expect("copying a valid tree cannot fail");
            remap[id.0] = Some(new_id);
        }
        out
    }

    /// Tokens along the root path ending at `id`, excluding the root's own
    /// token. Empty for the root itself.
    pub fn path_tokens(&self, id: NodeId) -> Vec<TokenId> {
        let mut tokens = Vec::with_capacity(self.nodes[id.0].depth);
        let mut cur = id;
        while let Some(parent) = self.nodes[cur.0].parent {
            tokens.push(self.nodes[cur.0].token);
            cur = parent;
        }
        tokens.reverse();
        tokens
    }

    /// One token path per non-root node, in arena order. Each path runs from
    /// the first candidate layer down to that node; the root token is not
    /// included. A chain tree with k candidates therefore yields k chains of
    /// lengths 1..=k.
    pub fn root_chains(&self) -> Vec<Vec<TokenId>> {
        (1..self.nodes.len())
            .map(|i| self.path_tokens(NodeId(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: u32) -> TokenId {
        TokenId(id)
    }

    /// Root plus children 0.6 and 0.3 under the root, 0.5 under the first.
    fn small_tree() -> (DraftTree, NodeId, NodeId, NodeId) {
        let mut tree = DraftTree::new(t(9));
        let a = tree.attach_child(tree.root(), t(1), 0.6).unwrap();
        let b = tree.attach_child(tree.root(), t(2), 0.3).unwrap();
        let c = tree.attach_child(a, t(3), 0.5).unwrap();
        (tree, a, b, c)
    }

    #[test]
    fn root_has_unit_path_score_and_zero_expectation() {
        let tree = DraftTree::new(t(4));
        assert_eq!(tree.node(tree.root()).path_score(), 1.0);
        assert_eq!(tree.expected_acceptance(), 0.0);
        assert_eq!(tree.depth(), 0);
        assert_eq!(tree.candidate_count(), 0);
    }

    #[test]
    fn path_scores_multiply_down_the_tree() {
        let (tree, a, _, c) = small_tree();
        assert_eq!(tree.node(a).path_score(), 0.6);
        assert_eq!(tree.node(c).path_score(), 0.3);
        assert_eq!(tree.node(c).depth(), 2);
    }

    #[test]
    fn zero_probability_child_has_zero_path_score() {
        let (mut tree, a, _, _) = small_tree();
        let z = tree.attach_child(a, t(7), 0.0).unwrap();
        assert_eq!(tree.node(z).path_score(), 0.0);
    }

    #[test]
    fn attach_rejects_out_of_range_probability() {
        let mut tree = DraftTree::new(t(0));
        let root = tree.root();
        assert_eq!(
            tree.attach_child(root, t(1), 1.5),
            Err(TreeError::InvalidProbability(1.5))
        );
        assert_eq!(
            tree.attach_child(root, t(1), -0.1),
            Err(TreeError::InvalidProbability(-0.1))
        );
    }

    #[test]
    fn attach_rejects_duplicate_sibling_token() {
        let mut tree = DraftTree::new(t(0));
        let root = tree.root();
        tree.attach_child(root, t(5), 0.4).unwrap();
        assert_eq!(
            tree.attach_child(root, t(5), 0.2),
            Err(TreeError::DuplicateSiblingToken {
                parent: 0,
                token: t(5)
            })
        );
        // Same token under a different parent is fine.
        let b = tree.attach_child(root, t(6), 0.2).unwrap();
        assert!(tree.attach_child(b, t(5), 0.9).is_ok());
    }

    #[test]
    fn attach_rejects_foreign_handle() {
        let other = {
            let mut tr = DraftTree::new(t(0));
            tr.attach_child(tr.root(), t(1), 0.5).unwrap()
        };
        let mut tree = DraftTree::new(t(0));
        assert_eq!(
            tree.attach_child(other, t(2), 0.5),
            Err(TreeError::UnknownNode(1))
        );
    }

    #[test]
    fn expectation_sums_non_root_path_scores() {
        let (tree, ..) = small_tree();
        assert!((tree.expected_acceptance() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn expectation_of_certain_chain_equals_its_length() {
        let mut tree = DraftTree::new(t(0));
        let mut cur = tree.root();
        for i in 1..=3 {
            cur = tree.attach_child(cur, t(i), 1.0).unwrap();
        }
        assert_eq!(tree.expected_acceptance(), 3.0);
    }

    #[test]
    fn e_sub_takes_the_largest_path_scores() {
        // Scores 0.9, 0.5 (child of the 0.9 node), 0.4, 0.05.
        let mut tree = DraftTree::new(t(0));
        let a = tree.attach_child(tree.root(), t(1), 0.9).unwrap();
        tree.attach_child(tree.root(), t(2), 0.4).unwrap();
        tree.attach_child(tree.root(), t(3), 0.05).unwrap();
        let b = tree.attach_child(a, t(4), 0.5 / 0.9).unwrap();
        let (sum, picked) = tree.e_sub(2);
        assert!((sum - 1.4).abs() < 1e-12);
        assert_eq!(picked, vec![a, b]);
    }

    #[test]
    fn e_sub_breaks_ties_toward_shallow_then_early_nodes() {
        // Four depth-1 siblings, all 0.25.
        let mut tree = DraftTree::new(t(0));
        let ids: Vec<NodeId> = (1..=4)
            .map(|i| tree.attach_child(tree.root(), t(i), 0.25).unwrap())
            .collect();
        let (sum, picked) = tree.e_sub(2);
        assert!((sum - 0.5).abs() < 1e-12);
        assert_eq!(picked, vec![ids[0], ids[1]]);
    }

    #[test]
    fn e_sub_with_slack_budget_matches_expectation() {
        let (tree, ..) = small_tree();
        let (sum, picked) = tree.e_sub(64);
        assert!((sum - tree.expected_acceptance()).abs() < 1e-12);
        assert_eq!(picked.len(), tree.candidate_count());
    }

    #[test]
    fn select_top_n_keeps_the_winning_chain() {
        let mut tree = DraftTree::new(t(0));
        let a = tree.attach_child(tree.root(), t(1), 0.9).unwrap();
        tree.attach_child(tree.root(), t(2), 0.4).unwrap();
        tree.attach_child(tree.root(), t(3), 0.05).unwrap();
        tree.attach_child(a, t(4), 0.5 / 0.9).unwrap();
        let sub = tree.select_top_n_subtree(2);
        assert_eq!(sub.candidate_count(), 2);
        assert_eq!(sub.root_chains(), vec![vec![t(1)], vec![t(1), t(4)]]);
        assert!((sub.expected_acceptance() - 1.4).abs() < 1e-12);
    }

    #[test]
    fn select_top_n_of_chain_is_a_prefix() {
        let mut tree = DraftTree::new(t(0));
        let mut cur = tree.root();
        for i in 1..=5 {
            cur = tree.attach_child(cur, t(i), 0.9).unwrap();
        }
        let sub = tree.select_top_n_subtree(3);
        assert_eq!(sub.root_chains().last().unwrap(), &vec![t(1), t(2), t(3)]);
    }

    #[test]
    fn select_is_deterministic_under_ties() {
        let build = || {
            let mut tree = DraftTree::new(t(0));
            for i in 1..=6 {
                tree.attach_child(tree.root(), t(i), 0.25).unwrap();
            }
            tree
        };
        let a = build().select_top_n_subtree(3);
        let b = build().select_top_n_subtree(3);
        let tokens = |tr: &DraftTree| tr.root_chains();
        assert_eq!(tokens(&a), tokens(&b));
        assert_eq!(tokens(&a), vec![vec![t(1)], vec![t(2)], vec![t(3)]]);
    }

    #[test]
    fn root_chains_cover_every_candidate() {
        let (tree, ..) = small_tree();
        assert_eq!(
            tree.root_chains(),
            vec![vec![t(1)], vec![t(2)], vec![t(1), t(3)]]
        );
        let solo = DraftTree::new(t(3));
        assert!(solo.root_chains().is_empty());
    }

    #[test]
    fn layers_group_nodes_by_depth_in_arena_order() {
        let (tree, a, b, c) = small_tree();
        assert_eq!(tree.layers().len(), 3);
        assert_eq!(tree.layers()[1], vec![a, b]);
        assert_eq!(tree.layers()[2], vec![c]);
        assert_eq!(tree.deepest_layer(), &[c]);
    }
}
