//! Draft tree construction strategies.
//!
//! The adaptive builder grows a tree level by level, attaching at each step
//! the `n` candidate continuations with the highest path scores, and stops
//! once the marginal gain in the best-subtree expectation drops to the
//! threshold or the depth cap is hit. The final tree is the top-n subtree of
//! everything grown, so for the distributions the draft model actually
//! produced, no other rooted subtree of the grown candidate set has higher
//! expected acceptance.
//!
//! Three static baselines are provided for comparison: a level-order binary
//! tree, an arbitrary caller-supplied shape, and parallel greedy chains.

use crate::oracle::{is_distribution, Oracle, OracleError};
use crate::tree::{DraftTree, NodeId, TokenId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("invalid builder configuration: {0}")]
    InvalidConfig(String),
    #[error("frontier holds {expected} nodes but {got} distributions were supplied")]
    FrontierMismatch { expected: usize, got: usize },
    #[error("frontier distribution {index} is not a probability vector")]
    InvalidDistribution { index: usize },
    #[error("invalid tree shape: {0}")]
    InvalidShape(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Parameters of the adaptive builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuilderConfig {
    /// Candidate budget n: the built tree keeps at most this many non-root
    /// nodes, and each growth step considers this many new candidates.
    pub node_budget: usize,
    /// Stop once one more level would raise the best-subtree expectation by
    /// no more than this. 0 grows until the depth cap; 1 stops after the
    /// mandatory first level.
    pub threshold: f64,
    /// Hard cap on tree depth.
    pub max_depth: usize,
}

impl BuilderConfig {
    /// Budget and threshold with the depth cap defaulted to the budget,
    /// which never binds before the budget itself does.
    pub fn new(node_budget: usize, threshold: f64) -> Self {
        BuilderConfig {
            node_budget,
            threshold,
            max_depth: node_budget,
        }
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        if self.node_budget < 1 {
            return Err(BuildError::InvalidConfig(
                "node budget must be at least 1".into(),
            ));
        }
        if self.max_depth < 1 {
            return Err(BuildError::InvalidConfig(
                "depth cap must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) || self.threshold.is_nan() {
            return Err(BuildError::InvalidConfig(format!(
                "threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// What one adaptive build did: how many drafting steps ran and the
/// best-subtree expectation recorded after each of them. The trace is
/// non-decreasing; growth can only add candidate nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildStats {
    pub drafting_steps: usize,
    pub e_sub_trace: Vec<f64>,
}

/// Attaches up to `n` children to the deepest layer of `tree`, choosing the
/// candidates with the highest path scores. `frontier_dists` must hold one
/// next-token distribution per deepest-layer node, in layer order.
/// Candidates with zero probability are never attached, so fewer than `n`
/// children may result. Returns the new nodes in attachment (= score) order.
pub fn expand_frontier(
    tree: &mut DraftTree,
    frontier_dists: &[Vec<f64>],
    n: usize,
) -> Result<Vec<NodeId>, BuildError> {
    let frontier: Vec<NodeId> = tree.deepest_layer().to_vec();
    if frontier_dists.len() != frontier.len() {
        return Err(BuildError::FrontierMismatch {
            expected: frontier.len(),
            got: frontier_dists.len(),
        });
    }
    for (index, dist) in frontier_dists.iter().enumerate() {
        if !is_distribution(dist) {
            return Err(BuildError::InvalidDistribution { index });
        }
    }
    // Candidates are generated in frontier-then-token order; the stable sort
    // keeps that order among equal scores, so ties resolve toward earlier
    // frontier nodes and lower token ids.
    let mut candidates: Vec<(f64, NodeId, TokenId, f64)> = Vec::new();
    for (&parent, dist) in frontier.iter().zip(frontier_dists) {
        let parent_score = tree.node(parent).path_score();
        for (token, &p) in dist.iter().enumerate() {
            let score = parent_score * p;
            if score > 0.0 {
                candidates.push((score, parent, TokenId(token as u32), p));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    candidates.truncate(n);
    let mut attached = Vec::with_capacity(candidates.len());
    for (_, parent, token, cond_prob) in candidates {
        let id = tree
            .attach_child(parent, token, cond_prob)
            .expect("candidate tokens are unique per parent and probabilities valid");
        attached.push(id);
    }
    Ok(attached)
}

/// Grows a draft tree for `prefix` by repeated frontier expansion, then
/// prunes to the best `node_budget`-node subtree. Also returns how many
/// drafting steps ran and the expectation trace; the first expansion is
/// unconditional, so there is always at least one step.
pub fn build_opt_tree(
    prefix: &[TokenId],
    draft: &dyn Oracle,
    cfg: &BuilderConfig,
) -> Result<(DraftTree, BuildStats), BuildError> {
    cfg.validate()?;
    let root_token = *prefix.last().ok_or(OracleError::EmptyPrefix)?;
    let mut tree = DraftTree::new(root_token);
    let n = cfg.node_budget;

    let dists = frontier_distributions(&tree, prefix, draft)?;
    expand_frontier(&mut tree, &dists, n)?;
    let mut stats = BuildStats {
        drafting_steps: 1,
        e_sub_trace: vec![tree.e_sub(n).0],
    };

    let mut e_prev = 0.0;
    loop {
        let e_now = *stats.e_sub_trace.last().expect("trace starts non-empty");
        if tree.depth() >= cfg.max_depth || e_now - e_prev <= cfg.threshold {
            break;
        }
        e_prev = e_now;
        let dists = frontier_distributions(&tree, prefix, draft)?;
        expand_frontier(&mut tree, &dists, n)?;
        stats.drafting_steps += 1;
        let e_next = tree.e_sub(n).0;
        debug_assert!(
            e_next >= e_now,
            "best-subtree expectation cannot shrink as the tree grows"
        );
        stats.e_sub_trace.push(e_next);
    }
    Ok((tree.select_top_n_subtree(n), stats))
}

/// Queries the draft model once per deepest-layer node.
fn frontier_distributions(
    tree: &DraftTree,
    prefix: &[TokenId],
    draft: &dyn Oracle,
) -> Result<Vec<Vec<f64>>, BuildError> {
    tree.deepest_layer()
        .iter()
        .map(|&id| {
            let mut input = prefix.to_vec();
            input.extend(tree.path_tokens(id));
            Ok(draft.next_distribution(&input)?)
        })
        .collect()
}

/// Token indices ranked by descending probability, ties toward lower index.
fn ranked_tokens(dist: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
    order
}

/// Builds a complete binary tree in level order: each node receives its two
/// most probable continuations as children until `node_budget` nodes exist.
pub fn build_binary_tree(
    prefix: &[TokenId],
    draft: &dyn Oracle,
    node_budget: usize,
) -> Result<DraftTree, BuildError> {
    if node_budget < 1 {
        return Err(BuildError::InvalidConfig(
            "node budget must be at least 1".into(),
        ));
    }
    let root_token = *prefix.last().ok_or(OracleError::EmptyPrefix)?;
    let mut tree = DraftTree::new(root_token);
    let mut queue = std::collections::VecDeque::from([tree.root()]);
    let mut remaining = node_budget;
    while remaining > 0 {
        let parent = queue
            .pop_front()
            .expect("every processed node enqueues children, so the queue outlives the budget");
        let mut input = prefix.to_vec();
        input.extend(tree.path_tokens(parent));
        let dist = draft.next_distribution(&input)?;
        for &token in ranked_tokens(&dist).iter().take(2.min(remaining)) {
            let child = tree
                .attach_child(parent, TokenId(token as u32), dist[token])
                .expect("ranked tokens are distinct");
            queue.push_back(child);
            remaining -= 1;
        }
    }
    Ok(tree)
}

/// A draft tree topology given as parent indices: entry 0 is the root and
/// must be `null`; every later entry points at an earlier one. The JSON form
/// is the bare array, e.g. `[null,0,0,1,1,2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreeShape {
    parents: Vec<Option<usize>>,
}

/// The default 25-node shape used by the `fixed` builder: 6 wide at the
/// first level, narrowing to a single depth-5 chain tip. An approximation of
/// the hand-tuned static trees used by speculative decoders, shipped in
/// `data/fixed25.json`.
const DEFAULT_SHAPE_25: &str = include_str!("../data/fixed25.json");

impl TreeShape {
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self, BuildError> {
        if parents.is_empty() {
            return Err(BuildError::InvalidShape("shape is empty".into()));
        }
        if parents[0].is_some() {
            return Err(BuildError::InvalidShape(
                "entry 0 must be the parentless root".into(),
            ));
        }
        for (i, parent) in parents.iter().enumerate().skip(1) {
            match parent {
                Some(p) if *p < i => {}
                Some(p) => {
                    return Err(BuildError::InvalidShape(format!(
                        "node {i} points at parent {p}, which does not precede it"
                    )));
                }
                None => {
                    return Err(BuildError::InvalidShape(format!(
                        "node {i} has no parent; only entry 0 may be the root"
                    )));
                }
            }
        }
        Ok(TreeShape { parents })
    }

    pub fn from_json(text: &str) -> Result<Self, BuildError> {
        let parents: Vec<Option<usize>> =
            serde_json::from_str(text).map_err(|e| BuildError::InvalidShape(e.to_string()))?;
        TreeShape::new(parents)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.parents).expect("a shape always serializes")
    }

    /// The bundled 25-node default.
    pub fn default_25() -> Self {
        TreeShape::from_json(DEFAULT_SHAPE_25).expect("bundled shape file is valid")
    }

    /// Total entries, root included.
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// Nodes the built tree will hold, i.e. everything but the root.
    pub fn candidate_count(&self) -> usize {
        self.parents.len() - 1
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }
}

/// Instantiates `shape` for `prefix`: the k-th child attached under any
/// parent carries the draft model's k-th most probable continuation of that
/// parent's path.
pub fn build_fixed_tree(
    prefix: &[TokenId],
    draft: &dyn Oracle,
    shape: &TreeShape,
) -> Result<DraftTree, BuildError> {
    let root_token = *prefix.last().ok_or(OracleError::EmptyPrefix)?;
    let mut tree = DraftTree::new(root_token);
    let mut nodes: Vec<NodeId> = vec![tree.root()];
    let mut next_rank = vec![0usize; shape.len()];
    // one ranked-token list per shape entry, filled when first used
    let mut rankings: Vec<Option<(Vec<usize>, Vec<f64>)>> = vec![None; shape.len()];
    for (i, parent) in shape.parents().iter().enumerate().skip(1) {
        let p = parent.expect("validated shapes have exactly one root");
        if rankings[p].is_none() {
            let mut input = prefix.to_vec();
            input.extend(tree.path_tokens(nodes[p]));
            let dist = draft.next_distribution(&input)?;
            rankings[p] = Some((ranked_tokens(&dist), dist));
        }
        let (ranking, dist) = rankings[p].as_ref().expect("just filled");
        let rank = next_rank[p];
        next_rank[p] += 1;
        let token = *ranking.get(rank).ok_or_else(|| {
            BuildError::InvalidShape(format!(
                "node {i} asks for child rank {rank} of node {p}, beyond the vocabulary"
            ))
        })?;
        let id = tree
            .attach_child(nodes[p], TokenId(token as u32), dist[token])
            .expect("ranked tokens are distinct per parent");
        nodes.push(id);
    }
    Ok(tree)
}

/// Builds `chains` greedy chains of length `length` each: the chain heads
/// are the draft model's top-`chains` first tokens, and every chain then
/// continues with the single most probable token at each step.
pub fn build_sequence_draft(
    prefix: &[TokenId],
    draft: &dyn Oracle,
    chains: usize,
    length: usize,
) -> Result<DraftTree, BuildError> {
    if chains < 1 || length < 1 {
        return Err(BuildError::InvalidConfig(
            "sequence drafts need at least one chain of length one".into(),
        ));
    }
    if chains > draft.vocab_size() {
        return Err(BuildError::InvalidConfig(format!(
            "{} chains exceed the vocabulary of {} tokens",
            chains,
            draft.vocab_size()
        )));
    }
    let root_token = *prefix.last().ok_or(OracleError::EmptyPrefix)?;
    let mut tree = DraftTree::new(root_token);
    let root_dist = draft.next_distribution(prefix)?;
    let heads = ranked_tokens(&root_dist);
    for &head in heads.iter().take(chains) {
        let mut cur = tree
            .attach_child(tree.root(), TokenId(head as u32), root_dist[head])
            .expect("chain heads are distinct");
        let mut input = prefix.to_vec();
        input.push(TokenId(head as u32));
        for _ in 1..length {
            let dist = draft.next_distribution(&input)?;
            let token = ranked_tokens(&dist)[0];
            cur = tree
                .attach_child(cur, TokenId(token as u32), dist[token])
                .expect("a chain node has no other children");
            input.push(TokenId(token as u32));
        }
    }
    Ok(tree)
}
