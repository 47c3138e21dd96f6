//! The speculate-then-verify decoding loop.
//!
//! Each step drafts a candidate tree for the current prefix, scores every
//! node with the target model in one batched forward pass, and walks the
//! tree from the root: at each node the target's own choice is ground truth,
//! and the walk descends while some child carries that token. Everything on
//! the walked path is accepted, plus the ground-truth token at the stopping
//! node as a bonus, so a step always commits at least one token.
//!
//! At temperature 0 ground truth is the argmax, which makes the committed
//! sequence identical to plain autoregressive greedy decoding no matter what
//! the draft proposed. At positive temperature ground truth is sampled
//! per node, which preserves per-step progress but not equality with any
//! fixed reference.

use crate::attention::{build_mask, flatten};
use crate::builder::{
    build_binary_tree, build_fixed_tree, build_opt_tree, build_sequence_draft, BuildError,
    BuilderConfig, TreeShape,
};
use crate::oracle::{argmax, sample, Oracle, OracleError};
use crate::tree::{DraftTree, TokenId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("prompt must hold at least one token")]
    EmptyPrompt,
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
    #[error("{got} distributions supplied for a tree of {expected} nodes")]
    DistributionMismatch { expected: usize, got: usize },
    #[error("target and draft vocabularies differ: {target} vs {draft}")]
    VocabularyMismatch { target: usize, draft: usize },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Draft tree construction strategy for one decoding run.
#[derive(Debug, Clone, PartialEq)]
pub enum BuilderKind {
    /// Adaptive expectation-maximizing trees.
    Opt,
    /// Level-order complete binary trees.
    Binary,
    /// A caller-supplied static topology.
    Fixed(TreeShape),
    /// Parallel greedy chains: `chains` heads, `length` tokens each.
    Sequence { chains: usize, length: usize },
    /// No speculation: plain autoregressive decoding.
    None,
}

impl BuilderKind {
    pub fn label(&self) -> &'static str {
        match self {
            BuilderKind::Opt => "opt",
            BuilderKind::Binary => "binary",
            BuilderKind::Fixed(_) => "fixed",
            BuilderKind::Sequence { .. } => "sequence",
            BuilderKind::None => "none",
        }
    }
}

/// Everything one decoding run needs besides the oracles and the prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub builder: BuilderKind,
    /// Candidate budget for the opt and binary builders.
    pub node_budget: usize,
    /// Expectation-gain stopping threshold of the opt builder.
    pub threshold: f64,
    /// Depth cap of the opt builder; `None` defaults to the node budget.
    pub max_depth: Option<usize>,
    /// 0 verifies greedily; positive values verify against sampled ground
    /// truth at that temperature.
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl DecodeConfig {
    pub fn new(builder: BuilderKind) -> Self {
        DecodeConfig {
            builder,
            node_budget: 50,
            threshold: 0.7,
            max_depth: None,
            temperature: 0.0,
            max_new_tokens: 64,
            seed: 0,
        }
    }

    pub fn builder_config(&self) -> BuilderConfig {
        let base = BuilderConfig::new(self.node_budget, self.threshold);
        match self.max_depth {
            Some(depth) => base.with_max_depth(depth),
            None => base,
        }
    }

    /// Non-root nodes a draft tree will actually hold under this config.
    pub fn effective_budget(&self) -> usize {
        match &self.builder {
            BuilderKind::Opt | BuilderKind::Binary => self.node_budget,
            BuilderKind::Fixed(shape) => shape.candidate_count(),
            BuilderKind::Sequence { chains, length } => chains * length,
            BuilderKind::None => 0,
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        self.builder_config()
            .validate()
            .map_err(|e| DecodeError::InvalidConfig(e.to_string()))?;
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(DecodeError::InvalidConfig(format!(
                "temperature {} must be a finite non-negative number",
                self.temperature
            )));
        }
        if self.max_new_tokens < 1 {
            return Err(DecodeError::InvalidConfig(
                "max_new_tokens must be at least 1".into(),
            ));
        }
        if let BuilderKind::Sequence { chains, length } = self.builder {
            if chains < 1 || length < 1 {
                return Err(DecodeError::InvalidConfig(
                    "sequence drafts need at least one chain of length one".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of verifying one draft tree.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyResult {
    /// Draft tokens confirmed by the target, in order along the accepted
    /// root chain.
    pub accepted: Vec<TokenId>,
    /// The target's continuation at the point the tree ran out; committed
    /// for free after the accepted tokens.
    pub bonus: TokenId,
    /// `accepted.len() + 1`: every committed token of this step.
    pub acceptance_length: usize,
}

/// Walks the tree accepting while `ground_truth` matches a child, then
/// takes the last truth token as bonus.
fn verify_walk<F>(
    tree: &DraftTree,
    dists: &[Vec<f64>],
    mut ground_truth: F,
) -> Result<VerifyResult, DecodeError>
where
    F: FnMut(&[f64]) -> TokenId,
{
    if dists.len() != tree.len() {
        return Err(DecodeError::DistributionMismatch {
            expected: tree.len(),
            got: dists.len(),
        });
    }
    let flat = flatten(tree);
    let mut flat_position = vec![0usize; tree.len()];
    for (pos, &id) in flat.ids().iter().enumerate() {
        flat_position[id.index()] = pos;
    }
    let mut accepted = Vec::new();
    let mut cur = tree.root();
    loop {
        let truth = ground_truth(&dists[flat_position[cur.index()]]);
        let matched = tree
            .node(cur)
            .children()
            .iter()
            .copied()
            .find(|&c| tree.node(c).token() == truth);
        match matched {
            Some(child) => {
                accepted.push(truth);
                cur = child;
            }
            None => {
                let acceptance_length = accepted.len() + 1;
                return Ok(VerifyResult {
                    accepted,
                    bonus: truth,
                    acceptance_length,
                });
            }
        }
    }
}

/// Greedy verification: ground truth is the target's argmax at every node.
/// `dists` must hold one distribution per tree node in flattened order, as
/// produced by `batch_tree_forward`.
pub fn verify_greedy(tree: &DraftTree, dists: &[Vec<f64>]) -> Result<VerifyResult, DecodeError> {
    verify_walk(tree, dists, |dist| TokenId(argmax(dist) as u32))
}

/// Verification against sampled ground truth: at each visited node a token
/// is drawn from the target distribution at `temperature`. Deterministic
/// for a fixed tree, distributions and generator state; the generator is
/// consumed only along the walked path.
pub fn verify_sampled(
    tree: &DraftTree,
    dists: &[Vec<f64>],
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Result<VerifyResult, DecodeError> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(DecodeError::InvalidConfig(format!(
            "sampled verification needs a positive finite temperature, got {temperature}"
        )));
    }
    verify_walk(tree, dists, |dist| sample(dist, temperature, rng))
}

/// What one decoding step did, for logs and benchmark aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub verify: VerifyResult,
    /// Expected acceptance length of the verified (pruned) tree; 0 when no
    /// tree was drafted.
    pub expectation: f64,
    /// Non-root nodes of the verified tree.
    pub tree_nodes: usize,
    pub tree_depth: usize,
    /// Frontier advances the draft performed; for static builders this is
    /// the tree depth, for no speculation 0.
    pub drafting_steps: usize,
    pub draft_time: Duration,
    pub verify_time: Duration,
}

impl StepResult {
    pub fn acceptance_length(&self) -> usize {
        self.verify.acceptance_length
    }
}

/// Drafts one tree for `prefix` per the configured builder, along with the
/// number of frontier advances it took.
pub(crate) fn build_with_builder(
    prefix: &[TokenId],
    draft: &dyn Oracle,
    cfg: &DecodeConfig,
) -> Result<(DraftTree, usize), DecodeError> {
    match &cfg.builder {
        BuilderKind::Opt => {
            let (tree, stats) = build_opt_tree(prefix, draft, &cfg.builder_config())?;
            Ok((tree, stats.drafting_steps))
        }
        BuilderKind::Binary => {
            let tree = build_binary_tree(prefix, draft, cfg.node_budget)?;
            let depth = tree.depth();
            Ok((tree, depth))
        }
        BuilderKind::Fixed(shape) => {
            let tree = build_fixed_tree(prefix, draft, shape)?;
            let depth = tree.depth();
            Ok((tree, depth))
        }
        BuilderKind::Sequence { chains, length } => {
            let tree = build_sequence_draft(prefix, draft, *chains, *length)?;
            let depth = tree.depth();
            Ok((tree, depth))
        }
        BuilderKind::None => Err(DecodeError::InvalidConfig(
            "no tree is drafted without speculation".into(),
        )),
    }
}

/// Runs one speculate-and-verify step on `prefix`, returning the step
/// record and the extended prefix. The prefix always grows by
/// `acceptance_length` tokens.
pub fn decode_step(
    prefix: &[TokenId],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    cfg: &DecodeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(StepResult, Vec<TokenId>), DecodeError> {
    if prefix.is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    if cfg.builder == BuilderKind::None {
        let start = Instant::now();
        let dist = target.next_distribution(prefix)?;
        let verify_time = start.elapsed();
        let bonus = sample(&dist, cfg.temperature, rng);
        let mut new_prefix = prefix.to_vec();
        new_prefix.push(bonus);
        let step = StepResult {
            verify: VerifyResult {
                accepted: Vec::new(),
                bonus,
                acceptance_length: 1,
            },
            expectation: 0.0,
            tree_nodes: 0,
            tree_depth: 0,
            drafting_steps: 0,
            draft_time: Duration::ZERO,
            verify_time,
        };
        return Ok((step, new_prefix));
    }

    if target.vocab_size() != draft.vocab_size() {
        return Err(DecodeError::VocabularyMismatch {
            target: target.vocab_size(),
            draft: draft.vocab_size(),
        });
    }

    let draft_start = Instant::now();
    let (tree, drafting_steps) = build_with_builder(prefix, draft, cfg)?;
    let draft_time = draft_start.elapsed();

    let verify_start = Instant::now();
    let flat = flatten(&tree);
    let mask = build_mask(&flat);
    let context = &prefix[..prefix.len() - 1];
    let dists = target.batch_tree_forward(context, &flat, &mask)?;
    let verify = if cfg.temperature == 0.0 {
        verify_greedy(&tree, &dists)?
    } else {
        verify_sampled(&tree, &dists, cfg.temperature, rng)?
    };
    let verify_time = verify_start.elapsed();

    let mut new_prefix = prefix.to_vec();
    new_prefix.extend_from_slice(&verify.accepted);
    new_prefix.push(verify.bonus);
    let step = StepResult {
        expectation: tree.expected_acceptance(),
        tree_nodes: tree.candidate_count(),
        tree_depth: tree.depth(),
        drafting_steps,
        draft_time,
        verify_time,
        verify,
    };
    Ok((step, new_prefix))
}

/// Decodes until at least `max_new_tokens` tokens are committed, then
/// truncates to exactly that many. Returns the generated tokens (prompt
/// excluded) and every step record.
pub fn run_decoding(
    prompt: &[TokenId],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    cfg: &DecodeConfig,
) -> Result<(Vec<TokenId>, Vec<StepResult>), DecodeError> {
    cfg.validate()?;
    if prompt.is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prefix = prompt.to_vec();
    let mut generated: Vec<TokenId> = Vec::with_capacity(cfg.max_new_tokens);
    let mut steps = Vec::new();
    while generated.len() < cfg.max_new_tokens {
        let (step, new_prefix) = decode_step(&prefix, target, draft, cfg, &mut rng)?;
        generated.extend_from_slice(&new_prefix[prefix.len()..]);
        prefix = new_prefix;
        steps.push(step);
    }
    generated.truncate(cfg.max_new_tokens);
    Ok((generated, steps))
}

/// Plain autoregressive decoding with the target model: one token per step.
/// Seed-compatible with `run_decoding` under `BuilderKind::None`, and the
/// greedy reference that speculative greedy output must reproduce.
pub fn autoregressive_reference(
    prompt: &[TokenId],
    target: &dyn Oracle,
    temperature: f64,
    max_new_tokens: usize,
    seed: u64,
) -> Result<Vec<TokenId>, DecodeError> {
    if prompt.is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefix = prompt.to_vec();
    let mut out = Vec::with_capacity(max_new_tokens);
    for _ in 0..max_new_tokens {
        let dist = target.next_distribution(&prefix)?;
        let token = sample(&dist, temperature, &mut rng);
        out.push(token);
        prefix.push(token);
    }
    Ok(out)
}
