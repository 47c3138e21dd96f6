//! Speculative decoding with adaptive draft trees.
//!
//! A small draft model proposes a tree of likely continuations, the target
//! model scores the whole tree in one batched pass, and the longest
//! target-approved root chain is committed plus one bonus token. The tree
//! is rebuilt every step to maximize the expected number of accepted
//! tokens under the draft's own probabilities, subject to a node budget,
//! a depth cap, and a stop-early gain threshold.
//!
//! The crate is organized around a handful of small pieces:
//!
//! - [`tree`]: the draft tree itself, path scores, and top-n subtree
//!   extraction.
//! - [`builder`]: adaptive tree construction plus binary, fixed-shape, and
//!   parallel-chain baselines.
//! - [`attention`]: flattening a tree into one sequence with an
//!   ancestor-visibility mask so it can be scored in a single pass.
//! - [`oracle`]: the language-model interface, n-gram models trainable
//!   from token corpora, and a synthetic target/draft pair with a tunable
//!   agreement rate.
//! - [`decoding`]: the speculate-then-verify loop, greedy and sampled.
//! - [`bench`]: acceptance-length benchmarks, parameter sweeps, and
//!   expectation-versus-outcome calibration.
//! - [`cli`]: the `opttree` command line.

pub mod attention;
pub mod bench;
pub mod builder;
pub mod cli;
pub mod decoding;
pub mod oracle;
pub mod tree;

pub use attention::{build_mask, flatten, FlatTree, TreeMask};
pub use builder::{
    build_binary_tree, build_fixed_tree, build_opt_tree, build_sequence_draft, expand_frontier,
    BuildError, BuildStats, BuilderConfig, TreeShape,
};
pub use decoding::{
    autoregressive_reference, decode_step, run_decoding, verify_greedy, verify_sampled,
    BuilderKind, DecodeConfig, DecodeError, StepResult, VerifyResult,
};
pub use oracle::{
    argmax, is_distribution, sample, train_ngram, NgramModel, Oracle, OracleError, SyntheticPair,
    SyntheticPairConfig, Vocabulary,
};
pub use tree::{DraftTree, NodeId, NodeScoreEntry, TokenId, TreeError};

// Every code block in the README and the guide compiles and runs with
// `cargo test`, so neither can drift from the crate.
#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/draft-trees.md")]
    mod draft_trees {}
    #[doc = include_str!("../../../book/src/building-trees.md")]
    mod building_trees {}
    #[doc = include_str!("../../../book/src/tree-attention.md")]
    mod tree_attention {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
