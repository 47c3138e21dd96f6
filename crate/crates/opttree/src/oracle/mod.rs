//! Language-model oracles.
//!
//! An oracle is anything that can map a token prefix to a distribution over
//! the next token. The decoding loop needs two of them: a cheap draft oracle
//! that proposes candidate trees and a target oracle whose output is ground
//! truth. Both n-gram models trained on text and synthetic hash-seeded
//! models are provided; anything implementing [`Oracle`] plugs in.

use crate::attention::{FlatTree, TreeMask};
use crate::tree::TokenId;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod ngram;
mod synthetic;

pub use ngram::{train_ngram, NgramModel};
pub(crate) use synthetic::splitmix64;
pub use synthetic::{SyntheticOracle, SyntheticPair, SyntheticPairConfig};

/// Distributions are checked against this when validating oracle output.
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("prefix must hold at least one token")]
    EmptyPrefix,
    #[error("corpus of {len} tokens cannot train an order-{order} model; need at least {} tokens", order + 1)]
    CorpusTooShort { len: usize, order: usize },
    #[error("token {token} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { token: TokenId, vocab: usize },
    #[error("smoothing constant must be positive, got {0}")]
    InvalidSmoothing(f64),
    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model file: {0}")]
    MalformedModel(String),
}

/// A next-token distribution source. Implementations must be deterministic
/// per prefix and immutable once constructed, so sharing one oracle across
/// threads is safe.
pub trait Oracle: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Distribution over the next token given a non-empty prefix. The result
    /// has `vocab_size()` entries, each in [0, 1], summing to 1 within
    /// [`DISTRIBUTION_SUM_TOLERANCE`].
    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>, OracleError>;

    /// Scores every node of a flattened draft tree in one call: entry `i` is
    /// `next_distribution(context ++ root_path_tokens(i))`. `context` is the
    /// committed prefix with its final token removed, since that token sits
    /// at the tree root.
    ///
    /// The default walks each root path independently. Implementations may
    /// use the mask layout to share work across paths, but must return
    /// exactly the pathwise result.
    fn batch_tree_forward(
        &self,
        context: &[TokenId],
        flat: &FlatTree,
        mask: &TreeMask,
    ) -> Result<Vec<Vec<f64>>, OracleError> {
        let _ = mask;
        (0..flat.len())
            .map(|i| {
                let mut input = context.to_vec();
                input.extend(flat.root_path_tokens(i));
                self.next_distribution(&input)
            })
            .collect()
    }
}

impl<T: Oracle + ?Sized> Oracle for &T {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>, OracleError> {
        (**self).next_distribution(prefix)
    }

    fn batch_tree_forward(
        &self,
        context: &[TokenId],
        flat: &FlatTree,
        mask: &TreeMask,
    ) -> Result<Vec<Vec<f64>>, OracleError> {
        (**self).batch_tree_forward(context, flat, mask)
    }
}

/// True when `dist` is a probability vector within tolerance.
pub fn is_distribution(dist: &[f64]) -> bool {
    let mut sum = 0.0;
    for &p in dist {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return false;
        }
        sum += p;
    }
    (sum - 1.0).abs() <= DISTRIBUTION_SUM_TOLERANCE
}

/// Index of the largest entry, lowest index on ties. This single tie-break
/// rule is shared by greedy sampling and greedy verification; reproducible
/// output depends on it.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Draws a token from `dist` at the given temperature. Temperature 0 is
/// greedy argmax and consumes no randomness. Positive temperatures rescale
/// in log space (`p^(1/t)`, renormalized) and then sample; temperature 1
/// reproduces `dist` itself. Zero-probability tokens stay impossible at any
/// temperature.
pub fn sample<R: Rng>(dist: &[f64], temperature: f64, rng: &mut R) -> TokenId {
    assert!(
        temperature >= 0.0 && !temperature.is_nan(),
        "temperature must be a non-negative number"
    );
    if temperature == 0.0 {
        return TokenId(argmax(dist) as u32);
    }
    // exp((ln p - max ln p) / t), stabilized so the largest weight is 1
    let max_log = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = dist
        .iter()
        .map(|&p| {
            if p > 0.0 {
                ((p.ln() - max_log) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 && w > 0.0 {
            return TokenId(i as u32);
        }
    }
    // Floating-point slack: fall back to the last possible token.
    TokenId(
        weights
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("a distribution has at least one positive entry") as u32,
    )
}

/// Token vocabulary: a size plus, for word-level models, the symbol table.
/// Byte-level vocabularies leave `symbols` empty and interpret token ids as
/// raw bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: usize,
    symbols: Option<Vec<String>>,
}

impl Vocabulary {
    /// The 256 single-byte tokens; the default for text corpora.
    pub fn bytes() -> Self {
        Vocabulary {
            size: 256,
            symbols: None,
        }
    }

    /// Builds a word-level vocabulary from whitespace-separated text, in
    /// first-seen order.
    pub fn from_words(text: &str) -> Self {
        let mut symbols: Vec<String> = Vec::new();
        for word in text.split_whitespace() {
            if !symbols.iter().any(|s| s == word) {
                symbols.push(word.to_string());
            }
        }
        Vocabulary {
            size: symbols.len(),
            symbols: Some(symbols),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_byte_level(&self) -> bool {
        self.symbols.is_none()
    }

    /// Tokenizes text. Byte-level vocabularies accept anything; word-level
    /// ones reject words missing from the symbol table.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, OracleError> {
        match &self.symbols {
            None => Ok(text.bytes().map(|b| TokenId(b as u32)).collect()),
            Some(symbols) => text
                .split_whitespace()
                .map(|word| {
                    symbols
                        .iter()
                        .position(|s| s == word)
                        .map(|i| TokenId(i as u32))
                        .ok_or_else(|| OracleError::UnknownSymbol(word.to_string()))
                })
                .collect(),
        }
    }

    /// Renders tokens back to text. Bytes decode as lossy UTF-8; words join
    /// with single spaces. Out-of-range ids render as `?`.
    pub fn decode(&self, tokens: &[TokenId]) -> String {
        match &self.symbols {
            None => {
                let bytes: Vec<u8> = tokens
                    .iter()
                    .map(|t| u8::try_from(t.0).unwrap_or(b'?'))
                    .collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            Some(symbols) => tokens
                .iter()
                .map(|t| symbols.get(t.index()).map_or("?", String::as_str))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

/// Sliding context windows for every node of a flattened tree: entry `i`
/// holds the last `window` tokens of `context ++ root_path_tokens(i)`.
/// Walking parent to child avoids rebuilding full paths, which is what makes
/// batched scoring of window-limited models cheap.
pub(crate) fn tree_windows(
    context: &[TokenId],
    flat: &FlatTree,
    window: usize,
) -> Vec<Vec<TokenId>> {
    let mut windows: Vec<Vec<TokenId>> = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut w = match flat.parent_index()[i] {
            Some(p) => windows[p].clone(),
            None => {
                let keep = context.len().min(window.saturating_sub(1));
                context[context.len() - keep..].to_vec()
            }
        };
        w.push(flat.tokens()[i]);
        if w.len() > window {
            w.remove(0);
        }
        windows.push(w);
    }
    windows
}
