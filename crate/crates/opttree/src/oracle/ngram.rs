//! Additively smoothed n-gram models over token sequences.
//!
//! The model counts `(context, next token)` pairs over sliding windows of
//! the training corpus, where a context is exactly `order` consecutive
//! tokens. Queries condition on the last `order` tokens of the prefix;
//! shorter or unseen contexts fall back to pure smoothing, i.e. a uniform
//! distribution. Order 0 collapses to corpus-wide unigram frequencies.

use super::{Oracle, OracleError, Vocabulary};
use crate::attention::{FlatTree, TreeMask};
use crate::tree::TokenId;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone)]
struct ContextCounts {
    total: u64,
    by_token: HashMap<TokenId, u64>,
}

/// An order-`k` additively smoothed n-gram model.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    smoothing: f64,
    vocab: Vocabulary,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

/// Trains a model by counting every length `order + 1` window of `corpus`.
/// The corpus must therefore hold more than `order` tokens, every token must
/// fit the vocabulary, and `smoothing` must be positive.
pub fn train_ngram(
    corpus: &[TokenId],
    order: usize,
    smoothing: f64,
    vocab: Vocabulary,
) -> Result<NgramModel, OracleError> {
    if !smoothing.is_finite() || smoothing <= 0.0 {
        return Err(OracleError::InvalidSmoothing(smoothing));
    }
    if corpus.len() <= order {
        return Err(OracleError::CorpusTooShort {
            len: corpus.len(),
            order,
        });
    }
    for &token in corpus {
        if token.index() >= vocab.size() {
            return Err(OracleError::TokenOutOfRange {
                token,
                vocab: vocab.size(),
            });
        }
    }
    let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
    for window in corpus.windows(order + 1) {
        let (context, next) = (&window[..order], window[order]);
        let entry = counts
            .entry(context.to_vec())
            .or_insert_with(|| ContextCounts {
                total: 0,
                by_token: HashMap::new(),
            });
        entry.total += 1;
        *entry.by_token.entry(next).or_insert(0) += 1;
    }
    Ok(NgramModel {
        order,
        smoothing,
        vocab,
        counts,
    })
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Number of distinct contexts seen in training.
    pub fn context_count(&self) -> usize {
        self.counts.len()
    }

    fn distribution_for_context(&self, context: Option<&[TokenId]>) -> Vec<f64> {
        let v = self.vocab.size();
        let counts = context.and_then(|c| self.counts.get(c));
        match counts {
            Some(c) => {
                let denom = c.total as f64 + self.smoothing * v as f64;
                let mut dist = vec![self.smoothing / denom; v];
                for (&token, &count) in &c.by_token {
                    dist[token.index()] += count as f64 / denom;
                }
                dist
            }
            None => vec![1.0 / v as f64; v],
        }
    }

    /// Serializes to a versioned JSON document. Contexts and counts are
    /// emitted sorted, so equal models serialize to identical bytes.
    pub fn to_json(&self) -> String {
        let mut contexts: Vec<ContextRecord> = self
            .counts
            .iter()
            .map(|(ctx, c)| {
                let mut counts: Vec<(u32, u64)> =
                    c.by_token.iter().map(|(t, &n)| (t.0, n)).collect();
                counts.sort_unstable();
                ContextRecord {
                    context: ctx.iter().map(|t| t.0).collect(),
                    counts,
                }
            })
            .collect();
        contexts.sort();
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            order: self.order,
            smoothing: self.smoothing,
            vocab: self.vocab.clone(),
            contexts,
        };
        serde_json::to_string(&file).expect("model serialization cannot fail")
    }

    /// Parses a document produced by [`NgramModel::to_json`].
    pub fn from_json(text: &str) -> Result<NgramModel, OracleError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| OracleError::MalformedModel(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(OracleError::MalformedModel(format!(
                "unknown format {:?}",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(OracleError::MalformedModel(format!(
                "unsupported version {}",
                file.version
            )));
        }
        if !file.smoothing.is_finite() || file.smoothing <= 0.0 {
            return Err(OracleError::InvalidSmoothing(file.smoothing));
        }
        let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for record in file.contexts {
            if record.context.len() != file.order {
                return Err(OracleError::MalformedModel(format!(
                    "context of length {} in an order-{} model",
                    record.context.len(),
                    file.order
                )));
            }
            let context: Vec<TokenId> = record.context.iter().map(|&t| TokenId(t)).collect();
            for &(token, _) in &record.counts {
                if token as usize >= file.vocab.size() {
                    return Err(OracleError::TokenOutOfRange {
                        token: TokenId(token),
                        vocab: file.vocab.size(),
                    });
                }
            }
            let total = record.counts.iter().map(|&(_, n)| n).sum();
            let by_token = record
                .counts
                .into_iter()
                .map(|(t, n)| (TokenId(t), n))
                .collect();
            counts.insert(context, ContextCounts { total, by_token });
        }
        Ok(NgramModel {
            order: file.order,
            smoothing: file.smoothing,
            vocab: file.vocab,
            counts,
        })
    }
}

const MODEL_FORMAT: &str = "opttree-ngram";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    smoothing: f64,
    vocab: Vocabulary,
    contexts: Vec<ContextRecord>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
struct ContextRecord {
    context: Vec<u32>,
    counts: Vec<(u32, u64)>,
}

impl Oracle for NgramModel {
    fn vocab_size(&self) -> usize {
        self.vocab.size()
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>, OracleError> {
        if prefix.is_empty() {
            return Err(OracleError::EmptyPrefix);
        }
        let context = if prefix.len() >= self.order {
            Some(&prefix[prefix.len() - self.order..])
        } else {
            None // no full-length context yet; smoothing only
        };
        Ok(self.distribution_for_context(context))
    }

    fn batch_tree_forward(
        &self,
        context: &[TokenId],
        flat: &FlatTree,
        _mask: &TreeMask,
    ) -> Result<Vec<Vec<f64>>, OracleError> {
        // Only the trailing `order` tokens matter, so slide one window down
        // the tree instead of replaying every root path from scratch.
        let windows = super::tree_windows(context, flat, self.order);
        Ok((0..flat.len())
            .map(|i| {
                let full_input_len = context.len() + flat.depth()[i] + 1;
                let ctx = (full_input_len >= self.order).then(|| windows[i].as_slice());
                self.distribution_for_context(ctx)
            })
            .collect())
    }
}
