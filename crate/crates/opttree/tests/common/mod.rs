//! Helpers shared by the integration suites: corpus models, seeded random
//! trees, and a brute-force reference for subtree selection.

#![allow(dead_code)]

use opttree::{train_ngram, DraftTree, NgramModel, NodeId, TokenId, TreeError, Vocabulary};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const CORPUS: &str = include_str!("../data/corpus.txt");

/// Word-level n-gram model over the bundled corpus. Smoothing is kept tiny
/// so frequent contexts stay sharply peaked.
pub fn corpus_model(order: usize) -> NgramModel {
    let vocab = Vocabulary::from_words(CORPUS);
    let tokens = vocab.encode(CORPUS).expect("corpus tokenizes");
    train_ngram(&tokens, order, 0.001, vocab).expect("corpus trains")
}

/// Sliding windows of the corpus as prompts: `count` prompts of `len`
/// tokens each, spread evenly over the corpus.
pub fn corpus_prompts(count: usize, len: usize) -> Vec<Vec<TokenId>> {
    let vocab = Vocabulary::from_words(CORPUS);
    let tokens = vocab.encode(CORPUS).expect("corpus tokenizes");
    let span = tokens.len() - len;
    (0..count)
        .map(|i| {
            let start = i * span / count;
            tokens[start..start + len].to_vec()
        })
        .collect()
}

/// A corpus of `cycles` repetitions of one fixed sentence, plus its
/// vocabulary. Every context is deterministic, so an n-gram model trained
/// on it is almost a lookup table.
pub fn repetitive_corpus(cycles: usize) -> (Vec<TokenId>, Vocabulary) {
    let sentence = "the clock on the tower strikes twelve and the town falls quiet .";
    let vocab = Vocabulary::from_words(sentence);
    let one = vocab.encode(sentence).expect("sentence tokenizes");
    let mut tokens = Vec::with_capacity(one.len() * cycles);
    for _ in 0..cycles {
        tokens.extend_from_slice(&one);
    }
    (tokens, vocab)
}

/// Attaches `nodes` random children to random parents. Conditional
/// probabilities are uniform in (0, 1]; sibling tokens never collide.
pub fn random_tree(rng: &mut ChaCha8Rng, nodes: usize, vocab: usize) -> DraftTree {
    let mut tree = DraftTree::new(TokenId(rng.random_range(0..vocab as u32)));
    let mut ids = vec![tree.root()];
    for _ in 0..nodes {
        let parent = ids[rng.random_range(0..ids.len())];
        let cond = rng.random_range(0.01..=1.0);
        loop {
            let token = TokenId(rng.random_range(0..vocab as u32));
            match tree.attach_child(parent, token, cond) {
                Ok(id) => {
                    ids.push(id);
                    break;
                }
                Err(TreeError::DuplicateSiblingToken { .. }) => continue,
                Err(e) => panic!("unexpected attach failure: {e}"),
            }
        }
    }
    tree
}

/// Exhaustive best-subtree search: the maximum sum of path scores over all
/// parent-closed sets of at most `n` non-root nodes. Exponential in tree
/// size; test trees stay small.
pub fn brute_force_best_subtree(tree: &DraftTree, n: usize) -> f64 {
    let non_root: Vec<NodeId> = tree.ids().filter(|&id| id != tree.root()).collect();
    let k = non_root.len();
    assert!(k <= 20, "brute force needs a small tree, got {k} nodes");
    let index_of = |id: NodeId| non_root.iter().position(|&x| x == id);
    let mut best = 0.0f64;
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize > n {
            continue;
        }
        let mut closed = true;
        let mut score = 0.0;
        for (i, &id) in non_root.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            let parent = tree.node(id).parent().expect("non-root has a parent");
            if parent != tree.root() {
                let p = index_of(parent).expect("parent is a non-root node");
                if mask & (1 << p) == 0 {
                    closed = false;
                    break;
                }
            }
            score += tree.node(id).path_score();
        }
        if closed && score > best {
            best = score;
        }
    }
    best
}

/// True when every selected node's parent is the root or also selected.
pub fn is_parent_closed(tree: &DraftTree, selected: &[NodeId]) -> bool {
    selected.iter().all(|&id| {
        let parent = tree.node(id).parent().expect("root is never selected");
        parent == tree.root() || selected.contains(&parent)
    })
}
