//! Flattening draft trees into sequences and the attention masks that let a
//! single batched forward pass score every branch at once.
//!
//! Verification feeds the whole tree to the target model as one sequence.
//! Correctness only needs two things: each node may attend to its root path
//! and nothing else, and each node's position embedding offset equals its
//! depth. With those in place, the per-node output distributions are exactly
//! what the model would produce on each root chain in isolation.

use crate::tree::{DraftTree, NodeId, TokenId};

/// A draft tree laid out in breadth-first order. The root occupies slot 0;
/// within a layer, nodes keep their arena order, so the layout is stable for
/// a given tree.
#[derive(Debug, Clone)]
pub struct FlatTree {
    tokens: Vec<TokenId>,
    parent_index: Vec<Option<usize>>,
    depth: Vec<usize>,
    ids: Vec<NodeId>,
}

impl FlatTree {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Flat position of each node's parent; `None` only for the root.
    /// Parents always sit at a smaller position than their children.
    pub fn parent_index(&self) -> &[Option<usize>] {
        &self.parent_index
    }

    pub fn depth(&self) -> &[usize] {
        &self.depth
    }

    /// Arena handle of the node at each flat position.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Flat position of an arena node.
    pub fn position_of(&self, id: NodeId) -> usize {
        self.ids
            .iter()
            .position(|&n| n == id)
            .expect("node comes from the flattened tree")
    }

    /// Tokens along the root path of flat node `i`, root token first, node
    /// `i`'s own token last. Appended to the detached prefix this forms the
    /// exact model input whose next-token distribution belongs to node `i`.
    pub fn root_path_tokens(&self, i: usize) -> Vec<TokenId> {
        let mut path = Vec::with_capacity(self.depth[i] + 1);
        let mut cur = Some(i);
        while let Some(j) = cur {
            path.push(self.tokens[j]);
            cur = self.parent_index[j];
        }
        path.reverse();
        path
    }
}

/// Lays out `tree` in breadth-first order.
pub fn flatten(tree: &DraftTree) -> FlatTree {
    let n = tree.len();
    let mut tokens = Vec::with_capacity(n);
    let mut parent_index = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    // flat position of each arena slot, filled as we emit layers
    let mut position = vec![usize::MAX; n];
    for layer in tree.layers() {
        for &id in layer {
            let node = tree.node(id);
            position[id.index()] = tokens.len();
            tokens.push(node.token());
            parent_index.push(node.parent().map(|p| position[p.index()]));
            depth.push(node.depth());
            ids.push(id);
        }
    }
    FlatTree {
        tokens,
        parent_index,
        depth,
        ids,
    }
}

/// Visibility mask and position offsets for a flattened tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMask {
    visible: Vec<Vec<bool>>,
    position_offset: Vec<usize>,
}

impl TreeMask {
    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    /// True when node `i` may attend to node `j`, i.e. `j` lies on `i`'s
    /// root path (self included).
    pub fn visible(&self, i: usize, j: usize) -> bool {
        self.visible[i][j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.visible[i]
    }

    /// Positional offset of each node relative to the end of the committed
    /// prefix; equals the node's depth.
    pub fn position_offset(&self) -> &[usize] {
        &self.position_offset
    }

    /// Debug rendering: one row per node, '1' where visible.
    pub fn ascii(&self) -> String {
        let mut out = String::with_capacity(self.len() * (self.len() + 1));
        for row in &self.visible {
            for &v in row {
                out.push(if v { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

impl std::fmt::Display for TreeMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.ascii())
    }
}

/// Builds the ancestor-or-self visibility mask for a flattened tree. Under
/// breadth-first layout the mask is lower triangular, and each row extends
/// its parent's row by one diagonal entry.
pub fn build_mask(flat: &FlatTree) -> TreeMask {
    let n = flat.len();
    let mut visible: Vec<Vec<bool>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = match flat.parent_index()[i] {
            Some(p) => visible[p].clone(),
            None => vec![false; n],
        };
        row[i] = true;
        visible.push(row);
    }
    TreeMask {
        visible,
        position_offset: flat.depth().to_vec(),
    }
}
