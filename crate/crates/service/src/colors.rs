//! Stable color keys. The server hands out ordinals; the client owns the palette.

use std::collections::HashMap;

use riskmap_core::{NodeId, Taxonomy};
use serde::Serialize;

/// `top_branch_ordinal` picks the hue (the node's top-level branch, in BFS
/// order); `within_ordinal` is the node's rank in BFS order inside that branch,
/// the branch itself being 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ColorKey {
    pub top_branch_ordinal: usize,
    pub within_ordinal: usize,
}

/// Color keys of every node. Depends on the tree structure only.
#[derive(Debug, Clone, Default)]
pub struct ColorTable {
    keys: HashMap<NodeId, ColorKey>,
}

impl ColorTable {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        let top_ordinal: HashMap<NodeId, usize> =
            taxonomy.roots().iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut seen = vec![0usize; top_ordinal.len()];
        let mut keys = HashMap::with_capacity(taxonomy.len());
        for &id in taxonomy.bfs_order() {
            let top = top_ordinal[&taxonomy.top_branch(id).expect("node from bfs order")];
            keys.insert(
                id,
                ColorKey {
                    top_branch_ordinal: top,
                    within_ordinal: seen[top],
                },
            );
            seen[top] += 1;
        }
        Self { keys }
    }

    pub fn get(&self, id: NodeId) -> ColorKey {
        self.keys[&id]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskmap_core::{ParseOptions, RawRow};

    #[test]
    fn keys_follow_bfs_within_each_root() {
        let taxonomy = Taxonomy::parse(
            [
                RawRow::new(1, None, "A"),
                RawRow::new(2, None, "- A1"),
                RawRow::new(3, None, "- - A11"),
                RawRow::new(4, None, "- A2"),
                RawRow::new(5, None, "B"),
                RawRow::new(6, None, "- B1"),
            ],
            &ParseOptions::default(),
        )
        .unwrap();
        let colors = ColorTable::new(&taxonomy);
        let key = |i| colors.get(NodeId(i));
        assert_eq!(key(1), ColorKey { top_branch_ordinal: 0, within_ordinal: 0 });
        assert_eq!(key(2).within_ordinal, 1);
        assert_eq!(key(4).within_ordinal, 2);
        assert_eq!(key(3).within_ordinal, 3);
        assert_eq!(key(6), ColorKey { top_branch_ordinal: 1, within_ordinal: 1 });
    }
}
