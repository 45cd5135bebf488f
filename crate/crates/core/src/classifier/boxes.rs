use crate::error::{Error, Result};
use crate::index::QueryBox;
use crate::subset::FeatureSubset;

use super::tree::{TreeModel, TreeNode};

/// One box per positive leaf, obtained by intersecting the split predicates
/// on the root-to-leaf path. Leaves are visited depth-first, left child first.
///
/// The tree must split on global dimensions contained in `subset`.
pub fn extract_boxes(tree: &TreeModel, subset: &FeatureSubset) -> Result<Vec<QueryBox>> {
    let nodes = tree.nodes();
    let mut out = Vec::new();
    let mut stack = vec![(0u32, QueryBox::universal(subset.clone()))];
    while let Some((i, qbox)) = stack.pop() {
        match nodes[i as usize] {
            TreeNode::Leaf { positive } => {
                if positive {
                    out.push(qbox);
                }
            }
            TreeNode::Split { dim, threshold, left, right } => {
                let j = subset.position(dim).ok_or_else(|| {
                    Error::Model(format!("tree splits on dimension {dim}, outside subset {subset}"))
                })?;
                let mut lbox = qbox.clone();
                lbox.intersect_side(j, f32::NEG_INFINITY, threshold);
                let mut rbox = qbox;
                rbox.intersect_side(j, threshold, f32::INFINITY);
                stack.push((right, rbox));
                stack.push((left, lbox));
            }
        }
    }
    Ok(out)
}
