//! Turn a decision tree into the axis-aligned boxes covering its positive leaves.

use boxsearch::classifier::{extract_boxes, train_tree, TreeModel, TreeNode};
use boxsearch::matrix::Matrix;
use boxsearch::subset::FeatureSubset;

fn main() -> boxsearch::error::Result<()> {
    // Columns 1 and 2 of a three-column table play x1 and x2.
    let split = |dim, threshold, left, right| TreeNode::Split { dim, threshold, left, right };
    let leaf = |positive| TreeNode::Leaf { positive };
    let tree = TreeModel::from_nodes(vec![
        split(2, 3.1, 1, 8),
        split(2, 2.4, 2, 7),
        split(1, 3.4, 3, 4),
        leaf(false),
        split(2, 2.1, 5, 6),
        leaf(true),
        leaf(false),
        leaf(true),
        leaf(false),
    ])?;
    let subset = FeatureSubset::new(vec![1, 2], 3)?;
    println!("hand-built tree, {} positive leaves:", tree.positive_leaves());
    for b in extract_boxes(&tree, &subset)? {
        println!("  {}", b.to_sql());
    }

    // A tree fitted to a small labeled scatter in two dimensions.
    let points = [
        ([1.0, 1.0], false),
        ([1.5, 3.0], false),
        ([2.0, 2.6], true),
        ([2.5, 2.8], true),
        ([3.0, 4.0], false),
        ([3.6, 1.5], true),
        ([4.2, 1.0], true),
        ([4.0, 2.3], false),
        ([2.0, 0.5], false),
    ];
    let x = Matrix::from_rows(&points.iter().map(|p| p.0).collect::<Vec<_>>()).expect("rectangular");
    let y: Vec<bool> = points.iter().map(|p| p.1).collect();
    let fitted = train_tree(&x, &y, 0)?;
    println!("fitted tree: {} leaves, {} positive", fitted.leaves(), fitted.positive_leaves());
    for b in extract_boxes(&fitted, &FeatureSubset::full(2))? {
        println!("  {}", b.to_sql());
    }
    Ok(())
}
