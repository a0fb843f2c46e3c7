use alimony_core::forest::{DecisionTree, TreeNode};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        neg: usize,
        pos: usize,
    },
    Split {
        column: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// `Σ_children (neg² + pos²) / n_child` as an exact fraction. A larger value
/// is a larger Gini decrease.
#[derive(Clone, Copy)]
struct Purity {
    num: i128,
    den: i128,
}

impl Purity {
    fn of(groups: &[(usize, usize)]) -> Self {
        let mut acc = Purity { num: 0, den: 1 };
        for &(neg, pos) in groups {
            let n = (neg + pos) as i128;
            let q = (neg * neg + pos * pos) as i128;
            acc = Purity {
                num: acc.num * n + q * acc.den,
                den: acc.den * n,
            };
        }
        acc
    }

    fn greater(self, other: Purity) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn counts(y: &[bool], rows: &[usize]) -> (usize, usize) {
    let pos = rows.iter().filter(|&&r| y[r]).count();
    (rows.len() - pos, pos)
}

/// The greedy CART tree by enumeration of every (column, cut) pair, with
/// exact arithmetic: ties go to the lower column, then the lower cut.
pub fn greedy(x: &[Vec<f64>], y: &[bool], rows: &[usize], depth_left: usize) -> Node {
    let (neg, pos) = counts(y, rows);
    let leaf = Node::Leaf { neg, pos };
    if depth_left == 0 || neg == 0 || pos == 0 {
        return leaf;
    }
    let parent = Purity::of(&[(neg, pos)]);
    let mut best: Option<(Purity, usize, f64)> = None;
    for column in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][column]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let cut = 0.5 * (pair[0] + pair[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][column] <= cut);
            let purity = Purity::of(&[counts(y, &l), counts(y, &r)]);
            if purity.greater(parent) && best.is_none_or(|(b, _, _)| purity.greater(b)) {
                best = Some((purity, column, cut));
            }
        }
    }
    let Some((_, column, threshold)) = best else {
        return leaf;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][column] <= threshold);
    Node::Split {
        column,
        threshold,
        left: Box::new(greedy(x, y, &l, depth_left - 1)),
        right: Box::new(greedy(x, y, &r, depth_left - 1)),
    }
}

pub fn from_tree(tree: &DecisionTree) -> Node {
    fn walk(nodes: &[TreeNode], at: usize) -> Node {
        match nodes[at] {
            TreeNode::Leaf { counts, .. } => Node::Leaf {
                neg: counts[0],
                pos: counts[1],
            },
            TreeNode::Internal {
                column,
                threshold,
                left,
                right,
                ..
            } => Node::Split {
                column,
                threshold,
                left: Box::new(walk(nodes, left)),
                right: Box::new(walk(nodes, right)),
            },
        }
    }
    walk(&tree.nodes, 0)
}
