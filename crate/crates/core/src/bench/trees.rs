//! Newton-boosted regression trees on logistic loss.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "node")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Binary tree stored as a node list; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
}

struct Grower<'a> {
    xs: &'a [&'a [f64]],
    g: &'a [f64],
    h: &'a [f64],
    p: GrowParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let (g, h) = self.sums(idx);
        -g / (h + self.p.lambda)
    }

    fn sums(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]))
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.p.lambda)
    }

    /// Best (gain, feature, threshold) over all features, if any split helps.
    fn best_split(&self, idx: &[usize]) -> Option<(f64, usize, f64)> {
        let (gt, ht) = self.sums(idx);
        let parent = self.score(gt, ht);
        let dims = self.xs.first().map_or(0, |x| x.len());
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..dims {
            order.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                gl += self.g[i];
                hl += self.h[i];
                let (v, next) = (self.xs[i][f], self.xs[order[k + 1]][f]);
                if v == next {
                    continue;
                }
                let (gr, hr) = (gt - gl, ht - hl);
                if hl < self.p.min_child_weight || hr < self.p.min_child_weight {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, v + (next - v) / 2.0));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(&idx) });
        if depth >= self.p.max_depth || idx.len() < 2 {
            return at;
        }
        let Some((_, feature, threshold)) = self.best_split(&idx) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

/// Fits one tree to gradients `g` and hessians `h` with Newton leaf values
/// `-G / (H + lambda)`.
pub fn fit_tree(xs: &[&[f64]], g: &[f64], h: &[f64], p: GrowParams) -> Tree {
    let mut grower = Grower { xs, g, h, p, nodes: Vec::new() };
    if xs.is_empty() {
        return Tree { nodes: vec![Node::Leaf { value: 0.0 }] };
    }
    grower.grow((0..xs.len()).collect(), 0);
    Tree { nodes: grower.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stump_finds_threshold() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i), 0.0]).collect();
        let xs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let g: Vec<f64> = (0..20).map(|i| if i < 12 { 0.5 } else { -0.5 }).collect();
        let h = vec![0.25; 20];
        let t = fit_tree(&xs, &g, &h, GrowParams { max_depth: 1, lambda: 1.0, min_child_weight: 0.0 });
        assert_eq!(t.root_split(), Some((0, 11.5)));
        assert!(t.eval(&[0.0, 0.0]) < 0.0 && t.eval(&[19.0, 0.0]) > 0.0);
        // Leaf value -G / (H + lambda) for the left child: -(12 * 0.5) / (12 * 0.25 + 1).
        assert!((t.eval(&[0.0, 0.0]) + 6.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn constant_features_give_single_leaf() {
        let rows = vec![vec![1.0]; 5];
        let xs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let t = fit_tree(
            &xs,
            &[1.0, -1.0, 1.0, -1.0, 1.0],
            &[0.25; 5],
            GrowParams { max_depth: 3, lambda: 1.0, min_child_weight: 0.0 },
        );
        assert_eq!(t.nodes.len(), 1);
    }
}
