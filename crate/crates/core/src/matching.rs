//! Bipartite matching between equations (left) and unknowns (right).

use serde::{Deserialize, Serialize};

/// Bipartite graph with adjacency lists from left to right vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    right: usize,
    adj: Vec<Vec<usize>>,
}

/// A maximum matching and, when it is not perfect, a Hall violator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    /// Every left vertex is matched and |left| = |right|.
    pub perfect: bool,
    pub size: usize,
    /// `(left, right)` pairs, sorted by left vertex.
    pub pairs: Vec<(usize, usize)>,
    /// Left vertices whose neighbourhood is smaller than the set itself.
    pub deficient_set: Option<Vec<usize>>,
    /// The neighbourhood of `deficient_set`.
    pub deficient_neighbourhood: Option<Vec<usize>>,
}

impl BipartiteGraph {
    /// `adj[l]` lists the right vertices adjacent to left vertex `l`; entries
    /// must be `< right`.
    pub fn new(right: usize, adj: Vec<Vec<usize>>) -> Self {
        assert!(
            adj.iter().flatten().all(|&r| r < right),
            "right vertex out of range"
        );
        Self { right, adj }
    }

    pub fn left(&self) -> usize {
        self.adj.len()
    }

    pub fn right(&self) -> usize {
        self.right
    }

    /// Distinct right vertices adjacent to any of `lefts`.
    pub fn neighbourhood(&self, lefts: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut seen = vec![false; self.right];
        for l in lefts {
            for &r in &self.adj[l] {
                seen[r] = true;
            }
        }
        (0..self.right).filter(|&r| seen[r]).collect()
    }

    fn augment(&self, l: usize, visited: &mut [bool], match_right: &mut [Option<usize>]) -> bool {
        for &r in &self.adj[l] {
            if visited[r] {
                continue;
            }
            visited[r] = true;
            if match_right[r].is_none_or(|other| self.augment(other, visited, match_right)) {
                match_right[r] = Some(l);
                return true;
            }
        }
        false
    }

    /// Maximum matching by repeated augmenting-path search.
    pub fn maximum_matching(&self) -> MatchingResult {
        let mut match_right: Vec<Option<usize>> = vec![None; self.right];
        let mut visited = vec![false; self.right];
        let mut unmatched_left = Vec::new();
        for l in 0..self.left() {
            visited.iter_mut().for_each(|v| *v = false);
            if !self.augment(l, &mut visited, &mut match_right) {
                unmatched_left.push(l);
            }
        }
        let mut pairs: Vec<(usize, usize)> = match_right
            .iter()
            .enumerate()
            .filter_map(|(r, l)| l.map(|l| (l, r)))
            .collect();
        pairs.sort_unstable();
        let size = pairs.len();

        let (deficient_set, deficient_neighbourhood) = match unmatched_left.first() {
            Some(&start) => {
                let set = self.alternating_reach(start, &match_right);
                let nb = self.neighbourhood(set.iter().copied());
                (Some(set), Some(nb))
            }
            None => (None, None),
        };
        MatchingResult {
            perfect: unmatched_left.is_empty() && self.left() == self.right,
            size,
            pairs,
            deficient_set,
            deficient_neighbourhood,
        }
    }

    /// Left vertices reachable from unmatched `start` by alternating paths.
    /// Under a maximum matching their neighbourhood has one vertex fewer.
    fn alternating_reach(&self, start: usize, match_right: &[Option<usize>]) -> Vec<usize> {
        let mut in_set = vec![false; self.left()];
        let mut seen_right = vec![false; self.right];
        let mut stack = vec![start];
        in_set[start] = true;
        while let Some(l) = stack.pop() {
            for &r in &self.adj[l] {
                if std::mem::replace(&mut seen_right[r], true) {
                    continue;
                }
                if let Some(next) = match_right[r] {
                    if !in_set[next] {
                        in_set[next] = true;
                        stack.push(next);
                    }
                }
            }
        }
        (0..self.left()).filter(|&l| in_set[l]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vertex() {
        let g = BipartiteGraph::new(1, vec![vec![0]]);
        let m = g.maximum_matching();
        assert!(m.perfect);
        assert_eq!(m.pairs, vec![(0, 0)]);
    }

    #[test]
    fn needs_augmentation() {
        // Greedy would match 0-0 and leave 1 stranded.
        let g = BipartiteGraph::new(2, vec![vec![0, 1], vec![0]]);
        let m = g.maximum_matching();
        assert!(m.perfect);
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn hall_violation_is_reported() {
        // Left 0, 1 and 2 all touch only right 0 and 1.
        let g = BipartiteGraph::new(3, vec![vec![0, 1], vec![0, 1], vec![1, 0], vec![2]]);
        let m = g.maximum_matching();
        assert!(!m.perfect);
        assert_eq!(m.size, 3);
        let set = m.deficient_set.unwrap();
        let nb = m.deficient_neighbourhood.unwrap();
        assert!(nb.len() < set.len());
        assert_eq!(nb, g.neighbourhood(set.iter().copied()));
    }
}
