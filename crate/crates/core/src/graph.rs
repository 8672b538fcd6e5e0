//! Undirected simple graphs stored as a dense symmetric bitset.
//!
//! Each vertex owns a row of `u64` words; bit `j` of row `i` is set when the
//! edge `{i, j}` is present. Common-neighbour counts are a popcount over the
//! AND of two rows.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    edges: usize,
}

impl Graph {
    /// Empty graph on `n` vertices.
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Graph {
            n,
            words,
            rows: vec![0; n * words],
            edges: 0,
        }
    }

    /// Complete graph on `n` vertices.
    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.set(i, j, true);
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(n);
        for &(i, j) in edges {
            g.check_pair(i, j)?;
            if g.has_edge(i, j) {
                return Err(Error::invalid(format!("duplicate edge ({i}, {j})")));
            }
            g.set(i, j, true);
        }
        Ok(g)
    }

    /// Builds the graph whose edge set is the bitmask `mask` over pairs in
    /// lexicographic order `(0,1), (0,2), ..., (n-2,n-1)`.
    pub fn from_pair_mask(n: usize, mask: u64) -> Self {
        let mut g = Graph::empty(n);
        let mut bit = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if mask >> bit & 1 == 1 {
                    g.set(i, j, true);
                }
                bit += 1;
            }
        }
        g
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// Number of unordered vertex pairs, `n(n-1)/2`.
    #[inline]
    pub fn pair_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    /// Number of vertices adjacent to both `i` and `j`.
    #[inline]
    pub fn common_neighbours(&self, i: usize, j: usize) -> usize {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let t = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(w * 64 + t)
                }
            })
        })
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| self.neighbours(i).filter(move |&j| j > i).map(move |j| (i, j)))
            .collect()
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::invalid(format!("self-loop ({i}, {j})")));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::invalid(format!(
                "vertex pair ({i}, {j}) out of range for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, on: bool) {
        let (wi, bi) = (i * self.words + j / 64, 1u64 << (j % 64));
        let (wj, bj) = (j * self.words + i / 64, 1u64 << (i % 64));
        let was = self.rows[wi] & bi != 0;
        if was == on {
            return;
        }
        if on {
            self.rows[wi] |= bi;
            self.rows[wj] |= bj;
            self.edges += 1;
        } else {
            self.rows[wi] &= !bi;
            self.rows[wj] &= !bj;
            self.edges -= 1;
        }
    }

    /// Flips the pair `{i, j}` in place.
    pub fn toggle(&mut self, i: usize, j: usize) -> Result<()> {
        self.check_pair(i, j)?;
        self.toggle_unchecked(i, j);
        Ok(())
    }

    #[inline]
    pub(crate) fn toggle_unchecked(&mut self, i: usize, j: usize) {
        let on = !self.has_edge(i, j);
        self.set(i, j, on);
    }

    /// Returns a copy with `{i, j}` flipped.
    pub fn toggled(&self, i: usize, j: usize) -> Result<Graph> {
        let mut g = self.clone();
        g.toggle(i, j)?;
        Ok(g)
    }

    pub(crate) fn validate_pair(&self, i: usize, j: usize) -> Result<()> {
        self.check_pair(i, j)
    }

    /// Relabels vertices: vertex `v` of `self` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        Error::check_dim(self.n, perm.len())?;
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || seen[p] {
                return Err(Error::invalid("relabelling is not a permutation"));
            }
            seen[p] = true;
        }
        let mut g = Graph::empty(self.n);
        for (i, j) in self.edges() {
            g.set(perm[i], perm[j], true);
        }
        Ok(g)
    }

    /// Fixture text format: `n <count>` then one `i j` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}

impl FromStr for Graph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing `n <count>` header".into()))?;
        let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["n", count] => count
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad vertex count: {e}")))?,
            _ => return Err(Error::Parse(format!("bad header line `{header}`"))),
        };
        let mut edges = Vec::new();
        for line in lines {
            let parts: Vec<_> = line.split_whitespace().collect();
            let [a, b] = parts[..] else {
                return Err(Error::Parse(format!("bad edge line `{line}`")));
            };
            let i: usize = a.parse().map_err(|_| Error::Parse(format!("bad vertex `{a}`")))?;
            let j: usize = b.parse().map_err(|_| Error::Parse(format!("bad vertex `{b}`")))?;
            if i >= j {
                return Err(Error::Parse(format!("edge `{line}` must satisfy i < j")));
            }
            edges.push((i, j));
        }
        Graph::from_edges(n, &edges)
    }
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.edges())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    #[test]
    fn toggle_adds_single_edge() {
        let g = Graph::empty(3).toggled(0, 1).unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
        assert!(g.has_edge(1, 0));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn toggle_is_an_involution() {
        let g = triangle();
        assert_eq!(g.toggled(0, 1).unwrap().toggled(1, 0).unwrap(), g);
    }

    #[test]
    fn toggle_triangle_gives_path() {
        let g = triangle().toggled(0, 1).unwrap();
        assert_eq!(g.edges(), vec![(0, 2), (1, 2)]);
        assert_eq!(g.degree(2), 2);
    }

    #[test]
    fn rejects_bad_pairs() {
        let mut g = Graph::empty(3);
        assert!(matches!(g.toggle(1, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(g.toggle(0, 3), Err(Error::InvalidArgument(_))));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn wide_graph_crosses_word_boundary() {
        let mut g = Graph::empty(130);
        g.toggle(3, 127).unwrap();
        g.toggle(127, 129).unwrap();
        g.toggle(3, 64).unwrap();
        g.toggle(64, 129).unwrap();
        assert_eq!(g.common_neighbours(3, 129), 2);
        assert_eq!(g.neighbours(3).collect::<Vec<_>>(), vec![64, 127]);
    }

    #[test]
    fn text_format_roundtrip() {
        let g = Graph::from_edges(5, &[(0, 4), (1, 2), (2, 3)]).unwrap();
        let text = g.to_text();
        assert_eq!(text, "n 5\n0 4\n1 2\n2 3\n");
        assert_eq!(text.parse::<Graph>().unwrap(), g);
    }

    #[test]
    fn text_format_rejects_garbage() {
        assert!("".parse::<Graph>().is_err());
        assert!("n 3\n1 0\n".parse::<Graph>().is_err());
        assert!("n 3\n0 1 2\n".parse::<Graph>().is_err());
        assert!("m 3\n".parse::<Graph>().is_err());
        assert!("n 3\n0 5\n".parse::<Graph>().is_err());
    }

    #[test]
    fn pair_mask_enumerates_lexicographically() {
        let g = Graph::from_pair_mask(4, 0b100001);
        assert_eq!(g.edges(), vec![(0, 1), (2, 3)]);
        assert_eq!(Graph::from_pair_mask(4, 63), Graph::complete(4));
    }
}
