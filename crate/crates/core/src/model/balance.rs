use std::collections::VecDeque;

use super::PairwiseModel;
use crate::error::Result;

/// Outcome of the signed 2-coloring of a binary model's edges.
#[derive(Clone, Debug, PartialEq)]
pub enum Balance {
    /// Flipping these variables makes every retained edge attractive.
    Balanced(Vec<usize>),
    /// Vertices of a cycle with an odd number of repulsive edges, in cycle order.
    Frustrated(Vec<usize>),
}

impl Balance {
    pub fn is_balanced(&self) -> bool {
        matches!(self, Balance::Balanced(_))
    }
}

impl PairwiseModel {
    /// Linear-time balance test. Edges with `|W_ij| <= weight_floor` are ignored.
    pub fn balance_certificate(&self, weight_floor: f64) -> Result<Balance> {
        let view = self.binary_view()?;
        let n = self.n();
        let keep = |e: usize| view.w[e].abs() > weight_floor;
        let mut side = vec![u8::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let mut depth = vec![0usize; n];
        for root in 0..n {
            if side[root] != u8::MAX {
                continue;
            }
            side[root] = 0;
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                for &(v, e) in self.neighbors(u) {
                    if !keep(e) {
                        continue;
                    }
                    let want = side[u] ^ u8::from(view.w[e] < 0.0);
                    if side[v] == u8::MAX {
                        side[v] = want;
                        parent[v] = u;
                        depth[v] = depth[u] + 1;
                        queue.push_back(v);
                    } else if side[v] != want {
                        return Ok(Balance::Frustrated(tree_cycle(u, v, &parent, &depth)));
                    }
                }
            }
        }
        Ok(Balance::Balanced((0..n).filter(|&i| side[i] == 1).collect()))
    }
}

/// Cycle formed by the BFS-tree paths from `u` and `v` to their common ancestor
/// plus the edge `(u, v)`.
fn tree_cycle(u: usize, v: usize, parent: &[usize], depth: &[usize]) -> Vec<usize> {
    let (mut a, mut b) = (u, v);
    let mut left = vec![a];
    let mut right = vec![b];
    while depth[a] > depth[b] {
        a = parent[a];
        left.push(a);
    }
    while depth[b] > depth[a] {
        b = parent[b];
        right.push(b);
    }
    while a != b {
        a = parent[a];
        b = parent[b];
        left.push(a);
        right.push(b);
    }
    right.pop();
    right.reverse();
    left.extend(right);
    left
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize, w: f64) -> PairwiseModel {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, w)).collect();
        PairwiseModel::from_binary(&vec![0.0; n], &edges).unwrap()
    }

    fn repulsive_count(m: &PairwiseModel, cyc: &[usize]) -> usize {
        let v = m.binary_view().unwrap();
        (0..cyc.len())
            .filter(|&k| {
                let e = m.edge_between(cyc[k], cyc[(k + 1) % cyc.len()]).expect("cycle edge");
                v.w[e] < 0.0
            })
            .count()
    }

    #[test]
    fn even_repulsive_cycle_is_balanced() {
        let m = cycle(4, -2.0);
        match m.balance_certificate(0.0).unwrap() {
            Balance::Balanced(s) => {
                let f = m.flip(&s).unwrap();
                assert!(f.binary_view().unwrap().w.iter().all(|&w| w >= 0.0));
            }
            other => panic!("expected balanced, got {other:?}"),
        }
    }

    #[test]
    fn repulsive_triangle_is_frustrated() {
        let m = cycle(3, -1.0);
        match m.balance_certificate(0.0).unwrap() {
            Balance::Frustrated(c) => {
                assert_eq!(c.len(), 3);
                assert_eq!(repulsive_count(&m, &c) % 2, 1);
            }
            other => panic!("expected frustrated, got {other:?}"),
        }
    }

    #[test]
    fn tree_is_always_balanced() {
        let m = PairwiseModel::from_binary(&[0.0; 5], &[(0, 1, -1.0), (1, 2, 2.0), (1, 3, -4.0), (3, 4, -0.5)])
            .unwrap();
        assert!(m.balance_certificate(0.0).unwrap().is_balanced());
    }

    #[test]
    fn weight_floor_drops_weak_edges() {
        let m = PairwiseModel::from_binary(&[0.0; 3], &[(0, 1, 3.0), (1, 2, 3.0), (0, 2, -0.01)]).unwrap();
        assert!(!m.balance_certificate(0.0).unwrap().is_balanced());
        assert!(m.balance_certificate(0.1).unwrap().is_balanced());
    }

    #[test]
    fn witness_in_larger_graph_is_a_real_cycle() {
        // two squares sharing an edge; one frustrated
        let m = PairwiseModel::from_binary(
            &[0.0; 6],
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (2, 4, 1.0), (4, 5, -1.0), (5, 1, 1.0)],
        )
        .unwrap();
        let Balance::Frustrated(c) = m.balance_certificate(0.0).unwrap() else {
            panic!("expected frustrated");
        };
        let mut sorted = c.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), c.len());
        assert_eq!(repulsive_count(&m, &c) % 2, 1);
    }
}
