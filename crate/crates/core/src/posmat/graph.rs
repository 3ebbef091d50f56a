use crate::error::{Error, Result};
use crate::posmat::{Mat, MetzlerMatrix};
use crate::scalar::Real;

/// Strong connectivity of the digraph with an edge `i -> j` whenever
/// `i != j` and `edge(i, j)`, by forward and reverse reachability from node 0.
fn strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if u != v && e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// A matrix is irreducible when its off-diagonal nonzero pattern is strongly
/// connected. A 1×1 matrix counts as irreducible.
pub fn is_irreducible<T: Real>(m: &Mat<T>) -> bool {
    strongly_connected(m.dim(), |i, j| m[(i, j)] != T::zero())
}

/// Strong connectivity of the union graph: edge `i -> j` when any member has
/// a positive `(i, j)` entry.
pub fn union_graph_strongly_connected<T: Real>(ms: &[MetzlerMatrix<T>]) -> Result<bool> {
    let first = ms.first().ok_or_else(|| Error::InvalidInput("empty matrix family".into()))?;
    let n = first.dim();
    if let Some(bad) = ms.iter().find(|m| m.dim() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: bad.dim() });
    }
    Ok(strongly_connected(n, |i, j| ms.iter().any(|m| m.as_mat()[(i, j)] > T::zero())))
}
