use super::Dag;
use crate::error::{Error, Result};

/// d-separation of `i` and `j` given `given`, by Bayes-ball reachability.
///
/// A trail is active when every non-collider on it is outside `given` and
/// every collider is in `given` or has a descendant there.
pub fn d_separated(dag: &Dag, i: usize, j: usize, given: &[usize]) -> Result<bool> {
    let d = dag.d();
    for &x in given.iter().chain([i, j].iter()) {
        if x >= d {
            return Err(Error::IndexOutOfRange { index: x, len: d });
        }
    }
    if i == j || given.contains(&i) || given.contains(&j) {
        return Err(Error::InvalidConfig(format!(
            "d-separation query ({i}, {j}) must have distinct endpoints outside the conditioning set"
        )));
    }
    let adj = dag.adjacency();
    let mut in_z = vec![false; d];
    for &z in given {
        in_z[z] = true;
    }
    // ancestors of the conditioning set, inclusive
    let mut anc = vec![false; d];
    let mut stack: Vec<usize> = given.to_vec();
    while let Some(x) = stack.pop() {
        if !anc[x] {
            anc[x] = true;
            stack.extend(adj.col_ones(x));
        }
    }

    // (node, arrived_from_child): `true` = travelling up against an edge
    let mut visited = vec![[false; 2]; d];
    let mut queue = vec![(i, true)];
    while let Some((y, up)) = queue.pop() {
        let slot = usize::from(up);
        if visited[y][slot] {
            continue;
        }
        visited[y][slot] = true;
        if y == j && !in_z[y] {
            return Ok(false);
        }
        if up {
            if !in_z[y] {
                queue.extend(adj.col_ones(y).map(|p| (p, true)));
                queue.extend(adj.row_ones(y).map(|c| (c, false)));
            }
        } else {
            if !in_z[y] {
                queue.extend(adj.row_ones(y).map(|c| (c, false)));
            }
            if anc[y] {
                queue.extend(adj.col_ones(y).map(|p| (p, true)));
            }
        }
    }
    Ok(true)
}
