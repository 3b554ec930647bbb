//! Transportation simplex for exact optimal transport with arbitrary
//! nonnegative weights: northwest-corner start, MODI (u/v potential)
//! pivoting, basis kept as a spanning tree of the bipartite supply/demand
//! graph. Falls back to Bland's rule after a pivot budget so degenerate
//! instances cannot cycle.

use crate::linops::Mat;
use crate::{Error, Result};

pub(crate) struct TransportSolution {
    pub plan: Mat,
    pub objective: f64,
}

pub(crate) fn solve(cost: &Mat, supply: &[f64], demand: &[f64]) -> Result<TransportSolution> {
    let (m, n) = (cost.nrows(), cost.ncols());
    if supply.len() != m || demand.len() != n {
        return Err(Error::shape("transport weights do not match the cost matrix"));
    }
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    if (total_supply - total_demand).abs() > 1e-9 * total_supply.max(total_demand).max(1.0) {
        return Err(Error::invalid("transport supply and demand masses differ"));
    }
    // Make the masses match exactly so the northwest-corner walk closes.
    let rescale = total_supply / total_demand;
    let demand: Vec<f64> = demand.iter().map(|d| d * rescale).collect();

    let mut x = Mat::zeros(m, n);
    let mut in_basis = vec![false; m * n];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);

    // Northwest-corner initial basic feasible solution; ties advance one
    // index only, leaving the degenerate zero cells in the basis so it stays
    // a spanning tree with m + n - 1 cells.
    let mut remaining_supply = supply.to_vec();
    let mut remaining_demand = demand.clone();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let q = remaining_supply[i].min(remaining_demand[j]);
        x[(i, j)] = q;
        in_basis[i * n + j] = true;
        basis.push((i, j));
        remaining_supply[i] -= q;
        remaining_demand[j] -= q;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if remaining_supply[i] <= remaining_demand[j] && i + 1 < m {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(basis.len(), m + n - 1);

    let cost_scale = cost.amax().max(1.0);
    let tol = 1e-12 * cost_scale;
    let greedy_budget = 4 * m * n + 64;
    let hard_cap = 1000 * (m + n) * (m.max(n)) + 10_000;

    let mut u = vec![0.0f64; m];
    let mut v = vec![0.0f64; n];
    let mut adj: Vec<Vec<usize>> = Vec::new();

    for pivot in 0..hard_cap {
        compute_potentials(&basis, cost, m, n, &mut u, &mut v, &mut adj)?;

        // Entering cell: most negative reduced cost (Bland's smallest-index
        // rule once past the greedy budget).
        let mut entering: Option<(usize, usize, f64)> = None;
        'scan: for r in 0..m {
            for c in 0..n {
                if in_basis[r * n + c] {
                    continue;
                }
                let rc = cost[(r, c)] - u[r] - v[c];
                if rc < -tol {
                    if pivot >= greedy_budget {
                        entering = Some((r, c, rc));
                        break 'scan;
                    }
                    if entering.map_or(true, |(_, _, best)| rc < best) {
                        entering = Some((r, c, rc));
                    }
                }
            }
        }
        let (r0, c0) = match entering {
            Some((r, c, _)) => (r, c),
            None => {
                let objective = x.iter().zip(cost.iter()).map(|(a, b)| a * b).sum();
                return Ok(TransportSolution { plan: x, objective });
            }
        };

        // The unique tree path from column c0 back to row r0 plus the
        // entering cell forms the pivot cycle; signs alternate starting with
        // + on the entering cell.
        let path = tree_path(&basis, m, n, m + c0, r0)?;
        let mut cycle: Vec<(usize, usize)> = Vec::with_capacity(path.len() + 1);
        cycle.push((r0, c0));
        for edge in path {
            cycle.push(edge);
        }
        let mut theta = f64::INFINITY;
        let mut leave_pos = usize::MAX;
        for (pos, &(r, c)) in cycle.iter().enumerate() {
            if pos % 2 == 1 {
                let val = x[(r, c)];
                if val < theta - 1e-15 || (leave_pos == usize::MAX) {
                    if val < theta {
                        theta = val;
                        leave_pos = pos;
                    }
                }
            }
        }
        debug_assert!(leave_pos != usize::MAX);
        for (pos, &(r, c)) in cycle.iter().enumerate() {
            if pos == 0 {
                x[(r, c)] += theta;
            } else if pos % 2 == 1 {
                x[(r, c)] -= theta;
            } else {
                x[(r, c)] += theta;
            }
        }
        let (lr, lc) = cycle[leave_pos];
        x[(lr, lc)] = 0.0;
        in_basis[lr * n + lc] = false;
        in_basis[r0 * n + c0] = true;
        let idx = basis.iter().position(|&b| b == (lr, lc)).expect("leaving cell in basis");
        basis[idx] = (r0, c0);
    }
    Err(Error::DecompositionFailure("transportation simplex exceeded its pivot cap".into()))
}

/// Solve `u_i + v_j = c_ij` over the basis tree (u[0] = 0).
fn compute_potentials(
    basis: &[(usize, usize)],
    cost: &Mat,
    m: usize,
    n: usize,
    u: &mut [f64],
    v: &mut [f64],
    adj: &mut Vec<Vec<usize>>,
) -> Result<()> {
    // Nodes: rows 0..m, columns m..m+n; adjacency lists hold basis indices.
    adj.clear();
    adj.resize(m + n, Vec::new());
    for (k, &(r, c)) in basis.iter().enumerate() {
        adj[r].push(k);
        adj[m + c].push(k);
    }
    let mut known = vec![false; m + n];
    let mut stack = vec![0usize];
    u[0] = 0.0;
    known[0] = true;
    let mut visited = 1usize;
    while let Some(node) = stack.pop() {
        for &k in &adj[node] {
            let (r, c) = basis[k];
            let (a, b) = (r, m + c);
            let next = if node == a { b } else { a };
            if known[next] {
                continue;
            }
            if next >= m {
                v[next - m] = cost[(r, c)] - u[r];
            } else {
                u[next] = cost[(r, c)] - v[c];
            }
            known[next] = true;
            visited += 1;
            stack.push(next);
        }
    }
    if visited != m + n {
        return Err(Error::DecompositionFailure("transport basis lost its spanning tree".into()));
    }
    Ok(())
}

/// Edge path in the basis tree from `start` to `goal` (node ids as in
/// `compute_potentials`), returned as basis cells in walk order.
fn tree_path(
    basis: &[(usize, usize)],
    m: usize,
    n: usize,
    start: usize,
    goal: usize,
) -> Result<Vec<(usize, usize)>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n]; // (neighbor, basis idx)
    for (k, &(r, c)) in basis.iter().enumerate() {
        adj[r].push((m + c, k));
        adj[m + c].push((r, k));
    }
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n]; // (prev node, basis idx)
    let mut seen = vec![false; m + n];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        if node == goal {
            break;
        }
        for &(next, k) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, k));
                queue.push_back(next);
            }
        }
    }
    if !seen[goal] {
        return Err(Error::DecompositionFailure("transport basis lost connectivity".into()));
    }
    let mut path = Vec::new();
    let mut node = goal;
    while node != start {
        let (prev, k) = parent[node].expect("path exists");
        path.push(basis[k]);
        node = prev;
    }
    path.reverse();
    // Walk order from `start`: reverse gives start -> goal; we want the walk
    // starting at the column end (start), which is exactly this order.
    Ok(path)
}
