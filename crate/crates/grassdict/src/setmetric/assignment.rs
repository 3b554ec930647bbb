//! Exact minimum-cost assignment (Hungarian algorithm with potentials,
//! shortest augmenting paths, O(n^3)).

use crate::linops::Mat;

/// Minimum-cost perfect matching of a square cost matrix.
/// Returns `col_of_row` and the total cost.
pub(crate) fn solve(cost: &Mat) -> (Vec<usize>, f64) {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based internally; p[j] is the row matched to column j, 0 if free.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j];
        col_of_row[i - 1] = j - 1;
        total += cost[(i - 1, j - 1)];
    }
    (col_of_row, total)
}
