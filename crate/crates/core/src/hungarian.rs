//! Kuhn-Munkres (Hungarian) algorithm for square assignment problems,
//! shortest-augmenting-path form with row/column potentials, `O(n³)`.
//! Integer weights keep the optimum exact.

/// Returns `assign` with `assign[row] = column` minimizing
/// `Σ cost[row][assign[row]]` over permutations.
///
/// Panics if `cost` is not square.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-based internals; index 0 is the virtual root.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut min_v = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = matched_row[col0];
            let mut delta = INF;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r - 1][col - 1] - u[r] - v[col];
                if reduced < min_v[col] {
                    min_v[col] = reduced;
                    way[col] = col0;
                }
                if min_v[col] < delta {
                    delta = min_v[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_v[col] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            matched_row[col0] = matched_row[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for col in 1..=n {
        assign[matched_row[col] - 1] = col - 1;
    }
    assign
}

/// Maximum-weight perfect matching on a square matrix.
pub fn max_weight_assignment(weight: &[Vec<i64>]) -> Vec<usize> {
    let top = weight.iter().flatten().copied().max().unwrap_or(0);
    let cost: Vec<Vec<i64>> = weight
        .iter()
        .map(|r| r.iter().map(|&w| top - w).collect())
        .collect();
    min_cost_assignment(&cost)
}
