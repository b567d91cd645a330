//! Dense O(n^3) Hungarian algorithm (Kuhn-Munkres with row/column
//! potentials and shortest augmenting paths).

/// Minimum-cost perfect assignment of the square row-major matrix `costs`.
/// Returns `assignment[row] = col`.
pub fn solve(n: usize, costs: &[u64]) -> Vec<usize> {
    assert_eq!(costs.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| costs[i * n + j] as i64;

    let inf = i64::MAX / 4;
    // 1-based with a sentinel column 0, as in the classic formulation.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

pub fn assignment_cost(n: usize, costs: &[u64], assignment: &[usize]) -> u64 {
    assignment.iter().enumerate().map(|(i, &j)| costs[i * n + j]).sum()
}
