//! Minimum-cost assignment (Hungarian algorithm in potentials form).

/// Solve the square assignment problem for an `n x n` cost matrix given as a
/// closure, returning `perm` with `perm[row] = column` and minimum total cost.
///
/// Shortest-augmenting-path formulation with row/column potentials, O(n^3).
pub fn min_cost_assignment<F>(n: usize, cost: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> f64,
{
    if n == 0 {
        return Vec::new();
    }
    // 1-indexed with column 0 as the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1]; // matched[j] = row occupying column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
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
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=n {
        out[matched[j] - 1] = j - 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn brute_force(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
            if c < best {
                best = c;
            }
        });
        best
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(min_cost_assignment(0, |_, _| 0.0), Vec::<usize>::new());
        assert_eq!(min_cost_assignment(1, |_, _| 3.0), vec![0]);
        // Swap is optimal when the diagonal is expensive.
        let c = [[10.0, 1.0], [1.0, 10.0]];
        assert_eq!(min_cost_assignment(2, |i, j| c[i][j]), vec![1, 0]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = stream_rng(21, 0);
        for n in 2..=6 {
            for _ in 0..40 {
                let m: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .collect();
                let cost = |i: usize, j: usize| m[i][j];
                let perm = min_cost_assignment(n, cost);
                let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
                // Valid permutation.
                let mut seen = vec![false; n];
                for &j in &perm {
                    assert!(!seen[j]);
                    seen[j] = true;
                }
                let best = brute_force(n, &cost);
                assert!((total - best).abs() < 1e-9, "n={n}: {total} vs {best}");
            }
        }
    }
}
