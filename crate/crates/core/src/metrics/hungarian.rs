//! Rectangular linear assignment (Kuhn-Munkres with potentials).

/// Assignment maximizing total weight. `weights` is `rows x cols`; the
/// result maps each row to a column or `None`. Every row is assigned when
/// `rows <= cols`, so callers drop pairs whose weight marks them invalid.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let m = weights[0].len();
    if m == 0 {
        return vec![None; n];
    }
    let transpose = n > m;
    let (rows, cols) = if transpose { (m, n) } else { (n, m) };
    let cost = |i: usize, j: usize| -> f64 {
        if transpose {
            -weights[j][i]
        } else {
            -weights[i][j]
        }
    };
    // 1-based potentials formulation, rows <= cols
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
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
            }
            for j in 0..=cols {
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
    let mut out = vec![None; n];
    for j in 1..=cols {
        if p[j] != 0 {
            let (r, c) = (p[j] - 1, j - 1);
            if transpose {
                out[c] = Some(r);
            } else {
                out[r] = Some(c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(w: &[Vec<f64>], a: &[Option<usize>]) -> f64 {
        a.iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| w[i][c]))
            .sum()
    }

    /// Best total over all partial matchings; weights are non-negative, so
    /// this equals the best full-size matching.
    fn brute(w: &[Vec<f64>]) -> f64 {
        fn go(w: &[Vec<f64>], i: usize, used: &mut Vec<bool>) -> f64 {
            if i == w.len() {
                return 0.0;
            }
            let mut best = go(w, i + 1, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w[i][j] + go(w, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(w, 0, &mut vec![false; w[0].len()])
    }

    #[test]
    fn small_cases() {
        let w = vec![vec![1.0, 0.0], vec![0.9, 0.8]];
        assert_eq!(max_weight_assignment(&w), vec![Some(0), Some(1)]);
        let w = vec![vec![0.5], vec![0.9], vec![0.2]];
        assert_eq!(max_weight_assignment(&w), vec![None, Some(0), None]);
        assert!(max_weight_assignment(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn matches_enumeration(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let a = max_weight_assignment(&w);
            let mut seen = std::collections::HashSet::new();
            for c in a.iter().flatten() {
                prop_assert!(seen.insert(*c));
            }
            prop_assert_eq!(seen.len(), rows.min(cols));
            prop_assert!((total(&w, &a) - brute(&w)).abs() < 1e-9);
        }
    }
}
