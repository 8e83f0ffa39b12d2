//! Bottleneck transport: minimize the maximum per-unit displacement cost.
//!
//! Rational weights are expanded to equal-mass atoms (common denominator,
//! capped by the caller), so feasibility of a cost threshold reduces to a
//! perfect bipartite matching on the expansion. The matching is computed as
//! an integer max-flow with atom multiplicities as capacities, which is the
//! same check without materializing duplicates. Binary search over the sorted
//! candidate edge costs then returns an exact pairwise cost.

use super::TransportError;

/// Smallest common denominator `den ≤ max_den` such that every weight is
/// within `1e-9` of `k/den`, together with the integer multiplicities.
pub(crate) fn integerize_weights(
    weights: &[f64],
    max_den: usize,
) -> Result<(usize, Vec<usize>), TransportError> {
    'outer: for den in 1..=max_den {
        let mut counts = Vec::with_capacity(weights.len());
        let mut total = 0usize;
        for &w in weights {
            let scaled = w * den as f64;
            let k = scaled.round();
            if (scaled - k).abs() > 1e-9 * den as f64 || k < 0.0 {
                continue 'outer;
            }
            counts.push(k as usize);
            total += k as usize;
        }
        if total == den {
            return Ok((den, counts));
        }
    }
    Err(TransportError::UnsupportedWeights { max_den })
}

/// Max-flow feasibility: can all `supply` mass reach `demand` using only the
/// allowed edges? Plain BFS augmentation; the graphs here are tiny.
fn feasible(supply: &[usize], demand: &[usize], allowed: &[Vec<bool>], total: usize) -> bool {
    let m = supply.len();
    let n = demand.len();
    let nodes = m + n + 2;
    let source = m + n;
    let sink = m + n + 1;
    // Dense capacity matrix; total ≤ 256 keeps this cheap.
    let mut cap = vec![vec![0i64; nodes]; nodes];
    for (i, &s) in supply.iter().enumerate() {
        cap[source][i] = s as i64;
    }
    for (j, &d) in demand.iter().enumerate() {
        cap[m + j][sink] = d as i64;
    }
    for i in 0..m {
        for j in 0..n {
            if allowed[i][j] {
                cap[i][m + j] = total as i64;
            }
        }
    }
    let mut flow = 0i64;
    loop {
        let mut prev = vec![usize::MAX; nodes];
        prev[source] = source;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(x) = queue.pop_front() {
            for y in 0..nodes {
                if prev[y] == usize::MAX && cap[x][y] > 0 {
                    prev[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if prev[sink] == usize::MAX {
            break;
        }
        let mut bottleneck = i64::MAX;
        let mut at = sink;
        while at != source {
            let p = prev[at];
            bottleneck = bottleneck.min(cap[p][at]);
            at = p;
        }
        let mut at = sink;
        while at != source {
            let p = prev[at];
            cap[p][at] -= bottleneck;
            cap[at][p] += bottleneck;
            at = p;
        }
        flow += bottleneck;
    }
    flow == total as i64
}

/// Exact bottleneck value for integer supplies/demands and a dense cost
/// matrix: the smallest threshold whose admissible edge set is feasible.
pub(crate) fn bottleneck_value(
    supply: &[usize],
    demand: &[usize],
    cost: &[Vec<f64>],
    total: usize,
) -> Result<f64, TransportError> {
    let mut candidates: Vec<f64> = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        if supply[i] == 0 {
            continue;
        }
        for (j, &c) in row.iter().enumerate() {
            if demand[j] > 0 {
                candidates.push(c);
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    candidates.dedup();
    if candidates.is_empty() {
        return Err(TransportError::Numerical("no admissible transport edges".into()));
    }
    let admissible = |threshold: f64| -> Vec<Vec<bool>> {
        cost.iter()
            .map(|row| row.iter().map(|&c| c <= threshold).collect())
            .collect()
    };
    let mut lo = 0usize;
    let mut hi = candidates.len() - 1;
    if !feasible(supply, demand, &admissible(candidates[hi]), total) {
        return Err(TransportError::Numerical(
            "bottleneck search found no feasible threshold".into(),
        ));
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(supply, demand, &admissible(candidates[mid]), total) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integerization() {
        let (den, counts) = integerize_weights(&[0.25, 0.75], 256).unwrap();
        assert_eq!(den, 4);
        assert_eq!(counts, vec![1, 3]);
        let (den, counts) = integerize_weights(&[1.0], 256).unwrap();
        assert_eq!((den, counts), (1, vec![1]));
        assert!(integerize_weights(&[1.0 / 3.0 + 1e-4, 2.0 / 3.0 - 1e-4], 256).is_err());
    }

    #[test]
    fn bottleneck_prefers_monotone_matching() {
        // Two unit atoms each side: matching {0→0, 1→1} has max cost 1, the
        // crossing alternative has 2.
        let cost = vec![vec![0.0, 2.0], vec![1.0, 1.0]];
        let v = bottleneck_value(&[1, 1], &[1, 1], &cost, 2).unwrap();
        assert_eq!(v, 1.0);
    }
}
