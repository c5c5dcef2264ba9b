//! Largest-remainder integer splitting.

/// Splits `total` into integer parts proportional to `weights`.
///
/// Each part gets the floor of its quota; the leftover units go to the
/// largest fractional remainders, ties resolved in index order. The parts
/// always sum to `total`. All-zero (or empty-sum) weights split equally.
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let quotas: Vec<f64> = if sum > 0.0 && sum.is_finite() {
        weights
            .iter()
            .map(|w| total as f64 * w.max(0.0) / sum)
            .collect()
    } else {
        vec![total as f64 / n as f64; n]
    };

    let mut parts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    // Float quotas can floor to more than the total only through rounding
    // noise on huge totals; trim from the back if it ever happens.
    if assigned > total {
        let mut excess = assigned - total;
        for p in parts.iter_mut().rev() {
            let take = excess.min(*p);
            *p -= take;
            excess -= take;
            if excess == 0 {
                break;
            }
        }
        return parts;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let leftover = (total - assigned) as usize;
    for &i in order.iter().cycle().take(leftover) {
        parts[i] += 1;
    }
    parts
}

/// Equal split with the remainder going to the first parts.
pub fn equal_split(total: u64, parts: usize) -> Vec<u64> {
    largest_remainder(total, &vec![1.0; parts])
}
