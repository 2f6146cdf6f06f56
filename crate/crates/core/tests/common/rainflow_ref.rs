//! Rainflow reference that rescans the whole reversal sequence from the
//! start after every extraction instead of using a stack. Reversals are
//! found by comparing each sample with its neighbours after removing repeats.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn reversals(series: &[f64]) -> Vec<f64> {
    let mut dedup: Vec<f64> = Vec::new();
    for &v in series {
        if dedup.last() != Some(&v) {
            dedup.push(v);
        }
    }
    if dedup.len() < 3 {
        return dedup;
    }
    let mut out = vec![dedup[0]];
    for i in 1..dedup.len() - 1 {
        let (p, c, n) = (dedup[i - 1], dedup[i], dedup[i + 1]);
        if (c > p && c > n) || (c < p && c < n) {
            out.push(c);
        }
    }
    out.push(dedup[dedup.len() - 1]);
    out
}

/// (amplitude, mean, count) triples, sorted.
pub fn reference(series: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut pts = reversals(series);
    let mut cycles = Vec::new();
    'scan: loop {
        for i in 1..pts.len().saturating_sub(2) {
            let (a, b, c, d) = (pts[i - 1], pts[i], pts[i + 1], pts[i + 2]);
            let r = (b - c).abs();
            if r <= (a - b).abs() && r <= (c - d).abs() {
                cycles.push(((b - c).abs() / 2.0, (b + c) / 2.0, 1.0));
                pts.drain(i..i + 2);
                continue 'scan;
            }
        }
        break;
    }
    for w in pts.windows(2) {
        cycles.push(((w[0] - w[1]).abs() / 2.0, (w[0] + w[1]) / 2.0, 0.5));
    }
    cycles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cycles
}

pub fn random_walk(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.random_range(2..=200);
    let integer = rng.random_bool(0.5);
    let mut x = 0.0;
    (0..len)
        .map(|_| {
            // Integer steps produce ties and plateaus.
            x += if integer {
                rng.random_range(-3i32..=3) as f64
            } else {
                rng.random_range(-1.0..1.0)
            };
            x
        })
        .collect()
}
