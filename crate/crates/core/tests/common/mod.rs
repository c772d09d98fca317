//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

/// Coefficient of determination from the textbook single-pass sums.
pub fn r_squared_oracle(y: &[f64], f: &[f64]) -> f64 {
    let n = y.len() as f64;
    let (mut sy, mut syy, mut sres) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(f) {
        sy += a;
        syy += a * a;
        sres += (a - b) * (a - b);
    }
    let ss_tot = syy - sy * sy / n;
    1.0 - sres / ss_tot
}

/// Explicit double sum over the segment that contains each step.
pub fn gae_oracle(
    r: &[f64],
    v: &[f64],
    terminal: &[bool],
    ends: &[bool],
    next_v: &[f64],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let e = (t..n).find(|&k| ends[k] || k + 1 == n).unwrap();
            (t..=e)
                .map(|k| {
                    let nv = if terminal[k] {
                        0.0
                    } else if k == e {
                        next_v[k]
                    } else {
                        v[k + 1]
                    };
                    (gamma * lambda).powi((k - t) as i32) * (r[k] + gamma * nv - v[k])
                })
                .sum()
        })
        .collect()
}
