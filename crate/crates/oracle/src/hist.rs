//! Histogram density estimates.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
    pub se: f64,
}

impl Bin {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Density per bin with binomial standard errors; values outside the edges count toward `n`.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<Bin> {
    let n = values.len() as f64;
    let mut counts = vec![0usize; edges.len().saturating_sub(1)];
    for &v in values {
        if v < edges[0] || v >= edges[edges.len() - 1] {
            continue;
        }
        let k = edges.partition_point(|&e| e <= v) - 1;
        counts[k] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (lo, hi) = (edges[k], edges[k + 1]);
            let w = hi - lo;
            let p = c as f64 / n;
            Bin { lo, hi, density: p / w, se: (p * (1.0 - p) / n).sqrt() / w }
        })
        .collect()
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}
