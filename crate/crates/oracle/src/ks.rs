//! Kolmogorov-Smirnov tests.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// Asymptotic critical coefficient `c(α) = √(−ln(α/2)/2)`.
pub fn coefficient(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// Kolmogorov distribution tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

pub fn two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsResult {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let critical = coefficient(alpha) / en;
    KsResult {
        statistic: d,
        critical,
        p_value: kolmogorov_tail((en + 0.12 + 0.11 / en) * d),
        pass: d <= critical,
    }
}

pub fn one_sample<F: Fn(f64) -> f64>(a: &[f64], cdf: F, alpha: f64) -> KsResult {
    let a = sorted(a);
    let n = a.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in a.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let en = n.sqrt();
    let critical = coefficient(alpha) / en;
    KsResult {
        statistic: d,
        critical,
        p_value: kolmogorov_tail((en + 0.12 + 0.11 / en) * d),
        pass: d <= critical,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_value_at_one_percent() {
        assert!((coefficient(0.01) - 1.6276).abs() < 1e-4);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn shifted_samples_fail() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        assert!(!two_sample(&a, &b, 0.01).pass);
        assert!(two_sample(&a, &a, 0.01).pass);
        assert!(one_sample(&a, |x| x.clamp(0.0, 1.0), 0.01).pass);
    }
}
