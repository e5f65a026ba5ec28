//! One-dimensional quadrature on unbounded ranges.

/// `∫_{-∞}^{∞} f(x) dx` through `x = c + s·t/(1 − t²)` and tanh-sinh on `(−1, 1)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, center: f64, scale: f64, tol: f64) -> f64 {
    quadrature::integrate(
        |t| {
            let u = 1.0 - t * t;
            if u <= 0.0 {
                return 0.0;
            }
            let x = center + scale * t / u;
            let v = f(x) * scale * (1.0 + t * t) / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        tol,
    )
    .integral
}

/// `∫_a^∞ f(x) dx` through `x = a + s·t/(1 − t)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, tol: f64) -> f64 {
    quadrature::integrate(
        |t| {
            let u = 1.0 - t;
            if u <= 0.0 {
                return 0.0;
            }
            let v = f(a + scale * t / u) * scale / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
    .integral
}
