use std::fmt;

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub oracle: f64,
    pub artifact: f64,
    pub se: f64,
    pub z: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl OracleReport {
    /// `se` combines the uncertainty of both sides; a zero `se` gives `z = ±∞`
    /// unless the values coincide.
    pub fn new(name: impl Into<String>, oracle: f64, artifact: f64, se: f64, threshold: f64) -> Self {
        let diff = artifact - oracle;
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        Self {
            name: name.into(),
            oracle,
            artifact,
            se,
            z,
            threshold,
            pass: z.abs() <= threshold,
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: oracle={:.6e} artifact={:.6e} se={:.2e} z={:+.2} (|z|<={})",
            if self.pass { "ok  " } else { "FAIL" },
            self.name,
            self.oracle,
            self.artifact,
            self.se,
            self.z,
            self.threshold
        )
    }
}
