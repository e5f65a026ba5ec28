use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Degrees of freedom of the t generator; `Infinite` selects the normal generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dof {
    Finite(f64),
    Infinite,
}

impl Dof {
    pub fn new(nu: f64) -> Self {
        if nu.is_infinite() && nu > 0.0 {
            Dof::Infinite
        } else {
            Dof::Finite(nu)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Dof::Finite(_))
    }

    pub fn value(self) -> f64 {
        match self {
            Dof::Finite(v) => v,
            Dof::Infinite => f64::INFINITY,
        }
    }

    pub fn is_valid(self) -> bool {
        match self {
            Dof::Finite(v) => v.is_finite() && v > 0.0,
            Dof::Infinite => true,
        }
    }

    /// `ν + k`, staying infinite.
    pub fn plus(self, k: f64) -> Self {
        match self {
            Dof::Finite(v) => Dof::Finite(v + k),
            Dof::Infinite => Dof::Infinite,
        }
    }

    /// `ν - k`, staying infinite.
    pub fn minus(self, k: f64) -> Self {
        self.plus(-k)
    }

    /// True when moments of order `k` exist (`ν > k`).
    pub fn exceeds(self, k: f64) -> bool {
        match self {
            Dof::Finite(v) => v > k,
            Dof::Infinite => true,
        }
    }
}

impl fmt::Display for Dof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dof::Finite(v) => write!(f, "{v}"),
            Dof::Infinite => write!(f, "inf"),
        }
    }
}

impl From<f64> for Dof {
    fn from(v: f64) -> Self {
        Dof::new(v)
    }
}

impl Serialize for Dof {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Dof::Finite(v) => s.serialize_f64(*v),
            Dof::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Dof {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Dof;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive number or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Dof, E> {
                Ok(Dof::new(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Dof, E> {
                Ok(Dof::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Dof, E> {
                Ok(Dof::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Dof, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "+inf" => Ok(Dof::Infinite),
                    other => other
                        .parse::<f64>()
                        .map(Dof::new)
                        .map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let inf: Dof = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(inf, Dof::Infinite);
        let five: Dof = serde_json::from_str("5").unwrap();
        assert_eq!(five, Dof::Finite(5.0));
        assert_eq!(serde_json::to_string(&Dof::Infinite).unwrap(), "\"inf\"");
        assert!(serde_json::from_str::<Dof>("\"abc\"").is_err());
    }

    #[test]
    fn arithmetic_keeps_infinity() {
        assert_eq!(Dof::Infinite.plus(3.0), Dof::Infinite);
        assert_eq!(Dof::Finite(5.0).minus(2.0), Dof::Finite(3.0));
        assert!(!Dof::Finite(4.0).exceeds(4.0));
        assert!(Dof::Infinite.exceeds(100.0));
    }
}
