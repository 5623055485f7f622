//! Number formatting shared by reports and CSV files.

use std::f64::consts::LN_2;

/// Twelve significant digits in scientific notation; `-0` prints as `0`.
pub fn sig12(v: f64) -> String {
    if v == 0.0 {
        return format!("{:.11e}", 0.0);
    }
    format!("{v:.11e}")
}

/// Shortest representation that parses back to the same `f64`.
pub fn exact(v: f64) -> String {
    if v == 0.0 {
        return "0.0".to_string();
    }
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoUnit {
    Nats,
    Bits,
}

impl InfoUnit {
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            InfoUnit::Nats => nats,
            InfoUnit::Bits => nats / LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InfoUnit::Nats => "nats",
            InfoUnit::Bits => "bits",
        }
    }

    pub fn show(self, nats: f64) -> String {
        format!("{} {}", sig12(self.convert(nats)), self.label())
    }
}

pub fn join_sig12(values: &[f64]) -> String {
    values.iter().map(|&v| sig12(v)).collect::<Vec<_>>().join(" ")
}
