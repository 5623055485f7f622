//! Instance files: a `sizes nu ns nx` header and `u s x p` rows.
//!
//! ```text
//! # independent bits
//! sizes 2 2 4
//! 0 0 0 0.25
//! 1 0 1 0.25
//! ```
//!
//! Triples that are not listed carry zero mass.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use obfuskit_core::prob::MASS_TOLERANCE;
use obfuskit_core::JointUSX;

use crate::error::{CliError, CliResult};
use crate::format::exact;

/// Total mass further than this from one triggers a renormalization notice.
const NOTICE_THRESHOLD: f64 = 1e-12;

/// A parsed tensor before any probabilistic validation.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub sizes: (usize, usize, usize),
    /// `[u][s][x]`, x fastest.
    pub tensor: Vec<f64>,
}

impl InstanceFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut sizes = None;
        let mut tensor = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if tokens[0] == "sizes" {
                if sizes.is_some() {
                    return Err(CliError::parse(line, "sizes declared twice"));
                }
                if tokens.len() != 4 {
                    return Err(CliError::parse(line, "expected `sizes nu ns nx`"));
                }
                let dims: Vec<usize> = tokens[1..]
                    .iter()
                    .map(|t| parse_index(t, line))
                    .collect::<CliResult<_>>()?;
                if dims.contains(&0) {
                    return Err(CliError::parse(line, "alphabet sizes must be positive"));
                }
                sizes = Some((dims[0], dims[1], dims[2]));
                tensor = vec![0.0; dims[0] * dims[1] * dims[2]];
                continue;
            }
            let (nu, ns, nx) = sizes.ok_or_else(|| CliError::parse(line, "row before `sizes` line"))?;
            if tokens.len() != 4 {
                return Err(CliError::parse(line, "expected `u s x p`"));
            }
            let u = parse_index(tokens[0], line)?;
            let s = parse_index(tokens[1], line)?;
            let x = parse_index(tokens[2], line)?;
            if u >= nu || s >= ns || x >= nx {
                return Err(CliError::parse(line, format!("triple ({u}, {s}, {x}) out of range")));
            }
            if !seen.insert((u, s, x)) {
                return Err(CliError::parse(line, format!("duplicate triple ({u}, {s}, {x})")));
            }
            tensor[(u * ns + s) * nx + x] = parse_probability(tokens[3], line)?;
        }
        let sizes = sizes.ok_or_else(|| CliError::parse(0, "missing `sizes` line"))?;
        Ok(InstanceFile { sizes, tensor })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn total_mass(&self) -> f64 {
        self.tensor.iter().sum()
    }

    /// A report line when the mass is off by a tolerated amount.
    pub fn renormalization_notice(&self) -> Option<String> {
        let total = self.total_mass();
        let off = (total - 1.0).abs();
        (off > NOTICE_THRESHOLD && off <= MASS_TOLERANCE)
            .then(|| format!("notice: total mass {total:.15} renormalized to 1"))
    }

    pub fn to_joint(&self) -> CliResult<JointUSX> {
        let (nu, ns, nx) = self.sizes;
        Ok(JointUSX::new(nu, ns, nx, self.tensor.clone())?)
    }

    pub fn from_joint(joint: &JointUSX) -> Self {
        InstanceFile {
            sizes: joint.sizes(),
            tensor: joint.tensor().to_vec(),
        }
    }

    /// Non-zero cells only, full precision.
    pub fn render(&self, comment: Option<&str>) -> String {
        let (nu, ns, nx) = self.sizes;
        let mut out = String::new();
        if let Some(c) = comment {
            for l in c.lines() {
                let _ = writeln!(out, "# {l}");
            }
        }
        let _ = writeln!(out, "sizes {nu} {ns} {nx}");
        for u in 0..nu {
            for s in 0..ns {
                for x in 0..nx {
                    let p = self.tensor[(u * ns + s) * nx + x];
                    if p != 0.0 {
                        let _ = writeln!(out, "{u} {s} {x} {}", exact(p));
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn parse_index(token: &str, line: usize) -> CliResult<usize> {
    token
        .parse()
        .map_err(|_| CliError::parse(line, format!("`{token}` is not a non-negative integer")))
}

pub(crate) fn parse_probability(token: &str, line: usize) -> CliResult<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::parse(line, format!("`{token}` is not a finite decimal"))),
    }
}
