//! Mechanism files: keyword metadata lines, `z p` rows for `p_Z`, and
//! `z x p` rows for `P(X|Z)`. Floats are written in shortest round-trip form.
//!
//! ```text
//! version 0.1.0
//! epsilon 0.9
//! tolerance 1e-9
//! rule auto 0.9 1.0
//! predicted 0.405 0.405 0.0
//! gain 0 1.0
//! direction 0 0.5 -0.5 0.5 -0.5
//! direction 1 -0.5 0.5 -0.5 0.5
//! 0 0.5
//! 1 0.5
//! 0 0 0.475
//! ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use obfuskit_core::designer::{EpsilonRule, LocalMetrics};
use obfuskit_core::geometry::PerturbationDirection;
use obfuskit_core::{Kernel, ObfuscationMechanism, Pmf};

use crate::error::{CliError, CliResult};
use crate::format::exact;
use crate::instance::{parse_index, parse_probability, read_text};

pub const FORMAT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stored kernel rows may deviate from the rebuilt ones by at most this much.
const REBUILD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismFile {
    pub version: Option<String>,
    pub epsilon: Option<f64>,
    pub tolerance: Option<f64>,
    pub rule: Option<EpsilonRule>,
    pub predicted: Option<LocalMetrics>,
    pub gains: Vec<f64>,
    /// Indexed by release symbol; empty when the file carries none.
    pub directions: Vec<Vec<f64>>,
    pub p_z: Vec<f64>,
    /// `|X| x |Z|`.
    pub x_given_z: DMatrix<f64>,
}

impl MechanismFile {
    pub fn from_mechanism(mech: &ObfuscationMechanism) -> Self {
        MechanismFile {
            version: Some(FORMAT_VERSION.to_string()),
            epsilon: Some(mech.epsilon()),
            tolerance: Some(mech.tolerance()),
            rule: Some(mech.rule()),
            predicted: Some(mech.predicted()),
            gains: mech.gains().to_vec(),
            directions: mech.directions().iter().map(|d| d.k().to_vec()).collect(),
            p_z: mech.p_z().values().to_vec(),
            x_given_z: mech.x_given_z().matrix().clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# obfuskit mechanism\n");
        if let Some(v) = &self.version {
            let _ = writeln!(out, "version {v}");
        }
        if let Some(e) = self.epsilon {
            let _ = writeln!(out, "epsilon {}", exact(e));
        }
        if let Some(t) = self.tolerance {
            let _ = writeln!(out, "tolerance {}", exact(t));
        }
        match self.rule {
            Some(EpsilonRule::Fixed) => out.push_str("rule fixed\n"),
            Some(EpsilonRule::Auto { factor, bound }) => {
                let _ = writeln!(out, "rule auto {} {}", exact(factor), exact(bound));
            }
            Some(EpsilonRule::RateLimited { rate }) => {
                let _ = writeln!(out, "rule rate {}", exact(rate));
            }
            None => {}
        }
        if let Some(p) = self.predicted {
            let _ = writeln!(out, "predicted {} {} {}", exact(p.i_xz), exact(p.i_uz), exact(p.i_sz));
        }
        for (i, g) in self.gains.iter().enumerate() {
            let _ = writeln!(out, "gain {i} {}", exact(*g));
        }
        for (z, k) in self.directions.iter().enumerate() {
            let coords: Vec<String> = k.iter().map(|&v| exact(v)).collect();
            let _ = writeln!(out, "direction {z} {}", coords.join(" "));
        }
        out.push_str("# p_Z: z p\n");
        for (z, p) in self.p_z.iter().enumerate() {
            let _ = writeln!(out, "{z} {}", exact(*p));
        }
        out.push_str("# P(X|Z): z x p\n");
        for z in 0..self.x_given_z.ncols() {
            for x in 0..self.x_given_z.nrows() {
                let _ = writeln!(out, "{z} {x} {}", exact(self.x_given_z[(x, z)]));
            }
        }
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut file = MechanismFile {
            version: None,
            epsilon: None,
            tolerance: None,
            rule: None,
            predicted: None,
            gains: Vec::new(),
            directions: Vec::new(),
            p_z: Vec::new(),
            x_given_z: DMatrix::zeros(0, 0),
        };
        let mut gains = BTreeMap::new();
        let mut directions = BTreeMap::new();
        let mut p_z = BTreeMap::new();
        let mut cells = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = body.split_whitespace().collect();
            let number = |t: &str| parse_probability(t, line);
            match tokens[0] {
                "version" => file.version = Some(tokens[1..].join(" ")),
                "epsilon" => file.epsilon = Some(number(single(&tokens, line)?)?),
                "tolerance" => file.tolerance = Some(number(single(&tokens, line)?)?),
                "rule" => file.rule = Some(parse_rule(&tokens, line)?),
                "predicted" => {
                    if tokens.len() != 4 {
                        return Err(CliError::parse(line, "expected `predicted i_xz i_uz i_sz`"));
                    }
                    file.predicted = Some(LocalMetrics {
                        i_xz: number(tokens[1])?,
                        i_uz: number(tokens[2])?,
                        i_sz: number(tokens[3])?,
                    });
                }
                "gain" => {
                    if tokens.len() != 3 {
                        return Err(CliError::parse(line, "expected `gain i g`"));
                    }
                    insert_once(&mut gains, parse_index(tokens[1], line)?, number(tokens[2])?, line)?;
                }
                "direction" => {
                    if tokens.len() < 3 {
                        return Err(CliError::parse(line, "expected `direction z k...`"));
                    }
                    let k = tokens[2..].iter().map(|t| number(t)).collect::<CliResult<Vec<_>>>()?;
                    insert_once(&mut directions, parse_index(tokens[1], line)?, k, line)?;
                }
                _ => match tokens.len() {
                    2 => {
                        let z = parse_index(tokens[0], line)?;
                        insert_once(&mut p_z, z, number(tokens[1])?, line)?;
                    }
                    3 => {
                        let key = (parse_index(tokens[0], line)?, parse_index(tokens[1], line)?);
                        insert_once(&mut cells, key, number(tokens[2])?, line)?;
                    }
                    _ => return Err(CliError::parse(line, format!("unrecognized line `{body}`"))),
                },
            }
        }

        file.p_z = dense(p_z, "p_Z")?;
        file.gains = dense(gains, "gain")?;
        file.directions = dense(directions, "direction")?;
        let nz = file.p_z.len();
        if nz == 0 {
            return Err(CliError::parse(0, "no p_Z rows"));
        }
        let nx = cells.keys().map(|&(_, x)| x + 1).max().unwrap_or(0);
        if nx == 0 {
            return Err(CliError::parse(0, "no P(X|Z) rows"));
        }
        if let Some(&(z, _)) = cells.keys().find(|&&(z, _)| z >= nz) {
            return Err(CliError::parse(0, format!("kernel row for z = {z} without a p_Z row")));
        }
        file.x_given_z = DMatrix::zeros(nx, nz);
        for ((z, x), p) in cells {
            file.x_given_z[(x, z)] = p;
        }
        if !file.directions.is_empty() {
            if file.directions.len() != nz {
                return Err(CliError::parse(0, "need one direction per release symbol"));
            }
            if file.directions.iter().any(|k| k.len() != nx) {
                return Err(CliError::parse(0, "direction length differs from |X|"));
            }
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn p_z_pmf(&self) -> CliResult<Pmf> {
        Ok(Pmf::new(self.p_z.clone())?)
    }

    pub fn kernel(&self) -> CliResult<Kernel> {
        Ok(Kernel::new(self.x_given_z.clone())?)
    }

    /// `p_X` implied by the release: `sum_z p_Z(z) P(X|Z=z)`.
    pub fn implied_p_x(&self) -> CliResult<Pmf> {
        let mix = self.kernel()?.push(&self.p_z_pmf()?)?;
        Ok(Pmf::new(mix)?)
    }

    /// Rebuilds the full mechanism; requires epsilon and directions.
    pub fn to_mechanism(&self) -> CliResult<ObfuscationMechanism> {
        let epsilon = self
            .epsilon
            .ok_or_else(|| CliError::parse(0, "mechanism file lacks `epsilon`"))?;
        if self.directions.is_empty() {
            return Err(CliError::parse(0, "mechanism file lacks `direction` lines"));
        }
        let p_x = self.implied_p_x()?;
        let directions = self
            .directions
            .iter()
            .map(|k| PerturbationDirection::new(&p_x, k.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let mech = ObfuscationMechanism::from_parts(
            &p_x,
            self.p_z_pmf()?,
            epsilon,
            directions,
            self.gains.clone(),
            self.predicted.unwrap_or(LocalMetrics {
                i_xz: f64::NAN,
                i_uz: f64::NAN,
                i_sz: f64::NAN,
            }),
            self.rule.unwrap_or(EpsilonRule::Fixed),
            self.tolerance.unwrap_or(obfuskit_core::DEFAULT_TOLERANCE),
        )?;
        let drift = (mech.x_given_z().matrix() - &self.x_given_z).abs().max();
        if drift > REBUILD_TOLERANCE {
            return Err(CliError::parse(
                0,
                format!("kernel rows disagree with epsilon and directions by {drift:e}"),
            ));
        }
        Ok(mech)
    }
}

fn single<'a>(tokens: &[&'a str], line: usize) -> CliResult<&'a str> {
    match tokens {
        [_, v] => Ok(v),
        _ => Err(CliError::parse(line, format!("expected `{} value`", tokens[0]))),
    }
}

fn parse_rule(tokens: &[&str], line: usize) -> CliResult<EpsilonRule> {
    let number = |t: &str| parse_probability(t, line);
    match tokens[1..] {
        ["fixed"] => Ok(EpsilonRule::Fixed),
        ["auto", f, b] => Ok(EpsilonRule::Auto {
            factor: number(f)?,
            bound: number(b)?,
        }),
        ["rate", r] => Ok(EpsilonRule::RateLimited { rate: number(r)? }),
        _ => Err(CliError::parse(line, "expected `rule fixed|auto f b|rate r`")),
    }
}

fn insert_once<K: Ord + std::fmt::Debug, V>(
    map: &mut BTreeMap<K, V>,
    key: K,
    value: V,
    line: usize,
) -> CliResult<()> {
    if map.contains_key(&key) {
        return Err(CliError::parse(line, format!("duplicate entry {key:?}")));
    }
    map.insert(key, value);
    Ok(())
}

/// Turns `{0: a, 1: b, ...}` into a vector, rejecting gaps.
fn dense<V>(map: BTreeMap<usize, V>, what: &str) -> CliResult<Vec<V>> {
    let n = map.len();
    if map.keys().enumerate().any(|(i, &k)| i != k) {
        return Err(CliError::parse(0, format!("{what} indices must be 0..{n} without gaps")));
    }
    Ok(map.into_values().collect())
}
