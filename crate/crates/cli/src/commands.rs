use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use obfuskit_core::designer::{EpsilonRule, DEFAULT_TOLERANCE};
use obfuskit_core::dtm::{build_dtm, svd_modes};
use obfuskit_core::evaluator::{audit, normalized_grid, sweep_point, SweepRow};
use obfuskit_core::prob::validate_pmf;
use obfuskit_core::{
    compose_markov, design_mechanism, feasibility, mutual_information, optimal_directions,
    DesignOptions, EpsilonChoice, JointPair, JointUSX,
};

use crate::error::{CliError, CliResult, ExitCode};
use crate::format::{join_sig12, sig12, InfoUnit};
use crate::instance::InstanceFile;
use crate::mechanism::MechanismFile;

pub const SWEEP_HEADER: &str = "epsilon,I_XZ_exact,I_XZ_local,I_UZ_exact,I_UZ_local,I_SZ_exact,I_SZ_local,err_XZ_over_eps2,err_UZ_over_eps2";

#[derive(Debug, Parser)]
#[command(name = "obfuskit", version, about = "Perfect-obfuscation release design for small discrete models")]
pub struct Cli {
    /// Relative singular-value threshold for rank decisions
    #[arg(long, global = true, env = "OBFUSKIT_TOL", default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,

    /// Report information in bits instead of nats (CSV output stays in nats)
    #[arg(long, global = true)]
    pub bits: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance file and print its marginals
    Validate { instance: PathBuf },
    /// Decide whether a release can be independent of S yet informative about U
    Feasibility { instance: PathBuf },
    /// Design a release channel and audit it
    Design {
        instance: PathBuf,
        /// `auto` or a number
        #[arg(long, default_value = "auto")]
        epsilon: String,
        #[arg(long, default_value_t = 1)]
        modes: usize,
        /// Upper bound on I(X;Z) in nats (local form)
        #[arg(long)]
        rate: Option<f64>,
        /// Where to write the mechanism file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit fixed directions across a grid of epsilon values (CSV)
    Sweep {
        instance: PathBuf,
        /// Comma-separated epsilon values; empty for a header-only table
        #[arg(long, default_value = "1e-1,1e-2,1e-3")]
        eps_grid: String,
        #[arg(long, default_value_t = 1)]
        modes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Singular values and feature functions of a pairwise joint (CSV)
    Decompose {
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long)]
        mechanism: Option<PathBuf>,
        #[arg(long, value_enum, ignore_case = true)]
        pair: Pair,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pair {
    #[value(name = "UX")]
    Ux,
    #[value(name = "SX")]
    Sx,
    #[value(name = "XZ")]
    Xz,
    #[value(name = "UZ")]
    Uz,
    #[value(name = "SZ")]
    Sz,
}

impl Pair {
    fn name(self) -> &'static str {
        match self {
            Pair::Ux => "UX",
            Pair::Sx => "SX",
            Pair::Xz => "XZ",
            Pair::Uz => "UZ",
            Pair::Sz => "SZ",
        }
    }
}

/// Runs one subcommand. Reports go to `out`, warnings to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<ExitCode> {
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", cli.tol)));
    }
    let unit = if cli.bits { InfoUnit::Bits } else { InfoUnit::Nats };
    let mut report = String::new();
    let code = match &cli.command {
        Command::Validate { instance } => validate(instance, unit, &mut report)?,
        Command::Feasibility { instance } => feasibility_cmd(instance, cli.tol, &mut report)?,
        Command::Design {
            instance,
            epsilon,
            modes,
            rate,
            out: target,
        } => {
            let options = DesignOptions {
                epsilon: parse_epsilon(epsilon)?,
                modes: *modes,
                rate: *rate,
                tolerance: cli.tol,
            };
            design(instance, &options, target.as_deref(), unit, &mut report, err)?
        }
        Command::Sweep {
            instance,
            eps_grid,
            modes,
            out: target,
        } => sweep(instance, eps_grid, *modes, cli.tol, target.as_deref(), &mut report, err)?,
        Command::Decompose {
            instance,
            mechanism,
            pair,
            out: target,
        } => decompose(instance.as_deref(), mechanism.as_deref(), *pair, target.as_deref(), &mut report)?,
    };
    out.write_all(report.as_bytes()).map_err(stdout_error)?;
    Ok(code)
}

fn stdout_error(source: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_epsilon(text: &str) -> CliResult<EpsilonChoice> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(EpsilonChoice::Auto);
    }
    text.parse::<f64>()
        .map(EpsilonChoice::Fixed)
        .map_err(|_| CliError::Usage(format!("--epsilon expects `auto` or a number, got `{text}`")))
}

/// Parses `a,b,c`; blank input gives an empty grid.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("`{t}` in --eps-grid is not a number")))
        })
        .collect()
}

fn load_joint(path: &Path, report: &mut String) -> CliResult<JointUSX> {
    let file = InstanceFile::read(path)?;
    if let Some(n) = file.renormalization_notice() {
        let _ = writeln!(report, "{n}");
    }
    file.to_joint()
}

fn validate(path: &Path, unit: InfoUnit, report: &mut String) -> CliResult<ExitCode> {
    let file = InstanceFile::read(path)?;
    let (nu, ns, nx) = file.sizes;
    let _ = writeln!(report, "sizes: |U| = {nu}, |S| = {ns}, |X| = {nx}");
    if let Some(n) = file.renormalization_notice() {
        let _ = writeln!(report, "{n}");
    }
    let tensor = match validate_pmf(&file.tensor) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(report, "invalid: {e}");
            return Ok(ExitCode::Domain);
        }
    };
    let mut p_u = vec![0.0; nu];
    let mut p_s = vec![0.0; ns];
    let mut p_x = vec![0.0; nx];
    for u in 0..nu {
        for s in 0..ns {
            for x in 0..nx {
                let v = tensor[(u * ns + s) * nx + x];
                p_u[u] += v;
                p_s[s] += v;
                p_x[x] += v;
            }
        }
    }
    for (name, p) in [("p_U", &p_u), ("p_S", &p_s), ("p_X", &p_x)] {
        let interior = p.iter().all(|&v| v > 0.0);
        let _ = writeln!(report, "{name}: {}  interior: {}", join_sig12(p), yes_no(interior));
    }
    match file.to_joint() {
        Ok(joint) => {
            let _ = writeln!(report, "I(U;X) = {}", unit.show(mutual_information(&joint.joint_ux())));
            let _ = writeln!(report, "I(S;X) = {}", unit.show(mutual_information(&joint.joint_sx())));
            let _ = writeln!(report, "valid");
            Ok(ExitCode::Success)
        }
        Err(CliError::Domain(e)) => {
            let _ = writeln!(report, "invalid: {e}");
            Ok(ExitCode::Domain)
        }
        Err(e) => Err(e),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn feasibility_cmd(path: &Path, tol: f64, report: &mut String) -> CliResult<ExitCode> {
    let joint = load_joint(path, report)?;
    let r = feasibility(&joint, tol);
    let _ = writeln!(report, "tolerance: {}", sig12(r.tolerance_used));
    let _ = writeln!(report, "secret rank: {}", r.secret_rank);
    let _ = writeln!(report, "null_dim: {}", r.null_dim);
    let _ = writeln!(report, "utility singular values: {}", join_sig12(&r.utility_sigmas));
    let _ = writeln!(report, "top gain: {}", sig12(r.top_gain()));
    let _ = writeln!(report, "feasible: {}", yes_no(r.feasible));
    Ok(if r.feasible {
        ExitCode::Success
    } else {
        ExitCode::Infeasible
    })
}

fn design(
    path: &Path,
    options: &DesignOptions,
    target: Option<&Path>,
    unit: InfoUnit,
    report: &mut String,
    err: &mut dyn Write,
) -> CliResult<ExitCode> {
    let joint = load_joint(path, report)?;
    let mech = design_mechanism(&joint, options)?;
    let a = audit(&joint, &mech)?;

    let _ = writeln!(report, "modes: {}  |Z| = {}  (bound |X| + 2 = {})", mech.gains().len(), mech.release_size(), joint.p_x().len() + 2);
    let rule = match mech.rule() {
        EpsilonRule::Fixed => "fixed".to_string(),
        EpsilonRule::Auto { factor, bound } => format!("auto, {} x bound {}", sig12(factor), sig12(bound)),
        EpsilonRule::RateLimited { rate } => format!("limited by rate {}", sig12(rate)),
    };
    let _ = writeln!(report, "epsilon: {} ({rule})", sig12(mech.epsilon()));
    for (i, g) in mech.gains().iter().enumerate() {
        let _ = writeln!(report, "gain[{i}]: {}", sig12(*g));
    }
    let p = mech.predicted();
    let _ = writeln!(report, "{:<8}{:>28}{:>28}", "", "predicted (local)", "audited (exact)");
    for (name, pred, exact) in [
        ("I(X;Z)", p.i_xz, a.exact.xz),
        ("I(U;Z)", p.i_uz, a.exact.uz),
        ("I(S;Z)", p.i_sz, a.exact.sz),
    ] {
        let _ = writeln!(report, "{name:<8}{:>28}{:>28}", unit.show(pred), unit.show(exact));
    }
    let _ = writeln!(
        report,
        "constraints: C1 {}  C2 {}  ||B_SX k|| {}",
        sig12(mech.c1_violation()),
        sig12(mech.c2_violation()),
        sig12(mech.null_space_violation(&joint)?)
    );
    if mech.epsilon() == 0.0 {
        let _ = writeln!(err, "warning: epsilon is 0, so the release is constant and carries no information");
    }
    if let Some(t) = target {
        write_file(t, &MechanismFile::from_mechanism(&mech).render())?;
        let _ = writeln!(report, "mechanism written to {}", t.display());
    }
    Ok(ExitCode::Success)
}

fn sweep(
    path: &Path,
    grid_text: &str,
    modes: usize,
    tol: f64,
    target: Option<&Path>,
    report: &mut String,
    err: &mut dyn Write,
) -> CliResult<ExitCode> {
    let mut notes = String::new();
    let joint = load_joint(path, &mut notes)?;
    let grid = normalized_grid(&parse_grid(grid_text)?);
    let directions = optimal_directions(&joint, modes, tol)?;
    let mut csv = format!("{SWEEP_HEADER}\n");
    let mut code = ExitCode::Success;
    for &eps in &grid {
        match sweep_point(&joint, &directions, eps, tol) {
            Ok(row) => csv.push_str(&sweep_line(&row)),
            Err(e) => {
                // keep the grid point visible, leave its measurements blank
                let _ = writeln!(csv, "{}{}", sig12(eps), ",".repeat(8));
                let _ = writeln!(err, "epsilon {}: {e}", sig12(eps));
                code = ExitCode::Domain;
            }
        }
    }
    let _ = write!(err, "{notes}");
    match target {
        Some(t) => {
            write_file(t, &csv)?;
            let _ = writeln!(report, "{} rows written to {}", grid.len(), t.display());
        }
        None => report.push_str(&csv),
    }
    Ok(code)
}

pub fn sweep_line(row: &SweepRow) -> String {
    let fields = [
        row.epsilon,
        row.exact.xz,
        row.local.xz,
        row.exact.uz,
        row.local.uz,
        row.exact.sz,
        row.local.sz,
        row.ratios_to_eps2.xz,
        row.ratios_to_eps2.uz,
    ];
    let mut line = fields.iter().map(|&v| sig12(v)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn pair_joint(instance: Option<&Path>, mechanism: Option<&Path>, pair: Pair, report: &mut String) -> CliResult<JointPair> {
    let joint = instance.map(|p| load_joint(p, report)).transpose()?;
    let mech = mechanism.map(MechanismFile::read).transpose()?;
    let unavailable = |needs| CliError::PairUnavailable {
        pair: pair.name().to_string(),
        needs,
    };
    match pair {
        Pair::Ux | Pair::Sx => {
            let j = joint.ok_or_else(|| unavailable("--instance"))?;
            Ok(if pair == Pair::Ux { j.joint_ux() } else { j.joint_sx() })
        }
        Pair::Xz | Pair::Uz | Pair::Sz => {
            let m = mech.ok_or_else(|| unavailable("--mechanism"))?;
            let p_z = m.p_z_pmf()?;
            let kernel = m.kernel()?;
            match joint {
                Some(j) => {
                    let composed = compose_markov(&j, &p_z, &kernel)?;
                    Ok(match pair {
                        Pair::Xz => composed.xz,
                        Pair::Uz => composed.uz,
                        _ => composed.sz,
                    })
                }
                None if pair == Pair::Xz => {
                    let p_xz = DMatrix::from_fn(kernel.outputs(), p_z.len(), |x, z| kernel.matrix()[(x, z)] * p_z[z]);
                    Ok(JointPair::new(p_xz)?)
                }
                None => Err(unavailable("--instance together with --mechanism")),
            }
        }
    }
}

fn decompose(
    instance: Option<&Path>,
    mechanism: Option<&Path>,
    pair: Pair,
    target: Option<&Path>,
    report: &mut String,
) -> CliResult<ExitCode> {
    let mut notes = String::new();
    let joint = pair_joint(instance, mechanism, pair, &mut notes)?;
    let b = build_dtm(&joint)?;
    let modes = svd_modes(&b);
    let rebuilt = modes.reconstruct();
    let kept = DMatrix::from_fn(b.kept_rows().len(), b.kept_cols().len(), |i, j| {
        joint.matrix()[(b.kept_rows()[i], b.kept_cols()[j])]
    });
    let residual = (rebuilt - kept).abs().max();
    let top_check = (modes.sigmas()[0] - 1.0).abs();

    let mut csv = String::from("i,sigma,multiplicity");
    for r in b.kept_rows() {
        let _ = write!(csv, ",f_{r}");
    }
    for c in b.kept_cols() {
        let _ = write!(csv, ",g_{c}");
    }
    csv.push_str(",sigma1_deviation,reconstruction_residual\n");
    for i in 0..modes.len() {
        let mut fields = vec![(i + 1).to_string(), sig12(modes.sigmas()[i]), modes.multiplicity()[i].to_string()];
        fields.extend(modes.row_feature(i).into_iter().map(sig12));
        fields.extend(modes.col_feature(i).into_iter().map(sig12));
        fields.push(sig12(top_check));
        fields.push(sig12(residual));
        let _ = writeln!(csv, "{}", fields.join(","));
    }

    report.push_str(&notes);
    match target {
        Some(t) => {
            write_file(t, &csv)?;
            let _ = writeln!(
                report,
                "pair {}: {} modes, sigma_1 = {}, reconstruction residual {}; written to {}",
                pair.name(),
                modes.len(),
                sig12(modes.sigmas()[0]),
                sig12(residual),
                t.display()
            );
            if !b.dropped_rows().is_empty() || !b.dropped_cols().is_empty() {
                let _ = writeln!(report, "zero-mass symbols omitted: rows {:?}, columns {:?}", b.dropped_rows(), b.dropped_cols());
            }
        }
        None => report.push_str(&csv),
    }
    Ok(ExitCode::Success)
}
