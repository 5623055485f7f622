//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines appear in `cargo test` output.

use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};
use std::process::Command;

use obfuskit_core::designer::{
    design_mechanism, feasibility, DesignOptions, EpsilonChoice, ObfuscationMechanism, DEFAULT_TOLERANCE,
};
use obfuskit_core::dtm::{build_dtm, induced_feature, svd_modes};
use obfuskit_core::evaluator::{
    audit, brute_force_feasibility, columns_dependent, epsilon_sweep, random, with_utility_as_observation,
};
use obfuskit_core::geometry::{max_feasible_epsilon, perturb};
use obfuskit_core::instances::independent_bits;
use obfuskit_core::prob::{chi2_divergence, kl_divergence, compose_markov, mutual_information};
use obfuskit_core::JointUSX;
use obfuskit_cli::mechanism::MechanismFile;
use rand::Rng;

const SUITE_SEED: u64 = 0x5eed_0001;
const DTM_SEED: u64 = 0x5eed_0002;
const ORACLE_SEED: u64 = 0x5eed_0004;
const MODAL_SEED: u64 = 0x5eed_0006;
const KL_SEED: u64 = 0x5eed_0008;

/// Absolute error (nats) below which an approximation error is rounding residue.
const ROUNDING_FLOOR: f64 = 1e-30;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// 50 feasible Dirichlet(1) instances with |U|, |S| <= 3 and |X| <= 5.
fn feasible_suite() -> (Vec<JointUSX>, usize) {
    let mut rng = random::seeded(SUITE_SEED);
    let mut suite = Vec::new();
    let mut rejected = 0;
    while suite.len() < 50 {
        let nu = rng.random_range(2..=3);
        let ns = rng.random_range(1..=3);
        let nx = rng.random_range(2..=5);
        let joint = random::joint_usx(&mut rng, nu, ns, nx);
        if feasibility(&joint, DEFAULT_TOLERANCE).feasible {
            suite.push(joint);
        } else {
            rejected += 1;
        }
    }
    (suite, rejected)
}

fn auto_design(joint: &JointUSX) -> ObfuscationMechanism {
    design_mechanism(joint, &DesignOptions::default()).expect("feasible instance")
}

fn criterion_1(suite: &[JointUSX]) -> Outcome {
    let mut worst_sz = 0.0f64;
    let mut least_uz = f64::INFINITY;
    for joint in suite {
        let a = audit(joint, &auto_design(joint)).unwrap();
        worst_sz = worst_sz.max(a.exact.sz);
        least_uz = least_uz.min(a.exact.uz);
    }
    outcome(
        worst_sz <= 1e-10 && least_uz > 1e-6,
        format!("{} instances, max I(S;Z) = {worst_sz:.3e}, min I(U;Z) = {least_uz:.3e}", suite.len()),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = random::seeded(DTM_SEED);
    let mut worst_sigma = 0.0f64;
    let mut worst_vec = 0.0f64;
    for _ in 0..200 {
        let rows = rng.random_range(2..=8);
        let cols = rng.random_range(2..=8);
        let b = build_dtm(&random::joint_pair(&mut rng, rows, cols)).unwrap();
        worst_sigma = worst_sigma.max((b.spectral_norm() - 1.0).abs());
        worst_vec = worst_vec.max(b.right_vector_residual());
    }
    outcome(
        worst_sigma <= 1e-10 && worst_vec <= 1e-10,
        format!("200 joints, max |sigma_1 - 1| = {worst_sigma:.3e}, max ||B sqrt(p) - sqrt(p)|| = {worst_vec:.3e}"),
    )
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn criterion_3(suite: &[JointUSX]) -> Outcome {
    let grid = [1e-1, 1e-2, 1e-3];
    let mut broken = Vec::new();
    let mut exact_zero_sz = 0;
    let mut worst_rel = 0.0f64;
    let mut skipped = 0;
    for (i, joint) in suite.iter().enumerate() {
        let mech = auto_design(joint);
        if mech.epsilon() / 0.9 < grid[0] {
            skipped += 1;
            broken.push(format!("#{i} (bound {:.3e} < 1e-1)", mech.epsilon() / 0.9));
            continue;
        }
        let rows = epsilon_sweep(joint, 1, &grid, DEFAULT_TOLERANCE).unwrap();
        let xz: Vec<f64> = rows.iter().map(|r| r.ratios_to_eps2.xz).collect();
        let uz: Vec<f64> = rows.iter().map(|r| r.ratios_to_eps2.uz).collect();
        let sz: Vec<f64> = rows.iter().map(|r| r.ratios_to_eps2.sz).collect();
        // B_{S,X} k = 0, so the S-pair error vanishes identically; what is
        // left is rounding residue, which has no trend to test
        let at_floor = rows.iter().all(|r| r.ratios_to_eps2.sz * r.epsilon * r.epsilon <= ROUNDING_FLOOR);
        let sz_ok = strictly_decreasing(&sz) || at_floor;
        if at_floor {
            exact_zero_sz += 1;
        }
        if !(strictly_decreasing(&xz) && strictly_decreasing(&uz) && sz_ok) {
            broken.push(format!("#{i}"));
        }
        let last = &rows[2];
        let err_uz = last.ratios_to_eps2.uz * last.epsilon * last.epsilon;
        worst_rel = worst_rel.max(err_uz / last.local.uz);
    }
    outcome(
        broken.is_empty() && worst_rel <= 0.05,
        format!(
            "{} instances, non-monotone {:?}, I(S;Z) error at rounding floor on {exact_zero_sz}, \
             max relative I(U;Z) error at 1e-3 = {worst_rel:.3e}, skipped {skipped}",
            suite.len(),
            broken
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = random::seeded(ORACLE_SEED);
    let (mut compared, mut flagged, mut disagreements, mut feasible_count) = (0, 0, 0, 0);
    let mut instance = 0;
    while compared < 200 {
        let nu = rng.random_range(1..=3);
        let ns = rng.random_range(1..=4);
        let nx = rng.random_range(2..=6);
        let joint = if instance % 2 == 0 {
            random::joint_usx(&mut rng, nu, ns, nx)
        } else {
            random::structured_usx(&mut rng, nu, ns, nx)
        };
        instance += 1;
        let verdict = brute_force_feasibility(&joint).unwrap();
        if verdict.flagged {
            flagged += 1;
            continue;
        }
        compared += 1;
        let mine = feasibility(&joint, DEFAULT_TOLERANCE).feasible;
        feasible_count += usize::from(mine);
        if mine != verdict.feasible {
            disagreements += 1;
        }
    }

    let mut weak_mismatch = 0;
    let mut dependent = 0;
    for i in 0..50 {
        let ns = rng.random_range(1..=4);
        let nx = rng.random_range(2..=6);
        let joint = if i % 2 == 0 {
            random::joint_usx(&mut rng, 2, ns, nx)
        } else {
            random::structured_usx(&mut rng, 2, ns, nx)
        };
        let lifted = with_utility_as_observation(&joint);
        let weak = columns_dependent(joint.w_s(), DEFAULT_TOLERANCE);
        dependent += usize::from(weak);
        if feasibility(&lifted, DEFAULT_TOLERANCE).feasible != weak {
            weak_mismatch += 1;
        }
    }
    outcome(
        disagreements == 0 && weak_mismatch == 0,
        format!(
            "{compared} compared ({feasible_count} feasible), {flagged} flagged and excluded, {disagreements} disagreements; \
             U := X: {weak_mismatch} mismatches on 50 ({dependent} with dependent columns)"
        ),
    )
}

/// Enumerates `p(u, s, x, z) = p(u, s, x) P(z | x)` and evaluates both
/// informations from their definitions.
fn enumerated_informations(joint: &JointUSX, mech: &ObfuscationMechanism) -> (f64, f64) {
    let (nu, ns, nx) = joint.sizes();
    let nz = mech.release_size();
    let release = mech.z_given_x().matrix();
    let mut p_uz = vec![vec![0.0; nz]; nu];
    let mut p_sz = vec![vec![0.0; nz]; ns];
    for u in 0..nu {
        for s in 0..ns {
            for x in 0..nx {
                for z in 0..nz {
                    let p = joint.get(u, s, x) * release[(z, x)];
                    p_uz[u][z] += p;
                    p_sz[s][z] += p;
                }
            }
        }
    }
    (definition_mi(&p_uz), definition_mi(&p_sz))
}

fn definition_mi(p: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..p[0].len()).map(|j| p.iter().map(|r| r[j]).sum()).collect();
    let mut total = 0.0;
    for (i, r) in p.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            if v > 0.0 {
                total += v * (v / (rows[i] * cols[j])).ln();
            }
        }
    }
    total
}

fn criterion_5() -> Outcome {
    let joint = independent_bits();
    let report = feasibility(&joint, DEFAULT_TOLERANCE);
    let gain_err = (report.top_gain() - 1.0).abs();
    let options = DesignOptions {
        epsilon: EpsilonChoice::Fixed(1.0),
        ..Default::default()
    };
    let mech = design_mechanism(&joint, &options).unwrap();
    let a = audit(&joint, &mech).unwrap();
    let (oracle_uz, oracle_sz) = enumerated_informations(&joint, &mech);
    let pass = report.null_dim == 2
        && gain_err <= 1e-10
        && (a.exact.uz - LN_2).abs() <= 1e-10
        && a.exact.sz <= 1e-12
        && (oracle_uz - LN_2).abs() <= 1e-10
        && oracle_sz.abs() <= 1e-12;
    outcome(
        pass,
        format!(
            "null_dim = {}, |gain - 1| = {gain_err:.3e}, I(U;Z) = {:.15} (enumerated {oracle_uz:.15}), \
             I(S;Z) = {:.3e} (enumerated {oracle_sz:.3e})",
            report.null_dim, a.exact.uz, a.exact.sz
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = random::seeded(MODAL_SEED);
    let mut worst_rebuild = 0.0f64;
    let mut worst_feature = 0.0f64;
    for _ in 0..100 {
        let rows = rng.random_range(2..=8);
        let cols = rng.random_range(2..=8);
        let joint = random::joint_pair(&mut rng, rows, cols);
        let b = build_dtm(&joint).unwrap();
        let rebuilt = svd_modes(&b).reconstruct();
        worst_rebuild = worst_rebuild.max((rebuilt - joint.matrix()).abs().max());

        let f: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = induced_feature(&b, &f).unwrap();
        for (z, gz) in g.iter().enumerate() {
            let pz = joint.p_col()[z];
            let brute: f64 = (0..rows).map(|x| joint.matrix()[(x, z)] / pz * f[x]).sum();
            worst_feature = worst_feature.max((gz - brute).abs());
        }
    }
    outcome(
        worst_rebuild <= 1e-10 && worst_feature <= 1e-12,
        format!("100 joints, max reconstruction error = {worst_rebuild:.3e}, max induced-feature error = {worst_feature:.3e}"),
    )
}

fn criterion_7(suite: &[JointUSX]) -> Outcome {
    let mut emitted = 0;
    let (mut worst_c1, mut worst_c2, mut worst_ratio) = (0.0f64, 0.0f64, 0.0f64);
    let mut cardinality_ok = true;
    for joint in suite {
        let nx = joint.p_x().len();
        let d = feasibility(joint, DEFAULT_TOLERANCE).null_dim;
        let mut check = |mech: &ObfuscationMechanism| {
            emitted += 1;
            cardinality_ok &= mech.release_size() <= nx + 2;
            worst_c1 = worst_c1.max(mech.c1_violation());
            worst_c2 = worst_c2.max(mech.c2_violation());
            let eps = mech.epsilon();
            if eps > 0.0 && eps <= 1e-2 {
                let exact = audit(joint, mech).unwrap().exact.xz;
                worst_ratio = worst_ratio.max(exact / (eps * eps));
            }
        };
        check(&auto_design(joint));
        for modes in (1..=d).filter(|m| 2 * m <= nx + 2) {
            for eps in [1e-2, 1e-3] {
                let options = DesignOptions {
                    epsilon: EpsilonChoice::Fixed(eps),
                    modes,
                    ..Default::default()
                };
                if let Ok(m) = design_mechanism(joint, &options) {
                    check(&m);
                }
            }
        }
    }
    outcome(
        cardinality_ok && worst_c1 <= 1e-10 && worst_c2 <= 1e-10 && worst_ratio <= 0.55,
        format!(
            "{emitted} mechanisms, |Z| <= |X| + 2: {cardinality_ok}, max C1 = {worst_c1:.3e}, max C2 = {worst_c2:.3e}, \
             max I(X;Z)/eps^2 (eps <= 1e-2) = {worst_ratio:.6}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let eps = 1e-3;
    let mut rng = random::seeded(KL_SEED);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut worst_vs_third_order = 0.0f64;
    let mut worst_small = 0.0f64;
    for i in 0..100 {
        let n = rng.random_range(2..=8);
        let p = random::pmf(&mut rng, n);
        let k = loop {
            let k = random::direction(&mut rng, &p);
            if max_feasible_epsilon(&p, &k) > eps {
                break k;
            }
        };
        let r = perturb(&p, &k, eps).unwrap();
        let gap = (kl_divergence(&p, &r).unwrap() - 0.5 * chi2_divergence(&p, &r).unwrap()).abs() / (eps * eps);
        let norm2 = k.norm().powi(2);
        worst = worst.max(gap / norm2);
        // leading remainder of KL(p||r) - chi2/2 is -(eps/3) sum k^3 / sqrt(p)
        let third: f64 = k.k().iter().zip(p.values()).map(|(kx, px)| kx.powi(3) / px.sqrt()).sum();
        let predicted = (eps / 3.0 * third).abs();
        if gap > 1e-3 * norm2 {
            worst_vs_third_order = worst_vs_third_order.max((gap - predicted).abs() / gap);
            let small = 1e-5;
            let r_small = perturb(&p, &k, small).unwrap();
            let gap_small = (kl_divergence(&p, &r_small).unwrap() - 0.5 * chi2_divergence(&p, &r_small).unwrap()).abs()
                / (small * small);
            worst_small = worst_small.max(gap_small / norm2);
            failures.push(format!("#{i} (n = {n}, p_min = {:.2e}, gap = {gap:.2e})", p.values().iter().cloned().fold(1.0, f64::min)));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "100 triples, max gap/||k||^2 = {worst:.3e}, {} above 1e-3; on those the gap is the cubic term \
             (eps/3)|sum k^3/sqrt(p)| to relative {worst_vs_third_order:.1e} and drops to {worst_small:.1e} at eps = 1e-5; failing: {}",
            failures.len(),
            if failures.is_empty() { "none".to_string() } else { failures.join(", ") }
        ),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_obfuskit")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Captures stdout and every file the run writes.
fn run_capture(args: &[String], outputs: &[PathBuf]) -> (i32, Vec<u8>, Vec<Vec<u8>>) {
    let out = Command::new(bin()).args(args).env_remove("OBFUSKIT_TOL").output().expect("binary runs");
    let files = outputs.iter().map(|p| std::fs::read(p).unwrap_or_default()).collect();
    (out.status.code().unwrap_or(-1), out.stdout, files)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let instances = ["independent_bits.txt", "noisy_bits.txt", "random_2x2x5.txt", "symmetric_pair.txt", "secret_is_observation.txt"];
    let mut runs = 0;
    let mut mismatched = Vec::new();
    let mut worst_round_trip = 0.0f64;
    for name in instances {
        let inst = data(name).display().to_string();
        let mech = dir.path().join(format!("{name}.mech"));
        let csv = dir.path().join(format!("{name}.csv"));
        let modes = dir.path().join(format!("{name}.modes.csv"));
        let commands: Vec<(Vec<String>, Vec<PathBuf>)> = vec![
            (vec!["validate".into(), inst.clone()], vec![]),
            (vec!["feasibility".into(), inst.clone()], vec![]),
            (vec!["design".into(), inst.clone(), "--out".into(), mech.display().to_string()], vec![mech.clone()]),
            (vec!["sweep".into(), inst.clone(), "--out".into(), csv.display().to_string()], vec![csv.clone()]),
            (
                vec!["decompose".into(), "--instance".into(), inst.clone(), "--pair".into(), "UX".into(), "--out".into(), modes.display().to_string()],
                vec![modes.clone()],
            ),
            (
                vec!["decompose".into(), "--instance".into(), inst.clone(), "--mechanism".into(), mech.display().to_string(), "--pair".into(), "UZ".into()],
                vec![],
            ),
        ];
        for (args, outputs) in &commands {
            let first = run_capture(args, outputs);
            let second = run_capture(args, outputs);
            runs += 1;
            if first != second {
                mismatched.push(format!("{name}: {}", args[0]));
            }
        }
        if let Ok(file) = MechanismFile::read(&mech) {
            let joint = obfuskit_cli::instance::InstanceFile::read(&data(name)).unwrap().to_joint().unwrap();
            let original = auto_design(&joint);
            let restored = file.to_mechanism().unwrap();
            let kernel_drift = (restored.x_given_z().matrix() - original.x_given_z().matrix()).abs().max();
            let a = audit(&joint, &original).unwrap();
            let b = audit(&joint, &restored).unwrap();
            let metric_drift = a
                .exact
                .to_array()
                .iter()
                .zip(b.exact.to_array())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            worst_round_trip = worst_round_trip.max(kernel_drift).max(metric_drift);
        }
    }
    outcome(
        mismatched.is_empty() && worst_round_trip <= 1e-12,
        format!("{runs} commands run twice, differing: {mismatched:?}; max mechanism round-trip drift = {worst_round_trip:.3e}"),
    )
}

fn main() {
    let (suite, rejected) = feasible_suite();
    println!("acceptance: seeds suite={SUITE_SEED:#x} dtm={DTM_SEED:#x} oracle={ORACLE_SEED:#x} modal={MODAL_SEED:#x} kl={KL_SEED:#x}");
    println!("acceptance: feasible suite drawn with {rejected} infeasible rejections");
    // sanity link between the two exact routes on the suite
    for joint in &suite {
        let mech = auto_design(joint);
        let composed = compose_markov(joint, mech.p_z(), mech.x_given_z()).unwrap();
        let (uz, _) = enumerated_informations(joint, &mech);
        assert!((mutual_information(&composed.uz) - uz).abs() < 1e-12);
    }

    let results = [
        criterion_1(&suite),
        criterion_2(),
        criterion_3(&suite),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(&suite),
        criterion_8(),
        criterion_9(),
    ];
    let mut failed = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag}  {}", i + 1, r.detail);
        if !r.pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
