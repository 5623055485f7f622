//! Browser bindings for the two-bit family in `obfuskit_core::instances::noisy_bits`.
//!
//! Every export takes the family parameters and returns a JSON string; errors
//! come back as `{"error": "..."}` so the page never has to catch.

use obfuskit_core::instances::noisy_bits;
use obfuskit_core::{
    audit, build_dtm, design_mechanism, epsilon_sweep, feasibility, svd_modes, DesignOptions,
    EpsilonChoice, JointUSX, DEFAULT_TOLERANCE,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct DesignView {
    pub feasible: bool,
    pub null_dim: usize,
    pub epsilon: f64,
    pub p_x: Vec<f64>,
    /// Row `z` holds `P(X = x | Z = z)`.
    pub x_given_z: Vec<Vec<f64>>,
    /// `[I(X;Z), I(U;Z), I(S;Z)]` in nats.
    pub exact: [f64; 3],
    pub local: [f64; 3],
}

#[derive(Debug, Serialize)]
pub struct SweepView {
    pub epsilon: Vec<f64>,
    pub exact_uz: Vec<f64>,
    pub local_uz: Vec<f64>,
    pub exact_sz: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ModesView {
    pub ux: Vec<f64>,
    pub sx: Vec<f64>,
}

fn instance(correlation: f64, flip_s: f64, flip_u: f64) -> Result<JointUSX, String> {
    let ok = (-1.0..=1.0).contains(&correlation)
        && (0.0..=1.0).contains(&flip_s)
        && (0.0..=1.0).contains(&flip_u);
    if !ok {
        return Err("correlation must lie in [-1, 1] and flips in [0, 1]".into());
    }
    Ok(noisy_bits(correlation, flip_s, flip_u))
}

/// Designs a one-mode mechanism; `epsilon <= 0` picks it automatically.
pub fn design_view(correlation: f64, flip_s: f64, flip_u: f64, epsilon: f64) -> Result<DesignView, String> {
    let joint = instance(correlation, flip_s, flip_u)?;
    let report = feasibility(&joint, DEFAULT_TOLERANCE);
    let options = DesignOptions {
        epsilon: if epsilon > 0.0 { EpsilonChoice::Fixed(epsilon) } else { EpsilonChoice::Auto },
        ..DesignOptions::default()
    };
    let mech = design_mechanism(&joint, &options).map_err(|e| e.to_string())?;
    let result = audit(&joint, &mech).map_err(|e| e.to_string())?;
    let m = mech.x_given_z().matrix();
    Ok(DesignView {
        feasible: report.feasible,
        null_dim: report.null_dim,
        epsilon: mech.epsilon(),
        p_x: joint.p_x().values().to_vec(),
        x_given_z: (0..m.ncols()).map(|z| m.column(z).iter().copied().collect()).collect(),
        exact: result.exact.to_array(),
        local: result.local.to_array(),
    })
}

/// Log-spaced sweep from the automatic epsilon down three decades.
pub fn sweep_view(correlation: f64, flip_s: f64, flip_u: f64, points: usize) -> Result<SweepView, String> {
    let joint = instance(correlation, flip_s, flip_u)?;
    let top = design_view(correlation, flip_s, flip_u, 0.0)?.epsilon;
    let points = points.clamp(2, 200);
    let grid: Vec<f64> = (0..points)
        .map(|i| top * 10f64.powf(-3.0 * i as f64 / (points - 1) as f64))
        .collect();
    let rows = epsilon_sweep(&joint, 1, &grid, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
    Ok(SweepView {
        epsilon: rows.iter().map(|r| r.epsilon).collect(),
        exact_uz: rows.iter().map(|r| r.exact.uz).collect(),
        local_uz: rows.iter().map(|r| r.local.uz).collect(),
        exact_sz: rows.iter().map(|r| r.exact.sz).collect(),
    })
}

/// Singular values of the utility and secret transfer matrices.
pub fn modes_view(correlation: f64, flip_s: f64, flip_u: f64) -> Result<ModesView, String> {
    let joint = instance(correlation, flip_s, flip_u)?;
    let sigmas = |pair| -> Result<Vec<f64>, String> {
        let b = build_dtm(&pair).map_err(|e| e.to_string())?;
        Ok(svd_modes(&b).sigmas().to_vec())
    };
    Ok(ModesView {
        ux: sigmas(joint.joint_ux())?,
        sx: sigmas(joint.joint_sx())?,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

#[wasm_bindgen]
pub fn design(correlation: f64, flip_s: f64, flip_u: f64, epsilon: f64) -> String {
    to_json(design_view(correlation, flip_s, flip_u, epsilon))
}

#[wasm_bindgen]
pub fn sweep(correlation: f64, flip_s: f64, flip_u: f64, points: usize) -> String {
    to_json(sweep_view(correlation, flip_s, flip_u, points))
}

#[wasm_bindgen]
pub fn modes(correlation: f64, flip_s: f64, flip_u: f64) -> String {
    to_json(modes_view(correlation, flip_s, flip_u))
}
