//! zCDP accounting for tree-aggregated DP-FTRL and conversion to
//! (ε, δ)-DP.
//!
//! A client that takes part `k` times touches at most `h = ⌈log₂T⌉ + 1`
//! tree nodes per participation, each noised with std `z` relative to its
//! sensitivity, so the run is `ρ = k·h / (2z²)`-zCDP. The conversion is
//! `ε = ρ + 2·sqrt(ρ·ln(1/δ))`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;
use thiserror::Error;

pub const DEFAULT_DELTA: f64 = 1e-10;
pub const METHOD: &str = "zCDP, tree aggregation with k*h node sensitivity, standard zCDP to (eps, delta) conversion";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrivacyError {
    #[error("infeasible privacy spec: {0}")]
    Infeasible(String),
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("invalid privacy spec: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, PrivacyError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySpec {
    pub total_rounds: u64,
    pub max_participations: u64,
    pub min_separation: u64,
    pub noise_multiplier: f64,
    #[serde(default = "default_delta")]
    pub target_delta: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<PrivacySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_height: Option<u32>,
    pub rho: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub method: String,
}

/// `⌈log₂ T⌉ + 1`, the number of tree levels a round can touch.
pub fn tree_height(total_rounds: u64) -> u32 {
    let ceil_log2 = if total_rounds <= 1 {
        0
    } else {
        64 - (total_rounds - 1).leading_zeros()
    };
    ceil_log2 + 1
}

/// Most participations min-separation allows in `T` rounds: `⌈T/s⌉`.
pub fn participation_bound(total_rounds: u64, min_separation: u64) -> u64 {
    total_rounds.div_ceil(min_separation.max(1))
}

/// Checks `k ≤ ⌈T/s⌉` and the basic ranges.
pub fn feasibility(spec: &PrivacySpec) -> Result<()> {
    if spec.total_rounds == 0 {
        return Err(PrivacyError::Invalid("total_rounds must be positive".into()));
    }
    if spec.min_separation == 0 {
        return Err(PrivacyError::Invalid("min_separation must be at least 1".into()));
    }
    if !(spec.noise_multiplier >= 0.0) {
        return Err(PrivacyError::Invalid("noise_multiplier must be non-negative".into()));
    }
    let bound = participation_bound(spec.total_rounds, spec.min_separation);
    if spec.max_participations > bound {
        return Err(PrivacyError::Infeasible(format!(
            "max_participations {} exceeds ceil({}/{}) = {bound}",
            spec.max_participations, spec.total_rounds, spec.min_separation
        )));
    }
    Ok(())
}

/// Checks observed participation counts against the declared `k`.
pub fn audit(spec: &PrivacySpec, counts: &BTreeMap<u64, u64>) -> Result<()> {
    feasibility(spec)?;
    match counts.iter().find(|(_, &c)| c > spec.max_participations) {
        Some((id, c)) => Err(PrivacyError::Infeasible(format!(
            "client {id} participated {c} times, more than k = {}",
            spec.max_participations
        ))),
        None => Ok(()),
    }
}

/// `ρ = k·h / (2z²)`; infinite when `z = 0`.
pub fn zcdp_tree(spec: &PrivacySpec) -> Result<f64> {
    feasibility(spec)?;
    let h = tree_height(spec.total_rounds) as f64;
    let k = spec.max_participations as f64;
    if k == 0.0 {
        return Ok(0.0);
    }
    if spec.noise_multiplier == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(k * h / (2.0 * spec.noise_multiplier * spec.noise_multiplier))
}

/// `ε = ρ + 2·sqrt(ρ·ln(1/δ))`.
pub fn zcdp_to_eps(rho: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PrivacyError::Delta(delta));
    }
    if !(rho >= 0.0) {
        return Err(PrivacyError::Invalid(format!("rho must be non-negative, got {rho}")));
    }
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

pub fn report(spec: &PrivacySpec) -> Result<PrivacyReport> {
    let rho = zcdp_tree(spec)?;
    Ok(PrivacyReport {
        spec: Some(*spec),
        tree_height: Some(tree_height(spec.total_rounds)),
        rho,
        epsilon: zcdp_to_eps(rho, spec.target_delta)?,
        delta: spec.target_delta,
        method: METHOD.to_owned(),
    })
}

/// Report for a directly given ρ.
pub fn report_from_rho(rho: f64, delta: f64) -> Result<PrivacyReport> {
    Ok(PrivacyReport {
        spec: None,
        tree_height: None,
        rho,
        epsilon: zcdp_to_eps(rho, delta)?,
        delta,
        method: "standard zCDP to (eps, delta) conversion".to_owned(),
    })
}

impl PrivacyReport {
    /// Human-readable privacy statement.
    pub fn statement(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "DP setting: user-level DP-FTRL with tree aggregation (no amplification by sampling)");
        let _ = writeln!(s, "Unit of privacy: one client device and all of its examples");
        let _ = writeln!(s, "Adjacency: datasets differ by adding or removing one client (zero-out)");
        if let (Some(spec), Some(h)) = (&self.spec, self.tree_height) {
            let _ = writeln!(
                s,
                "Mechanism: T = {} rounds, tree height h = {h}, noise multiplier z = {}, min separation s = {}, max participations k = {}",
                spec.total_rounds, spec.noise_multiplier, spec.min_separation, spec.max_participations
            );
        }
        let _ = writeln!(s, "Formal guarantee: rho = {:.6} zCDP", self.rho);
        let _ = writeln!(s, "Converted: (epsilon = {:.4}, delta = {:e})-DP", self.epsilon, self.delta);
        let _ = writeln!(s, "Accounting method: {}", self.method);
        s
    }
}
