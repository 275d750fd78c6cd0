//! Finite-difference checks of every primitive and of the micro model.

use anyhow::Result;
use g2s_core::graph::EdgeTag;
use g2s_core::model::{check_encoder, check_full_model, BASE_TAGS};
use g2s_core::tensor::{check_primitives, Fault, GradCheckConfig};
use serde::Serialize;

/// Threshold for the model checks (and for primitives unless `bits == 64`).
pub const MODEL_THRESHOLD: f64 = 1e-4;
pub const PRIMITIVE_THRESHOLD_64: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub bits: u32,
    pub checks: Vec<CheckLine>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn line(name: String, max_rel_error: f64, threshold: f64) -> CheckLine {
    CheckLine {
        name,
        max_rel_error,
        threshold,
        pass: max_rel_error < threshold,
    }
}

/// `bits` picks the primitive threshold: 1e-6 for 64, otherwise 1e-4. The
/// differences themselves are always taken in 64-bit arithmetic.
pub fn gradcheck(bits: u32, fault: Option<Fault>, seed: u64) -> Result<GradcheckReport> {
    let gc = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    let primitive_threshold = if bits == 64 { PRIMITIVE_THRESHOLD_64 } else { MODEL_THRESHOLD };
    let mut checks = Vec::new();
    for (name, r) in check_primitives(&gc, fault)? {
        checks.push(line(format!("primitive {name}"), r.max_rel_error, primitive_threshold));
    }
    for (label, tags) in [("3 tags", &BASE_TAGS[..]), ("5 tags", &EdgeTag::ALL[..])] {
        let r = check_encoder(tags, &gc, fault)?;
        checks.push(line(format!("encoder ({label})"), r.max_rel_error, MODEL_THRESHOLD));
        let r = check_full_model(tags, &gc, fault)?;
        checks.push(line(format!("full model ({label})"), r.max_rel_error, MODEL_THRESHOLD));
    }
    Ok(GradcheckReport { bits, checks })
}
