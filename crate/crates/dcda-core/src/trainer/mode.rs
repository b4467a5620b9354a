//! Training-mode registry.
//!
//! The four ablation variants are interchangeable strategies behind one
//! trait: each declares which loss terms and data paths are live. New
//! variants register by adding an entry to `MODES`; configs and the CLI
//! select one by name at runtime.

use crate::error::{Error, Result};

/// Gating policy for one training variant.
pub trait ModePolicy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Target batches are drawn and embedded.
    fn uses_target(&self) -> bool;
    /// Domain discrimination loss and GRL path are live.
    fn uses_domain_loss(&self) -> bool;
    /// Cluster initialization, clustering losses, centroid updates and
    /// the epoch-end pseudo-label refresh are live.
    fn uses_clustering(&self) -> bool;
    /// Pseudo-labeled target classification loss is live.
    fn uses_target_cls(&self) -> bool;
}

/// Supervised baseline: source task loss only, target data untouched.
pub struct SourceOnly;

impl ModePolicy for SourceOnly {
    fn name(&self) -> &'static str {
        "source_only"
    }
    fn uses_target(&self) -> bool {
        false
    }
    fn uses_domain_loss(&self) -> bool {
        false
    }
    fn uses_clustering(&self) -> bool {
        false
    }
    fn uses_target_cls(&self) -> bool {
        false
    }
}

/// Adversarial adaptation without any clustering component.
pub struct DaOnly;

impl ModePolicy for DaOnly {
    fn name(&self) -> &'static str {
        "da_only"
    }
    fn uses_target(&self) -> bool {
        true
    }
    fn uses_domain_loss(&self) -> bool {
        true
    }
    fn uses_clustering(&self) -> bool {
        false
    }
    fn uses_target_cls(&self) -> bool {
        false
    }
}

/// Full pipeline minus the pseudo-labeled target classification loss.
pub struct DcdaNoTargetCls;

impl ModePolicy for DcdaNoTargetCls {
    fn name(&self) -> &'static str {
        "dcda_no_target_cls"
    }
    fn uses_target(&self) -> bool {
        true
    }
    fn uses_domain_loss(&self) -> bool {
        true
    }
    fn uses_clustering(&self) -> bool {
        true
    }
    fn uses_target_cls(&self) -> bool {
        false
    }
}

/// The complete method: all four loss terms.
pub struct DcdaFull;

impl ModePolicy for DcdaFull {
    fn name(&self) -> &'static str {
        "dcda_full"
    }
    fn uses_target(&self) -> bool {
        true
    }
    fn uses_domain_loss(&self) -> bool {
        true
    }
    fn uses_clustering(&self) -> bool {
        true
    }
    fn uses_target_cls(&self) -> bool {
        true
    }
}

/// All registered modes, in ablation-table order.
pub static MODES: [&dyn ModePolicy; 4] = [&SourceOnly, &DaOnly, &DcdaNoTargetCls, &DcdaFull];

pub fn mode_names() -> Vec<&'static str> {
    MODES.iter().map(|m| m.name()).collect()
}

pub fn mode_by_name(name: &str) -> Result<&'static dyn ModePolicy> {
    MODES
        .iter()
        .copied()
        .find(|m| m.name() == name)
        .ok_or_else(|| Error::UnknownMode(name.into(), mode_names().join(", ")))
}
