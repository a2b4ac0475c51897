//! Residual-energy diagnostics, discriminativeness, and Monte-Carlo variance
//! benches for the sketched estimators.

mod diagnostics;
mod variance;

pub use diagnostics::{
    diagnose_records, discriminativeness, energy_profile, fixed_topk, gh_fidelity, peaked_draw, run_peaked_diagnostics,
    DiagnosticsRow, EnergyProfile, PeakedParams,
};
pub use variance::{
    gaussian_rp_estimate, rademacher_rp_estimate, variance_bench, variance_ratio_lower_bound, Check, CheckKind,
    Scenario, VarianceReport, Verdict,
};

pub(crate) fn full_token(logits: &[f64], target: usize, hidden_dim: usize) -> crate::datamodel::TokenRecord {
    crate::datamodel::TokenRecord {
        target_id: target as u32,
        target_logit: logits[target] as f32,
        candidate_ids: (0..logits.len() as u32).collect(),
        candidate_logits: logits.iter().map(|&z| z as f32).collect(),
        hidden: vec![0.0; hidden_dim],
    }
}
