use crate::config::{CampaignConfig, Mode};
use crate::report::{ComparisonReport, ModeResult};
use crate::{run_campaign, CampaignError};

/// Runs the same campaign once per mode. With an output directory each mode
/// writes into its own subdirectory.
pub fn compare_modes(base: &CampaignConfig, modes: &[Mode]) -> Result<ComparisonReport, CampaignError> {
    let mut results = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut cfg = base.clone();
        cfg.mode = mode;
        cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(mode.to_string()));
        let s = run_campaign(&cfg)?.report.summary;
        results.push(ModeResult {
            mode,
            total_failures: s.total_failures,
            total_samples: s.total_samples,
            final_precision: s.final_precision,
            final_recall: s.final_recall,
            heldout_precision: s.heldout_precision,
            heldout_recall: s.heldout_recall,
            iterations_run: s.iterations_run,
        });
    }
    Ok(ComparisonReport {
        seed: base.seed,
        budget_seconds: base.budget_seconds,
        modes: results,
    })
}
