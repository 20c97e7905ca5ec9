//! Campaign artifacts on disk.
//!
//! Layout of an output directory:
//!
//! ```text
//! dataset.csv          accumulated labeled samples
//! actions.jsonl        one fuzzing action per run
//! ruleset_iter_<i>.txt model learned after iteration i
//! plan_iter_<i>.json   plan for iteration i + 1
//! ruleset.txt          final model
//! report.json          iteration records and summary
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sdnfuzz_core::{IterationPlan, LabeledDataset, RuleSet};
use serde::Serialize;

use crate::report::CampaignReport;
use crate::CampaignError;

pub const DATASET_FILE: &str = "dataset.csv";
pub const ACTIONS_FILE: &str = "actions.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const FINAL_RULESET_FILE: &str = "ruleset.txt";

pub fn ruleset_file(iteration: u32) -> String {
    format!("ruleset_iter_{iteration}.txt")
}

pub fn plan_file(iteration: u32) -> String {
    format!("plan_iter_{iteration}.json")
}

fn fail(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Persistence {
        path: path.to_path_buf(),
        source,
    }
}

pub struct Store {
    dir: PathBuf,
    rows_written: usize,
}

impl Store {
    /// Creates `dir` and clears artifacts of a previous campaign there.
    pub fn create(dir: &Path) -> Result<Self, CampaignError> {
        fs::create_dir_all(dir).map_err(fail(dir))?;
        for entry in fs::read_dir(dir).map_err(fail(dir))? {
            let path = entry.map_err(fail(dir))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let ours = [DATASET_FILE, ACTIONS_FILE, REPORT_FILE, FINAL_RULESET_FILE].contains(&name)
                || name.starts_with("ruleset_iter_")
                || name.starts_with("plan_iter_");
            if ours && path.is_file() {
                fs::remove_file(&path).map_err(fail(&path))?;
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            rows_written: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends rows added since the last call, writing the header first.
    pub fn append_dataset(&mut self, data: &LabeledDataset) -> Result<(), CampaignError> {
        let path = self.dir.join(DATASET_FILE);
        if self.rows_written == 0 {
            let f = File::create(&path).map_err(fail(&path))?;
            data.write_csv(BufWriter::new(f))?;
        } else {
            let f = OpenOptions::new().append(true).open(&path).map_err(fail(&path))?;
            data.write_csv_rows(BufWriter::new(f), self.rows_written)?;
        }
        self.rows_written = data.len();
        Ok(())
    }

    pub fn append_actions<T: Serialize>(&self, lines: &[T]) -> Result<(), CampaignError> {
        let path = self.dir.join(ACTIONS_FILE);
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(fail(&path))?;
        let mut w = BufWriter::new(f);
        for line in lines {
            serde_json::to_writer(&mut w, line)?;
            w.write_all(b"\n").map_err(fail(&path))?;
        }
        w.flush().map_err(fail(&path))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CampaignError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(fail(&path))
    }

    pub fn write_ruleset(&self, iteration: u32, rules: &RuleSet) -> Result<(), CampaignError> {
        self.write_text(&ruleset_file(iteration), &rules.to_string())
    }

    pub fn write_plan(&self, iteration: u32, plan: &IterationPlan) -> Result<(), CampaignError> {
        self.write_text(&plan_file(iteration), &(serde_json::to_string_pretty(plan)? + "\n"))
    }

    pub fn write_report(&self, report: &CampaignReport) -> Result<(), CampaignError> {
        self.write_text(REPORT_FILE, &(serde_json::to_string_pretty(report)? + "\n"))
    }
}
