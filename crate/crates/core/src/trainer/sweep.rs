use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pushmini::{evaluate, Episode, EvalResult, EvalSetting, ModelPolicy, Variant};

use super::{train, Checkpoint, Method, TrainConfig};

/// Evaluation columns of the results table.
pub const SWEEP_SETTINGS: [Variant; 3] = [Variant::Base, Variant::Purple, Variant::PurpleMirrored];

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: Method,
    pub checkpoint: Checkpoint,
    pub results: Vec<EvalResult>,
}

impl SweepRow {
    pub fn result(&self, variant: Variant) -> Option<&EvalResult> {
        self.results.iter().find(|r| r.setting.variant == variant)
    }
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, method: Method) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// One line per method: mean reward and success rate per setting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for v in SWEEP_SETTINGS {
            out.push_str(&format!(",{v}_mean_reward,{v}_success_rate"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(row.method.as_str());
            for r in &row.results {
                out.push_str(&format!(",{},{}", r.mean_reward, r.success_rate));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-seed rewards of one evaluation as CSV.
pub fn per_seed_csv(result: &EvalResult) -> String {
    let mut out = String::from("seed,reward,success\n");
    for r in &result.rollouts {
        out.push_str(&format!("{},{},{}\n", r.seed, r.reward, u8::from(r.success)));
    }
    out
}

/// Trains every method from `base` (same seed and data) and evaluates each
/// on the target embodiment in every setting of [`SWEEP_SETTINGS`].
pub fn run_sweep(
    base: &TrainConfig,
    methods: &[Method],
    episodes: &[Episode],
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<SweepTable> {
    let mut seen = HashSet::new();
    if let Some(dup) = methods.iter().find(|m| !seen.insert(**m)) {
        return Err(Error::contract(format!("method {dup} listed twice")));
    }
    let mut rows = Vec::new();
    for &method in methods {
        let config = TrainConfig { method, ..base.clone() };
        let dir = out_dir.map(|d| d.join(method.as_str()));
        let outcome = train(&config, episodes, dir.as_deref())?;
        let model = outcome.checkpoint.model()?;
        let mut results = Vec::new();
        for variant in SWEEP_SETTINGS {
            let mut policy = ModelPolicy {
                model: &model,
                norm: &outcome.checkpoint.norm,
            };
            let r = evaluate(&mut policy, EvalSetting::target(variant), seeds)?;
            log::info!(
                "{method} on {variant}: mean reward {:.4}, success {:.0}%",
                r.mean_reward,
                100.0 * r.success_rate
            );
            if let Some(dir) = &dir {
                let path = dir.join(format!("eval_{variant}.csv"));
                fs::write(&path, per_seed_csv(&r)).map_err(|e| Error::io(&path, e))?;
            }
            results.push(r);
        }
        rows.push(SweepRow {
            method,
            checkpoint: outcome.checkpoint,
            results,
        });
    }
    let table = SweepTable { rows };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("results.csv");
        fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(table)
}
