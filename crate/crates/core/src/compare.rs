//! Side-by-side comparison of two completed runs.
//!
//! Reports deltas (B minus A) for final train loss, test accuracy, the
//! early-window GDE-AUC, the mean gradient norm over early iterations, and
//! the final model distance, plus any config keys that differ beyond the
//! axis the comparison is supposed to vary.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::parse_kv;
use crate::error::CoreError;
use crate::harness::RunSummary;

/// Window (in iterations) for the "early gradient norm" aggregate.
pub const EARLY_NORM_WINDOW: u64 = 300;

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub name: String,
    pub config: BTreeMap<String, String>,
    pub summary: RunSummary,
    /// (iteration, grad_norm, model_distance) rows from diagnostics.csv.
    pub diag: Vec<(u64, f64, f64)>,
}

impl RunArtifacts {
    pub fn load(dir: &Path) -> Result<Self, CoreError> {
        let config_text = std::fs::read_to_string(dir.join("config.txt"))
            .map_err(|e| CoreError::io(dir.join("config.txt").display().to_string(), e))?;
        let config = parse_kv(&config_text)?;
        let summary = RunSummary::from_file(&dir.join("summary.txt"))?;
        let diag_path = dir.join("diagnostics.csv");
        let diag = if diag_path.exists() {
            let text = std::fs::read_to_string(&diag_path)
                .map_err(|e| CoreError::io(diag_path.display().to_string(), e))?;
            let mut rows = Vec::new();
            let mut lines = text.lines();
            let header: Vec<&str> = lines
                .next()
                .ok_or_else(|| CoreError::InvalidConfig("empty diagnostics.csv".into()))?
                .split(',')
                .collect();
            let col = |name: &str| -> Result<usize, CoreError> {
                header
                    .iter()
                    .position(|h| *h == name)
                    .ok_or_else(|| CoreError::MissingColumns(vec![name.to_string()]))
            };
            let (ci, cg, cd) = (col("iteration")?, col("grad_norm")?, col("model_distance")?);
            for line in lines {
                let cols: Vec<&str> = line.split(',').collect();
                let parse = |s: &str| -> Result<f64, CoreError> {
                    s.parse::<f64>().map_err(|_| {
                        CoreError::InvalidConfig(format!("bad number '{s}' in diagnostics.csv"))
                    })
                };
                rows.push((parse(cols[ci])? as u64, parse(cols[cg])?, parse(cols[cd])?));
            }
            rows
        } else {
            Vec::new()
        };
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(RunArtifacts {
            name,
            config,
            summary,
            diag,
        })
    }

    /// Mean gradient norm over diagnostics rows with iteration below the
    /// window; NaN when diagnostics are absent.
    pub fn early_grad_norm_mean(&self, window: u64) -> f64 {
        let vals: Vec<f64> = self
            .diag
            .iter()
            .filter(|(it, _, _)| *it < window)
            .map(|(_, g, _)| *g)
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    pub fn final_model_distance(&self) -> f64 {
        self.diag.last().map(|(_, _, d)| *d).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub a: String,
    pub b: String,
    pub train_loss_delta: f64,
    pub test_accuracy_delta: f64,
    pub gde_auc_delta: f64,
    pub early_grad_norm_delta: f64,
    pub final_model_distance_delta: f64,
    /// Config keys that differ, with both values.
    pub config_diffs: Vec<(String, String, String)>,
    /// True when the runs differ only in their seed.
    pub seed_only: bool,
    pub warnings: Vec<String>,
}

/// Compare two run directories. `expected_axes` names the config keys the
/// comparison intends to vary; anything else that differs (other than the
/// seed) is warned about.
pub fn compare_runs(
    dir_a: &Path,
    dir_b: &Path,
    expected_axes: &[String],
) -> Result<CompareReport, CoreError> {
    let a = RunArtifacts::load(dir_a)?;
    let b = RunArtifacts::load(dir_b)?;

    let mut config_diffs = Vec::new();
    let keys: std::collections::BTreeSet<&String> = a.config.keys().chain(b.config.keys()).collect();
    for k in keys {
        let va = a.config.get(k).cloned().unwrap_or_default();
        let vb = b.config.get(k).cloned().unwrap_or_default();
        if va != vb {
            config_diffs.push((k.clone(), va, vb));
        }
    }
    let diff_keys: Vec<&str> = config_diffs.iter().map(|(k, _, _)| k.as_str()).collect();
    let seed_only = !diff_keys.is_empty()
        && diff_keys.iter().all(|k| *k == "seed" || *k == "data.seed");
    let mut warnings = Vec::new();
    for k in &diff_keys {
        if *k != "seed" && !expected_axes.iter().any(|a| a == k) {
            warnings.push(format!("config key '{k}' differs beyond the intended axis"));
        }
    }

    Ok(CompareReport {
        a: a.name.clone(),
        b: b.name.clone(),
        train_loss_delta: b.summary.final_train_loss - a.summary.final_train_loss,
        test_accuracy_delta: b.summary.final_test_accuracy - a.summary.final_test_accuracy,
        gde_auc_delta: b.summary.gde_auc_early - a.summary.gde_auc_early,
        early_grad_norm_delta: b.early_grad_norm_mean(EARLY_NORM_WINDOW)
            - a.early_grad_norm_mean(EARLY_NORM_WINDOW),
        final_model_distance_delta: b.final_model_distance() - a.final_model_distance(),
        config_diffs,
        seed_only,
        warnings,
    })
}

impl CompareReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("comparing A = {}  vs  B = {}\n\n", self.a, self.b));
        out.push_str(&format!("{:<28} {:>14}\n", "quantity", "delta (B - A)"));
        for (name, v) in [
            ("final train loss", self.train_loss_delta),
            ("final test accuracy", self.test_accuracy_delta),
            ("gde auc (early window)", self.gde_auc_delta),
            ("early mean grad norm", self.early_grad_norm_delta),
            ("final model distance", self.final_model_distance_delta),
        ] {
            out.push_str(&format!("{name:<28} {v:>14.6}\n"));
        }
        if self.seed_only {
            out.push_str("\nruns differ only in seed\n");
        } else if self.config_diffs.is_empty() {
            out.push_str("\nconfigs are identical\n");
        } else {
            out.push_str("\nconfig differences:\n");
            for (k, va, vb) in &self.config_diffs {
                out.push_str(&format!("  {k}: '{va}' vs '{vb}'\n"));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::harness::run_experiment;
    use std::path::PathBuf;

    fn cfg(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_str(&format!(
            "\
model.family = mlp
model.input_dim = 6
model.output_dim = 3
model.hidden_dim = 8
model.depth = 1
data.kind = gaussian_clusters
data.n_train = 30
data.n_test = 15
data.noise = 0.6
data.seed = 5
opt.lr = 5e-3
total_epochs = 2
batch_size = 10
seed = 1
{extra}"
        ))
        .unwrap()
        .0
    }

    fn tmpdir(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join("dropdyn_compare_tests").join(name);
        let _ = std::fs::remove_dir_all(&d);
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn run_compared_with_itself_is_all_zero() {
        let out = tmpdir("self");
        run_experiment(&cfg(""), &out, None).unwrap();
        let report = compare_runs(&out, &out, &[]).unwrap();
        assert_eq!(report.train_loss_delta, 0.0);
        assert_eq!(report.test_accuracy_delta, 0.0);
        assert!(report.config_diffs.is_empty());
        assert!(!report.seed_only);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn seed_only_difference_is_flagged() {
        let out_a = tmpdir("seed_a");
        let out_b = tmpdir("seed_b");
        run_experiment(&cfg(""), &out_a, None).unwrap();
        run_experiment(&cfg("").with_overrides(&[("seed".into(), "2".into())]).unwrap(), &out_b, None)
            .unwrap();
        let report = compare_runs(&out_a, &out_b, &[]).unwrap();
        assert!(report.seed_only);
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    }

    #[test]
    fn unexpected_axis_warns() {
        let out_a = tmpdir("axis_a");
        let out_b = tmpdir("axis_b");
        run_experiment(&cfg(""), &out_a, None).unwrap();
        let changed = cfg("")
            .with_overrides(&[
                ("drop.strategy".into(), "standard".into()),
                ("drop.rate".into(), "0.2".into()),
                ("opt.lr".into(), "1e-2".into()),
            ])
            .unwrap();
        run_experiment(&changed, &out_b, None).unwrap();
        let report = compare_runs(&out_a, &out_b, &["drop.strategy".into(), "drop.rate".into()]).unwrap();
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("opt.lr")), "{:?}", report.warnings);
        assert!(report.to_text().contains("drop.strategy"));
    }
}
