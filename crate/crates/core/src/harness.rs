//! Experiment orchestration: training loop, metric/diagnostic logging,
//! checkpointing, and run summaries.
//!
//! Every run directory is self-describing: `config.txt` (canonical config),
//! `metrics.csv` (one row per iteration), `diagnostics.csv` (when enabled),
//! `final.ddck`, and `summary.txt`.
//!
//! The experiment seed splits into independent streams for init, data
//! order, masks, and diagnostics batch sampling, so toggling diagnostics
//! never changes the training trajectory, and masks are keyed by iteration
//! so a resumed run replays exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::checkpoint::{load_training_state, save_training_state};
use crate::config::{DataSource, ExperimentConfig};
use crate::data::{generate, load, minibatch_indices, Dataset};
use crate::diagnostics::{
    collect_minibatch_gradients, direction_metrics, thread_count, whole_dataset_gradient,
    DiagnosticsRecord, DIAGNOSTICS_CSV_HEADER,
};
use crate::error::CoreError;
use crate::metrics::gde_auc;
use crate::model::{build_model, ForwardCtx, Model};
use crate::optim::Optimizer;
use crate::rng::{stream_id, StreamDomain};
use crate::schedule::DropTarget;

pub const METRICS_CSV_HEADER: &str = "iteration,epoch,lr,drop_rate,train_loss";

/// Named sub-seeds derived from the experiment seed.
pub mod seeds {
    use super::*;

    pub fn init(seed: u64) -> u64 {
        stream_id(StreamDomain::Init, seed, 0)
    }

    pub fn masks(seed: u64) -> u64 {
        stream_id(StreamDomain::DropoutMask, seed, 0)
    }

    pub fn data_order(seed: u64) -> u64 {
        stream_id(StreamDomain::DataOrder, seed, 0)
    }

    pub fn diag(seed: u64) -> u64 {
        stream_id(StreamDomain::DiagBatch, seed, 0)
    }
}

/// End-of-run scalars; reproducible from the run's CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub final_test_accuracy: f64,
    /// Trapezoidal GDE integral over the early window; NaN when
    /// diagnostics were off or too sparse.
    pub gde_auc_early: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        format!(
            "final_train_loss = {}\nfinal_test_loss = {}\nfinal_test_accuracy = {}\ngde_auc_early = {}\nseed = {}\nconfig_digest = {}\n",
            self.final_train_loss,
            self.final_test_loss,
            self.final_test_accuracy,
            self.gde_auc_early,
            self.seed,
            self.config_digest
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let map = crate::config::parse_kv(&text)?;
        let get = |k: &str| -> Result<&String, CoreError> {
            map.get(k)
                .ok_or_else(|| CoreError::InvalidConfig(format!("summary missing '{k}'")))
        };
        let num = |k: &str| -> Result<f64, CoreError> {
            get(k)?
                .parse::<f64>()
                .map_err(|_| CoreError::InvalidConfig(format!("summary key '{k}' is not numeric")))
        };
        Ok(RunSummary {
            final_train_loss: num("final_train_loss")?,
            final_test_loss: num("final_test_loss")?,
            final_test_accuracy: num("final_test_accuracy")?,
            gde_auc_early: num("gde_auc_early")?,
            seed: get("seed")?.parse().map_err(|_| {
                CoreError::InvalidConfig("summary key 'seed' is not an integer".into())
            })?,
            config_digest: get("config_digest")?.clone(),
        })
    }
}

/// Mean eval-mode loss over a dataset, accumulated in fixed chunk order.
pub fn mean_loss(model: &Model<f64>, dataset: &Dataset<f64>, chunk: usize) -> Result<f64, CoreError> {
    let n = dataset.len();
    let chunk = chunk.max(1);
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let pass = model.forward(&dataset.batch(&indices), &ForwardCtx::eval())?;
        total += pass.loss * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

/// Classification accuracy in eval mode.
pub fn accuracy(model: &Model<f64>, dataset: &Dataset<f64>, chunk: usize) -> Result<f64, CoreError> {
    let n = dataset.len();
    let chunk = chunk.max(1);
    let classes = dataset.n_classes;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let batch = dataset.batch(&indices);
        let pass = model.forward(&batch, &ForwardCtx::eval())?;
        let logits = pass.logits();
        for (row, target) in batch.targets.iter().enumerate() {
            let vals = &logits.values()[row * classes..(row + 1) * classes];
            let mut best = 0;
            for (j, v) in vals.iter().enumerate() {
                if *v > vals[best] {
                    best = j;
                }
            }
            if best == *target {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / n as f64)
}

/// Materialize the run's datasets from the config.
pub fn materialize_data(
    config: &ExperimentConfig,
) -> Result<(Dataset<f64>, Dataset<f64>), CoreError> {
    let (train, test) = match &config.data {
        DataSource::Spec(spec) => generate::<f64>(spec)?,
        DataSource::Dir(dir) => {
            let train = load::<f64>(&dir.join("train.dds"))?;
            let test = load::<f64>(&dir.join("test.dds"))?;
            (train, test)
        }
    };
    if train.input_dim() != config.input_dim || train.n_classes != config.output_dim {
        return Err(CoreError::InvalidConfig(format!(
            "dataset is {}-dim / {} classes but the model wants {} / {}",
            train.input_dim(),
            train.n_classes,
            config.input_dim,
            config.output_dim
        )));
    }
    if config.batch_size > train.len() {
        return Err(CoreError::InvalidConfig(format!(
            "batch_size {} exceeds n_train {}",
            config.batch_size,
            train.len()
        )));
    }
    Ok((train, test))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CoreError> {
    std::fs::write(path, contents).map_err(|e| CoreError::io(path.display().to_string(), e))
}

struct EpochBufferedCsv {
    file: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
    buffer: String,
}

impl EpochBufferedCsv {
    fn create(path: PathBuf, header: &str) -> Result<Self, CoreError> {
        let file = std::fs::File::create(&path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut s = EpochBufferedCsv {
            file: std::io::BufWriter::new(file),
            path,
            buffer: String::new(),
        };
        s.buffer.push_str(header);
        s.buffer.push('\n');
        Ok(s)
    }

    fn push_row(&mut self, row: &str) {
        self.buffer.push_str(row);
        self.buffer.push('\n');
    }

    fn flush_epoch(&mut self) -> Result<(), CoreError> {
        self.file
            .write_all(self.buffer.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| CoreError::io(self.path.display().to_string(), e))?;
        self.buffer.clear();
        Ok(())
    }
}

/// Train per the config, writing all artifacts into `out_dir`. With
/// `resume_from`, training state is restored and the CSVs cover only the
/// resumed portion.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<RunSummary, CoreError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir.display().to_string(), e))?;
    write_file(&out_dir.join("config.txt"), &config.to_canonical_string())?;

    let (train, test) = materialize_data(config)?;
    let mcfg = config.model_config(config.seed);
    let mut model: Model<f64> = build_model(&mcfg)?;
    let w0 = model.params().clone();
    let mut opt = Optimizer::new(config.opt_kind, config.opt_hyper.clone(), model.param_count())?;

    let n_train = train.len();
    let ipe = n_train.div_ceil(config.batch_size) as u64;
    let total_iters = config.total_epochs as u64 * ipe;
    let lr_cfg = config.lr_config();
    let threads = thread_count();

    let (start_iteration, start_epoch) = match resume_from {
        Some(p) => load_training_state(p, &mut model, &mut opt)?,
        None => (0, 0),
    };
    let mut iteration = start_iteration;

    let mask_seed = seeds::masks(config.seed);
    let order_seed = seeds::data_order(config.seed);
    let diag_seed = seeds::diag(config.seed);

    let mut metrics = EpochBufferedCsv::create(out_dir.join("metrics.csv"), METRICS_CSV_HEADER)?;
    let mut diag_records: Vec<DiagnosticsRecord> = Vec::new();

    let abort = |metrics: &mut EpochBufferedCsv, err: &CoreError, iteration: u64| -> Result<(), CoreError> {
        metrics.flush_epoch()?;
        write_file(
            &out_dir.join("failure.txt"),
            &format!("iteration = {iteration}\nerror = {err}\n"),
        )
    };

    for epoch in start_epoch..config.total_epochs as u64 {
        for indices in minibatch_indices(n_train, config.batch_size, order_seed, epoch) {
            let t_epochs = iteration as f64 / ipe as f64;
            let rate = config.drop.rate_at_epoch(t_epochs, config.total_epochs as f64);
            let (p_drop, p_sd) = match config.drop_target {
                DropTarget::Dropout => (rate, 0.0),
                DropTarget::StochasticDepth => (0.0, rate),
            };
            let lr = lr_cfg.lr_at(iteration, ipe);
            let ctx = ForwardCtx::train(mask_seed, iteration, p_drop, p_sd);
            let batch = train.batch(&indices);

            let mut pass = match model.forward(&batch, &ctx) {
                Ok(p) => p,
                Err(e) => {
                    abort(&mut metrics, &e, iteration)?;
                    return Err(e);
                }
            };
            let grad = pass.backward()?;
            metrics.push_row(&format!("{},{},{},{},{}", iteration, epoch, lr, rate, pass.loss));

            if config.diag.should_sample(iteration) {
                let g_hat = whole_dataset_gradient(&model, &train, config.diag.ghat_chunk, threads)?;
                let collect_ctx = if config.diag.collect_train_mode {
                    ForwardCtx::train(diag_seed, iteration, p_drop, p_sd)
                } else {
                    ForwardCtx::eval()
                };
                let set = collect_minibatch_gradients(
                    &model,
                    &train,
                    config.diag.k,
                    config.diag.batch_size,
                    &collect_ctx,
                    diag_seed,
                    iteration,
                    threads,
                )?;
                // a set thinned below two members by zero gradients cannot
                // be summarized; skip the record rather than fail the run
                if set.members.len() >= 2 && g_hat.l2_norm() > 0.0 {
                    let (gdv, gde, bias_norm) = direction_metrics(&set, &g_hat)?;
                    diag_records.push(DiagnosticsRecord {
                        iteration,
                        epoch,
                        lr,
                        drop_rate: rate,
                        train_loss: pass.loss,
                        grad_norm: grad.l2_norm(),
                        model_distance: model.params().distance(&w0)?,
                        gdv,
                        gde,
                        bias_norm,
                    });
                }
            }

            if let Err(e) = opt.step(model.params_mut().values_mut(), grad.values(), lr) {
                abort(&mut metrics, &e, iteration)?;
                return Err(e);
            }
            iteration += 1;
        }
        metrics.flush_epoch()?;
        let done = epoch + 1;
        if config.checkpoint_every_epochs > 0
            && done % config.checkpoint_every_epochs as u64 == 0
            && done < config.total_epochs as u64
        {
            save_training_state(
                &out_dir.join(format!("ckpt_epoch_{done}.ddck")),
                &model,
                &opt,
                iteration,
                done,
            )?;
        }
    }
    debug_assert_eq!(iteration, total_iters);

    save_training_state(&out_dir.join("final.ddck"), &model, &opt, iteration, config.total_epochs as u64)?;

    if config.diag.enabled {
        let mut text = String::from(DIAGNOSTICS_CSV_HEADER);
        text.push('\n');
        for r in &diag_records {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        write_file(&out_dir.join("diagnostics.csv"), &text)?;
    }

    let gde_series: Vec<(u64, f64)> = diag_records.iter().map(|r| (r.iteration, r.gde)).collect();
    let gde_auc_early = match gde_series.last() {
        Some((last, _)) => {
            let window = config.diag.auc_window.min(*last);
            gde_auc(&gde_series, window).unwrap_or(f64::NAN)
        }
        None => f64::NAN,
    };

    let summary = RunSummary {
        final_train_loss: mean_loss(&model, &train, 512)?,
        final_test_loss: mean_loss(&model, &test, 512)?,
        final_test_accuracy: accuracy(&model, &test, 512)?,
        gde_auc_early,
        seed: config.seed,
        config_digest: config.digest(),
    };
    write_file(&out_dir.join("summary.txt"), &summary.to_text())?;
    Ok(summary)
}

/// Run the measurement suite once against a saved checkpoint: whole-dataset
/// gradient, mini-batch gradient set at the schedule's in-effect rates, and
/// the distance from the config's deterministic initialization. The
/// `grad_norm` field reports the whole-dataset gradient's norm, since a
/// standalone checkpoint has no training-step gradient.
pub fn diagnose_checkpoint(
    config: &ExperimentConfig,
    checkpoint: &Path,
) -> Result<DiagnosticsRecord, CoreError> {
    config.validate()?;
    let (train, _test) = materialize_data(config)?;
    let mcfg = config.model_config(config.seed);
    let mut model: Model<f64> = build_model(&mcfg)?;
    let w0 = model.params().clone();
    crate::checkpoint::load_model_params(&mut model, checkpoint)?;
    let iteration = crate::checkpoint::read_run_iteration(checkpoint)?.unwrap_or(0);

    let ipe = train.len().div_ceil(config.batch_size) as u64;
    let t_epochs = iteration as f64 / ipe as f64;
    let rate = config.drop.rate_at_epoch(t_epochs, config.total_epochs as f64);
    let (p_drop, p_sd) = match config.drop_target {
        DropTarget::Dropout => (rate, 0.0),
        DropTarget::StochasticDepth => (0.0, rate),
    };
    let threads = thread_count();
    let diag_seed = seeds::diag(config.seed);

    let g_hat = whole_dataset_gradient(&model, &train, config.diag.ghat_chunk, threads)?;
    let collect_ctx = ForwardCtx::train(diag_seed, iteration, p_drop, p_sd);
    let set = collect_minibatch_gradients(
        &model,
        &train,
        config.diag.k,
        config.diag.batch_size.min(train.len()),
        &collect_ctx,
        diag_seed,
        iteration,
        threads,
    )?;
    if set.members.len() < 2 {
        return Err(CoreError::GradientSetTooSmall {
            need: 2,
            got: set.members.len(),
        });
    }
    let (gdv, gde, bias_norm) = direction_metrics(&set, &g_hat)?;
    Ok(DiagnosticsRecord {
        iteration,
        epoch: iteration / ipe,
        lr: config.lr_config().lr_at(iteration, ipe),
        drop_rate: rate,
        train_loss: mean_loss(&model, &train, 512)?,
        grad_norm: g_hat.l2_norm(),
        model_distance: model.params().distance(&w0)?,
        gdv,
        gde,
        bias_norm,
    })
}
