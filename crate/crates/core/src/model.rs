//! Model families: plain MLP and residual MLP.
//!
//! Layer lists (fixed, and the source of parameter counts):
//!
//! * `mlp`: `depth` hidden layers, each `linear -> activation -> dropout`,
//!   then a linear readout. No layer normalization.
//! * `residual_mlp`: input projection `linear`, then `depth` residual
//!   blocks wrapped in stochastic depth, block body
//!   `linear -> layernorm -> activation -> dropout -> linear`,
//!   then a linear readout.
//!
//! Forward passes are pure functions of `(parameters, batch, ctx)`: all
//! randomness is drawn from counter streams keyed by layer index and
//! iteration, so a pass can be replayed exactly (the finite-difference
//! oracle relies on this).

use crate::autodiff::{finite_difference, Mode, NodeId, Tape};
use crate::error::CoreError;
use crate::params::{GradientVector, ParameterVector};
use crate::regularizers::{check_rate, dropout_mask, sd_keep_decisions, sd_rate_for_layer, SdGranularity};
use crate::rng::{CounterRng, StreamDomain};
use crate::scalar::{fc, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Mlp,
    ResidualMlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub family: Family,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub activation: Activation,
    pub init_seed: u64,
    /// Std of the truncated-normal weight init (cut at +/- 2 std).
    pub init_std: f64,
    pub sd_granularity: SdGranularity,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let mut problems = Vec::new();
        if self.input_dim == 0 || self.hidden_dim == 0 {
            problems.push("input_dim and hidden_dim must be positive".to_string());
        }
        if self.output_dim < 2 {
            problems.push("output_dim must be at least 2 classes".to_string());
        }
        if self.depth == 0 {
            problems.push("depth must be at least 1".to_string());
        }
        if !(self.init_std > 0.0) {
            problems.push(format!("init_std must be positive, got {}", self.init_std));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// One training batch: row-major inputs and integer class targets.
#[derive(Debug, Clone)]
pub struct Batch<F: Scalar> {
    pub inputs: Tensor<F>,
    pub targets: Vec<usize>,
}

/// Everything a forward pass needs besides the batch. Eval mode ignores the
/// rates and consumes no randomness.
#[derive(Debug, Clone, Copy)]
pub struct ForwardCtx {
    pub mode: Mode,
    pub mask_seed: u64,
    pub iteration: u64,
    pub dropout_rate: f64,
    pub sd_rate: f64,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        ForwardCtx {
            mode: Mode::Eval,
            mask_seed: 0,
            iteration: 0,
            dropout_rate: 0.0,
            sd_rate: 0.0,
        }
    }

    pub fn train(mask_seed: u64, iteration: u64, dropout_rate: f64, sd_rate: f64) -> Self {
        ForwardCtx {
            mode: Mode::Train,
            mask_seed,
            iteration,
            dropout_rate,
            sd_rate,
        }
    }
}

/// A completed forward pass: the loss value plus the tape to run backward on.
#[derive(Debug)]
pub struct ForwardPass<F: Scalar> {
    pub loss: F,
    tape: Tape<F>,
    loss_node: NodeId,
    logits_node: NodeId,
}

impl<F: Scalar> ForwardPass<F> {
    /// Gradient of the loss w.r.t. every parameter. Parameters behind
    /// dropped paths get exactly zero. Consumes the tape; a second call is
    /// an error.
    pub fn backward(&mut self) -> Result<GradientVector<F>, CoreError> {
        self.tape.backward(self.loss_node)
    }

    pub fn logits(&self) -> &Tensor<F> {
        self.tape.value(self.logits_node)
    }
}

#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    config: ModelConfig,
    params: ParameterVector<F>,
}

/// Deterministically build a model from its config: truncated-normal
/// weights (one init stream per segment), zero biases, unit layernorm scale.
pub fn build_model<F: Scalar>(config: &ModelConfig) -> Result<Model<F>, CoreError> {
    config.validate()?;
    let mut params = ParameterVector::new();
    let mut seg_index = 0u64;
    let mut push_weight = |params: &mut ParameterVector<F>, name: String, rows: usize, cols: usize| {
        let mut rng = CounterRng::for_stream(config.init_seed, StreamDomain::Init, seg_index, 0);
        seg_index += 1;
        let values: Vec<F> = (0..rows * cols)
            .map(|_| fc(rng.next_trunc_normal(config.init_std)))
            .collect();
        params.push_segment(name, vec![rows, cols], values);
    };

    match config.family {
        Family::Mlp => {
            let mut in_dim = config.input_dim;
            for l in 0..config.depth {
                push_weight(&mut params, format!("layer{l}.weight"), in_dim, config.hidden_dim);
                params.push_segment(
                    format!("layer{l}.bias"),
                    vec![config.hidden_dim],
                    vec![F::zero(); config.hidden_dim],
                );
                in_dim = config.hidden_dim;
            }
            push_weight(&mut params, "readout.weight".into(), in_dim, config.output_dim);
            params.push_segment(
                "readout.bias",
                vec![config.output_dim],
                vec![F::zero(); config.output_dim],
            );
        }
        Family::ResidualMlp => {
            let h = config.hidden_dim;
            push_weight(&mut params, "proj.weight".into(), config.input_dim, h);
            params.push_segment("proj.bias", vec![h], vec![F::zero(); h]);
            for b in 0..config.depth {
                push_weight(&mut params, format!("block{b}.fc1.weight"), h, h);
                params.push_segment(format!("block{b}.fc1.bias"), vec![h], vec![F::zero(); h]);
                params.push_segment(format!("block{b}.norm.gamma"), vec![h], vec![F::one(); h]);
                params.push_segment(format!("block{b}.norm.beta"), vec![h], vec![F::zero(); h]);
                push_weight(&mut params, format!("block{b}.fc2.weight"), h, h);
                params.push_segment(format!("block{b}.fc2.bias"), vec![h], vec![F::zero(); h]);
            }
            push_weight(&mut params, "readout.weight".into(), h, config.output_dim);
            params.push_segment(
                "readout.bias",
                vec![config.output_dim],
                vec![F::zero(); config.output_dim],
            );
        }
    }
    Ok(Model {
        config: config.clone(),
        params,
    })
}

impl<F: Scalar> Model<F> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterVector<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector<F> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.total_len()
    }

    /// Number of dropout sites in the architecture (one per hidden layer or
    /// residual block).
    pub fn dropout_sites(&self) -> usize {
        self.config.depth
    }

    /// Replace all parameter values (layout must match).
    pub fn set_param_values(&mut self, values: &[F]) -> Result<(), CoreError> {
        if values.len() != self.params.total_len() {
            return Err(CoreError::ShapeMismatch {
                layer: "parameters".into(),
                detail: format!("{} values for {}", values.len(), self.params.total_len()),
            });
        }
        self.params.values_mut().copy_from_slice(values);
        Ok(())
    }

    /// Forward pass producing the mean cross-entropy loss and a tape.
    pub fn forward(&self, batch: &Batch<F>, ctx: &ForwardCtx) -> Result<ForwardPass<F>, CoreError> {
        self.forward_with_values(self.params.values(), batch, ctx)
    }

    /// Forward pass with parameter values supplied externally (used by the
    /// finite-difference oracle to perturb without cloning the model).
    fn forward_with_values(
        &self,
        values: &[F],
        batch: &Batch<F>,
        ctx: &ForwardCtx,
    ) -> Result<ForwardPass<F>, CoreError> {
        if ctx.mode == Mode::Train {
            check_rate(ctx.dropout_rate)?;
            check_rate(ctx.sd_rate)?;
        }
        let n = batch.inputs.rows();
        if batch.inputs.cols() != self.config.input_dim {
            return Err(CoreError::ShapeMismatch {
                layer: "input".into(),
                detail: format!(
                    "batch width {} but model input_dim {}",
                    batch.inputs.cols(),
                    self.config.input_dim
                ),
            });
        }
        if batch.targets.len() != n {
            return Err(CoreError::ShapeMismatch {
                layer: "input".into(),
                detail: format!("{} targets for {} rows", batch.targets.len(), n),
            });
        }

        let mut tape = Tape::new(values.len());
        let x = tape.leaf(batch.inputs.clone());
        let mut seg_nodes: Vec<Option<NodeId>> = vec![None; self.params.segments().len()];
        let seg = |tape: &mut Tape<F>, idx: usize, nodes: &mut Vec<Option<NodeId>>| -> NodeId {
            if let Some(id) = nodes[idx] {
                return id;
            }
            let s = &self.params.segments()[idx];
            let t = Tensor::new(s.shape.clone(), values[s.offset..s.offset + s.len()].to_vec())
                .expect("segment tensor");
            let id = tape.param_leaf(t, s.offset);
            nodes[idx] = Some(id);
            id
        };

        let logits = match self.config.family {
            Family::Mlp => {
                let mut h = x;
                let mut si = 0usize;
                for l in 0..self.config.depth {
                    let name = format!("layer{l}");
                    let w = seg(&mut tape, si, &mut seg_nodes);
                    let b = seg(&mut tape, si + 1, &mut seg_nodes);
                    si += 2;
                    h = tape.matmul(&name, h, w)?;
                    h = tape.bias_add(&name, h, b)?;
                    h = self.activation(&mut tape, h);
                    h = self.dropout_site(&mut tape, h, l as u64, ctx)?;
                }
                let w = seg(&mut tape, si, &mut seg_nodes);
                let b = seg(&mut tape, si + 1, &mut seg_nodes);
                let z = tape.matmul("readout", h, w)?;
                tape.bias_add("readout", z, b)?
            }
            Family::ResidualMlp => {
                let mut si = 0usize;
                let w = seg(&mut tape, si, &mut seg_nodes);
                let b = seg(&mut tape, si + 1, &mut seg_nodes);
                si += 2;
                let mut h = tape.matmul("proj", x, w)?;
                h = tape.bias_add("proj", h, b)?;
                for blk in 0..self.config.depth {
                    let rate = sd_rate_for_layer(ctx.sd_rate, blk, self.config.depth)?;
                    let keeps = match ctx.mode {
                        Mode::Eval => None,
                        Mode::Train => {
                            if rate == 0.0 {
                                Some(vec![true; n])
                            } else {
                                let mut rng = CounterRng::for_stream(
                                    ctx.mask_seed,
                                    StreamDomain::StochasticDepth,
                                    blk as u64,
                                    ctx.iteration,
                                );
                                Some(sd_keep_decisions(n, rate, self.config.sd_granularity, &mut rng))
                            }
                        }
                    };
                    if let Some(keeps) = &keeps {
                        if keeps.iter().all(|k| !k) {
                            si += 6;
                            continue; // whole block skipped: exact identity
                        }
                    }
                    let name = format!("block{blk}");
                    let fc1w = seg(&mut tape, si, &mut seg_nodes);
                    let fc1b = seg(&mut tape, si + 1, &mut seg_nodes);
                    let gamma = seg(&mut tape, si + 2, &mut seg_nodes);
                    let beta = seg(&mut tape, si + 3, &mut seg_nodes);
                    let fc2w = seg(&mut tape, si + 4, &mut seg_nodes);
                    let fc2b = seg(&mut tape, si + 5, &mut seg_nodes);
                    si += 6;
                    let mut body = tape.matmul(&name, h, fc1w)?;
                    body = tape.bias_add(&name, body, fc1b)?;
                    body = tape.layer_norm(&name, body, gamma, beta)?;
                    body = self.activation(&mut tape, body);
                    body = self.dropout_site(&mut tape, body, blk as u64, ctx)?;
                    body = tape.matmul(&name, body, fc2w)?;
                    body = tape.bias_add(&name, body, fc2b)?;

                    match ctx.mode {
                        Mode::Eval => {
                            if rate > 0.0 {
                                let m = self.config.hidden_dim;
                                let scale = Tensor::filled(vec![n, m], fc::<F>(1.0 - rate));
                                body = tape.mul_mask(&name, body, scale)?;
                            }
                            h = tape.add(&name, h, body)?;
                        }
                        Mode::Train => {
                            let keeps = keeps.expect("train keeps");
                            if keeps.iter().all(|k| *k) {
                                h = tape.add(&name, h, body)?;
                            } else {
                                let m = self.config.hidden_dim;
                                let mut mask = vec![F::zero(); n * m];
                                for (i, keep) in keeps.iter().enumerate() {
                                    if *keep {
                                        for v in &mut mask[i * m..(i + 1) * m] {
                                            *v = F::one();
                                        }
                                    }
                                }
                                let mask = Tensor::new(vec![n, m], mask).expect("sd mask");
                                body = tape.mul_mask(&name, body, mask)?;
                                h = tape.add(&name, h, body)?;
                            }
                        }
                    }
                }
                let w = seg(&mut tape, si, &mut seg_nodes);
                let b = seg(&mut tape, si + 1, &mut seg_nodes);
                let z = tape.matmul("readout", h, w)?;
                tape.bias_add("readout", z, b)?
            }
        };

        let loss_node = tape.softmax_cross_entropy("loss", logits, &batch.targets)?;
        let loss = tape.value(loss_node).values()[0];
        if !loss.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                iteration: ctx.iteration,
                value: loss.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(ForwardPass {
            loss,
            tape,
            loss_node,
            logits_node: logits,
        })
    }

    fn activation(&self, tape: &mut Tape<F>, x: NodeId) -> NodeId {
        match self.config.activation {
            Activation::Relu => tape.relu(x),
            Activation::Gelu => tape.gelu(x),
        }
    }

    fn dropout_site(
        &self,
        tape: &mut Tape<F>,
        x: NodeId,
        layer: u64,
        ctx: &ForwardCtx,
    ) -> Result<NodeId, CoreError> {
        if ctx.mode == Mode::Eval || ctx.dropout_rate == 0.0 {
            return Ok(x);
        }
        let mut rng = CounterRng::for_stream(
            ctx.mask_seed,
            StreamDomain::DropoutMask,
            layer,
            ctx.iteration,
        );
        let shape = tape.value(x).shape().to_vec();
        let mask = dropout_mask::<F>(&shape, ctx.dropout_rate, &mut rng);
        tape.mul_mask(&format!("dropout{layer}"), x, mask)
    }
}

/// Central-difference gradient of the model's loss at a fixed context.
///
/// The context freezes every mask and skip decision (they are pure
/// functions of `(mask_seed, layer, iteration)`), so the loss is
/// deterministic; that is verified before differencing.
pub fn finite_difference_gradient<F: Scalar>(
    model: &Model<F>,
    batch: &Batch<F>,
    ctx: &ForwardCtx,
    eps: F,
) -> Result<GradientVector<F>, CoreError> {
    finite_difference(model.params().values(), eps, |w| {
        Ok(model.forward_with_values(w, batch, ctx)?.loss)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp_config() -> ModelConfig {
        ModelConfig {
            family: Family::Mlp,
            input_dim: 20,
            output_dim: 10,
            hidden_dim: 64,
            depth: 2,
            activation: Activation::Gelu,
            init_seed: 1,
            init_std: 0.02,
            sd_granularity: SdGranularity::PerBatch,
        }
    }

    fn small_batch(input_dim: usize, n: usize, classes: usize, seed: u64) -> Batch<f64> {
        let mut rng = CounterRng::new(seed, 1000);
        let inputs: Vec<f64> = (0..n * input_dim).map(|_| rng.next_normal()).collect();
        let targets: Vec<usize> = (0..n).map(|i| i % classes).collect();
        Batch {
            inputs: Tensor::new(vec![n, input_dim], inputs).unwrap(),
            targets,
        }
    }

    #[test]
    fn same_config_and_seed_builds_identical_parameters() {
        let a: Model<f64> = build_model(&mlp_config()).unwrap();
        let b: Model<f64> = build_model(&mlp_config()).unwrap();
        assert_eq!(a.params(), b.params());
        let mut other = mlp_config();
        other.init_seed = 2;
        let c: Model<f64> = build_model(&other).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn mlp_parameter_count_matches_layer_list() {
        let m: Model<f64> = build_model(&mlp_config()).unwrap();
        // linear 20->64, linear 64->64, readout 64->10, biases included
        let expect = (20 * 64 + 64) + (64 * 64 + 64) + (64 * 10 + 10);
        assert_eq!(m.param_count(), expect);
        assert_eq!(m.param_count(), 6154);
    }

    #[test]
    fn depth_one_mlp_has_one_hidden_layer_and_one_dropout_site() {
        let mut cfg = mlp_config();
        cfg.depth = 1;
        let m: Model<f64> = build_model(&cfg).unwrap();
        assert_eq!(m.dropout_sites(), 1);
        let names: Vec<&str> = m.params().segments().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            vec!["layer0.weight", "layer0.bias", "readout.weight", "readout.bias"]
        );
    }

    #[test]
    fn init_weights_are_truncated() {
        let m: Model<f64> = build_model(&mlp_config()).unwrap();
        for seg in m.params().segments() {
            if seg.name.ends_with(".weight") {
                let vals = &m.params().values()[seg.offset..seg.offset + seg.len()];
                assert!(vals.iter().all(|v| v.abs() <= 0.04 + 1e-12));
                assert!(vals.iter().any(|v| *v != 0.0));
            }
        }
    }

    #[test]
    fn eval_forward_is_bit_deterministic() {
        let m: Model<f64> = build_model(&mlp_config()).unwrap();
        let batch = small_batch(20, 4, 10, 3);
        let a = m.forward(&batch, &ForwardCtx::eval()).unwrap().loss;
        let b = m.forward(&batch, &ForwardCtx::eval()).unwrap().loss;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn train_with_zero_rates_equals_eval_exactly() {
        for family in [Family::Mlp, Family::ResidualMlp] {
            let mut cfg = mlp_config();
            cfg.family = family;
            cfg.input_dim = 8;
            cfg.hidden_dim = 8;
            cfg.output_dim = 3;
            let m: Model<f64> = build_model(&cfg).unwrap();
            let batch = small_batch(8, 5, 3, 4);
            let train = m.forward(&batch, &ForwardCtx::train(9, 17, 0.0, 0.0)).unwrap();
            let eval = m.forward(&batch, &ForwardCtx::eval()).unwrap();
            assert_eq!(train.loss.to_bits(), eval.loss.to_bits());
        }
    }

    #[test]
    fn train_forward_replays_bit_identically() {
        let mut cfg = mlp_config();
        cfg.family = Family::ResidualMlp;
        cfg.input_dim = 8;
        cfg.hidden_dim = 8;
        cfg.output_dim = 3;
        let m: Model<f64> = build_model(&cfg).unwrap();
        let batch = small_batch(8, 5, 3, 4);
        let ctx = ForwardCtx::train(42, 7, 0.3, 0.4);
        let mut a = m.forward(&batch, &ctx).unwrap();
        let mut b = m.forward(&batch, &ctx).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        let (ga, gb) = (a.backward().unwrap(), b.backward().unwrap());
        assert_eq!(ga.values(), gb.values());
    }

    #[test]
    fn different_iterations_draw_different_masks() {
        let mut cfg = mlp_config();
        cfg.input_dim = 8;
        cfg.hidden_dim = 16;
        cfg.output_dim = 3;
        let m: Model<f64> = build_model(&cfg).unwrap();
        let batch = small_batch(8, 5, 3, 4);
        let a = m.forward(&batch, &ForwardCtx::train(42, 0, 0.5, 0.0)).unwrap().loss;
        let b = m.forward(&batch, &ForwardCtx::train(42, 1, 0.5, 0.0)).unwrap().loss;
        assert_ne!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn backward_matches_finite_differences_on_both_families() {
        // gelu keeps the loss smooth so central differences are reliable
        for seed in 0..5u64 {
            for family in [Family::Mlp, Family::ResidualMlp] {
                let cfg = ModelConfig {
                    family,
                    input_dim: 6,
                    output_dim: 3,
                    hidden_dim: 5,
                    depth: 2,
                    activation: Activation::Gelu,
                    init_seed: seed,
                    init_std: 0.4,
                    sd_granularity: SdGranularity::PerSample,
                };
                let m: Model<f64> = build_model(&cfg).unwrap();
                let batch = small_batch(6, 4, 3, seed + 50);
                // frozen train-mode masks exercise dropout and s.d. paths too
                let ctx = ForwardCtx::train(seed ^ 0xabcd, 3, 0.25, 0.3);
                let fd = finite_difference_gradient(&m, &batch, &ctx, 1e-5).unwrap();
                let mut pass = m.forward(&batch, &ctx).unwrap();
                let grad = pass.backward().unwrap();
                crate::autodiff::tests::assert_grad_close(grad.values(), fd.values(), 1e-6);
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = mlp_config();
        cfg.depth = 0;
        assert!(build_model::<f64>(&cfg).is_err());
        let mut cfg = mlp_config();
        cfg.output_dim = 1;
        assert!(build_model::<f64>(&cfg).is_err());
    }

    #[test]
    fn input_width_mismatch_names_layer() {
        let m: Model<f64> = build_model(&mlp_config()).unwrap();
        let batch = small_batch(19, 2, 10, 0);
        match m.forward(&batch, &ForwardCtx::eval()) {
            Err(CoreError::ShapeMismatch { layer, .. }) => assert_eq!(layer, "input"),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }
}
