//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A `Tape` records a forward pass as a flat list of nodes (define-by-run);
//! `backward` walks the list in reverse and accumulates gradients into a
//! flat [`GradientVector`] aligned with the model's parameter layout.
//!
//! The primitive set is fixed: matmul, bias-add, elementwise add/mul, ReLU,
//! GELU (tanh approximation), layer normalization, softmax-cross-entropy,
//! and multiply-by-constant-mask (dropout and stochastic-depth scaling).

use crate::error::CoreError;
use crate::params::GradientVector;
use crate::scalar::{fc, Scalar};
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Forward-pass mode. Eval consumes no randomness and is a pure function of
/// parameters and inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op<F: Scalar> {
    /// Input leaf. `param_offset` is the flat offset into the parameter
    /// vector when the leaf is a trainable parameter.
    Leaf { param_offset: Option<usize> },
    Matmul(NodeId, NodeId),
    BiasAdd(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        normalized: Tensor<F>,
        inv_std: Vec<F>,
    },
    /// Elementwise multiply by a constant (non-differentiated) mask.
    MulMask { x: NodeId, mask: Tensor<F> },
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Tensor<F>,
    },
}

#[derive(Debug, Clone)]
struct Node<F: Scalar> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Wengert list for one forward pass.
#[derive(Debug)]
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
    param_len: usize,
    consumed: bool,
}

impl<F: Scalar> Tape<F> {
    /// `param_len` is the total flattened parameter length gradients are
    /// accumulated into.
    pub fn new(param_len: usize) -> Self {
        Tape {
            nodes: Vec::new(),
            param_len,
            consumed: false,
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    /// Constant input leaf (no gradient).
    pub fn leaf(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Leaf { param_offset: None })
    }

    /// Trainable parameter leaf; `offset` is its flat position in the
    /// parameter vector.
    pub fn param_leaf(&mut self, value: Tensor<F>, offset: usize) -> NodeId {
        self.push(
            value,
            Op::Leaf {
                param_offset: Some(offset),
            },
        )
    }

    /// `[n,k] x [k,m] -> [n,m]`.
    pub fn matmul(&mut self, layer: &str, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        let (n, k) = (av.rows(), av.cols());
        let (k2, m) = (bv.rows(), bv.cols());
        if k != k2 {
            return Err(CoreError::ShapeMismatch {
                layer: layer.to_string(),
                detail: format!("matmul {:?} x {:?}", av.shape(), bv.shape()),
            });
        }
        let mut out = vec![F::zero(); n * m];
        let (ad, bd) = (av.values(), bv.values());
        for i in 0..n {
            for p in 0..k {
                let aip = ad[i * k + p];
                let brow = &bd[p * m..(p + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] = orow[j] + aip * brow[j];
                }
            }
        }
        let value = Tensor::new(vec![n, m], out).expect("matmul output shape");
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    /// Add a `[m]` bias to every row of `[n,m]`.
    pub fn bias_add(&mut self, layer: &str, x: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        let (xv, bv) = (&self.nodes[x].value, &self.nodes[b].value);
        let (n, m) = (xv.rows(), xv.cols());
        if bv.len() != m {
            return Err(CoreError::ShapeMismatch {
                layer: layer.to_string(),
                detail: format!("bias of len {} on rows of {}", bv.len(), m),
            });
        }
        let mut out = xv.values().to_vec();
        let bd = bv.values();
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = out[i * m + j] + bd[j];
            }
        }
        let value = Tensor::new(vec![n, m], out).expect("bias_add output shape");
        Ok(self.push(value, Op::BiasAdd(x, b)))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, layer: &str, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        self.zip_op(layer, a, b, true)
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, layer: &str, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        self.zip_op(layer, a, b, false)
    }

    fn zip_op(&mut self, layer: &str, a: NodeId, b: NodeId, add: bool) -> Result<NodeId, CoreError> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        if av.shape() != bv.shape() {
            return Err(CoreError::ShapeMismatch {
                layer: layer.to_string(),
                detail: format!("{:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let out: Vec<F> = av
            .values()
            .iter()
            .zip(bv.values())
            .map(|(x, y)| if add { *x + *y } else { *x * *y })
            .collect();
        let value = Tensor::new(av.shape().to_vec(), out).expect("zip output shape");
        Ok(self.push(value, if add { Op::Add(a, b) } else { Op::Mul(a, b) }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let out: Vec<F> = xv
            .values()
            .iter()
            .map(|v| if *v > F::zero() { *v } else { F::zero() })
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), out).expect("relu shape");
        self.push(value, Op::Relu(x))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let out: Vec<F> = xv.values().iter().map(|v| gelu_tanh(*v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), out).expect("gelu shape");
        self.push(value, Op::Gelu(x))
    }

    /// Row-wise layer normalization with learned scale and shift.
    pub fn layer_norm(
        &mut self,
        layer: &str,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> Result<NodeId, CoreError> {
        let xv = &self.nodes[x].value;
        let (n, m) = (xv.rows(), xv.cols());
        let gv = &self.nodes[gamma].value;
        let bv = &self.nodes[beta].value;
        if gv.len() != m || bv.len() != m {
            return Err(CoreError::ShapeMismatch {
                layer: layer.to_string(),
                detail: format!("layernorm scale/shift of {}/{} on width {}", gv.len(), bv.len(), m),
            });
        }
        let eps = fc::<F>(LAYERNORM_EPS);
        let inv_m = F::one() / fc::<F>(m as f64);
        let xd = xv.values();
        let mut normalized = vec![F::zero(); n * m];
        let mut inv_std = vec![F::zero(); n];
        let mut out = vec![F::zero(); n * m];
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let mut mean = F::zero();
            for v in row {
                mean = mean + *v;
            }
            mean = mean * inv_m;
            let mut var = F::zero();
            for v in row {
                let d = *v - mean;
                var = var + d * d;
            }
            var = var * inv_m;
            let istd = F::one() / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..m {
                let xh = (row[j] - mean) * istd;
                normalized[i * m + j] = xh;
                out[i * m + j] = gv.values()[j] * xh + bv.values()[j];
            }
        }
        let value = Tensor::new(vec![n, m], out).expect("layernorm shape");
        let normalized = Tensor::new(vec![n, m], normalized).expect("layernorm cache shape");
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
        ))
    }

    /// Elementwise multiply by a constant mask of the same shape. Used for
    /// dropout masks and stochastic-depth keep/scale factors; the mask gets
    /// no gradient.
    pub fn mul_mask(&mut self, layer: &str, x: NodeId, mask: Tensor<F>) -> Result<NodeId, CoreError> {
        let xv = &self.nodes[x].value;
        if xv.shape() != mask.shape() {
            return Err(CoreError::ShapeMismatch {
                layer: layer.to_string(),
                detail: format!("mask {:?} on {:?}", mask.shape(), xv.shape()),
            });
        }
        let out: Vec<F> = xv
            .values()
            .iter()
            .zip(mask.values())
            .map(|(v, m)| *v * *m)
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), out).expect("mask shape");
        Ok(self.push(value, Op::MulMask { x, mask }))
    }

    /// Mean cross-entropy of row-wise softmax against integer targets.
    /// Output is a `[1]` scalar node.
    pub fn softmax_cross_entropy(
        &mut self,
        layer: &str,
        logits: NodeId,
        targets: &[usize],
    ) -> Result<NodeId, CoreError> {
        let lv = &self.nodes[logits].value;
        let (n, m) = (lv.rows(), lv.cols());
        if targets.len() != n {
            return Err(CoreError::ShapeMismatch {
                layer: layer.to_string(),
                detail: format!("{} targets for {} rows", targets.len(), n),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= m) {
            return Err(CoreError::ShapeMismatch {
                layer: layer.to_string(),
                detail: format!("target class {bad} out of range for {m} classes"),
            });
        }
        let ld = lv.values();
        let mut probs = vec![F::zero(); n * m];
        let mut total = F::zero();
        for i in 0..n {
            let row = &ld[i * m..(i + 1) * m];
            let mut maxv = row[0];
            for v in row {
                if *v > maxv {
                    maxv = *v;
                }
            }
            let mut sum = F::zero();
            for v in row {
                sum = sum + (*v - maxv).exp();
            }
            let lse = maxv + sum.ln();
            for j in 0..m {
                probs[i * m + j] = (row[j] - lse).exp();
            }
            total = total + (lse - row[targets[i]]);
        }
        let loss = total / fc::<F>(n as f64);
        let probs = Tensor::new(vec![n, m], probs).expect("probs shape");
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse pass from the scalar node `loss`, accumulating parameter
    /// gradients. Consumes the tape; calling twice is an error.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradientVector<F>, CoreError> {
        if self.consumed {
            return Err(CoreError::TapeConsumed);
        }
        self.consumed = true;
        assert_eq!(self.nodes[loss].value.len(), 1, "backward needs a scalar loss node");

        let mut adjoint: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        adjoint[loss] = Some(vec![F::one()]);
        let mut grad = GradientVector::zeros(self.param_len);

        for id in (0..=loss).rev() {
            let d = match adjoint[id].take() {
                Some(d) => d,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Leaf { param_offset } => {
                    if let Some(off) = *param_offset {
                        let gslice = &mut grad.values_mut()[off..off + d.len()];
                        for (g, dv) in gslice.iter_mut().zip(&d) {
                            *g = *g + *dv;
                        }
                    }
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let av = &self.nodes[a].value;
                    let bv = &self.nodes[b].value;
                    let (n, k) = (av.rows(), av.cols());
                    let m = bv.cols();
                    // dA = d @ B^T
                    {
                        let da = acc_entry(&mut adjoint, a, n * k);
                        let bd = bv.values();
                        for i in 0..n {
                            for j in 0..m {
                                let dij = d[i * m + j];
                                for p in 0..k {
                                    da[i * k + p] = da[i * k + p] + dij * bd[p * m + j];
                                }
                            }
                        }
                    }
                    // dB = A^T @ d
                    {
                        let db = acc_entry(&mut adjoint, b, k * m);
                        let ad = av.values();
                        for i in 0..n {
                            for p in 0..k {
                                let aip = ad[i * k + p];
                                for j in 0..m {
                                    db[p * m + j] = db[p * m + j] + aip * d[i * m + j];
                                }
                            }
                        }
                    }
                }
                Op::BiasAdd(x, b) => {
                    let (x, b) = (*x, *b);
                    let m = self.nodes[b].value.len();
                    let n = d.len() / m;
                    {
                        let dx = acc_entry(&mut adjoint, x, d.len());
                        for (dst, src) in dx.iter_mut().zip(&d) {
                            *dst = *dst + *src;
                        }
                    }
                    {
                        let db = acc_entry(&mut adjoint, b, m);
                        for i in 0..n {
                            for j in 0..m {
                                db[j] = db[j] + d[i * m + j];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for t in [a, b] {
                        let dt = acc_entry(&mut adjoint, t, d.len());
                        for (dst, src) in dt.iter_mut().zip(&d) {
                            *dst = *dst + *src;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    {
                        let bv = self.nodes[b].value.values().to_vec();
                        let da = acc_entry(&mut adjoint, a, d.len());
                        for i in 0..d.len() {
                            da[i] = da[i] + d[i] * bv[i];
                        }
                    }
                    {
                        let av = self.nodes[a].value.values().to_vec();
                        let db = acc_entry(&mut adjoint, b, d.len());
                        for i in 0..d.len() {
                            db[i] = db[i] + d[i] * av[i];
                        }
                    }
                }
                Op::Relu(x) => {
                    let x = *x;
                    let xv = self.nodes[x].value.values().to_vec();
                    let dx = acc_entry(&mut adjoint, x, d.len());
                    for i in 0..d.len() {
                        if xv[i] > F::zero() {
                            dx[i] = dx[i] + d[i];
                        }
                    }
                }
                Op::Gelu(x) => {
                    let x = *x;
                    let xv = self.nodes[x].value.values().to_vec();
                    let dx = acc_entry(&mut adjoint, x, d.len());
                    for i in 0..d.len() {
                        dx[i] = dx[i] + d[i] * gelu_tanh_grad(xv[i]);
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let normalized = normalized.clone();
                    let inv_std = inv_std.clone();
                    let m = self.nodes[gamma].value.len();
                    let n = d.len() / m;
                    let gvals = self.nodes[gamma].value.values().to_vec();
                    let inv_m = F::one() / fc::<F>(m as f64);
                    {
                        let dg = acc_entry(&mut adjoint, gamma, m);
                        for i in 0..n {
                            for j in 0..m {
                                dg[j] = dg[j] + d[i * m + j] * normalized.values()[i * m + j];
                            }
                        }
                    }
                    {
                        let db = acc_entry(&mut adjoint, beta, m);
                        for i in 0..n {
                            for j in 0..m {
                                db[j] = db[j] + d[i * m + j];
                            }
                        }
                    }
                    {
                        let dx = acc_entry(&mut adjoint, x, n * m);
                        for i in 0..n {
                            let mut mean_dxh = F::zero();
                            let mut mean_dxh_xh = F::zero();
                            for j in 0..m {
                                let dxh = d[i * m + j] * gvals[j];
                                let xh = normalized.values()[i * m + j];
                                mean_dxh = mean_dxh + dxh;
                                mean_dxh_xh = mean_dxh_xh + dxh * xh;
                            }
                            mean_dxh = mean_dxh * inv_m;
                            mean_dxh_xh = mean_dxh_xh * inv_m;
                            for j in 0..m {
                                let dxh = d[i * m + j] * gvals[j];
                                let xh = normalized.values()[i * m + j];
                                dx[i * m + j] = dx[i * m + j]
                                    + inv_std[i] * (dxh - mean_dxh - xh * mean_dxh_xh);
                            }
                        }
                    }
                }
                Op::MulMask { x, mask } => {
                    let x = *x;
                    let mv = mask.values().to_vec();
                    let dx = acc_entry(&mut adjoint, x, d.len());
                    for i in 0..d.len() {
                        dx[i] = dx[i] + d[i] * mv[i];
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let logits = *logits;
                    let targets = targets.clone();
                    let probs = probs.clone();
                    let n = targets.len();
                    let m = probs.len() / n;
                    let scale = d[0] / fc::<F>(n as f64);
                    let dl = acc_entry(&mut adjoint, logits, n * m);
                    for i in 0..n {
                        for j in 0..m {
                            let indicator = if targets[i] == j { F::one() } else { F::zero() };
                            dl[i * m + j] =
                                dl[i * m + j] + scale * (probs.values()[i * m + j] - indicator);
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

fn acc_entry<F: Scalar>(adjoint: &mut [Option<Vec<F>>], id: NodeId, len: usize) -> &mut Vec<F> {
    adjoint[id].get_or_insert_with(|| vec![F::zero(); len])
}

/// GELU, tanh approximation.
pub fn gelu_tanh<F: Scalar>(x: F) -> F {
    let half = fc::<F>(0.5);
    let c = fc::<F>(SQRT_2_OVER_PI);
    let a = fc::<F>(0.044715);
    let u = c * (x + a * x * x * x);
    half * x * (F::one() + u.tanh())
}

/// Derivative of the tanh-approximated GELU.
pub fn gelu_tanh_grad<F: Scalar>(x: F) -> F {
    let half = fc::<F>(0.5);
    let c = fc::<F>(SQRT_2_OVER_PI);
    let a = fc::<F>(0.044715);
    let three = fc::<F>(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (F::one() + three * a * x * x);
    half * (F::one() + t) + half * x * (F::one() - t * t) * du
}

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

/// Central-difference gradient of an arbitrary deterministic loss.
///
/// Checks determinism by evaluating the unperturbed loss twice; a mismatch
/// means randomness was not frozen and is reported as an error.
pub fn finite_difference<F, L>(w: &[F], eps: F, mut loss: L) -> Result<GradientVector<F>, CoreError>
where
    F: Scalar,
    L: FnMut(&[F]) -> Result<F, CoreError>,
{
    if eps <= F::zero() {
        return Err(CoreError::InvalidConfig("finite difference eps must be positive".into()));
    }
    let l0 = loss(w)?;
    let l1 = loss(w)?;
    if l0 != l1 {
        return Err(CoreError::NondeterministicLoss);
    }
    let mut buf = w.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    let two = fc::<F>(2.0);
    for i in 0..w.len() {
        let orig = buf[i];
        buf[i] = orig + eps;
        let lp = loss(&buf)?;
        buf[i] = orig - eps;
        let lm = loss(&buf)?;
        buf[i] = orig;
        grad.push((lp - lm) / (two * eps));
    }
    Ok(GradientVector::from_values(grad))
}
