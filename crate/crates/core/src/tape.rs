//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each recorded node owns its
//! value; operations are appended in execution order, so the node list is
//! already topologically sorted and backward is a single reverse sweep.

use crate::element::Element;
use crate::error::{invalid, Result, TensorError};
use crate::kernels::{self, ConvGeometry, ConvShape};
use crate::tensor::Tensor;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// Batch statistics produced by a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance used for normalization.
    pub var: Vec<f64>,
    /// Elements per channel.
    pub count: usize,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    ScaledSigmoid(usize),
    Softmax {
        input: usize,
        axis: usize,
    },
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    Conv3d {
        x: usize,
        w: usize,
        b: Option<usize>,
        shape: ConvShape,
    },
    TConv3d {
        x: usize,
        w: usize,
        b: Option<usize>,
        shape: ConvShape,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Mse {
        pred: usize,
        target: usize,
    },
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Reshape(..) => "reshape",
            Op::Sum(..) => "reduce_sum",
            Op::Mean(..) => "reduce_mean",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::ScaledSigmoid(..) => "scaled_sigmoid",
            Op::Softmax { .. } => "softmax",
            Op::Linear { .. } => "linear",
            Op::Conv3d { .. } => "conv3d",
            Op::TConv3d { .. } => "tconv3d",
            Op::BatchNorm { .. } => "batchnorm3d",
            Op::Mse { .. } => "mse_loss",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Summary of one backward sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackwardStats {
    /// Non-leaf operations whose backward rule ran.
    pub ops_visited: usize,
    /// Leaves that received a gradient.
    pub leaves_updated: usize,
}

pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn spatial5(shape: &[usize], op: &'static str) -> Result<(usize, usize, [usize; 3])> {
    if shape.len() != 5 {
        return Err(invalid(op, format!("expected (N, C, D, H, W) input, got {shape:?}")));
    }
    Ok((shape[0], shape[1], [shape[2], shape[3], shape[4]]))
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operation names in recording order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var {
            tape: self.id,
            index,
        })
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.check(v).expect("var from another tape")].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.check(v).ok().and_then(|i| self.nodes[i].grad.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        let i = self.check(v).ok()?;
        self.nodes[i].grad.take()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.check(v).map(|i| self.nodes[i].requires_grad).unwrap_or(false)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn rg(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].requires_grad)
    }

    // ---- elementwise -------------------------------------------------

    fn broadcast_shape(&self, op: &'static str, a: usize, b: usize) -> Result<Vec<usize>> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        let (na, nb) = (self.nodes[a].value.numel(), self.nodes[b].value.numel());
        if sa == sb {
            Ok(sa.to_vec())
        } else if na == 1 {
            Ok(sb.to_vec())
        } else if nb == 1 {
            Ok(sa.to_vec())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<(Tensor<T>, usize, usize)> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let shape = self.broadcast_shape(op, ia, ib)?;
        let (va, vb) = (self.nodes[ia].value.data(), self.nodes[ib].value.data());
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|i| {
                let x = if va.len() == 1 { va[0] } else { va[i] };
                let y = if vb.len() == 1 { vb[0] } else { vb[i] };
                f(x, y)
            })
            .collect();
        Ok((Tensor::new(shape, data)?, ia, ib))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, ia, ib) = self.zip_with("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[ia, ib]);
        self.push(t, Op::Add(ia, ib), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, ia, ib) = self.zip_with("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[ia, ib]);
        self.push(t, Op::Sub(ia, ib), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, ia, ib) = self.zip_with("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[ia, ib]);
        self.push(t, Op::Mul(ia, ib), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let c = T::from_f64(factor);
        let t = self.nodes[ia].value.map(|v| v * c);
        let rg = self.rg(&[ia]);
        self.push(t, Op::Scale(ia, factor), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (self.nodes[ia].value.shape(), self.nodes[ib].value.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::ZERO; m * n];
        T::gemm(
            m,
            k,
            n,
            T::ONE,
            self.nodes[ia].value.data(),
            false,
            self.nodes[ib].value.data(),
            false,
            T::ZERO,
            &mut out,
        );
        let rg = self.rg(&[ia, ib]);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(ia, ib), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        let t = self.nodes[ia].value.reshape(shape)?;
        let rg = self.rg(&[ia]);
        self.push(t, Op::Reshape(ia), rg)
    }

    /// Flatten `(N, ...)` to `(N, prod(...))` in row-major order.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.is_empty() {
            return Err(invalid("flatten", "scalar input"));
        }
        let rest: usize = shape[1..].iter().product();
        self.reshape(a, &[shape[0], rest])
    }

    pub fn reduce_sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let s = self.nodes[ia].value.sum_f64();
        let rg = self.rg(&[ia]);
        self.push(Tensor::scalar(T::from_f64(s)), Op::Sum(ia), rg)
    }

    pub fn reduce_mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let n = self.nodes[ia].value.numel();
        if n == 0 {
            return Err(invalid("reduce_mean", "empty tensor"));
        }
        let s = self.nodes[ia].value.sum_f64() / n as f64;
        let rg = self.rg(&[ia]);
        self.push(Tensor::scalar(T::from_f64(s)), Op::Mean(ia), rg)
    }

    // ---- activations -------------------------------------------------

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let s = T::from_f64(slope);
        let t = self.nodes[ia]
            .value
            .map(|v| if v >= T::ZERO { v } else { s * v });
        let rg = self.rg(&[ia]);
        self.push(t, Op::LeakyRelu(ia, slope), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let t = self
            .nodes[ia]
            .value
            .map(|v| T::from_f64(sigmoid_f64(v.to_f64())));
        let rg = self.rg(&[ia]);
        self.push(t, Op::Sigmoid(ia), rg)
    }

    /// `2 * sigmoid(x) - 1`, with range `(-1, 1)`.
    pub fn scaled_sigmoid(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let t = self
            .nodes[ia]
            .value
            .map(|v| T::from_f64((v.to_f64() * 0.5).tanh()));
        let rg = self.rg(&[ia]);
        self.push(t, Op::ScaledSigmoid(ia), rg)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ia = self.check(a)?;
        let shape = self.nodes[ia].value.shape().to_vec();
        if axis >= shape.len() {
            return Err(invalid("softmax", format!("axis {axis} invalid for shape {shape:?}")));
        }
        let out = softmax_along(self.nodes[ia].value.data(), &shape, axis);
        let rg = self.rg(&[ia]);
        self.push(Tensor::new(shape, out)?, Op::Softmax { input: ia, axis }, rg)
    }

    /// `x (N, F) @ w (K, F)^T + b (K)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let ib = b.map(|b| self.check(b)).transpose()?;
        let (sx, sw) = (self.nodes[ix].value.shape(), self.nodes[iw].value.shape());
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let (n, f, k) = (sx[0], sx[1], sw[0]);
        if let Some(ib) = ib {
            if self.nodes[ib].value.shape() != [k] {
                return Err(TensorError::ShapeMismatch {
                    op: "linear",
                    lhs: vec![k],
                    rhs: self.nodes[ib].value.shape().to_vec(),
                });
            }
        }
        let mut out = vec![T::ZERO; n * k];
        T::gemm(
            n,
            f,
            k,
            T::ONE,
            self.nodes[ix].value.data(),
            false,
            self.nodes[iw].value.data(),
            true,
            T::ZERO,
            &mut out,
        );
        if let Some(ib) = ib {
            let bias = self.nodes[ib].value.data();
            for row in out.chunks_mut(k) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        let mut deps = vec![ix, iw];
        deps.extend(ib);
        let rg = self.rg(&deps);
        self.push(Tensor::new(vec![n, k], out)?, Op::Linear { x: ix, w: iw, b: ib }, rg)
    }

    // ---- convolution -------------------------------------------------

    /// 3D convolution. `w` is `(C_out, C_in, kD, kH, kW)`, `b` is `(C_out,)`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let ib = b.map(|b| self.check(b)).transpose()?;
        let (batch, cin, dims) = spatial5(self.nodes[ix].value.shape(), "conv3d")?;
        let ws = self.nodes[iw].value.shape().to_vec();
        if ws.len() != 5 || ws[1] != cin || ws[2..] != geom.kernel {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                lhs: self.nodes[ix].value.shape().to_vec(),
                rhs: ws,
            });
        }
        let cout = ws[0];
        self.check_bias("conv3d", ib, cout)?;
        let out_dims = geom.conv_output(dims).ok_or_else(|| {
            invalid("conv3d", format!("non-positive output extent for input {dims:?} and {geom:?}"))
        })?;
        let shape = ConvShape {
            batch,
            fine_channels: cin,
            fine_dims: dims,
            coarse_channels: cout,
            coarse_dims: out_dims,
            geom,
        };
        let out = kernels::conv3d_forward(
            &shape,
            self.nodes[ix].value.data(),
            self.nodes[iw].value.data(),
            ib.map(|i| self.nodes[i].value.data()),
        );
        let mut deps = vec![ix, iw];
        deps.extend(ib);
        let rg = self.rg(&deps);
        let t = Tensor::new(vec![batch, cout, out_dims[0], out_dims[1], out_dims[2]], out)?;
        self.push(t, Op::Conv3d { x: ix, w: iw, b: ib, shape }, rg)
    }

    /// 3D transposed convolution. `w` is `(C_in, C_out, kD, kH, kW)`.
    pub fn tconv3d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let (ix, iw) = (self.check(x)?, self.check(w)?);
        let ib = b.map(|b| self.check(b)).transpose()?;
        let (batch, cin, dims) = spatial5(self.nodes[ix].value.shape(), "tconv3d")?;
        let ws = self.nodes[iw].value.shape().to_vec();
        if ws.len() != 5 || ws[0] != cin || ws[2..] != geom.kernel {
            return Err(TensorError::ShapeMismatch {
                op: "tconv3d",
                lhs: self.nodes[ix].value.shape().to_vec(),
                rhs: ws,
            });
        }
        let cout = ws[1];
        self.check_bias("tconv3d", ib, cout)?;
        let out_dims = geom.tconv_output(dims).ok_or_else(|| {
            invalid("tconv3d", format!("non-positive output extent for input {dims:?} and {geom:?}"))
        })?;
        let shape = ConvShape {
            batch,
            fine_channels: cout,
            fine_dims: out_dims,
            coarse_channels: cin,
            coarse_dims: dims,
            geom,
        };
        let out = kernels::tconv3d_forward(
            &shape,
            self.nodes[ix].value.data(),
            self.nodes[iw].value.data(),
            ib.map(|i| self.nodes[i].value.data()),
        );
        let mut deps = vec![ix, iw];
        deps.extend(ib);
        let rg = self.rg(&deps);
        let t = Tensor::new(vec![batch, cout, out_dims[0], out_dims[1], out_dims[2]], out)?;
        self.push(t, Op::TConv3d { x: ix, w: iw, b: ib, shape }, rg)
    }

    fn check_bias(&self, op: &'static str, ib: Option<usize>, channels: usize) -> Result<()> {
        if let Some(ib) = ib {
            let s = self.nodes[ib].value.shape();
            if s != [channels] {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: vec![channels],
                    rhs: s.to_vec(),
                });
            }
        }
        Ok(())
    }

    // ---- normalization -----------------------------------------------

    fn bn_common(&self, x: usize, gamma: usize, beta: usize) -> Result<(usize, usize, usize)> {
        let s = self.nodes[x].value.shape();
        if s.len() < 2 {
            return Err(invalid("batchnorm3d", format!("expected (N, C, ...) input, got {s:?}")));
        }
        let (n, c) = (s[0], s[1]);
        let spatial: usize = s[2..].iter().product();
        for p in [gamma, beta] {
            if self.nodes[p].value.shape() != [c] {
                return Err(TensorError::ShapeMismatch {
                    op: "batchnorm3d",
                    lhs: vec![c],
                    rhs: self.nodes[p].value.shape().to_vec(),
                });
            }
        }
        Ok((n, c, spatial))
    }

    fn bn_apply(
        &mut self,
        ix: usize,
        ig: usize,
        ibeta: usize,
        mean: &[f64],
        inv_std: Vec<f64>,
        train: bool,
    ) -> Result<Var> {
        let (n, c, spatial) = self.bn_common(ix, ig, ibeta)?;
        let xs = self.nodes[ix].value.data();
        let g = self.nodes[ig].value.data();
        let bt = self.nodes[ibeta].value.data();
        let mut xhat = vec![T::ZERO; xs.len()];
        let mut out = vec![T::ZERO; xs.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * spatial;
                let (m, is) = (mean[ch], inv_std[ch]);
                let (gv, bv) = (g[ch].to_f64(), bt[ch].to_f64());
                for i in off..off + spatial {
                    let h = (xs[i].to_f64() - m) * is;
                    xhat[i] = T::from_f64(h);
                    out[i] = T::from_f64(gv * h + bv);
                }
            }
        }
        let shape = self.nodes[ix].value.shape().to_vec();
        let rg = self.rg(&[ix, ig, ibeta]);
        self.push(
            Tensor::new(shape, out)?,
            Op::BatchNorm {
                x: ix,
                gamma: ig,
                beta: ibeta,
                xhat,
                inv_std,
                train,
            },
            rg,
        )
    }

    /// Batch normalization with batch statistics over `(N, spatial...)`.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats)> {
        let (ix, ig, ib) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        let (n, c, spatial) = self.bn_common(ix, ig, ib)?;
        if n < 2 {
            return Err(invalid("batchnorm3d", "training mode requires a batch of at least 2"));
        }
        let xs = self.nodes[ix].value.data();
        let count = n * spatial;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for b in 0..n {
                let off = (b * c + ch) * spatial;
                s += xs[off..off + spatial].iter().map(|v| v.to_f64()).sum::<f64>();
            }
            let m = s / count as f64;
            let mut ss = 0.0;
            for b in 0..n {
                let off = (b * c + ch) * spatial;
                ss += xs[off..off + spatial]
                    .iter()
                    .map(|v| {
                        let d = v.to_f64() - m;
                        d * d
                    })
                    .sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = ss / count as f64;
        }
        let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.bn_apply(ix, ig, ib, &mean, inv_std, true)?;
        Ok((out, BatchStats { mean, var, count }))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (ix, ig, ib) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        let (_, c, _) = self.bn_common(ix, ig, ib)?;
        if mean.len() != c || var.len() != c {
            return Err(invalid("batchnorm3d", "running statistics do not match channel count"));
        }
        let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.bn_apply(ix, ig, ib, mean, inv_std, false)
    }

    // ---- losses ------------------------------------------------------

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (ip, it) = (self.check(pred)?, self.check(target)?);
        let (p, t) = (&self.nodes[ip].value, &self.nodes[it].value);
        if p.shape() != t.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mse_loss",
                lhs: p.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        if p.numel() == 0 {
            return Err(invalid("mse_loss", "empty tensors"));
        }
        let s: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| {
                let d = a.to_f64() - b.to_f64();
                d * d
            })
            .sum();
        let loss = s / p.numel() as f64;
        let rg = self.rg(&[ip, it]);
        self.push(Tensor::scalar(T::from_f64(loss)), Op::Mse { pred: ip, target: it }, rg)
    }

    /// Mean cross-entropy of `logits (N, K)` against class indices, via a
    /// max-shifted log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let il = self.check(logits)?;
        let s = self.nodes[il].value.shape();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(invalid(
                "cross_entropy",
                format!("logits {s:?} incompatible with {} labels", labels.len()),
            ));
        }
        let (n, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(invalid("cross_entropy", format!("label {bad} out of range for {k} classes")));
        }
        let z = self.nodes[il].value.data();
        let mut probs = vec![0.0; n * k];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &z[r * k..(r + 1) * k];
            let m = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
            let se: f64 = row.iter().map(|v| (v.to_f64() - m).exp()).sum();
            let lse = m + se.ln();
            total += lse - row[label].to_f64();
            for (j, v) in row.iter().enumerate() {
                probs[r * k + j] = (v.to_f64() - lse).exp();
            }
        }
        let rg = self.rg(&[il]);
        self.push(
            Tensor::scalar(T::from_f64(total / n as f64)),
            Op::CrossEntropy {
                logits: il,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        )
    }

    // ---- backward ----------------------------------------------------

    /// Accumulate `d loss / d leaf` into every gradient-requiring leaf.
    pub fn backward(&mut self, loss: Var) -> Result<BackwardStats> {
        let il = self.check(loss)?;
        let lv = &self.nodes[il].value;
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.nodes[il].requires_grad {
            return Err(TensorError::Detached("no gradient-requiring leaf reaches the loss"));
        }
        let mut adj: Vec<Option<Vec<T>>> = Vec::with_capacity(il + 1);
        adj.resize_with(il + 1, || None);
        adj[il] = Some(vec![T::ONE]);
        let mut stats = BackwardStats {
            ops_visited: 0,
            leaves_updated: 0,
        };
        for i in (0..=il).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(existing) => {
                        for (e, v) in existing.data_mut().iter_mut().zip(&g) {
                            *e += *v;
                        }
                    }
                    None => node.grad = Some(Tensor::new(node.value.shape().to_vec(), g)?),
                }
                stats.leaves_updated += 1;
                continue;
            }
            stats.ops_visited += 1;
            self.backward_op(i, &g, &mut adj)?;
        }
        Ok(stats)
    }

    fn accumulate(&self, adj: &mut [Option<Vec<T>>], target: usize, contrib: Vec<T>) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut adj[target] {
            Some(existing) => {
                for (e, v) in existing.iter_mut().zip(contrib) {
                    *e += v;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    /// Reduce a broadcast gradient back onto an operand of `numel` elements.
    fn unbroadcast(g: Vec<T>, numel: usize) -> Vec<T> {
        if numel == 1 && g.len() != 1 {
            vec![T::from_f64(g.iter().map(|v| v.to_f64()).sum())]
        } else {
            g
        }
    }

    fn backward_op(&self, i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |j: usize| self.nodes[j].value.data();
        let need = |j: usize| self.nodes[j].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::ONE } else { T::ONE };
                if need(*a) {
                    self.accumulate(adj, *a, Self::unbroadcast(g.to_vec(), val(*a).len()));
                }
                if need(*b) {
                    let gb = g.iter().map(|&v| sign * v).collect();
                    self.accumulate(adj, *b, Self::unbroadcast(gb, val(*b).len()));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let pick = |v: &[T], k: usize| if v.len() == 1 { v[0] } else { v[k] };
                if need(*a) {
                    let ga = g.iter().enumerate().map(|(k, &gv)| gv * pick(vb, k)).collect();
                    self.accumulate(adj, *a, Self::unbroadcast(ga, va.len()));
                }
                if need(*b) {
                    let gb = g.iter().enumerate().map(|(k, &gv)| gv * pick(va, k)).collect();
                    self.accumulate(adj, *b, Self::unbroadcast(gb, vb.len()));
                }
            }
            Op::Scale(a, c) => {
                let c = T::from_f64(*c);
                self.accumulate(adj, *a, g.iter().map(|&v| v * c).collect());
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.nodes[*a].value.shape(), self.nodes[*b].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if need(*a) {
                    let mut da = vec![T::ZERO; m * k];
                    T::gemm(m, n, k, T::ONE, g, false, val(*b), true, T::ZERO, &mut da);
                    self.accumulate(adj, *a, da);
                }
                if need(*b) {
                    let mut db = vec![T::ZERO; k * n];
                    T::gemm(k, m, n, T::ONE, val(*a), true, g, false, T::ZERO, &mut db);
                    self.accumulate(adj, *b, db);
                }
            }
            Op::Reshape(a) => self.accumulate(adj, *a, g.to_vec()),
            Op::Sum(a) => {
                let n = val(*a).len();
                self.accumulate(adj, *a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = val(*a).len();
                let v = T::from_f64(g[0].to_f64() / n as f64);
                self.accumulate(adj, *a, vec![v; n]);
            }
            Op::LeakyRelu(a, slope) => {
                let s = T::from_f64(*slope);
                let d = val(*a)
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| if x >= T::ZERO { gv } else { s * gv })
                    .collect();
                self.accumulate(adj, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = node
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gv)| gv * y * (T::ONE - y))
                    .collect();
                self.accumulate(adj, *a, d);
            }
            Op::ScaledSigmoid(a) => {
                let half = T::from_f64(0.5);
                let d = node
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gv)| gv * half * (T::ONE - y * y))
                    .collect();
                self.accumulate(adj, *a, d);
            }
            Op::Softmax { input, axis } => {
                let shape = node.value.shape();
                let y = node.value.data();
                let (outer, len, inner) = axis_split(shape, *axis);
                let mut d = vec![T::ZERO; y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |t: usize| (o * len + t) * inner + j;
                        let dot: f64 = (0..len).map(|t| g[at(t)].to_f64() * y[at(t)].to_f64()).sum();
                        for t in 0..len {
                            let k = at(t);
                            d[k] = T::from_f64(y[k].to_f64() * (g[k].to_f64() - dot));
                        }
                    }
                }
                self.accumulate(adj, *input, d);
            }
            Op::Linear { x, w, b } => {
                let (sx, sw) = (self.nodes[*x].value.shape(), self.nodes[*w].value.shape());
                let (n, f, k) = (sx[0], sx[1], sw[0]);
                if need(*x) {
                    let mut dx = vec![T::ZERO; n * f];
                    T::gemm(n, k, f, T::ONE, g, false, val(*w), false, T::ZERO, &mut dx);
                    self.accumulate(adj, *x, dx);
                }
                if need(*w) {
                    let mut dw = vec![T::ZERO; k * f];
                    T::gemm(k, n, f, T::ONE, g, true, val(*x), false, T::ZERO, &mut dw);
                    self.accumulate(adj, *w, dw);
                }
                if let Some(b) = b {
                    if need(*b) {
                        let mut db = vec![0.0f64; k];
                        for row in g.chunks(k) {
                            for (acc, v) in db.iter_mut().zip(row) {
                                *acc += v.to_f64();
                            }
                        }
                        self.accumulate(adj, *b, db.into_iter().map(T::from_f64).collect());
                    }
                }
            }
            Op::Conv3d { x, w, b, shape } => {
                let nb = b.map(need).unwrap_or(false);
                let (dx, dw, db) = kernels::conv3d_backward(shape, val(*x), val(*w), g, need(*x), need(*w), nb);
                if let Some(dx) = dx {
                    self.accumulate(adj, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(adj, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(adj, *b, db);
                }
            }
            Op::TConv3d { x, w, b, shape } => {
                let nb = b.map(need).unwrap_or(false);
                let (dx, dw, db) = kernels::tconv3d_backward(shape, val(*x), val(*w), g, need(*x), need(*w), nb);
                if let Some(dx) = dx {
                    self.accumulate(adj, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(adj, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(adj, *b, db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let s = self.nodes[*x].value.shape();
                let (n, c) = (s[0], s[1]);
                let spatial: usize = s[2..].iter().product();
                let gam = val(*gamma);
                let mut sum_g = vec![0.0f64; c];
                let mut sum_gx = vec![0.0f64; c];
                for bi in 0..n {
                    for ch in 0..c {
                        let off = (bi * c + ch) * spatial;
                        for k in off..off + spatial {
                            let gv = g[k].to_f64();
                            sum_g[ch] += gv;
                            sum_gx[ch] += gv * xhat[k].to_f64();
                        }
                    }
                }
                if need(*x) {
                    let m = (n * spatial) as f64;
                    let mut dx = vec![T::ZERO; g.len()];
                    for bi in 0..n {
                        for ch in 0..c {
                            let off = (bi * c + ch) * spatial;
                            let scale = gam[ch].to_f64() * inv_std[ch];
                            for k in off..off + spatial {
                                let gv = g[k].to_f64();
                                let v = if *train {
                                    scale * (gv - sum_g[ch] / m - xhat[k].to_f64() * sum_gx[ch] / m)
                                } else {
                                    scale * gv
                                };
                                dx[k] = T::from_f64(v);
                            }
                        }
                    }
                    self.accumulate(adj, *x, dx);
                }
                if need(*gamma) {
                    self.accumulate(adj, *gamma, sum_gx.iter().map(|&v| T::from_f64(v)).collect());
                }
                if need(*beta) {
                    self.accumulate(adj, *beta, sum_g.iter().map(|&v| T::from_f64(v)).collect());
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (val(*pred), val(*target));
                let scale = 2.0 * g[0].to_f64() / p.len() as f64;
                let d: Vec<T> = p
                    .iter()
                    .zip(t)
                    .map(|(a, b)| T::from_f64(scale * (a.to_f64() - b.to_f64())))
                    .collect();
                if need(*target) {
                    self.accumulate(adj, *target, d.iter().map(|&v| -v).collect());
                }
                if need(*pred) {
                    self.accumulate(adj, *pred, d);
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len();
                let k = probs.len() / n;
                let scale = g[0].to_f64() / n as f64;
                let mut d: Vec<T> = probs.iter().map(|&p| T::from_f64(p * scale)).collect();
                for (r, &l) in labels.iter().enumerate() {
                    d[r * k + l] -= T::from_f64(scale);
                }
                self.accumulate(adj, *logits, d);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable softmax along `axis` of a row-major buffer.
pub fn softmax_along<T: Element>(data: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut out = vec![T::ZERO; data.len()];
    for o in 0..outer {
        for j in 0..inner {
            let at = |t: usize| (o * len + t) * inner + j;
            let m = (0..len).map(|t| data[at(t)].to_f64()).fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (0..len).map(|t| (data[at(t)].to_f64() - m).exp()).sum();
            for t in 0..len {
                out[at(t)] = T::from_f64((data[at(t)].to_f64() - m).exp() / s);
            }
        }
    }
    out
}
