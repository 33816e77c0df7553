use super::kernels::{self, Geometry};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
        geom: Geometry,
        cols: Vec<T>,
    },
    ConvTranspose2d {
        input: usize,
        weight: usize,
        bias: usize,
        geom: Geometry,
    },
    ChannelLinear {
        input: usize,
        weight: usize,
        bias: usize,
    },
    LeakyRect {
        input: usize,
        slope: T,
    },
    MaskTraces {
        input: usize,
        keep: Vec<bool>,
    },
    SqNormDiff {
        a: usize,
        b: usize,
    },
    WeightedSum {
        terms: Vec<(usize, T)>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Append-only record of a forward computation.
///
/// Nodes only ever reference earlier nodes, so the tape is a topologically
/// sorted DAG and one reverse sweep visits each node exactly once.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Shapes of every recorded value, in recording order.
    pub fn shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.nodes.iter().map(|n| n.value.shape())
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn square_kernel(weight: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
        match weight.shape()[..] {
            [a, b, k1, k2] if k1 == k2 && k1 > 0 => Ok((a, b, k1)),
            _ => Err(Error::dim(format!(
                "{what} weight must be [_, _, k, k], got {:?}",
                weight.shape()
            ))),
        }
    }

    fn check_bias(bias: &Tensor<T>, channels: usize) -> Result<()> {
        if bias.shape() != [channels] {
            return Err(Error::dim(format!(
                "bias shape {:?} does not match {channels} output channels",
                bias.shape()
            )));
        }
        Ok(())
    }

    /// Strided cross-correlation of `[C_in, H, W]` with `[C_out, C_in, k, k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (c, h, w) = self.value(input).dims3()?;
        let (out_channels, in_channels, k) = Self::square_kernel(self.value(weight), "conv2d")?;
        if in_channels != c {
            return Err(Error::dim(format!(
                "conv2d weight expects {in_channels} input channels, input has {c}"
            )));
        }
        Self::check_bias(self.value(bias), out_channels)?;
        let (oh, ow) = match (
            kernels::conv_out_extent(h, k, stride, pad),
            kernels::conv_out_extent(w, k, stride, pad),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(Error::dim(format!(
                    "conv2d input {h}x{w} too small for kernel {k} (stride {stride}, pad {pad})"
                )))
            }
        };
        let geom = Geometry {
            channels: c,
            h,
            w,
            oh,
            ow,
            kernel: k,
            stride,
            pad,
        };
        let (out, cols) = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            out_channels,
            &geom,
        );
        let value = Tensor::new(vec![out_channels, oh, ow], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input: input.0,
                weight: weight.0,
                bias: bias.0,
                geom,
                cols,
            },
        ))
    }

    /// Transposed convolution of `[C_in, H, W]` with `[C_in, C_out, k, k]`;
    /// the adjoint of [`Tape::conv2d`] with the same weight, stride and pad.
    pub fn conv2d_transpose(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (c, h, w) = self.value(input).dims3()?;
        let (in_channels, out_channels, k) =
            Self::square_kernel(self.value(weight), "conv2d_transpose")?;
        if in_channels != c {
            return Err(Error::dim(format!(
                "conv2d_transpose weight expects {in_channels} input channels, input has {c}"
            )));
        }
        Self::check_bias(self.value(bias), out_channels)?;
        let (oh, ow) = match (
            kernels::conv_transpose_out_extent(h, k, stride, pad),
            kernels::conv_transpose_out_extent(w, k, stride, pad),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(Error::dim(format!(
                    "conv2d_transpose input {h}x{w} yields an empty output (stride {stride}, pad {pad})"
                )))
            }
        };
        // The correlation geometry runs from the output image back onto the
        // input grid.
        let geom = Geometry {
            channels: out_channels,
            h: oh,
            w: ow,
            oh: h,
            ow: w,
            kernel: k,
            stride,
            pad,
        };
        if kernels::conv_out_extent(oh, k, stride, pad) != Some(h)
            || kernels::conv_out_extent(ow, k, stride, pad) != Some(w)
        {
            return Err(Error::dim("inconsistent transposed convolution geometry"));
        }
        let out = kernels::conv_transpose_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            in_channels,
            &geom,
        );
        let value = Tensor::new(vec![out_channels, oh, ow], out)?;
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                input: input.0,
                weight: weight.0,
                bias: bias.0,
                geom,
            },
        ))
    }

    /// Fully connected layer along the channel axis, shared by every position.
    pub fn channel_linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (c, h, w) = self.value(input).dims3()?;
        let (out_channels, in_channels) = match self.value(weight).shape()[..] {
            [o, i] => (o, i),
            _ => {
                return Err(Error::dim(format!(
                    "channel_linear weight must be rank 2, got {:?}",
                    self.value(weight).shape()
                )))
            }
        };
        if in_channels != c {
            return Err(Error::dim(format!(
                "channel_linear weight expects {in_channels} channels, input has {c}"
            )));
        }
        Self::check_bias(self.value(bias), out_channels)?;
        let out = kernels::channel_linear_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            in_channels,
            out_channels,
            h * w,
        );
        let value = Tensor::new(vec![out_channels, h, w], out)?;
        Ok(self.push(
            value,
            Op::ChannelLinear {
                input: input.0,
                weight: weight.0,
                bias: bias.0,
            },
        ))
    }

    /// Leaky rectifier: `x` for `x >= 0`, `slope * x` otherwise.
    pub fn leaky_rect(&mut self, input: Var, slope: T) -> Result<Var> {
        if !(slope >= T::zero() && slope <= T::one()) {
            return Err(Error::usage("leaky_rect slope must lie in [0, 1]"));
        }
        let value = self
            .value(input)
            .map(|x| if x >= T::zero() { x } else { slope * x });
        Ok(self.push(
            value,
            Op::LeakyRect {
                input: input.0,
                slope,
            },
        ))
    }

    /// Zero every trace (last-axis column) whose `keep` flag is false.
    pub fn mask_traces(&mut self, input: Var, keep: &[bool]) -> Result<Var> {
        let value = self.value(input);
        let w = *value.shape().last().ok_or_else(|| Error::dim("cannot mask a scalar"))?;
        if keep.len() != w {
            return Err(Error::dim(format!(
                "mask covers {} traces, tensor has {w}",
                keep.len()
            )));
        }
        let mut out = value.clone();
        mask_columns(out.data_mut(), keep);
        Ok(self.push(
            out,
            Op::MaskTraces {
                input: input.0,
                keep: keep.to_vec(),
            },
        ))
    }

    /// Squared Euclidean distance `sum((a - b)^2)` as a scalar node.
    pub fn sq_norm_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim(format!(
                "sq_norm_diff shape mismatch {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let s = va
            .data()
            .iter()
            .zip(vb.data())
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
        Ok(self.push(Tensor::scalar(s), Op::SqNormDiff { a: a.0, b: b.0 }))
    }

    /// `sum_i weight_i * term_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut total = T::zero();
        for &(v, wgt) in terms {
            let value = self.value(v);
            if !value.is_scalar() {
                return Err(Error::dim("weighted_sum terms must be scalars"));
            }
            total = total + wgt * value.item();
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::WeightedSum {
                terms: terms.iter().map(|&(v, w)| (v.0, w)).collect(),
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let value = self.value(loss);
        if !value.is_scalar() {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                value.shape()
            )));
        }
        if !value.item().is_finite() {
            return Err(Error::usage("backward called on a non-finite loss"));
        }

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                    cols,
                } => {
                    let out_channels = node.value.shape()[0];
                    let d = kernels::conv2d_backward(
                        &g,
                        cols,
                        self.nodes[*weight].value.data(),
                        out_channels,
                        geom,
                    );
                    accumulate(&mut grads, *input, d.input);
                    accumulate(&mut grads, *weight, d.weight);
                    accumulate(&mut grads, *bias, d.bias);
                }
                Op::ConvTranspose2d {
                    input,
                    weight,
                    bias,
                    geom,
                } => {
                    let in_channels = self.nodes[*input].value.shape()[0];
                    let d = kernels::conv_transpose_backward(
                        &g,
                        self.nodes[*input].value.data(),
                        self.nodes[*weight].value.data(),
                        in_channels,
                        geom,
                    );
                    accumulate(&mut grads, *input, d.input);
                    accumulate(&mut grads, *weight, d.weight);
                    accumulate(&mut grads, *bias, d.bias);
                }
                Op::ChannelLinear {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &self.nodes[*input].value;
                    let (c, h, w) = x.dims3()?;
                    let d = kernels::channel_linear_backward(
                        &g,
                        x.data(),
                        self.nodes[*weight].value.data(),
                        c,
                        node.value.shape()[0],
                        h * w,
                    );
                    accumulate(&mut grads, *input, d.input);
                    accumulate(&mut grads, *weight, d.weight);
                    accumulate(&mut grads, *bias, d.bias);
                }
                Op::LeakyRect { input, slope } => {
                    let x = self.nodes[*input].value.data();
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(&gi, &xi)| if xi >= T::zero() { gi } else { *slope * gi })
                        .collect();
                    accumulate(&mut grads, *input, d);
                }
                Op::MaskTraces { input, keep } => {
                    let mut d = g.clone();
                    mask_columns(&mut d, keep);
                    accumulate(&mut grads, *input, d);
                }
                Op::SqNormDiff { a, b } => {
                    let two_g = T::lit(2.0) * g[0];
                    let va = self.nodes[*a].value.data();
                    let vb = self.nodes[*b].value.data();
                    let da: Vec<T> = va.iter().zip(vb).map(|(&x, &y)| two_g * (x - y)).collect();
                    if a != b {
                        let db = da.iter().map(|&v| -v).collect();
                        accumulate(&mut grads, *b, db);
                        accumulate(&mut grads, *a, da);
                    }
                }
                Op::WeightedSum { terms } => {
                    for &(t, w) in terms {
                        accumulate(&mut grads, t, vec![w * g[0]]);
                    }
                }
            }
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| g.map(|d| Tensor::new(n.value.shape().to_vec(), d).expect("shape")))
                .collect(),
        })
    }
}

fn mask_columns<T: Real>(data: &mut [T], keep: &[bool]) {
    for row in data.chunks_mut(keep.len()) {
        for (v, &k) in row.iter_mut().zip(keep) {
            if !k {
                *v = T::zero();
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], idx: usize, contrib: Vec<T>) {
    match &mut grads[idx] {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a = *a + c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zero-filled (shaped like `like`) when unreachable.
    pub fn wrt(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}
