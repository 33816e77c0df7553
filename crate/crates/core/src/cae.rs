//! The convolutional autoencoder: a strided-convolution encoder, a
//! channel-wise fully connected bottleneck, and a mirrored transposed
//! convolution decoder.
//!
//! With the default [`NetConfig`] the network has 90,609 learnable scalars:
//!
//! | layer            | shape          | params |
//! |------------------|----------------|--------|
//! | conv 1→8         | 8×1×4×4 + 8    | 136    |
//! | conv 8→16        | 16×8×4×4 + 16  | 2064   |
//! | conv 16→32       | 32×16×4×4 + 32 | 8224   |
//! | conv 32→64       | 64×32×4×4 + 64 | 32832  |
//! | channel fc 64→64 | 64×64 + 64     | 4160   |
//! | deconv 64→32     | 64×32×4×4 + 32 | 32800  |
//! | deconv 32→16     | 32×16×4×4 + 16 | 8208   |
//! | deconv 16→8      | 16×8×4×4 + 8   | 2056   |
//! | deconv 8→1       | 8×1×4×4 + 1    | 129    |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

const CHECKPOINT_MAGIC: &[u8; 4] = b"ZSCL";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub encoder_channels: Vec<usize>,
    pub fc_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub slope: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            encoder_channels: vec![8, 16, 32, 64],
            fc_channels: 64,
            kernel: 4,
            stride: 2,
            pad: 1,
            slope: 0.2,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() {
            return Err(Error::usage("encoder_channels must not be empty"));
        }
        // Each encoder stage must widen the channel count, starting from the
        // single input channel.
        let mut prev = 1;
        for &c in &self.encoder_channels {
            if c <= prev {
                return Err(Error::usage(format!(
                    "encoder_channels must strictly increase from 1, got {:?}",
                    self.encoder_channels
                )));
            }
            prev = c;
        }
        if self.fc_channels == 0 {
            return Err(Error::usage("fc_channels must be positive"));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::usage("kernel and stride must be positive"));
        }
        // Exact down/up-sampling by `stride` needs kernel == stride + 2·pad.
        if self.kernel != self.stride + 2 * self.pad {
            return Err(Error::usage(format!(
                "kernel {} must equal stride {} + 2·pad {}",
                self.kernel, self.stride, self.pad
            )));
        }
        if !(0.0..=1.0).contains(&self.slope) {
            return Err(Error::usage("activation slope must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Spatial extents must be divisible by this factor.
    pub fn spatial_multiple(&self) -> usize {
        self.stride.pow(self.encoder_channels.len() as u32)
    }

    /// `(kind, in, out)` for every layer in declaration order.
    fn ladder(&self) -> Vec<(LayerKind, usize, usize)> {
        let mut layers = Vec::new();
        let mut prev = 1;
        for &c in &self.encoder_channels {
            layers.push((LayerKind::Conv, prev, c));
            prev = c;
        }
        layers.push((LayerKind::ChannelLinear, prev, self.fc_channels));
        let mut prev = self.fc_channels;
        for &c in self.encoder_channels.iter().rev().skip(1) {
            layers.push((LayerKind::ConvTranspose, prev, c));
            prev = c;
        }
        layers.push((LayerKind::ConvTranspose, prev, 1));
        layers
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    ChannelLinear,
    ConvTranspose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    /// Whether the leaky rectifier follows this layer.
    pub activated: bool,
}

impl<T: Real> Layer<T> {
    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Full parameter set of the autoencoder, layers in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct CaeParams<T> {
    config: NetConfig,
    layers: Vec<Layer<T>>,
}

/// Parameter leaves of one [`CaeParams`] recorded on a tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<(Var, Var)>,
}

impl ParamVars {
    /// `(weight, bias)` handles per layer.
    pub fn layers(&self) -> &[(Var, Var)] {
        &self.vars
    }
}

fn layer_shapes(kind: LayerKind, cin: usize, cout: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
    match kind {
        LayerKind::Conv => (vec![cout, cin, k, k], vec![cout]),
        LayerKind::ChannelLinear => (vec![cout, cin], vec![cout]),
        LayerKind::ConvTranspose => (vec![cin, cout, k, k], vec![cout]),
    }
}

impl<T: Real> CaeParams<T> {
    /// Allocate and initialize parameters, uniform in `±sqrt(1/fan_in)`.
    pub fn build(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ladder = config.ladder();
        let last = ladder.len() - 1;
        let k = config.kernel;
        let layers = ladder
            .into_iter()
            .enumerate()
            .map(|(i, (kind, cin, cout))| {
                let fan_in = match kind {
                    LayerKind::Conv => cin * k * k,
                    LayerKind::ChannelLinear => cin,
                    // Each output sample of a transposed conv receives
                    // cin·(k/stride)² inputs.
                    LayerKind::ConvTranspose => {
                        (cin * k * k / (config.stride * config.stride)).max(1)
                    }
                };
                let bound = (1.0 / fan_in as f64).sqrt();
                let mut draw = |_| T::lit(rng.random_range(-bound..bound));
                let (ws, bs) = layer_shapes(kind, cin, cout, k);
                let weight = Tensor::from_fn(&ws, &mut draw);
                let bias = Tensor::from_fn(&bs, &mut draw);
                Layer {
                    kind,
                    weight,
                    bias,
                    activated: i != last,
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    /// Same architecture with every weight and bias set to zero.
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        let mut p = Self::build(config)?;
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(p)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Weight then bias of every layer, in declaration order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn cast<U: Real>(&self) -> CaeParams<U> {
        CaeParams {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    kind: l.kind,
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                    activated: l.activated,
                })
                .collect(),
        }
    }

    /// Push every parameter onto `tape` as a leaf.
    pub fn record(&self, tape: &mut Tape<T>) -> ParamVars {
        ParamVars {
            vars: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
        }
    }

    /// Pair leaves already on a tape (weights and biases in [`Self::tensors`]
    /// order) into parameter handles.
    pub fn vars_from_leaves(&self, leaves: &[Var]) -> Result<ParamVars> {
        if leaves.len() != 2 * self.layers.len() {
            return Err(Error::dim(format!(
                "expected {} parameter leaves, got {}",
                2 * self.layers.len(),
                leaves.len()
            )));
        }
        Ok(ParamVars {
            vars: leaves.chunks(2).map(|p| (p[0], p[1])).collect(),
        })
    }

    /// Run the network on `x` (`[1, H, W]`) using parameters already recorded
    /// as `vars`. Calling this twice with the same `vars` shares weights.
    pub fn forward_on(&self, tape: &mut Tape<T>, vars: &ParamVars, x: Var) -> Result<Var> {
        let (c, h, w) = tape.value(x).dims3()?;
        let multiple = self.config.spatial_multiple();
        if c != 1 || h % multiple != 0 || w % multiple != 0 || h == 0 || w == 0 {
            return Err(Error::dim(format!(
                "network input must be [1, H, W] with H, W divisible by {multiple}, got [{c}, {h}, {w}]"
            )));
        }
        let slope = T::lit(self.config.slope);
        let (stride, pad) = (self.config.stride, self.config.pad);
        let mut cur = x;
        for (layer, &(wv, bv)) in self.layers.iter().zip(&vars.vars) {
            cur = match layer.kind {
                LayerKind::Conv => tape.conv2d(cur, wv, bv, stride, pad)?,
                LayerKind::ChannelLinear => tape.channel_linear(cur, wv, bv)?,
                LayerKind::ConvTranspose => tape.conv2d_transpose(cur, wv, bv, stride, pad)?,
            };
            if layer.activated {
                cur = tape.leaky_rect(cur, slope)?;
            }
        }
        Ok(cur)
    }

    /// Inference without keeping the tape.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.record(&mut tape);
        let input = tape.leaf(x.clone());
        let out = self.forward_on(&mut tape, &vars, input)?;
        Ok(tape.value(out).clone())
    }

    /// Write a checkpoint: `ZSCL` magic, version, config echo, then every
    /// tensor as little-endian `f32` in declaration order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = &self.config;
        buf.extend_from_slice(&(cfg.encoder_channels.len() as u32).to_le_bytes());
        for &c in &cfg.encoder_channels {
            buf.extend_from_slice(&(c as u32).to_le_bytes());
        }
        for v in [cfg.fc_channels, cfg.kernel, cfg.stride, cfg.pad] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&cfg.slope.to_le_bytes());
        buf.extend_from_slice(&cfg.seed.to_le_bytes());
        buf.extend_from_slice(&(self.parameter_count() as u64).to_le_bytes());
        for t in self.tensors() {
            for v in t.data() {
                buf.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
            }
        }
        out.write_all(&buf)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut cur = ByteCursor::new(&bytes);
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                detail: "missing ZSCL checkpoint magic".into(),
            });
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                offset: 4,
                detail: format!("unsupported checkpoint version {version}"),
            });
        }
        let n_enc = cur.u32()? as usize;
        if n_enc > 64 {
            return Err(Error::Parse {
                offset: 8,
                detail: format!("implausible encoder depth {n_enc}"),
            });
        }
        let encoder_channels = (0..n_enc)
            .map(|_| cur.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let fc_channels = cur.u32()? as usize;
        let kernel = cur.u32()? as usize;
        let stride = cur.u32()? as usize;
        let pad = cur.u32()? as usize;
        let slope = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let seed = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let config = NetConfig {
            encoder_channels,
            fc_channels,
            kernel,
            stride,
            pad,
            slope,
            seed,
        };
        let mut params = Self::build(&config)?;
        let count = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        if count != params.parameter_count() {
            return Err(Error::Parse {
                offset: cur.pos as u64 - 8,
                detail: format!(
                    "checkpoint holds {count} parameters, config implies {}",
                    params.parameter_count()
                ),
            });
        }
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                let raw = f32::from_le_bytes(cur.take(4)?.try_into().unwrap());
                *v = T::lit(raw as f64);
            }
        }
        Ok(params)
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos as u64,
                detail: format!("truncated: need {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
