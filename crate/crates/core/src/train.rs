//! Training objectives, the optimizer and the per-gather fitting loop.
//!
//! Two objectives share one network `N`:
//!
//! * traditional: `‖N(d)·R − d‖²`
//! * self-consistency: `w1‖d − N(d)·R‖² + w2‖d − N(N(d)·R′)·R‖² + w3‖N(d) − N(N(d)·R′)‖²`
//!
//! where `R` is the observed-trace mask and `R′` is redrawn every iteration.
//! The network runs twice per self-consistency step with shared parameters and
//! gradients flow through both passes.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cae::{CaeParams, NetConfig, ParamVars};
use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::masking::{resample_rprime, RPrimePolicy, TraceMask};
use crate::tensor::{Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    SelfConsistency,
    Traditional,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::SelfConsistency => "scl",
            Objective::Traditional => "traditional",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scl" => Ok(Objective::SelfConsistency),
            "traditional" => Ok(Objective::Traditional),
            other => Err(Error::usage(format!(
                "unknown loss {other:?} (expected scl or traditional)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weights of the three self-consistency terms.
    pub weights: [f64; 3],
    pub objective: Objective,
    pub rprime: RPrimePolicy,
    /// Seeds the `R′` stream.
    pub seed: u64,
    /// Record the loss every this many iterations (the last one always).
    pub history_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: [1.0, 1.0, 1.0],
            objective: Objective::SelfConsistency,
            rprime: RPrimePolicy::MatchBase,
            seed: 0,
            history_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::usage("iterations must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::usage("moment coefficients must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::usage("epsilon must be positive"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::usage("loss weights must be finite and non-negative"));
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(Error::usage("at least one loss weight must be positive"));
        }
        if let RPrimePolicy::Fixed(f) = self.rprime {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::usage("R' fraction must lie in [0, 1)"));
            }
        }
        if self.history_stride == 0 {
            return Err(Error::usage("history stride must be at least 1"));
        }
        Ok(())
    }
}

/// Tape handles of the self-consistency objective.
#[derive(Clone, Copy, Debug)]
pub struct SclTerms {
    pub total: Var,
    pub terms: [Var; 3],
    /// First-pass network output `N(d)`.
    pub output: Var,
}

/// Record `‖d − N(d)·R‖²` with the network already on `tape`.
pub fn record_traditional_loss<T: Real>(
    tape: &mut Tape<T>,
    params: &CaeParams<T>,
    vars: &ParamVars,
    d: Var,
    r: &TraceMask,
) -> Result<Var> {
    let y = params.forward_on(tape, vars, d)?;
    let y_r = tape.mask_traces(y, r.keep())?;
    tape.sq_norm_diff(d, y_r)
}

/// Record the three-term self-consistency objective.
pub fn record_scl_loss<T: Real>(
    tape: &mut Tape<T>,
    params: &CaeParams<T>,
    vars: &ParamVars,
    d: Var,
    r: &TraceMask,
    rp: &TraceMask,
    weights: [f64; 3],
) -> Result<SclTerms> {
    let y = params.forward_on(tape, vars, d)?;
    let y_r = tape.mask_traces(y, r.keep())?;
    let t1 = tape.sq_norm_diff(d, y_r)?;

    let y_rp = tape.mask_traces(y, rp.keep())?;
    let y2 = params.forward_on(tape, vars, y_rp)?;
    let y2_r = tape.mask_traces(y2, r.keep())?;
    let t2 = tape.sq_norm_diff(d, y2_r)?;
    let t3 = tape.sq_norm_diff(y, y2)?;

    let total = tape.weighted_sum(&[
        (t1, T::lit(weights[0])),
        (t2, T::lit(weights[1])),
        (t3, T::lit(weights[2])),
    ])?;
    Ok(SclTerms {
        total,
        terms: [t1, t2, t3],
        output: y,
    })
}

fn check_masked_input<T: Real>(d: &Tensor<T>, r: &TraceMask) -> Result<()> {
    let (_, _, w) = d.dims3()?;
    if w != r.len() {
        return Err(Error::dim(format!(
            "mask covers {} traces, data has {w}",
            r.len()
        )));
    }
    Ok(())
}

/// Value of the traditional objective.
pub fn traditional_loss<T: Real>(
    params: &CaeParams<T>,
    d: &Tensor<T>,
    r: &TraceMask,
) -> Result<T> {
    check_masked_input(d, r)?;
    let mut tape = Tape::new();
    let vars = params.record(&mut tape);
    let dv = tape.leaf(d.clone());
    let loss = record_traditional_loss(&mut tape, params, &vars, dv, r)?;
    Ok(tape.value(loss).item())
}

/// Values of the self-consistency objective: `(total, [term1, term2, term3])`.
pub fn scl_loss<T: Real>(
    params: &CaeParams<T>,
    d: &Tensor<T>,
    r: &TraceMask,
    rp: &TraceMask,
    weights: [f64; 3],
) -> Result<(T, [T; 3])> {
    check_masked_input(d, r)?;
    let mut tape = Tape::new();
    let vars = params.record(&mut tape);
    let dv = tape.leaf(d.clone());
    let s = record_scl_loss(&mut tape, params, &vars, dv, r, rp, weights)?;
    Ok((
        tape.value(s.total).item(),
        s.terms.map(|t| tape.value(t).item()),
    ))
}

/// Adaptive-moment optimizer state for one parameter set.
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &CaeParams<T>, cfg: &TrainConfig) -> Self {
        let zeros = || params.tensors().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected update; `grads` follow [`CaeParams::tensors`] order.
    pub fn step(&mut self, params: &mut CaeParams<T>, grads: &[Tensor<T>]) {
        self.step += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let c1 = T::lit(1.0 - self.beta1.powi(self.step));
        let c2 = T::lit(1.0 - self.beta2.powi(self.step));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub terms: [f64; 3],
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: CaeParams<f32>,
    pub history: Vec<LossRecord>,
    pub wall_seconds: f64,
    pub seed: u64,
}

impl TrainReport {
    /// `iteration,term1,term2,term3,total` with a header line.
    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }
}

pub fn history_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("iteration,term1,term2,term3,total\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e}",
            r.iteration, r.terms[0], r.terms[1], r.terms[2], r.total
        );
    }
    s
}

pub fn write_history_csv(history: &[LossRecord], path: &Path) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

/// Fit a fresh network to one observed gather.
///
/// `d` must already be normalized and padded so both extents are multiples
/// of [`NetConfig::spatial_multiple`], and must be zero on the traces `r`
/// drops.
pub fn train(d: &Gather, r: &TraceMask, net: &NetConfig, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let params = CaeParams::<f32>::build(net)?;
    train_from(params, d, r, cfg)
}

/// Like [`train`], starting from existing parameters.
pub fn train_from(
    mut params: CaeParams<f32>,
    d: &Gather,
    r: &TraceMask,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if r.len() != d.n_traces() {
        return Err(Error::dim(format!(
            "mask covers {} traces, gather has {}",
            r.len(),
            d.n_traces()
        )));
    }
    if r.n_observed() == 0 {
        return Err(Error::usage("cannot train without live traces"));
    }
    let start = Instant::now();
    let input = d.to_tensor();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params, cfg);
    let mut history = Vec::with_capacity(cfg.iterations / cfg.history_stride + 1);

    for it in 1..=cfg.iterations {
        let mut tape = Tape::new();
        let vars = params.record(&mut tape);
        let dv = tape.leaf(input.clone());
        let (loss, terms) = match cfg.objective {
            Objective::SelfConsistency => {
                let rp = resample_rprime(r, cfg.rprime, &mut rng)?;
                let s = record_scl_loss(&mut tape, &params, &vars, dv, r, &rp, cfg.weights)?;
                let t = s.terms.map(|v| tape.value(v).item() as f64);
                (s.total, t)
            }
            Objective::Traditional => {
                let l = record_traditional_loss(&mut tape, &params, &vars, dv, r)?;
                (l, [tape.value(l).item() as f64, 0.0, 0.0])
            }
        };
        let total = tape.value(loss).item() as f64;
        if !total.is_finite() || terms.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("loss terms {terms:?}, total {total}"),
            });
        }
        if it % cfg.history_stride == 0 || it == cfg.iterations || it == 1 {
            history.push(LossRecord {
                iteration: it,
                terms,
                total,
            });
        }
        let grads = tape.backward(loss)?;
        let grad_list: Vec<Tensor<f32>> = vars
            .layers()
            .iter()
            .zip(params.layers())
            .flat_map(|(&(wv, bv), l)| [grads.wrt(wv, &l.weight), grads.wrt(bv, &l.bias)])
            .collect();
        adam.step(&mut params, &grad_list);
    }

    Ok(TrainReport {
        params,
        history,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    })
}

/// How the final section is assembled from the network output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Assembly {
    /// Observed traces copied verbatim, missing traces from the network.
    #[default]
    Reinsert,
    /// The raw network output `N(d)` everywhere.
    Network,
}

impl std::fmt::Display for Assembly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Assembly::Reinsert => "reinsert",
            Assembly::Network => "network",
        })
    }
}

impl std::str::FromStr for Assembly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reinsert" => Ok(Assembly::Reinsert),
            "network" => Ok(Assembly::Network),
            other => Err(Error::usage(format!(
                "unknown assembly {other:?} (expected reinsert or network)"
            ))),
        }
    }
}

/// `R·d + (1−R)·N(d)`: observed traces pass through untouched.
pub fn reconstruct<T: Real>(params: &CaeParams<T>, d: &Tensor<T>, r: &TraceMask) -> Result<Tensor<T>> {
    reconstruct_with(params, d, r, Assembly::Reinsert)
}

pub fn reconstruct_with<T: Real>(
    params: &CaeParams<T>,
    d: &Tensor<T>,
    r: &TraceMask,
    assembly: Assembly,
) -> Result<Tensor<T>> {
    check_masked_input(d, r)?;
    if assembly == Assembly::Reinsert && r.n_missing() == 0 {
        return Ok(d.clone());
    }
    let y = params.forward(d)?;
    match assembly {
        Assembly::Network => Ok(y),
        Assembly::Reinsert => {
            let observed = r.apply(d)?;
            let filled = r.complement().apply(&y)?;
            observed.zip_map(&filled, |a, b| a + b)
        }
    }
}
