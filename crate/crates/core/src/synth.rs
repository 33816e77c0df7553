//! Seeded synthetic gathers built from Ricker wavelets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gather::Gather;

/// Ricker wavelet sampled every `dt` on `[-halfwidth, halfwidth]`; the centre
/// sample sits at index `len / 2`.
pub fn ricker(f: f64, dt: f64, halfwidth: f64) -> Result<Vec<f64>> {
    if !(f > 0.0 && dt > 0.0 && halfwidth >= 0.0) {
        return Err(Error::usage("ricker needs f > 0, dt > 0 and halfwidth >= 0"));
    }
    let half = (halfwidth / dt + 1e-9).floor() as i64;
    Ok((-half..=half).map(|k| ricker_at(f, k as f64 * dt)).collect())
}

fn ricker_at(f: f64, t: f64) -> f64 {
    let a = (std::f64::consts::PI * f * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    /// `t(x) = t0 + p·x`, slowness in s/m.
    Linear { slowness: f64 },
    /// `t(x) = sqrt(t0² + x²/v²)`, velocity in m/s.
    Hyperbolic { velocity: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    pub t0: f64,
    pub amplitude: f64,
    pub freq: f64,
}

impl EventSpec {
    pub fn linear(t0: f64, slowness: f64, amplitude: f64, freq: f64) -> Self {
        EventSpec {
            kind: EventKind::Linear { slowness },
            t0,
            amplitude,
            freq,
        }
    }

    pub fn hyperbolic(t0: f64, velocity: f64, amplitude: f64, freq: f64) -> Self {
        EventSpec {
            kind: EventKind::Hyperbolic { velocity },
            t0,
            amplitude,
            freq,
        }
    }

    pub fn arrival(&self, x: f64) -> f64 {
        match self.kind {
            EventKind::Linear { slowness } => self.t0 + slowness * x,
            EventKind::Hyperbolic { velocity } => (self.t0 * self.t0 + (x / velocity).powi(2)).sqrt(),
        }
    }
}

/// Receiver offsets centred on the middle of the spread.
pub fn offsets(n_traces: usize, dx: f64) -> Vec<f64> {
    let mid = (n_traces as f64 - 1.0) / 2.0;
    (0..n_traces).map(|j| (j as f64 - mid) * dx).collect()
}

/// Sum of events plus seeded white Gaussian noise of standard deviation
/// `noise_std`. Arrivals between samples are split linearly across the two
/// neighbouring sample positions.
pub fn make_gather(
    n_traces: usize,
    n_samples: usize,
    dt: f64,
    dx: f64,
    events: &[EventSpec],
    noise_std: f64,
    seed: u64,
) -> Result<Gather> {
    if n_traces == 0 || n_samples == 0 {
        return Err(Error::usage("gather extents must be positive"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::usage(format!("noise_std must be non-negative, got {noise_std}")));
    }
    let x = offsets(n_traces, dx);
    let window = (n_samples - 1) as f64 * dt;
    let mut acc = vec![0.0f64; n_samples * n_traces];
    for ev in events {
        if !(ev.freq > 0.0) {
            return Err(Error::usage(format!("event frequency must be positive, got {}", ev.freq)));
        }
        if let EventKind::Hyperbolic { velocity } = ev.kind {
            if !(velocity > 0.0) {
                return Err(Error::usage("hyperbolic velocity must be positive"));
            }
        }
        let arrivals: Vec<f64> = x.iter().map(|&xi| ev.arrival(xi)).collect();
        if !arrivals.iter().any(|&t| (0.0..=window).contains(&t)) {
            return Err(Error::usage(format!(
                "event with t0 = {} never arrives inside the {window} s window",
                ev.t0
            )));
        }
        // three wavelet periods is far past any visible side lobe
        let wavelet = ricker(ev.freq, dt, 3.0 / ev.freq)?;
        let centre = (wavelet.len() / 2) as i64;
        for (j, &t) in arrivals.iter().enumerate() {
            let pos = t / dt;
            let base = pos.floor();
            let frac = pos - base;
            let base = base as i64;
            for (k, &w) in wavelet.iter().enumerate() {
                let i = base + k as i64 - centre;
                for (shift, weight) in [(0, 1.0 - frac), (1, frac)] {
                    let s = i + shift;
                    if (0..n_samples as i64).contains(&s) {
                        acc[s as usize * n_traces + j] += ev.amplitude * weight * w;
                    }
                }
            }
        }
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).expect("validated std");
        for v in &mut acc {
            *v += normal.sample(&mut rng);
        }
    }
    Gather::new(n_samples, n_traces, dt, acc.into_iter().map(|v| v as f32).collect())
}

pub const BENCH_SAMPLES: usize = 512;
pub const BENCH_TRACES: usize = 128;
pub const BENCH_DT: f64 = 0.004;
pub const BENCH_DX: f64 = 25.0;
pub const BENCH_FREQ: f64 = 30.0;

/// The fixed benchmark scene: three hyperbolas and two linear events.
pub fn benchmark_events() -> Vec<EventSpec> {
    vec![
        EventSpec::hyperbolic(0.5, 1800.0, 1.0, BENCH_FREQ),
        EventSpec::hyperbolic(1.0, 2300.0, -0.8, BENCH_FREQ),
        EventSpec::hyperbolic(1.5, 2900.0, 0.6, BENCH_FREQ),
        EventSpec::linear(0.3, 0.00025, 0.5, BENCH_FREQ),
        EventSpec::linear(1.2, -0.0002, -0.4, BENCH_FREQ),
    ]
}

/// Benchmark scene with noise of `noise_rel` times the clean peak amplitude.
pub fn benchmark_scene(noise_rel: f64, seed: u64) -> Result<Gather> {
    let events = benchmark_events();
    let clean = make_gather(BENCH_TRACES, BENCH_SAMPLES, BENCH_DT, BENCH_DX, &events, 0.0, 0)?;
    if noise_rel == 0.0 {
        return Ok(clean);
    }
    let std = noise_rel * clean.max_abs() as f64;
    make_gather(BENCH_TRACES, BENCH_SAMPLES, BENCH_DT, BENCH_DX, &events, std, seed)
}
