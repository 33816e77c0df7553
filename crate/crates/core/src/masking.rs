//! Per-trace sampling operators.
//!
//! A [`TraceMask`] keeps or zeroes whole traces (columns). The observed data
//! is the complete section with the dropped traces zeroed, and the missing
//! complement is [`TraceMask::complement`].

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::tensor::{Real, Tensor};

/// Default relative threshold below which a trace counts as dead.
pub const DEFAULT_DETECT_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceMask {
    keep: Vec<bool>,
    /// Seed the mask was generated from, if any.
    pub seed: Option<u64>,
}

impl TraceMask {
    pub fn from_keep(keep: Vec<bool>) -> Self {
        Self { keep, seed: None }
    }

    pub fn all_observed(n_traces: usize) -> Self {
        Self::from_keep(vec![true; n_traces])
    }

    /// Drop exactly `round(n_traces · missing_fraction)` traces chosen by a
    /// seeded permutation.
    pub fn generate(n_traces: usize, missing_fraction: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = Self::random(n_traces, missing_fraction, &mut rng)?;
        mask.seed = Some(seed);
        Ok(mask)
    }

    /// Exact-count random mask drawn from `rng`.
    pub fn random<R: Rng + ?Sized>(
        n_traces: usize,
        missing_fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_traces == 0 {
            return Err(Error::usage("mask needs at least one trace"));
        }
        if !(0.0..1.0).contains(&missing_fraction) {
            return Err(Error::usage(format!(
                "missing fraction must lie in [0, 1), got {missing_fraction}"
            )));
        }
        let n_drop = (n_traces as f64 * missing_fraction).round() as usize;
        let mut order: Vec<usize> = (0..n_traces).collect();
        order.shuffle(rng);
        let mut keep = vec![true; n_traces];
        for &j in &order[..n_drop.min(n_traces)] {
            keep[j] = false;
        }
        Ok(Self::from_keep(keep))
    }

    /// Mark a trace missing when its peak amplitude is below
    /// `eps_rel · (global peak)`.
    pub fn detect(gather: &Gather, eps_rel: f64) -> Result<Self> {
        let (ns, nt) = gather.shape();
        let mut peaks = vec![0.0f64; nt];
        for i in 0..ns {
            for (j, p) in peaks.iter_mut().enumerate() {
                *p = p.max(gather.get(i, j).abs() as f64);
            }
        }
        let global = peaks.iter().cloned().fold(0.0, f64::max);
        if global == 0.0 {
            return Err(Error::NoLiveTraces);
        }
        let threshold = eps_rel * global;
        Ok(Self::from_keep(
            peaks.into_iter().map(|p| p >= threshold && p > 0.0).collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn is_observed(&self, trace: usize) -> bool {
        self.keep[trace]
    }

    pub fn n_observed(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn n_missing(&self) -> usize {
        self.len() - self.n_observed()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.n_missing() as f64 / self.len() as f64
    }

    pub fn complement(&self) -> Self {
        Self::from_keep(self.keep.iter().map(|k| !k).collect())
    }

    fn check_len(&self, n_traces: usize) -> Result<()> {
        if self.keep.len() != n_traces {
            return Err(Error::dim(format!(
                "mask covers {} traces, data has {n_traces}",
                self.keep.len()
            )));
        }
        Ok(())
    }

    /// Zero the dropped traces of a `[C, H, W]` tensor (W = traces).
    pub fn apply<T: Real>(&self, data: &Tensor<T>) -> Result<Tensor<T>> {
        let w = *data
            .shape()
            .last()
            .ok_or_else(|| Error::dim("cannot mask a scalar"))?;
        self.check_len(w)?;
        let mut out = data.clone();
        for row in out.data_mut().chunks_mut(w) {
            for (v, &k) in row.iter_mut().zip(&self.keep) {
                if !k {
                    *v = T::zero();
                }
            }
        }
        Ok(out)
    }

    pub fn apply_gather(&self, g: &Gather) -> Result<Gather> {
        self.check_len(g.n_traces())?;
        let mut out = g.clone();
        let nt = g.n_traces();
        for row in out.data_mut().chunks_mut(nt) {
            for (v, &k) in row.iter_mut().zip(&self.keep) {
                if !k {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// Plain-text form: optional `# seed=N` header, then one `0`/`1` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed={seed}");
        }
        for &k in &self.keep {
            s.push(if k { '1' } else { '0' });
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut keep = Vec::new();
        let mut seed = None;
        let mut offset = 0u64;
        for line in text.lines() {
            let t = line.trim();
            if let Some(comment) = t.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("seed=") {
                    seed = v.trim().parse().ok();
                }
            } else {
                match t {
                    "" => {}
                    "0" => keep.push(false),
                    "1" => keep.push(true),
                    other => {
                        return Err(Error::Parse {
                            offset,
                            detail: format!("mask line must be 0 or 1, got {other:?}"),
                        })
                    }
                }
            }
            offset += line.len() as u64 + 1;
        }
        if keep.is_empty() {
            return Err(Error::Parse {
                offset: 0,
                detail: "mask file lists no traces".into(),
            });
        }
        Ok(Self { keep, seed })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// How the per-iteration re-decimation mask is drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RPrimePolicy {
    /// Same missing fraction as the observed mask, clamped to `[0.1, 0.9]`.
    MatchBase,
    Fixed(f64),
}

impl Default for RPrimePolicy {
    fn default() -> Self {
        RPrimePolicy::MatchBase
    }
}

impl RPrimePolicy {
    pub fn fraction(&self, base: &TraceMask) -> f64 {
        match *self {
            RPrimePolicy::MatchBase => base.missing_fraction().clamp(0.1, 0.9),
            RPrimePolicy::Fixed(f) => f,
        }
    }
}

impl std::str::FromStr for RPrimePolicy {
    type Err = Error;

    /// `match` or a fixed missing fraction such as `0.4`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "match" {
            return Ok(RPrimePolicy::MatchBase);
        }
        match s.parse::<f64>() {
            Ok(f) if (0.0..1.0).contains(&f) => Ok(RPrimePolicy::Fixed(f)),
            _ => Err(Error::usage(format!(
                "R' policy must be `match` or a fraction in [0, 1), got {s:?}"
            ))),
        }
    }
}

impl std::fmt::Display for RPrimePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RPrimePolicy::MatchBase => f.write_str("match"),
            RPrimePolicy::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Fresh re-decimation mask over all traces of `base`.
pub fn resample_rprime<R: Rng + ?Sized>(
    base: &TraceMask,
    policy: RPrimePolicy,
    rng: &mut R,
) -> Result<TraceMask> {
    TraceMask::random(base.len(), policy.fraction(base), rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(ns: usize, nt: usize) -> Gather {
        let data = (0..ns * nt).map(|i| 1.0 + (i % 7) as f32).collect();
        Gather::new(ns, nt, 0.004, data).unwrap()
    }

    #[test]
    fn exact_drop_count() {
        let m = TraceMask::generate(100, 0.5, 3).unwrap();
        assert_eq!(m.n_missing(), 50);
        assert_eq!(TraceMask::generate(100, 0.0, 3).unwrap().n_missing(), 0);
        assert_eq!(TraceMask::generate(10, 0.25, 1).unwrap().n_missing(), 3);
        assert!(TraceMask::generate(10, 1.0, 1).is_err());
        assert!(TraceMask::generate(0, 0.5, 1).is_err());
    }

    #[test]
    fn seeded_masks() {
        let a = TraceMask::generate(128, 0.5, 11).unwrap();
        assert_eq!(a, TraceMask::generate(128, 0.5, 11).unwrap());
        assert_ne!(a.keep(), TraceMask::generate(128, 0.5, 12).unwrap().keep());
    }

    #[test]
    fn detect_dead_columns() {
        let mut g = ramp(5, 10);
        for i in 0..5 {
            g.set(i, 3, 0.0);
            g.set(i, 7, 0.0);
        }
        let m = TraceMask::detect(&g, DEFAULT_DETECT_EPS).unwrap();
        let missing: Vec<usize> = (0..10).filter(|&j| !m.is_observed(j)).collect();
        assert_eq!(missing, [3, 7]);
        assert_eq!(
            TraceMask::detect(&ramp(5, 10), DEFAULT_DETECT_EPS).unwrap().n_missing(),
            0
        );
        let zero = Gather::zeros(4, 4, 0.004).unwrap();
        assert!(matches!(
            TraceMask::detect(&zero, DEFAULT_DETECT_EPS),
            Err(Error::NoLiveTraces)
        ));
    }

    #[test]
    fn apply_properties() {
        let t = Tensor::from_fn(&[1, 3, 4], |i| i as f32 + 1.0);
        let all = TraceMask::all_observed(4);
        assert_eq!(all.apply(&t).unwrap(), t);
        let m = TraceMask::from_keep(vec![true, false, false, true]);
        let once = m.apply(&t).unwrap();
        assert_eq!(m.apply(&once).unwrap(), once);
        assert_eq!(once.data()[..4], [1.0, 0.0, 0.0, 4.0]);
        assert!(TraceMask::all_observed(3).apply(&t).is_err());
    }

    #[test]
    fn rprime_policies() {
        let base = TraceMask::generate(10, 0.5, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rp = resample_rprime(&base, RPrimePolicy::MatchBase, &mut rng).unwrap();
        assert_eq!(rp.n_missing(), 5);
        let fixed = resample_rprime(&base, RPrimePolicy::Fixed(0.3), &mut rng).unwrap();
        assert_eq!(fixed.n_missing(), 3);
        let none = TraceMask::all_observed(20);
        assert_eq!(RPrimePolicy::MatchBase.fraction(&none), 0.1);

        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| resample_rprime(&base, RPrimePolicy::MatchBase, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn text_round_trip() {
        let m = TraceMask::generate(9, 0.4, 42).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("# seed=42\n"));
        assert_eq!(TraceMask::parse(&text).unwrap(), m);
        assert!(matches!(
            TraceMask::parse("1\n2\n"),
            Err(Error::Parse { offset: 2, .. })
        ));
    }
}
