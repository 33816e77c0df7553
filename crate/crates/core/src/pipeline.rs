//! End-to-end reconstruction of one gather.

use std::fmt::Write as _;
use std::time::Instant;

use crate::cae::{CaeParams, NetConfig};
use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::io::{crop, denormalize, normalize_with_mask, pad_to_multiple, plan_tiles, stitch};
use crate::masking::{TraceMask, DEFAULT_DETECT_EPS};
use crate::train::{reconstruct_with, train, Assembly, LossRecord, TrainConfig};

pub const DEFAULT_TILE: (usize, usize) = (512, 256);
pub const DEFAULT_OVERLAP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructJob {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub assembly: Assembly,
    /// Tile extents `(samples, traces)`; rounded up to the network multiple.
    pub tile: (usize, usize),
    pub overlap: f64,
}

impl Default for ReconstructJob {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            train: TrainConfig::default(),
            assembly: Assembly::Reinsert,
            tile: DEFAULT_TILE,
            overlap: DEFAULT_OVERLAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TileHistory {
    pub tile: usize,
    /// `None` when the tile held no live trace and was left at zero.
    pub records: Option<Vec<LossRecord>>,
    pub params: Option<CaeParams<f32>>,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub gather: Gather,
    pub mask: TraceMask,
    pub scale: f64,
    pub histories: Vec<TileHistory>,
    pub wall_seconds: f64,
}

impl Reconstruction {
    /// `tile,iteration,term1,term2,term3,total`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("tile,iteration,term1,term2,term3,total\n");
        for h in &self.histories {
            for r in h.records.iter().flatten() {
                let _ = writeln!(
                    s,
                    "{},{},{:e},{:e},{:e},{:e}",
                    h.tile, r.iteration, r.terms[0], r.terms[1], r.terms[2], r.total
                );
            }
        }
        s
    }
}

impl ReconstructJob {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.train.validate()?;
        if self.tile.0 == 0 || self.tile.1 == 0 {
            return Err(Error::usage("tile extents must be positive"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::usage("tile overlap must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Reconstruct `input`. Without a mask, traces that are zero throughout
    /// are taken as missing.
    pub fn run(&self, input: &Gather, mask: Option<&TraceMask>) -> Result<Reconstruction> {
        self.validate()?;
        let start = Instant::now();
        let mask = match mask {
            Some(m) if m.len() != input.n_traces() => {
                return Err(Error::dim(format!(
                    "mask covers {} traces, gather has {}",
                    m.len(),
                    input.n_traces()
                )))
            }
            Some(m) => m.clone(),
            None => TraceMask::detect(input, DEFAULT_DETECT_EPS)?,
        };
        if mask.n_observed() == 0 {
            return Err(Error::NoLiveTraces);
        }
        let observed = mask.apply_gather(input)?;
        let (normalized, scale) = normalize_with_mask(&observed, &mask)?;
        let multiple = self.net.spatial_multiple();
        let (padded, padded_mask, padding) = pad_to_multiple(&normalized, &mask, multiple)?;
        let tile = (
            self.tile.0.div_ceil(multiple) * multiple,
            self.tile.1.div_ceil(multiple) * multiple,
        );
        let plan = plan_tiles(padded.shape(), tile, self.overlap, multiple)?;
        let pieces = plan.cut(&padded)?;
        let masks = plan.cut_mask(&padded_mask)?;

        let mut outputs = Vec::with_capacity(pieces.len());
        let mut histories = Vec::with_capacity(pieces.len());
        for (k, (piece, m)) in pieces.iter().zip(&masks).enumerate() {
            if m.n_observed() == 0 {
                outputs.push(piece.with_data(vec![0.0; piece.data().len()])?);
                histories.push(TileHistory {
                    tile: k,
                    records: None,
                    params: None,
                });
                continue;
            }
            let net = NetConfig {
                seed: self.net.seed.wrapping_add(k as u64),
                ..self.net.clone()
            };
            let cfg = TrainConfig {
                seed: self.train.seed.wrapping_add(k as u64),
                ..self.train.clone()
            };
            let report = train(piece, m, &net, &cfg)?;
            let y = reconstruct_with(&report.params, &piece.to_tensor(), m, self.assembly)?;
            outputs.push(piece.from_tensor_like(&y)?);
            histories.push(TileHistory {
                tile: k,
                records: Some(report.history),
                params: Some(report.params),
            });
        }
        let stitched = stitch(&outputs, &plan, &padded)?;
        let cropped = crop(&stitched, padding.original)?;
        let mut gather = denormalize(&cropped, scale)?;
        gather.meta = input.meta.clone();
        gather.scale = input.scale;
        if self.assembly == Assembly::Reinsert {
            // observed traces must come back bit-for-bit
            let nt = input.n_traces();
            let src = input.data();
            for (idx, v) in gather.data_mut().iter_mut().enumerate() {
                if mask.is_observed(idx % nt) {
                    *v = src[idx];
                }
            }
        }
        Ok(Reconstruction {
            gather,
            mask,
            scale,
            histories,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Objective;

    fn small_job(iterations: usize) -> ReconstructJob {
        ReconstructJob {
            net: NetConfig {
                encoder_channels: vec![4, 8],
                fc_channels: 8,
                ..NetConfig::default()
            },
            train: TrainConfig {
                iterations,
                ..TrainConfig::default()
            },
            tile: (32, 16),
            ..ReconstructJob::default()
        }
    }

    fn wavy(ns: usize, nt: usize) -> Gather {
        let data = (0..ns * nt)
            .map(|i| {
                let (s, t) = ((i / nt) as f32, (i % nt) as f32);
                (0.3 * s + 0.1 * t).sin() * 40.0
            })
            .collect();
        Gather::new(ns, nt, 0.002, data).unwrap()
    }

    #[test]
    fn reinsertion_keeps_observed_traces() {
        let truth = wavy(40, 20);
        let mask = TraceMask::generate(20, 0.4, 3).unwrap();
        let input = mask.apply_gather(&truth).unwrap();
        let out = small_job(3).run(&input, None).unwrap();
        assert_eq!(out.mask, TraceMask::detect(&input, DEFAULT_DETECT_EPS).unwrap());
        assert_eq!(out.gather.shape(), input.shape());
        for j in 0..20 {
            if mask.is_observed(j) {
                assert_eq!(out.gather.trace(j), input.trace(j));
            }
        }
        assert!(out.histories.len() > 1);
    }

    #[test]
    fn deterministic() {
        let truth = wavy(32, 16);
        let mask = TraceMask::generate(16, 0.5, 9).unwrap();
        let input = mask.apply_gather(&truth).unwrap();
        let mut job = small_job(4);
        job.assembly = Assembly::Network;
        let a = job.run(&input, Some(&mask)).unwrap();
        let b = job.run(&input, Some(&mask)).unwrap();
        assert_eq!(a.gather, b.gather);
        job.train.objective = Objective::Traditional;
        let c = job.run(&input, Some(&mask)).unwrap();
        assert_ne!(a.gather, c.gather);
    }

    #[test]
    fn rejects_bad_mask() {
        let g = wavy(16, 16);
        let job = small_job(1);
        assert!(job.run(&g, Some(&TraceMask::all_observed(3))).is_err());
        let dead = TraceMask::from_keep(vec![false; 16]);
        assert!(matches!(job.run(&g, Some(&dead)), Err(Error::NoLiveTraces)));
    }
}
