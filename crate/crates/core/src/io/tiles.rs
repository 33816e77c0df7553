//! Overlapping tiles with raised-cosine blending.

use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::masking::TraceMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileRect {
    pub sample0: usize,
    pub trace0: usize,
    pub n_samples: usize,
    pub n_traces: usize,
}

#[derive(Clone, Debug)]
pub struct TilePlan {
    pub extents: (usize, usize),
    /// Nominal tile size `(samples, traces)`, clipped to the gather.
    pub tile: (usize, usize),
    /// Step between tile origins per axis.
    pub step: (usize, usize),
    pub tiles: Vec<TileRect>,
    /// Sum of raw blend weights at every sample, row-major.
    coverage: Vec<f64>,
}

/// Tile origins along one axis: evenly stepped, last tile flush with the end.
fn axis_starts(len: usize, tile: usize, step: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|k| k * step).take_while(|&s| s + tile < len).collect();
    starts.push(len - tile);
    starts.dedup();
    starts
}

/// Raised-cosine taper, strictly positive so every sample has weight.
fn taper(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * x).cos()
        })
        .collect()
}

/// Cover an `(n_samples, n_traces)` section with tiles of `tile` extents
/// overlapping by `overlap` (a fraction in `[0, 1)`), with steps rounded down
/// to `align` so every tile origin stays on the alignment grid.
pub fn plan_tiles(
    extents: (usize, usize),
    tile: (usize, usize),
    overlap: f64,
    align: usize,
) -> Result<TilePlan> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::usage(format!("tile overlap must lie in [0, 1), got {overlap}")));
    }
    if tile.0 == 0 || tile.1 == 0 || align == 0 {
        return Err(Error::usage("tile extents and alignment must be positive"));
    }
    if extents.0 == 0 || extents.1 == 0 {
        return Err(Error::usage("cannot tile an empty section"));
    }
    let tile = (tile.0.min(extents.0), tile.1.min(extents.1));
    let step_for = |t: usize| {
        let s = ((t as f64) * (1.0 - overlap)).floor() as usize;
        ((s / align) * align).max(align).min(t)
    };
    let step = (step_for(tile.0), step_for(tile.1));
    let rows = axis_starts(extents.0, tile.0, step.0);
    let cols = axis_starts(extents.1, tile.1, step.1);
    let tiles: Vec<TileRect> = rows
        .iter()
        .flat_map(|&r| {
            cols.iter().map(move |&c| TileRect {
                sample0: r,
                trace0: c,
                n_samples: tile.0,
                n_traces: tile.1,
            })
        })
        .collect();
    let mut plan = TilePlan {
        extents,
        tile,
        step,
        tiles,
        coverage: vec![0.0; extents.0 * extents.1],
    };
    let (wr, wc) = (taper(tile.0), taper(tile.1));
    for t in plan.tiles.clone() {
        for (i, a) in wr.iter().enumerate() {
            let row = (t.sample0 + i) * extents.1 + t.trace0;
            for (j, b) in wc.iter().enumerate() {
                plan.coverage[row + j] += a * b;
            }
        }
    }
    Ok(plan)
}

impl TilePlan {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Normalized blend weights of tile `k`, row-major over the tile.
    pub fn weights(&self, k: usize) -> Vec<f64> {
        let t = self.tiles[k];
        let (wr, wc) = (taper(t.n_samples), taper(t.n_traces));
        let mut out = Vec::with_capacity(t.n_samples * t.n_traces);
        for (i, a) in wr.iter().enumerate() {
            for (j, b) in wc.iter().enumerate() {
                let cov = self.coverage[(t.sample0 + i) * self.extents.1 + t.trace0 + j];
                out.push(a * b / cov);
            }
        }
        out
    }

    /// Sum of normalized weights at every sample (all ones by construction).
    pub fn weight_field(&self) -> Vec<f64> {
        let mut field = vec![0.0; self.extents.0 * self.extents.1];
        for k in 0..self.tiles.len() {
            let t = self.tiles[k];
            for (idx, w) in self.weights(k).into_iter().enumerate() {
                let (i, j) = (idx / t.n_traces, idx % t.n_traces);
                field[(t.sample0 + i) * self.extents.1 + t.trace0 + j] += w;
            }
        }
        field
    }

    fn check(&self, g: &Gather) -> Result<()> {
        if g.shape() != self.extents {
            return Err(Error::dim(format!(
                "plan covers {:?}, gather is {:?}",
                self.extents,
                g.shape()
            )));
        }
        Ok(())
    }

    /// Cut `g` into the planned tiles.
    pub fn cut(&self, g: &Gather) -> Result<Vec<Gather>> {
        self.check(g)?;
        self.tiles
            .iter()
            .map(|t| {
                let data = (0..t.n_samples)
                    .flat_map(|i| (0..t.n_traces).map(move |j| (i, j)))
                    .map(|(i, j)| g.get(t.sample0 + i, t.trace0 + j))
                    .collect();
                let mut tile = Gather::new(t.n_samples, t.n_traces, g.dt, data)?;
                tile.scale = g.scale;
                Ok(tile)
            })
            .collect()
    }

    /// Per-tile slices of a trace mask.
    pub fn cut_mask(&self, mask: &TraceMask) -> Result<Vec<TraceMask>> {
        if mask.len() != self.extents.1 {
            return Err(Error::dim("mask does not match plan"));
        }
        Ok(self
            .tiles
            .iter()
            .map(|t| TraceMask::from_keep(mask.keep()[t.trace0..t.trace0 + t.n_traces].to_vec()))
            .collect())
    }
}

/// Blend tiles back into one section. `like` supplies dt and metadata.
pub fn stitch(tiles: &[Gather], plan: &TilePlan, like: &Gather) -> Result<Gather> {
    if tiles.len() != plan.tiles.len() {
        return Err(Error::dim(format!(
            "plan has {} tiles, got {}",
            plan.tiles.len(),
            tiles.len()
        )));
    }
    let (ns, nt) = plan.extents;
    let mut acc = vec![0.0f64; ns * nt];
    for (k, (tile, rect)) in tiles.iter().zip(&plan.tiles).enumerate() {
        if tile.shape() != (rect.n_samples, rect.n_traces) {
            return Err(Error::dim(format!("tile {k} has the wrong extents")));
        }
        for (idx, w) in plan.weights(k).into_iter().enumerate() {
            let (i, j) = (idx / rect.n_traces, idx % rect.n_traces);
            acc[(rect.sample0 + i) * nt + rect.trace0 + j] += w * tile.get(i, j) as f64;
        }
    }
    let mut out = Gather::new(ns, nt, like.dt, acc.into_iter().map(|v| v as f32).collect())?;
    out.meta = like.meta.clone();
    out.scale = like.scale;
    Ok(out)
}
