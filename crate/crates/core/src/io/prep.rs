use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::masking::{TraceMask, DEFAULT_DETECT_EPS};

const NORMALIZE_PERCENTILE: f64 = 99.9;

/// Linear-interpolated percentile (`q` in percent) of an unsorted sample.
fn percentile(values: &mut [f32], q: f64) -> f64 {
    values.sort_by(f32::total_cmp);
    let pos = q / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    values[lo] as f64 * (1.0 - f) + values[hi] as f64 * f
}

/// Divide by the 99.9th percentile of `|amplitude|` over live traces, which
/// are detected from the data.
pub fn normalize(g: &Gather) -> Result<(Gather, f64)> {
    let mask = TraceMask::detect(g, DEFAULT_DETECT_EPS)?;
    normalize_with_mask(g, &mask)
}

pub fn normalize_with_mask(g: &Gather, mask: &TraceMask) -> Result<(Gather, f64)> {
    if mask.len() != g.n_traces() {
        return Err(Error::dim("mask does not match gather"));
    }
    let mut live: Vec<f32> = (0..g.n_samples())
        .flat_map(|i| (0..g.n_traces()).map(move |j| (i, j)))
        .filter(|&(_, j)| mask.is_observed(j))
        .map(|(i, j)| g.get(i, j).abs())
        .collect();
    if live.is_empty() {
        return Err(Error::NoLiveTraces);
    }
    let mut scale = percentile(&mut live, NORMALIZE_PERCENTILE);
    if scale == 0.0 {
        // sparse data: fall back to the peak
        scale = *live.last().unwrap() as f64;
    }
    if scale == 0.0 {
        return Err(Error::NoLiveTraces);
    }
    let inv = scale as f32;
    let mut out = g.with_data(g.data().iter().map(|v| v / inv).collect())?;
    out.scale = g.scale * scale;
    Ok((out, scale))
}

/// Inverse of [`normalize`].
pub fn denormalize(g: &Gather, scale: f64) -> Result<Gather> {
    let s = scale as f32;
    let mut out = g.with_data(g.data().iter().map(|v| v * s).collect())?;
    out.scale = g.scale / scale;
    Ok(out)
}

/// How [`pad_to_multiple`] grew a gather; padding is appended after the last
/// sample and the last trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Padding {
    pub original: (usize, usize),
    pub padded: (usize, usize),
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(j: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = j % period;
    if r < n {
        r
    } else {
        period - r
    }
}

fn round_up(n: usize, multiple: usize) -> usize {
    n.div_ceil(multiple) * multiple
}

/// Reflect-pad both axes up to the next multiple. A padded trace is observed
/// only if the trace it mirrors is.
pub fn pad_to_multiple(
    g: &Gather,
    mask: &TraceMask,
    multiple: usize,
) -> Result<(Gather, TraceMask, Padding)> {
    if multiple == 0 {
        return Err(Error::usage("padding multiple must be positive"));
    }
    if mask.len() != g.n_traces() {
        return Err(Error::dim("mask does not match gather"));
    }
    let (ns, nt) = g.shape();
    let (ps, pt) = (round_up(ns, multiple), round_up(nt, multiple));
    let mut data = Vec::with_capacity(ps * pt);
    for i in 0..ps {
        let si = reflect(i, ns);
        for j in 0..pt {
            data.push(g.get(si, reflect(j, nt)));
        }
    }
    let mut out = Gather::new(ps, pt, g.dt, data)?;
    out.meta = g.meta.clone();
    out.scale = g.scale;
    let keep = (0..pt).map(|j| mask.is_observed(reflect(j, nt))).collect();
    let pad = Padding {
        original: (ns, nt),
        padded: (ps, pt),
    };
    Ok((out, TraceMask::from_keep(keep), pad))
}

/// Keep the leading `extents = (n_samples, n_traces)` block.
pub fn crop(g: &Gather, extents: (usize, usize)) -> Result<Gather> {
    let (ns, nt) = extents;
    if ns > g.n_samples() || nt > g.n_traces() {
        return Err(Error::dim(format!(
            "cannot crop {:?} to {extents:?}",
            g.shape()
        )));
    }
    let data = (0..ns)
        .flat_map(|i| (0..nt).map(move |j| (i, j)))
        .map(|(i, j)| g.get(i, j))
        .collect();
    let mut out = Gather::new(ns, nt, g.dt, data)?;
    out.meta = g.meta.clone();
    out.scale = g.scale;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(ns: usize, nt: usize) -> Gather {
        Gather::new(ns, nt, 0.004, (0..ns * nt).map(|i| (i as f32 * 0.1).sin()).collect()).unwrap()
    }

    #[test]
    fn normalize_round_trip() {
        let g = ramp(20, 10);
        let (n, s) = normalize(&g).unwrap();
        let back = denormalize(&n, s).unwrap();
        for (a, b) in back.data().iter().zip(g.data()) {
            assert!((a - b).abs() <= b.abs() * f32::EPSILON);
        }
    }

    #[test]
    fn constant_gather_scale() {
        let g = Gather::new(4, 4, 0.004, vec![10.0; 16]).unwrap();
        let (n, s) = normalize(&g).unwrap();
        assert_eq!(s, 10.0);
        assert!(n.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn outlier_does_not_set_scale() {
        // 2000 live samples uniform in magnitude plus one huge spike
        let mut data: Vec<f32> = (0..2000).map(|i| ((i % 100) + 1) as f32 / 100.0).collect();
        data[1234] = 1.0e4;
        let g = Gather::new(200, 10, 0.004, data).unwrap();
        let (n, _) = normalize(&g).unwrap();
        let mut abs: Vec<f32> = n.data().iter().map(|v| v.abs()).collect();
        let p = percentile(&mut abs, 99.9);
        assert!((p - 1.0).abs() < 1e-6, "{p}");
        assert!(n.max_abs() > 1.0);
    }

    #[test]
    fn normalize_needs_live_data() {
        let g = Gather::zeros(3, 3, 0.004).unwrap();
        assert!(normalize(&g).is_err());
    }

    #[test]
    fn pad_and_crop() {
        let g = ramp(100, 130);
        let mask = TraceMask::generate(130, 0.3, 1).unwrap();
        let (p, pm, pad) = pad_to_multiple(&g, &mask, 16).unwrap();
        assert_eq!(p.shape(), (112, 144));
        assert_eq!(pad.padded, (112, 144));
        assert_eq!(pm.len(), 144);
        for j in 130..144 {
            assert_eq!(pm.is_observed(j), mask.is_observed(2 * 129 - j));
        }
        assert_eq!(crop(&p, pad.original).unwrap(), g);

        let same = ramp(32, 16);
        let (p, _, _) = pad_to_multiple(&same, &TraceMask::all_observed(16), 16).unwrap();
        assert_eq!(p, same);

        let one = Gather::new(1, 1, 0.004, vec![2.0]).unwrap();
        let (p, m, _) = pad_to_multiple(&one, &TraceMask::all_observed(1), 16).unwrap();
        assert_eq!(p.shape(), (16, 16));
        assert!(p.data().iter().all(|&v| v == 2.0));
        assert_eq!(m.n_observed(), 16);
    }

    #[test]
    fn reflection_indices() {
        let idx: Vec<usize> = (0..9).map(|j| reflect(j, 4)).collect();
        assert_eq!(idx, [0, 1, 2, 3, 2, 1, 0, 1, 2]);
    }
}
