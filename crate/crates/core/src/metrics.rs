//! Reconstruction quality metrics: SSIM, R² and a PCA noise-level estimate.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gather::Gather;

pub const DEFAULT_SSIM_WINDOW: usize = 11;
pub const DEFAULT_SSIM_SIGMA: f64 = 1.5;
pub const DEFAULT_K1: f64 = 0.01;
pub const DEFAULT_K2: f64 = 0.03;
pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.95;

fn same_shape(a: &Gather, b: &Gather) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "gather shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let raw: Vec<f64> = (0..window)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable "valid" filtering: only positions where the window fits.
fn filter_valid(img: &[f64], rows: usize, cols: usize, k: &[f64]) -> Vec<f64> {
    let w = k.len();
    let (orows, ocols) = (rows - w + 1, cols - w + 1);
    let mut horiz = vec![0.0; rows * ocols];
    for r in 0..rows {
        let src = &img[r * cols..(r + 1) * cols];
        for c in 0..ocols {
            horiz[r * ocols + c] = k.iter().zip(&src[c..c + w]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; orows * ocols];
    for r in 0..orows {
        for c in 0..ocols {
            out[r * ocols + c] = (0..w).map(|i| k[i] * horiz[(r + i) * ocols + c]).sum();
        }
    }
    out
}

/// Mean structural similarity between `a` and the reference `b`, using a
/// Gaussian-weighted sliding window (σ = 1.5) over fully interior positions.
/// The dynamic range `L` is `max(b) − min(b)`, or 1 when `b` is constant.
pub fn ssim(a: &Gather, b: &Gather, window: usize, k1: f64, k2: f64) -> Result<f64> {
    Ok(ssim_map(a, b, window, k1, k2)?.mean)
}

/// Per-window SSIM values plus their mean.
#[derive(Clone, Debug)]
pub struct SsimMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mean: f64,
}

pub fn ssim_map(a: &Gather, b: &Gather, window: usize, k1: f64, k2: f64) -> Result<SsimMap> {
    same_shape(a, b)?;
    if window < 3 || window % 2 == 0 {
        return Err(Error::usage(format!("SSIM window must be odd and >= 3, got {window}")));
    }
    let (rows, cols) = a.shape();
    if rows < window || cols < window {
        return Err(Error::usage(format!(
            "{rows}x{cols} gather is smaller than the {window}x{window} SSIM window"
        )));
    }
    let x: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (k1 * range).powi(2);
    let c2 = (k2 * range).powi(2);

    let k = gaussian_kernel(window, DEFAULT_SSIM_SIGMA);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, rows, cols, &k);
    let my = filter_valid(&y, rows, cols, &k);
    let mxx = filter_valid(&xx, rows, cols, &k);
    let myy = filter_valid(&yy, rows, cols, &k);
    let mxy = filter_valid(&xy, rows, cols, &k);

    let values: Vec<f64> = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            ((2.0 * (ux * uy) + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(SsimMap {
        rows: rows - window + 1,
        cols: cols - window + 1,
        values,
        mean,
    })
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r_squared(pred: &Gather, truth: &Gather) -> Result<f64> {
    same_shape(pred, truth)?;
    let n = truth.data().len() as f64;
    let mean = truth.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let ss_tot: f64 = truth.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("R² of a constant reference".into()));
    }
    let ss_res: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Expected eigenvalues, largest first, of `XᵀX / p` for a `p × r` (p ≥ r)
/// matrix of unit-variance i.i.d. noise: the Marchenko–Pastur quantiles at
/// mid-rank positions.
fn marchenko_pastur_quantiles(p: usize, r: usize) -> Vec<f64> {
    let beta = r as f64 / p as f64;
    let lo = (1.0 - beta.sqrt()).powi(2);
    let hi = (1.0 + beta.sqrt()).powi(2);
    const STEPS: usize = 8192;
    // x = lo + (hi − lo)(1 − cos πt)/2 removes the square-root edge
    // singularities from the density.
    let xs: Vec<f64> = (0..=STEPS)
        .map(|i| {
            let t = i as f64 / STEPS as f64;
            lo + (hi - lo) * (1.0 - (std::f64::consts::PI * t).cos()) / 2.0
        })
        .collect();
    let integrand: Vec<f64> = (0..=STEPS)
        .map(|i| {
            let t = i as f64 / STEPS as f64;
            let x = xs[i];
            let dx = (hi - lo) * std::f64::consts::PI * (std::f64::consts::PI * t).sin() / 2.0;
            if x <= 0.0 {
                // hard edge (square case): density·dx stays finite, take the
                // limit from the next node
                return f64::NAN;
            }
            ((hi - x) * (x - lo)).max(0.0).sqrt() / (2.0 * std::f64::consts::PI * beta * x) * dx
        })
        .collect();
    let integrand: Vec<f64> = integrand
        .iter()
        .enumerate()
        .map(|(i, &v)| if v.is_nan() { integrand.get(i + 1).copied().unwrap_or(0.0) } else { v })
        .collect();
    let mut cdf = vec![0.0; STEPS + 1];
    for i in 1..=STEPS {
        cdf[i] = cdf[i - 1] + 0.5 * (integrand[i] + integrand[i - 1]);
    }
    let total = cdf[STEPS];
    for v in &mut cdf {
        *v /= total;
    }
    (0..r)
        .map(|i| {
            let target = 1.0 - (i as f64 + 0.5) / r as f64;
            let j = cdf.partition_point(|&c| c < target).clamp(1, STEPS);
            let (c0, c1) = (cdf[j - 1], cdf[j]);
            let f = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
            xs[j - 1] + f * (xs[j] - xs[j - 1])
        })
        .collect()
}

/// Incoherent-noise standard deviation from the low-energy principal
/// components.
///
/// After removing each trace's mean, the leading components holding
/// `energy_threshold` of the total energy are treated as signal. The energy
/// left in the remaining components is compared with what i.i.d. noise of
/// unit variance would put in those same components (Marchenko–Pastur), and
/// the square root of that ratio is returned.
pub fn pca_noise_std(g: &Gather, energy_threshold: f64) -> Result<f64> {
    let (m, n) = g.shape();
    if m < 2 || n < 2 {
        return Err(Error::usage(format!(
            "noise estimate needs at least 2x2 samples, got {m}x{n}"
        )));
    }
    if !(energy_threshold > 0.0 && energy_threshold < 1.0) {
        return Err(Error::usage("energy threshold must lie in (0, 1)"));
    }
    let mut mat = DMatrix::<f64>::from_fn(m, n, |i, j| g.get(i, j) as f64);
    for j in 0..n {
        let mean = mat.column(j).mean();
        mat.column_mut(j).add_scalar_mut(-mean);
    }
    let mut energy: Vec<f64> = mat
        .singular_values()
        .iter()
        .map(|s| s * s)
        .collect();
    energy.sort_by(|a, b| b.total_cmp(a));

    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    // Column centering removes one degree of freedom along the time axis.
    let (rows, cols) = (m - 1, n);
    let (p, r) = (rows.max(cols), rows.min(cols));
    let mut cum = 0.0;
    let mut k = energy.len();
    for (i, e) in energy.iter().enumerate() {
        cum += e;
        if cum >= energy_threshold * total {
            k = i + 1;
            break;
        }
    }
    if k >= r {
        return Ok(0.0);
    }
    let expected = marchenko_pastur_quantiles(p, r);
    let tail: f64 = energy[k..r].iter().sum();
    let model: f64 = expected[k..r].iter().sum::<f64>() * p as f64;
    Ok((tail / model).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub ssim: f64,
    pub r_squared: f64,
    /// Noise level of the evaluated section.
    pub noise_std_mu: f64,
    /// Noise level of the reference, for comparison.
    pub truth_noise_std_mu: f64,
}

impl MetricsReport {
    /// Defaults: 11×11 window, k1 = 0.01, k2 = 0.03, 95 % energy threshold.
    pub fn evaluate(recon: &Gather, truth: &Gather) -> Result<Self> {
        Ok(Self {
            ssim: ssim(recon, truth, DEFAULT_SSIM_WINDOW, DEFAULT_K1, DEFAULT_K2)?,
            r_squared: r_squared(recon, truth)?,
            noise_std_mu: pca_noise_std(recon, DEFAULT_ENERGY_THRESHOLD)?,
            truth_noise_std_mu: pca_noise_std(truth, DEFAULT_ENERGY_THRESHOLD)?,
        })
    }

    pub fn csv_header() -> &'static str {
        "ssim,r_squared,noise_std_mu,truth_noise_std_mu"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6e},{:.6e}",
            self.ssim, self.r_squared, self.noise_std_mu, self.truth_noise_std_mu
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "SSIM            {:.4}", self.ssim);
        let _ = writeln!(s, "R^2             {:.4}", self.r_squared);
        let _ = writeln!(s, "noise mu        {:.4e}", self.noise_std_mu);
        let _ = writeln!(s, "truth noise mu  {:.4e}", self.truth_noise_std_mu);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise(m: usize, n: usize, sigma: f64, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..m * n).map(|_| d.sample(&mut rng) as f32).collect()
    }

    fn g(m: usize, n: usize, data: Vec<f32>) -> Gather {
        Gather::new(m, n, 0.004, data).unwrap()
    }

    #[test]
    fn ssim_identity_and_independence() {
        let x = g(64, 64, noise(64, 64, 1.0, 1));
        assert_eq!(ssim(&x, &x, 11, 0.01, 0.03).unwrap(), 1.0);
        // independent fields: the covariance term averages out
        let y = g(64, 64, noise(64, 64, 1.0, 2));
        let s = ssim(&y, &x, 11, 0.01, 0.03).unwrap();
        assert!(s.abs() < 0.1, "{s}");
    }

    #[test]
    fn ssim_constant_reference_is_finite() {
        let z = Gather::zeros(16, 16, 0.004).unwrap();
        assert_eq!(ssim(&z, &z, 11, 0.01, 0.03).unwrap(), 1.0);
        let x = g(16, 16, noise(16, 16, 1.0, 2));
        assert!(ssim(&x, &z, 11, 0.01, 0.03).unwrap().is_finite());
    }

    #[test]
    fn ssim_rejects_bad_windows() {
        let x = Gather::zeros(16, 16, 0.004).unwrap();
        assert!(ssim(&x, &x, 4, 0.01, 0.03).is_err());
        assert!(ssim(&x, &x, 17, 0.01, 0.03).is_err());
        let y = Gather::zeros(16, 15, 0.004).unwrap();
        assert!(matches!(ssim(&x, &y, 11, 0.01, 0.03), Err(Error::Dimension(_))));
    }

    #[test]
    fn r_squared_definitions() {
        let t = g(8, 8, noise(8, 8, 1.0, 3));
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        let mean = t.data().iter().map(|&v| v as f64).sum::<f64>() / 64.0;
        let flat = t.with_data(vec![mean as f32; 64]).unwrap();
        assert!(r_squared(&flat, &t).unwrap().abs() < 1e-6);
        assert!(matches!(
            r_squared(&t, &flat),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn r_squared_half_for_half_variance_noise() {
        // Monte-Carlo oracle: unit-variance truth plus noise of variance 1/2
        // gives E[SS_res/SS_tot] = 1/2.
        let mut acc = 0.0;
        let draws = 20;
        for s in 0..draws {
            let t = g(64, 64, noise(64, 64, 1.0, 100 + s));
            let e = noise(64, 64, 0.5f64.sqrt(), 500 + s);
            let p = t
                .with_data(t.data().iter().zip(&e).map(|(a, b)| a + b).collect())
                .unwrap();
            acc += r_squared(&p, &t).unwrap();
        }
        let mean = acc / draws as f64;
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn mp_quantiles_have_unit_mean() {
        // E[λ] = 1 for the Marchenko–Pastur law at any aspect ratio.
        for (p, r) in [(256, 256), (512, 128), (1000, 10)] {
            let q = marchenko_pastur_quantiles(p, r);
            let mean = q.iter().sum::<f64>() / r as f64;
            assert!((mean - 1.0).abs() < 0.01, "{p}x{r}: {mean}");
            assert!(q.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn noise_std_on_pure_noise() {
        for s in 0..4 {
            let x = g(256, 256, noise(256, 256, 10.0, s));
            let est = pca_noise_std(&x, 0.95).unwrap();
            assert!((est - 10.0).abs() < 1.5, "{est}");
        }
    }

    #[test]
    fn noise_std_rank_one() {
        let m = 256;
        let u: Vec<f64> = (0..m).map(|i| (i as f64 * 0.1).sin()).collect();
        let v: Vec<f64> = (0..m).map(|j| 1.0 + (j as f64 * 0.05).cos()).collect();
        let clean: Vec<f32> = (0..m * m).map(|k| (u[k / m] * v[k % m] * 3.0) as f32).collect();
        let peak = clean.iter().fold(0.0f32, |a, b| a.max(b.abs())) as f64;
        let est = pca_noise_std(&g(m, m, clean.clone()), 0.95).unwrap();
        assert!(est < 1e-6 * peak, "{est}");

        let e = noise(m, m, 1.0, 77);
        let noisy = clean.iter().zip(&e).map(|(a, b)| a + b).collect();
        let est = pca_noise_std(&g(m, m, noisy), 0.95).unwrap();
        assert!((est - 1.0).abs() < 0.15, "{est}");
    }

    #[test]
    fn noise_std_invariances() {
        let (m, n) = (64, 48);
        let base: Vec<f32> = noise(m, n, 2.0, 9)
            .iter()
            .enumerate()
            .map(|(k, v)| v + ((k / n) as f32 * 0.3).sin() * 5.0)
            .collect();
        let x = g(m, n, base);
        let est = pca_noise_std(&x, 0.95).unwrap();
        let perm: Vec<usize> = (0..n).map(|j| (j * 7) % n).collect();
        let mut y = x.clone();
        for i in 0..m {
            for (j, &pj) in perm.iter().enumerate() {
                let sign = if j % 3 == 0 { -1.0 } else { 1.0 };
                y.set(i, j, sign * x.get(i, pj));
            }
        }
        let est2 = pca_noise_std(&y, 0.95).unwrap();
        assert!((est - est2).abs() < 1e-9 * est.max(1.0), "{est} vs {est2}");
        assert!(pca_noise_std(&g(1, 4, vec![0.0; 4]), 0.95).is_err());
        assert!(pca_noise_std(&x, 1.0).is_err());
    }

    #[test]
    fn report_formats() {
        let x = g(16, 16, noise(16, 16, 1.0, 4));
        let r = MetricsReport::evaluate(&x, &x).unwrap();
        assert_eq!(r.ssim, 1.0);
        assert_eq!(r.r_squared, 1.0);
        assert!(r.to_csv().starts_with("ssim,r_squared"));
        assert!(r.to_text().contains("SSIM"));
    }
}
