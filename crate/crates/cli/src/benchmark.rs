//! Paired comparison of the two training objectives on the synthetic scene.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use zscl_core::metrics::{pca_noise_std, MetricsReport, DEFAULT_ENERGY_THRESHOLD};
use zscl_core::{synth, Gather, NetConfig, Objective, ReconstructJob, TrainConfig, TraceMask};

use crate::config::{ConfigFile, List, Resolved};
use crate::error::CliError;
use crate::training::TRAIN_KEYS;
use crate::BenchmarkArgs;

/// Noisy scenes draw their noise from `NOISE_SEED_OFFSET + seed`.
pub const NOISE_SEED_OFFSET: u64 = 1000;

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub seeds: Vec<u64>,
    pub fractions: Vec<f64>,
    pub arms: Vec<Objective>,
    /// Noise standard deviation relative to the clean peak.
    pub noise: f64,
    /// Template job; its objective and seeds are replaced per run.
    pub job: ReconstructJob,
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub fraction: f64,
    pub seed: u64,
    pub arm: Objective,
    /// Against the clean scene.
    pub ssim: f64,
    pub r_squared: f64,
    pub noise_std_mu: f64,
    /// Noise estimate of the complete (undecimated, possibly noisy) scene.
    pub truth_noise_std_mu: f64,
    pub wall_seconds: f64,
}

/// Decimated benchmark input, its mask, and the complete noisy scene.
pub fn benchmark_case(fraction: f64, seed: u64, noise: f64) -> zscl_core::Result<(Gather, TraceMask, Gather)> {
    let full = synth::benchmark_scene(noise, NOISE_SEED_OFFSET + seed)?;
    let mask = TraceMask::generate(full.n_traces(), fraction, seed)?;
    Ok((mask.apply_gather(&full)?, mask, full))
}

fn run_one(
    spec: &BenchSpec,
    clean: &Gather,
    fraction: f64,
    seed: u64,
    arm: Objective,
) -> zscl_core::Result<BenchRow> {
    let (input, mask, full) = benchmark_case(fraction, seed, spec.noise)?;
    let job = ReconstructJob {
        net: NetConfig {
            seed,
            ..spec.job.net.clone()
        },
        train: TrainConfig {
            seed,
            objective: arm,
            ..spec.job.train.clone()
        },
        ..spec.job.clone()
    };
    let out = job.run(&input, Some(&mask))?;
    let metrics = MetricsReport::evaluate(&out.gather, clean)?;
    Ok(BenchRow {
        fraction,
        seed,
        arm,
        ssim: metrics.ssim,
        r_squared: metrics.r_squared,
        noise_std_mu: metrics.noise_std_mu,
        truth_noise_std_mu: pca_noise_std(&full, DEFAULT_ENERGY_THRESHOLD)?,
        wall_seconds: out.wall_seconds,
    })
}

/// Every `(fraction, seed, arm)` run, in canonical order whatever order
/// they complete in.
pub fn run_spec(spec: &BenchSpec) -> zscl_core::Result<Vec<BenchRow>> {
    let clean = synth::benchmark_scene(0.0, 0)?;
    let mut tasks = Vec::new();
    for &f in &spec.fractions {
        for &s in &spec.seeds {
            for &a in &spec.arms {
                tasks.push((f, s, a));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| zscl_core::Error::Usage(format!("thread pool: {e}")))?;
    let mut rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(f, s, a)| run_one(spec, &clean, f, s, a))
            .collect::<zscl_core::Result<Vec<_>>>()
    })?;
    rows.sort_by(|a, b| {
        a.fraction
            .total_cmp(&b.fraction)
            .then(a.seed.cmp(&b.seed))
            .then(a.arm.name().cmp(b.arm.name()))
    });
    Ok(rows)
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(
        "fraction,seed,arm,ssim,r_squared,noise_std_mu,truth_noise_std_mu,wall_seconds\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6e},{:.6e},{:.3}",
            r.fraction, r.seed, r.arm, r.ssim, r.r_squared, r.noise_std_mu, r.truth_noise_std_mu, r.wall_seconds
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub arm: Objective,
    pub runs: usize,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub r_squared_mean: f64,
    pub r_squared_std: f64,
    pub noise_std_mu_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractionSummary {
    pub fraction: f64,
    pub arms: Vec<ArmSummary>,
    /// Seeds where the self-consistent run has the higher SSIM.
    pub scl_wins: usize,
    /// Seeds with both arms present.
    pub paired: usize,
}

/// Mean and sample standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(rows: &[BenchRow]) -> Vec<FractionSummary> {
    let mut fractions: Vec<f64> = rows.iter().map(|r| r.fraction).collect();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    fractions
        .into_iter()
        .map(|fraction| {
            let here: Vec<&BenchRow> = rows.iter().filter(|r| r.fraction == fraction).collect();
            let mut arms = Vec::new();
            for arm in [Objective::SelfConsistency, Objective::Traditional] {
                let of: Vec<&&BenchRow> = here.iter().filter(|r| r.arm == arm).collect();
                if of.is_empty() {
                    continue;
                }
                let ssim: Vec<f64> = of.iter().map(|r| r.ssim).collect();
                let r2: Vec<f64> = of.iter().map(|r| r.r_squared).collect();
                let mu: Vec<f64> = of.iter().map(|r| r.noise_std_mu).collect();
                let (ssim_mean, ssim_std) = mean_std(&ssim);
                let (r_squared_mean, r_squared_std) = mean_std(&r2);
                arms.push(ArmSummary {
                    arm,
                    runs: of.len(),
                    ssim_mean,
                    ssim_std,
                    r_squared_mean,
                    r_squared_std,
                    noise_std_mu_mean: mean_std(&mu).0,
                });
            }
            let find = |seed: u64, arm: Objective| {
                here.iter().find(|r| r.seed == seed && r.arm == arm).map(|r| r.ssim)
            };
            let mut seeds: Vec<u64> = here.iter().map(|r| r.seed).collect();
            seeds.dedup();
            let pairs: Vec<(f64, f64)> = seeds
                .iter()
                .filter_map(|&s| Some((find(s, Objective::SelfConsistency)?, find(s, Objective::Traditional)?)))
                .collect();
            FractionSummary {
                fraction,
                arms,
                scl_wins: pairs.iter().filter(|(a, b)| a > b).count(),
                paired: pairs.len(),
            }
        })
        .collect()
}

pub fn summary_text(summaries: &[FractionSummary]) -> String {
    let mut s = String::new();
    for f in summaries {
        let _ = writeln!(s, "missing fraction {}", f.fraction);
        let _ = writeln!(
            s,
            "  {:<12} {:>4} {:>9} {:>9} {:>9} {:>9} {:>11}",
            "arm", "runs", "ssim", "ssim_sd", "r2", "r2_sd", "noise_mu"
        );
        for a in &f.arms {
            let _ = writeln!(
                s,
                "  {:<12} {:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>11.4e}",
                a.arm.name(),
                a.runs,
                a.ssim_mean,
                a.ssim_std,
                a.r_squared_mean,
                a.r_squared_std,
                a.noise_std_mu_mean
            );
        }
        if f.paired > 0 {
            let _ = writeln!(s, "  scl wins {}/{} seeds on SSIM", f.scl_wins, f.paired);
        }
    }
    s
}

const KEYS: &[&str] = &["seeds", "first_seed", "fractions", "arms", "noise", "jobs", "out"];

pub fn run(args: BenchmarkArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let known: Vec<&str> = KEYS.iter().chain(TRAIN_KEYS).copied().collect();
    file.check_keys(&known)?;

    let n_seeds = file.pick_or(args.seeds, "seeds", 10usize)?;
    let first_seed = file.pick_or(args.first_seed, "first_seed", 0u64)?;
    let fractions: List<f64> = file.pick_or(
        args.fractions.as_deref().map(str::parse).transpose().map_err(CliError::usage)?,
        "fractions",
        List(vec![0.3, 0.5]),
    )?;
    let arms: List<Objective> = file.pick_or(
        args.arms.as_deref().map(str::parse).transpose().map_err(CliError::usage)?,
        "arms",
        List(vec![Objective::SelfConsistency, Objective::Traditional]),
    )?;
    let noise = file.pick_or(args.noise, "noise", 0.0f64)?;
    let jobs = file.pick_or(
        args.jobs,
        "jobs",
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    )?;
    let out: PathBuf = file.require(args.out, "out")?;
    if n_seeds == 0 || fractions.0.is_empty() || arms.0.is_empty() {
        return Err(CliError::usage("need at least one seed, fraction and arm"));
    }
    if let Some(f) = fractions.0.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(CliError::usage(format!("fraction must lie in [0, 1), got {f}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(CliError::usage("noise must be non-negative"));
    }

    let mut resolved = Resolved::default();
    resolved.set("seeds", n_seeds);
    resolved.set("first_seed", first_seed);
    resolved.set("fractions", &fractions);
    resolved.set("arms", &arms);
    resolved.set("noise", noise);
    resolved.set("jobs", jobs);
    resolved.set("out", out.display());
    let job = args.train.resolve(&file, &mut resolved)?;
    resolved.echo();

    let spec = BenchSpec {
        seeds: (first_seed..first_seed + n_seeds as u64).collect(),
        fractions: fractions.0,
        arms: arms.0,
        noise,
        job,
        jobs,
    };
    std::fs::create_dir_all(&out).map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    let start = std::time::Instant::now();
    let rows = run_spec(&spec)?;
    let summary = summary_text(&summarize(&rows));
    let write = |name: &str, text: &str| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
    };
    write("benchmark.csv", &rows_csv(&rows))?;
    write("summary.txt", &summary)?;
    resolved.note(format!("wall_seconds = {:.3}", start.elapsed().as_secs_f64()));
    resolved.note(format!("runs = {}", rows.len()));
    write("manifest", &resolved.manifest_text())?;
    print!("{summary}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(fraction: f64, seed: u64, arm: Objective, ssim: f64) -> BenchRow {
        BenchRow {
            fraction,
            seed,
            arm,
            ssim,
            r_squared: ssim - 0.1,
            noise_std_mu: 0.01,
            truth_noise_std_mu: 0.01,
            wall_seconds: 1.0,
        }
    }

    #[test]
    fn summary_counts_wins() {
        use Objective::*;
        let rows = vec![
            row(0.5, 0, SelfConsistency, 0.9),
            row(0.5, 0, Traditional, 0.8),
            row(0.5, 1, SelfConsistency, 0.7),
            row(0.5, 1, Traditional, 0.8),
            row(0.5, 2, SelfConsistency, 0.9),
            row(0.5, 2, Traditional, 0.85),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].scl_wins, s[0].paired), (2, 3));
        let scl = &s[0].arms[0];
        assert!((scl.ssim_mean - 2.5 / 3.0).abs() < 1e-12);
        // deviations 1/15, -2/15, 1/15 over n - 1 = 2
        assert!((scl.ssim_std - (0.04f64 / 3.0).sqrt()).abs() < 1e-9);
        assert!(summary_text(&s).contains("scl wins 2/3"));
    }

    #[test]
    fn mean_std_small_samples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, sd) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((sd - 2f64.sqrt()).abs() < 1e-12);
    }
}
