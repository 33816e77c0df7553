//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Criteria 5 and 6 train 40 networks on the 512×128 scene and dominate the
//! runtime (roughly 20 minutes on one core).

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use zscl_cli::benchmark::{run_spec, summarize, BenchRow, BenchSpec};
use zscl_core::io::{self, plan_tiles, stitch, SampleFormat};
use zscl_core::masking::DEFAULT_DETECT_EPS;
use zscl_core::metrics::{pca_noise_std, r_squared, ssim, DEFAULT_ENERGY_THRESHOLD};
use zscl_core::tensor::{check_gradients, GradCheck, Tape, Tensor};
use zscl_core::train::{record_scl_loss, scl_loss, traditional_loss};
use zscl_core::{
    Assembly, CaeParams, Gather, NetConfig, Objective, ReconstructJob, TrainConfig, TraceMask,
};

type Outcome = Result<String, String>;

/// Means of the per-seed reference run in `tests/oracle/benchmark_ssim.csv`,
/// and the band the acceptance run must land in.
const ORACLE_SSIM_SCL: f64 = 0.8901;
const ORACLE_SSIM_TRADITIONAL: f64 = 0.8731;
const ORACLE_BAND: f64 = 0.02;

/// Training budget shared by both arms in criterion 5 (the library default).
const COMPARE_ITERATIONS: usize = 2000;
/// Budget for the noise criterion, judged on the raw network output.
const NOISE_ITERATIONS: usize = 1000;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn random_gather(ns: usize, nt: usize, rng: &mut ChaCha8Rng) -> Gather {
    let data = (0..ns * nt).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    Gather::new(ns, nt, 0.004, data).unwrap()
}

fn architecture() -> Outcome {
    let n = CaeParams::<f32>::build(&NetConfig::default())
        .map_err(|e| e.to_string())?
        .parameter_count();
    check(n == 90_609, format!("parameter_count = {n}"))
}

fn gradients() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = Vec::new();
    let mut run = |name: &str, shapes: &[&[usize]], build: &dyn Fn(&mut Tape<f64>, &[zscl_core::tensor::Var]) -> zscl_core::Result<zscl_core::tensor::Var>| {
        let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| random_tensor(s, &mut rng)).collect();
        let r: GradCheck = check_gradients(&inputs, H, build).map_err(|e| e.to_string())?;
        worst.push((name.to_string(), r.max_relative_error()));
        Ok::<_, String>(())
    };
    run("conv2d", &[&[2, 8, 6], &[3, 2, 4, 4], &[3], &[3, 4, 3]], &|t, v| {
        let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
        t.sq_norm_diff(y, v[3])
    })?;
    run("conv2d_transpose", &[&[3, 3, 2], &[3, 2, 4, 4], &[2], &[2, 6, 4]], &|t, v| {
        let y = t.conv2d_transpose(v[0], v[1], v[2], 2, 1)?;
        t.sq_norm_diff(y, v[3])
    })?;
    run("channel_linear", &[&[4, 3, 2], &[5, 4], &[5], &[5, 3, 2]], &|t, v| {
        let y = t.channel_linear(v[0], v[1], v[2])?;
        t.sq_norm_diff(y, v[3])
    })?;
    run("leaky_rect", &[&[2, 4, 5], &[2, 4, 5]], &|t, v| {
        let y = t.leaky_rect(v[0], 0.2)?;
        t.sq_norm_diff(y, v[1])
    })?;
    run("mask_traces", &[&[2, 4, 5], &[2, 4, 5]], &|t, v| {
        let y = t.mask_traces(v[0], &[true, false, true, true, false])?;
        t.sq_norm_diff(y, v[1])
    })?;
    run("sq_norm_diff + weighted_sum", &[&[3, 3], &[3, 3], &[3, 3]], &|t, v| {
        let a = t.sq_norm_diff(v[0], v[1])?;
        let b = t.sq_norm_diff(v[1], v[2])?;
        t.weighted_sum(&[(a, 0.7), (b, 1.9)])
    })?;
    let per_op = worst.iter().map(|w| w.1).fold(0.0, f64::max);

    let net = NetConfig {
        encoder_channels: vec![4, 8],
        fc_channels: 8,
        seed: 7,
        ..NetConfig::default()
    };
    let params = CaeParams::<f64>::build(&net).map_err(|e| e.to_string())?;
    let r = TraceMask::generate(16, 0.5, 3).unwrap();
    let rp = TraceMask::generate(16, 0.5, 4).unwrap();
    let d = r.apply(&random_tensor(&[1, 8, 16], &mut rng)).unwrap();
    let mut inputs: Vec<Tensor<f64>> = params.tensors().cloned().collect();
    inputs.push(d);
    let e2e = check_gradients(&inputs, H, |t, v| {
        let (dv, leaves) = v.split_last().unwrap();
        let vars = params.vars_from_leaves(leaves)?;
        Ok(record_scl_loss(t, &params, &vars, *dv, &r, &rp, [1.0, 1.0, 1.0])?.total)
    })
    .map_err(|e| e.to_string())?
    .max_relative_error();
    check(
        per_op < 1e-4 && e2e < 1e-3,
        format!("worst per-op relative error {per_op:.2e}, end-to-end {e2e:.2e}"),
    )
}

fn loss_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let depth = rng.random_range(1..=3usize);
        let channels: Vec<usize> = (0..depth).map(|i| 2 << i).collect();
        let net = NetConfig {
            fc_channels: rng.random_range(1..6),
            encoder_channels: channels,
            seed: case,
            ..NetConfig::default()
        };
        let m = net.spatial_multiple();
        let (h, w) = (m * rng.random_range(1..4), m * rng.random_range(1..4));
        let params = CaeParams::<f32>::build(&net).map_err(|e| e.to_string())?;
        let r = TraceMask::generate(w, rng.random_range(0.0..0.7), case).unwrap();
        let rp = TraceMask::generate(w, rng.random_range(0.0..0.7), case + 500).unwrap();
        let d = r.apply(&random_tensor(&[1, h, w], &mut rng).cast::<f32>()).unwrap();
        let (scl, _) = scl_loss(&params, &d, &r, &rp, [1.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
        let trad = traditional_loss(&params, &d, &r).map_err(|e| e.to_string())?;
        let rel = ((scl - trad).abs() / trad.abs().max(f32::MIN_POSITIVE)) as f64;
        worst = worst.max(rel);
    }
    check(worst < 1e-6, format!("worst relative gap {worst:.2e} over 100 instances"))
}

fn masking_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000u64 {
        let (ns, nt) = (rng.random_range(1..20), rng.random_range(1..60));
        let mut g = random_gather(ns, nt, &mut rng);
        for j in 0..nt {
            g.set(0, j, 3.0); // every trace live
        }
        let mask = TraceMask::generate(nt, rng.random_range(0.0..0.99), case).unwrap();
        let once = mask.apply_gather(&g).unwrap();
        let twice = mask.apply_gather(&once).unwrap();
        let rest = mask.complement().apply_gather(&g).unwrap();
        let sum_ok = once
            .data()
            .iter()
            .zip(rest.data())
            .zip(g.data())
            .all(|((a, b), c)| a + b == *c && (*a == 0.0 || *b == 0.0));
        let round_trip = mask.n_observed() == 0
            || TraceMask::detect(&once, DEFAULT_DETECT_EPS).unwrap().keep() == mask.keep();
        if twice != once || !sum_ok || !round_trip {
            return Err(format!("violated on case {case} ({ns}x{nt})"));
        }
    }
    Ok("idempotence, complementarity and detect round trip hold on 1000 cases".into())
}

fn bench(spec: BenchSpec) -> Result<Vec<BenchRow>, String> {
    run_spec(&spec).map_err(|e| e.to_string())
}

fn comparative() -> Outcome {
    let job = ReconstructJob {
        train: TrainConfig {
            iterations: COMPARE_ITERATIONS,
            ..TrainConfig::default()
        },
        ..ReconstructJob::default()
    };
    let rows = bench(BenchSpec {
        seeds: (0..10).collect(),
        fractions: vec![0.5],
        arms: vec![Objective::SelfConsistency, Objective::Traditional],
        noise: 0.0,
        job,
        jobs: 1,
    })?;
    let s = &summarize(&rows)[0];
    let (scl, trad) = (&s.arms[0], &s.arms[1]);
    let per_seed: Vec<String> = rows
        .chunks(2)
        .map(|p| format!("{}:{:.4}/{:.4}", p[0].seed, p[0].ssim, p[1].ssim))
        .collect();
    let in_band = (scl.ssim_mean - ORACLE_SSIM_SCL).abs() <= ORACLE_BAND
        && (trad.ssim_mean - ORACLE_SSIM_TRADITIONAL).abs() <= ORACLE_BAND;
    check(
        scl.ssim_mean > trad.ssim_mean && s.scl_wins >= 8 && in_band,
        format!(
            "mean SSIM scl {:.4} vs traditional {:.4}, scl wins {}/{}, oracle band {}; seeds [{}]",
            scl.ssim_mean,
            trad.ssim_mean,
            s.scl_wins,
            s.paired,
            if in_band { "met" } else { "missed" },
            per_seed.join(" ")
        ),
    )
}

fn noise_suppression() -> Outcome {
    let job = ReconstructJob {
        train: TrainConfig {
            iterations: NOISE_ITERATIONS,
            ..TrainConfig::default()
        },
        assembly: Assembly::Network,
        ..ReconstructJob::default()
    };
    let rows = bench(BenchSpec {
        seeds: (0..10).collect(),
        fractions: vec![0.3],
        arms: vec![Objective::SelfConsistency],
        noise: 0.1,
        job,
        jobs: 1,
    })?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.noise_std_mu / r.truth_noise_std_mu).collect();
    let passing = ratios.iter().filter(|&&q| q < 0.7).count();
    let shown: Vec<String> = ratios.iter().map(|q| format!("{q:.3}")).collect();
    check(
        passing >= 8,
        format!("{passing}/10 seeds below 0.7; ratios [{}]", shown.join(" ")),
    )
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_gather(64, 48, &mut rng);
    let s = ssim(&x, &x, 11, 0.01, 0.03).map_err(|e| e.to_string())?;
    let r2 = r_squared(&x, &x).map_err(|e| e.to_string())?;
    let normal = Normal::new(0.0, 10.0).unwrap();
    let mut worst = 0.0f64;
    for draw in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + draw);
        let data = (0..256 * 256).map(|_| normal.sample(&mut r) as f32).collect();
        let g = Gather::new(256, 256, 0.004, data).unwrap();
        let mu = pca_noise_std(&g, DEFAULT_ENERGY_THRESHOLD).map_err(|e| e.to_string())?;
        worst = worst.max((mu - 10.0).abs() / 10.0);
    }
    check(
        s == 1.0 && r2 == 1.0 && worst <= 0.15,
        format!("SSIM(x,x) = {s}, R2(x,x) = {r2}, worst noise estimate error {:.1} %", worst * 100.0),
    )
}

fn io_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_gather(300, 70, &mut rng);
    let grid = io::parse_grid(&io::encode_grid(&g)).map_err(|e| e.to_string())?;
    let segy = io::parse_segy(&io::encode_segy(&g, SampleFormat::Ieee32).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let grid_ok = grid.data() == g.data() && grid.dt == g.dt;
    let segy_ok = segy.data() == g.data();

    let mask = TraceMask::generate(70, 0.3, 1).unwrap();
    let (padded, _, pad) = io::pad_to_multiple(&g, &mask, 16).map_err(|e| e.to_string())?;
    let cropped = io::crop(&padded, pad.original).map_err(|e| e.to_string())?;
    let plan = plan_tiles(g.shape(), (128, 32), 0.5, 16).map_err(|e| e.to_string())?;
    let stitched = stitch(&plan.cut(&g).map_err(|e| e.to_string())?, &plan, &g).map_err(|e| e.to_string())?;
    let rel = |a: &Gather| {
        a.data()
            .iter()
            .zip(g.data())
            .map(|(p, q)| (p - q).abs() as f64)
            .fold(0.0, f64::max)
            / g.max_abs() as f64
    };
    let (pad_err, stitch_err) = (rel(&cropped), rel(&stitched));
    check(
        grid_ok && segy_ok && pad_err <= 1e-6 && stitch_err <= 1e-6,
        format!(
            "grid {}, SEG-Y format 5 {}, pad/crop error {pad_err:.1e}, cut/stitch error {stitch_err:.1e} over {} tiles",
            if grid_ok { "bit-exact" } else { "differs" },
            if segy_ok { "bit-exact" } else { "differs" },
            plan.len()
        ),
    )
}

fn zscl(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_zscl"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("zscl {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n);
    let s = |q: &Path| q.to_str().unwrap().to_string();
    let scene = zscl_core::synth::benchmark_scene(0.0, 0).unwrap();
    io::write_gather(&scene, &p("scene.zsg")).map_err(|e| e.to_string())?;

    let sim = [
        "simulate-missing".to_string(),
        s(&p("scene.zsg")),
        "--fraction".into(),
        "0.5".into(),
        "--seed".into(),
        "3".into(),
        "--out".into(),
    ];
    let sim: Vec<&str> = sim.iter().map(String::as_str).collect();
    let (a, b) = (s(&p("dec_a.zsg")), s(&p("dec_b.zsg")));
    zscl(&[&sim[..], &[a.as_str()]].concat())?;
    zscl(&[&sim[..], &[b.as_str()]].concat())?;
    let sim_same = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let out = s(&p("rec.zsg"));
    zscl(&["reconstruct", &a, "--out", &out, "--iterations", "40", "--seed", "11"])?;
    let first = std::fs::read(&out).unwrap();
    let manifest = s(&p("rec.zsg.manifest"));
    let rerun = s(&p("rerun.manifest"));
    zscl(&["reconstruct", "--config", &manifest, "--manifest", &rerun])?;
    let rec_same = first == std::fs::read(&out).unwrap();
    check(
        sim_same && rec_same,
        format!(
            "simulate-missing {}, reconstruct rerun from manifest {}",
            if sim_same { "byte-identical" } else { "differs" },
            if rec_same { "byte-identical" } else { "differs" }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, f64); 9] = [
        ("architecture parameter count", architecture, 1.0),
        ("gradient suite", gradients, 120.0),
        ("loss degeneracy", loss_degeneracy, 60.0),
        ("masking algebra", masking_algebra, 10.0),
        ("comparative claim", comparative, 1800.0),
        ("noise suppression", noise_suppression, 1200.0),
        ("metric identities", metric_identities, 60.0),
        ("I/O round trips", io_round_trips, 30.0),
        ("determinism", determinism, f64::INFINITY),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let over = secs > *budget;
        let (status, detail) = match &outcome {
            Ok(d) if !over => ("PASS", d.clone()),
            Ok(d) => ("FAIL", format!("{d}; over the {budget} s budget")),
            Err(d) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} [{name}] {detail} ({secs:.1} s)", i + 1);
    }
    if failed == 0 {
        println!("acceptance: all 9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 9 criteria fail");
        ExitCode::FAILURE
    }
}
