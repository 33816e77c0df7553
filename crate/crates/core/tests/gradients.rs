use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zscl_core::tensor::{check_gradients, Tape, Tensor};
use zscl_core::train::record_scl_loss;
use zscl_core::{CaeParams, NetConfig, TraceMask};

const H: f64 = 1e-5;
const OP_TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    // kept away from zero so the leaky kink is never straddled
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = [
        random(&[2, 8, 6], &mut rng),
        random(&[3, 2, 4, 4], &mut rng),
        random(&[3], &mut rng),
        random(&[3, 4, 3], &mut rng),
    ];
    let report = check_gradients(&inputs, H, |t, v| {
        let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
        t.sq_norm_diff(y, v[3])
    })
    .unwrap();
    assert!(report.max_relative_error() < OP_TOL, "{report:?}");
}

#[test]
fn conv2d_transpose_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = [
        random(&[3, 3, 2], &mut rng),
        random(&[3, 2, 4, 4], &mut rng),
        random(&[2], &mut rng),
        random(&[2, 6, 4], &mut rng),
    ];
    let report = check_gradients(&inputs, H, |t, v| {
        let y = t.conv2d_transpose(v[0], v[1], v[2], 2, 1)?;
        t.sq_norm_diff(y, v[3])
    })
    .unwrap();
    assert!(report.max_relative_error() < OP_TOL, "{report:?}");
}

#[test]
fn channel_linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = [
        random(&[4, 3, 2], &mut rng),
        random(&[5, 4], &mut rng),
        random(&[5], &mut rng),
        random(&[5, 3, 2], &mut rng),
    ];
    let report = check_gradients(&inputs, H, |t, v| {
        let y = t.channel_linear(v[0], v[1], v[2])?;
        t.sq_norm_diff(y, v[3])
    })
    .unwrap();
    assert!(report.max_relative_error() < OP_TOL, "{report:?}");
}

#[test]
fn leaky_and_mask_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs = [random(&[2, 4, 5], &mut rng), random(&[2, 4, 5], &mut rng)];
    let keep = [true, false, true, true, false];
    let report = check_gradients(&inputs, H, |t, v| {
        let a = t.leaky_rect(v[0], 0.2)?;
        let m = t.mask_traces(a, &keep)?;
        t.sq_norm_diff(m, v[1])
    })
    .unwrap();
    assert!(report.max_relative_error() < OP_TOL, "{report:?}");
}

#[test]
fn weighted_sum_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = [
        random(&[3, 3], &mut rng),
        random(&[3, 3], &mut rng),
        random(&[3, 3], &mut rng),
    ];
    let report = check_gradients(&inputs, H, |t, v| {
        let a = t.sq_norm_diff(v[0], v[1])?;
        let b = t.sq_norm_diff(v[1], v[2])?;
        t.weighted_sum(&[(a, 0.7), (b, 1.9)])
    })
    .unwrap();
    assert!(report.max_relative_error() < OP_TOL, "{report:?}");
}

#[test]
fn end_to_end_self_consistency_loss() {
    let net = NetConfig {
        encoder_channels: vec![4, 8],
        fc_channels: 8,
        seed: 7,
        ..NetConfig::default()
    };
    let params = CaeParams::<f64>::build(&net).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = TraceMask::generate(16, 0.5, 3).unwrap();
    let rp = TraceMask::generate(16, 0.5, 4).unwrap();
    let d = r.apply(&random(&[1, 8, 16], &mut rng)).unwrap();
    let mut inputs: Vec<Tensor<f64>> = params.tensors().cloned().collect();
    inputs.push(d);
    let report = check_gradients(&inputs, H, |t: &mut Tape<f64>, v| {
        let (dv, leaves) = v.split_last().unwrap();
        let vars = params.vars_from_leaves(leaves)?;
        Ok(record_scl_loss(t, &params, &vars, *dv, &r, &rp, [1.0, 1.0, 1.0])?.total)
    })
    .unwrap();
    assert!(report.max_relative_error() < 1e-3, "{report:?}");
}
