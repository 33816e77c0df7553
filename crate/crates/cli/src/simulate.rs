use std::path::PathBuf;

use zscl_core::io::{read_gather, write_gather};
use zscl_core::TraceMask;

use crate::config::{ConfigFile, Resolved};
use crate::error::CliError;
use crate::{with_suffix, SimulateArgs};

const KEYS: &[&str] = &["input", "out", "mask_out", "fraction", "seed"];

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    file.check_keys(KEYS)?;
    let input: PathBuf = file.require(args.input, "input")?;
    let out: PathBuf = file.require(args.out, "out")?;
    let fraction: f64 = file.require(args.fraction, "fraction")?;
    let seed = file.pick_or(args.seed, "seed", 0u64)?;
    let mask_out = file
        .pick(args.mask_out, "mask_out")?
        .unwrap_or_else(|| with_suffix(&out, ".mask"));
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::usage(format!("fraction must lie in [0, 1), got {fraction}")));
    }

    let mut resolved = Resolved::default();
    resolved.set("input", input.display());
    resolved.set("out", out.display());
    resolved.set("mask_out", mask_out.display());
    resolved.set("fraction", fraction);
    resolved.set("seed", seed);
    resolved.echo();

    let gather = read_gather(&input)?;
    let mask = TraceMask::generate(gather.n_traces(), fraction, seed)?;
    let decimated = mask.apply_gather(&gather)?;
    write_gather(&decimated, &out)?;
    mask.write(&mask_out)?;
    println!(
        "dropped {} of {} traces -> {}",
        mask.n_missing(),
        mask.len(),
        out.display()
    );
    Ok(())
}
