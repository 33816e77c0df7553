use std::path::PathBuf;

use zscl_core::io::{read_gather, write_gather};
use zscl_core::TraceMask;

use crate::config::{ConfigFile, Resolved};
use crate::error::CliError;
use crate::training::TRAIN_KEYS;
use crate::{with_suffix, ReconstructArgs};

const PATH_KEYS: &[&str] = &["input", "mask", "out", "history", "checkpoint"];

pub fn run(args: ReconstructArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let known: Vec<&str> = PATH_KEYS.iter().chain(TRAIN_KEYS).copied().collect();
    file.check_keys(&known)?;

    let input: PathBuf = file.require(args.input, "input")?;
    let out: PathBuf = file.require(args.out, "out")?;
    let mask_path: Option<PathBuf> = file.pick(args.mask, "mask")?;
    let history: Option<PathBuf> = file.pick(args.history, "history")?;
    let checkpoint: Option<PathBuf> = file.pick(args.checkpoint, "checkpoint")?;
    // The manifest location is never read back from a manifest.
    let manifest = args.manifest.unwrap_or_else(|| with_suffix(&out, ".manifest"));

    let mut resolved = Resolved::default();
    resolved.set("input", input.display());
    if let Some(m) = &mask_path {
        resolved.set("mask", m.display());
    }
    resolved.set("out", out.display());
    if let Some(h) = &history {
        resolved.set("history", h.display());
    }
    if let Some(c) = &checkpoint {
        resolved.set("checkpoint", c.display());
    }
    let job = args.train.resolve(&file, &mut resolved)?;
    resolved.echo();

    let gather = read_gather(&input)?;
    let mask = mask_path.as_deref().map(TraceMask::read).transpose()?;
    let result = job.run(&gather, mask.as_ref())?;

    write_gather(&result.gather, &out)?;
    let history = history.unwrap_or_else(|| with_suffix(&out, ".loss.csv"));
    std::fs::write(&history, result.history_csv())
        .map_err(|e| CliError::usage(format!("{}: {e}", history.display())))?;
    if let Some(base) = &checkpoint {
        let trained: Vec<_> = result
            .histories
            .iter()
            .filter_map(|h| h.params.as_ref().map(|p| (h.tile, p)))
            .collect();
        let single = result.histories.len() == 1;
        for (tile, params) in trained {
            let path = if single {
                base.clone()
            } else {
                with_suffix(base, &format!(".tile{tile}"))
            };
            params.save(&path)?;
        }
    }

    resolved.note(format!("wall_seconds = {:.3}", result.wall_seconds));
    resolved.note(format!("tiles = {}", result.histories.len()));
    resolved.note(format!(
        "observed_traces = {} of {}",
        result.mask.n_observed(),
        result.mask.len()
    ));
    resolved.note(format!("normalization_scale = {}", result.scale));
    resolved.note(format!("zscl {}", env!("CARGO_PKG_VERSION")));
    std::fs::write(&manifest, resolved.manifest_text())
        .map_err(|e| CliError::usage(format!("{}: {e}", manifest.display())))?;

    println!(
        "reconstructed {} missing traces in {:.1} s -> {}",
        result.mask.n_missing(),
        result.wall_seconds,
        out.display()
    );
    Ok(())
}
