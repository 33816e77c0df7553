use std::path::PathBuf;

use zscl_core::io::read_gather;
use zscl_core::metrics::MetricsReport;

use crate::config::{ConfigFile, Resolved};
use crate::error::CliError;
use crate::EvaluateArgs;

const KEYS: &[&str] = &["recon", "truth", "report"];

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    file.check_keys(KEYS)?;
    let recon: PathBuf = file.require(args.recon, "recon")?;
    let truth: PathBuf = file.require(args.truth, "truth")?;
    let report: Option<PathBuf> = file.pick(args.report, "report")?;

    let mut resolved = Resolved::default();
    resolved.set("recon", recon.display());
    resolved.set("truth", truth.display());
    if let Some(r) = &report {
        resolved.set("report", r.display());
    }
    resolved.echo();

    let a = read_gather(&recon)?;
    let b = read_gather(&truth)?;
    if a.shape() != b.shape() {
        return Err(CliError::usage(format!(
            "shape mismatch: {} is {:?}, {} is {:?}",
            recon.display(),
            a.shape(),
            truth.display(),
            b.shape()
        )));
    }
    let metrics = MetricsReport::evaluate(&a, &b)?;
    print!("{}", metrics.to_text());
    match &report {
        Some(path) => std::fs::write(path, metrics.to_csv())
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        None => print!("{}", metrics.to_csv()),
    }
    Ok(())
}
