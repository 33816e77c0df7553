use clap::Args;
use zscl_core::masking::RPrimePolicy;
use zscl_core::{Assembly, NetConfig, Objective, ReconstructJob, TrainConfig};

use crate::config::{ConfigFile, Extent, List, Resolved};
use crate::error::CliError;

/// Network and optimizer settings shared by `reconstruct` and `benchmark`.
#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    /// Training objective: scl or traditional.
    #[arg(long)]
    pub loss: Option<Objective>,
    /// Output assembly: reinsert (observed traces kept) or network.
    #[arg(long)]
    pub assembly: Option<Assembly>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, visible_alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Weights of the three self-consistency terms, e.g. 1,1,1.
    #[arg(long)]
    pub weights: Option<List<f64>>,
    /// Missing fraction of the per-iteration re-decimation: `match` or a number.
    #[arg(long)]
    pub rprime: Option<RPrimePolicy>,
    /// Seeds network initialization and the re-decimation stream.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub encoder_channels: Option<List<usize>>,
    #[arg(long)]
    pub fc_channels: Option<usize>,
    #[arg(long)]
    pub slope: Option<f64>,
    /// Tile extents, SAMPLESxTRACES.
    #[arg(long)]
    pub tile: Option<Extent>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub history_stride: Option<usize>,
}

pub const TRAIN_KEYS: &[&str] = &[
    "loss",
    "assembly",
    "iterations",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "weights",
    "rprime",
    "seed",
    "encoder_channels",
    "fc_channels",
    "slope",
    "tile",
    "overlap",
    "history_stride",
];

impl TrainArgs {
    /// Merge flags over the config file and defaults, record every resolved
    /// value, and validate the result.
    pub fn resolve(&self, file: &ConfigFile, out: &mut Resolved) -> Result<ReconstructJob, CliError> {
        let dn = NetConfig::default();
        let dt = TrainConfig::default();
        let dj = ReconstructJob::default();

        let objective = file.pick_or(self.loss, "loss", dt.objective)?;
        let assembly = file.pick_or(self.assembly, "assembly", dj.assembly)?;
        let iterations = file.pick_or(self.iterations, "iterations", dt.iterations)?;
        let learning_rate = file.pick_or(self.learning_rate, "learning_rate", dt.learning_rate)?;
        let beta1 = file.pick_or(self.beta1, "beta1", dt.beta1)?;
        let beta2 = file.pick_or(self.beta2, "beta2", dt.beta2)?;
        let epsilon = file.pick_or(self.epsilon, "epsilon", dt.epsilon)?;
        let weights = file.pick_or(self.weights.clone(), "weights", List(dt.weights.to_vec()))?;
        let rprime = file.pick_or(self.rprime, "rprime", dt.rprime)?;
        let seed = file.pick_or(self.seed, "seed", 0)?;
        let channels = file.pick_or(
            self.encoder_channels.clone(),
            "encoder_channels",
            List(dn.encoder_channels.clone()),
        )?;
        let fc_channels = file.pick_or(self.fc_channels, "fc_channels", dn.fc_channels)?;
        let slope = file.pick_or(self.slope, "slope", dn.slope)?;
        let tile = file.pick_or(self.tile, "tile", Extent(dj.tile.0, dj.tile.1))?;
        let overlap = file.pick_or(self.overlap, "overlap", dj.overlap)?;
        let history_stride = file.pick_or(self.history_stride, "history_stride", 1)?;

        let weights: [f64; 3] = weights
            .0
            .as_slice()
            .try_into()
            .map_err(|_| CliError::usage("weights needs exactly three values"))?;

        out.set("loss", objective);
        out.set("assembly", assembly);
        out.set("iterations", iterations);
        out.set("learning_rate", learning_rate);
        out.set("beta1", beta1);
        out.set("beta2", beta2);
        out.set("epsilon", epsilon);
        out.set("weights", List(weights.to_vec()));
        out.set("rprime", rprime);
        out.set("seed", seed);
        out.set("encoder_channels", &channels);
        out.set("fc_channels", fc_channels);
        out.set("slope", slope);
        out.set("tile", tile);
        out.set("overlap", overlap);
        out.set("history_stride", history_stride);

        let job = ReconstructJob {
            net: NetConfig {
                encoder_channels: channels.0,
                fc_channels,
                slope,
                seed,
                ..dn
            },
            train: TrainConfig {
                iterations,
                learning_rate,
                beta1,
                beta2,
                epsilon,
                weights,
                objective,
                rprime,
                seed,
                history_stride,
            },
            assembly,
            tile: (tile.0, tile.1),
            overlap,
        };
        job.validate()?;
        Ok(job)
    }
}
