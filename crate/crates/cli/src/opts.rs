//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mono3d::depth::{DepJointConfig, Discretization, DiscretizationConfig};
use mono3d::eval::Metric;
use mono3d::target::DepthCodec;

use crate::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "mono3d", version, about = "KITTI-style 3D detection evaluation, depth codec analysis, and synthetic experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Evaluate predictions against ground truth (11-point AP).
    Eval(EvalOpts),
    /// Emit a bin-layout table (index, lo, hi, width) as CSV.
    CodecTable(CodecTableOpts),
    /// Histogram of ground-truth depths as CSV.
    DepthHist(DepthHistOpts),
    /// Per-depth reconstruction error of the discretization codecs as CSV.
    CodecRoundtrip(CodecRoundtripOpts),
    /// Generate a synthetic KITTI-format dataset.
    Synth(SynthOpts),
    /// Decode raw-heads JSON into KITTI prediction files.
    Decode(DecodeOpts),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    #[value(name = "2d")]
    TwoD,
    Bev,
    #[value(name = "3d")]
    ThreeD,
    All,
}

impl MetricArg {
    pub fn metrics(self) -> Vec<Metric> {
        match self {
            MetricArg::TwoD => vec![Metric::TwoD],
            MetricArg::Bev => vec![Metric::Bev],
            MetricArg::ThreeD => vec![Metric::ThreeD],
            MetricArg::All => Metric::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
pub struct EvalOpts {
    /// Directory of ground-truth label files ({frame}.txt).
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Directory of prediction files (16-field lines).
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Directory of calibration files.
    #[arg(long)]
    pub calib_dir: PathBuf,
    /// Split file (one frame id per line); defaults to every frame in gt-dir.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub metric: MetricArg,
    /// Match threshold in (0, 1].
    #[arg(long, default_value_t = 0.7)]
    pub iou_threshold: f64,
    #[arg(long, default_value = "Car")]
    pub class: String,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-metric, per-difficulty precision/recall curves here.
    #[arg(long)]
    pub pr_csv_dir: Option<PathBuf>,
    /// Worker threads for loading and matching frames.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CodecArg {
    Eigen,
    Sid,
    Lid,
    Depjoint,
}

/// Depth-codec selection shared by several subcommands.
#[derive(Args, Clone, Copy)]
pub struct CodecOpts {
    #[arg(long, value_enum, default_value = "lid")]
    pub codec: CodecArg,
    /// Range minimum before the shift, meters.
    #[arg(long, default_value_t = 1.0)]
    pub d_min: f64,
    /// Range maximum before the shift, meters.
    #[arg(long, default_value_t = 91.0)]
    pub d_max: f64,
    /// Range shift added to both extrema (sid/lid).
    #[arg(long, default_value_t = 0.0)]
    pub xi: f64,
    /// Bin count (sid/lid).
    #[arg(long, default_value_t = 80)]
    pub bins: usize,
    /// Near-bin scale (depjoint).
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    /// Far-bin scale (depjoint).
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
}

impl CodecOpts {
    pub fn depth_codec(&self) -> CliResult<DepthCodec> {
        Ok(match self.codec {
            CodecArg::Eigen => DepthCodec::Eigen,
            CodecArg::Sid => DepthCodec::Ordinal(
                DiscretizationConfig::new(
                    self.d_min,
                    self.d_max,
                    self.xi,
                    self.bins,
                    Discretization::Sid,
                )
                .map_err(CliError::input)?,
            ),
            CodecArg::Lid => DepthCodec::Ordinal(
                DiscretizationConfig::new(
                    self.d_min,
                    self.d_max,
                    self.xi,
                    self.bins,
                    Discretization::Lid,
                )
                .map_err(CliError::input)?,
            ),
            CodecArg::Depjoint => DepthCodec::DepJoint(
                DepJointConfig::new(self.alpha, self.beta, self.d_min, self.d_max)
                    .map_err(CliError::input)?,
            ),
        })
    }
}

#[derive(Args)]
pub struct CodecTableOpts {
    #[command(flatten)]
    pub codec: CodecOpts,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DepthHistOpts {
    #[arg(long)]
    pub label_dir: PathBuf,
    /// Histogram bin width, meters.
    #[arg(long, default_value_t = 5.0)]
    pub bin_width: f64,
    #[arg(long, default_value = "Car")]
    pub class: String,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CodecRoundtripOpts {
    /// Range minimum, meters.
    #[arg(long, default_value_t = 1.0)]
    pub d_min: f64,
    /// Range maximum, meters.
    #[arg(long, default_value_t = 91.0)]
    pub d_max: f64,
    #[arg(long, default_value_t = 80)]
    pub bins: usize,
    /// Shift added to both extrema.
    #[arg(long, default_value_t = 0.0)]
    pub xi: f64,
    /// Number of evenly spaced probe depths.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthOpts {
    /// Dataset root; creates label_2/, calib/, split.txt inside.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub frames: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub objects_min: usize,
    #[arg(long, default_value_t = 9)]
    pub objects_max: usize,
    #[arg(long, default_value_t = 5.0)]
    pub depth_min: f64,
    #[arg(long, default_value_t = 80.0)]
    pub depth_max: f64,
    #[arg(long, default_value_t = -14.0, allow_hyphen_values = true)]
    pub lateral_min: f64,
    #[arg(long, default_value_t = 14.0, allow_hyphen_values = true)]
    pub lateral_max: f64,
    /// Also write perturbed predictions under pred/.
    #[arg(long)]
    pub predictions: bool,
    #[arg(long, default_value_t = 0.0)]
    pub noise_center_px: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_depth_rel: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_yaw: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_dim_rel: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fp_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fn_rate: f64,
    /// Also write per-frame raw-heads JSON (perfect-network outputs) here.
    #[arg(long)]
    pub raw_heads_dir: Option<PathBuf>,
    /// Feature-grid stride used when emitting raw heads.
    #[arg(long, default_value_t = 4)]
    pub stride: u32,
    #[command(flatten)]
    pub codec: CodecOpts,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args)]
pub struct DecodeOpts {
    /// Directory of per-frame raw-heads JSON documents ({frame}.json).
    #[arg(long)]
    pub raw_heads: PathBuf,
    #[arg(long)]
    pub calib_dir: PathBuf,
    /// Output directory for 16-field prediction files.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub codec: CodecOpts,
    #[arg(long, default_value_t = 4)]
    pub stride: u32,
    /// Zero the regressed 2D-to-3D center offset before decoding
    /// (falls back to decoding at the 2D center).
    #[arg(long)]
    pub zero_offset3d: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}
