//! `voxedit` command-line front end.
//!
//! Results go to stdout as one line of JSON. Files are written only where an
//! output flag names them. Exit status: 0 on success, 1 when the operation
//! fails, 2 on a usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "voxedit", version, about = "Region-consistent sparse voxel editing toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Voxelize a triangle mesh (OBJ) into an occupancy grid
    Voxelize(VoxelizeArgs),
    /// Extract the boundary surface of an occupancy grid as an OBJ mesh
    Surface(SurfaceArgs),
    /// Voxel-wise XOR of two occupancy grids
    Diff(DiffArgs),
    /// Connected components of the difference of two grids
    Components(ComponentsArgs),
    /// Merge the edited regions of a target grid into a source grid
    Merge(MergeArgs),
    /// Merge structured latents using a flip mask
    SlatMerge(SlatMergeArgs),
    /// Run a flow edit against an analytic velocity oracle
    Flowedit(FlowEditArgs),
    /// Euler-sample an analytic velocity oracle
    Sample(SampleArgs),
    /// Chamfer distance between two point sets (NVX cell centers or OBJ vertices)
    Chamfer(ChamferArgs),
    /// Check that a merge kept the source outside its mask and the target inside
    Consistency(ConsistencyArgs),
    /// Build or verify a paired-edit dataset with mock backends
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Print the header of an NVX file
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct VoxelizeArgs {
    /// Input mesh in OBJ format
    #[arg(long)]
    pub input: PathBuf,
    /// Grid resolution R (cells per axis)
    #[arg(long, default_value_t = 64)]
    pub resolution: u16,
    /// Grid bounds as minx,miny,minz,maxx,maxy,maxz; defaults to the padded mesh bounding box
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    pub bounds: Option<[f64; 6]>,
    /// Output occupancy NVX file
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_bounds(text: &str) -> Result<[f64; 6], String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 6 comma-separated numbers, got {}", v.len()))
}

#[derive(Args, Debug)]
pub struct SurfaceArgs {
    /// Input NVX file (either kind)
    #[arg(long)]
    pub input: PathBuf,
    /// Output OBJ file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DiffArgs {
    /// Source NVX file
    #[arg(long)]
    pub src: PathBuf,
    /// Target NVX file
    #[arg(long)]
    pub tgt: PathBuf,
    /// Write the difference map as an occupancy NVX file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConnectivityArg {
    #[value(name = "6")]
    Six,
    #[value(name = "18")]
    Eighteen,
    #[value(name = "26")]
    TwentySix,
}

#[derive(Args, Debug)]
pub struct ComponentsArgs {
    /// Source NVX file
    #[arg(long)]
    pub src: PathBuf,
    /// Target NVX file
    #[arg(long)]
    pub tgt: PathBuf,
    /// Voxel adjacency
    #[arg(long, value_enum, default_value = "26")]
    pub connectivity: ConnectivityArg,
}

#[derive(Args, Debug)]
pub struct PolicyArgs {
    /// Keep components with strictly more than T voxels [default: 100]
    #[arg(long, value_name = "T", conflicts_with = "top_k")]
    pub tau: Option<usize>,
    /// Keep the K largest components
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    /// Source NVX file
    #[arg(long)]
    pub src: PathBuf,
    /// Target NVX file
    #[arg(long)]
    pub tgt: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Voxel adjacency
    #[arg(long, value_enum, default_value = "26")]
    pub connectivity: ConnectivityArg,
    /// Write the merged occupancy NVX file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the flip mask report as JSON
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SlatMergeArgs {
    /// Source latent NVX file
    #[arg(long)]
    pub src: PathBuf,
    /// Target latent NVX file
    #[arg(long)]
    pub tgt: PathBuf,
    /// Flip mask report written by `merge --mask-out`
    #[arg(long, required_unless_present = "mask_all", conflicts_with = "mask_all")]
    pub mask: Option<PathBuf>,
    /// Take every latent from the target (appearance-only edits)
    #[arg(long)]
    pub mask_all: bool,
    /// Merged occupancy NVX file; defaults to the source flipped by the mask,
    /// or the target occupancy with --mask-all
    #[arg(long)]
    pub merged: Option<PathBuf>,
    /// Output latent NVX file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleArg {
    /// All data mass at the anchor
    Delta,
    /// Isotropic Gaussian data centered at the anchor
    Gaussian,
}

#[derive(Args, Debug)]
pub struct FlowEditArgs {
    /// JSON file with integration settings; explicit flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of schedule steps N [default: 25]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Schedule index where editing starts [default: 15]
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Schedule index where editing hands over to plain sampling [default: 0]
    #[arg(long)]
    pub n_min: Option<usize>,
    /// Noise draws averaged per edit step [default: 5]
    #[arg(long)]
    pub n_avg: Option<usize>,
    /// Guidance scale of the source velocity [default: 1.5]
    #[arg(long)]
    pub cfg_src: Option<f64>,
    /// Guidance scale of the target velocity [default: 5.5]
    #[arg(long)]
    pub cfg_tgt: Option<f64>,
    /// Weight of the source velocity in the edit direction [default: 1.0]
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Noise seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Velocity field
    #[arg(long, value_enum, default_value = "delta")]
    pub oracle: OracleArg,
    /// Source-condition anchor, comma separated
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub src_anchor: Vec<f64>,
    /// Target-condition anchor, comma separated
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub tgt_anchor: Vec<f64>,
    /// Data variance of the Gaussian oracle
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    /// State to edit, comma separated
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    /// Write the per-step transcript as JSON
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Velocity field
    #[arg(long, value_enum, default_value = "delta")]
    pub oracle: OracleArg,
    /// Anchor (delta) or mean (Gaussian), comma separated
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub anchor: Vec<f64>,
    /// Data variance of the Gaussian oracle
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    /// Number of Euler steps
    #[arg(long, default_value_t = 25)]
    pub steps: usize,
    /// Guidance scale
    #[arg(long, default_value_t = 5.5)]
    pub cfg: f64,
    /// Noise seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of independent samples, drawn from consecutive noise streams
    #[arg(long, default_value_t = 1)]
    pub count: u32,
    /// Start state at t = 1, comma separated; replaces the noise draw
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "count")]
    pub start: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct ChamferArgs {
    /// First point set (.nvx or .obj)
    #[arg(long)]
    pub a: PathBuf,
    /// Second point set (.nvx or .obj)
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConsistencyArgs {
    /// Source NVX file
    #[arg(long)]
    pub src: PathBuf,
    /// Target NVX file
    #[arg(long)]
    pub tgt: PathBuf,
    /// Merged NVX file
    #[arg(long)]
    pub merged: PathBuf,
    /// Flip mask report written by `merge --mask-out`
    #[arg(long)]
    pub mask: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    AcceptAll,
    RejectFirst,
    AlwaysReject,
}

#[derive(Subcommand, Debug)]
pub enum PipelineCommand {
    /// Generate mock samples and write a manifest with artifacts beside it
    Run(PipelineRunArgs),
    /// Re-check every ok record of a manifest against its stored artifacts
    Verify(PipelineVerifyArgs),
}

#[derive(Args, Debug)]
pub struct PipelineRunArgs {
    /// Manifest path (JSONL); replaced if it exists
    #[arg(long)]
    pub manifest: PathBuf,
    /// Seed for sample generation
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attempts per sample before it is marked filtered
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    /// Number of samples
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Worker threads
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Voxel adjacency
    #[arg(long, value_enum, default_value = "26")]
    pub connectivity: ConnectivityArg,
    /// Mock quality filter
    #[arg(long, value_enum, default_value = "accept-all")]
    pub filter: FilterArg,
}

#[derive(Args, Debug)]
pub struct PipelineVerifyArgs {
    /// Manifest path (JSONL)
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// NVX file
    pub path: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match commands::run(cli.command) {
        Ok(json) => {
            println!("{json}");
            ExitCode::SUCCESS
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
