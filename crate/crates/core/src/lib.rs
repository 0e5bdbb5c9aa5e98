//! Training-free, region-consistent editing of sparse voxel assets.
//!
//! - [`voxgrid`]: sparse occupancy and latent grids, mesh voxelization,
//!   surface extraction and the NVX binary format.
//! - [`regionmerge`]: XOR difference maps, connected components, flip masks,
//!   occupancy and latent merging.
//! - [`flowsim`]: rectified-flow Euler sampling and FlowEdit integration
//!   against analytic velocity oracles.
//! - [`metrics`]: Chamfer distance, occupancy IoU, region consistency.
//! - [`pipeline`]: paired-edit dataset construction with mock backends and a
//!   JSONL manifest.
//!
//! Floating-point code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod flowsim;
pub mod metrics;
pub mod pipeline;
pub mod regionmerge;
pub mod scalar;
pub mod voxgrid;

pub use scalar::Scalar;

pub type FlowState64 = flowsim::FlowState<f64>;
pub type FlowState32 = flowsim::FlowState<f32>;
pub type FlowEditConfig64 = flowsim::FlowEditConfig<f64>;
pub type FlowEditConfig32 = flowsim::FlowEditConfig<f32>;
pub type FlowRun64 = flowsim::FlowRun<f64>;
pub type FlowRun32 = flowsim::FlowRun<f32>;
pub type AnalyticOracle64 = flowsim::AnalyticOracle<f64>;
pub type AnalyticOracle32 = flowsim::AnalyticOracle<f32>;
pub type TriMesh64 = voxgrid::TriMesh<f64>;
pub type TriMesh32 = voxgrid::TriMesh<f32>;
pub type Aabb64 = voxgrid::Aabb<f64>;
pub type Aabb32 = voxgrid::Aabb<f32>;
