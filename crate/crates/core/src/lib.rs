//! Fast deformable action-tube linking.
//!
//! The crate links per-frame region proposals into tubes ([`linker`]), supplies
//! the box geometry it relies on ([`geometry`]), regression targets and tube
//! losses for a downstream recognition head ([`targets`]), detection metrics
//! ([`eval`]), a seeded proposal simulator ([`proposals`]) and a runtime
//! harness comparing the linkers ([`bench`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common double-precision instantiation.

pub mod bench;
pub mod eval;
pub mod geometry;
pub mod linker;
pub mod proposals;
pub mod scalar;
pub mod targets;

pub use scalar::Scalar;

pub type BBox64 = geometry::BBox<f64>;
pub type BBox32 = geometry::BBox<f32>;
pub type RegionProposal64 = proposals::RegionProposal<f64>;
pub type VideoProposals64 = proposals::VideoProposals<f64>;
pub type VideoProposals32 = proposals::VideoProposals<f32>;
pub type GroundTruthTube64 = proposals::GroundTruthTube<f64>;
pub type GroundTruth64 = proposals::GroundTruth<f64>;
pub type Tube64 = linker::Tube<f64>;
pub type Tube32 = linker::Tube<f32>;
pub type LinkerConfig64 = linker::LinkerConfig<f64>;
pub type TubeFile64 = linker::TubeFile<f64>;
pub type Offsets64 = targets::Offsets<f64>;
pub type TubePrediction64 = targets::TubePrediction<f64>;
