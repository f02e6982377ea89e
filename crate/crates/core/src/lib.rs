//! Boundary-centric cell instance segmentation.
//!
//! Starting from a foreground probability map, the pipeline seeds a revised
//! watershed, turns the resulting regions and region-region boundaries into
//! a graph, describes each boundary with a small binary signature, scores the
//! signatures, and merges regions across boundaries judged false. Training
//! labels come from an exact matching between ground-truth instances and
//! connected groups of regions. Videos can additionally propagate confident
//! instances between neighboring frames.

pub mod classifier;
pub mod contour;
pub mod error;
pub mod grid;
pub mod labels;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod region_graph;
pub mod seeds;
pub mod signature;
pub mod synth;
pub mod temporal;
pub mod watershed;

pub use classifier::{Scorer, ScorerConfig, ScorerModel};
pub use error::{CebError, Result};
pub use grid::Connectivity;
pub use metrics::MetricsReport;
pub use pipeline::PipelineConfig;
pub use raster::{BinaryRaster, LabelMap, ProbMap};
pub use synth::SynthSpec;
pub use temporal::TemporalConfig;
pub use watershed::BoundaryKey;
