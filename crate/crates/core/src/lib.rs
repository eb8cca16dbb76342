//! Region-merging image segmentation.
//!
//! The pipeline over-segments an image (watershed on a median-filtered
//! gradient, a grid initializer, or an externally supplied label map),
//! builds a region adjacency graph weighted by mean-color distance, and
//! iteratively merges mutual nearest-neighbor region pairs whose merge is
//! supported by a truncated sequential probability ratio test. A directed
//! nearest-neighbor graph over the live regions keeps candidate search
//! local: its 2-cycles are exactly the mutual pairs, and after every merge
//! only the second-order neighborhood of the survivor is rescanned.
//!
//! Crate layout:
//!
//! * [`pixel`] — image and label-map value types plus the preprocessing
//!   kernels (luminance, Sobel magnitude, median filter)
//! * [`pnm`] — binary PPM/PGM codecs used for all file interchange
//! * [`initseg`] — initial over-segmentation (watershed / grid / external)
//! * [`graph`] — region statistics and the region adjacency graph
//! * [`nng`] — the out-degree-1 nearest-neighbor graph and its
//!   incremental post-merge updates
//! * [`sprt`] — the sequential consistency test over sampled color cues
//! * [`drm`] — the merge engines (level sweeps, global-min scan, and the
//!   NNG-accelerated loop) and the merge trace they record
//! * [`audit`] — post-run replay checks of the trace
//! * [`eval`] — boundary extraction and tolerant precision/recall
//! * [`gen`] — synthetic fixtures (quadrant images, random graphs)
//! * [`render`] — mean-color and boundary-overlay artifact images
//! * [`report`] — the JSON run report emitted by the CLI

pub mod audit;
pub mod drm;
pub mod eval;
pub mod gen;
pub mod graph;
pub mod initseg;
pub mod nng;
pub mod pixel;
pub mod pnm;
pub mod render;
pub mod report;
pub mod sprt;

pub use pixel::{GrayImage, LabelMap, RgbImage};
