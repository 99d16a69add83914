//! Evaluation and scoring for Cross-Your-Body action segmentation.
//!
//! The crate turns frame-level label sequences into segmentation metrics
//! (framewise accuracy, accuracy without background, segmental edit score,
//! F1 at IoU thresholds), converts predicted touches plus the instruction
//! timeline into accuracy and rhythm scores, and compares machine scores with
//! human ratings via Bland–Altman analysis. A keypoint state machine labels
//! touches from pose streams, and a seeded generator produces synthetic
//! sessions for end-to-end checks.

pub mod agreement;
pub mod error;
pub mod exec;
pub mod fsm;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{
    decode_class, frames_from_segments, relabel_set_level, segments_from_frames, ActionClass, BodyPart,
    FrameLabelSeq, Label, Segment, SegmentSeq, Side,
};
