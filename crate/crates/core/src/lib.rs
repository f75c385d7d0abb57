//! Temporal action localization for wearable inertial streams.
//!
//! The crate covers the whole offline pipeline: loading per-subject sensor
//! recordings, sliding-window vectorization, a small anchor-free localizer
//! with a max-pooling feature pyramid, postprocessing of predicted segments
//! into per-sample timelines, and a segment-aware evaluation battery
//! (mAP over tIoU thresholds, frame-level misalignment ratios, per-sample
//! classification metrics). The [`harness`] module runs leave-one-subject-out
//! and chunked near-online protocols on top of these pieces.

// Negated comparisons are how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod ingestion;
pub mod localizer;
pub mod metrics;
pub mod postprocess;
pub mod types;
pub mod windowing;

pub use error::{Error, Result};
pub use types::{
    segment_to_sample_range, segment_to_time_range, tiou, ClassId, DatasetManifest,
    ForegroundClasses, SampleTimeline, Segment, SensorStream, SeqLabel, SubjectEntry, WindowGrid,
    WindowSequence,
};
