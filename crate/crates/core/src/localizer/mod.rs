//! Anchor-free temporal action localizer over window sequences.

mod checkpoint;
mod config;
mod decode;
mod gradcheck;
mod loss;
mod model;
mod params;
mod targets;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{doubling_ranges, LocalizerConfig, RegressionRange};
pub use decode::decode;
pub use gradcheck::{check_gradients, tiny_problem, BlockGradError, GradCheckReport, FD_STEP};
pub use loss::{focal_loss, giou_loss_1d};
pub use model::{forward, LocalizerModel, LossBreakdown};
pub use params::{ParamBlock, ParamSet};
pub use targets::{assign_targets, level_sizes, pyramid_points, PointTarget, PyramidPoint};
pub use train::{sequence_loss, sequence_targets, train, TrainingSequence};

use crate::types::{Segment, WindowSequence};

/// Forward pass followed by decoding, clipped to the sequence's time extent.
pub fn predict_segments(model: &LocalizerModel, ws: &WindowSequence) -> crate::Result<Vec<Segment>> {
    let labels = model.forward(ws)?;
    Ok(decode(
        &labels,
        &model.classes,
        model.config.decode_min_prob,
        ws.grid().time_extent(),
    ))
}
