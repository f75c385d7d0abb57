use super::model::{loss_and_grad, LocalizerModel};
use super::targets::{assign_targets, pyramid_points, PointTarget};
use crate::error::{Error, Result};
use crate::types::{Segment, WindowSequence};

/// One training sequence with its ground truth in window-grid units.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSequence<'a> {
    pub windows: &'a WindowSequence,
    pub segments: &'a [Segment],
}

/// Point targets for one sequence under the model's pyramid.
pub fn sequence_targets(model: &LocalizerModel, ws: &WindowSequence, gt: &[Segment]) -> Vec<PointTarget> {
    let points = pyramid_points(
        ws.len(),
        model.config.pyramid_levels,
        ws.window_size as f64 / ws.stride as f64,
    );
    assign_targets(&points, gt, &model.config.regression_ranges)
}

/// Full-sequence SGD with momentum and weight decay, one step per sequence,
/// sequences visited in the given order. Returns the mean loss of each epoch.
pub fn train(model: &mut LocalizerModel, data: &[TrainingSequence<'_>]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("training needs at least one sequence"));
    }
    for seq in data {
        model.check_input(seq.windows)?;
        if seq.windows.is_empty() {
            return Err(Error::invalid(format!(
                "training sequence {} has no windows",
                seq.windows.subject_id
            )));
        }
    }
    let targets: Vec<Vec<PointTarget>> = data
        .iter()
        .map(|s| sequence_targets(model, s.windows, s.segments))
        .collect();

    let cfg = model.config.clone();
    let mut velocity = model.params.zeros_like();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        for (seq, tgt) in data.iter().zip(&targets) {
            let mut grads = model.params.zeros_like();
            let loss = loss_and_grad(model, seq.windows, tgt, Some(&mut grads));
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("loss {} on sequence {}", loss.total, seq.windows.subject_id),
                });
            }
            sum += loss.total;
            if let Some(limit) = cfg.grad_clip {
                clip_norm(&mut grads, limit);
            }
            for ((p, g), v) in model
                .params
                .blocks
                .iter_mut()
                .zip(&grads.blocks)
                .zip(&mut velocity.blocks)
            {
                for ((w, &dw), m) in p.data.iter_mut().zip(&g.data).zip(&mut v.data) {
                    *m = cfg.momentum * *m + dw + cfg.weight_decay * *w;
                    *w -= cfg.learning_rate * *m;
                }
            }
            if !model.params.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("non-finite weights after sequence {}", seq.windows.subject_id),
                });
            }
        }
        let mean = sum / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        curve.push(mean);
    }
    Ok(curve)
}

fn clip_norm(grads: &mut super::params::ParamSet, limit: f64) {
    let norm = grads
        .blocks
        .iter()
        .flat_map(|b| &b.data)
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > limit {
        let scale = limit / norm;
        grads
            .blocks
            .iter_mut()
            .flat_map(|b| &mut b.data)
            .for_each(|g| *g *= scale);
    }
}

/// Loss of one sequence without touching the model.
pub fn sequence_loss(model: &LocalizerModel, ws: &WindowSequence, gt: &[Segment]) -> Result<super::model::LossBreakdown> {
    model.check_input(ws)?;
    let targets = sequence_targets(model, ws, gt);
    Ok(loss_and_grad(model, ws, &targets, None))
}
