use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{doubling_ranges, LocalizerConfig};
use super::model::{loss_and_grad, LocalizerModel};
use super::train::sequence_targets;
use crate::error::{Error, Result};
use crate::types::{ForegroundClasses, Segment, WindowGrid, WindowSequence};

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGradError {
    pub name: String,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockGradError>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// A small random problem: `T <= 8` windows of dimension `D <= 4`, at most
/// three foreground classes, one or two ground-truth segments.
pub fn tiny_problem(seed: u64) -> (LocalizerModel, WindowSequence, Vec<Segment>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let t = rng.random_range(3..=8usize);
    let dim = rng.random_range(1..=4usize);
    let fg = rng.random_range(1..=3usize);
    let levels = rng.random_range(1..=3usize);
    let config = LocalizerConfig {
        hidden_dim: rng.random_range(3..=5),
        pyramid_levels: levels,
        regression_ranges: doubling_ranges(levels, 2.0),
        head_layers: rng.random_range(1..=2),
        seed,
        ..Default::default()
    };
    let model = LocalizerModel::new(config, dim, ForegroundClasses::new(fg + 1, Some(0)))
        .expect("valid tiny config");
    let grid = WindowGrid {
        window: 2,
        stride: 1,
        stream_len: t + 1,
    };
    let features = (0..t * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ws = WindowSequence::new("gradcheck", grid, dim, features).expect("consistent shape");
    let mut gt = Vec::new();
    let first_end = rng.random_range(1..=t / 2 + 1) as f64;
    gt.push(Segment::new(0.0, first_end, rng.random_range(1..=fg), 1.0));
    if first_end + 1.0 < t as f64 {
        gt.push(Segment::new(first_end + 1.0, t as f64 + 1.0, rng.random_range(1..=fg), 1.0));
    }
    (model, ws, gt)
}

/// Compares analytic gradients against central differences for every
/// parameter, reporting the worst relative error
/// `|a - n| / max(|a|, |n|, REL_FLOOR)` per block.
pub fn check_gradients(model: &LocalizerModel, ws: &WindowSequence, gt: &[Segment]) -> Result<GradCheckReport> {
    model.check_input(ws)?;
    if ws.is_empty() {
        return Err(Error::invalid("gradient check needs at least one window"));
    }
    let targets = sequence_targets(model, ws, gt);
    let mut analytic = model.params.zeros_like();
    loss_and_grad(model, ws, &targets, Some(&mut analytic));

    let mut probe = model.clone();
    let mut blocks = Vec::with_capacity(analytic.blocks.len());
    for (b, block) in analytic.blocks.iter().enumerate() {
        let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
        for (i, &a) in block.data.iter().enumerate() {
            let orig = probe.params.blocks[b].data[i];
            probe.params.blocks[b].data[i] = orig + FD_STEP;
            let up = loss_and_grad(&probe, ws, &targets, None).total;
            probe.params.blocks[b].data[i] = orig - FD_STEP;
            let down = loss_and_grad(&probe, ws, &targets, None).total;
            probe.params.blocks[b].data[i] = orig;
            let n = (up - down) / (2.0 * FD_STEP);
            let abs = (a - n).abs();
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / a.abs().max(n.abs()).max(REL_FLOOR));
        }
        blocks.push(BlockGradError {
            name: block.name.clone(),
            max_abs_error: max_abs,
            max_rel_error: max_rel,
        });
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        blocks,
        max_rel_error,
    })
}
