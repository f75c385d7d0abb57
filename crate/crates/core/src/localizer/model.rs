//! Projection, max-pooling feature pyramid and the two shared heads, with a
//! hand-written backward pass.

use super::config::LocalizerConfig;
use super::loss::{focal_from_logit, giou_with_grad, sigmoid, softplus};
use super::params::{block_specs, init_params, HeadLayout, Layout, ParamSet};
use super::targets::{pyramid_points, PointTarget, PyramidPoint};
use crate::error::{Error, Result};
use crate::types::{ForegroundClasses, SeqLabel, WindowSequence};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerModel {
    pub config: LocalizerConfig,
    pub input_dim: usize,
    pub classes: ForegroundClasses,
    pub params: ParamSet,
}

impl LocalizerModel {
    /// Seeded initialization from `config.seed`.
    pub fn new(config: LocalizerConfig, input_dim: usize, classes: ForegroundClasses) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if classes.is_empty() {
            return Err(Error::invalid("no foreground classes to predict"));
        }
        let specs = block_specs(input_dim, config.hidden_dim, config.head_layers, classes.len());
        let mut params = init_params(&specs, config.seed);
        if let Some(prior) = config.cls_prior {
            let bias = Layout::new(config.head_layers).cls.out.1;
            params.blocks[bias].data.fill(-((1.0 - prior) / prior).ln());
        }
        Ok(Self {
            config,
            input_dim,
            classes,
            params,
        })
    }

    pub fn num_foreground(&self) -> usize {
        self.classes.len()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.config.head_layers)
    }

    pub(crate) fn check_input(&self, ws: &WindowSequence) -> Result<()> {
        if ws.dim != self.input_dim {
            return Err(Error::Shape(format!(
                "model expects {}-dimensional windows, sequence {} has {}",
                self.input_dim, ws.subject_id, ws.dim
            )));
        }
        Ok(())
    }

    /// Per-point class probabilities and boundary distances, level by level.
    pub fn forward(&self, ws: &WindowSequence) -> Result<Vec<SeqLabel>> {
        self.check_input(ws)?;
        Ok(Forward::run(self, ws).seq_labels())
    }
}

pub fn forward(model: &LocalizerModel, ws: &WindowSequence) -> Result<Vec<SeqLabel>> {
    model.forward(ws)
}

/// Activations of one head on one level.
#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    /// Input of every conv layer followed by the input of the output map.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every conv layer.
    pre: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub points: Vec<PyramidPoint>,
    hidden: usize,
    pre_proj: Vec<f64>,
    levels: Vec<Vec<f64>>,
    /// For level `l >= 1`, the flat index into level `l - 1` that won the max.
    argmax: Vec<Vec<usize>>,
    pub cls: Vec<HeadCache>,
    pub reg: Vec<HeadCache>,
    num_fg: usize,
}

fn dense(input: &[f64], n: usize, in_dim: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out_dim = b.len();
    let mut out = Vec::with_capacity(n * out_dim);
    for row in input.chunks_exact(in_dim).take(n) {
        for (o, wrow) in w.chunks_exact(in_dim).enumerate() {
            let dot: f64 = wrow.iter().zip(row).map(|(a, x)| a * x).sum();
            out.push(b[o] + dot);
        }
    }
    out
}

/// Kernel-3 convolution over time with zero padding. `w` is `[3][H][H]`.
fn conv3(input: &[f64], n: usize, hidden: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * hidden);
    for _ in 0..n {
        out.extend_from_slice(b);
    }
    for t in 0..n {
        let dst = &mut out[t * hidden..(t + 1) * hidden];
        for k in 0..3 {
            let Some(src) = (t + k).checked_sub(1).filter(|&s| s < n) else {
                continue;
            };
            let x = &input[src * hidden..(src + 1) * hidden];
            let wk = &w[k * hidden * hidden..(k + 1) * hidden * hidden];
            for (o, wrow) in wk.chunks_exact(hidden).enumerate() {
                dst[o] += wrow.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            }
        }
    }
    out
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

pub(crate) fn head_forward(
    params: &ParamSet,
    head: &HeadLayout,
    input: &[f64],
    n: usize,
    hidden: usize,
) -> HeadCache {
    let mut inputs = vec![input.to_vec()];
    let mut pre = Vec::with_capacity(head.convs.len());
    for &(w, b) in &head.convs {
        let z = conv3(
            inputs.last().unwrap(),
            n,
            hidden,
            &params.blocks[w].data,
            &params.blocks[b].data,
        );
        inputs.push(relu(&z));
        pre.push(z);
    }
    let (w, b) = head.out;
    let out = dense(
        inputs.last().unwrap(),
        n,
        hidden,
        &params.blocks[w].data,
        &params.blocks[b].data,
    );
    HeadCache { inputs, pre, out }
}

/// Backpropagates `d_out` through one head; accumulates parameter gradients
/// and returns the gradient with respect to the head input.
fn head_backward(
    params: &ParamSet,
    grads: &mut ParamSet,
    head: &HeadLayout,
    cache: &HeadCache,
    d_out: &[f64],
    n: usize,
    hidden: usize,
) -> Vec<f64> {
    let (wi, bi) = head.out;
    let out_dim = params.blocks[bi].data.len();
    let last_in = cache.inputs.last().unwrap();
    let mut d_act = vec![0.0; n * hidden];
    {
        let w = &params.blocks[wi].data;
        for t in 0..n {
            let x = &last_in[t * hidden..(t + 1) * hidden];
            let dx = &mut d_act[t * hidden..(t + 1) * hidden];
            for o in 0..out_dim {
                let g = d_out[t * out_dim + o];
                if g == 0.0 {
                    continue;
                }
                grads.blocks[bi].data[o] += g;
                let gw = &mut grads.blocks[wi].data[o * hidden..(o + 1) * hidden];
                gw.iter_mut().zip(x).for_each(|(a, v)| *a += g * v);
                let wrow = &w[o * hidden..(o + 1) * hidden];
                dx.iter_mut().zip(wrow).for_each(|(a, v)| *a += g * v);
            }
        }
    }
    for (layer, &(wi, bi)) in head.convs.iter().enumerate().rev() {
        let pre = &cache.pre[layer];
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(pre)
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();
        let input = &cache.inputs[layer];
        let w = &params.blocks[wi].data;
        let mut d_in = vec![0.0; n * hidden];
        for t in 0..n {
            let g = &d_pre[t * hidden..(t + 1) * hidden];
            grads.blocks[bi]
                .data
                .iter_mut()
                .zip(g)
                .for_each(|(a, v)| *a += v);
            for k in 0..3 {
                let Some(src) = (t + k).checked_sub(1).filter(|&s| s < n) else {
                    continue;
                };
                let x = &input[src * hidden..(src + 1) * hidden];
                let base = k * hidden * hidden;
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    let row = base + o * hidden..base + (o + 1) * hidden;
                    grads.blocks[wi].data[row.clone()]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(a, v)| *a += go * v);
                    d_in[src * hidden..(src + 1) * hidden]
                        .iter_mut()
                        .zip(&w[row])
                        .for_each(|(a, v)| *a += go * v);
                }
            }
        }
        d_act = d_in;
    }
    d_act
}

impl Forward {
    pub fn run(model: &LocalizerModel, ws: &WindowSequence) -> Self {
        let hidden = model.config.hidden_dim;
        let layout = model.layout();
        let p = &model.params;
        let t = ws.len();
        let (pw, pb) = layout.proj;
        let pre_proj = dense(
            &ws.features,
            t,
            ws.dim,
            &p.blocks[pw].data,
            &p.blocks[pb].data,
        );
        let mut levels = vec![relu(&pre_proj)];
        let mut argmax = vec![Vec::new()];
        let mut n = t;
        for _ in 1..model.config.pyramid_levels {
            let prev = levels.last().unwrap();
            let m = n.div_ceil(2);
            let mut pooled = Vec::with_capacity(m * hidden);
            let mut idx = Vec::with_capacity(m * hidden);
            for i in 0..m {
                for h in 0..hidden {
                    let a = (2 * i) * hidden + h;
                    let best = if 2 * i + 1 < n {
                        let b = a + hidden;
                        if prev[b] > prev[a] {
                            b
                        } else {
                            a
                        }
                    } else {
                        a
                    };
                    pooled.push(prev[best]);
                    idx.push(best);
                }
            }
            levels.push(pooled);
            argmax.push(idx);
            n = m;
        }
        let points = pyramid_points(t, model.config.pyramid_levels, ws.window_size as f64 / ws.stride as f64);
        let sizes: Vec<usize> = levels.iter().map(|l| l.len() / hidden).collect();
        let cls = levels
            .iter()
            .zip(&sizes)
            .map(|(act, &n)| head_forward(p, &layout.cls, act, n, hidden))
            .collect();
        let reg = levels
            .iter()
            .zip(&sizes)
            .map(|(act, &n)| head_forward(p, &layout.reg, act, n, hidden))
            .collect();
        Self {
            points,
            hidden,
            pre_proj,
            levels,
            argmax,
            cls,
            reg,
            num_fg: model.num_foreground(),
        }
    }

    fn level_len(&self, level: usize) -> usize {
        self.levels[level].len() / self.hidden
    }

    pub fn seq_labels(&self) -> Vec<SeqLabel> {
        let mut out = Vec::with_capacity(self.points.len());
        let mut level_offset = vec![0usize; self.levels.len()];
        for p in &self.points {
            let i = p.index_in_level;
            let c = self.num_fg;
            let logits = &self.cls[p.level].out[i * c..(i + 1) * c];
            let raw = &self.reg[p.level].out[i * 2..i * 2 + 2];
            let s = p.stride as f64;
            out.push(SeqLabel {
                class_probs: logits.iter().map(|&z| sigmoid(z)).collect(),
                d_start: softplus(raw[0]) * s,
                d_end: softplus(raw[1]) * s,
                timestamp: p.timestamp,
                level_stride: p.stride,
            });
            level_offset[p.level] += 1;
        }
        out
    }

    /// Raw head outputs `(logits, regression)` per level.
    #[cfg(test)]
    pub fn head_outputs(&self, level: usize) -> (&[f64], &[f64]) {
        (&self.cls[level].out, &self.reg[level].out)
    }
}

/// Loss terms of one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub focal: f64,
    pub giou: f64,
    pub positives: usize,
}

/// Total loss `(sum focal + lambda * sum giou) / max(1, positives)` and,
/// when `grads` is given, its gradient accumulated into `grads`.
pub(crate) fn loss_and_grad(
    model: &LocalizerModel,
    ws: &WindowSequence,
    targets: &[PointTarget],
    grads: Option<&mut ParamSet>,
) -> LossBreakdown {
    let fwd = Forward::run(model, ws);
    let cfg = &model.config;
    let c = model.num_foreground();
    let positives = targets.iter().filter(|t| t.label.is_some()).count();
    let norm = positives.max(1) as f64;
    let lambda = cfg.reg_loss_weight;

    let mut d_cls: Vec<Vec<f64>> = fwd.cls.iter().map(|h| vec![0.0; h.out.len()]).collect();
    let mut d_reg: Vec<Vec<f64>> = fwd.reg.iter().map(|h| vec![0.0; h.out.len()]).collect();
    let (mut focal, mut giou) = (0.0, 0.0);
    for (p, target) in fwd.points.iter().zip(targets) {
        let i = p.index_in_level;
        let channel = target.label.and_then(|l| model.classes.channel_of(l));
        let logits = &fwd.cls[p.level].out[i * c..(i + 1) * c];
        for (k, &z) in logits.iter().enumerate() {
            let (l, g) = focal_from_logit(z, channel == Some(k), cfg.focal_gamma, cfg.focal_alpha);
            focal += l;
            d_cls[p.level][i * c + k] = g / norm;
        }
        if target.label.is_some() {
            let raw = &fwd.reg[p.level].out[i * 2..i * 2 + 2];
            let s = p.stride as f64;
            let pred = (softplus(raw[0]) * s, softplus(raw[1]) * s);
            let (l, (gs, ge)) = giou_with_grad(pred, (target.d_start, target.d_end));
            giou += l;
            let scale = lambda / norm * s;
            d_reg[p.level][i * 2] = scale * gs * sigmoid(raw[0]);
            d_reg[p.level][i * 2 + 1] = scale * ge * sigmoid(raw[1]);
        }
    }
    let total = (focal + lambda * giou) / norm;

    if let Some(grads) = grads {
        backward(model, ws, &fwd, &d_cls, &d_reg, grads);
    }
    LossBreakdown {
        total,
        focal: focal / norm,
        giou: giou / norm,
        positives,
    }
}

fn backward(
    model: &LocalizerModel,
    ws: &WindowSequence,
    fwd: &Forward,
    d_cls: &[Vec<f64>],
    d_reg: &[Vec<f64>],
    grads: &mut ParamSet,
) {
    let hidden = fwd.hidden;
    let layout = model.layout();
    let p = &model.params;
    let mut d_levels: Vec<Vec<f64>> = Vec::with_capacity(fwd.levels.len());
    for l in 0..fwd.levels.len() {
        let n = fwd.level_len(l);
        let mut d = head_backward(p, grads, &layout.cls, &fwd.cls[l], &d_cls[l], n, hidden);
        let dr = head_backward(p, grads, &layout.reg, &fwd.reg[l], &d_reg[l], n, hidden);
        d.iter_mut().zip(&dr).for_each(|(a, b)| *a += b);
        d_levels.push(d);
    }
    for l in (1..fwd.levels.len()).rev() {
        let (lower, upper) = d_levels.split_at_mut(l);
        let below = &mut lower[l - 1];
        for (g, &src) in upper[0].iter().zip(&fwd.argmax[l]) {
            below[src] += g;
        }
    }
    let d0: Vec<f64> = d_levels[0]
        .iter()
        .zip(&fwd.pre_proj)
        .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
        .collect();
    let (wi, bi) = layout.proj;
    let dim = ws.dim;
    for t in 0..ws.len() {
        let x = ws.row(t);
        for h in 0..hidden {
            let g = d0[t * hidden + h];
            if g == 0.0 {
                continue;
            }
            grads.blocks[bi].data[h] += g;
            grads.blocks[wi].data[h * dim..(h + 1) * dim]
                .iter_mut()
                .zip(x)
                .for_each(|(a, v)| *a += g * v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localizer::config::doubling_ranges;
    use crate::types::WindowGrid;

    fn sequence(t: usize, dim: usize) -> WindowSequence {
        let grid = WindowGrid {
            window: 2,
            stride: 1,
            stream_len: t + 1,
        };
        let features = (0..t * dim).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        WindowSequence::new("s", grid, dim, features).unwrap()
    }

    fn small_config(levels: usize) -> LocalizerConfig {
        LocalizerConfig {
            hidden_dim: 6,
            pyramid_levels: levels,
            regression_ranges: doubling_ranges(levels, 4.0),
            ..Default::default()
        }
    }

    fn classes(n: usize) -> ForegroundClasses {
        ForegroundClasses::new(n + 1, Some(0))
    }

    #[test]
    fn pyramid_point_count() {
        let m = LocalizerModel::new(small_config(4), 3, classes(2)).unwrap();
        let out = m.forward(&sequence(16, 3)).unwrap();
        assert_eq!(out.len(), 30);
        assert_eq!(out.iter().filter(|s| s.level_stride == 8).count(), 2);
    }

    #[test]
    fn single_window_is_total() {
        let m = LocalizerModel::new(small_config(4), 3, classes(2)).unwrap();
        let out = m.forward(&sequence(1, 3)).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|s| s.class_probs.iter().all(|p| p.is_finite())));
    }

    #[test]
    fn zero_heads_give_half_probabilities() {
        let mut m = LocalizerModel::new(small_config(3), 3, classes(2)).unwrap();
        let layout = m.layout();
        for head in [&layout.cls, &layout.reg] {
            let (w, b) = head.out;
            m.params.blocks[w].data.fill(0.0);
            m.params.blocks[b].data.fill(0.0);
        }
        for s in m.forward(&sequence(8, 3)).unwrap() {
            assert!(s.class_probs.iter().all(|&p| p == 0.5));
            let expected = 2f64.ln() * s.level_stride as f64;
            assert!((s.d_start - expected).abs() < 1e-12);
            assert!((s.d_end - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = LocalizerModel::new(small_config(2), 4, classes(2)).unwrap();
        assert!(matches!(m.forward(&sequence(4, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn heads_are_shared_across_levels() {
        let m = LocalizerModel::new(small_config(3), 3, classes(2)).unwrap();
        let layout = m.layout();
        let act: Vec<f64> = (0..5 * 6).map(|i| (i as f64 * 0.37).sin().max(0.0)).collect();
        let a = head_forward(&m.params, &layout.cls, &act, 5, 6);
        let b = head_forward(&m.params, &layout.cls, &act, 5, 6);
        assert_eq!(a.out, b.out);
        // Same content placed at two pyramid levels yields the same logits.
        let fwd = Forward::run(&m, &sequence(8, 3));
        let level1 = &fwd.levels[1];
        let again = head_forward(&m.params, &layout.cls, level1, 4, 6);
        assert_eq!(fwd.head_outputs(1).0, again.out.as_slice());
    }

    #[test]
    fn deterministic_forward() {
        let m = LocalizerModel::new(small_config(3), 3, classes(2)).unwrap();
        let ws = sequence(9, 3);
        assert_eq!(m.forward(&ws).unwrap(), m.forward(&ws).unwrap());
        let m2 = LocalizerModel::new(small_config(3), 3, classes(2)).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn zero_reg_weight_leaves_reg_head_untouched() {
        let mut cfg = small_config(2);
        cfg.reg_loss_weight = 0.0;
        let m = LocalizerModel::new(cfg, 3, classes(2)).unwrap();
        let ws = sequence(8, 3);
        let pts = pyramid_points(8, 2, 2.0);
        let gt = [crate::types::Segment::new(1.0, 6.0, 1, 1.0)];
        let targets = super::super::targets::assign_targets(&pts, &gt, &m.config.regression_ranges);
        assert!(targets.iter().any(|t| t.label.is_some()));
        let mut grads = m.params.zeros_like();
        loss_and_grad(&m, &ws, &targets, Some(&mut grads));
        let layout = m.layout();
        let mut reg_blocks: Vec<usize> = layout.reg.convs.iter().flat_map(|&(w, b)| [w, b]).collect();
        reg_blocks.extend([layout.reg.out.0, layout.reg.out.1]);
        for b in reg_blocks {
            assert!(grads.blocks[b].data.iter().all(|&g| g == 0.0), "{}", grads.blocks[b].name);
        }
    }
}
