//! Classification and regression losses with their analytic derivatives.

const PROB_EPS: f64 = 1e-7;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary focal loss summed over foreground channels. `target` is the
/// positive channel, `None` for background.
pub fn focal_loss(probs: &[f64], target: Option<usize>, gamma: f64, alpha: f64) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if target == Some(c) {
                -alpha * (1.0 - p).powf(gamma) * p.ln()
            } else {
                -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
            }
        })
        .sum()
}

/// Focal loss of one channel computed from its logit, with the derivative
/// with respect to that logit. Zero derivative inside the clamp region.
pub(crate) fn focal_from_logit(logit: f64, positive: bool, gamma: f64, alpha: f64) -> (f64, f64) {
    let raw = sigmoid(logit);
    let p = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let clamped = p != raw;
    if positive {
        let q = 1.0 - p;
        let loss = -alpha * q.powf(gamma) * p.ln();
        let grad = alpha * q.powf(gamma) * (gamma * p * p.ln() - q);
        (loss, if clamped { 0.0 } else { grad })
    } else {
        let q = 1.0 - p;
        let loss = -(1.0 - alpha) * p.powf(gamma) * q.ln();
        let grad = (1.0 - alpha) * p.powf(gamma) * (p - gamma * q * q.ln());
        (loss, if clamped { 0.0 } else { grad })
    }
}

/// Generalized IoU loss of two intervals sharing the anchor point:
/// prediction `[-d_start, d_end]` against target `[-t_start, t_end]`.
pub fn giou_loss_1d(pred: (f64, f64), target: (f64, f64)) -> f64 {
    giou_with_grad(pred, target).0
}

/// Loss and its derivative with respect to the predicted distances.
pub(crate) fn giou_with_grad(pred: (f64, f64), target: (f64, f64)) -> (f64, (f64, f64)) {
    let (ps, pe) = (-pred.0, pred.1);
    let (gs, ge) = (-target.0, target.1);
    let hull = pe.max(ge) - ps.min(gs);
    if hull <= 0.0 {
        return (0.0, (0.0, 0.0));
    }
    let raw_inter = pe.min(ge) - ps.max(gs);
    let inter = raw_inter.max(0.0);
    let union = (pe - ps) + (ge - gs) - inter;
    if union <= 0.0 {
        return (0.0, (0.0, 0.0));
    }
    let loss = 2.0 - inter / union - union / hull;

    // Partial derivatives of inter, union, hull with respect to ps and pe.
    let active = raw_inter > 0.0;
    let di_dpe = if active && pe <= ge { 1.0 } else { 0.0 };
    let di_dps = if active && ps >= gs { -1.0 } else { 0.0 };
    let du_dpe = 1.0 - di_dpe;
    let du_dps = -1.0 - di_dps;
    let dh_dpe = if pe > ge { 1.0 } else { 0.0 };
    let dh_dps = if ps < gs { -1.0 } else { 0.0 };

    let dl = |di: f64, du: f64, dh: f64| {
        -(di * union - inter * du) / (union * union) - (du * hull - union * dh) / (hull * hull)
    };
    let dl_dpe = dl(di_dpe, du_dpe, dh_dpe);
    let dl_dps = dl(di_dps, du_dps, dh_dps);
    (loss, (-dl_dps, dl_dpe))
}
