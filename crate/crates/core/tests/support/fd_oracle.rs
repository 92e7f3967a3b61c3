//! Naive scalar reimplementation of the training objective, used only as a
//! finite-difference reference for the analytic gradients.

use memladder::nn::{LossKind, LossSpec, Params};

pub struct Problem<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [usize],
    pub teacher: Option<&'a [Vec<f64>]>,
    pub loss: LossSpec,
    pub weight_decay: f64,
}

/// Returns the smallest absolute hidden pre-activation, so callers can reject draws
/// that sit on a rectifier kink.
pub fn objective(p: &Params, prob: &Problem) -> (f64, f64) {
    let mut total = 0.0;
    let mut min_pre = f64::INFINITY;
    for (i, xi) in prob.x.iter().enumerate() {
        let mut h = xi.clone();
        for (li, layer) in p.layers.iter().enumerate() {
            let (fan_in, fan_out) = layer.w.dim();
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut s = layer.b[o];
                for k in 0..fan_in {
                    s += h[k] * layer.w[[k, o]];
                }
                z[o] = s;
            }
            if li + 1 < p.layers.len() {
                for v in &z {
                    min_pre = min_pre.min(v.abs());
                }
                h = z.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
            } else {
                h = z;
            }
        }
        let ce = {
            let m = h.iter().cloned().fold(f64::MIN, f64::max);
            let lse = m + h.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - h[prob.y[i]]
        };
        let term = match prob.loss.kind {
            LossKind::OneHot => ce,
            LossKind::Distill => {
                let t = prob.loss.temperature;
                let w = prob.loss.distill_weight;
                let soft = |v: &[f64]| {
                    let e: Vec<f64> = v.iter().map(|a| (a / t).exp()).collect();
                    let s: f64 = e.iter().sum();
                    e.into_iter().map(|a| a / s).collect::<Vec<_>>()
                };
                let ps = soft(&h);
                let pt = soft(&prob.teacher.unwrap()[i]);
                let kl: f64 = pt.iter().zip(&ps).map(|(a, b)| a * (a / b).ln()).sum();
                (1.0 - w) * ce + w * t * t * kl
            }
        };
        total += term;
    }
    let mut wsq = 0.0;
    for l in &p.layers {
        wsq += l.w.iter().map(|v| v * v).sum::<f64>();
    }
    (total / prob.x.len() as f64 + 0.5 * prob.weight_decay * wsq, min_pre)
}

/// Central differences over every scalar parameter.
pub fn fd_grads(p: &Params, prob: &Problem, h: f64) -> Vec<f64> {
    let mut q = p.clone();
    let mut out = Vec::new();
    for li in 0..p.layers.len() {
        for idx in 0..p.layers[li].w.len() {
            let orig = p.layers[li].w.as_slice().unwrap()[idx];
            q.layers[li].w.as_slice_mut().unwrap()[idx] = orig + h;
            let plus = objective(&q, prob).0;
            q.layers[li].w.as_slice_mut().unwrap()[idx] = orig - h;
            let minus = objective(&q, prob).0;
            q.layers[li].w.as_slice_mut().unwrap()[idx] = orig;
            out.push((plus - minus) / (2.0 * h));
        }
        for idx in 0..p.layers[li].b.len() {
            let orig = p.layers[li].b[idx];
            q.layers[li].b[idx] = orig + h;
            let plus = objective(&q, prob).0;
            q.layers[li].b[idx] = orig - h;
            let minus = objective(&q, prob).0;
            q.layers[li].b[idx] = orig;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    out
}

pub fn flatten(p: &Params) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &p.layers {
        out.extend(l.w.iter().copied());
        out.extend(l.b.iter().copied());
    }
    out
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps near-zero entries from dominating.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
