//! Three-layer 3×3 convolutional residual regressor with an analytic
//! reverse pass.
//!
//! Input channels are the aligned inverse depth and the filled inverse
//! quasi-dense scale; the single output channel is the residual `r`.
//! Activations are stored channel-major, `[c][y][x]`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::map::{FloatMap, MapKind};
use crate::rng::RngKey;

use super::{inverse_scale, TrainConfig};

/// `(input channels, output channels)` of each 3×3 layer.
pub const LAYER_SHAPES: [(usize, usize); 3] = [(2, 16), (16, 16), (16, 1)];
/// Negative-side slope of the hidden activations.
pub const LEAKY_SLOPE: f64 = 0.01;
const K: usize = 3;
/// Fixed per-channel input scaling. Aligned inverse depth is O(0.01–0.5)
/// and would otherwise learn far slower than the scale channel.
pub const INPUT_GAIN: [f64; 2] = [10.0, 1.0];

/// Weights `[out][in][ky][kx]` and biases of one correlation layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            weights: vec![0.0; out_ch * in_ch * K * K],
            bias: vec![0.0; out_ch],
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_ch + i) * K + ky) * K + kx]
    }
}

/// Parameters of the refiner; also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerParams {
    pub layers: Vec<ConvLayer>,
}

impl RefinerParams {
    pub fn zeros() -> Self {
        Self {
            layers: LAYER_SHAPES
                .iter()
                .map(|&(i, o)| ConvLayer::zeros(i, o))
                .collect(),
        }
    }

    /// He-uniform hidden layers; the output layer is scaled by `output_gain`
    /// so a small gain starts training near the zero residual.
    pub fn init(key: RngKey, output_gain: f64) -> Self {
        let mut rng = key.rng();
        let mut p = Self::zeros();
        let last = p.layers.len() - 1;
        for (l, layer) in p.layers.iter_mut().enumerate() {
            let fan_in = (layer.in_ch * K * K) as f64;
            let mut bound = libm::sqrt(6.0 / fan_in);
            if l == last {
                bound *= output_gain;
            }
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
            for b in &mut layer.bias {
                *b = if l == last { 0.0 } else { rng.gen_range(-0.1..0.1) };
            }
        }
        p
    }

    /// Rebuilds parameters from a flat list in declared layer order
    /// (weights then biases per layer).
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        let mut p = Self::zeros();
        if values.len() != p.len() {
            return Err(Error::InsufficientData {
                needed: p.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite refiner parameter"));
        }
        let mut it = values.iter().copied();
        for layer in &mut p.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(p)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// `self += alpha · other`
    pub fn add_scaled(&mut self, other: &RefinerParams, alpha: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.iter_mut() {
            *a *= alpha;
        }
    }
}

/// Zero-padded 3×3 cross-correlation.
fn conv_forward(layer: &ConvLayer, input: &[f64], w: usize, h: usize) -> Vec<f64> {
    let n = w * h;
    let mut out = vec![0.0; layer.out_ch * n];
    for o in 0..layer.out_ch {
        let dst = &mut out[o * n..(o + 1) * n];
        dst.fill(layer.bias[o]);
        for i in 0..layer.in_ch {
            let src = &input[i * n..(i + 1) * n];
            for ky in 0..K {
                for kx in 0..K {
                    let wt = layer.w(o, i, ky, kx);
                    if wt == 0.0 {
                        continue;
                    }
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let d = &mut dst[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += wt * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output rows/cols `t` for which `t + k − 1` lies inside `[0, len)`.
#[inline]
fn valid_range(k: usize, len: usize) -> (usize, usize) {
    let lo = 1usize.saturating_sub(k);
    let hi = (len + 1).saturating_sub(k).min(len);
    (lo, hi.max(lo))
}

/// Accumulates weight/bias gradients and returns the input gradient.
fn conv_backward(
    layer: &ConvLayer,
    input: &[f64],
    grad_out: &[f64],
    w: usize,
    h: usize,
    grad_layer: &mut ConvLayer,
    want_input_grad: bool,
) -> Vec<f64> {
    let n = w * h;
    let mut grad_in = if want_input_grad {
        vec![0.0; layer.in_ch * n]
    } else {
        Vec::new()
    };
    for o in 0..layer.out_ch {
        let g = &grad_out[o * n..(o + 1) * n];
        grad_layer.bias[o] += g.iter().sum::<f64>();
        for i in 0..layer.in_ch {
            let src = &input[i * n..(i + 1) * n];
            for ky in 0..K {
                for kx in 0..K {
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    let wt = layer.w(o, i, ky, kx);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let gr = &g[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        acc += gr.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if want_input_grad && wt != 0.0 {
                            let gi = &mut grad_in[i * n + sy * w + x0 + kx - 1..i * n + sy * w + x1 + kx - 1];
                            for (d, a) in gi.iter_mut().zip(gr) {
                                *d += wt * a;
                            }
                        }
                    }
                    grad_layer.weights[((o * layer.in_ch + i) * K + ky) * K + kx] += acc;
                }
            }
        }
    }
    grad_in
}

#[inline]
fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

fn check_inputs(params: &RefinerParams, z_ga: &FloatMap, inv_s_q: &FloatMap) -> Result<()> {
    z_ga.expect_kind(MapKind::InverseDepth)?;
    inv_s_q.expect_kind(MapKind::Scale)?;
    inv_s_q.expect_shape(z_ga.shape())?;
    let shapes_ok = params.layers.len() == LAYER_SHAPES.len()
        && params.layers.iter().zip(LAYER_SHAPES).all(|(l, (i, o))| {
            l.in_ch == i && l.out_ch == o && l.weights.len() == o * i * K * K && l.bias.len() == o
        });
    if !shapes_ok {
        return Err(Error::InvalidValue("refiner layer shapes are inconsistent"));
    }
    Ok(())
}

/// Activations kept for the reverse pass.
struct Tape {
    /// Layer inputs: stacked maps, then the two hidden activations.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    residual: Vec<f64>,
}

fn forward_tape(params: &RefinerParams, z_ga: &FloatMap, inv_s_q: &FloatMap) -> Tape {
    let (w, h) = z_ga.shape();
    // invalid pixels enter as the 0 sentinel
    let mut x = Vec::with_capacity(2 * w * h);
    x.extend(z_ga.values().iter().map(|v| v * INPUT_GAIN[0]));
    x.extend(inv_s_q.values().iter().map(|v| v * INPUT_GAIN[1]));
    let mut inputs = vec![x];
    let mut pre = Vec::new();
    let last = params.layers.len() - 1;
    let mut residual = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        let p = conv_forward(layer, inputs.last().expect("non-empty"), w, h);
        if l == last {
            residual = p;
        } else {
            inputs.push(p.iter().map(|&v| leaky(v)).collect());
            pre.push(p);
        }
    }
    Tape {
        inputs,
        pre,
        residual,
    }
}

/// Residual map `r` predicted from aligned inverse depth and the filled
/// inverse quasi-dense scale.
pub fn refiner_forward(params: &RefinerParams, z_ga: &FloatMap, inv_s_q_filled: &FloatMap) -> Result<FloatMap> {
    check_inputs(params, z_ga, inv_s_q_filled)?;
    let (w, h) = z_ga.shape();
    let tape = forward_tape(params, z_ga, inv_s_q_filled);
    FloatMap::dense(MapKind::Residual, w, h, tape.residual)
}

/// SML loss of the composed depth and its gradient w.r.t. every parameter.
pub fn refiner_grad(
    params: &RefinerParams,
    z_ga: &FloatMap,
    inv_s_q_filled: &FloatMap,
    d_gt: &FloatMap,
    d_int: &FloatMap,
    cfg: &TrainConfig,
) -> Result<(f64, RefinerParams)> {
    check_inputs(params, z_ga, inv_s_q_filled)?;
    d_gt.expect_kind(MapKind::Depth)?;
    d_int.expect_kind(MapKind::Depth)?;
    d_gt.expect_shape(z_ga.shape())?;
    d_int.expect_shape(z_ga.shape())?;
    let (w, h) = z_ga.shape();
    let n = w * h;
    let tape = forward_tape(params, z_ga, inv_s_q_filled);

    // composition and loss
    let mut d_hat = vec![0.0; n];
    let mut dd_dr = vec![0.0; n];
    let mut has = vec![false; n];
    for i in 0..n {
        if let Some(z) = z_ga.at(i) {
            let r = tape.residual[i];
            let (inv, clamped) = inverse_scale(r);
            let d = 1.0 / inv / z;
            d_hat[i] = d;
            has[i] = true;
            // d(1/(inv·z))/dr = −d/inv on the active side of ReLU and the clamp
            if !clamped && 1.0 + r > 0.0 {
                dd_dr[i] = -d / inv;
            }
        }
    }
    let count = |t: &FloatMap| (0..n).filter(|&i| has[i] && t.is_valid(i)).count();
    let (n_int, n_gt) = (count(d_int), count(d_gt));
    if n_int == 0 && n_gt == 0 {
        return Err(Error::EmptyDomain);
    }
    let mut loss_int = crate::sum::CompensatedSum::new();
    let mut loss_gt = crate::sum::CompensatedSum::new();
    let mut grad_r = vec![0.0; n];
    for i in 0..n {
        if !has[i] {
            continue;
        }
        let mut g = 0.0;
        if let Some(t) = d_int.at(i) {
            let e = d_hat[i] - t;
            loss_int.add(cfg.form.value(libm::fabs(e), cfg.beta));
            g += cfg.form.slope(e, cfg.beta) / n_int as f64;
        }
        if let Some(t) = d_gt.at(i) {
            let e = d_hat[i] - t;
            loss_gt.add(cfg.form.value(libm::fabs(e), cfg.beta));
            g += cfg.lambda_gt * cfg.form.slope(e, cfg.beta) / n_gt as f64;
        }
        grad_r[i] = g * dd_dr[i];
    }
    let mean = |s: crate::sum::CompensatedSum, k: usize| if k == 0 { 0.0 } else { s.total() / k as f64 };
    let loss = mean(loss_int, n_int) + cfg.lambda_gt * mean(loss_gt, n_gt);

    // reverse pass
    let mut grads = RefinerParams::zeros();
    let mut upstream = grad_r;
    for l in (0..params.layers.len()).rev() {
        let grad_in = conv_backward(
            &params.layers[l],
            &tape.inputs[l],
            &upstream,
            w,
            h,
            &mut grads.layers[l],
            l > 0,
        );
        if l > 0 {
            let pre = &tape.pre[l - 1];
            upstream = grad_in
                .iter()
                .zip(pre)
                .map(|(&g, &p)| if p > 0.0 { g } else { LEAKY_SLOPE * g })
                .collect();
        }
    }
    Ok((loss, grads))
}
