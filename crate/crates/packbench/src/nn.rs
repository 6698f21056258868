//! Minimal dense/conv network layer with hand-written backprop, enough
//! for the two Q-networks. Everything is f64 and fully deterministic, so
//! gradients can be validated against finite differences.

use crate::error::{PackError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Channel-major feature map: `data[(c*h + y)*w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_data(c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), c * h * w);
        Tensor { c, h, w, data }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.h + y) * self.w + x]
    }
}

/// 2D convolution, square kernel, symmetric zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[out_c][in_c][k][k]` flattened.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) -> Conv2d {
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: vec![0.0; out_c * in_c * k * k],
            bias: vec![0.0; out_c],
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        let fan_in = (self.in_c * self.k * self.k) as f64;
        let s = (1.0 / fan_in).sqrt();
        for w in &mut self.weight {
            *w = rng.gen_range(-s..s);
        }
        for b in &mut self.bias {
            *b = 0.0;
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    #[inline]
    fn widx(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_c + ic) * self.k + ky) * self.k + kx
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c);
        let (oh, ow) = self.out_dims(x.h, x.w);
        let mut out = Tensor::zeros(self.out_c, oh, ow);
        for oc in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[oc];
                    for ic in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as i64 - self.pad as i64;
                            if iy < 0 || iy >= x.h as i64 {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as i64 - self.pad as i64;
                                if ix < 0 || ix >= x.w as i64 {
                                    continue;
                                }
                                acc += self.weight[self.widx(oc, ic, ky, kx)]
                                    * x.at(ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    *out.at_mut(oc, oy, ox) = acc;
                }
            }
        }
        out
    }

    /// Accumulates weight/bias grads and returns the input gradient.
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Tensor {
        let mut grad_in = Tensor::zeros(x.c, x.h, x.w);
        for (oc, gb) in grad_b.iter_mut().enumerate().take(self.out_c) {
            for oy in 0..grad_out.h {
                for ox in 0..grad_out.w {
                    let g = grad_out.at(oc, oy, ox);
                    if g == 0.0 {
                        continue;
                    }
                    *gb += g;
                    for ic in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as i64 - self.pad as i64;
                            if iy < 0 || iy >= x.h as i64 {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as i64 - self.pad as i64;
                                if ix < 0 || ix >= x.w as i64 {
                                    continue;
                                }
                                let wi = self.widx(oc, ic, ky, kx);
                                grad_w[wi] += g * x.at(ic, iy as usize, ix as usize);
                                *grad_in.at_mut(ic, iy as usize, ix as usize) +=
                                    g * self.weight[wi];
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

pub fn tanh_forward(x: &Tensor) -> Tensor {
    Tensor {
        c: x.c,
        h: x.h,
        w: x.w,
        data: x.data.iter().map(|v| v.tanh()).collect(),
    }
}

/// Backward through tanh given the *output* activation.
pub fn tanh_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        c: y.c,
        h: y.h,
        w: y.w,
        data: y
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(y, g)| g * (1.0 - y * y))
            .collect(),
    }
}

/// Nearest-neighbor 2x upsample cropped to the target size.
pub fn upsample2_forward(x: &Tensor, th: usize, tw: usize) -> Tensor {
    assert!(th <= 2 * x.h && tw <= 2 * x.w);
    let mut out = Tensor::zeros(x.c, th, tw);
    for c in 0..x.c {
        for y in 0..th {
            for xx in 0..tw {
                *out.at_mut(c, y, xx) = x.at(c, y / 2, xx / 2);
            }
        }
    }
    out
}

pub fn upsample2_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_in = Tensor::zeros(x.c, x.h, x.w);
    for c in 0..x.c {
        for y in 0..grad_out.h {
            for xx in 0..grad_out.w {
                *grad_in.at_mut(c, y / 2, xx / 2) += grad_out.at(c, y, xx);
            }
        }
    }
    grad_in
}

pub fn global_avg_pool(x: &Tensor) -> Vec<f64> {
    let n = (x.h * x.w) as f64;
    (0..x.c)
        .map(|c| {
            let base = c * x.h * x.w;
            x.data[base..base + x.h * x.w].iter().sum::<f64>() / n
        })
        .collect()
}

pub fn global_avg_pool_backward(x: &Tensor, grad_out: &[f64]) -> Tensor {
    let n = (x.h * x.w) as f64;
    let mut grad_in = Tensor::zeros(x.c, x.h, x.w);
    for (c, go) in grad_out.iter().enumerate().take(x.c) {
        let g = go / n;
        let base = c * x.h * x.w;
        for v in &mut grad_in.data[base..base + x.h * x.w] {
            *v = g;
        }
    }
    grad_in
}

/// Fully connected layer.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_n: usize,
    pub out_n: usize,
    /// `[out_n][in_n]` flattened.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_n: usize, out_n: usize) -> Dense {
        Dense {
            in_n,
            out_n,
            weight: vec![0.0; out_n * in_n],
            bias: vec![0.0; out_n],
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        let s = (1.0 / self.in_n as f64).sqrt();
        for w in &mut self.weight {
            *w = rng.gen_range(-s..s);
        }
        for b in &mut self.bias {
            *b = 0.0;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_n);
        (0..self.out_n)
            .map(|o| {
                self.bias[o]
                    + self.weight[o * self.in_n..(o + 1) * self.in_n]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_n];
        for o in 0..self.out_n {
            let g = grad_out[o];
            grad_b[o] += g;
            for i in 0..self.in_n {
                grad_w[o * self.in_n + i] += g * x[i];
                grad_in[i] += g * self.weight[o * self.in_n + i];
            }
        }
        grad_in
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mh = self.m[i] / b1c;
            let vh = self.v[i] / b2c;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Worker Q-network shape: channels of the three stride-2 encoder stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerArch {
    pub in_c: usize,
    pub features: [usize; 3],
}

impl Default for WorkerArch {
    fn default() -> Self {
        WorkerArch {
            in_c: 3,
            features: [16, 32, 64],
        }
    }
}

/// Encoder-decoder scoring every placement cell: three stride-2 convs
/// down, three upsample+conv stages back up, then a 1x1 projection to a
/// single-channel score grid at input resolution.
#[derive(Debug, Clone)]
pub struct WorkerNet {
    pub arch: WorkerArch,
    pub d1: Conv2d,
    pub d2: Conv2d,
    pub d3: Conv2d,
    pub u1: Conv2d,
    pub u2: Conv2d,
    pub u3: Conv2d,
    pub head: Conv2d,
}

/// Forward activations kept for the backward pass.
pub struct WorkerTrace {
    x: Tensor,
    a1: Tensor,
    a2: Tensor,
    a3: Tensor,
    p1: Tensor,
    b1: Tensor,
    p2: Tensor,
    b2: Tensor,
    p3: Tensor,
    b3: Tensor,
    pub out: Tensor,
}

impl WorkerNet {
    pub fn new(arch: WorkerArch, rng: &mut ChaCha8Rng) -> WorkerNet {
        let [f1, f2, f3] = arch.features;
        let mut net = WorkerNet {
            arch,
            d1: Conv2d::new(arch.in_c, f1, 3, 2, 1),
            d2: Conv2d::new(f1, f2, 3, 2, 1),
            d3: Conv2d::new(f2, f3, 3, 2, 1),
            u1: Conv2d::new(f3, f2, 3, 1, 1),
            u2: Conv2d::new(f2, f1, 3, 1, 1),
            u3: Conv2d::new(f1, f1, 3, 1, 1),
            head: Conv2d::new(f1, 1, 1, 1, 0),
        };
        for c in net.convs_mut() {
            c.init(rng);
        }
        net
    }

    fn convs(&self) -> [&Conv2d; 7] {
        [&self.d1, &self.d2, &self.d3, &self.u1, &self.u2, &self.u3, &self.head]
    }

    fn convs_mut(&mut self) -> [&mut Conv2d; 7] {
        [
            &mut self.d1,
            &mut self.d2,
            &mut self.d3,
            &mut self.u1,
            &mut self.u2,
            &mut self.u3,
            &mut self.head,
        ]
    }

    pub fn forward(&self, x: &Tensor) -> WorkerTrace {
        let a1 = tanh_forward(&self.d1.forward(x));
        let a2 = tanh_forward(&self.d2.forward(&a1));
        let a3 = tanh_forward(&self.d3.forward(&a2));
        let p1 = upsample2_forward(&a3, a2.h, a2.w);
        let b1 = tanh_forward(&self.u1.forward(&p1));
        let p2 = upsample2_forward(&b1, a1.h, a1.w);
        let b2 = tanh_forward(&self.u2.forward(&p2));
        let p3 = upsample2_forward(&b2, x.h, x.w);
        let b3 = tanh_forward(&self.u3.forward(&p3));
        let out = self.head.forward(&b3);
        WorkerTrace {
            x: x.clone(),
            a1,
            a2,
            a3,
            p1,
            b1,
            p2,
            b2,
            p3,
            b3,
            out,
        }
    }

    /// Backward from a gradient on the score grid; returns the flat
    /// parameter gradient in `get_params` order.
    pub fn backward(&self, t: &WorkerTrace, grad_out: &Tensor) -> Vec<f64> {
        let mut grads: Vec<Vec<f64>> = self
            .convs()
            .iter()
            .map(|c| vec![0.0; c.param_count()])
            .collect();
        let mut conv_back = |idx: usize, c: &Conv2d, x: &Tensor, go: &Tensor| -> Tensor {
            let (gw, gb) = grads[idx].split_at_mut(c.weight.len());
            c.backward(x, go, gw, gb)
        };
        let g = conv_back(6, &self.head, &t.b3, grad_out);
        let g = tanh_backward(&t.b3, &g);
        let g = conv_back(5, &self.u3, &t.p3, &g);
        let g = upsample2_backward(&t.b2, &g);
        let g = tanh_backward(&t.b2, &g);
        let g = conv_back(4, &self.u2, &t.p2, &g);
        let g = upsample2_backward(&t.b1, &g);
        let g = tanh_backward(&t.b1, &g);
        let g = conv_back(3, &self.u1, &t.p1, &g);
        let g = upsample2_backward(&t.a3, &g);
        let g = tanh_backward(&t.a3, &g);
        let g = conv_back(2, &self.d3, &t.a2, &g);
        let g = tanh_backward(&t.a2, &g);
        let g = conv_back(1, &self.d2, &t.a1, &g);
        let g = tanh_backward(&t.a1, &g);
        let _ = conv_back(0, &self.d1, &t.x, &g);
        grads.concat()
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum()
    }

    pub fn get_params(&self, out: &mut Vec<f64>) {
        for c in self.convs() {
            out.extend_from_slice(&c.weight);
            out.extend_from_slice(&c.bias);
        }
    }

    pub fn set_params(&mut self, mut p: &[f64]) {
        for c in self.convs_mut() {
            let (w, rest) = p.split_at(c.weight.len());
            let (b, rest) = rest.split_at(c.bias.len());
            c.weight.copy_from_slice(w);
            c.bias.copy_from_slice(b);
            p = rest;
        }
        assert!(p.is_empty(), "parameter vector length mismatch");
    }
}

/// Manager Q-network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerArch {
    pub in_c: usize,
    pub features: [usize; 3],
    pub hidden: [usize; 2],
    pub slots: usize,
}

impl Default for ManagerArch {
    fn default() -> Self {
        ManagerArch {
            in_c: 7,
            features: [16, 32, 64],
            hidden: [256, 128],
            slots: 20,
        }
    }
}

/// Shared conv encoder applied to each candidate slot, global average
/// pooled, concatenated, then a 3-layer head emitting one Q per slot.
#[derive(Debug, Clone)]
pub struct ManagerNet {
    pub arch: ManagerArch,
    pub e1: Conv2d,
    pub e2: Conv2d,
    pub e3: Conv2d,
    pub fc1: Dense,
    pub fc2: Dense,
    pub fc3: Dense,
}

pub struct ManagerTrace {
    slots: Vec<(Tensor, Tensor, Tensor, Tensor)>, // (x, a1, a2, a3) per slot
    feat: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub out: Vec<f64>,
}

impl ManagerNet {
    pub fn new(arch: ManagerArch, rng: &mut ChaCha8Rng) -> ManagerNet {
        let [f1, f2, f3] = arch.features;
        let [h1, h2] = arch.hidden;
        let mut net = ManagerNet {
            arch,
            e1: Conv2d::new(arch.in_c, f1, 3, 2, 1),
            e2: Conv2d::new(f1, f2, 3, 2, 1),
            e3: Conv2d::new(f2, f3, 3, 2, 1),
            fc1: Dense::new(arch.slots * f3, h1),
            fc2: Dense::new(h1, h2),
            fc3: Dense::new(h2, arch.slots),
        };
        net.e1.init(rng);
        net.e2.init(rng);
        net.e3.init(rng);
        net.fc1.init(rng);
        net.fc2.init(rng);
        net.fc3.init(rng);
        net
    }

    /// One input tensor per slot; dead slots are all-zero tensors.
    pub fn forward(&self, slots: &[Tensor]) -> ManagerTrace {
        assert_eq!(slots.len(), self.arch.slots);
        let mut traces = Vec::with_capacity(slots.len());
        let mut feat = Vec::with_capacity(self.arch.slots * self.arch.features[2]);
        for x in slots {
            let a1 = tanh_forward(&self.e1.forward(x));
            let a2 = tanh_forward(&self.e2.forward(&a1));
            let a3 = tanh_forward(&self.e3.forward(&a2));
            feat.extend(global_avg_pool(&a3));
            traces.push((x.clone(), a1, a2, a3));
        }
        let h1 = self.fc1.forward(&feat).iter().map(|v| v.tanh()).collect::<Vec<_>>();
        let h2 = self.fc2.forward(&h1).iter().map(|v| v.tanh()).collect::<Vec<_>>();
        let out = self.fc3.forward(&h2);
        ManagerTrace {
            slots: traces,
            feat,
            h1,
            h2,
            out,
        }
    }

    pub fn backward(&self, t: &ManagerTrace, grad_out: &[f64]) -> Vec<f64> {
        let mut ge1 = vec![0.0; self.e1.param_count()];
        let mut ge2 = vec![0.0; self.e2.param_count()];
        let mut ge3 = vec![0.0; self.e3.param_count()];
        let mut gf1 = vec![0.0; self.fc1.param_count()];
        let mut gf2 = vec![0.0; self.fc2.param_count()];
        let mut gf3 = vec![0.0; self.fc3.param_count()];

        let dense_back = |d: &Dense, x: &[f64], go: &[f64], g: &mut [f64]| -> Vec<f64> {
            let (gw, gb) = g.split_at_mut(d.weight.len());
            d.backward(x, go, gw, gb)
        };
        let g = dense_back(&self.fc3, &t.h2, grad_out, &mut gf3);
        let g: Vec<f64> = g.iter().zip(&t.h2).map(|(g, y)| g * (1.0 - y * y)).collect();
        let g = dense_back(&self.fc2, &t.h1, &g, &mut gf2);
        let g: Vec<f64> = g.iter().zip(&t.h1).map(|(g, y)| g * (1.0 - y * y)).collect();
        let gfeat = dense_back(&self.fc1, &t.feat, &g, &mut gf1);

        let f3 = self.arch.features[2];
        for (s, (x, a1, a2, a3)) in t.slots.iter().enumerate() {
            let slot_g = &gfeat[s * f3..(s + 1) * f3];
            if slot_g.iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = global_avg_pool_backward(a3, slot_g);
            let g = tanh_backward(a3, &g);
            let (gw, gb) = ge3.split_at_mut(self.e3.weight.len());
            let g = self.e3.backward(a2, &g, gw, gb);
            let g = tanh_backward(a2, &g);
            let (gw, gb) = ge2.split_at_mut(self.e2.weight.len());
            let g = self.e2.backward(a1, &g, gw, gb);
            let g = tanh_backward(a1, &g);
            let (gw, gb) = ge1.split_at_mut(self.e1.weight.len());
            let _ = self.e1.backward(x, &g, gw, gb);
        }
        [ge1, ge2, ge3, gf1, gf2, gf3].concat()
    }

    pub fn param_count(&self) -> usize {
        self.e1.param_count()
            + self.e2.param_count()
            + self.e3.param_count()
            + self.fc1.param_count()
            + self.fc2.param_count()
            + self.fc3.param_count()
    }

    pub fn get_params(&self, out: &mut Vec<f64>) {
        for c in [&self.e1, &self.e2, &self.e3] {
            out.extend_from_slice(&c.weight);
            out.extend_from_slice(&c.bias);
        }
        for d in [&self.fc1, &self.fc2, &self.fc3] {
            out.extend_from_slice(&d.weight);
            out.extend_from_slice(&d.bias);
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut p = p;
        for c in [&mut self.e1, &mut self.e2, &mut self.e3] {
            let (w, rest) = p.split_at(c.weight.len());
            let (b, rest) = rest.split_at(c.bias.len());
            c.weight.copy_from_slice(w);
            c.bias.copy_from_slice(b);
            p = rest;
        }
        for d in [&mut self.fc1, &mut self.fc2, &mut self.fc3] {
            let (w, rest) = p.split_at(d.weight.len());
            let (b, rest) = rest.split_at(d.bias.len());
            d.weight.copy_from_slice(w);
            d.bias.copy_from_slice(b);
            p = rest;
        }
        assert!(p.is_empty(), "parameter vector length mismatch");
    }
}

/// On-disk checkpoint: both networks' shapes and parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub worker: WorkerArch,
    pub manager: ManagerArch,
    pub epochs_trained: usize,
    /// 1 = worker pretrain (manager untrained), 2 = joint.
    pub stage: u8,
}

const PKQN_MAGIC: &[u8; 4] = b"PKQN";
const PKQN_VERSION: u16 = 1;

/// Binary layout: magic, version u16 LE, meta JSON (u32 LE length +
/// bytes), then worker and manager parameter vectors as u64-counted
/// f32 LE runs.
pub fn write_pkqn(
    path: &std::path::Path,
    meta: &CheckpointMeta,
    worker: &WorkerNet,
    manager: &ManagerNet,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(PKQN_MAGIC);
    buf.extend_from_slice(&PKQN_VERSION.to_le_bytes());
    let meta_json = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    for params in [collect_params(worker), collect_params_m(manager)] {
        buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            buf.extend_from_slice(&(p as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    // JSON sidecar with the metadata alone, for tooling.
    let sidecar = path.with_extension("json");
    std::fs::write(sidecar, serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

fn collect_params(net: &WorkerNet) -> Vec<f64> {
    let mut v = Vec::with_capacity(net.param_count());
    net.get_params(&mut v);
    v
}

fn collect_params_m(net: &ManagerNet) -> Vec<f64> {
    let mut v = Vec::with_capacity(net.param_count());
    net.get_params(&mut v);
    v
}

pub fn read_pkqn(path: &std::path::Path) -> Result<(CheckpointMeta, WorkerNet, ManagerNet)> {
    let buf = std::fs::read(path)?;
    let fail = |m: &str| PackError::Format(format!("{}: {m}", path.display()));
    if buf.len() < 10 || &buf[0..4] != PKQN_MAGIC {
        return Err(fail("not a PKQN checkpoint"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != PKQN_VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let meta_len = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
    let mut off = 10;
    let meta: CheckpointMeta = serde_json::from_slice(
        buf.get(off..off + meta_len).ok_or_else(|| fail("truncated metadata"))?,
    )?;
    off += meta_len;
    let read_vec = |off: &mut usize| -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(
            buf.get(*off..*off + 8)
                .ok_or_else(|| fail("truncated parameter count"))?
                .try_into()
                .unwrap(),
        ) as usize;
        *off += 8;
        let bytes = buf
            .get(*off..*off + 4 * n)
            .ok_or_else(|| fail("truncated parameters"))?;
        *off += 4 * n;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    };
    let wp = read_vec(&mut off)?;
    let mp = read_vec(&mut off)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worker = WorkerNet::new(meta.worker, &mut rng);
    let mut manager = ManagerNet::new(meta.manager, &mut rng);
    if wp.len() != worker.param_count() || mp.len() != manager.param_count() {
        return Err(fail("parameter count does not match architecture"));
    }
    worker.set_params(&wp);
    manager.set_params(&mp);
    Ok((meta, worker, manager))
}

use rand::SeedableRng;
