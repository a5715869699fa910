//! 3×3 convolutions (zero padding 1), activations and nearest-neighbour
//! upsampling on CHW tensors, with their backward passes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation and the activation output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width);
        Self { channels, height, width, data }
    }
}

pub const KERNEL: usize = 3;
const PAD: isize = 1;

pub fn conv_output_side(input: usize, stride: usize) -> usize {
    (input + 2 * PAD as usize - KERNEL) / stride + 1
}

/// Weights are laid out `[out][in][ky][kx]`.
pub fn conv_forward(input: &Tensor, weights: &[f64], bias: &[f64], out_channels: usize, stride: usize) -> Tensor {
    let (ic, ih, iw) = (input.channels, input.height, input.width);
    let (oh, ow) = (conv_output_side(ih, stride), conv_output_side(iw, stride));
    let mut out = Tensor::zeros(out_channels, oh, ow);
    for o in 0..out_channels {
        let plane = &mut out.data[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias[o]);
        for i in 0..ic {
            let src = &input.data[i * ih * iw..(i + 1) * ih * iw];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let w = weights[((o * ic + i) * KERNEL + ky) * KERNEL + kx];
                    if w == 0.0 {
                        continue;
                    }
                    for y in 0..oh {
                        let sy = (y * stride) as isize + ky as isize - PAD;
                        if sy < 0 || sy >= ih as isize {
                            continue;
                        }
                        let row = &src[sy as usize * iw..(sy as usize + 1) * iw];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (x, d) in dst.iter_mut().enumerate() {
                            let sx = (x * stride) as isize + kx as isize - PAD;
                            if sx >= 0 && sx < iw as isize {
                                *d += w * row[sx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and returns the gradient w.r.t. the input.
#[allow(clippy::needless_range_loop)]
pub fn conv_backward(
    input: &Tensor,
    weights: &[f64],
    grad_pre: &Tensor,
    stride: usize,
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) -> Tensor {
    let (ic, ih, iw) = (input.channels, input.height, input.width);
    let (oc, oh, ow) = (grad_pre.channels, grad_pre.height, grad_pre.width);
    let mut grad_in = Tensor::zeros(ic, ih, iw);
    for o in 0..oc {
        let g = &grad_pre.data[o * oh * ow..(o + 1) * oh * ow];
        grad_bias[o] += g.iter().sum::<f64>();
        for i in 0..ic {
            let src = &input.data[i * ih * iw..(i + 1) * ih * iw];
            let gin = &mut grad_in.data[i * ih * iw..(i + 1) * ih * iw];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let widx = ((o * ic + i) * KERNEL + ky) * KERNEL + kx;
                    let w = weights[widx];
                    let mut gw = 0.0;
                    for y in 0..oh {
                        let sy = (y * stride) as isize + ky as isize - PAD;
                        if sy < 0 || sy >= ih as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        for x in 0..ow {
                            let sx = (x * stride) as isize + kx as isize - PAD;
                            if sx < 0 || sx >= iw as isize {
                                continue;
                            }
                            let gv = g[y * ow + x];
                            gw += gv * src[sy * iw + sx as usize];
                            gin[sy * iw + sx as usize] += gv * w;
                        }
                    }
                    grad_weights[widx] += gw;
                }
            }
        }
    }
    grad_in
}

pub fn activate(pre: &Tensor, act: Activation) -> Tensor {
    Tensor { data: pre.data.iter().map(|&v| act.apply(v)).collect(), ..*pre }
}

pub fn activation_backward(pre: &Tensor, out: &Tensor, grad_out: &Tensor, act: Activation) -> Tensor {
    let data =
        pre.data.iter().zip(&out.data).zip(&grad_out.data).map(|((&p, &o), &g)| g * act.derivative(p, o)).collect();
    Tensor { data, ..*pre }
}

pub fn upsample2x(input: &Tensor) -> Tensor {
    let (c, h, w) = (input.channels, input.height, input.width);
    let mut out = Tensor::zeros(c, 2 * h, 2 * w);
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                out.data[(ch * 2 * h + y) * 2 * w + x] = input.data[(ch * h + y / 2) * w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2x_backward(grad_out: &Tensor) -> Tensor {
    let (c, h, w) = (grad_out.channels, grad_out.height / 2, grad_out.width / 2);
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                out.data[(ch * h + y / 2) * w + x / 2] += grad_out.data[(ch * 2 * h + y) * 2 * w + x];
            }
        }
    }
    out
}
