use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One activation unit written out as plain scalar arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarActivation {
    Relu,
    LRelu { slope: f64 },
    PRelu { a: f64 },
    Apl { a: Vec<f64>, b: Vec<f64> },
    SRelu { t_r: f64, a_r: f64, t_l: f64, a_l: f64 },
}

impl ScalarActivation {
    pub fn srelu(t_r: f64, a_r: f64, t_l: f64, a_l: f64) -> Self {
        ScalarActivation::SRelu { t_r, a_r, t_l, a_l }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarActivation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ScalarActivation::LRelu { slope: a } => {
                let neg = if a * x < 0.0 { a * x } else { 0.0 };
                let pos = if x > 0.0 { x } else { 0.0 };
                neg + pos
            }
            // A learned slope may leave (0, 1), so scale the negative part
            // rather than clipping `a * x`.
            ScalarActivation::PRelu { a } => {
                let neg = if x < 0.0 { x } else { 0.0 };
                let pos = if x > 0.0 { x } else { 0.0 };
                a * neg + pos
            }
            ScalarActivation::Apl { a, b } => {
                let mut y = if x > 0.0 { x } else { 0.0 };
                for (&a_s, &b_s) in a.iter().zip(b) {
                    let z = -x + b_s;
                    y += a_s * if z > 0.0 { z } else { 0.0 };
                }
                y
            }
            &ScalarActivation::SRelu { t_r, a_r, t_l, a_l } => {
                if x >= t_r {
                    x + (a_r - 1.0) * (x - t_r)
                } else if x <= t_l {
                    t_l + a_l * (x - t_l)
                } else {
                    x
                }
            }
        }
    }

    /// Points where the function is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            ScalarActivation::Relu | ScalarActivation::LRelu { .. } | ScalarActivation::PRelu { .. } => {
                vec![0.0]
            }
            ScalarActivation::Apl { b, .. } => std::iter::once(0.0).chain(b.iter().copied()).collect(),
            &ScalarActivation::SRelu { t_r, t_l, .. } => vec![t_r, t_l],
        }
    }

    /// The unit that `act` applies to channel `c`.
    pub fn from_activation(act: &Activation<f64>, c: usize) -> Self {
        match act {
            Activation::Relu => ScalarActivation::Relu,
            Activation::LRelu(s) => ScalarActivation::LRelu { slope: *s },
            Activation::PRelu(p) => ScalarActivation::PRelu { a: p.a.data()[c] },
            Activation::Apl(p) => {
                let (s, ch) = (p.hinges(), p.channels());
                ScalarActivation::Apl {
                    a: (0..s).map(|i| p.a.data()[i * ch + c]).collect(),
                    b: (0..s).map(|i| p.b.data()[i * ch + c]).collect(),
                }
            }
            Activation::SRelu(p) => {
                let u = p.unit(c);
                ScalarActivation::srelu(u.t_r, u.a_r, u.t_l, u.a_l)
            }
        }
    }
}

/// Applies `act` element by element through [`ScalarActivation`], NCHW layout.
pub fn activation_reference(act: &Activation<f64>, x: &Tensor<f64>) -> Result<Tensor<f64>> {
    let [n, c, h, w] = x.dims4()?;
    let units: Vec<_> = (0..c).map(|ch| ScalarActivation::from_activation(act, ch)).collect();
    let mut out = Vec::with_capacity(x.len());
    for b in 0..n {
        for (ch, unit) in units.iter().enumerate() {
            for i in 0..h * w {
                out.push(unit.eval(x.data()[(b * c + ch) * h * w + i]));
            }
        }
    }
    Tensor::from_vec(x.shape(), out)
}

/// Direct cross-correlation with explicit bounds tests, one output at a time.
/// `x: [N, Ci, H, W]`, `weight: [Co, Ci, K, K]`, `bias: [Co]`.
pub fn conv2d_reference(
    x: &Tensor<f64>,
    weight: &Tensor<f64>,
    bias: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<f64>> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || bias.len() != ws[0] {
        return Err(Error::invalid(format!(
            "conv reference: shapes {xs:?} {ws:?} do not fit"
        )));
    }
    let (n, ci, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (co, k) = (ws[0], ws[2]);
    if stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::invalid("conv reference: kernel does not fit"));
    }
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let xv = |b: usize, i: usize, y: usize, x_: usize| x.data()[((b * ci + i) * h + y) * w + x_];
    let wv = |o: usize, i: usize, ky: usize, kx: usize| weight.data()[((o * ci + i) * k + ky) * k + kx];

    let mut out = Vec::with_capacity(n * co * oh * ow);
    for b in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.data()[o];
                    for i in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += wv(o, i, ky, kx) * xv(b, i, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::from_vec(&[n, co, oh, ow], out)
}
