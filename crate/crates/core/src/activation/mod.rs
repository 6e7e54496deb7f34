//! Activation functions as pure tensor ops, and the [`Activation`] wrapper the
//! network layers use.

mod apl;
mod maxout;
mod rectifier;
mod srelu;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

pub use apl::{apl_forward, apl_grads, AplParams};
pub use maxout::{maxout_backward, maxout_forward, MaxoutPass};
pub use rectifier::{
    lrelu_forward, lrelu_input_grad, prelu_forward, prelu_grads, relu_forward, relu_input_grad, PReluParams,
};
pub use srelu::{
    srelu_backward, srelu_forward, srelu_input_grad, srelu_param_grads, SReluParams, SReluUnit, SReluVariant, Segment,
};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Gradients of one activation call.
#[derive(Clone, Debug, PartialEq)]
pub struct ActGradBundle<T> {
    pub d_input: Tensor<T>,
    /// One tensor per parameter tensor, same shapes, in declaration order.
    pub d_params: Vec<Tensor<T>>,
}

/// `(channel, flat range)` for every `(n, c)` plane of an NCHW tensor.
pub(crate) fn channel_spans(dims: [usize; 4]) -> impl Iterator<Item = (usize, Range<usize>)> {
    let [n, c, h, w] = dims;
    let plane = h * w;
    (0..n * c).map(move |nc| (nc % c, nc * plane..(nc + 1) * plane))
}

pub const DEFAULT_LRELU_SLOPE: f64 = 0.2;
pub const DEFAULT_PRELU_INIT: f64 = 0.25;
pub const DEFAULT_APL_HINGES: usize = 1;

/// Activation choice without parameters, as written in configs and network specs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActivationKind {
    Relu,
    LRelu { slope: f64 },
    PRelu,
    Apl { hinges: usize },
    SRelu(SReluVariant),
}

impl ActivationKind {
    pub fn is_srelu(&self) -> bool {
        matches!(self, ActivationKind::SRelu(_))
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => write!(f, "relu"),
            ActivationKind::LRelu { slope } => write!(f, "lrelu {slope}"),
            ActivationKind::PRelu => write!(f, "prelu"),
            ActivationKind::Apl { hinges } => write!(f, "apl {hinges}"),
            ActivationKind::SRelu(SReluVariant::ChannelWise) => write!(f, "srelu"),
            ActivationKind::SRelu(SReluVariant::ChannelShared) => write!(f, "srelu-shared"),
        }
    }
}

/// Parses `relu`, `lrelu [slope]`, `prelu`, `apl [hinges]`, `srelu`, `srelu-shared`.
impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let name = words.next().unwrap_or("");
        let arg = words.next();
        if words.next().is_some() {
            return Err(Error::invalid(format!("trailing input in activation `{s}`")));
        }
        let bad_arg = |a: &str| Error::invalid(format!("bad argument `{a}` for activation `{name}`"));
        let kind = match (name, arg) {
            ("relu", None) => ActivationKind::Relu,
            ("lrelu", None) => ActivationKind::LRelu {
                slope: DEFAULT_LRELU_SLOPE,
            },
            ("lrelu", Some(a)) => {
                let slope: f64 = a.parse().map_err(|_| bad_arg(a))?;
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::invalid(format!(
                        "leaky ReLU slope must lie in (0, 1), got {slope}"
                    )));
                }
                ActivationKind::LRelu { slope }
            }
            ("prelu", None) => ActivationKind::PRelu,
            ("apl", None) => ActivationKind::Apl {
                hinges: DEFAULT_APL_HINGES,
            },
            ("apl", Some(a)) => {
                let hinges: usize = a.parse().map_err(|_| bad_arg(a))?;
                if hinges == 0 {
                    return Err(Error::invalid("APL needs at least one hinge"));
                }
                ActivationKind::Apl { hinges }
            }
            ("srelu", None) => ActivationKind::SRelu(SReluVariant::ChannelWise),
            ("srelu-shared", None) => ActivationKind::SRelu(SReluVariant::ChannelShared),
            (_, Some(a)) => return Err(bad_arg(a)),
            _ => return Err(Error::invalid(format!("unknown activation `{name}`"))),
        };
        Ok(kind)
    }
}

/// Initial values for freshly built activation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationInit {
    /// Initial right threshold of SReLU units.
    pub t_tilde: f64,
    /// Initial left slope of SReLU units.
    pub a_tilde: f64,
}

impl Default for ActivationInit {
    fn default() -> Self {
        ActivationInit {
            t_tilde: 1.0,
            a_tilde: DEFAULT_LRELU_SLOPE,
        }
    }
}

/// An activation together with its learnable parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation<T> {
    Relu,
    LRelu(T),
    PRelu(PReluParams<T>),
    Apl(AplParams<T>),
    SRelu(SReluParams<T>),
}

impl<T: Scalar> Activation<T> {
    pub fn build(kind: ActivationKind, channels: usize, init: ActivationInit) -> Result<Self> {
        Ok(match kind {
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::LRelu { slope } => Activation::LRelu(T::cast(slope)),
            ActivationKind::PRelu => Activation::PRelu(PReluParams::new(channels, T::cast(DEFAULT_PRELU_INIT))),
            ActivationKind::Apl { hinges } => Activation::Apl(AplParams::new(hinges, channels)?),
            ActivationKind::SRelu(variant) => Activation::SRelu(SReluParams::adaptive_init(
                variant,
                channels,
                T::cast(init.t_tilde),
                T::cast(init.a_tilde),
            )),
        })
    }

    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Relu => ActivationKind::Relu,
            Activation::LRelu(s) => ActivationKind::LRelu { slope: s.as_f64() },
            Activation::PRelu(_) => ActivationKind::PRelu,
            Activation::Apl(p) => ActivationKind::Apl { hinges: p.hinges() },
            Activation::SRelu(p) => ActivationKind::SRelu(p.variant),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Relu => relu_forward(x),
            Activation::LRelu(s) => lrelu_forward(x, *s),
            Activation::PRelu(p) => prelu_forward(x, p),
            Activation::Apl(p) => apl_forward(x, p),
            Activation::SRelu(p) => srelu_forward(x, p),
        }
    }

    pub fn backward(&self, x: &Tensor<T>, upstream: &Tensor<T>) -> Result<ActGradBundle<T>> {
        match self {
            Activation::Relu => Ok(ActGradBundle {
                d_input: relu_input_grad(x, upstream)?,
                d_params: Vec::new(),
            }),
            Activation::LRelu(s) => Ok(ActGradBundle {
                d_input: lrelu_input_grad(x, *s, upstream)?,
                d_params: Vec::new(),
            }),
            Activation::PRelu(p) => prelu_grads(x, p, upstream),
            Activation::Apl(p) => apl_grads(x, p, upstream),
            Activation::SRelu(p) => srelu_backward(x, p, upstream),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Activation::Relu | Activation::LRelu(_) => Vec::new(),
            Activation::PRelu(p) => vec![&p.a],
            Activation::Apl(p) => vec![&p.a, &p.b],
            Activation::SRelu(p) => p.tensors().to_vec(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Activation::Relu | Activation::LRelu(_) => Vec::new(),
            Activation::PRelu(p) => vec![&mut p.a],
            Activation::Apl(p) => vec![&mut p.a, &mut p.b],
            Activation::SRelu(p) => p.tensors_mut().into_iter().collect(),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Activation::Relu | Activation::LRelu(_) => &[],
            Activation::PRelu(_) => &["a"],
            Activation::Apl(_) => &["a", "b"],
            Activation::SRelu(_) => &["t_r", "a_r", "t_l", "a_l"],
        }
    }

    pub fn frozen(&self) -> bool {
        matches!(self, Activation::SRelu(p) if p.frozen)
    }
}
