//! Plain-text network descriptions.
//!
//! One layer per line, `#` starts a comment:
//!
//! ```text
//! input 1 28 28
//! conv2d 1 8 5 stride=1 pad=0
//! activation srelu
//! maxpool 2
//! flatten
//! dense 1152 10
//! loss softmax-xent 10
//! ```
//!
//! The `input` line gives the per-sample shape (`C H W` or a single width).
//! A `loss` line, if present, must be last.

use std::fmt;
use std::str::FromStr;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Window and stride both `size`.
    MaxPool {
        size: usize,
    },
    AvgPool {
        size: usize,
    },
    Flatten,
    Activation(ActivationKind),
    Maxout {
        k: usize,
    },
    /// Softmax cross-entropy over `classes` logits.
    Loss {
        classes: usize,
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
            || matches!(
                self,
                LayerSpec::Activation(ActivationKind::PRelu | ActivationKind::Apl { .. } | ActivationKind::SRelu(_))
            )
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let chain = |msg: String| Error::invalid(format!("layer `{self}`: {msg}"));
        match *self {
            LayerSpec::Dense { inputs, outputs } => match input {
                [f] if *f == inputs => Ok(vec![outputs]),
                _ => Err(chain(format!("expects [{inputs}] input, got {input:?}"))),
            },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => match input {
                [c, h, w] if *c == in_channels => {
                    let oh = conv_extent(*h, kernel, stride, padding)
                        .ok_or_else(|| chain(format!("kernel {kernel} does not fit {h}x{w}")))?;
                    let ow = conv_extent(*w, kernel, stride, padding)
                        .ok_or_else(|| chain(format!("kernel {kernel} does not fit {h}x{w}")))?;
                    Ok(vec![out_channels, oh, ow])
                }
                _ => Err(chain(format!("expects {in_channels} input channels, got {input:?}"))),
            },
            LayerSpec::MaxPool { size } | LayerSpec::AvgPool { size } => match input {
                [c, h, w] if *h >= size && *w >= size => Ok(vec![*c, h / size, w / size]),
                _ => Err(chain(format!("cannot pool {input:?}"))),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Activation(_) => Ok(input.to_vec()),
            LayerSpec::Maxout { k } => match input {
                [c, rest @ ..] if *c % k == 0 => {
                    let mut out = vec![c / k];
                    out.extend_from_slice(rest);
                    Ok(out)
                }
                _ => Err(chain(format!("{input:?} channels not divisible by {k}"))),
            },
            LayerSpec::Loss { classes } => match input {
                [f] if *f == classes => Ok(input.to_vec()),
                _ => Err(chain(format!("expects [{classes}] logits, got {input:?}"))),
            },
        }
    }
}

fn conv_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense {inputs} {outputs}"),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv2d {in_channels} {out_channels} {kernel} stride={stride} pad={padding}"
            ),
            LayerSpec::MaxPool { size } => write!(f, "maxpool {size}"),
            LayerSpec::AvgPool { size } => write!(f, "avgpool {size}"),
            LayerSpec::Flatten => write!(f, "flatten"),
            LayerSpec::Activation(kind) => write!(f, "activation {kind}"),
            LayerSpec::Maxout { k } => write!(f, "maxout {k}"),
            LayerSpec::Loss { classes } => write!(f, "loss softmax-xent {classes}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    /// Per-sample input shape: `[C, H, W]` or `[F]`.
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: &[usize], layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec {
            input: input.to_vec(),
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Per-sample shapes: the input followed by every layer's output.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if !matches!(self.input.len(), 1 | 3) || self.input.contains(&0) {
            return Err(Error::invalid(format!(
                "input shape {:?} must be [C, H, W] or [F]",
                self.input
            )));
        }
        let mut shapes = vec![self.input.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().expect("nonempty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.layers.iter().position(|l| matches!(l, LayerSpec::Loss { .. })) {
            if pos + 1 != self.layers.len() {
                return Err(Error::invalid("loss must be the last layer"));
            }
        }
        self.shapes().map(|_| ())
    }

    pub fn classes(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Loss { classes }) => Some(*classes),
            _ => None,
        }
    }

    /// Same network with every activation layer replaced by `kind`.
    pub fn with_activation(&self, kind: ActivationKind) -> Self {
        NetworkSpec {
            input: self.input.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    LayerSpec::Activation(_) => LayerSpec::Activation(kind),
                    other => *other,
                })
                .collect(),
        }
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input")?;
        for d in &self.input {
            write!(f, " {d}")?;
        }
        writeln!(f)?;
        for layer in &self.layers {
            writeln!(f, "{layer}")?;
        }
        Ok(())
    }
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: line_no, msg };
            let mut words = line.split_whitespace();
            let head = words.next().expect("nonempty line");
            let rest: Vec<&str> = words.collect();
            if head == "input" {
                if input.is_some() {
                    return Err(err("duplicate input line".into()));
                }
                let dims = rest
                    .iter()
                    .map(|w| w.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| err(format!("bad input shape: {e}")))?;
                input = Some(dims);
                continue;
            }
            let layer = parse_layer(head, &rest).map_err(|e| err(e.to_string()))?;
            layers.push(layer);
        }
        let input = input.ok_or(Error::Config {
            line: 0,
            msg: "missing `input` line".into(),
        })?;
        NetworkSpec::new(&input, layers)
    }
}

fn parse_layer(head: &str, args: &[&str]) -> Result<LayerSpec> {
    let mut positional = Vec::new();
    let mut stride = 1;
    let mut padding = 0;
    if head != "activation" {
        for a in args {
            if let Some(v) = a.strip_prefix("stride=") {
                stride = parse_num(v)?;
            } else if let Some(v) = a.strip_prefix("pad=") {
                padding = parse_num(v)?;
            } else {
                positional.push(*a);
            }
        }
    }
    let want = |n: usize| -> Result<Vec<usize>> {
        if positional.len() != n {
            return Err(Error::invalid(format!(
                "`{head}` takes {n} arguments, got {}",
                positional.len()
            )));
        }
        positional.iter().map(|w| parse_num(w)).collect()
    };
    let layer = match head {
        "dense" => {
            let v = want(2)?;
            LayerSpec::Dense {
                inputs: v[0],
                outputs: v[1],
            }
        }
        "conv2d" => {
            let v = want(3)?;
            LayerSpec::Conv2d {
                in_channels: v[0],
                out_channels: v[1],
                kernel: v[2],
                stride,
                padding,
            }
        }
        "maxpool" => LayerSpec::MaxPool { size: want(1)?[0] },
        "avgpool" => LayerSpec::AvgPool { size: want(1)?[0] },
        "flatten" => {
            want(0)?;
            LayerSpec::Flatten
        }
        "maxout" => LayerSpec::Maxout { k: want(1)?[0] },
        "activation" => LayerSpec::Activation(args.join(" ").parse()?),
        "loss" => match positional.as_slice() {
            ["softmax-xent", n] => LayerSpec::Loss { classes: parse_num(n)? },
            _ => return Err(Error::invalid("expected `loss softmax-xent <classes>`")),
        },
        other => return Err(Error::invalid(format!("unknown layer kind `{other}`"))),
    };
    let zero = match layer {
        LayerSpec::Dense { inputs, outputs } => inputs == 0 || outputs == 0,
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            ..
        } => in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0,
        LayerSpec::MaxPool { size } | LayerSpec::AvgPool { size } => size == 0,
        LayerSpec::Maxout { k } => k == 0,
        LayerSpec::Loss { classes } => classes < 2,
        _ => false,
    };
    if zero {
        return Err(Error::invalid(format!("degenerate layer `{layer}`")));
    }
    Ok(layer)
}

fn parse_num(word: &str) -> Result<usize> {
    word.parse()
        .map_err(|_| Error::invalid(format!("expected a non-negative integer, got `{word}`")))
}
