//! Sequential networks: dense, conv2d, pooling, flatten, activation and maxout
//! layers with an optional softmax cross-entropy head.

mod checkpoint;
pub mod kernels;
mod presets;
mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use presets::{preset, PRESET_NAMES};
pub use spec::{LayerSpec, NetworkSpec};

use crate::activation::{maxout_backward, maxout_forward, Activation, ActivationInit, SReluParams};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Scalar, Tensor};

use kernels::*;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Dense {
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
    Conv2d {
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: usize,
    },
    MaxPool(usize),
    AvgPool(usize),
    Flatten,
    Activation(Activation<T>),
    Maxout(usize),
}

impl<T: Scalar> Layer<T> {
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => vec![weight, bias],
            Layer::Activation(a) => a.params(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => vec![weight, bias],
            Layer::Activation(a) => a.params_mut(),
            _ => Vec::new(),
        }
    }
}

/// Per-layer record of a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    /// `activations[0]` is the batch; `activations[i + 1]` is layer `i`'s output.
    pub activations: Vec<Tensor<T>>,
    /// Winning indices of max-pool and maxout layers, by layer index.
    switches: Vec<Option<Vec<usize>>>,
    pub loss: Option<T>,
    pub probs: Option<Tensor<T>>,
    pub predictions: Vec<usize>,
    d_logits: Option<Tensor<T>>,
}

impl<T: Scalar> ForwardPass<T> {
    /// Output of the last layer (the logits when a loss head is present).
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("at least the input")
    }

    /// Input seen by layer `i`.
    pub fn layer_input(&self, i: usize) -> &Tensor<T> {
        &self.activations[i]
    }
}

/// Gradients for every layer's parameters, mirroring [`Layer::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub per_layer: Vec<Vec<Tensor<T>>>,
    pub d_input: Tensor<T>,
}

/// A named set of parameter tensors that share optimizer treatment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub layer: usize,
    /// Indices into the layer's parameter list.
    pub tensors: std::ops::Range<usize>,
    pub apply_weight_decay: bool,
    pub frozen: bool,
    /// Activation parameters (PReLU, APL, SReLU).
    pub activation: bool,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub groups: Vec<(String, usize)>,
    /// Conv and dense weights and biases.
    pub base: usize,
    /// Extra parameters introduced by learnable activations.
    pub activation: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.base + self.activation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
    names: Vec<String>,
}

impl<T: Scalar> Network<T> {
    /// Builds a network with He-style weights: zero-mean Gaussian with
    /// `std = sqrt(2 / fan_in)`, zero biases. Only conv and dense layers draw
    /// from `rng`, so swapping activations leaves every weight unchanged.
    pub fn new(spec: &NetworkSpec, init: ActivationInit, rng: &mut Rng) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (ls, input) in spec.layers.iter().zip(&shapes) {
            let layer = match *ls {
                LayerSpec::Dense { inputs, outputs } => Layer::Dense {
                    weight: Tensor::rand_gauss(&[outputs, inputs], 0.0, (2.0 / inputs as f64).sqrt(), rng)?,
                    bias: Tensor::zeros(&[outputs]),
                },
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let fan_in = in_channels * kernel * kernel;
                    Layer::Conv2d {
                        weight: Tensor::rand_gauss(
                            &[out_channels, in_channels, kernel, kernel],
                            0.0,
                            (2.0 / fan_in as f64).sqrt(),
                            rng,
                        )?,
                        bias: Tensor::zeros(&[out_channels]),
                        stride,
                        padding,
                    }
                }
                LayerSpec::MaxPool { size } => Layer::MaxPool(size),
                LayerSpec::AvgPool { size } => Layer::AvgPool(size),
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Activation(kind) => Layer::Activation(Activation::build(kind, input[0], init)?),
                LayerSpec::Maxout { k } => Layer::Maxout(k),
                LayerSpec::Loss { .. } => continue,
            };
            layers.push(layer);
        }
        Ok(Self::assemble(spec.clone(), layers))
    }

    fn assemble(spec: NetworkSpec, layers: Vec<Layer<T>>) -> Self {
        let names = layer_names(&layers);
        Network { spec, layers, names }
    }

    /// Rebuilds from explicit parameter tensors in [`Network::params`] order.
    pub fn from_params(spec: &NetworkSpec, init: ActivationInit, params: Vec<Tensor<T>>) -> Result<Self> {
        let mut net = Network::new(spec, init, &mut Rng::seeded(0))?;
        let mut it = params.into_iter();
        for layer in &mut net.layers {
            for slot in layer.params_mut() {
                let t = it
                    .next()
                    .ok_or_else(|| Error::invalid("too few parameter tensors for network"))?;
                if t.shape() != slot.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "from_params",
                        expected: slot.shape().to_vec(),
                        actual: t.shape().to_vec(),
                    });
                }
                *slot = t;
            }
        }
        if it.next().is_some() {
            return Err(Error::invalid("too many parameter tensors for network"));
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Display names: `conv1`, `dense2`, ...; activation layers are named after
    /// the conv or dense layer feeding them, with an `.act` suffix.
    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Indices and parameters of every SReLU layer.
    pub fn srelu_layers(&self) -> Vec<(usize, &SReluParams<T>)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Activation(Activation::SRelu(p)) => Some((i, p)),
                _ => None,
            })
            .collect()
    }

    pub fn srelu_layers_mut(&mut self) -> Vec<(usize, &mut SReluParams<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Activation(Activation::SRelu(p)) => Some((i, p)),
                _ => None,
            })
            .collect()
    }

    pub fn set_srelu_frozen(&mut self, frozen: bool) {
        for (_, p) in self.srelu_layers_mut() {
            p.frozen = frozen;
        }
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let name = &self.names[i];
            match layer {
                Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                    groups.push(ParamGroup {
                        name: format!("{name}.weight"),
                        layer: i,
                        tensors: 0..1,
                        apply_weight_decay: true,
                        frozen: false,
                        activation: false,
                        count: weight.len(),
                    });
                    groups.push(ParamGroup {
                        name: format!("{name}.bias"),
                        layer: i,
                        tensors: 1..2,
                        apply_weight_decay: false,
                        frozen: false,
                        activation: false,
                        count: bias.len(),
                    });
                }
                Layer::Activation(a) => {
                    let params = a.params();
                    if params.is_empty() {
                        continue;
                    }
                    groups.push(ParamGroup {
                        name: name.clone(),
                        layer: i,
                        tensors: 0..params.len(),
                        apply_weight_decay: false,
                        frozen: a.frozen(),
                        activation: true,
                        count: params.iter().map(|t| t.len()).sum(),
                    });
                }
                _ => {}
            }
        }
        groups
    }

    pub fn param_count(&self) -> ParamCount {
        let groups = self.param_groups();
        let base = groups.iter().filter(|g| !g.activation).map(|g| g.count).sum();
        let activation = groups.iter().filter(|g| g.activation).map(|g| g.count).sum();
        ParamCount {
            groups: groups.into_iter().map(|g| (g.name, g.count)).collect(),
            base,
            activation,
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        let mut expected = vec![batch.shape().first().copied().unwrap_or(0)];
        expected.extend_from_slice(&self.spec.input);
        if batch.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                expected,
                actual: batch.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Runs every layer, keeping all intermediate activations.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<ForwardPass<T>> {
        self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut switches = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for layer in &self.layers {
            let x = activations.last().expect("nonempty");
            let (y, sw) = match layer {
                Layer::Dense { weight, bias } => (dense_forward(x, weight, bias)?, None),
                Layer::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                } => (conv2d_forward(x, weight, bias, *stride, *padding)?, None),
                Layer::MaxPool(size) => {
                    let (y, arg) = maxpool_forward(x, *size)?;
                    (y, Some(arg))
                }
                Layer::AvgPool(size) => (avgpool_forward(x, *size)?, None),
                Layer::Flatten => {
                    let n = x.shape()[0];
                    let f = x.len().checked_div(n).unwrap_or(0);
                    (x.clone().reshape(&[n, f])?, None)
                }
                Layer::Activation(a) => (a.forward(x)?, None),
                Layer::Maxout(k) => {
                    let pass = maxout_forward(x, *k)?;
                    (pass.output, Some(pass.argmax))
                }
            };
            activations.push(y);
            switches.push(sw);
        }
        let predictions = if self.spec.classes().is_some() {
            argmax_rows(activations.last().expect("nonempty"))
        } else {
            Vec::new()
        };
        Ok(ForwardPass {
            activations,
            switches,
            loss: None,
            probs: None,
            predictions,
            d_logits: None,
        })
    }

    /// Forward pass plus the softmax cross-entropy head.
    pub fn forward_with_loss(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<ForwardPass<T>> {
        if self.spec.classes().is_none() {
            return Err(Error::invalid("network has no loss layer"));
        }
        let mut pass = self.forward(batch)?;
        let head = softmax_xent(pass.output(), labels)?;
        pass.loss = Some(head.loss);
        pass.probs = Some(head.probs);
        pass.d_logits = Some(head.d_logits);
        Ok(pass)
    }

    /// Gradients of the loss computed by [`Network::forward_with_loss`].
    pub fn backward(&self, pass: &ForwardPass<T>) -> Result<Gradients<T>> {
        let d = pass
            .d_logits
            .as_ref()
            .ok_or_else(|| Error::invalid("backward needs a forward pass with loss"))?;
        self.backward_from(pass, d)
    }

    /// Backpropagates an arbitrary gradient of the network output.
    pub fn backward_from(&self, pass: &ForwardPass<T>, d_output: &Tensor<T>) -> Result<Gradients<T>> {
        if pass.activations.len() != self.layers.len() + 1 {
            return Err(Error::invalid("forward pass does not belong to this network"));
        }
        pass.output().ensure_shape(d_output, "backward")?;
        let mut per_layer = vec![Vec::new(); self.layers.len()];
        let mut grad = d_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &pass.activations[i];
            grad = match layer {
                Layer::Dense { weight, .. } => {
                    let (dx, dw, db) = dense_backward(x, weight, &grad)?;
                    per_layer[i] = vec![dw, db];
                    dx
                }
                Layer::Conv2d {
                    weight,
                    stride,
                    padding,
                    ..
                } => {
                    let (dx, dw, db) = conv2d_backward(x, weight, &grad, *stride, *padding)?;
                    per_layer[i] = vec![dw, db];
                    dx
                }
                Layer::MaxPool(_) => {
                    let arg = pass.switches[i]
                        .as_ref()
                        .ok_or_else(|| Error::invalid("missing pool switches"))?;
                    maxpool_backward(x.shape(), arg, &grad)?
                }
                Layer::AvgPool(size) => avgpool_backward(x.shape(), *size, &grad)?,
                Layer::Flatten => grad.reshape(x.shape())?,
                Layer::Activation(a) => {
                    let bundle = a.backward(x, &grad)?;
                    per_layer[i] = bundle.d_params;
                    bundle.d_input
                }
                Layer::Maxout(k) => {
                    let arg = pass.switches[i]
                        .as_ref()
                        .ok_or_else(|| Error::invalid("missing maxout switches"))?;
                    maxout_backward(&grad, arg, x.shape(), *k)?
                }
            };
        }
        Ok(Gradients {
            per_layer,
            d_input: grad,
        })
    }

    /// Per-sample predictions, `batch_size` samples at a time.
    pub fn predict(&self, images: &Tensor<T>, batch_size: usize) -> Result<Vec<usize>> {
        let n = images.shape().first().copied().unwrap_or(0);
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(batch_size.max(1)) {
            let idx: Vec<usize> = (start..(start + batch_size).min(n)).collect();
            let pass = self.forward(&images.select_rows(&idx)?)?;
            out.extend(pass.predictions);
        }
        Ok(out)
    }
}

fn layer_names<T>(layers: &[Layer<T>]) -> Vec<String> {
    let (mut convs, mut denses, mut pools) = (0, 0, 0);
    let mut feeding = String::from("input");
    let mut names = Vec::with_capacity(layers.len());
    for layer in layers {
        let name = match layer {
            Layer::Conv2d { .. } => {
                convs += 1;
                feeding = format!("conv{convs}");
                feeding.clone()
            }
            Layer::Dense { .. } => {
                denses += 1;
                feeding = format!("dense{denses}");
                feeding.clone()
            }
            Layer::MaxPool(_) | Layer::AvgPool(_) => {
                pools += 1;
                format!("pool{pools}")
            }
            Layer::Flatten => "flatten".to_string(),
            Layer::Maxout(_) => format!("{feeding}.maxout"),
            Layer::Activation(_) => format!("{feeding}.act"),
        };
        names.push(name);
    }
    names
}
