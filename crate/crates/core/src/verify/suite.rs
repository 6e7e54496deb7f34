//! Randomised gradient checks for every activation and for a small
//! conv/SReLU/pool/dense network.

use super::reference::ScalarActivation;
use super::{fd_gradient, GradCheckReport, FD_STEP, GRAD_TOLERANCE, KINK_RADIUS};
use crate::activation::{channel_spans, Activation, ActivationKind, AplParams, PReluParams, SReluParams, SReluVariant};
use crate::error::{Error, Result};
use crate::network::{Layer, Network, NetworkSpec};
use crate::tensor::{Rng, Tensor};

/// Deliberate analytic-gradient corruption, for proving the checker can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Negate the gradient of every SReLU left slope.
    FlipSreluLeftSlope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Random tensors drawn per activation kind.
    pub samples: usize,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            samples: 1000,
            seed: 0x5eed,
            fault: Fault::None,
        }
    }
}

const SAMPLE_SHAPE: [usize; 4] = [2, 3, 2, 2];
const SLOPE_MARGIN: f64 = 0.05;

/// The activation kinds covered by [`activation_gradcheck`], with report labels.
pub fn checked_kinds() -> Vec<(&'static str, ActivationKind)> {
    vec![
        ("relu", ActivationKind::Relu),
        ("lrelu", ActivationKind::LRelu { slope: 0.2 }),
        ("prelu", ActivationKind::PRelu),
        ("apl1", ActivationKind::Apl { hinges: 1 }),
        ("apl2", ActivationKind::Apl { hinges: 2 }),
        ("srelu", ActivationKind::SRelu(SReluVariant::ChannelWise)),
        ("srelu-shared", ActivationKind::SRelu(SReluVariant::ChannelShared)),
    ]
}

/// A slope whose products with positive upstream values, and whose distance
/// from 1, stay away from zero, so relative errors remain meaningful.
fn generic_slope(rng: &mut Rng) -> f64 {
    loop {
        let v = rng.uniform(-1.5, 1.5);
        if v.abs() >= SLOPE_MARGIN && (1.0 - v).abs() >= SLOPE_MARGIN {
            return v;
        }
    }
}

/// Every slope an APL unit can take: `{0, 1} - sum of any subset of hinge slopes`.
fn apl_slopes(a: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << a.len()) {
        let s: f64 = a
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, v)| v)
            .sum();
        out.push(-s);
        out.push(1.0 - s);
    }
    out
}

fn random_activation(kind: ActivationKind, channels: usize, rng: &mut Rng) -> Result<Activation<f64>> {
    Ok(match kind {
        ActivationKind::Relu => Activation::Relu,
        ActivationKind::LRelu { .. } => Activation::LRelu(rng.uniform(SLOPE_MARGIN, 1.0 - SLOPE_MARGIN)),
        ActivationKind::PRelu => {
            let a: Vec<f64> = (0..channels).map(|_| generic_slope(rng)).collect();
            Activation::PRelu(PReluParams::from_values(&a))
        }
        ActivationKind::Apl { hinges } => {
            let mut a = vec![0.0; hinges * channels];
            let mut b = vec![0.0; hinges * channels];
            for c in 0..channels {
                let unit_a = loop {
                    let cand: Vec<f64> = (0..hinges).map(|_| generic_slope(rng)).collect();
                    let nonzero_sums = apl_slopes(&cand)
                        .into_iter()
                        .filter(|s| *s != 0.0)
                        .all(|s| s.abs() >= SLOPE_MARGIN);
                    if nonzero_sums {
                        break cand;
                    }
                };
                for s in 0..hinges {
                    a[s * channels + c] = unit_a[s];
                    b[s * channels + c] = rng.uniform(-2.0, 2.0);
                }
            }
            Activation::Apl(AplParams::from_values(hinges, channels, &a, &b)?)
        }
        ActivationKind::SRelu(variant) => {
            let n = match variant {
                SReluVariant::ChannelWise => channels,
                SReluVariant::ChannelShared => 1,
            };
            let t_r: Vec<f64> = (0..n).map(|_| rng.uniform(-0.5, 2.0)).collect();
            let t_l: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 0.5)).collect();
            let a_r: Vec<f64> = (0..n).map(|_| generic_slope(rng)).collect();
            let a_l: Vec<f64> = (0..n).map(|_| generic_slope(rng)).collect();
            Activation::SRelu(SReluParams::from_values(variant, &t_r, &a_r, &t_l, &a_l)?)
        }
    })
}

fn near_kink(unit: &ScalarActivation, x: f64) -> bool {
    unit.kinks().iter().any(|k| (x - k).abs() < KINK_RADIUS)
}

/// Input tensor whose every element is at least [`KINK_RADIUS`] from its unit's kinks.
fn input_off_kinks(act: &Activation<f64>, rng: &mut Rng) -> Result<Tensor<f64>> {
    let units: Vec<_> = (0..SAMPLE_SHAPE[1])
        .map(|c| ScalarActivation::from_activation(act, c))
        .collect();
    let mut x = Tensor::zeros(&SAMPLE_SHAPE);
    let dims = x.dims4()?;
    let data = x.data_mut();
    for (c, span) in channel_spans(dims) {
        for v in &mut data[span] {
            *v = loop {
                let cand = rng.uniform(-3.0, 3.0);
                if !near_kink(&units[c], cand) {
                    break cand;
                }
            };
        }
    }
    Ok(x)
}

/// Channels that parameter element `j` of tensor `p` influences.
fn influenced_channels(act: &Activation<f64>, j: usize, channels: usize) -> Vec<bool> {
    match act {
        Activation::SRelu(p) if p.variant == SReluVariant::ChannelShared => vec![true; channels],
        _ => (0..channels).map(|c| c == j % channels).collect(),
    }
}

/// `sum upstream * h(x)` over the selected channels, through the scalar reference.
fn partial_loss(act: &Activation<f64>, x: &Tensor<f64>, up: &Tensor<f64>, keep: &[bool]) -> Result<f64> {
    let dims = x.dims4()?;
    let units: Vec<_> = (0..dims[1])
        .map(|c| ScalarActivation::from_activation(act, c))
        .collect();
    let mut total = 0.0;
    for (c, span) in channel_spans(dims) {
        if keep[c] {
            for i in span {
                total += up.data()[i] * units[c].eval(x.data()[i]);
            }
        }
    }
    Ok(total)
}

/// Analytic gradients of every activation kind against central differences of
/// the scalar reference, `options.samples` random tensors per kind.
///
/// Each derivative is differenced on the part of the loss that depends on the
/// perturbed coordinate, which is exact algebra and keeps rounding noise far
/// below the tolerance.
pub fn activation_gradcheck(options: &SuiteOptions) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(GRAD_TOLERANCE);
    let root = Rng::seeded(options.seed);
    for (k, (label, kind)) in checked_kinds().into_iter().enumerate() {
        let mut rng = root.fork(k as u64 + 1);
        for _ in 0..options.samples {
            let act = random_activation(kind, SAMPLE_SHAPE[1], &mut rng)?;
            let x = input_off_kinks(&act, &mut rng)?;
            let up = Tensor::rand_uniform(&SAMPLE_SHAPE, 0.5, 1.5, &mut rng)?;
            let mut bundle = act.backward(&x, &up)?;
            if options.fault == Fault::FlipSreluLeftSlope && kind.is_srelu() {
                bundle.d_params[3] = bundle.d_params[3].map_unary(|v| -v)?;
            }

            let dims = x.dims4()?;
            let units: Vec<_> = (0..dims[1])
                .map(|c| ScalarActivation::from_activation(&act, c))
                .collect();
            let name = format!("{label}.input");
            for (c, span) in channel_spans(dims) {
                for i in span {
                    let u = up.data()[i];
                    let num = fd_gradient(|o| u * units[c].eval(o[0]), &[x.data()[i]], FD_STEP)?[0];
                    report.record(&name, i, bundle.d_input.data()[i], num);
                }
            }

            for (p, pname) in act.param_names().iter().enumerate() {
                let name = format!("{label}.{pname}");
                let values = act.params()[p].data().to_vec();
                for (j, &value) in values.iter().enumerate() {
                    let keep = influenced_channels(&act, j, dims[1]);
                    let mut probe = act.clone();
                    let num = fd_gradient(
                        |o| {
                            probe.params_mut()[p].data_mut()[j] = o[0];
                            partial_loss(&probe, &x, &up, &keep).unwrap_or(f64::NAN)
                        },
                        &[value],
                        FD_STEP,
                    )?[0];
                    report.record(&name, j, bundle.d_params[p].data()[j], num);
                }
            }
        }
    }
    Ok(report)
}

/// The end-to-end network: 1x8x8 input, 3x3 conv to 4 channels, SReLU,
/// 2x2 max pool, dense to 4 classes.
pub const GRADCHECK_NETWORK: &str = "\
input 1 8 8
conv2d 1 4 3 stride=1 pad=0
activation srelu
maxpool 2
flatten
dense 36 4
loss softmax-xent 4
";

const GRADCHECK_BATCH: usize = 2;
const POOL_MARGIN: f64 = 1e-3;

/// True when every activation input sits off its kinks and every max-pool
/// window has a unique winner by at least [`POOL_MARGIN`].
fn well_separated(net: &Network<f64>, batch: &Tensor<f64>) -> Result<bool> {
    let pass = net.forward(batch)?;
    for (i, layer) in net.layers().iter().enumerate() {
        let x = pass.layer_input(i);
        match layer {
            Layer::Activation(act) => {
                let dims = x.dims4()?;
                let units: Vec<_> = (0..dims[1])
                    .map(|c| ScalarActivation::from_activation(act, c))
                    .collect();
                for (c, span) in channel_spans(dims) {
                    if x.data()[span].iter().any(|&v| near_kink(&units[c], v)) {
                        return Ok(false);
                    }
                }
            }
            Layer::MaxPool(size) => {
                let [n, c, h, w] = x.dims4()?;
                for plane in 0..n * c {
                    for oy in 0..h / size {
                        for ox in 0..w / size {
                            let mut vals: Vec<f64> = (0..size * size)
                                .map(|k| x.data()[plane * h * w + (oy * size + k / size) * w + ox * size + k % size])
                                .collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            if vals.len() > 1 && vals[0] - vals[1] < POOL_MARGIN {
                                return Ok(false);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(true)
}

fn param_label(net: &Network<f64>, layer: usize, tensor: usize) -> String {
    let base = &net.layer_names()[layer];
    match &net.layers()[layer] {
        Layer::Activation(a) => format!("{base}.{}", a.param_names()[tensor]),
        _ => format!("{base}.{}", ["weight", "bias"][tensor]),
    }
}

/// Backprop through [`GRADCHECK_NETWORK`] against central differences of the
/// full batch loss, for every parameter and input element.
pub fn network_gradcheck(options: &SuiteOptions) -> Result<GradCheckReport> {
    let spec: NetworkSpec = GRADCHECK_NETWORK.parse()?;
    let mut rng = Rng::seeded(options.seed).fork(0x6e6574);
    let mut net = Network::<f64>::new(&spec, Default::default(), &mut rng)?;
    for (_, p) in net.srelu_layers_mut() {
        for c in 0..p.arity() {
            p.t_r.data_mut()[c] = rng.uniform(0.1, 1.0);
            p.t_l.data_mut()[c] = rng.uniform(-1.0, -0.1);
            p.a_r.data_mut()[c] = generic_slope(&mut rng);
            p.a_l.data_mut()[c] = generic_slope(&mut rng);
        }
    }

    let mut input_shape = vec![GRADCHECK_BATCH];
    input_shape.extend_from_slice(&spec.input);
    let classes = spec.classes().unwrap_or(1);
    let mut attempt = 0;
    let batch = loop {
        let cand = Tensor::rand_uniform(&input_shape, -1.0, 1.0, &mut rng)?;
        if well_separated(&net, &cand)? {
            break cand;
        }
        attempt += 1;
        if attempt > 10_000 {
            return Err(Error::invalid("could not draw a batch away from every kink"));
        }
    };
    let labels: Vec<usize> = (0..GRADCHECK_BATCH).map(|_| rng.below(classes)).collect();

    let pass = net.forward_with_loss(&batch, &labels)?;
    let mut grads = net.backward(&pass)?;
    if options.fault == Fault::FlipSreluLeftSlope {
        for (i, _) in net.srelu_layers() {
            grads.per_layer[i][3] = grads.per_layer[i][3].map_unary(|v| -v)?;
        }
    }

    let loss_at = |net: &Network<f64>, batch: &Tensor<f64>| -> f64 {
        net.forward_with_loss(batch, &labels)
            .ok()
            .and_then(|p| p.loss)
            .unwrap_or(f64::NAN)
    };

    let mut report = GradCheckReport::new(GRAD_TOLERANCE);
    for layer in 0..net.layers().len() {
        for tensor in 0..net.layers()[layer].params().len() {
            let name = param_label(&net, layer, tensor);
            let values = net.layers()[layer].params()[tensor].data().to_vec();
            let mut probe = net.clone();
            let numeric = fd_gradient(
                |o| {
                    probe.layers_mut()[layer].params_mut()[tensor]
                        .data_mut()
                        .copy_from_slice(o);
                    loss_at(&probe, &batch)
                },
                &values,
                FD_STEP,
            )?;
            for (j, num) in numeric.into_iter().enumerate() {
                report.record(&name, j, grads.per_layer[layer][tensor].data()[j], num);
            }
        }
    }
    let numeric = fd_gradient(
        |o| match Tensor::from_vec(batch.shape(), o.to_vec()) {
            Ok(b) => loss_at(&net, &b),
            Err(_) => f64::NAN,
        },
        batch.data(),
        FD_STEP,
    )?;
    for (j, num) in numeric.into_iter().enumerate() {
        report.record("input", j, grads.d_input.data()[j], num);
    }
    Ok(report)
}
