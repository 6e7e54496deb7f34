//! One-dimensional regression probe: how well can `w * act(v * x + c) + d`
//! fit a target when every activation gets the same learnable affine maps?

use super::optim::{OptimizerConfig, OptimizerState};
use crate::activation::{ActivationInit, ActivationKind};
use crate::data::{gen_synthetic, SyntheticSet, SyntheticSpec, SyntheticTarget};
use crate::error::{Error, Result};
use crate::network::{Layer, Network, NetworkSpec};
use crate::tensor::{Rng, Tensor};

/// Template; `{act}` is replaced by the activation under test.
pub const CAPACITY_NETWORK: &str = "input 1\ndense 1 1\nactivation {act}\ndense 1 1\n";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapacityOptions {
    pub target: SyntheticTarget,
    pub kind: ActivationKind,
    pub train_samples: usize,
    pub test_samples: usize,
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl CapacityOptions {
    pub fn new(target: SyntheticTarget, kind: ActivationKind) -> Self {
        CapacityOptions {
            target,
            kind,
            train_samples: 256,
            test_samples: 1000,
            steps: 20_000,
            lr: 0.05,
            momentum: 0.9,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CapacityResult {
    pub train_mse: f64,
    pub test_mse: f64,
    pub network: Network<f64>,
    pub train: SyntheticSet,
    pub test: SyntheticSet,
}

fn mse(net: &Network<f64>, set: &SyntheticSet) -> Result<f64> {
    let pass = net.forward(&set.x)?;
    let n = set.len() as f64;
    Ok(pass
        .output()
        .data()
        .iter()
        .zip(set.y.data())
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n)
}

/// Full-batch momentum gradient descent on mean squared error, 64-bit.
/// The train and test sets are drawn from seeds `seed` and `seed + 1`.
pub fn capacity_probe(opts: &CapacityOptions) -> Result<CapacityResult> {
    if opts.train_samples == 0 || opts.test_samples == 0 {
        return Err(Error::invalid("capacity probe needs samples"));
    }
    let spec: NetworkSpec = CAPACITY_NETWORK.replace("{act}", &opts.kind.to_string()).parse()?;
    let mut net = Network::<f64>::new(&spec, ActivationInit::default(), &mut Rng::seeded(opts.seed))?;
    // v = 1, c = 0, w = 1, d = 0: the probe starts from the bare activation.
    for layer in net.layers_mut() {
        if let Layer::Dense { weight, bias } = layer {
            weight.data_mut().fill(1.0);
            bias.data_mut().fill(0.0);
        }
    }
    let train = gen_synthetic(&SyntheticSpec::new(opts.target, opts.train_samples, opts.seed))?;
    let test = gen_synthetic(&SyntheticSpec::new(
        opts.target,
        opts.test_samples,
        opts.seed.wrapping_add(1),
    ))?;

    let mut opt = OptimizerState::new(
        &net,
        OptimizerConfig {
            lr: opts.lr,
            momentum: opts.momentum,
            weight_decay: 0.0,
        },
    )?;
    let n = train.len() as f64;
    for _ in 0..opts.steps {
        let pass = net.forward(&train.x)?;
        let d: Vec<f64> = pass
            .output()
            .data()
            .iter()
            .zip(train.y.data())
            .map(|(p, y)| 2.0 * (p - y) / n)
            .collect();
        let grads = net.backward_from(&pass, &Tensor::from_vec(&[train.len(), 1], d)?)?;
        opt.apply(&mut net, &grads, opts.lr)?;
    }
    Ok(CapacityResult {
        train_mse: mse(&net, &train)?,
        test_mse: mse(&net, &test)?,
        network: net,
        train,
        test,
    })
}
