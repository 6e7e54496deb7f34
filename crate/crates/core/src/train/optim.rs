use crate::error::{Error, Result};
use crate::network::{Gradients, Network, ParamGroup};
use crate::tensor::{Scalar, Tensor};

/// Momentum SGD hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    /// L2 coefficient for conv and dense weights only.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// One momentum update, in place:
/// `delta = mu * delta + lr * (grad + decay * param)`, then `param -= delta`.
/// With `decay == 0` the decay term is skipped entirely rather than added as zero.
pub fn momentum_step<T: Scalar>(
    param: &mut Tensor<T>,
    velocity: &mut Tensor<T>,
    grad: &Tensor<T>,
    lr: T,
    momentum: T,
    decay: T,
) -> Result<()> {
    param.ensure_shape(grad, "momentum_step")?;
    param.ensure_shape(velocity, "momentum_step")?;
    let g = grad.data();
    let v = velocity.data_mut();
    let o = param.data_mut();
    for i in 0..o.len() {
        let step = if decay == T::zero() { g[i] } else { g[i] + decay * o[i] };
        v[i] = momentum * v[i] + lr * step;
        o[i] = o[i] - v[i];
    }
    Ok(())
}

/// Velocities for every parameter tensor plus a per-group update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    /// Mirrors `Network::layers()[i].params()`.
    pub velocity: Vec<Vec<Tensor<T>>>,
    groups: Vec<ParamGroup>,
    /// Updates applied to each group, same order as `groups()`.
    pub updates: Vec<u64>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &Network<T>, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        let velocity = net
            .layers()
            .iter()
            .map(|l| l.params().iter().map(|t| Tensor::zeros(t.shape())).collect())
            .collect();
        let groups = net.param_groups();
        Ok(OptimizerState {
            config,
            velocity,
            updates: vec![0; groups.len()],
            groups,
        })
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    /// Total updates applied to groups whose name satisfies `pred`.
    pub fn updates_where(&self, pred: impl Fn(&ParamGroup) -> bool) -> u64 {
        self.groups
            .iter()
            .zip(&self.updates)
            .filter(|(g, _)| pred(g))
            .map(|(_, n)| n)
            .sum()
    }

    /// Applies one step at learning rate `lr` to every group that is not frozen.
    /// Frozen groups keep both parameters and velocities bitwise.
    pub fn apply(&mut self, net: &mut Network<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        let frozen: Vec<bool> = net.param_groups().iter().map(|g| g.frozen).collect();
        if frozen.len() != self.groups.len() {
            return Err(Error::invalid("optimizer state does not match the network"));
        }
        let (lr, mu) = (T::cast(lr), T::cast(self.config.momentum));
        for (gi, group) in self.groups.iter().enumerate() {
            if frozen[gi] {
                continue;
            }
            let decay = if group.apply_weight_decay {
                T::cast(self.config.weight_decay)
            } else {
                T::zero()
            };
            let layer = group.layer;
            let mut params = net.layers_mut()[layer].params_mut();
            for ti in group.tensors.clone() {
                let grad = grads
                    .per_layer
                    .get(layer)
                    .and_then(|g| g.get(ti))
                    .ok_or_else(|| Error::invalid(format!("no gradient for {}", group.name)))?;
                momentum_step(&mut *params[ti], &mut self.velocity[layer][ti], grad, lr, mu, decay)?;
            }
            self.updates[gi] += 1;
        }
        Ok(())
    }
}
