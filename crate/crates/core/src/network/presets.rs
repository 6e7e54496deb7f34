use super::NetworkSpec;
use crate::activation::ActivationKind;
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 3] = ["mlp-small", "cnn-small", "cnn-cifar"];

fn template(name: &str) -> Option<&'static str> {
    Some(match name {
        // 784 -> 128 -> 10 on MNIST digits
        "mlp-small" => {
            "input 1 28 28
flatten
dense 784 128
activation {act}
dense 128 10
loss softmax-xent 10
"
        }
        // 28 -> 24 -> 12 -> 8 -> 4 spatially, 16 * 4 * 4 = 256 features
        "cnn-small" => {
            "input 1 28 28
conv2d 1 8 5 stride=1 pad=0
activation {act}
maxpool 2
conv2d 8 16 5 stride=1 pad=0
activation {act}
maxpool 2
flatten
dense 256 10
loss softmax-xent 10
"
        }
        // 32 -> 16 -> 8 -> 4 spatially, 64 * 4 * 4 = 1024 features
        "cnn-cifar" => {
            "input 3 32 32
conv2d 3 32 5 stride=1 pad=2
activation {act}
maxpool 2
conv2d 32 32 5 stride=1 pad=2
activation {act}
maxpool 2
conv2d 32 64 5 stride=1 pad=2
activation {act}
maxpool 2
flatten
dense 1024 10
loss softmax-xent 10
"
        }
        _ => return None,
    })
}

/// A named architecture with every activation layer set to `kind`.
pub fn preset(name: &str, kind: ActivationKind) -> Result<NetworkSpec> {
    let text = template(name)
        .ok_or_else(|| Error::invalid(format!("unknown preset `{name}` (known: {})", PRESET_NAMES.join(", "))))?;
    text.replace("{act}", &kind.to_string()).parse()
}
