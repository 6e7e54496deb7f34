use std::path::Path;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Scalar, Tensor};

/// Channel-averaged SReLU parameters of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SReluLayerMeans {
    /// Name of the conv or dense layer feeding the activation.
    pub layer: String,
    pub t_r: f64,
    pub t_l: f64,
    pub a_r: f64,
    pub a_l: f64,
}

fn mean<T: Scalar>(t: &Tensor<T>) -> f64 {
    t.data().iter().map(|v| v.as_f64()).sum::<f64>() / t.len() as f64
}

fn feeding_name(name: &str) -> &str {
    name.strip_suffix(".act").unwrap_or(name)
}

/// One row per SReLU layer, averaged over its channels.
pub fn inspect_params<T: Scalar>(net: &Network<T>) -> Result<Vec<SReluLayerMeans>> {
    let rows: Vec<_> = net
        .srelu_layers()
        .into_iter()
        .map(|(i, p)| SReluLayerMeans {
            layer: feeding_name(&net.layer_names()[i]).to_string(),
            t_r: mean(&p.t_r),
            t_l: mean(&p.t_l),
            a_r: mean(&p.a_r),
            a_l: mean(&p.a_l),
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("network has no SReLU layers"));
    }
    Ok(rows)
}

/// CSV `layer,t_r,t_l,a_r,a_l`.
pub fn write_params_csv(rows: &[SReluLayerMeans], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["layer", "t_r", "t_l", "a_r", "a_l"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.layer.clone(),
            r.t_r.to_string(),
            r.t_l.to_string(),
            r.a_r.to_string(),
            r.a_l.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean absolute input seen by each SReLU layer over `sample`.
pub fn input_magnitude_profile<T: Scalar>(
    net: &Network<T>,
    sample: &Tensor<T>,
    batch_size: usize,
) -> Result<Vec<(String, f64)>> {
    let n = sample.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Err(Error::invalid("magnitude profile needs a nonempty sample"));
    }
    let layers: Vec<usize> = net.srelu_layers().into_iter().map(|(i, _)| i).collect();
    let mut sums = vec![0.0f64; layers.len()];
    let mut counts = vec![0usize; layers.len()];
    for start in (0..n).step_by(batch_size.max(1)) {
        let idx: Vec<usize> = (start..(start + batch_size.max(1)).min(n)).collect();
        let pass = net.forward(&sample.select_rows(&idx)?)?;
        for (slot, &li) in layers.iter().enumerate() {
            let x = pass.layer_input(li);
            sums[slot] += x.data().iter().map(|v| v.as_f64().abs()).sum::<f64>();
            counts[slot] += x.len();
        }
    }
    Ok(layers
        .iter()
        .enumerate()
        .map(|(slot, &li)| {
            let name = feeding_name(&net.layer_names()[li]).to_string();
            (name, sums[slot] / counts[slot].max(1) as f64)
        })
        .collect())
}

/// CSV `layer,mean_abs_input`.
pub fn write_profile_csv(rows: &[(String, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["layer", "mean_abs_input"]).map_err(err)?;
    for (layer, v) in rows {
        w.write_record([layer.clone(), v.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
