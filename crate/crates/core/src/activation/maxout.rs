use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output of [`maxout_forward`] plus the winning slot of every output element.
#[derive(Clone, Debug)]
pub struct MaxoutPass<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Max over groups of `k` consecutive channels: `out[n, c] = max_j z[n, c*k + j]`.
///
/// The affine pieces are produced by whatever layer precedes this one. Ties
/// resolve to the lowest slot.
pub fn maxout_forward<T: Scalar>(z: &Tensor<T>, k: usize) -> Result<MaxoutPass<T>> {
    let [n, kc, h, w] = z.dims4()?;
    if k == 0 || kc % k != 0 {
        return Err(Error::invalid(format!(
            "maxout: {kc} channels not divisible into groups of {k}"
        )));
    }
    let c = kc / k;
    let plane = h * w;
    let zs = z.data();
    let mut out = Vec::with_capacity(n * c * plane);
    let mut argmax = Vec::with_capacity(n * c * plane);
    for b in 0..n {
        for ch in 0..c {
            for s in 0..plane {
                let mut best = zs[((b * kc) + ch * k) * plane + s];
                let mut best_j = 0;
                for j in 1..k {
                    let v = zs[((b * kc) + ch * k + j) * plane + s];
                    if v > best {
                        best = v;
                        best_j = j;
                    }
                }
                out.push(best);
                argmax.push(best_j);
            }
        }
    }
    let mut shape = z.shape().to_vec();
    shape[1] = c;
    Ok(MaxoutPass {
        output: Tensor::from_vec(&shape, out)?,
        argmax,
    })
}

/// Routes each upstream element to its winning slot; other slots get zero.
pub fn maxout_backward<T: Scalar>(
    upstream: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
    k: usize,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = upstream.dims4()?;
    if argmax.len() != upstream.len() {
        return Err(Error::invalid("maxout_backward: argmax does not match upstream"));
    }
    let plane = h * w;
    let mut d = Tensor::zeros(input_shape);
    if d.len() != upstream.len() * k {
        return Err(Error::ShapeMismatch {
            op: "maxout_backward",
            expected: input_shape.to_vec(),
            actual: upstream.shape().to_vec(),
        });
    }
    let up = upstream.data();
    let ds = d.data_mut();
    for b in 0..n {
        for ch in 0..c {
            for s in 0..plane {
                let o = (b * c + ch) * plane + s;
                ds[(b * c * k + ch * k + argmax[o]) * plane + s] = up[o];
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_the_larger_slot() {
        let z = Tensor::<f64>::from_f64(&[1, 2, 1, 1], &[-1.0, 3.0]).unwrap();
        let pass = maxout_forward(&z, 2).unwrap();
        assert_eq!(pass.output.data(), &[3.0]);
        assert_eq!(pass.argmax, vec![1]);
    }

    #[test]
    fn ties_route_to_first_slot() {
        let z = Tensor::<f64>::from_f64(&[1, 2, 1, 1], &[7.0, 7.0]).unwrap();
        let pass = maxout_forward(&z, 2).unwrap();
        assert_eq!(pass.output.data(), &[7.0]);
        let g = maxout_backward(&Tensor::full(&[1, 1, 1, 1], 1.0), &pass.argmax, z.shape(), 2).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0]);
    }

    #[test]
    fn k_one_is_identity() {
        let z = Tensor::<f64>::from_f64(
            &[2, 3, 1, 2],
            &[1.0, -2.0, 3.0, 4.0, 5.0, -6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0],
        )
        .unwrap();
        assert_eq!(maxout_forward(&z, 1).unwrap().output, z);
    }

    #[test]
    fn indivisible_channels_rejected() {
        let z = Tensor::<f64>::zeros(&[1, 3, 1, 1]);
        assert!(maxout_forward(&z, 2).is_err());
    }

    #[test]
    fn groups_are_consecutive_channels() {
        // Channels (0,1) -> out 0, (2,3) -> out 1, over a 1x2 map.
        let z = Tensor::<f64>::from_f64(&[1, 4, 1, 2], &[1.0, 9.0, 5.0, 2.0, 0.0, 0.0, -1.0, 3.0]).unwrap();
        let pass = maxout_forward(&z, 2).unwrap();
        assert_eq!(pass.output.data(), &[5.0, 9.0, 0.0, 3.0]);
        let up = Tensor::<f64>::from_f64(&[1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = maxout_backward(&up, &pass.argmax, z.shape(), 2).unwrap();
        assert_eq!(g.data(), &[0.0, 2.0, 1.0, 0.0, 3.0, 0.0, 0.0, 4.0]);
    }
}
