//! Per-layer forward and backward kernels.  Loops are written out directly;
//! iteration order is fixed so results are reproducible bit for bit.

use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerSpec};
use crate::tensor::Tensor;

pub(crate) fn check_input(spec: &LayerSpec, index: usize, input: &Tensor) -> Result<Vec<usize>> {
    if input.rank() < 2 {
        return Err(Error::shape(
            index,
            format!("input {:?} has no batch axis", input.shape()),
        ));
    }
    spec.output_shape(index, &input.shape()[1..])
}

pub(crate) fn forward_layer(
    spec: &LayerSpec,
    index: usize,
    params: &[Tensor],
    input: &Tensor,
) -> Result<Tensor> {
    let out_sample = check_input(spec, index, input)?;
    let batch = input.batch();
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(&out_sample);
    let x = input.data();
    match spec.kind {
        LayerKind::Dense { input: n_in, output } => {
            let (w, b) = (params[0].data(), params[1].data());
            let mut y = vec![0.0; batch * output];
            for s in 0..batch {
                let xs = &x[s * n_in..(s + 1) * n_in];
                for o in 0..output {
                    let wo = &w[o * n_in..(o + 1) * n_in];
                    let mut acc = b[o];
                    for (wi, xi) in wo.iter().zip(xs) {
                        acc += wi * xi;
                    }
                    y[s * output + o] = acc;
                }
            }
            Tensor::new(out_shape, y)
        }
        LayerKind::Relu => Tensor::new(out_shape, x.iter().map(|&v| v.max(0.0)).collect()),
        LayerKind::Flatten => Tensor::new(out_shape, x.to_vec()),
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let geo = ConvGeometry::new(input.shape(), &out_sample, stride, padding);
            let (w, b) = (params[0].data(), params[1].data());
            let mut y = vec![0.0; batch * out_channels * geo.oh * geo.ow];
            for s in 0..batch {
                for oc in 0..out_channels {
                    for oy in 0..geo.oh {
                        for ox in 0..geo.ow {
                            let mut acc = b[oc];
                            for ic in 0..in_channels {
                                for ky in 0..kernel {
                                    let Some(iy) = geo.in_row(oy, ky) else { continue };
                                    for kx in 0..kernel {
                                        let Some(ix) = geo.in_col(ox, kx) else { continue };
                                        acc += w[((oc * in_channels + ic) * kernel + ky) * kernel + kx]
                                            * x[geo.in_index(s, ic, iy, ix)];
                                    }
                                }
                            }
                            y[geo.out_index(s, oc, oy, ox)] = acc;
                        }
                    }
                }
            }
            Tensor::new(out_shape, y)
        }
    }
}

/// Returns `(param_grads, grad_in)`.  Parameter gradients are skipped (empty)
/// when `want_param_grads` is false.
pub(crate) fn backward_layer(
    spec: &LayerSpec,
    params: &[Tensor],
    input: &Tensor,
    grad_out: &Tensor,
    want_param_grads: bool,
) -> Result<(Vec<Tensor>, Tensor)> {
    let batch = input.batch();
    let x = input.data();
    let g = grad_out.data();
    match spec.kind {
        LayerKind::Dense { input: n_in, output } => {
            let w = params[0].data();
            let mut dx = vec![0.0; batch * n_in];
            for s in 0..batch {
                let dxs = &mut dx[s * n_in..(s + 1) * n_in];
                for o in 0..output {
                    let go = g[s * output + o];
                    let wo = &w[o * n_in..(o + 1) * n_in];
                    for (d, wi) in dxs.iter_mut().zip(wo) {
                        *d += go * wi;
                    }
                }
            }
            let grads = if want_param_grads {
                let mut dw = vec![0.0; output * n_in];
                let mut db = vec![0.0; output];
                for s in 0..batch {
                    let xs = &x[s * n_in..(s + 1) * n_in];
                    for o in 0..output {
                        let go = g[s * output + o];
                        db[o] += go;
                        for (d, xi) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(xs) {
                            *d += go * xi;
                        }
                    }
                }
                vec![
                    Tensor::new(vec![output, n_in], dw)?,
                    Tensor::new(vec![output], db)?,
                ]
            } else {
                Vec::new()
            };
            Ok((grads, Tensor::new(input.shape().to_vec(), dx)?))
        }
        LayerKind::Relu => {
            let dx = x
                .iter()
                .zip(g)
                .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                .collect();
            Ok((Vec::new(), Tensor::new(input.shape().to_vec(), dx)?))
        }
        LayerKind::Flatten => Ok((Vec::new(), Tensor::new(input.shape().to_vec(), g.to_vec())?)),
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let geo = ConvGeometry::new(input.shape(), &grad_out.shape()[1..], stride, padding);
            let w = params[0].data();
            let mut dx = vec![0.0; x.len()];
            let mut dw = vec![0.0; if want_param_grads { w.len() } else { 0 }];
            let mut db = vec![0.0; if want_param_grads { out_channels } else { 0 }];
            for s in 0..batch {
                for oc in 0..out_channels {
                    for oy in 0..geo.oh {
                        for ox in 0..geo.ow {
                            let go = g[geo.out_index(s, oc, oy, ox)];
                            if want_param_grads {
                                db[oc] += go;
                            }
                            for ic in 0..in_channels {
                                for ky in 0..kernel {
                                    let Some(iy) = geo.in_row(oy, ky) else { continue };
                                    for kx in 0..kernel {
                                        let Some(ix) = geo.in_col(ox, kx) else { continue };
                                        let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                                        let xi = geo.in_index(s, ic, iy, ix);
                                        dx[xi] += go * w[wi];
                                        if want_param_grads {
                                            dw[wi] += go * x[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let grads = if want_param_grads {
                vec![
                    Tensor::new(params[0].shape().to_vec(), dw)?,
                    Tensor::new(vec![out_channels], db)?,
                ]
            } else {
                Vec::new()
            };
            Ok((grads, Tensor::new(input.shape().to_vec(), dx)?))
        }
    }
}

struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn new(in_shape: &[usize], out_sample: &[usize], stride: usize, padding: usize) -> Self {
        ConvGeometry {
            c: in_shape[1],
            h: in_shape[2],
            w: in_shape[3],
            oc: out_sample[0],
            oh: out_sample[1],
            ow: out_sample[2],
            stride,
            padding,
        }
    }

    fn in_row(&self, oy: usize, ky: usize) -> Option<usize> {
        (oy * self.stride + ky)
            .checked_sub(self.padding)
            .filter(|&r| r < self.h)
    }

    fn in_col(&self, ox: usize, kx: usize) -> Option<usize> {
        (ox * self.stride + kx)
            .checked_sub(self.padding)
            .filter(|&c| c < self.w)
    }

    fn in_index(&self, s: usize, c: usize, y: usize, x: usize) -> usize {
        ((s * self.c + c) * self.h + y) * self.w + x
    }

    fn out_index(&self, s: usize, c: usize, y: usize, x: usize) -> usize {
        ((s * self.oc + c) * self.oh + y) * self.ow + x
    }
}
