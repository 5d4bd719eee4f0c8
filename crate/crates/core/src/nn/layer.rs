use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// `y = W x + b`, `W` stored as `[output, input]`.
    Dense { input: usize, output: usize },
    Relu,
    /// NCHW convolution with symmetric zero padding.  Even kernels are
    /// accepted; the window is anchored at its top-left element.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Collapses all non-batch axes.
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub frozen: bool,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            frozen: false,
        }
    }

    pub fn dense(input: usize, output: usize) -> Self {
        Self::new(LayerKind::Dense { input, output })
    }

    pub fn relu() -> Self {
        Self::new(LayerKind::Relu)
    }

    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self::new(LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn flatten() -> Self {
        Self::new(LayerKind::Flatten)
    }

    pub fn frozen(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. }
        )
    }

    /// Shapes of the parameter tensors (weights, bias); empty for
    /// parameter-less layers.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self.kind {
            LayerKind::Dense { input, output } => vec![vec![output, input], vec![output]],
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            LayerKind::Relu | LayerKind::Flatten => Vec::new(),
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense { input, .. } => input,
            LayerKind::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerKind::Relu | LayerKind::Flatten => 0,
        }
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        match self.kind {
            LayerKind::Dense { input, output } if input == 0 || output == 0 => Err(Error::config(
                format!("layer {index}: dense dimensions must be positive"),
            )),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 => {
                Err(Error::config(format!(
                    "layer {index}: conv2d channels, kernel and stride must be positive"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Per-sample output shape (no batch axis) for a per-sample input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        match self.kind {
            LayerKind::Dense {
                input: n_in,
                output,
            } => {
                if input != [n_in] {
                    return Err(Error::shape(
                        index,
                        format!("dense expects [{n_in}], got {input:?}"),
                    ));
                }
                Ok(vec![output])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(Error::shape(
                        index,
                        format!("conv2d expects [{in_channels}, H, W], got {input:?}"),
                    ));
                }
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < kernel || w < kernel {
                    return Err(Error::shape(
                        index,
                        format!("conv2d kernel {kernel} larger than padded input {h}x{w}"),
                    ));
                }
                Ok(vec![
                    out_channels,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_shape() {
        let c = LayerSpec::conv2d(1, 2, 3, 1, 0);
        assert_eq!(c.output_shape(0, &[1, 4, 4]).unwrap(), vec![2, 2, 2]);
        let s = LayerSpec::conv2d(2, 2, 3, 2, 1);
        assert_eq!(s.output_shape(0, &[2, 8, 8]).unwrap(), vec![2, 4, 4]);
        assert!(c.output_shape(3, &[2, 4, 4]).is_err());
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(LayerSpec::dense(0, 3).validate(0).is_err());
        assert!(LayerSpec::conv2d(1, 1, 3, 0, 0).validate(0).is_err());
        assert!(LayerSpec::relu().validate(0).is_ok());
    }
}
