use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-example activation shape, stored height-width-channel (NHWC) so that a
/// convolution patch row is a contiguous slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape3 {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) 2-D convolution, stride 1.
    Conv2d { out_channels: usize, kernel: [usize; 2] },
    Relu,
    Dropout { rate: f64 },
    Flatten,
    Linear { out_features: usize },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
    }

    fn output_shape(&self, input: Shape3) -> Result<Shape3> {
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                kernel: [kh, kw],
            } => {
                if out_channels == 0 || kh == 0 || kw == 0 || kh > input.h || kw > input.w {
                    return Err(Error::ShapeMismatch(format!(
                        "conv kernel ({kh}, {kw}) x {out_channels} does not fit input {}x{}",
                        input.h, input.w
                    )));
                }
                Ok(Shape3::new(input.h - kh + 1, input.w - kw + 1, out_channels))
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidParameter(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input)
            }
            LayerSpec::Flatten => Ok(Shape3::new(1, 1, input.len())),
            LayerSpec::Linear { out_features } => {
                if out_features == 0 {
                    return Err(Error::ShapeMismatch("linear layer with zero outputs".into()));
                }
                Ok(Shape3::new(1, 1, out_features))
            }
        }
    }

    /// (weight shape, bias length) for parametric layers.
    pub(crate) fn param_shape(&self, input: Shape3) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                kernel: [kh, kw],
            } => Some((vec![out_channels, kh, kw, input.c], out_channels)),
            LayerSpec::Linear { out_features } => Some((vec![out_features, input.len()], out_features)),
            _ => None,
        }
    }
}

/// A layer sequence applied to a fixed input shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input: Shape3,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// The reference architecture: two convolutions, dropout, two linears.
    pub fn table2(num_classes: usize) -> Self {
        Self::compact(1500, 96, 65, num_classes, 128)
    }

    /// Same layer sequence with configurable widths.
    pub fn compact(conv1: usize, conv2: usize, hidden: usize, num_classes: usize, frame_len: usize) -> Self {
        Self {
            input: Shape3::new(2, frame_len, 1),
            layers: vec![
                LayerSpec::Conv2d {
                    out_channels: conv1,
                    kernel: [1, 7],
                },
                LayerSpec::Relu,
                LayerSpec::Conv2d {
                    out_channels: conv2,
                    kernel: [2, 7],
                },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: hidden },
                LayerSpec::Linear {
                    out_features: num_classes,
                },
            ],
        }
    }

    /// Activation shapes: entry `i` is the input of layer `i`, the last entry
    /// is the network output.
    pub fn shapes(&self) -> Result<Vec<Shape3>> {
        if self.input.is_empty() {
            return Err(Error::ShapeMismatch("empty input shape".into()));
        }
        let mut shapes = vec![self.input];
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes()?;
        if !matches!(self.layers.last(), Some(LayerSpec::Linear { .. })) {
            return Err(Error::ShapeMismatch("network must end in a linear layer".into()));
        }
        debug_assert_eq!(shapes.len(), self.layers.len() + 1);
        Ok(())
    }

    pub fn num_classes(&self) -> Result<usize> {
        match self.layers.last() {
            Some(LayerSpec::Linear { out_features }) => Ok(*out_features),
            _ => Err(Error::ShapeMismatch("network must end in a linear layer".into())),
        }
    }

    pub fn layer_param_count(&self, i: usize) -> Result<usize> {
        let shapes = self.shapes()?;
        let layer = self
            .layers
            .get(i)
            .ok_or_else(|| Error::InvalidParameter(format!("no layer {i}")))?;
        Ok(layer
            .param_shape(shapes[i])
            .map_or(0, |(w, b)| w.iter().product::<usize>() + b))
    }

    pub fn param_count(&self) -> Result<usize> {
        (0..self.layers.len()).map(|i| self.layer_param_count(i)).sum()
    }

    /// Index of the final linear layer (the classification head).
    pub fn head_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Linear { .. }))
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table2_shapes_chain() {
        let spec = ModelSpec::table2(23);
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[1], Shape3::new(2, 122, 1500));
        assert_eq!(shapes[3], Shape3::new(1, 116, 96));
        assert_eq!(shapes[6], Shape3::new(1, 1, 96 * 116));
        assert_eq!(shapes[7], Shape3::new(1, 1, 65));
        assert_eq!(shapes[8], Shape3::new(1, 1, 23));
    }

    #[test]
    fn table2_head_parameter_count() {
        let spec = ModelSpec::table2(23);
        let head = spec.head_index().unwrap();
        assert_eq!(spec.layer_param_count(head).unwrap(), 1518);
    }

    #[test]
    fn table2_total_under_valid_convolutions() {
        // 12000 + 2016096 + 723905 + 1518; the layer list is normative, not
        // the published total.
        assert_eq!(ModelSpec::table2(23).param_count().unwrap(), 2_753_519);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let mut spec = ModelSpec::compact(4, 4, 8, 3, 128);
        spec.layers[2] = LayerSpec::Conv2d {
            out_channels: 4,
            kernel: [3, 7],
        };
        assert!(spec.shapes().is_err());
    }

    #[test]
    fn must_end_in_linear() {
        let mut spec = ModelSpec::compact(4, 4, 8, 3, 16);
        spec.layers.push(LayerSpec::Relu);
        assert!(spec.validate().is_err());
        assert!(spec.num_classes().is_err());
    }
}
