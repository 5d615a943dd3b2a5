use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::window_output_len;
use crate::error::{Error, Result};

/// How the exponential layer maps activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpMode {
    /// `sign(x)·(e^|x| − 1)`, undoing the signed-log input scaling.
    #[default]
    SignedInverse,
    /// Plain element-wise `e^x`.
    Plain,
}

impl std::str::FromStr for ExpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" | "signed_inverse" | "signed-inverse" => Ok(ExpMode::SignedInverse),
            "plain" => Ok(ExpMode::Plain),
            other => Err(Error::Config(format!("unknown exp mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        name: String,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        relu: bool,
        batch_norm: bool,
    },
    Exp {
        name: String,
        mode: ExpMode,
    },
    MaxPool {
        name: String,
        kernel: usize,
        stride: usize,
    },
    Lstm {
        name: String,
        hidden: usize,
    },
    /// Fully connected classifier head; its width is the class count.
    Linear {
        name: String,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. }
            | LayerSpec::Exp { name, .. }
            | LayerSpec::MaxPool { name, .. }
            | LayerSpec::Lstm { name, .. }
            | LayerSpec::Linear { name } => name,
        }
    }

    /// Stride-1 convolution padded to keep the length unchanged, followed by
    /// ReLU and batch norm.
    pub fn same_conv(name: &str, out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv {
            name: name.into(),
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            relu: true,
            batch_norm: true,
        }
    }
}

/// Declarative model description from which a [`Model`](super::Model) is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub class_count: usize,
    pub layers: Vec<LayerSpec>,
}

/// Activation geometry after one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub channels: usize,
    pub length: usize,
}

pub const DEFAULT_INPUT_CHANNELS: usize = 12;
pub const CLASS_COUNT: usize = 52;

impl ModelSpec {
    /// CNN-LSTM-Net12: eight convolutions with an exponential layer after the
    /// third, two max pools, a 256-unit LSTM read at its last step, and a
    /// 256→52 classifier.
    pub fn cnn_lstm_net12() -> Self {
        let mut conv1 = LayerSpec::same_conv("conv1", 32, 11);
        if let LayerSpec::Conv {
            stride, padding, ..
        } = &mut conv1
        {
            *stride = 2;
            *padding = 5;
        }
        let mut conv3 = LayerSpec::same_conv("conv3", 32, 11);
        if let LayerSpec::Conv {
            relu, batch_norm, ..
        } = &mut conv3
        {
            *relu = false;
            *batch_norm = false;
        }
        Self {
            input_channels: DEFAULT_INPUT_CHANNELS,
            class_count: CLASS_COUNT,
            layers: vec![
                conv1,
                LayerSpec::same_conv("conv2", 32, 11),
                conv3,
                LayerSpec::Exp {
                    name: "exp".into(),
                    mode: ExpMode::SignedInverse,
                },
                LayerSpec::same_conv("conv4", 64, 5),
                LayerSpec::MaxPool {
                    name: "maxpool1".into(),
                    kernel: 7,
                    stride: 3,
                },
                LayerSpec::same_conv("conv5", 64, 5),
                LayerSpec::MaxPool {
                    name: "maxpool2".into(),
                    kernel: 7,
                    stride: 3,
                },
                LayerSpec::same_conv("conv6", 128, 3),
                LayerSpec::same_conv("conv8", 128, 3),
                LayerSpec::same_conv("conv9", 128, 3),
                LayerSpec::Lstm {
                    name: "lstm1".into(),
                    hidden: 256,
                },
                LayerSpec::Linear { name: "fc".into() },
            ],
        }
    }

    /// The same topology shrunk for gradient checks: every convolution has
    /// `width` channels, the LSTM `width` units, and the pools use kernel 3,
    /// stride 2 so that length-32 inputs survive both.
    pub fn reduced(width: usize, input_channels: usize, class_count: usize) -> Self {
        let mut spec = Self::cnn_lstm_net12();
        spec.input_channels = input_channels;
        spec.class_count = class_count;
        for layer in &mut spec.layers {
            match layer {
                LayerSpec::Conv { out_channels, .. } => *out_channels = width,
                LayerSpec::MaxPool { kernel, stride, .. } => {
                    *kernel = 3;
                    *stride = 2;
                }
                LayerSpec::Lstm { hidden, .. } => *hidden = width,
                _ => {}
            }
        }
        spec
    }

    pub fn with_input_channels(mut self, channels: usize) -> Self {
        self.input_channels = channels;
        self
    }

    pub fn with_exp_mode(mut self, exp_mode: ExpMode) -> Self {
        for layer in &mut self.layers {
            if let LayerSpec::Exp { mode, .. } = layer {
                *mode = exp_mode;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.input_channels == 0 || self.class_count == 0 {
            return fail("input channels and class count must be positive".into());
        }
        let n = self.layers.len();
        if n < 2 {
            return fail("a model needs at least an LSTM and a classifier".into());
        }
        if !matches!(self.layers[n - 1], LayerSpec::Linear { .. })
            || !matches!(self.layers[n - 2], LayerSpec::Lstm { .. })
        {
            return fail("the model must end with an LSTM followed by a linear classifier".into());
        }
        let mut names = std::collections::HashSet::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if !names.insert(layer.name()) {
                return fail(format!("duplicate layer name `{}`", layer.name()));
            }
            if layer.name().is_empty() || layer.name().contains(char::is_whitespace) {
                return fail(format!("invalid layer name `{}`", layer.name()));
            }
            match layer {
                LayerSpec::Conv {
                    name,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    if *out_channels == 0 || *kernel == 0 || *stride == 0 || padding >= kernel {
                        return fail(format!(
                            "{name}: need out_channels, kernel, stride ≥ 1 and padding < kernel"
                        ));
                    }
                }
                LayerSpec::MaxPool {
                    name,
                    kernel,
                    stride,
                } => {
                    if *kernel == 0 || *stride == 0 {
                        return fail(format!("{name}: kernel and stride must be ≥ 1"));
                    }
                }
                LayerSpec::Lstm { name, hidden } => {
                    if *hidden == 0 || i != n - 2 {
                        return fail(format!("{name}: a single LSTM with hidden ≥ 1 is required"));
                    }
                }
                LayerSpec::Linear { name } => {
                    if i != n - 1 {
                        return fail(format!("{name}: the linear layer must be last"));
                    }
                }
                LayerSpec::Exp { .. } => {}
            }
        }
        Ok(())
    }

    /// Channels and length after every layer for an input of `length` steps.
    pub fn shape_chain(&self, length: usize) -> Result<Vec<LayerShape>> {
        let mut channels = self.input_channels;
        let mut len = length;
        let mut chain = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let too_short = |reason: String| Error::InputTooShort { length, reason };
            match layer {
                LayerSpec::Conv {
                    name,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    len = window_output_len(len, *kernel, *stride, *padding).ok_or_else(|| {
                        too_short(format!("{name} receives {len} steps, kernel {kernel}"))
                    })?;
                    channels = *out_channels;
                }
                LayerSpec::MaxPool {
                    name,
                    kernel,
                    stride,
                } => {
                    len = window_output_len(len, *kernel, *stride, 0).ok_or_else(|| {
                        too_short(format!("{name} receives {len} steps, kernel {kernel}"))
                    })?;
                }
                LayerSpec::Lstm { hidden, .. } => {
                    channels = *hidden;
                    len = 1;
                }
                LayerSpec::Linear { .. } => {
                    channels = self.class_count;
                    len = 1;
                }
                LayerSpec::Exp { .. } => {}
            }
            chain.push(LayerShape {
                name: layer.name().to_string(),
                channels,
                length: len,
            });
        }
        Ok(chain)
    }

    /// Smallest input length accepted by every windowed layer.
    pub fn min_input_length(&self) -> usize {
        (1..=1 << 16)
            .find(|&l| self.shape_chain(l).is_ok())
            .unwrap_or(usize::MAX)
    }

    /// Hex SHA-256 of the canonical JSON form; stamped into checkpoints.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("model spec serialises");
        hex::encode(Sha256::digest(&json))
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::cnn_lstm_net12()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_order() {
        let names: Vec<_> = ModelSpec::cnn_lstm_net12()
            .layers
            .iter()
            .map(|l| l.name().to_string())
            .collect();
        assert_eq!(
            names,
            [
                "conv1", "conv2", "conv3", "exp", "conv4", "maxpool1", "conv5", "maxpool2",
                "conv6", "conv8", "conv9", "lstm1", "fc"
            ]
        );
    }

    #[test]
    fn shape_chain_at_default_length() {
        let chain = ModelSpec::cnn_lstm_net12().shape_chain(256).unwrap();
        let lengths: Vec<_> = chain.iter().map(|s| (s.name.as_str(), s.length)).collect();
        assert_eq!(
            lengths,
            [
                ("conv1", 128),
                ("conv2", 128),
                ("conv3", 128),
                ("exp", 128),
                ("conv4", 128),
                ("maxpool1", 41),
                ("conv5", 41),
                ("maxpool2", 12),
                ("conv6", 12),
                ("conv8", 12),
                ("conv9", 12),
                ("lstm1", 1),
                ("fc", 1),
            ]
        );
        assert_eq!(chain[10].channels, 128);
        assert_eq!(chain[12].channels, 52);
    }

    #[test]
    fn minimum_length_with_defaults() {
        let spec = ModelSpec::cnn_lstm_net12();
        // pool2 needs 7 steps, so pool1 needs 25 and conv1 needs 49
        assert_eq!(spec.min_input_length(), 49);
        assert!(spec.shape_chain(48).is_err());
        assert!(spec.shape_chain(55).is_ok());
    }

    #[test]
    fn reduced_model_accepts_length_32() {
        let chain = ModelSpec::reduced(3, 3, 5).shape_chain(32).unwrap();
        assert_eq!(chain[5].length, 7);
        assert_eq!(chain[7].length, 3);
    }

    #[test]
    fn digest_tracks_changes() {
        let a = ModelSpec::cnn_lstm_net12();
        let b = a.clone().with_input_channels(13);
        assert_eq!(a.digest(), ModelSpec::cnn_lstm_net12().digest());
        assert_ne!(a.digest(), b.digest());
        assert_ne!(a.digest(), a.clone().with_exp_mode(ExpMode::Plain).digest());
    }

    #[test]
    fn validation_rejects_bad_layouts() {
        assert!(ModelSpec::cnn_lstm_net12().validate().is_ok());
        let mut spec = ModelSpec::cnn_lstm_net12();
        spec.layers.swap(11, 12);
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::cnn_lstm_net12();
        spec.layers[1] = LayerSpec::same_conv("conv1", 32, 11);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = ModelSpec::cnn_lstm_net12();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    }
}
