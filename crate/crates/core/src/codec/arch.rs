use serde::{Deserialize, Serialize};

use super::{CodecError, LayerId};
use crate::neural::{LayerSpec, NetworkSpec};

/// Network layout of one layer codec.
///
/// `context` is present only for the caption layer: it maps the decoded
/// label feature to the vector that drives the decoder's modulation layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecArch {
    pub layer: LayerId,
    pub encoder: NetworkSpec,
    pub context: Option<NetworkSpec>,
    pub decoder: NetworkSpec,
}

/// Widths used to instantiate the layouts at a chosen scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchScale {
    pub channels: usize,
    pub samples: usize,
    /// Output channels of the residual conv blocks (kernel 3, stride 2).
    pub conv_channels: Vec<usize>,
    /// First dense width after the convolutional trunk (label and caption).
    pub hidden: usize,
    /// Latent width of the label and caption layers.
    pub latent: usize,
    /// Label-level feature width.
    pub label_width: usize,
    /// Caption-level feature width.
    pub caption_width: usize,
    /// Thumbnail encoder widths: first dense layer, then middle block.
    pub thumb_hidden: (usize, usize),
    /// Thumbnail latent width.
    pub thumb_latent: usize,
    pub dropout: f64,
}

pub const THUMBNAIL_SIDE: usize = 32;
pub const THUMBNAIL_LEN: usize = THUMBNAIL_SIDE * THUMBNAIL_SIDE * 3;

impl ArchScale {
    /// Full-size layout: 128×440 input, four conv blocks, 512/2048 latents.
    pub fn paper() -> Self {
        ArchScale {
            channels: 128,
            samples: 440,
            conv_channels: vec![256, 512, 768, 768],
            hidden: 1000,
            latent: 512,
            label_width: 768,
            caption_width: 512,
            thumb_hidden: (4096, 3072),
            thumb_latent: 2048,
            dropout: 0.25,
        }
    }

    /// Small layout that trains in seconds on one core.
    pub fn compact(channels: usize, samples: usize) -> Self {
        ArchScale {
            channels,
            samples,
            conv_channels: vec![8, 16],
            hidden: 32,
            latent: 16,
            label_width: 64,
            caption_width: 32,
            thumb_hidden: (64, 48),
            thumb_latent: 32,
            dropout: 0.1,
        }
    }

    pub fn arch(&self, layer: LayerId) -> CodecArch {
        let conv_trunk = || {
            let mut layers = Vec::new();
            let mut c = self.channels;
            for &out in &self.conv_channels {
                layers.push(LayerSpec::ConvResBlock { input: c, output: out, kernel: 3, stride: 2 });
                c = out;
            }
            layers.push(LayerSpec::GlobalAvgPool);
            (layers, c)
        };
        let input_shape = vec![self.channels, self.samples];
        let drop = LayerSpec::Dropout { rate: self.dropout };
        match layer {
            LayerId::Label => {
                let (mut enc, c) = conv_trunk();
                enc.extend([
                    drop.clone(),
                    LayerSpec::ResBlock { input: c, output: self.hidden },
                    drop,
                    LayerSpec::ResBlock { input: self.hidden, output: self.latent },
                ]);
                let dec = vec![
                    LayerSpec::ResBlock { input: self.latent, output: self.hidden },
                    LayerSpec::ResBlock { input: self.hidden, output: self.label_width },
                    LayerSpec::ResBlock { input: self.label_width, output: self.label_width },
                ];
                CodecArch {
                    layer,
                    encoder: NetworkSpec::new(input_shape, enc),
                    context: None,
                    decoder: NetworkSpec::new(vec![self.latent], dec),
                }
            }
            LayerId::Caption => {
                let (mut enc, c) = conv_trunk();
                enc.extend([
                    drop.clone(),
                    LayerSpec::ResBlock { input: c, output: self.hidden },
                    drop,
                    LayerSpec::ResBlock { input: self.hidden, output: self.latent },
                ]);
                let ctx = self.latent;
                let context = NetworkSpec::new(
                    vec![self.label_width],
                    vec![
                        LayerSpec::Linear { input: self.label_width, output: ctx },
                        LayerSpec::Silu,
                        LayerSpec::Linear { input: ctx, output: ctx },
                    ],
                );
                let dec = vec![
                    LayerSpec::Film { width: self.latent, context: ctx },
                    LayerSpec::ResBlock { input: self.latent, output: self.hidden },
                    LayerSpec::Film { width: self.hidden, context: ctx },
                    LayerSpec::ResBlock { input: self.hidden, output: self.label_width },
                    LayerSpec::Film { width: self.label_width, context: ctx },
                    LayerSpec::ResBlock { input: self.label_width, output: self.caption_width },
                ];
                CodecArch {
                    layer,
                    encoder: NetworkSpec::new(input_shape, enc),
                    context: Some(context),
                    decoder: NetworkSpec::new(vec![self.latent], dec),
                }
            }
            LayerId::Thumbnail => {
                let (h1, h2) = self.thumb_hidden;
                let enc = vec![
                    LayerSpec::Flatten,
                    LayerSpec::Linear { input: self.channels * self.samples, output: h1 },
                    drop.clone(),
                    LayerSpec::ResBlock { input: h1, output: h2 },
                    drop,
                    LayerSpec::ResBlock { input: h2, output: self.thumb_latent },
                ];
                let dec = vec![
                    LayerSpec::ResBlock { input: self.thumb_latent, output: h2 },
                    LayerSpec::ResBlock { input: h2, output: h1 },
                    LayerSpec::ResBlock { input: h1, output: THUMBNAIL_LEN },
                ];
                CodecArch {
                    layer,
                    encoder: NetworkSpec::new(input_shape, enc),
                    context: None,
                    decoder: NetworkSpec::new(vec![self.thumb_latent], dec),
                }
            }
        }
    }
}

impl CodecArch {
    pub fn paper(layer: LayerId) -> Self {
        ArchScale::paper().arch(layer)
    }

    pub fn compact(layer: LayerId, channels: usize, samples: usize) -> Self {
        ArchScale::compact(channels, samples).arch(layer)
    }

    /// Checks that the three networks compose and returns
    /// `(latent width, output width, condition width)`.
    pub fn validate(&self) -> Result<(usize, usize, Option<usize>), CodecError> {
        let arch = |e: crate::neural::NeuralError| CodecError::Arch(e.to_string());
        let enc_out = self.encoder.output_shape().map_err(arch)?;
        if enc_out.len() != 1 {
            return Err(CodecError::Arch(format!("encoder must output a vector, got {enc_out:?}")));
        }
        let latent = enc_out[0];
        if self.decoder.input_shape != [latent] {
            return Err(CodecError::Arch(format!(
                "decoder input {:?} does not match latent width {latent}",
                self.decoder.input_shape
            )));
        }
        if self.encoder.context_width().is_some() {
            return Err(CodecError::Arch("encoder cannot be conditioned".into()));
        }
        let dec_out = self.decoder.output_shape().map_err(arch)?;
        if dec_out.len() != 1 {
            return Err(CodecError::Arch(format!("decoder must output a vector, got {dec_out:?}")));
        }
        let output = dec_out[0];
        if self.layer == LayerId::Thumbnail && output != THUMBNAIL_LEN {
            return Err(CodecError::Arch(format!("thumbnail decoder outputs {output}, expected {THUMBNAIL_LEN}")));
        }
        let condition = match (self.layer, &self.context, self.decoder.context_width()) {
            (LayerId::Caption, Some(ctx), Some(w)) => {
                if ctx.output_shape().map_err(arch)? != [w] || ctx.input_shape.len() != 1 {
                    return Err(CodecError::Arch("context network does not produce the modulation width".into()));
                }
                if ctx.context_width().is_some() {
                    return Err(CodecError::Arch("context network cannot be conditioned".into()));
                }
                Some(ctx.input_shape[0])
            }
            (LayerId::Caption, _, _) => {
                return Err(CodecError::Arch("caption layer needs a context network and modulation".into()))
            }
            (_, None, None) => None,
            _ => return Err(CodecError::Arch(format!("{:?} layer cannot be conditioned", self.layer))),
        };
        Ok((latent, output, condition))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_widths() {
        assert_eq!(CodecArch::paper(LayerId::Label).validate().unwrap(), (512, 768, None));
        assert_eq!(CodecArch::paper(LayerId::Caption).validate().unwrap(), (512, 512, Some(768)));
        assert_eq!(CodecArch::paper(LayerId::Thumbnail).validate().unwrap(), (2048, 3072, None));
        assert_eq!(CodecArch::paper(LayerId::Label).encoder.layers.len(), 9);
    }

    #[test]
    fn compact_widths_compose() {
        for layer in LayerId::ALL {
            CodecArch::compact(layer, 16, 64).validate().unwrap();
        }
    }

    #[test]
    fn inconsistent_layouts_are_rejected() {
        let mut a = CodecArch::paper(LayerId::Label);
        a.decoder.input_shape = vec![100];
        assert!(a.validate().is_err());
        let mut a = CodecArch::paper(LayerId::Caption);
        a.context = None;
        assert!(a.validate().is_err());
        let mut a = CodecArch::paper(LayerId::Label);
        a.context = CodecArch::paper(LayerId::Caption).context;
        assert!(a.validate().is_err());
    }
}
