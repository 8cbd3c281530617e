//! End-to-end encoding of one signal into a layered container and back.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bitstream::{pack, unpack};
use crate::codec::{LayerCodec, LayerId, SemanticFeature, Thumbnail};
use crate::data_io::BrainSignal;
use crate::trainer::label_condition;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("a {expected} codec was given a layer {found} checkpoint")]
    WrongCodec { expected: LayerId, found: LayerId },
    #[error("layer {0} needs its checkpoint")]
    MissingCodec(LayerId),
    #[error("subject id {0} does not fit the container's 8-bit field")]
    SubjectRange(u32),
}

/// Trained codecs for a prefix of the layers.
#[derive(Debug, Clone)]
pub struct CodecStack {
    label: LayerCodec,
    caption: Option<LayerCodec>,
    thumbnail: Option<LayerCodec>,
}

fn expect_layer(codec: &LayerCodec, expected: LayerId) -> Result<(), PipelineError> {
    if codec.layer() != expected {
        return Err(PipelineError::WrongCodec { expected, found: codec.layer() });
    }
    Ok(())
}

impl CodecStack {
    pub fn new(label: LayerCodec) -> Result<Self, PipelineError> {
        expect_layer(&label, LayerId::Label)?;
        Ok(CodecStack { label, caption: None, thumbnail: None })
    }

    pub fn with_caption(mut self, codec: LayerCodec) -> Result<Self, PipelineError> {
        expect_layer(&codec, LayerId::Caption)?;
        self.caption = Some(codec);
        Ok(self)
    }

    pub fn with_thumbnail(mut self, codec: LayerCodec) -> Result<Self, PipelineError> {
        expect_layer(&codec, LayerId::Thumbnail)?;
        self.thumbnail = Some(codec);
        Ok(self)
    }

    pub fn label(&self) -> &LayerCodec {
        &self.label
    }

    pub fn codec(&self, layer: LayerId) -> Result<&LayerCodec, PipelineError> {
        match layer {
            LayerId::Label => Ok(&self.label),
            LayerId::Caption => self.caption.as_ref().ok_or(PipelineError::MissingCodec(layer)),
            LayerId::Thumbnail => self.thumbnail.as_ref().ok_or(PipelineError::MissingCodec(layer)),
        }
    }

    /// Per-layer payloads for layers `1..=max_layer`.
    pub fn compress(&self, signal: &BrainSignal, max_layer: LayerId) -> crate::Result<BTreeMap<LayerId, Vec<u8>>> {
        let x = signal.to_tensor();
        let mut payloads = BTreeMap::new();
        for layer in LayerId::ALL.into_iter().take(max_layer.number() as usize) {
            payloads.insert(layer, self.codec(layer)?.compress(&x)?);
        }
        Ok(payloads)
    }

    /// Packs layers `1..=max_layer` of `signal` into a container.
    pub fn encode(&self, signal: &BrainSignal, max_layer: LayerId, with_crc: bool) -> crate::Result<Vec<u8>> {
        let subject = u8::try_from(signal.subject_id).map_err(|_| PipelineError::SubjectRange(signal.subject_id))?;
        Ok(pack(&self.compress(signal, max_layer)?, subject, with_crc)?)
    }

    /// Decodes every layer the container carries.
    pub fn decode(&self, bytes: &[u8]) -> crate::Result<DecodedStream> {
        let stream = unpack(bytes)?;
        let payload = |l: LayerId| stream.payloads.get(&l);
        let label = self
            .label
            .decompress(payload(LayerId::Label).expect("containers always carry layer 1"), None)?
            .into_feature()
            .expect("label codec decodes a feature");
        let caption = match payload(LayerId::Caption) {
            Some(p) => self.codec(LayerId::Caption)?.decompress(p, Some(&label))?.into_feature(),
            None => None,
        };
        let thumbnail = match payload(LayerId::Thumbnail) {
            Some(p) => match self.codec(LayerId::Thumbnail)?.decompress(p, None)? {
                crate::codec::Reconstruction::Thumbnail(t) => Some(t),
                crate::codec::Reconstruction::Feature(_) => None,
            },
            None => None,
        };
        Ok(DecodedStream {
            subject_id: stream.subject_id,
            payload_bits: stream.payloads.iter().map(|(&l, p)| (l, 8 * p.len() as u64)).collect(),
            label,
            caption,
            thumbnail,
        })
    }

    /// Layer-1 feature as the caption decoder sees it, computed straight
    /// from the signal.
    pub fn label_feature(&self, signal: &BrainSignal) -> crate::Result<SemanticFeature> {
        label_condition(&self.label, signal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedStream {
    pub subject_id: u8,
    pub payload_bits: BTreeMap<LayerId, u64>,
    pub label: SemanticFeature,
    pub caption: Option<SemanticFeature>,
    pub thumbnail: Option<Thumbnail>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::slice;
    use crate::codec::ArchScale;
    use crate::entropy::{build_pmf_table, PmfTable};

    fn ready(layer: LayerId) -> LayerCodec {
        let mut c = LayerCodec::new(ArchScale::compact(2, 16).arch(layer), layer.number() as u64).unwrap();
        let medians = vec![0; c.latent_width()];
        let tables: PmfTable = build_pmf_table(c.density(), &medians).unwrap();
        c.set_tables(medians, tables).unwrap();
        c
    }

    fn signal(subject: u32) -> BrainSignal {
        let data = (0..32).map(|i| (i as f64 * 0.3).sin()).collect();
        BrainSignal::new(2, 16, data, 0, subject, 1000).unwrap()
    }

    fn stack() -> CodecStack {
        CodecStack::new(ready(LayerId::Label))
            .unwrap()
            .with_caption(ready(LayerId::Caption))
            .unwrap()
            .with_thumbnail(ready(LayerId::Thumbnail))
            .unwrap()
    }

    #[test]
    fn full_stream_decodes_all_layers_and_slices_agree() {
        let s = stack();
        let x = signal(3);
        let bytes = s.encode(&x, LayerId::Thumbnail, true).unwrap();
        let full = s.decode(&bytes).unwrap();
        assert_eq!(full.subject_id, 3);
        assert_eq!(full.label, s.label_feature(&x).unwrap());
        assert!(full.caption.is_some() && full.thumbnail.is_some());

        let base = s.decode(&slice(&bytes, 1).unwrap()).unwrap();
        assert_eq!(base.label, full.label);
        assert!(base.caption.is_none() && base.thumbnail.is_none());
        assert_eq!(s.decode(&slice(&bytes, 2).unwrap()).unwrap().caption, full.caption);
    }

    #[test]
    fn missing_and_mismatched_codecs() {
        let only_label = CodecStack::new(ready(LayerId::Label)).unwrap();
        assert!(only_label.encode(&signal(0), LayerId::Caption, true).is_err());
        let bytes = stack().encode(&signal(0), LayerId::Caption, false).unwrap();
        assert!(only_label.decode(&bytes).is_err());
        assert!(matches!(
            CodecStack::new(ready(LayerId::Caption)),
            Err(PipelineError::WrongCodec { expected: LayerId::Label, found: LayerId::Caption })
        ));
        assert!(stack().encode(&signal(300), LayerId::Label, true).is_err());
    }
}
