use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Cache, Layer, LayerSpec};
use super::{Grads, Mode, NeuralError, Param, Parameterized, Tensor};

/// Ordered layer stack plus the input shape it accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec { input_shape, layers }
    }

    /// Propagates the input shape through every layer and returns the
    /// output shape, failing on the first layer that does not compose.
    pub fn output_shape(&self) -> Result<Vec<usize>, NeuralError> {
        if self.layers.is_empty() {
            return Err(NeuralError::Invalid("network has no layers".into()));
        }
        let mut shape = self.input_shape.clone();
        let mut context = None;
        for (i, l) in self.layers.iter().enumerate() {
            shape = l.output_shape(&shape).map_err(|e| NeuralError::Invalid(format!("layer {i}: {e}")))?;
            if let Some(c) = l.context_width() {
                if *context.get_or_insert(c) != c {
                    return Err(NeuralError::Invalid("modulation layers disagree on context width".into()));
                }
            }
        }
        Ok(shape)
    }

    pub fn context_width(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| l.context_width())
    }
}

/// Record of one forward pass, sufficient for an exact reverse pass.
#[derive(Debug, Clone)]
pub struct Tape {
    caches: Vec<Cache>,
    context: Option<Vec<f64>>,
    output_len: usize,
}

impl Tape {
    pub fn output_len(&self) -> usize {
        self.output_len
    }
}

/// Result of [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Grads,
    pub input_grad: Vec<f64>,
    pub context_grad: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    output_shape: Vec<usize>,
}

impl Network {
    /// Builds and initializes a network; parameter names are prefixed with
    /// `name` and the layer index.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, name: &str, rng: &mut R) -> Result<Self, NeuralError> {
        let output_shape = spec.output_shape()?;
        let layers =
            spec.layers.iter().enumerate().map(|(i, l)| Layer::new(l.clone(), &format!("{name}.{i}"), rng)).collect();
        Ok(Network { spec, layers, output_shape })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    fn check_inputs(&self, input: &Tensor, context: Option<&[f64]>) -> Result<(), NeuralError> {
        if input.shape() != self.spec.input_shape.as_slice() {
            return Err(NeuralError::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.spec.input_shape,
                input.shape()
            )));
        }
        match (self.spec.context_width(), context) {
            (Some(w), Some(c)) if c.len() != w => Err(NeuralError::Shape(format!("context width {} != {w}", c.len()))),
            (Some(_), None) => Err(NeuralError::Invalid("network needs a context vector".into())),
            (Some(_), Some(c)) if !c.iter().all(|v| v.is_finite()) => {
                Err(NeuralError::NonFinite("context vector".into()))
            }
            _ => Ok(()),
        }
    }

    fn run<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        context: Option<&[f64]>,
        mode: Mode,
        rng: &mut R,
        record: bool,
    ) -> Result<(Tensor, Vec<Cache>), NeuralError> {
        self.check_inputs(input, context)?;
        if !input.is_finite() {
            return Err(NeuralError::NonFinite("network input".into()));
        }
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        let mut h = input.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(h, context, mode, rng, record)?;
            if let Some(c) = cache {
                caches.push(c);
            }
            h = out;
        }
        Ok((h, caches))
    }

    /// Forward pass recording a tape. Dropout draws from `rng` only in
    /// train mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        context: Option<&[f64]>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, Tape), NeuralError> {
        let (out, caches) = self.run(input, context, mode, rng, true)?;
        let tape = Tape { caches, context: context.map(<[f64]>::to_vec), output_len: out.len() };
        Ok((out, tape))
    }

    /// Eval-mode forward pass without a tape.
    pub fn infer(&self, input: &Tensor, context: Option<&[f64]>) -> Result<Tensor, NeuralError> {
        // eval mode never touches the rng
        let mut unused = rand::rngs::mock::StepRng::new(0, 0);
        Ok(self.run(input, context, Mode::Eval, &mut unused, false)?.0)
    }

    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<Backward, NeuralError> {
        if output_grad.len() != tape.output_len || tape.caches.len() != self.layers.len() {
            return Err(NeuralError::Shape(format!(
                "output gradient has {} values, tape expects {}",
                output_grad.len(),
                tape.output_len
            )));
        }
        let mut grads = Grads::zeros_like(&self.params());
        let mut ctx_grad = vec![0.0; tape.context.as_ref().map_or(0, Vec::len)];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.params.len();
        }
        let mut g = output_grad.to_vec();
        for ((layer, cache), &o) in self.layers.iter().zip(&tape.caches).rev().zip(offsets.iter().rev()) {
            let slots = &mut grads.0[o..o + layer.params.len()];
            g = layer.backward(cache, &g, tape.context.as_deref(), slots, &mut ctx_grad);
        }
        Ok(Backward { grads, input_grad: g, context_grad: tape.context.as_ref().map(|_| ctx_grad) })
    }
}

impl Parameterized for Network {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params.iter()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut()).collect()
    }
}
