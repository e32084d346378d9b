use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Layer, LayerSpec, Param};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Keep activations for one backward pass.
    Train,
    Eval,
}

/// A sequential differentiable network with named parameters.
///
/// Inputs carry a leading batch axis in front of the declared per-sample
/// input shape.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    /// Per-sample shapes; `shapes[i]` feeds layer `i`, the last one is the output.
    shapes: Vec<Vec<usize>>,
    caches: Option<Vec<Cache>>,
}

impl NetworkGraph {
    pub fn build(spec: &[LayerSpec], input_shape: &[usize], seed: u64) -> Result<Self> {
        if spec.is_empty() {
            return Err(Error::Build {
                from: 0,
                to: 0,
                detail: "network spec is empty".into(),
            });
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Build {
                from: 0,
                to: 0,
                detail: format!("invalid input shape {input_shape:?}"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shapes = vec![input_shape.to_vec()];
        let mut layers = Vec::with_capacity(spec.len());
        for (i, s) in spec.iter().enumerate() {
            let current = shapes.last().unwrap();
            let (layer, out) = Layer::build(s, current, i, &mut rng).map_err(|detail| Error::Build {
                from: i.saturating_sub(1),
                to: i,
                detail: format!("{} <- {current:?}: {detail}", s.kind_name()),
            })?;
            layers.push(layer);
            shapes.push(out);
        }
        Ok(Self {
            specs: spec.to_vec(),
            layers,
            shapes,
            caches: None,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Per-sample shape entering layer `i` (`i == len` gives the output shape).
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Index of the last convolutional layer, if any.
    pub fn last_conv_layer(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| l.is_conv())
    }

    fn batch_of(&self, input: &Tensor) -> Result<usize> {
        let s = input.shape();
        let want = self.input_shape();
        if s.len() != want.len() + 1 || &s[1..] != want {
            return Err(Error::shape(format!(
                "network expects (batch, {want:?}) input, got {s:?}"
            )));
        }
        Ok(s[0])
    }

    fn batched(&self, layer_boundary: usize, batch: usize) -> Vec<usize> {
        let mut v = vec![batch];
        v.extend_from_slice(&self.shapes[layer_boundary]);
        v
    }

    /// Runs the network. In train mode the activations are kept for [`backward`].
    ///
    /// [`backward`]: NetworkGraph::backward
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Eval => {
                self.caches = None;
                self.infer(input)
            }
            Mode::Train => {
                let (out, caches) = self.run(input, true, None)?;
                self.caches = Some(caches);
                Ok(out)
            }
        }
    }

    /// Eval-mode forward that leaves the graph untouched.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input, false, None)?.0)
    }

    /// Eval-mode forward that also returns the activation entering layer `tap`
    /// (`tap == num_layers` is the output).
    pub fn infer_with_tap(&self, input: &Tensor, tap: usize) -> Result<(Tensor, Tensor)> {
        let mut tapped = None;
        let (out, _) = self.run(input, false, Some((tap, &mut tapped)))?;
        Ok((out, tapped.expect("tap within range")))
    }

    fn run(
        &self,
        input: &Tensor,
        keep: bool,
        mut tap: Option<(usize, &mut Option<Tensor>)>,
    ) -> Result<(Tensor, Vec<Cache>)> {
        let batch = self.batch_of(input)?;
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((t, slot)) = tap.as_mut() {
                if *t == i {
                    **slot = Some(x.clone());
                }
            }
            let (y, cache) = layer.forward(&x, self.batched(i + 1, batch), keep);
            if !y.is_finite() {
                return Err(Error::Numeric {
                    layer: i,
                    stage: "forward",
                });
            }
            if keep {
                caches.push(cache);
            }
            x = y;
        }
        if let Some((t, slot)) = tap {
            if t == self.layers.len() {
                *slot = Some(x.clone());
            }
        }
        Ok((x, caches))
    }

    /// Backpropagates `output_grad` through the cached forward pass, adding into
    /// every parameter's gradient slot, and returns the gradient of the input.
    /// The cache is consumed.
    pub fn backward(&mut self, output_grad: &Tensor) -> Result<Tensor> {
        Ok(self.backward_tapped(output_grad, None)?.0)
    }

    /// Like [`backward`](Self::backward) but also returns the gradient w.r.t. the
    /// activation entering layer `tap`.
    pub fn backward_tapped(&mut self, output_grad: &Tensor, tap: Option<usize>) -> Result<(Tensor, Option<Tensor>)> {
        let caches = self
            .caches
            .take()
            .ok_or_else(|| Error::Usage("backward called without a cached train-mode forward".into()))?;
        let batch = output_grad.shape().first().copied().unwrap_or(0);
        let want = self.batched(self.layers.len(), batch);
        if output_grad.shape() != want.as_slice() {
            return Err(Error::shape(format!(
                "output gradient {:?} does not match output {want:?}",
                output_grad.shape()
            )));
        }
        let mut g = output_grad.clone();
        let mut tapped = None;
        if tap == Some(self.layers.len()) {
            tapped = Some(g.clone());
        }
        for i in (0..self.layers.len()).rev() {
            let in_shape = self.batched(i, batch);
            g = self.layers[i].backward(&caches[i], &g, &in_shape)?;
            if !g.is_finite() {
                return Err(Error::Numeric {
                    layer: i,
                    stage: "backward",
                });
            }
            if tap == Some(i) {
                tapped = Some(g.clone());
            }
        }
        Ok((g, tapped))
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params().into_iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params_mut().into_iter().find(|p| p.name == name)
    }

    /// Gradients keyed by parameter name.
    pub fn gradients(&self) -> Vec<(String, Tensor)> {
        self.params()
            .into_iter()
            .map(|p| (p.name.clone(), p.grad.clone()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Order-sensitive FNV-1a hash over the parameter bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for p in self.params() {
            for v in p.value.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    /// Copies all parameter values from a structurally identical graph.
    pub fn copy_params_from(&mut self, other: &NetworkGraph) -> Result<()> {
        super::polyak_update(self, other, 0.0)
    }

    /// Whether two graphs have the same parameter names and shapes.
    pub fn same_structure(&self, other: &NetworkGraph) -> bool {
        let a = self.params();
        let b = other.params();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.name == y.name && x.value.shape() == y.value.shape())
    }
}
