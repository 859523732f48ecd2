//! Layer graphs: a topologically ordered node list with explicit input wiring.
//!
//! Slot 0 holds the graph input; node `i` writes slot `i + 1`. Nodes may only
//! read slots written before them, so the node order is a valid schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::layers::{Layer, LayerKind, LayerSpec, Mode};
use super::loss::{label_smoothed_ce_with_grad, LossConfig};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub layer: LayerSpec,
    /// Slot indices read by this node.
    pub inputs: Vec<usize>,
}

/// Architecture description, independent of parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    /// Per-sample input shape, e.g. `[channels, length]`.
    pub input_shape: Vec<usize>,
    pub nodes: Vec<NodeSpec>,
}

impl GraphSpec {
    pub fn new(input_shape: &[usize]) -> Self {
        Self { input_shape: input_shape.to_vec(), nodes: Vec::new() }
    }

    pub const INPUT: usize = 0;

    /// Appends a node and returns the slot it writes.
    pub fn push(&mut self, name: impl Into<String>, layer: LayerSpec, inputs: &[usize]) -> usize {
        self.nodes.push(NodeSpec { name: name.into(), layer, inputs: inputs.to_vec() });
        self.nodes.len()
    }

    pub fn output_slot(&self) -> usize {
        self.nodes.len()
    }

    /// Symbolic shape pass: per-sample shape of every slot.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.inputs.iter().any(|&s| s > i) {
                return Err(Error::ShapeMismatch(format!("node {} reads a later slot {:?}", node.name, node.inputs)));
            }
            let ins: Vec<&[usize]> = node.inputs.iter().map(|&s| shapes[s].as_slice()).collect();
            let out = node
                .layer
                .output_shape(&ins)
                .map_err(|e| Error::ShapeMismatch(format!("node {}: {e}", node.name)))?;
            shapes.push(out);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("input slot"))
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(|n| n.layer.param_count()).sum()
    }

    pub fn count_kind(&self, kind: LayerKind) -> usize {
        self.nodes.iter().filter(|n| n.layer.kind() == kind).count()
    }

    /// Instantiates freshly initialized layers, in node order.
    pub fn build<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Graph<T>> {
        let layers = self.nodes.iter().map(|n| Layer::new(&n.layer, rng)).collect();
        Graph::from_parts(self.clone(), layers)
    }
}

/// A built graph: parameters, caches and the most recent parameter gradients.
#[derive(Clone, Debug)]
pub struct Graph<T: Real> {
    spec: GraphSpec,
    layers: Vec<Layer<T>>,
    grads: Vec<Vec<Tensor<T>>>,
    /// Last node index reading each slot.
    last_use: Vec<usize>,
}

impl<T: Real> Graph<T> {
    pub fn from_parts(spec: GraphSpec, layers: Vec<Layer<T>>) -> Result<Self> {
        spec.shapes()?;
        if spec.nodes.is_empty() || layers.len() != spec.nodes.len() {
            return Err(Error::ShapeMismatch(format!("{} layers for {} nodes", layers.len(), spec.nodes.len())));
        }
        for (node, layer) in spec.nodes.iter().zip(&layers) {
            if layer.spec() != node.layer {
                return Err(Error::ShapeMismatch(format!("node {}: layer {:?} vs spec {:?}", node.name, layer.spec(), node.layer)));
            }
        }
        let mut last_use = vec![0; spec.nodes.len() + 1];
        for (i, node) in spec.nodes.iter().enumerate() {
            for &s in &node.inputs {
                last_use[s] = i;
            }
        }
        let grads = vec![Vec::new(); layers.len()];
        Ok(Self { spec, layers, grads, last_use })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() != self.spec.input_shape.len() + 1 || x.shape()[1..] != self.spec.input_shape[..] {
            return Err(Error::ShapeMismatch(format!(
                "graph expects [batch, {:?}], got {:?}",
                self.spec.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Runs every node, dropping intermediate slots after their last reader.
    fn run(
        &mut self,
        x: &Tensor<T>,
        mut step: impl FnMut(&mut Layer<T>, &[&Tensor<T>]) -> Result<Tensor<T>>,
    ) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut slots: Vec<Option<Tensor<T>>> = vec![None; n + 1];
        slots[0] = Some(x.clone());
        for i in 0..n {
            let node = &self.spec.nodes[i];
            let out = {
                let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|&s| slots[s].as_ref().expect("live slot")).collect();
                step(&mut self.layers[i], &ins)?
            };
            for &s in &node.inputs {
                if self.last_use[s] == i {
                    slots[s] = None;
                }
            }
            slots[i + 1] = Some(out);
        }
        Ok(slots.pop().flatten().expect("output slot"))
    }

    /// Forward pass that caches activations for [`Graph::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(x, |layer, ins| layer.forward(ins, mode))
    }

    /// Eval-mode forward pass on a frozen graph.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut slots: Vec<Option<Tensor<T>>> = vec![None; n + 1];
        slots[0] = Some(x.clone());
        for (i, (node, layer)) in self.spec.nodes.iter().zip(&self.layers).enumerate() {
            let out = {
                let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|&s| slots[s].as_ref().expect("live slot")).collect();
                layer.infer(&ins)?
            };
            for &s in &node.inputs {
                if self.last_use[s] == i {
                    slots[s] = None;
                }
            }
            slots[i + 1] = Some(out);
        }
        Ok(slots.pop().flatten().expect("output slot"))
    }

    /// Backpropagates `upstream` (gradient w.r.t. the output of node `end - 1`)
    /// through nodes `end - 1, ..., 0`; returns the input gradient.
    fn backward_through(&mut self, end: usize, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let mut slot_grads: Vec<Option<Tensor<T>>> = vec![None; end + 1];
        slot_grads[end] = Some(upstream.clone());
        for g in self.grads.iter_mut().skip(end) {
            g.clear();
        }
        for i in (0..end).rev() {
            let Some(g) = slot_grads[i + 1].take() else {
                self.grads[i] = self.layers[i].params().iter().map(|p| Tensor::zeros(p.shape())).collect();
                continue;
            };
            let lg = self.layers[i].backward(&g)?;
            for (&s, gi) in self.spec.nodes[i].inputs.iter().zip(lg.inputs) {
                match &mut slot_grads[s] {
                    Some(acc) => acc.add_assign(&gi)?,
                    empty => *empty = Some(gi),
                }
            }
            self.grads[i] = lg.params;
        }
        Ok(slot_grads[0].take().unwrap_or_else(|| Tensor::zeros(&[0])))
    }

    /// Full backward pass from a gradient w.r.t. the graph output.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_through(self.layers.len(), upstream)
    }

    /// Backward pass that skips the final softmax, taking the gradient w.r.t.
    /// its logits (the fused softmax + cross-entropy rule).
    pub fn backward_from_logits(&mut self, dlogits: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.layers.len();
        if self.layers[n - 1].kind() != LayerKind::Softmax || self.spec.nodes[n - 1].inputs != [n - 1] {
            return Err(Error::ShapeMismatch("graph does not end in a softmax over the previous node".into()));
        }
        self.backward_through(n - 1, dlogits)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Parameter gradients from the last backward pass, per node.
    pub fn param_grads(&self) -> &[Vec<Tensor<T>>] {
        &self.grads
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn new_optimizer(&self, config: super::adam::AdamConfig) -> AdamState<T> {
        AdamState::new(config, self.params())
    }

    /// Applies one optimizer step using the stored gradients.
    pub fn apply_gradients(&mut self, opt: &mut AdamState<T>) -> Result<()> {
        let grads: Vec<&Tensor<T>> = self.grads.iter().flatten().collect();
        let mut params: Vec<&mut Tensor<T>> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        adam_step(opt, &mut params, &grads)
    }

    /// Train-mode forward, fused loss backward and one optimizer step.
    /// Returns the batch loss before the update.
    pub fn train_step(
        &mut self,
        x: &Tensor<T>,
        labels: &[usize],
        loss: &LossConfig,
        opt: &mut AdamState<T>,
    ) -> Result<f64> {
        let probs = self.forward(x, Mode::Train)?;
        let (value, dlogits) = label_smoothed_ce_with_grad(&probs, labels, loss)?;
        self.backward_from_logits(&dlogits)?;
        self.apply_gradients(opt)?;
        self.clear_caches();
        Ok(value)
    }
}
