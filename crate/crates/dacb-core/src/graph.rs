//! Directed acyclic graphs of [`LayerNode`]s.
//!
//! Nodes are stored in topological order (an edge may only point at an
//! earlier node or a graph input), so forward evaluation is a single sweep
//! and reverse-mode differentiation is the same sweep backwards. The graph
//! owns its layers; parameters are addressed as `node_name.param_name`.

use crate::error::{Error, Result};
use crate::layer::LayerNode;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortRef {
    /// One of the graph's external inputs.
    Input(usize),
    /// The output of an earlier node.
    Node(usize),
}

pub struct GraphNode {
    pub name: String,
    pub layer: Box<dyn LayerNode + Send + Sync>,
    pub inputs: Vec<PortRef>,
    /// Optimizer updates are skipped while false.
    pub trainable: bool,
    /// Whether the freeze policy may claim this node (backbone layers yes,
    /// classification head no).
    pub freezable: bool,
}

#[derive(Default)]
pub struct ModelGraph {
    nodes: Vec<GraphNode>,
    n_inputs: usize,
    output: Option<usize>,
}

/// Everything reverse mode produces in one pass: per-node parameter
/// gradients, the gradient of the objective w.r.t. every node output
/// (what Grad-CAM consumes), and w.r.t. every graph input (what nested
/// graphs consume).
pub struct GraphGrads {
    pub params: Vec<Vec<Tensor>>,
    pub node_outputs: Vec<Option<Tensor>>,
    pub inputs: Vec<Option<Tensor>>,
}

impl ModelGraph {
    pub fn new(n_inputs: usize) -> Self {
        ModelGraph {
            nodes: Vec::new(),
            n_inputs,
            output: None,
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        layer: Box<dyn LayerNode + Send + Sync>,
        inputs: Vec<PortRef>,
    ) -> usize {
        let name = name.into();
        assert_eq!(
            layer.arity(),
            inputs.len(),
            "node {name}: arity {} but {} inputs wired",
            layer.arity(),
            inputs.len()
        );
        for port in &inputs {
            match port {
                PortRef::Input(i) => assert!(*i < self.n_inputs, "node {name}: bad graph input"),
                PortRef::Node(i) => assert!(*i < self.nodes.len(), "node {name}: forward edge"),
            }
        }
        self.nodes.push(GraphNode {
            name,
            layer,
            inputs,
            trainable: true,
            freezable: true,
        });
        self.nodes.len() - 1
    }

    /// Convenience for chains: wire to the previous node (or graph input 0
    /// when the graph is empty).
    pub fn add_seq(&mut self, name: impl Into<String>, layer: Box<dyn LayerNode + Send + Sync>) -> usize {
        let port = match self.nodes.len() {
            0 => PortRef::Input(0),
            n => PortRef::Node(n - 1),
        };
        self.add(name, layer, vec![port])
    }

    pub fn set_output(&mut self, node: usize) {
        assert!(node < self.nodes.len());
        self.output = Some(node);
    }

    pub fn output_node(&self) -> usize {
        self.output.expect("graph output not set")
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [GraphNode] {
        &mut self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// Evaluate every node; returns all node outputs in topological order.
    pub fn forward_trace(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        if inputs.len() != self.n_inputs {
            return Err(Error::Input(format!(
                "graph expects {} inputs, got {}",
                self.n_inputs,
                inputs.len()
            )));
        }
        for (i, t) in inputs.iter().enumerate() {
            t.check_finite(&format!("graph input {i}"))?;
        }
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|p| match p {
                    PortRef::Input(i) => inputs[*i],
                    PortRef::Node(i) => &outs[*i],
                })
                .collect();
            let out = node.layer.forward(&ins).map_err(|e| {
                Error::Input(format!("node {}: {e}", node.name))
            })?;
            outs.push(out);
        }
        Ok(outs)
    }

    pub fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let mut trace = self.forward_trace(inputs)?;
        let out = trace.swap_remove(self.output_node());
        out.check_finite("graph output")?;
        Ok(out)
    }

    /// Reverse sweep from `seed_node`, seeding with `seed_grad` (the
    /// objective's gradient w.r.t. that node's output). Parameter gradients
    /// are accumulated for every node that influences the seed.
    pub fn backward_from(
        &self,
        inputs: &[&Tensor],
        trace: &[Tensor],
        seed_node: usize,
        seed_grad: &Tensor,
    ) -> Result<GraphGrads> {
        let n = self.nodes.len();
        let mut node_grads: Vec<Option<Tensor>> = vec![None; n];
        let mut input_grads: Vec<Option<Tensor>> = vec![None; self.n_inputs];
        let mut param_grads: Vec<Vec<Tensor>> = self
            .nodes
            .iter()
            .map(|nd| {
                nd.layer
                    .params()
                    .iter()
                    .map(|p| Tensor::zeros(p.dims()))
                    .collect()
            })
            .collect();
        node_grads[seed_node] = Some(seed_grad.clone());
        for idx in (0..=seed_node).rev() {
            let Some(g) = node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let ins: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|p| match p {
                    PortRef::Input(i) => inputs[*i],
                    PortRef::Node(i) => &trace[*i],
                })
                .collect();
            let lg = node.layer.backward(&ins, &g).map_err(|e| {
                Error::Input(format!("node {} backward: {e}", node.name))
            })?;
            debug_assert_eq!(lg.inputs.len(), node.inputs.len());
            for (port, gin) in node.inputs.iter().zip(lg.inputs) {
                let slot = match port {
                    PortRef::Node(i) => &mut node_grads[*i],
                    PortRef::Input(i) => &mut input_grads[*i],
                };
                match slot {
                    Some(acc) => acc.add_assign(&gin)?,
                    empty => *empty = Some(gin),
                }
            }
            param_grads[idx] = lg.params;
            node_grads[idx] = Some(g);
        }
        Ok(GraphGrads {
            params: param_grads,
            node_outputs: node_grads,
            inputs: input_grads,
        })
    }

    /// Standard training backward: seed at the graph output.
    pub fn backward(
        &self,
        inputs: &[&Tensor],
        trace: &[Tensor],
        grad_output: &Tensor,
    ) -> Result<GraphGrads> {
        self.backward_from(inputs, trace, self.output_node(), grad_output)
    }

    /// `(node_name.param_name, tensor)` pairs in topological order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            for (name, p) in node.layer.param_names().iter().zip(node.layer.params()) {
                out.push((format!("{}.{}", node.name, name), p));
            }
        }
        out
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| n.layer.params())
            .map(|p| p.len())
            .sum()
    }

    /// Overwrite parameters by name. Errors on unknown names or shape
    /// mismatches; names absent from `values` are left untouched.
    pub fn load_named_params(&mut self, values: &[(String, Tensor)]) -> Result<()> {
        use std::collections::HashMap;
        let mut lookup: HashMap<&str, &Tensor> =
            values.iter().map(|(k, v)| (k.as_str(), v)).collect();
        for node in &mut self.nodes {
            let names = node.layer.param_names();
            for (name, p) in names.iter().zip(node.layer.params_mut()) {
                let key = format!("{}.{}", node.name, name);
                if let Some(v) = lookup.remove(key.as_str()) {
                    if v.dims() != p.dims() {
                        return Err(Error::Checkpoint(format!(
                            "parameter {key}: stored shape {:?}, model expects {:?}",
                            v.dims(),
                            p.dims()
                        )));
                    }
                    *p = v.clone();
                }
            }
        }
        if let Some((k, _)) = lookup.into_iter().next() {
            return Err(Error::Checkpoint(format!("unknown parameter {k}")));
        }
        Ok(())
    }
}

/// A graph is itself a differentiable operation, which is how composite
/// blocks (attention modules, stream backbones) nest inside larger models.
impl crate::layer::LayerNode for ModelGraph {
    fn arity(&self) -> usize {
        self.n_inputs
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        ModelGraph::forward(self, inputs)
    }

    fn backward(&self, inputs: &[&Tensor], grad_out: &Tensor) -> Result<crate::layer::LayerGrads> {
        let trace = self.forward_trace(inputs)?;
        let gg = ModelGraph::backward(self, inputs, &trace, grad_out)?;
        let input_grads = gg
            .inputs
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.unwrap_or_else(|| Tensor::zeros(inputs[i].dims())))
            .collect();
        Ok(crate::layer::LayerGrads {
            inputs: input_grads,
            params: gg.params.into_iter().flatten().collect(),
        })
    }

    fn params(&self) -> Vec<&Tensor> {
        self.nodes.iter().flat_map(|n| n.layer.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.nodes
            .iter_mut()
            .flat_map(|n| n.layer.params_mut())
            .collect()
    }

    fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(k, _)| k).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{Add2, Relu};

    #[test]
    fn diamond_graph_accumulates_gradients() {
        // input -> relu -> (left, right both identity-ish) -> add
        let mut g = ModelGraph::new(1);
        let a = g.add("a", Box::new(Relu), vec![PortRef::Input(0)]);
        let sum = g.add("sum", Box::new(Add2), vec![PortRef::Node(a), PortRef::Node(a)]);
        g.set_output(sum);

        let x = Tensor::from_vec(vec![1, 4], vec![-1.0, 2.0, 3.0, -4.0]).unwrap();
        // Rank-4 free ops: reshape to keep Relu happy with any rank.
        let y = g.forward(&[&x]).unwrap();
        assert_eq!(y.data(), &[0.0, 4.0, 6.0, 0.0]);

        let trace = g.forward_trace(&[&x]).unwrap();
        let seed = Tensor::full(&[1, 4], 1.0);
        let grads = g.backward(&[&x], &trace, &seed).unwrap();
        // Both add branches route gradient into the relu node: factor 2.
        let ga = grads.node_outputs[a].as_ref().unwrap();
        assert_eq!(ga.data(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn named_params_roundtrip() {
        use crate::ops::Linear;
        use crate::rng::Rng;
        let mut rng = Rng::new(4);
        let mut g = ModelGraph::new(1);
        let id = g.add("fc", Box::new(Linear::new(3, 2, &mut rng)), vec![PortRef::Input(0)]);
        g.set_output(id);
        let named: Vec<(String, Tensor)> = g
            .named_params()
            .into_iter()
            .map(|(k, v)| (k, v.scale(2.0)))
            .collect();
        assert_eq!(named[0].0, "fc.weight");
        let before = g.named_params()[0].1.clone();
        g.load_named_params(&named).unwrap();
        let after = g.named_params()[0].1.clone();
        assert_eq!(after.data()[0], before.data()[0] * 2.0);
        assert!(g
            .load_named_params(&[("nope.weight".into(), Tensor::zeros(&[1]))])
            .is_err());
    }
}
