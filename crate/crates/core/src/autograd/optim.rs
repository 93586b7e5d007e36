//! Named trainable tensors, the graph session that binds them, and Adam.

use std::collections::BTreeMap;

use crate::autograd::graph::{Graph, NodeId};
use crate::autograd::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Named trainable arrays. BTreeMap keeps iteration order deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParameterSet<T> {
    pub fn new() -> Self {
        ParameterSet {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        self.tensors.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn to_f64(&self) -> ParameterSet<f64> {
        ParameterSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.to_f64())).collect(),
        }
    }
}

/// One training/inference pass: a graph plus lazy parameter binding.
///
/// Parameters enter the graph as leaves the first time they are referenced,
/// so gradients cover exactly the parameters the forward pass touched;
/// [`Session::gradients`] fills in zeros for the rest.
pub struct Session<'p, T: Real> {
    pub graph: Graph<T>,
    params: &'p ParameterSet<T>,
    bound: BTreeMap<String, NodeId>,
}

impl<'p, T: Real> Session<'p, T> {
    pub fn new(params: &'p ParameterSet<T>) -> Self {
        Session {
            graph: Graph::new(),
            params,
            bound: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &ParameterSet<T> {
        self.params
    }

    /// NodeId of a named parameter, inserting it as a leaf on first use.
    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.bound.get(name) {
            return Ok(id);
        }
        let tensor = self.params.get(name)?.clone();
        let id = self.graph.leaf(tensor)?;
        self.bound.insert(name.to_string(), id);
        Ok(id)
    }

    /// Insert input data or a mask; receives no gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Result<NodeId> {
        self.graph.constant(tensor)
    }

    /// d(loss)/d(param) for every parameter in the set; parameters the loss
    /// does not depend on get zero gradients.
    pub fn gradients(&self, loss: NodeId) -> Result<BTreeMap<String, Tensor<T>>> {
        let node_grads = self.graph.backward(loss)?;
        let mut out = BTreeMap::new();
        for (name, tensor) in self.params.iter() {
            let grad = self
                .bound
                .get(name)
                .and_then(|id| node_grads[id.0].clone())
                .unwrap_or_else(|| Tensor::zeros(tensor.shape()));
            if !grad.is_finite() {
                return Err(Error::non_finite("gradient"));
            }
            out.insert(name.clone(), grad);
        }
        Ok(out)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: BTreeMap<String, Tensor<T>>,
    v: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Default for Adam<T> {
    fn default() -> Self {
        Adam::new()
    }
}

impl<T: Real> Adam<T> {
    pub fn new() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update. `step` is 1-based and drives bias correction.
    pub fn step(
        &mut self,
        params: &mut ParameterSet<T>,
        grads: &BTreeMap<String, Tensor<T>>,
        lr: f64,
        step: u64,
    ) -> Result<()> {
        if step == 0 {
            return Err(Error::invalid("optimizer step counter is 1-based"));
        }
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let eps = T::from_f64(self.eps);
        let corr1 = T::from_f64(1.0 - self.beta1.powi(step as i32));
        let corr2 = T::from_f64(1.0 - self.beta2.powi(step as i32));
        let lr = T::from_f64(lr);
        for (name, grad) in grads {
            let param = params.get_mut(name)?;
            if grad.shape() != param.shape() {
                return Err(Error::shape(
                    "optimizer_step",
                    format!("grad {:?} vs param {:?} for {name:?}", grad.shape(), param.shape()),
                ));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            for i in 0..grad.len() {
                let g = grad.data()[i];
                let mi = b1 * m.data()[i] + (T::one() - b1) * g;
                let vi = b2 * v.data()[i] + (T::one() - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / corr1;
                let vhat = vi / corr2;
                param.data_mut()[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
            if !param.is_finite() {
                return Err(Error::non_finite("optimizer_step"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: &[f64]) -> ParameterSet<f64> {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::from_vec(&[value.len()], value.to_vec()).unwrap())
            .unwrap();
        p
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut params = one_param(&[1.5, -2.0]);
        let before = params.get("x").unwrap().clone();
        let mut adam = Adam::new();
        let grads: BTreeMap<_, _> = [("x".to_string(), Tensor::zeros(&[2]))].into();
        for step in 1..=10 {
            adam.step(&mut params, &grads, 0.1, step).unwrap();
        }
        assert_eq!(params.get("x").unwrap(), &before);
    }

    #[test]
    fn constant_gradient_moves_parameter_against_its_sign() {
        let mut params = one_param(&[0.0]);
        let mut adam = Adam::new();
        let grads: BTreeMap<_, _> = [(
            "x".to_string(),
            Tensor::from_vec(&[1], vec![0.7]).unwrap(),
        )]
        .into();
        for step in 1..=50 {
            adam.step(&mut params, &grads, 0.01, step).unwrap();
        }
        assert!(params.get("x").unwrap().data()[0] < 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // loss = (x - 3)^2, lr = 0.05, 500 steps
        let mut params = one_param(&[0.0]);
        let mut adam = Adam::new();
        for step in 1..=500 {
            let x = params.get("x").unwrap().data()[0];
            let grads: BTreeMap<_, _> = [(
                "x".to_string(),
                Tensor::from_vec(&[1], vec![2.0 * (x - 3.0)]).unwrap(),
            )]
            .into();
            adam.step(&mut params, &grads, 0.05, step).unwrap();
        }
        let x = params.get("x").unwrap().data()[0];
        assert!((x - 3.0).abs() < 0.05, "ended at {x}");
    }

    #[test]
    fn unknown_gradient_key_is_rejected() {
        let mut params = one_param(&[0.0]);
        let mut adam = Adam::new();
        let grads: BTreeMap<_, _> = [("y".to_string(), Tensor::zeros(&[1]))].into();
        assert!(adam.step(&mut params, &grads, 0.1, 1).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = one_param(&[0.0, 1.0]);
        let mut adam = Adam::new();
        let grads: BTreeMap<_, _> = [("x".to_string(), Tensor::zeros(&[3]))].into();
        assert!(adam.step(&mut params, &grads, 0.1, 1).is_err());
    }
}
