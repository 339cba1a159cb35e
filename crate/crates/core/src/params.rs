//! Named parameter storage and the Adam optimiser.
//!
//! Parameter names are dotted paths; the first component is the checkpoint
//! segment (`encoder`, `imputer`, `trajectory_encoder`, `importance`,
//! `fusion`, `mlps`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Segment of a parameter: the part of its name before the first dot.
    pub fn segment(&self, id: ParamId) -> &str {
        let name = &self.names[id.0];
        name.split('.').next().unwrap_or(name)
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Parameters grouped by segment, in name order within each segment.
    pub fn segments(&self) -> BTreeMap<String, BTreeMap<String, Tensor>> {
        let mut out: BTreeMap<String, BTreeMap<String, Tensor>> = BTreeMap::new();
        for id in self.ids() {
            out.entry(self.segment(id).to_string())
                .or_default()
                .insert(self.names[id.0].clone(), self.values[id.0].clone());
        }
        out
    }

    /// Overwrite values from segment maps. Every parameter must be present
    /// with the same shape.
    pub fn load_segments(
        &mut self,
        segments: &BTreeMap<String, BTreeMap<String, Tensor>>,
    ) -> Result<(), String> {
        for id in self.ids().collect::<Vec<_>>() {
            let seg = self.segment(id).to_string();
            let name = self.names[id.0].clone();
            let value = segments
                .get(&seg)
                .and_then(|s| s.get(&name))
                .ok_or_else(|| format!("missing parameter {name}"))?;
            if value.shape() != self.values[id.0].shape() {
                return Err(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    self.values[id.0].shape()
                ));
            }
            self.values[id.0] = value.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    steps: Vec<u64>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Self {
            config,
            steps: vec![0; store.len()],
            first: store.values.iter().map(|v| Tensor::zeros(v.rows(), v.cols())).collect(),
            second: store.values.iter().map(|v| Tensor::zeros(v.rows(), v.cols())).collect(),
        }
    }

    /// Apply one update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, &Tensor)]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        for &(id, g) in grads {
            let i = id.0;
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let w = store.values[i].data_mut();
            for (((w, m), v), &g) in w.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
