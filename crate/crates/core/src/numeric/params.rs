use serde::{Deserialize, Serialize};

use super::{Real, Tensor};

/// Learning-rate group of a parameter tensor.
///
/// The encoder stack and the parsing head are tuned with separate rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Encoder,
    Decoder,
}

/// One learning rate per group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub encoder: Real,
    pub decoder: Real,
}

impl GroupRates {
    pub fn uniform(lr: Real) -> Self {
        GroupRates { encoder: lr, decoder: lr }
    }

    pub fn rate(&self, group: ParamGroup) -> Real {
        match group {
            ParamGroup::Encoder => self.encoder,
            ParamGroup::Decoder => self.decoder,
        }
    }

    pub fn scaled(&self, factor: Real) -> Self {
        GroupRates {
            encoder: self.encoder * factor,
            decoder: self.decoder * factor,
        }
    }

    pub fn per_tensor(&self, groups: &[ParamGroup]) -> Vec<Real> {
        groups.iter().map(|&g| self.rate(g)).collect()
    }
}

/// Named tensors with their learning-rate groups, in a fixed order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    groups: Vec<ParamGroup>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: &str, group: ParamGroup, tensor: Tensor) -> usize {
        self.names.push(name.to_string());
        self.groups.push(group);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// FNV-1a over the bit patterns of every value, for cheap identity checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.tensors {
            for v in t.data() {
                for b in v.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}
