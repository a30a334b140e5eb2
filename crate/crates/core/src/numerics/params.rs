use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named weight with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            trainable,
        }
    }
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Insertion-ordered named parameters. Names are dotted paths whose first
/// segment is the parameter group (`patch_encoder`, `slide_encoder`,
/// `projector`, `lm`).
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: IndexMap<String, Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        let (idx, old) = self.params.insert_full(name.clone(), Parameter::new(value, trainable));
        assert!(old.is_none(), "duplicate parameter name {name}");
        ParamId(idx)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.get_index_of(name).map(ParamId)
    }

    pub fn expect_id(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::usage(format!("no parameter named {name}")))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.params.get_index(id.0).map(|(k, _)| k.as_str()).unwrap_or("")
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Marks every parameter trainable iff its group is in `groups`.
    pub fn set_trainable_groups(&mut self, groups: &[&str]) {
        for (name, p) in self.params.iter_mut() {
            p.trainable = groups.contains(&group_of(name));
        }
    }

    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for name in self.params.keys() {
            let g = group_of(name);
            if !out.iter().any(|x| x == g) {
                out.push(g.to_string());
            }
        }
        out
    }

    pub fn has_group(&self, group: &str) -> bool {
        self.params.keys().any(|n| group_of(n) == group)
    }

    /// SHA-256 over names, shapes and value bits of one group.
    pub fn group_checksum(&self, group: &str) -> String {
        let mut h = Sha256::new();
        for (name, p) in self.params.iter().filter(|(n, _)| group_of(n) == group) {
            h.update(name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }
}

pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_and_checksums() {
        let mut s = ParamStore::new();
        s.insert("lm.w", Tensor::zeros(&[2, 2]), true);
        s.insert("projector.w", Tensor::zeros(&[2]), true);
        assert_eq!(s.groups(), vec!["lm", "projector"]);
        let before = s.group_checksum("lm");
        s.get_mut(ParamId(0)).value.data_mut()[0] = 1.0;
        assert_ne!(before, s.group_checksum("lm"));
        s.set_trainable_groups(&["projector"]);
        assert!(!s.by_name("lm.w").unwrap().trainable);
        assert!(s.by_name("projector.w").unwrap().trainable);
    }
}
