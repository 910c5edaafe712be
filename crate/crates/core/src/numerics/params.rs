use std::collections::{BTreeMap, HashMap};

use crate::error::{AdiosError, Result};
use crate::numerics::real::Real;
use crate::numerics::tape::{Gradients, Tape, Var};
use crate::numerics::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real> {
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Named parameters, iterated in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    entries: BTreeMap<String, Param<T>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self { entries: BTreeMap::new() }
    }
}

/// How a [`ParamSet`] enters a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    /// Trainable parameters become leaves, frozen ones constants.
    Train,
    /// Everything enters as a constant (no gradient).
    Frozen,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) {
        self.entries.insert(name.into(), Param { tensor, trainable });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|p| &p.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(name).map(|p| &mut p.tensor)
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.tensor.numel()).sum()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in self.entries.values_mut() {
            p.trainable = trainable;
        }
    }

    /// Entries whose name starts with `prefix`, keeping full names.
    pub fn filter_prefix(&self, prefix: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Prepends `prefix` to every name.
    pub fn prefixed(&self, prefix: &str) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (format!("{prefix}{k}"), v.clone())).collect(),
        }
    }

    /// Strips `prefix` from matching names, dropping the rest.
    pub fn strip_prefix(&self, prefix: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamSet<T>) {
        self.entries.extend(other.entries);
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| {
                    (k.clone(), Param { tensor: Tensor::zeros(v.tensor.shape()), trainable: v.trainable })
                })
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Param { tensor: v.tensor.cast(), trainable: v.trainable }))
                .collect(),
        }
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_aligned(&self, other: &ParamSet<T>, what: &str) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(AdiosError::Config(format!(
                "{what}: {} parameters vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb {
                return Err(AdiosError::Config(format!("{what}: name {ka} vs {kb}")));
            }
            if va.tensor.shape() != vb.tensor.shape() {
                return Err(AdiosError::Config(format!(
                    "{what}: {ka} shape {:?} vs {:?}",
                    va.tensor.shape(),
                    vb.tensor.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn bind<'t>(&self, tape: &'t Tape<T>, binding: Binding) -> Bound<'t, T> {
        let vars = self
            .entries
            .iter()
            .map(|(k, p)| {
                let v = if binding == Binding::Train && p.trainable {
                    tape.leaf(p.tensor.clone())
                } else {
                    tape.constant(p.tensor.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }
}

/// A [`ParamSet`] recorded on a tape.
pub struct Bound<'t, T: Real> {
    vars: HashMap<String, Var<'t, T>>,
}

impl<'t, T: Real> Bound<'t, T> {
    /// Looks up a bound parameter. Missing names are a programming error.
    pub fn get(&self, name: &str) -> Var<'t, T> {
        *self.vars.get(name).unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    /// Gradients of the trainable parameters, zero where unused.
    pub fn grads(&self, grads: &Gradients<T>) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (k, v) in &self.vars {
            if v.requires_grad() {
                out.insert(k.clone(), grads.get_or_zero(*v), true);
            }
        }
        out
    }
}
