use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A parameter value together with its gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub momentum: Matrix,
}

impl Param {
    fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Matrix::zeros(r, c),
            momentum: Matrix::zeros(r, c),
        }
    }
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "parameter `{name}` already exists"
            )));
        }
        self.entries.insert(name, Param::new(value));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Matrix> {
        Ok(&self.get(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix> {
        Ok(&self.get(name)?.grad)
    }

    /// Replaces a value, keeping the shape fixed.
    pub fn set_value(&mut self, name: &str, value: Matrix) -> Result<()> {
        let p = self.get_mut(name)?;
        if p.value.shape() != value.shape() {
            return Err(Error::DimensionMismatch {
                op: "set_value",
                left: p.value.shape(),
                right: value.shape(),
            });
        }
        p.value = value;
        Ok(())
    }

    /// Adds `grad` into the gradient buffer of `name`.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Matrix) -> Result<()> {
        self.get_mut(name)?.grad.axpy(1.0, grad)
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            let (r, c) = p.value.shape();
            p.grad = Matrix::zeros(r, c);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries
            .values()
            .map(|p| p.value.rows() * p.value.cols())
            .sum()
    }

    /// True when both stores hold the same names with bit-identical values.
    pub fn values_equal(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().all(|(k, p)| {
                other.entries.get(k).is_some_and(|q| {
                    p.value.shape() == q.value.shape()
                        && p.value
                            .as_slice()
                            .iter()
                            .zip(q.value.as_slice())
                            .all(|(a, b)| a.to_bits() == b.to_bits())
                })
            })
    }
}
