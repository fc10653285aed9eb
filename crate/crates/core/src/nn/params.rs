use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Real;
use crate::error::{Error, Result};

/// Index of a parameter tensor inside a [`ParamLayout`] / [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Fan-in used for the uniform initialization bound.
    pub fan_in: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows/columns when viewed as a matrix: the last dimension is the column count.
    pub fn matrix_dims(&self) -> (usize, usize) {
        matrix_dims(&self.shape)
    }

    pub fn is_bias(&self) -> bool {
        self.shape.len() == 1
    }
}

pub(crate) fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    match shape.split_last() {
        None => (1, 1),
        Some((&cols, rest)) => (rest.iter().product(), cols),
    }
}

/// Ordered description of every trainable tensor of an architecture.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> ParamId {
        self.specs.push(ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            fan_in: fan_in.max(1),
        });
        ParamId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total_count(&self) -> usize {
        self.specs.iter().map(ParamSpec::len).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }
}

/// Named parameter tensors with a stable flat ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    layout: ParamLayout,
    data: Vec<Vec<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn zeros(layout: &ParamLayout) -> Self {
        let data = layout.specs.iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self {
            layout: layout.clone(),
            data,
        }
    }

    /// Draws every entry from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init(layout: &ParamLayout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = layout
            .specs
            .iter()
            .map(|s| {
                let bound = 1.0 / (s.fan_in as f64).sqrt();
                (0..s.len())
                    .map(|_| T::from_f64_lossy(rng.gen_range(-bound..=bound)))
                    .collect()
            })
            .collect();
        Self {
            layout: layout.clone(),
            data,
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn total_count(&self) -> usize {
        self.layout.total_count()
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.layout.specs[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.data[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&[T]> {
        self.layout.find(name).map(|id| self.get(id))
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&ParamSpec, &[T])> {
        self.layout.specs.iter().zip(self.data.iter().map(Vec::as_slice))
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.total_count());
        for d in &self.data {
            out.extend_from_slice(d);
        }
        out
    }

    pub fn from_flat(layout: &ParamLayout, flat: &[T]) -> Result<Self> {
        if flat.len() != layout.total_count() {
            return Err(Error::ShapeMismatch {
                op: "ParamStore::from_flat",
                left: vec![flat.len()],
                right: vec![layout.total_count()],
            });
        }
        let mut offset = 0;
        let data = layout
            .specs
            .iter()
            .map(|s| {
                let chunk = flat[offset..offset + s.len()].to_vec();
                offset += s.len();
                chunk
            })
            .collect();
        Ok(Self {
            layout: layout.clone(),
            data,
        })
    }

    /// Flat index of the first scalar of tensor `id`.
    pub fn offset_of(&self, id: ParamId) -> usize {
        self.layout.specs[..id.0].iter().map(ParamSpec::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            layout: self.layout.clone(),
            data: self
                .data
                .iter()
                .map(|d| d.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect())
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }
}
