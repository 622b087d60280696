use rand::Rng;

use crate::error::{Error, Result};

/// A named slice of the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter storage with a layout of named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    data: Vec<f64>,
    layout: Vec<ParamEntry>,
}

impl Params {
    pub(crate) fn builder() -> ParamsBuilder {
        ParamsBuilder::default()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn layout(&self) -> &[ParamEntry] {
        &self.layout
    }

    pub fn tensor(&self, index: usize) -> &[f64] {
        let e = &self.layout[index];
        &self.data[e.offset..e.offset + e.len()]
    }

    pub(crate) fn tensor_mut(&mut self, index: usize) -> &mut [f64] {
        let e = &self.layout[index];
        let (start, len) = (e.offset, e.len());
        &mut self.data[start..start + len]
    }

    /// Replaces all values, checking names and shapes against this layout.
    pub fn load_tensors(&mut self, tensors: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        if tensors.len() != self.layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                self.layout.len(),
                tensors.len()
            )));
        }
        for (entry, (name, shape, values)) in self.layout.iter().zip(tensors) {
            if &entry.name != name || &entry.shape != shape || values.len() != entry.len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name} {shape:?} does not match expected {} {:?}",
                    entry.name, entry.shape
                )));
            }
            self.data[entry.offset..entry.offset + entry.len()].copy_from_slice(values);
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.layout
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), e.shape.clone(), self.tensor(i).to_vec()))
            .collect()
    }

    pub(crate) fn fill_uniform<R: Rng + ?Sized>(&mut self, index: usize, bound: f64, rng: &mut R) {
        for v in self.tensor_mut(index) {
            *v = rng.random_range(-bound..=bound);
        }
    }
}

#[derive(Default)]
pub(crate) struct ParamsBuilder {
    len: usize,
    layout: Vec<ParamEntry>,
}

impl ParamsBuilder {
    /// Registers a tensor and returns its index.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let entry = ParamEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.len,
        };
        self.len += entry.len();
        self.layout.push(entry);
        self.layout.len() - 1
    }

    pub fn build(self) -> Params {
        Params {
            data: vec![0.0; self.len],
            layout: self.layout,
        }
    }
}
