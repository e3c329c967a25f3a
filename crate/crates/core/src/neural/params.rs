//! Flat parameter vector over a set of networks and scalars, with a stable
//! name → range index map.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    blocks: Vec<(String, Range<usize>)>,
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVector {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Append a named block; returns its id. Block order is the index map.
    pub fn push_block(&mut self, name: &str, values: &[f64]) -> usize {
        let start = self.values.len();
        self.values.extend_from_slice(values);
        self.blocks.push((name.to_string(), start..self.values.len()));
        self.blocks.len() - 1
    }

    pub fn block_range(&self, id: usize) -> Range<usize> {
        self.blocks[id].1.clone()
    }

    pub fn block(&self, id: usize) -> &[f64] {
        &self.values[self.blocks[id].1.clone()]
    }

    pub fn block_by_name(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| &self.values[r.clone()])
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_block(&mut self, id: usize, values: &[f64]) {
        let range = self.blocks[id].1.clone();
        assert_eq!(values.len(), range.len(), "block length mismatch");
        self.values[range].copy_from_slice(values);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
