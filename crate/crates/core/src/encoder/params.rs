use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Matrix, NodeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
}

/// Named parameter matrices in a fixed order; the order defines gradient slots.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        let name = name.into();
        assert!(self.slot(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.params.iter_mut().map(|p| &mut p.value)
    }

    pub fn by_slot(&self, slot: usize) -> &Matrix {
        &self.params[slot].value
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Places every parameter on the tape as a gradient-tracked leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            nodes: self
                .params
                .iter()
                .enumerate()
                .map(|(slot, p)| (p.name.clone(), g.param(slot, p.value.clone())))
                .collect(),
        }
    }
}

/// Tape nodes for a [`ParamStore`], looked up by name.
#[derive(Debug, Clone)]
pub struct Bound {
    nodes: Vec<(String, NodeId)>,
}

impl Bound {
    pub fn node(&self, name: &str) -> NodeId {
        self.nodes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }
}

pub(crate) fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect(),
    }
}

pub(crate) fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
    }
}

pub(crate) fn filled(rows: usize, cols: usize, v: f64) -> Matrix {
    Matrix {
        rows,
        cols,
        data: vec![v; rows * cols],
    }
}
