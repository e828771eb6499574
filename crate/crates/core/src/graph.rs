//! Metric-graph model of a coaxial-cable network.
//!
//! Vertices are 0-based internally. Bonds are stored with `n < m`. Leads are
//! numbered by their position in `lead_vertices`.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::Wavenumber;

/// A series segment inside a bond with its own refractive index, such as a
/// trombone phase shifter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineInsert {
    pub length: f64,
    pub index: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub n: usize,
    pub m: usize,
    /// Cable length in meters, excluding any insert.
    pub length: f64,
    pub insert: Option<LineInsert>,
}

impl Bond {
    pub fn new(a: usize, b: usize, length: f64) -> Self {
        Bond {
            n: a.min(b),
            m: a.max(b),
            length,
            insert: None,
        }
    }

    pub fn with_insert(mut self, insert: LineInsert) -> Self {
        self.insert = Some(insert);
        self
    }

    pub fn total_length(&self) -> f64 {
        self.length + self.insert.map_or(0.0, |s| s.length)
    }

    /// Electrical phase `kL` accumulated over the whole bond. An insert
    /// contributes with its own wavenumber `k * n_insert / n_cable`.
    pub fn phase(&self, k: Wavenumber, cable_index: Complex64) -> Complex64 {
        self.phase_at(k, cable_index, self.total_length())
    }

    /// Electrical phase accumulated from vertex `n` up to position `x`.
    /// The insert sits after the cable section.
    pub fn phase_at(&self, k: Wavenumber, cable_index: Complex64, x: f64) -> Complex64 {
        let k = k.value();
        match self.insert {
            Some(ins) if x > self.length => {
                k * self.length + insert_wavenumber(k, cable_index, ins.index) * (x - self.length)
            }
            _ => k * x,
        }
    }
}

pub(crate) fn insert_wavenumber(k: Complex64, cable_index: Complex64, insert_index: Complex64) -> Complex64 {
    k * insert_index / cable_index
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertex_count: usize,
    bonds: Vec<Bond>,
    lead_vertices: Vec<usize>,
    refractive_index: Complex64,
    pair_index: HashMap<(usize, usize), usize>,
    vertex_lead: Vec<Option<usize>>,
}

impl MetricGraph {
    pub fn new(
        vertex_count: usize,
        bonds: Vec<Bond>,
        lead_vertices: Vec<usize>,
        refractive_index: Complex64,
    ) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        if !refractive_index.re.is_finite()
            || !refractive_index.im.is_finite()
            || refractive_index == Complex64::new(0.0, 0.0)
        {
            return Err(Error::InvalidGraph(format!("bad refractive index {refractive_index}")));
        }
        let mut pair_index = HashMap::with_capacity(bonds.len());
        let mut degree = vec![0usize; vertex_count];
        let mut canonical = Vec::with_capacity(bonds.len());
        for (id, bond) in bonds.into_iter().enumerate() {
            let (n, m) = (bond.n.min(bond.m), bond.n.max(bond.m));
            if n == m {
                return Err(Error::InvalidGraph(format!("bond {id} is a self-loop at vertex {n}")));
            }
            if m >= vertex_count {
                return Err(Error::InvalidGraph(format!(
                    "bond {id} references vertex {m} but the graph has {vertex_count} vertices"
                )));
            }
            if !(bond.length > 0.0) || !bond.length.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "bond {id} ({n}-{m}) has non-positive length {}",
                    bond.length
                )));
            }
            if let Some(ins) = bond.insert {
                if !(ins.length > 0.0) || !ins.length.is_finite() {
                    return Err(Error::InvalidGraph(format!(
                        "bond {id} insert has length {}",
                        ins.length
                    )));
                }
            }
            if pair_index.insert((n, m), id).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "duplicate bond between vertices {n} and {m}"
                )));
            }
            degree[n] += 1;
            degree[m] += 1;
            canonical.push(Bond { n, m, ..bond });
        }
        let mut vertex_lead = vec![None; vertex_count];
        for (lead, &v) in lead_vertices.iter().enumerate() {
            if v >= vertex_count {
                return Err(Error::InvalidGraph(format!(
                    "lead {lead} attached to missing vertex {v}"
                )));
            }
            if vertex_lead[v].replace(lead).is_some() {
                return Err(Error::InvalidGraph(format!("vertex {v} carries more than one lead")));
            }
        }
        if let Some(v) = (0..vertex_count).find(|&v| degree[v] == 0 && vertex_lead[v].is_none()) {
            return Err(Error::IsolatedVertex(v));
        }
        Ok(MetricGraph {
            vertex_count,
            bonds: canonical,
            lead_vertices,
            refractive_index,
            pair_index,
            vertex_lead,
        })
    }

    /// Complete graph on `vertex_count` vertices with a lead on every vertex and
    /// lengths drawn uniformly from `[mean - spread, mean + spread]`.
    pub fn fully_connected<R: Rng + ?Sized>(
        vertex_count: usize,
        mean_length: f64,
        spread: f64,
        refractive_index: Complex64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut bonds = Vec::with_capacity(vertex_count * vertex_count.saturating_sub(1) / 2);
        for n in 0..vertex_count {
            for m in n + 1..vertex_count {
                let length = if spread > 0.0 {
                    rng.random_range(mean_length - spread..=mean_length + spread)
                } else {
                    mean_length
                };
                bonds.push(Bond::new(n, m, length));
            }
        }
        MetricGraph::new(vertex_count, bonds, (0..vertex_count).collect(), refractive_index)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, id: usize) -> &Bond {
        &self.bonds[id]
    }

    pub fn lead_vertices(&self) -> &[usize] {
        &self.lead_vertices
    }

    pub fn lead_count(&self) -> usize {
        self.lead_vertices.len()
    }

    pub fn lead_vertex(&self, lead: usize) -> usize {
        self.lead_vertices[lead]
    }

    /// Lead attached at `vertex`, if any.
    pub fn lead_at(&self, vertex: usize) -> Option<usize> {
        self.vertex_lead.get(vertex).copied().flatten()
    }

    pub fn refractive_index(&self) -> Complex64 {
        self.refractive_index
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.pair_index.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn set_bond_length(&mut self, id: usize, length: f64) -> Result<()> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGraph(format!(
                "bond {id} length {length} must be positive"
            )));
        }
        self.bonds[id].length = length;
        Ok(())
    }

    pub fn set_insert_length(&mut self, id: usize, length: f64) -> Result<()> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGraph(format!(
                "bond {id} insert length {length} must be positive"
            )));
        }
        match self.bonds[id].insert.as_mut() {
            Some(ins) => {
                ins.length = length;
                Ok(())
            }
            None => Err(Error::InvalidGraph(format!("bond {id} has no insert"))),
        }
    }
}
