//! GCN and relation-typed GCN layers: forward pass, weight gradient and
//! inter-layer row normalization.
//!
//! A layer computes `Z = Σ_r S_r · X · Θ_r` and `A = max(Z, 0)`. Plain GCN
//! has the single relation `Regular`, whose propagation matrix holds the
//! self-loops. No biases.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{GffError, Result};
use crate::graph::NormAdjacency;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Regular,
    /// Original node to virtual node.
    ToVirtual,
    /// Virtual node to original node.
    FromVirtual,
}

impl Relation {
    pub const ALL: [Relation; 3] = [
        Relation::Regular,
        Relation::ToVirtual,
        Relation::FromVirtual,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One propagation matrix per [`Relation`], all over the same node set.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalAdjacency {
    by_relation: [NormAdjacency; 3],
}

impl RelationalAdjacency {
    pub fn new(by_relation: [NormAdjacency; 3]) -> Self {
        Self { by_relation }
    }

    pub fn get(&self, r: Relation) -> &NormAdjacency {
        &self.by_relation[r.index()]
    }

    pub fn num_nodes(&self) -> usize {
        self.by_relation[0].num_nodes()
    }

    pub fn block_diag(parts: &[RelationalAdjacency]) -> Self {
        Self {
            by_relation: Relation::ALL
                .map(|r| NormAdjacency::block_diag(parts.iter().map(|p| p.get(r)))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageGraph {
    Plain(NormAdjacency),
    Relational(RelationalAdjacency),
}

impl MessageGraph {
    pub fn num_nodes(&self) -> usize {
        match self {
            MessageGraph::Plain(a) => a.num_nodes(),
            MessageGraph::Relational(r) => r.num_nodes(),
        }
    }

    pub fn relation(&self, r: Relation) -> Option<&NormAdjacency> {
        match (self, r) {
            (MessageGraph::Plain(a), Relation::Regular) => Some(a),
            (MessageGraph::Plain(_), _) => None,
            (MessageGraph::Relational(rel), r) => Some(rel.get(r)),
        }
    }

    pub fn relation_count(&self) -> usize {
        match self {
            MessageGraph::Plain(_) => 1,
            MessageGraph::Relational(_) => 3,
        }
    }

    /// `S_r · X` for every relation the graph carries.
    pub fn propagate_all(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        match self {
            MessageGraph::Plain(a) => Ok(vec![a.propagate(x)?]),
            MessageGraph::Relational(rel) => Relation::ALL
                .iter()
                .map(|&r| rel.get(r).propagate(x))
                .collect(),
        }
    }
}

/// Weight matrices `d_in × d_out`, one per relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<Array2<f64>>,
}

impl LayerParams {
    pub fn new(weights: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = weights.first() else {
            return Err(GffError::Shape("layer without weights".into()));
        };
        if weights.len() != 1 && weights.len() != 3 {
            return Err(GffError::Shape(format!(
                "{} weight matrices, expected 1 or 3",
                weights.len()
            )));
        }
        if weights.iter().any(|w| w.dim() != first.dim()) {
            return Err(GffError::Shape("relation weights differ in shape".into()));
        }
        Ok(Self { weights })
    }

    pub fn zeros(d_in: usize, d_out: usize, relations: usize) -> Self {
        Self {
            weights: vec![Array2::zeros((d_in, d_out)); relations],
        }
    }

    /// Uniform in `±sqrt(6 / (d_in + d_out))`, row-major draw order.
    pub fn glorot(d_in: usize, d_out: usize, relations: usize, rng: &mut SplitMix64) -> Self {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let weights = (0..relations)
            .map(|_| Array2::from_shape_simple_fn((d_in, d_out), || rng.uniform(-bound, bound)))
            .collect();
        Self { weights }
    }

    pub fn d_in(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn relations(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
    }

    pub fn num_values(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub z: Array2<f64>,
    pub a: Array2<f64>,
    pub layer: usize,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn check_input(p: &LayerParams, x: ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != p.d_in() {
        return Err(GffError::Shape(format!(
            "input width {} does not match layer input {}",
            x.ncols(),
            p.d_in()
        )));
    }
    Ok(())
}

/// `Z = Σ_r (S_r X) Θ_r` from precomputed propagated inputs.
pub fn combine(p: &LayerParams, propagated: &[Array2<f64>]) -> Result<Array2<f64>> {
    if propagated.len() > p.relations() {
        return Err(GffError::Shape(format!(
            "graph has {} relations, layer has weights for {}",
            propagated.len(),
            p.relations()
        )));
    }
    let mut z = propagated[0].dot(&p.weights[0]);
    for (sx, w) in propagated.iter().zip(&p.weights).skip(1) {
        z += &sx.dot(w);
    }
    Ok(z)
}

pub fn forward(
    p: &LayerParams,
    msg: &MessageGraph,
    x: ArrayView2<'_, f64>,
) -> Result<LayerActivations> {
    check_input(p, x)?;
    let z = combine(p, &msg.propagate_all(x)?)?;
    let a = relu(&z);
    Ok(LayerActivations { z, a, layer: 0 })
}

pub fn gcn_forward(
    p: &LayerParams,
    adj: &NormAdjacency,
    x: ArrayView2<'_, f64>,
) -> Result<LayerActivations> {
    check_input(p, x)?;
    let z = adj.propagate(x)?.dot(&p.weights[0]);
    let a = relu(&z);
    Ok(LayerActivations { z, a, layer: 0 })
}

pub fn rgcn_forward(
    p: &LayerParams,
    adj: &RelationalAdjacency,
    x: ArrayView2<'_, f64>,
) -> Result<LayerActivations> {
    if p.relations() != 3 {
        return Err(GffError::Shape(format!(
            "relational layer needs 3 weight matrices, has {}",
            p.relations()
        )));
    }
    check_input(p, x)?;
    let propagated: Vec<Array2<f64>> = Relation::ALL
        .iter()
        .map(|&r| adj.get(r).propagate(x))
        .collect::<Result<_>>()?;
    let z = combine(p, &propagated)?;
    let a = relu(&z);
    Ok(LayerActivations { z, a, layer: 0 })
}

/// Divides each row by its Euclidean norm; zero rows pass through.
pub fn row_l2_normalize(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// `dL/dZ = dL/dA ⊙ 1[Z > 0]`.
pub fn rectifier_backward(dl_da: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut g = dl_da.to_owned();
    Zip::from(&mut g).and(z).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    g
}

/// `∂L/∂Θ_r = (S_r X)ᵀ · (dL/dA ⊙ 1[Z > 0])` from precomputed `S_r X`.
pub fn weight_grad_from_propagated(
    propagated: &[Array2<f64>],
    dl_da: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    relations: usize,
) -> Result<Vec<Array2<f64>>> {
    if dl_da.dim() != z.dim() {
        return Err(GffError::Shape(format!(
            "dL/dA has shape {:?}, Z has {:?}",
            dl_da.dim(),
            z.dim()
        )));
    }
    let dz = rectifier_backward(dl_da, z);
    let d_in = propagated[0].ncols();
    let mut grads: Vec<Array2<f64>> = propagated.iter().map(|sx| sx.t().dot(&dz)).collect();
    grads.resize(relations, Array2::zeros((d_in, dz.ncols())));
    Ok(grads)
}

pub fn layer_weight_grad(
    p: &LayerParams,
    msg: &MessageGraph,
    x: ArrayView2<'_, f64>,
    dl_da: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
) -> Result<Vec<Array2<f64>>> {
    check_input(p, x)?;
    if z.dim() != (msg.num_nodes(), p.d_out()) {
        return Err(GffError::Shape(format!(
            "Z has shape {:?}, expected ({}, {})",
            z.dim(),
            msg.num_nodes(),
            p.d_out()
        )));
    }
    weight_grad_from_propagated(&msg.propagate_all(x)?, dl_da, z, p.relations())
}
