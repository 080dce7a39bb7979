//! Graph goodness, its gradient, and the thresholded local loss.
//!
//! For the rows `j` in scope (all nodes, or only the virtual node) and
//! `d` activation columns:
//!
//! ```text
//! square-pool-mean:  g = (1/d) Σ_k pool_j(a_jk²)
//! pool-square-mean:  g = (1/d) Σ_k (pool_j a_jk)²
//! ```
//!
//! where `pool` is a sum or an arithmetic mean over the rows in scope.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{GffError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoodnessOrdering {
    #[serde(rename = "sq-pool-mean")]
    SquarePoolMean,
    #[serde(rename = "pool-sq-mean")]
    PoolSquareMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pooling {
    #[serde(rename = "add")]
    Additive,
    #[serde(rename = "mean")]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoodnessScope {
    AllNodes,
    /// Only the last row of each graph, which holds the virtual node.
    VirtualNodeOnly,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:path => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = GffError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($variant),)+
                    other => Err(GffError::Config(format!(
                        "unknown value {other:?}, expected one of: {}",
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

text_enum!(GoodnessOrdering {
    GoodnessOrdering::SquarePoolMean => "sq-pool-mean",
    GoodnessOrdering::PoolSquareMean => "pool-sq-mean",
});
text_enum!(Pooling {
    Pooling::Additive => "add",
    Pooling::Mean => "mean",
});
text_enum!(GoodnessScope {
    GoodnessScope::AllNodes => "all-nodes",
    GoodnessScope::VirtualNodeOnly => "virtual-node-only",
});

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessConfig {
    pub ordering: GoodnessOrdering,
    pub pooling: Pooling,
    pub scope: GoodnessScope,
    pub threshold: f64,
}

impl Default for GoodnessConfig {
    fn default() -> Self {
        Self {
            ordering: GoodnessOrdering::SquarePoolMean,
            pooling: Pooling::Additive,
            scope: GoodnessScope::AllNodes,
            threshold: 2.0,
        }
    }
}

impl GoodnessConfig {
    fn rows(&self, start: usize, end: usize) -> Result<(usize, usize)> {
        if end <= start {
            return Err(GffError::Domain("goodness over an empty node set".into()));
        }
        Ok(match self.scope {
            GoodnessScope::AllNodes => (start, end),
            GoodnessScope::VirtualNodeOnly => (end - 1, end),
        })
    }

    fn pool_scale(&self, n: usize) -> f64 {
        match self.pooling {
            Pooling::Additive => 1.0,
            Pooling::Mean => 1.0 / n as f64,
        }
    }
}

fn segment_goodness(a: ArrayView2<'_, f64>, lo: usize, hi: usize, cfg: &GoodnessConfig) -> f64 {
    let d = a.ncols();
    let scale = cfg.pool_scale(hi - lo);
    let mut total = 0.0;
    for k in 0..d {
        let col = a.column(k);
        let term = match cfg.ordering {
            GoodnessOrdering::SquarePoolMean => {
                let mut s = 0.0;
                for j in lo..hi {
                    s += col[j] * col[j];
                }
                s * scale
            }
            GoodnessOrdering::PoolSquareMean => {
                let mut s = 0.0;
                for j in lo..hi {
                    s += col[j];
                }
                let p = s * scale;
                p * p
            }
        };
        total += term;
    }
    total / d as f64
}

fn segment_grad(
    a: ArrayView2<'_, f64>,
    lo: usize,
    hi: usize,
    cfg: &GoodnessConfig,
    weight: f64,
    out: &mut Array2<f64>,
) {
    let d = a.ncols();
    let scale = cfg.pool_scale(hi - lo);
    let c = weight * 2.0 * scale / d as f64;
    match cfg.ordering {
        GoodnessOrdering::SquarePoolMean => {
            for j in lo..hi {
                for k in 0..d {
                    out[[j, k]] += c * a[[j, k]];
                }
            }
        }
        GoodnessOrdering::PoolSquareMean => {
            for k in 0..d {
                let p: f64 = (lo..hi).map(|j| a[[j, k]]).sum::<f64>() * scale;
                for j in lo..hi {
                    out[[j, k]] += c * p;
                }
            }
        }
    }
}

/// Goodness of one graph's activation matrix.
pub fn goodness(a: ArrayView2<'_, f64>, cfg: &GoodnessConfig) -> Result<f64> {
    let (lo, hi) = cfg.rows(0, a.nrows())?;
    Ok(segment_goodness(a, lo, hi, cfg))
}

pub fn goodness_grad(a: ArrayView2<'_, f64>, cfg: &GoodnessConfig) -> Result<Array2<f64>> {
    let (lo, hi) = cfg.rows(0, a.nrows())?;
    let mut out = Array2::zeros(a.raw_dim());
    segment_grad(a, lo, hi, cfg, 1.0, &mut out);
    Ok(out)
}

/// Goodness of every graph in a batch; `offsets` delimit graph rows.
pub fn batch_goodness(
    a: ArrayView2<'_, f64>,
    offsets: &[usize],
    cfg: &GoodnessConfig,
) -> Result<Vec<f64>> {
    offsets
        .windows(2)
        .map(|w| {
            let (lo, hi) = cfg.rows(w[0], w[1])?;
            Ok(segment_goodness(a, lo, hi, cfg))
        })
        .collect()
}

/// `Σ_g weights[g] · ∂g_g/∂A`.
pub fn batch_goodness_backward(
    a: ArrayView2<'_, f64>,
    offsets: &[usize],
    cfg: &GoodnessConfig,
    weights: &[f64],
) -> Result<Array2<f64>> {
    if weights.len() + 1 != offsets.len() {
        return Err(GffError::Shape(format!(
            "{} weights for {} graphs",
            weights.len(),
            offsets.len().saturating_sub(1)
        )));
    }
    let mut out = Array2::zeros(a.raw_dim());
    for (w, &weight) in offsets.windows(2).zip(weights) {
        let (lo, hi) = cfg.rows(w[0], w[1])?;
        segment_grad(a, lo, hi, cfg, weight, &mut out);
    }
    Ok(out)
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Returns `(loss, dloss/dg)`: `softplus(T - g)` for positive samples,
/// `softplus(g - T)` for negative ones.
pub fn local_loss(g: f64, positive: bool, threshold: f64) -> (f64, f64) {
    if positive {
        let x = threshold - g;
        (softplus(x), -sigmoid(x))
    } else {
        let x = g - threshold;
        (softplus(x), sigmoid(x))
    }
}
