use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DenseMatrix, LoraError, Result};

/// Standard deviation of the Gaussian initialization of `A`.
pub const INIT_STD: f64 = 0.02;

/// Trainable low-rank update `(alpha / r) * A B` for a frozen `d x k` weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    a: DenseMatrix,
    b: DenseMatrix,
    rank: usize,
    alpha: f64,
    dropout_rate: f64,
}

impl LoraAdapter {
    pub fn new(a: DenseMatrix, b: DenseMatrix, alpha: f64, dropout_rate: f64) -> Result<Self> {
        let rank = a.cols();
        if rank == 0 {
            return Err(LoraError::InvalidArgument("rank must be positive".into()));
        }
        if b.rows() != rank {
            return Err(LoraError::Shape(format!("A has {rank} columns but B has {} rows", b.rows())));
        }
        if rank > a.rows().min(b.cols()) {
            return Err(LoraError::InvalidArgument(format!(
                "rank {rank} exceeds min(d, k) = {}",
                a.rows().min(b.cols())
            )));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(LoraError::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(LoraError::InvalidArgument(format!("dropout rate must be in [0, 1), got {dropout_rate}")));
        }
        Ok(Self { a, b, rank, alpha, dropout_rate })
    }

    /// `A ~ N(0, 0.02^2)`, `B = 0`, so the initial update is exactly zero.
    pub fn init(d: usize, k: usize, rank: usize, alpha: f64, dropout_rate: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::new(DenseMatrix::gaussian(d, rank, INIT_STD, rng), DenseMatrix::zeros(rank, k), alpha, dropout_rate)
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub(crate) fn factors_mut(&mut self) -> (&mut DenseMatrix, &mut DenseMatrix) {
        (&mut self.a, &mut self.b)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// `alpha / r`.
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn delta(&self) -> DenseMatrix {
        self.a.matmul(&self.b).expect("factor shapes checked at construction").scale(self.scale())
    }
}

/// `W + (alpha / r) A B`; `W` is borrowed immutably and never modified.
pub fn lora_apply(w: &DenseMatrix, adapter: &LoraAdapter) -> Result<DenseMatrix> {
    if w.rows() != adapter.a.rows() || w.cols() != adapter.b.cols() {
        return Err(LoraError::Shape(format!(
            "W is {}x{} but adapter maps {}x{}",
            w.rows(),
            w.cols(),
            adapter.a.rows(),
            adapter.b.cols()
        )));
    }
    w.add_scaled(&adapter.a.matmul(&adapter.b)?, adapter.scale())
}

/// Independent adapters on several frozen weights (e.g. attention projections).
#[derive(Debug, Clone, Default)]
pub struct AdapterSet {
    pub placements: Vec<(String, DenseMatrix, LoraAdapter)>,
}

impl AdapterSet {
    pub fn push(&mut self, name: impl Into<String>, w: DenseMatrix, adapter: LoraAdapter) {
        self.placements.push((name.into(), w, adapter));
    }

    pub fn merged(&self) -> Result<Vec<(String, DenseMatrix)>> {
        self.placements.iter().map(|(name, w, a)| Ok((name.clone(), lora_apply(w, a)?))).collect()
    }
}
