use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{log_softmax, softmax_into};
use super::{DenseMatrix, LoraAdapter, LoraError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub k: usize,
    pub vocab: usize,
}

/// Next-token model `logits = (E[x] W + (alpha/r) (E[x] * m) A B) H`.
///
/// The embedding `E`, the adapted weight `W` and the output head `H` are
/// frozen; only the adapter factors are trainable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLm {
    embedding: DenseMatrix,
    base: DenseMatrix,
    head: DenseMatrix,
    adapter: LoraAdapter,
}

/// Gradients of the loss with respect to the adapter factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraGradients {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
}

impl LoraGradients {
    pub fn global_norm(&self) -> f64 {
        (self.a.frobenius_sq() + self.b.frobenius_sq()).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.a.data_mut().iter_mut().chain(self.b.data_mut()).for_each(|g| *g *= s);
    }
}

/// Per-position multipliers on the adapter input: `0` or `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    rows: Vec<Vec<f64>>,
}

impl DropoutMask {
    pub fn sample(positions: usize, width: usize, rate: f64, rng: &mut impl Rng) -> Self {
        if rate == 0.0 {
            return Self { rows: vec![vec![1.0; width]; positions] };
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let rows = (0..positions)
            .map(|_| bernoulli_keep(width, rate, rng).into_iter().map(|k| if k { keep_scale } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// `n` independent keep decisions with drop probability `rate`.
pub fn bernoulli_keep(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<bool> {
    (0..n).map(|_| rate == 0.0 || rng.random::<f64>() >= rate).collect()
}

/// (context, target) pairs of consecutive tokens.
pub fn positions(batch: &[Vec<usize>]) -> Vec<(usize, usize)> {
    batch.iter().flat_map(|seq| seq.windows(2).map(|w| (w[0], w[1]))).collect()
}

impl ToyLm {
    pub fn new(embedding: DenseMatrix, base: DenseMatrix, head: DenseMatrix, adapter: LoraAdapter) -> Result<Self> {
        let (v, d) = (embedding.rows(), embedding.cols());
        if base.rows() != d {
            return Err(LoraError::Shape(format!("embedding width {d} but W has {} rows", base.rows())));
        }
        let k = base.cols();
        if head.rows() != k || head.cols() != v {
            return Err(LoraError::Shape(format!("head must be {k}x{v}, got {}x{}", head.rows(), head.cols())));
        }
        if adapter.a().rows() != d || adapter.b().cols() != k {
            return Err(LoraError::Shape(format!(
                "adapter maps {}x{} but W is {d}x{k}",
                adapter.a().rows(),
                adapter.b().cols()
            )));
        }
        Ok(Self { embedding, base, head, adapter })
    }

    /// Random frozen weights scaled so logits start O(1), plus a fresh adapter.
    pub fn random(dims: ModelDims, rank: usize, alpha: f64, dropout: f64, rng: &mut impl Rng) -> Result<Self> {
        let ModelDims { d, k, vocab } = dims;
        if d == 0 || k == 0 || vocab == 0 {
            return Err(LoraError::InvalidArgument("model dims must be positive".into()));
        }
        let embedding = DenseMatrix::gaussian(vocab, d, 1.0, rng);
        let base = DenseMatrix::gaussian(d, k, 1.0 / (d as f64).sqrt(), rng);
        let head = DenseMatrix::gaussian(k, vocab, 1.0 / (k as f64).sqrt(), rng);
        let adapter = LoraAdapter::init(d, k, rank, alpha, dropout, rng)?;
        Self::new(embedding, base, head, adapter)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims { d: self.base.rows(), k: self.base.cols(), vocab: self.embedding.rows() }
    }

    pub fn embedding(&self) -> &DenseMatrix {
        &self.embedding
    }

    pub fn base(&self) -> &DenseMatrix {
        &self.base
    }

    pub fn head(&self) -> &DenseMatrix {
        &self.head
    }

    pub fn adapter(&self) -> &LoraAdapter {
        &self.adapter
    }

    pub fn adapter_mut(&mut self) -> &mut LoraAdapter {
        &mut self.adapter
    }

    fn check_batch(&self, batch: &[Vec<usize>], mask: Option<&DropoutMask>) -> Result<Vec<(usize, usize)>> {
        let pos = positions(batch);
        if pos.is_empty() {
            return Err(LoraError::EmptyInput("batch has no next-token positions".into()));
        }
        let vocab = self.embedding.rows();
        for &(x, y) in &pos {
            for t in [x, y] {
                if t >= vocab {
                    return Err(LoraError::Index { target: t, vocab });
                }
            }
        }
        if let Some(m) = mask {
            if m.rows.len() != pos.len() || m.rows.iter().any(|r| r.len() != self.base.rows()) {
                return Err(LoraError::Shape("dropout mask does not match batch".into()));
            }
        }
        Ok(pos)
    }

    pub fn logits(&self, token: usize, mask_row: Option<&[f64]>) -> Vec<f64> {
        let mut scratch = Scratch::new(self.dims(), self.adapter.rank());
        self.forward(token, mask_row, &mut scratch);
        scratch.z
    }

    fn forward(&self, token: usize, mask_row: Option<&[f64]>, s: &mut Scratch) {
        let x = self.embedding.row(token);
        match mask_row {
            Some(m) => s.xd.iter_mut().zip(x.iter().zip(m)).for_each(|(o, (a, b))| *o = a * b),
            None => s.xd.copy_from_slice(x),
        }
        self.base.vec_mul(x, &mut s.h);
        self.adapter.a().vec_mul(&s.xd, &mut s.u);
        self.adapter.b().vec_mul(&s.u, &mut s.delta_h);
        let scale = self.adapter.scale();
        s.h.iter_mut().zip(&s.delta_h).for_each(|(h, d)| *h += scale * d);
        self.head.vec_mul(&s.h, &mut s.z);
    }

    /// Mean cross-entropy over all positions; `mask = None` is the inference path.
    pub fn loss(&self, batch: &[Vec<usize>], mask: Option<&DropoutMask>) -> Result<f64> {
        let pos = self.check_batch(batch, mask)?;
        let mut s = Scratch::new(self.dims(), self.adapter.rank());
        let mut total = 0.0;
        for (i, &(x, y)) in pos.iter().enumerate() {
            self.forward(x, mask.map(|m| m.rows[i].as_slice()), &mut s);
            total -= log_softmax(&s.z)[y];
        }
        Ok(total / pos.len() as f64)
    }

    pub fn loss_and_gradients(&self, batch: &[Vec<usize>], mask: Option<&DropoutMask>) -> Result<(f64, LoraGradients)> {
        let pos = self.check_batch(batch, mask)?;
        let dims = self.dims();
        let r = self.adapter.rank();
        let n = pos.len() as f64;
        let scale = self.adapter.scale();
        let mut ga = DenseMatrix::zeros(dims.d, r);
        let mut gb = DenseMatrix::zeros(r, dims.k);
        let mut s = Scratch::new(dims, r);
        let mut p = vec![0.0; dims.vocab];
        let mut g = vec![0.0; dims.k];
        let mut gbt = vec![0.0; r];
        let mut total = 0.0;
        for (i, &(x, y)) in pos.iter().enumerate() {
            self.forward(x, mask.map(|m| m.rows[i].as_slice()), &mut s);
            total -= log_softmax(&s.z)[y];
            softmax_into(&s.z, &mut p);
            p[y] -= 1.0;
            p.iter_mut().for_each(|v| *v /= n);
            // dL/dh = H dL/dz
            self.head.mul_vec(&p, &mut g);
            gb.add_outer(&s.u, &g, scale);
            self.adapter.b().mul_vec(&g, &mut gbt);
            ga.add_outer(&s.xd, &gbt, scale);
        }
        Ok((total / n, LoraGradients { a: ga, b: gb }))
    }
}

/// Gradients of the mean loss with respect to `A` and `B`.
pub fn analytic_gradients(model: &ToyLm, batch: &[Vec<usize>], mask: Option<&DropoutMask>) -> Result<LoraGradients> {
    model.loss_and_gradients(batch, mask).map(|(_, g)| g)
}

struct Scratch {
    xd: Vec<f64>,
    h: Vec<f64>,
    u: Vec<f64>,
    delta_h: Vec<f64>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(dims: ModelDims, r: usize) -> Self {
        Self {
            xd: vec![0.0; dims.d],
            h: vec![0.0; dims.k],
            u: vec![0.0; r],
            delta_h: vec![0.0; dims.k],
            z: vec![0.0; dims.vocab],
        }
    }
}
