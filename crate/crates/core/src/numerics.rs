//! Dense-vector kernels shared by the rest of the crate.
//!
//! Everything in memory is `f64`. On-disk artifacts store `f32` and are
//! promoted on load, so reductions here always accumulate in 64 bits.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Clamp applied to uniform draws before the Gumbel inverse CDF.
pub const GUMBEL_EPS: f64 = 1e-12;

/// Deterministic random stream backed by ChaCha8.
///
/// ChaCha output is specified bit-for-bit, so a given seed yields the same
/// stream on every platform and every run.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Standard Gumbel (location 0, scale 1) via `-ln(-ln(u))`.
    pub fn gumbel(&mut self) -> f64 {
        let u = self.uniform().clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
        -(-u.ln()).ln()
    }

    pub fn gumbel_vec(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| self.gumbel()).collect()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericInput(format!("{what} contains NaN or Inf")))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm, rescaled by the largest magnitude so tiny and huge
/// inputs neither underflow nor overflow.
pub fn norm(v: &[f64]) -> f64 {
    let amax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if amax == 0.0 {
        return 0.0;
    }
    let ss: f64 = v.iter().map(|x| (x / amax) * (x / amax)).sum();
    amax * ss.sqrt()
}

/// Normalizes `v` in place and returns its original norm. Zero vectors are
/// left as zeros.
pub fn normalize_in_place(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Unit-norm copy of `v`; the all-zero vector maps to itself.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    check_finite(v, "vector")?;
    let mut out = v.to_vec();
    normalize_in_place(&mut out);
    Ok(out)
}

/// Row-wise l2 normalization. Zero rows stay zero.
pub fn normalize_rows(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let slice = row.as_slice_mut().expect("owned rows are contiguous");
        normalize_in_place(slice);
    }
    out
}

/// Cosine similarity of every row of `a` against every row of `b`.
pub fn cosine_sim_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape(format!(
            "cosine_sim_matrix: {} vs {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("cosine_sim_matrix input".into()));
    }
    let an = normalize_rows(a);
    let bn = normalize_rows(b);
    let mut s = an.dot(&bn.t());
    s.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    Ok(s)
}

/// Temperature softmax written into `out`; caller guarantees `tau > 0`.
pub(crate) fn softmax_into(logits: &[f64], tau: f64, out: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = ((l - max) / tau).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("temperature must be > 0, got {tau}")))
    }
}

pub fn softmax_temp(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    check_finite(logits, "logits")?;
    if logits.is_empty() {
        return Err(Error::shape("softmax over zero logits"));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, tau, &mut out);
    Ok(out)
}

/// Gumbel-softmax with caller-supplied noise. With `noise` all zero this
/// performs exactly the same arithmetic as [`softmax_temp`].
pub fn gumbel_softmax_with_noise(logits: &[f64], noise: &[f64], tau: f64) -> Result<Vec<f64>> {
    if logits.len() != noise.len() {
        return Err(Error::shape(format!(
            "gumbel noise length {} for {} logits",
            noise.len(),
            logits.len()
        )));
    }
    let perturbed: Vec<f64> = logits.iter().zip(noise).map(|(l, g)| l + g).collect();
    softmax_temp(&perturbed, tau)
}

/// Samples fresh Gumbel noise from `rng` and returns `(weights, noise)`.
pub fn gumbel_softmax(logits: &[f64], tau: f64, rng: &mut SeededRng) -> Result<(Vec<f64>, Vec<f64>)> {
    check_tau(tau)?;
    let noise = rng.gumbel_vec(logits.len());
    let weights = gumbel_softmax_with_noise(logits, &noise, tau)?;
    Ok((weights, noise))
}
