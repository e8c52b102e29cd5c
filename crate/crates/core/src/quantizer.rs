//! Product quantization codebooks shared by both modalities.
//!
//! Training uses a soft quantizer: per sub-space, a temperature softmax over
//! cosine logits gives attention weights over the codewords, and a second
//! Gumbel-perturbed softmax (scaled by `lambda`) is added on top to spread
//! usage across codewords. Indexing uses hard nearest-codeword assignment and
//! packs the sub-indices into a little bit string.

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, normalize_in_place, softmax_into, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks {
    m: usize,
    k: usize,
    d: usize,
    /// Row-major `[m][k][d]`.
    codewords: Vec<f64>,
}

fn check_config(m: usize, k: usize, dim: usize) -> Result<()> {
    if m == 0 || dim == 0 {
        return Err(Error::param("codebook count and dimension must be positive"));
    }
    if !dim.is_multiple_of(m) {
        return Err(Error::param(format!("dimension {dim} is not divisible by M={m}")));
    }
    if !k.is_power_of_two() {
        return Err(Error::param(format!("K={k} is not a power of two")));
    }
    Ok(())
}

impl Codebooks {
    /// Gaussian codewords, each scaled to unit norm.
    pub fn init(m: usize, k: usize, dim: usize, rng: &mut SeededRng) -> Result<Self> {
        check_config(m, k, dim)?;
        let d = dim / m;
        let mut codewords: Vec<f64> = (0..m * k * d).map(|_| rng.standard_normal()).collect();
        for cw in codewords.chunks_exact_mut(d) {
            normalize_in_place(cw);
        }
        Ok(Self { m, k, d, codewords })
    }

    pub fn from_flat(m: usize, k: usize, d: usize, codewords: Vec<f64>) -> Result<Self> {
        check_config(m, k, m * d)?;
        if codewords.len() != m * k * d {
            return Err(Error::shape(format!(
                "{} codeword values for M={m} K={k} d={d}",
                codewords.len()
            )));
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("codewords".into()));
        }
        Ok(Self { m, k, d, codewords })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Sub-vector dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.m * self.d
    }

    pub fn bits_per_index(&self) -> usize {
        bits_for(self.k)
    }

    pub fn code_bits(&self) -> usize {
        self.m * self.bits_per_index()
    }

    pub fn code_bytes(&self) -> usize {
        self.code_bits().div_ceil(8)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.codewords
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.codewords
    }

    /// All K codewords of book `m`, `K*d` values.
    pub fn book(&self, m: usize) -> &[f64] {
        let n = self.k * self.d;
        &self.codewords[m * n..(m + 1) * n]
    }

    pub fn codeword(&self, m: usize, k: usize) -> &[f64] {
        let start = (m * self.k + k) * self.d;
        &self.codewords[start..start + self.d]
    }

    /// Concatenation of the selected codeword from each book.
    pub fn decode(&self, indices: &[usize]) -> Vec<f64> {
        indices
            .iter()
            .enumerate()
            .flat_map(|(m, &k)| self.codeword(m, k).iter().copied())
            .collect()
    }

    fn check_vector(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "vector of length {} against codebooks of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn bits_for(k: usize) -> usize {
    k.trailing_zeros() as usize
}

/// Cosine of `sub` against each of the `k` codewords in `book`.
pub fn cosine_logits(sub: &[f64], book: &[f64], d: usize) -> Vec<f64> {
    let sn = norm(sub);
    book.chunks_exact(d)
        .map(|c| {
            let cn = norm(c);
            if sn == 0.0 || cn == 0.0 {
                0.0
            } else {
                dot(sub, c) / (sn * cn)
            }
        })
        .collect()
}

/// Weighted sum of the codewords of one book.
pub fn attention_pool(sub: &[f64], book: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let d = sub.len();
    if d == 0 || book.len() != weights.len() * d {
        return Err(Error::shape(format!(
            "book of {} values does not hold {} codewords of dim {d}",
            book.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::param(format!("attention weights sum to {total}")));
    }
    let mut out = vec![0.0; d];
    for (c, &w) in book.chunks_exact(d).zip(weights) {
        for (o, &v) in out.iter_mut().zip(c) {
            *o += w * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqgParams {
    /// Weight of the Gumbel branch; `0.0` disables it.
    pub lambda: f64,
    pub tau_s: f64,
    pub tau_sg: f64,
}

impl Default for PqgParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau_s: 0.2,
            tau_sg: 1.0,
        }
    }
}

impl PqgParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        for (name, t) in [("tau_s", self.tau_s), ("tau_sg", self.tau_sg)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::param(format!("{name} must be > 0, got {t}")));
            }
        }
        Ok(())
    }

    fn gumbel_active(&self) -> bool {
        self.lambda != 0.0
    }
}

/// Unit-normalized codewords plus their original norms, computed once per
/// forward pass and shared by every sample.
#[derive(Debug, Clone)]
pub(crate) struct UnitCodebooks {
    unit: Vec<f64>,
    norms: Vec<f64>,
}

impl UnitCodebooks {
    pub(crate) fn new(cb: &Codebooks) -> Self {
        let mut unit = cb.codewords.clone();
        let norms = unit.chunks_exact_mut(cb.d).map(normalize_in_place).collect();
        Self { unit, norms }
    }
}

/// Soft quantization of one vector, with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct SoftQuantized {
    /// Concatenated soft codes, length D.
    pub z: Vec<f64>,
    /// Deterministic attention weights, `M*K`.
    pub soft_weights: Vec<f64>,
    /// Gumbel-branch weights, `M*K` (empty when the branch is off).
    pub gumbel_weights: Vec<f64>,
    /// Noise used by the Gumbel branch, `M*K` (empty when the branch is off).
    pub noise: Vec<f64>,
    logits: Vec<f64>,
    unit_x: Vec<f64>,
    sub_norms: Vec<f64>,
}

/// Soft-quantizes `x` with fresh Gumbel noise drawn from `rng`.
pub fn pqg_soft_quantize(x: &[f64], cb: &Codebooks, params: PqgParams, rng: &mut SeededRng) -> Result<SoftQuantized> {
    params.validate()?;
    let noise = if params.gumbel_active() {
        rng.gumbel_vec(cb.m * cb.k)
    } else {
        Vec::new()
    };
    pqg_with_noise(x, cb, params, noise)
}

/// Soft quantization with frozen noise (`M*K` values, ignored when
/// `lambda == 0`).
pub fn pqg_with_noise(x: &[f64], cb: &Codebooks, params: PqgParams, noise: Vec<f64>) -> Result<SoftQuantized> {
    params.validate()?;
    cb.check_vector(x)?;
    if params.gumbel_active() && noise.len() != cb.m * cb.k {
        return Err(Error::shape(format!(
            "{} noise values for M*K={}",
            noise.len(),
            cb.m * cb.k
        )));
    }
    Ok(pqg_forward(x, cb, &UnitCodebooks::new(cb), params, noise))
}

pub(crate) fn pqg_forward(
    x: &[f64],
    cb: &Codebooks,
    units: &UnitCodebooks,
    params: PqgParams,
    noise: Vec<f64>,
) -> SoftQuantized {
    let (m_books, k, d) = (cb.m, cb.k, cb.d);
    let gumbel = params.gumbel_active();
    let mut unit_x = x.to_vec();
    let mut sub_norms = Vec::with_capacity(m_books);
    let mut logits = vec![0.0; m_books * k];
    let mut soft = vec![0.0; m_books * k];
    let mut gw = if gumbel { vec![0.0; m_books * k] } else { Vec::new() };
    let mut z = vec![0.0; m_books * d];
    let mut perturbed = vec![0.0; k];

    for m in 0..m_books {
        let xs = &mut unit_x[m * d..(m + 1) * d];
        sub_norms.push(normalize_in_place(xs));
        let lg = &mut logits[m * k..(m + 1) * k];
        for (kk, l) in lg.iter_mut().enumerate() {
            let c = &units.unit[(m * k + kk) * d..(m * k + kk + 1) * d];
            *l = dot(xs, c);
        }
        softmax_into(lg, params.tau_s, &mut soft[m * k..(m + 1) * k]);
        if gumbel {
            for ((p, &l), &g) in perturbed.iter_mut().zip(lg.iter()).zip(&noise[m * k..(m + 1) * k]) {
                *p = l + g;
            }
            softmax_into(&perturbed, params.tau_sg, &mut gw[m * k..(m + 1) * k]);
        }
        let zm = &mut z[m * d..(m + 1) * d];
        let book = cb.book(m);
        for kk in 0..k {
            let mut w = soft[m * k + kk];
            if gumbel {
                w += params.lambda * gw[m * k + kk];
            }
            for (o, &v) in zm.iter_mut().zip(&book[kk * d..(kk + 1) * d]) {
                *o += w * v;
            }
        }
    }

    SoftQuantized {
        z,
        soft_weights: soft,
        gumbel_weights: gw,
        noise,
        logits,
        unit_x,
        sub_norms,
    }
}

/// Backpropagates `dz` (gradient w.r.t. the soft code) through one soft
/// quantization. Adds the codeword gradient into `dcb` and returns the
/// gradient w.r.t. the input vector.
pub(crate) fn pqg_backward(
    fwd: &SoftQuantized,
    cb: &Codebooks,
    units: &UnitCodebooks,
    params: PqgParams,
    dz: &[f64],
    dcb: &mut [f64],
) -> Vec<f64> {
    let (m_books, k, d) = (cb.m, cb.k, cb.d);
    let gumbel = params.gumbel_active();
    let mut dx = vec![0.0; m_books * d];
    let mut a = vec![0.0; k];
    let mut dlogit = vec![0.0; k];
    let mut dunit = vec![0.0; d];

    for m in 0..m_books {
        let dzm = &dz[m * d..(m + 1) * d];
        let p = &fwd.soft_weights[m * k..(m + 1) * k];
        let q: &[f64] = if gumbel {
            &fwd.gumbel_weights[m * k..(m + 1) * k]
        } else {
            &[]
        };
        let book = cb.book(m);

        // Direct path through the convex combination of codewords.
        for kk in 0..k {
            let c = &book[kk * d..(kk + 1) * d];
            a[kk] = dot(dzm, c);
            let mut w = p[kk];
            if gumbel {
                w += params.lambda * q[kk];
            }
            let g = &mut dcb[(m * k + kk) * d..(m * k + kk + 1) * d];
            for (gv, &dv) in g.iter_mut().zip(dzm) {
                *gv += w * dv;
            }
        }

        // Through both softmaxes into the cosine logits.
        let pa: f64 = p.iter().zip(&a).map(|(x, y)| x * y).sum();
        for kk in 0..k {
            dlogit[kk] = p[kk] * (a[kk] - pa) / params.tau_s;
        }
        if gumbel {
            let qa: f64 = q.iter().zip(&a).map(|(x, y)| x * y).sum();
            for kk in 0..k {
                dlogit[kk] += params.lambda * q[kk] * (a[kk] - qa) / params.tau_sg;
            }
        }

        // Cosine logits: l_k = <x~, c~_k>.
        let xu = &fwd.unit_x[m * d..(m + 1) * d];
        let lg = &fwd.logits[m * k..(m + 1) * k];
        dunit.iter_mut().for_each(|v| *v = 0.0);
        for kk in 0..k {
            let cu = &units.unit[(m * k + kk) * d..(m * k + kk + 1) * d];
            let cn = units.norms[m * k + kk];
            for (du, &cv) in dunit.iter_mut().zip(cu) {
                *du += dlogit[kk] * cv;
            }
            if cn > 0.0 {
                let scale = dlogit[kk] / cn;
                let g = &mut dcb[(m * k + kk) * d..(m * k + kk + 1) * d];
                for ((gv, &xv), &cv) in g.iter_mut().zip(xu).zip(cu) {
                    *gv += scale * (xv - cv * lg[kk]);
                }
            }
        }
        let sn = fwd.sub_norms[m];
        if sn > 0.0 {
            let proj = dot(xu, &dunit);
            for ((o, &du), &xv) in dx[m * d..(m + 1) * d].iter_mut().zip(&dunit).zip(xu) {
                *o = (du - xv * proj) / sn;
            }
        }
    }
    dx
}

/// Nearest codeword (highest cosine) per book; ties go to the lowest index.
pub fn hard_assign(x: &[f64], cb: &Codebooks) -> Result<Vec<usize>> {
    cb.check_vector(x)?;
    Ok((0..cb.m)
        .map(|m| {
            let logits = cosine_logits(&x[m * cb.d..(m + 1) * cb.d], cb.book(m), cb.d);
            let mut best = 0;
            for (kk, &l) in logits.iter().enumerate().skip(1) {
                if l > logits[best] {
                    best = kk;
                }
            }
            best
        })
        .collect())
}

/// Packed binary code: sub-index `m` occupies bits `[m*b, (m+1)*b)` with
/// `b = log2 K`, least significant bit first within each byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PqCode {
    bytes: Vec<u8>,
}

impl PqCode {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len_bytes(&self) -> usize {
        self.bytes.len()
    }
}

pub fn code_len_bytes(m: usize, k: usize) -> usize {
    (m * bits_for(k)).div_ceil(8)
}

pub fn pack_code(indices: &[usize], k: usize) -> Result<PqCode> {
    if !k.is_power_of_two() {
        return Err(Error::param(format!("K={k} is not a power of two")));
    }
    let b = bits_for(k);
    let mut bytes = vec![0u8; code_len_bytes(indices.len(), k)];
    for (m, &idx) in indices.iter().enumerate() {
        if idx >= k {
            return Err(Error::Range(format!("index {idx} at book {m} is >= K={k}")));
        }
        for bit in 0..b {
            if (idx >> bit) & 1 == 1 {
                let pos = m * b + bit;
                bytes[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
    Ok(PqCode { bytes })
}

pub fn unpack_code(code: &PqCode, m: usize, k: usize) -> Result<Vec<usize>> {
    if !k.is_power_of_two() {
        return Err(Error::param(format!("K={k} is not a power of two")));
    }
    let expected = code_len_bytes(m, k);
    if code.bytes.len() != expected {
        return Err(Error::UnsupportedFormat(format!(
            "code of {} bytes, expected {expected} for M={m} K={k}",
            code.bytes.len()
        )));
    }
    let b = bits_for(k);
    Ok((0..m)
        .map(|book| {
            (0..b).fold(0usize, |acc, bit| {
                let pos = book * b + bit;
                acc | ((((code.bytes[pos / 8] >> (pos % 8)) & 1) as usize) << bit)
            })
        })
        .collect())
}

/// Codeword selection counts per book and their Shannon entropy in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageHistogram {
    pub counts: Vec<Vec<u64>>,
    pub entropy_per_book: Vec<f64>,
}

impl UsageHistogram {
    pub fn mean_entropy(&self) -> f64 {
        if self.entropy_per_book.is_empty() {
            return 0.0;
        }
        self.entropy_per_book.iter().sum::<f64>() / self.entropy_per_book.len() as f64
    }
}

pub fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum()
}

pub fn usage_histogram<'a>(codes: impl IntoIterator<Item = &'a PqCode>, m: usize, k: usize) -> Result<UsageHistogram> {
    let mut counts = vec![vec![0u64; k]; m];
    for code in codes {
        for (book, idx) in unpack_code(code, m, k)?.into_iter().enumerate() {
            counts[book][idx] += 1;
        }
    }
    let entropy_per_book = counts.iter().map(|c| entropy_bits(c)).collect();
    Ok(UsageHistogram {
        counts,
        entropy_per_book,
    })
}
