//! Joint training of both heads and the shared codebooks.
//!
//! Per batch: both heads embed their features (`X`), each embedding row is
//! soft-quantized (`Z`), and two soft-target cross entropies compare the
//! quantized rows of one modality with the real-valued rows of the other
//! against the teacher target (image-to-text with `T`, text-to-image with
//! `T^T`). With joint training off, both terms compare quantized rows with
//! quantized rows instead.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};

use super::head::{normalize_rows_backward, HeadGrads, MlpHead};
use super::loss::soft_target_ce;
use super::optim::{adam_step, AdamState};
use crate::error::{Error, Result};
use crate::labels::MultiHotLabels;
use crate::numerics::{normalize_in_place, SeededRng};
use crate::quantizer::{pqg_backward, pqg_forward, Codebooks, PqgParams, SoftQuantized, UnitCodebooks};
use crate::targets::{build_target, TargetMatrix, TargetMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Image,
    Text,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            other => Err(Error::Config(format!(
                "unknown modality {other:?} (expected image|text)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of codebooks.
    pub m: usize,
    /// Codewords per codebook.
    pub k: usize,
    /// Embedding dimension shared by both heads and the codebooks.
    pub dim: usize,
    pub lambda: f64,
    pub tau_s: f64,
    pub tau_sg: f64,
    pub tau_ce: f64,
    pub lr: f64,
    pub epochs: usize,
    /// First epoch (0-based) trained at `lr / 10`.
    pub lr_drop_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub joint: bool,
    pub gumbel: bool,
    pub target: TargetMode,
    /// Build the target once over the whole training set instead of per batch.
    pub global_targets: bool,
    pub image_hidden: Vec<usize>,
    pub text_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m: 16,
            k: 16,
            dim: 256,
            lambda: 1.0,
            tau_s: 0.2,
            tau_sg: 1.0,
            tau_ce: 0.2,
            lr: 1e-5,
            epochs: 20,
            lr_drop_epoch: 10,
            batch_size: 64,
            seed: 42,
            joint: true,
            gumbel: true,
            target: TargetMode::Npc,
            global_targets: false,
            image_hidden: vec![512],
            text_hidden: vec![1024, 512],
        }
    }
}

impl TrainConfig {
    pub fn pqg_params(&self) -> PqgParams {
        PqgParams {
            lambda: if self.gumbel { self.lambda } else { 0.0 },
            tau_s: self.tau_s,
            tau_sg: self.tau_sg,
        }
    }

    pub fn code_bits(&self) -> usize {
        self.m * self.k.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.m) {
            return Err(Error::param(format!(
                "dim {} must be a positive multiple of M={}",
                self.dim, self.m
            )));
        }
        if self.k < 2 || !self.k.is_power_of_two() {
            return Err(Error::param(format!("K={} is not a power of two", self.k)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        for (name, v) in [
            ("tau_s", self.tau_s),
            ("tau_sg", self.tau_sg),
            ("tau_ce", self.tau_ce),
            ("lr", self.lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::param("batch_size must be at least 2"));
        }
        if self.image_hidden.contains(&0) || self.text_hidden.contains(&0) {
            return Err(Error::param("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// Both heads plus the shared codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub image: MlpHead,
    pub text: MlpHead,
    pub codebooks: Codebooks,
}

impl StudentModel {
    pub fn init(cfg: &TrainConfig, image_in: usize, text_in: usize, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        let dims = |input: usize, hidden: &[usize]| {
            std::iter::once(input)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(cfg.dim))
                .collect::<Vec<_>>()
        };
        let image = MlpHead::new(&dims(image_in, &cfg.image_hidden), rng)?;
        let text = MlpHead::new(&dims(text_in, &cfg.text_hidden), rng)?;
        let codebooks = Codebooks::init(cfg.m, cfg.k, cfg.dim, rng)?;
        Ok(Self { image, text, codebooks })
    }

    pub fn head(&self, modality: Modality) -> &MlpHead {
        match modality {
            Modality::Image => &self.image,
            Modality::Text => &self.text,
        }
    }

    /// Normalized real-valued embeddings for one modality.
    pub fn encode(&self, modality: Modality, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.head(modality).forward(features)
    }

    /// Every trainable tensor as a flat slice, in a fixed order: image
    /// layers (weight, bias), text layers (weight, bias), codebooks.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for head in [&mut self.image, &mut self.text] {
            for layer in head.layers_mut() {
                out.push(layer.weight.as_slice_mut().expect("standard layout"));
                out.push(layer.bias.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.codebooks.as_flat_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.image.is_finite() && self.text.is_finite() && self.codebooks.as_flat().iter().all(|v| v.is_finite())
    }
}

/// Gradients in the same layout as [`StudentModel::parameters_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub image: HeadGrads,
    pub text: HeadGrads,
    pub codebooks: Vec<f64>,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for head in [&self.image, &self.text] {
            for layer in &head.layers {
                out.push(layer.weight.as_slice().expect("standard layout"));
                out.push(layer.bias.as_slice().expect("standard layout"));
            }
        }
        out.push(&self.codebooks);
        out
    }
}

/// Gumbel noise for one batch, `M*K` values per row and modality. Frozen
/// noise makes the loss a deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    pub image: Vec<Vec<f64>>,
    pub text: Vec<Vec<f64>>,
}

impl BatchNoise {
    pub fn sample(rows: usize, m: usize, k: usize, rng: &mut SeededRng) -> Self {
        let mut draw = || (0..rows).map(|_| rng.gumbel_vec(m * k)).collect();
        let image = draw();
        let text = draw();
        Self { image, text }
    }

    /// No noise at all; valid only when the Gumbel branch is off.
    pub fn none(rows: usize) -> Self {
        Self {
            image: vec![Vec::new(); rows],
            text: vec![Vec::new(); rows],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub i2t: f64,
    pub t2i: f64,
}

struct QuantizedRows {
    z: Array2<f64>,
    norms: Vec<f64>,
    fwd: Vec<SoftQuantized>,
}

fn quantize_rows(
    x: &Array2<f64>,
    cb: &Codebooks,
    units: &UnitCodebooks,
    params: PqgParams,
    noise: &[Vec<f64>],
) -> Result<QuantizedRows> {
    let mk = cb.m() * cb.k();
    let mut z = Array2::zeros((x.nrows(), cb.dim()));
    let mut norms = Vec::with_capacity(x.nrows());
    let mut fwd = Vec::with_capacity(x.nrows());
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let g = if params.lambda != 0.0 {
            if noise[i].len() != mk {
                return Err(Error::shape(format!(
                    "row {i}: {} noise values, need {mk}",
                    noise[i].len()
                )));
            }
            noise[i].clone()
        } else {
            Vec::new()
        };
        let out = pqg_forward(row.as_slice().expect("contiguous row"), cb, units, params, g);
        let mut zr = out.z.clone();
        norms.push(normalize_in_place(&mut zr));
        z.row_mut(i).assign(&ndarray::ArrayView1::from(&zr[..]));
        fwd.push(out);
    }
    Ok(QuantizedRows { z, norms, fwd })
}

fn backward_quantized(
    q: &QuantizedRows,
    dz: &Array2<f64>,
    cb: &Codebooks,
    units: &UnitCodebooks,
    params: PqgParams,
    dx: &mut Array2<f64>,
    dcb: &mut [f64],
) {
    let dz_raw = normalize_rows_backward(&q.z, &q.norms, dz);
    for (i, fwd) in q.fwd.iter().enumerate() {
        let g = pqg_backward(
            fwd,
            cb,
            units,
            params,
            dz_raw.row(i).as_slice().expect("contiguous"),
            dcb,
        );
        dx.row_mut(i)
            .zip_mut_with(&ndarray::ArrayView1::from(&g[..]), |a, &b| *a += b);
    }
}

/// Batch loss and hand-derived gradients for every parameter, with the
/// Gumbel noise held fixed.
pub fn total_loss(
    model: &StudentModel,
    image_features: ArrayView2<f64>,
    text_features: ArrayView2<f64>,
    target: &TargetMatrix,
    cfg: &TrainConfig,
    noise: &BatchNoise,
) -> Result<(LossBreakdown, ModelGrads)> {
    let n = image_features.nrows();
    if text_features.nrows() != n || target.len() != n || noise.image.len() != n || noise.text.len() != n {
        return Err(Error::Alignment(format!(
            "batch rows: image {n}, text {}, target {}, noise {}/{}",
            text_features.nrows(),
            target.len(),
            noise.image.len(),
            noise.text.len()
        )));
    }
    let params = cfg.pqg_params();
    let cb = &model.codebooks;
    let ci = model.image.forward_cached(image_features)?;
    let ct = model.text.forward_cached(text_features)?;
    if ci.out.ncols() != cb.dim() || ct.out.ncols() != cb.dim() {
        return Err(Error::shape("head output dim differs from codebook dim"));
    }
    let units = UnitCodebooks::new(cb);
    let qi = quantize_rows(&ci.out, cb, &units, params, &noise.image)?;
    let qt = quantize_rows(&ct.out, cb, &units, params, &noise.text)?;

    let t = target.values();
    let tt = t.t().to_owned();
    let (xi, xt) = (&ci.out, &ct.out);
    let mut dxi = Array2::zeros(xi.dim());
    let mut dxt = Array2::zeros(xt.dim());
    let (i2t, t2i, dzi, dzt);
    if cfg.joint {
        let (l1, g1) = soft_target_ce(&qi.z.dot(&xt.t()), t, cfg.tau_ce)?;
        let (l2, g2) = soft_target_ce(&qt.z.dot(&xi.t()), &tt, cfg.tau_ce)?;
        dzi = g1.dot(xt);
        dxt += &g1.t().dot(&qi.z);
        dzt = g2.dot(xi);
        dxi += &g2.t().dot(&qt.z);
        (i2t, t2i) = (l1, l2);
    } else {
        let (l1, g1) = soft_target_ce(&qi.z.dot(&qt.z.t()), t, cfg.tau_ce)?;
        let (l2, g2) = soft_target_ce(&qt.z.dot(&qi.z.t()), &tt, cfg.tau_ce)?;
        dzi = g1.dot(&qt.z) + g2.t().dot(&qt.z);
        dzt = g1.t().dot(&qi.z) + g2.dot(&qi.z);
        (i2t, t2i) = (l1, l2);
    }

    let mut dcb = vec![0.0; cb.as_flat().len()];
    backward_quantized(&qi, &dzi, cb, &units, params, &mut dxi, &mut dcb);
    backward_quantized(&qt, &dzt, cb, &units, params, &mut dxt, &mut dcb);
    let grads = ModelGrads {
        image: model.image.backward(&ci, &dxi),
        text: model.text.backward(&ct, &dxt),
        codebooks: dcb,
    };
    Ok((
        LossBreakdown {
            total: i2t + t2i,
            i2t,
            t2i,
        },
        grads,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: StudentModel,
    pub config: TrainConfig,
    pub loss_trace: Vec<LossRecord>,
}

impl TrainedModel {
    pub fn encode(&self, modality: Modality, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.model.encode(modality, features)
    }

    pub fn codebooks(&self) -> &Codebooks {
        &self.model.codebooks
    }

    /// Mean batch loss of one epoch, `None` if the epoch has no records.
    pub fn mean_epoch_loss(&self, epoch: usize) -> Option<f64> {
        let losses: Vec<f64> = self
            .loss_trace
            .iter()
            .filter(|r| r.epoch == epoch)
            .map(|r| r.loss)
            .collect();
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,batch,loss\n");
        for r in &self.loss_trace {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.batch, r.loss));
        }
        s
    }
}

/// Trains both heads and the codebooks from aligned feature and teacher rows.
pub fn train(
    cfg: &TrainConfig,
    image_features: ArrayView2<f64>,
    text_features: ArrayView2<f64>,
    teacher_img: ArrayView2<f64>,
    teacher_txt: ArrayView2<f64>,
    labels: Option<&MultiHotLabels>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let n = image_features.nrows();
    let counts = [
        text_features.nrows(),
        teacher_img.nrows(),
        teacher_txt.nrows(),
        labels.map_or(n, |l| l.len()),
    ];
    if counts.iter().any(|&c| c != n) {
        return Err(Error::Alignment(format!(
            "row counts differ: images {n}, texts {}, teacher images {}, teacher texts {}, labels {}",
            counts[0], counts[1], counts[2], counts[3]
        )));
    }
    if teacher_img.ncols() != teacher_txt.ncols() {
        return Err(Error::shape(format!(
            "teacher dims differ: {} vs {}",
            teacher_img.ncols(),
            teacher_txt.ncols()
        )));
    }
    if cfg.target == TargetMode::Multihot && labels.is_none() {
        return Err(Error::Config("target mode multihot requires labels".into()));
    }

    let mut rng = SeededRng::new(cfg.seed);
    let mut model = StudentModel::init(cfg, image_features.ncols(), text_features.ncols(), &mut rng)?;
    let mut states: Vec<AdamState> = model.parameters_mut().iter().map(|p| AdamState::new(p.len())).collect();
    let global = if cfg.global_targets && n > 0 {
        Some(build_target(cfg.target, teacher_img, teacher_txt, labels)?)
    } else {
        None
    };
    let gumbel = cfg.pqg_params().lambda != 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = if epoch >= cfg.lr_drop_epoch {
            cfg.lr / 10.0
        } else {
            cfg.lr
        };
        rng.shuffle(&mut order);
        for (batch, idx) in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2).enumerate() {
            let img = image_features.select(Axis(0), idx);
            let txt = text_features.select(Axis(0), idx);
            let target = match &global {
                Some(t) => t.select(idx),
                None => build_target(
                    cfg.target,
                    teacher_img.select(Axis(0), idx).view(),
                    teacher_txt.select(Axis(0), idx).view(),
                    labels.map(|l| l.select(idx)).as_ref(),
                )?,
            };
            let noise = if gumbel {
                BatchNoise::sample(idx.len(), cfg.m, cfg.k, &mut rng)
            } else {
                BatchNoise::none(idx.len())
            };
            let (loss, grads) = total_loss(&model, img.view(), txt.view(), &target, cfg, &noise)?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    detail: format!("loss is {}", loss.total),
                });
            }
            for ((p, g), s) in model
                .parameters_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(states.iter_mut())
            {
                adam_step(p, g, s, lr)?;
            }
            trace.push(LossRecord {
                epoch,
                batch,
                loss: loss.total,
            });
        }
        if !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                detail: "non-finite parameters after epoch".into(),
            });
        }
    }

    // Stored models hold 32-bit floats; rounding here keeps a reloaded model
    // identical to the one returned.
    for p in model.parameters_mut() {
        p.iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
    Ok(TrainedModel {
        model,
        config: cfg.clone(),
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.dim, c.k, c.m), (256, 16, 16));
        assert_eq!((c.tau_s, c.tau_sg, c.tau_ce), (0.2, 1.0, 0.2));
        assert_eq!((c.lr, c.epochs, c.lr_drop_epoch, c.batch_size), (1e-5, 20, 10, 64));
        assert_eq!(c.code_bits(), 64);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                m: 3,
                ..Default::default()
            },
            TrainConfig {
                k: 12,
                ..Default::default()
            },
            TrainConfig {
                tau_ce: 0.0,
                ..Default::default()
            },
            TrainConfig {
                lambda: -1.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 1,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn no_gumbel_zeroes_lambda() {
        let c = TrainConfig {
            gumbel: false,
            ..Default::default()
        };
        assert_eq!(c.pqg_params().lambda, 0.0);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = TrainConfig {
            dim: 8,
            m: 2,
            k: 4,
            epochs: 0,
            image_hidden: vec![4],
            text_hidden: vec![4],
            ..Default::default()
        };
        let x = Array2::<f64>::ones((4, 3));
        let out = train(&cfg, x.view(), x.view(), x.view(), x.view(), None).unwrap();
        assert!(out.loss_trace.is_empty());
        let mut rng = SeededRng::new(cfg.seed);
        let mut init = StudentModel::init(&cfg, 3, 3, &mut rng).unwrap();
        for p in init.parameters_mut() {
            p.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
        assert_eq!(out.model, init);
    }

    #[test]
    fn misaligned_rows_rejected() {
        let cfg = TrainConfig {
            dim: 8,
            m: 2,
            k: 4,
            ..Default::default()
        };
        let a = Array2::<f64>::ones((4, 3));
        let b = Array2::<f64>::ones((5, 3));
        assert!(matches!(
            train(&cfg, a.view(), b.view(), a.view(), a.view(), None),
            Err(Error::Alignment(_))
        ));
        let cfg = TrainConfig {
            target: TargetMode::Multihot,
            ..cfg
        };
        assert!(matches!(
            train(&cfg, a.view(), a.view(), a.view(), a.view(), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let cfg = TrainConfig {
            dim: 8,
            m: 2,
            k: 4,
            lr: 1e300,
            epochs: 3,
            batch_size: 4,
            image_hidden: vec![4],
            text_hidden: vec![4],
            ..Default::default()
        };
        let mut rng = SeededRng::new(0);
        let x = Array2::from_shape_fn((8, 3), |_| rng.standard_normal());
        match train(&cfg, x.view(), x.view(), x.view(), x.view(), None) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}

#[cfg(test)]
mod gradcheck {
    use super::*;
    use crate::targets::{compute_similarity, npc};

    fn tiny(joint: bool, gumbel: bool) -> TrainConfig {
        TrainConfig {
            dim: 8,
            m: 2,
            k: 4,
            joint,
            gumbel,
            image_hidden: vec![6],
            text_hidden: vec![6],
            ..Default::default()
        }
    }

    /// Max over tensors of `|analytic - numeric| / max(|analytic|, |numeric|)`
    /// measured tensor-wise in the l2 norm.
    fn worst_rel_err(cfg: &TrainConfig) -> f64 {
        let mut rng = SeededRng::new(7);
        let n = 4;
        let fi = Array2::from_shape_fn((n, 5), |_| rng.standard_normal());
        let ft = Array2::from_shape_fn((n, 7), |_| rng.standard_normal());
        let vi = Array2::from_shape_fn((n, 3), |_| rng.standard_normal());
        let vt = Array2::from_shape_fn((n, 3), |_| rng.standard_normal());
        let target = npc(&compute_similarity(vi.view(), vt.view()).unwrap()).unwrap();
        let mut model = StudentModel::init(cfg, 5, 7, &mut rng).unwrap();
        let noise = BatchNoise::sample(n, cfg.m, cfg.k, &mut rng);
        let (_, grads) = total_loss(&model, fi.view(), ft.view(), &target, cfg, &noise).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

        let h = 1e-6;
        let mut worst = 0.0f64;
        for (ti, a) in analytic.iter().enumerate() {
            let mut numeric = vec![0.0; a.len()];
            for j in 0..a.len() {
                let orig = model.parameters_mut()[ti][j];
                model.parameters_mut()[ti][j] = orig + h;
                let up = total_loss(&model, fi.view(), ft.view(), &target, cfg, &noise)
                    .unwrap()
                    .0
                    .total;
                model.parameters_mut()[ti][j] = orig - h;
                let dn = total_loss(&model, fi.view(), ft.view(), &target, cfg, &noise)
                    .unwrap()
                    .0
                    .total;
                model.parameters_mut()[ti][j] = orig;
                numeric[j] = (up - dn) / (2.0 * h);
            }
            let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let scale = a
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt());
            if scale > 1e-12 {
                worst = worst.max(diff / scale);
            }
        }
        worst
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        for joint in [true, false] {
            for gumbel in [true, false] {
                let err = worst_rel_err(&tiny(joint, gumbel));
                assert!(err < 1e-5, "joint={joint} gumbel={gumbel}: rel err {err}");
            }
        }
    }
}
