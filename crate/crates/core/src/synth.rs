//! Seeded synthetic cross-modal dataset.
//!
//! Every class gets a random unit prototype in each of three spaces: image
//! features, text features and the teacher space. A sample draws a few
//! classes, averages their prototypes, normalizes, adds Gaussian noise and
//! normalizes again. Teacher vectors exist for the training split only.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::formats::{write_emb, write_lbl};
use crate::labels::MultiHotLabels;
use crate::numerics::{normalize_in_place, SeededRng};

/// Fraction of squared norm carried by the class signal in a compressed
/// teacher vector; the rest sits on a fixed two-dimensional offset.
const COMPRESS_SIGNAL: f64 = 0.07;
/// Cross-modal cosine of the offsets, chosen so that compressed cross-modal
/// similarities land in `[0.05, 0.19]`.
const COMPRESS_OFFSET_COS: f64 = 0.12 / (1.0 - COMPRESS_SIGNAL);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub classes: usize,
    pub n_train: usize,
    pub n_gallery: usize,
    pub n_query: usize,
    pub img_dim: usize,
    pub txt_dim: usize,
    pub teacher_dim: usize,
    pub noise: f64,
    pub labels_min: usize,
    pub labels_max: usize,
    pub range_compress: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            classes: 8,
            n_train: 2000,
            n_gallery: 500,
            n_query: 100,
            img_dim: 128,
            txt_dim: 128,
            teacher_dim: 64,
            noise: 0.1,
            labels_min: 1,
            labels_max: 3,
            range_compress: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::param("classes must be positive"));
        }
        if self.img_dim == 0 || self.txt_dim == 0 || self.teacher_dim == 0 {
            return Err(Error::param("feature dims must be positive"));
        }
        if self.range_compress && self.teacher_dim < 3 {
            return Err(Error::param("range compression needs teacher dim >= 3"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::param(format!(
                "noise must be finite and >= 0, got {}",
                self.noise
            )));
        }
        if self.labels_min == 0 || self.labels_min > self.labels_max || self.labels_max > self.classes {
            return Err(Error::param(format!(
                "labels per sample {}..={} impossible with {} classes",
                self.labels_min, self.labels_max, self.classes
            )));
        }
        if self.n_train < 2 {
            return Err(Error::param("need at least 2 training samples"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
    pub labels: MultiHotLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Split,
    pub teacher_image: Array2<f64>,
    pub teacher_text: Array2<f64>,
    pub gallery: Split,
    pub query: Split,
}

struct Prototypes {
    image: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
    teacher: Vec<Vec<f64>>,
}

fn unit_vectors(n: usize, dim: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            if normalize_in_place(&mut v) > 0.0 {
                break v;
            }
        })
        .collect()
}

fn pick_classes(cfg: &SynthConfig, rng: &mut SeededRng) -> Vec<usize> {
    let count = cfg.labels_min + rng.below(cfg.labels_max - cfg.labels_min + 1);
    let mut all: Vec<usize> = (0..cfg.classes).collect();
    for i in 0..count {
        let j = i + rng.below(cfg.classes - i);
        all.swap(i, j);
    }
    let mut chosen = all[..count].to_vec();
    chosen.sort_unstable();
    chosen
}

fn sample_vector(protos: &[Vec<f64>], classes: &[usize], noise: f64, rng: &mut SeededRng) -> Vec<f64> {
    let dim = protos[0].len();
    let mut v = vec![0.0; dim];
    for &c in classes {
        for (a, p) in v.iter_mut().zip(&protos[c]) {
            *a += p;
        }
    }
    normalize_in_place(&mut v);
    for a in v.iter_mut() {
        *a += noise * rng.standard_normal();
    }
    normalize_in_place(&mut v);
    v
}

/// Rounds through 32-bit floats so the in-memory data equals what is written.
fn to_matrix(rows: Vec<Vec<f64>>, dim: usize) -> Array2<f64> {
    let n = rows.len();
    let flat = rows.into_iter().flatten().map(|x| x as f32 as f64).collect();
    Array2::from_shape_vec((n, dim), flat).expect("rows have equal length")
}

/// Squeezes cross-modal teacher cosines into `[0.05, 0.19]`. `v` must be a
/// unit vector of length `dim - 2`.
pub fn range_compress(v: &[f64], text_side: bool) -> Vec<f64> {
    let s = COMPRESS_SIGNAL.sqrt();
    let o = (1.0 - COMPRESS_SIGNAL).sqrt();
    let mut out: Vec<f64> = v.iter().map(|x| s * x).collect();
    if text_side {
        let c = COMPRESS_OFFSET_COS;
        out.extend([o * c, o * (1.0 - c * c).sqrt()]);
    } else {
        out.extend([o, 0.0]);
    }
    out
}

/// Teacher rows of one split.
type Rows = Vec<Vec<f64>>;

fn make_split(
    cfg: &SynthConfig,
    protos: &Prototypes,
    n: usize,
    rng: &mut SeededRng,
) -> Result<(Split, Rows, Rows, bool)> {
    let mut active = Vec::with_capacity(n);
    let mut image = Vec::with_capacity(n);
    let mut text = Vec::with_capacity(n);
    let mut t_img = Vec::new();
    let mut t_txt = Vec::new();
    let with_teacher = !protos.teacher.is_empty();
    for _ in 0..n {
        let classes = pick_classes(cfg, rng);
        image.push(sample_vector(&protos.image, &classes, cfg.noise, rng));
        text.push(sample_vector(&protos.text, &classes, cfg.noise, rng));
        if with_teacher {
            let a = sample_vector(&protos.teacher, &classes, cfg.noise, rng);
            let b = sample_vector(&protos.teacher, &classes, cfg.noise, rng);
            if cfg.range_compress {
                t_img.push(range_compress(&a, false));
                t_txt.push(range_compress(&b, true));
            } else {
                t_img.push(a);
                t_txt.push(b);
            }
        }
        active.push(classes);
    }
    let split = Split {
        image: to_matrix(image, cfg.img_dim),
        text: to_matrix(text, cfg.txt_dim),
        labels: MultiHotLabels::from_active(cfg.classes, &active)?,
    };
    Ok((split, t_img, t_txt, with_teacher))
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let signal_dim = if cfg.range_compress {
        cfg.teacher_dim - 2
    } else {
        cfg.teacher_dim
    };
    let protos = Prototypes {
        image: unit_vectors(cfg.classes, cfg.img_dim, &mut rng),
        text: unit_vectors(cfg.classes, cfg.txt_dim, &mut rng),
        teacher: unit_vectors(cfg.classes, signal_dim, &mut rng),
    };
    let (train, t_img, t_txt, _) = make_split(cfg, &protos, cfg.n_train, &mut rng)?;
    let no_teacher = Prototypes {
        image: protos.image,
        text: protos.text,
        teacher: Vec::new(),
    };
    let (gallery, ..) = make_split(cfg, &no_teacher, cfg.n_gallery, &mut rng)?;
    let (query, ..) = make_split(cfg, &no_teacher, cfg.n_query, &mut rng)?;
    Ok(SynthDataset {
        train,
        teacher_image: to_matrix(t_img, cfg.teacher_dim),
        teacher_text: to_matrix(t_txt, cfg.teacher_dim),
        gallery,
        query,
    })
}

/// File names written by [`write_dataset`], in write order.
pub const DATASET_FILES: [&str; 11] = [
    "train_img.emb",
    "train_txt.emb",
    "train_teacher_img.emb",
    "train_teacher_txt.emb",
    "train.lbl",
    "gallery_img.emb",
    "gallery_txt.emb",
    "gallery.lbl",
    "query_img.emb",
    "query_txt.emb",
    "query.lbl",
];

/// Writes every split into `dir` and returns `(path, size in bytes)` pairs.
pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> Result<Vec<(PathBuf, u64)>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = |name: &str| dir.join(name);
    let [ti, tt, tti, ttt, tl, gi, gt, gl, qi, qt, ql] = DATASET_FILES.map(p);
    write_emb(&ti, &ds.train.image)?;
    write_emb(&tt, &ds.train.text)?;
    write_emb(&tti, &ds.teacher_image)?;
    write_emb(&ttt, &ds.teacher_text)?;
    write_lbl(&tl, &ds.train.labels)?;
    write_emb(&gi, &ds.gallery.image)?;
    write_emb(&gt, &ds.gallery.text)?;
    write_lbl(&gl, &ds.gallery.labels)?;
    write_emb(&qi, &ds.query.image)?;
    write_emb(&qt, &ds.query.text)?;
    write_lbl(&ql, &ds.query.labels)?;
    DATASET_FILES
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let len = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
            Ok((path, len))
        })
        .collect()
}
