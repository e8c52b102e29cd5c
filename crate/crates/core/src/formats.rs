//! Binary codecs for every on-disk artifact.
//!
//! All integers are little-endian, all reals are IEEE-754 `f32` LE. Byte
//! layouts are documented in `FORMATS.md` at the repository root.
//!
//! | magic      | contents                               |
//! |------------|----------------------------------------|
//! | `DCMQEMB1` | embedding / feature matrix             |
//! | `DCMQLBL1` | multi-hot labels                       |
//! | `DCMQCBK1` | codebooks                              |
//! | `DCMQMDL1` | trained model (heads, codebooks, trace)|
//! | `DCMQIDX1` | gallery index                          |

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::index::Index;
use crate::labels::MultiHotLabels;
use crate::quantizer::{code_len_bytes, Codebooks, PqCode};
use crate::student::{Layer, LossRecord, MlpHead, StudentModel, TrainConfig, TrainedModel};
use crate::targets::TargetMode;

pub const EMB_MAGIC: &[u8; 8] = b"DCMQEMB1";
pub const LBL_MAGIC: &[u8; 8] = b"DCMQLBL1";
pub const CBK_MAGIC: &[u8; 8] = b"DCMQCBK1";
pub const MDL_MAGIC: &[u8; 8] = b"DCMQMDL1";
pub const IDX_MAGIC: &[u8; 8] = b"DCMQIDX1";

/// Version byte written after the magic of the codebook, model and index
/// formats.
pub const FORMAT_VERSION: u8 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Range(format!("{v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f64) {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s<'a>(&mut self, vals: impl IntoIterator<Item = &'a f64>) {
        for &v in vals {
            self.f32(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let avail = self.buf.len() - self.pos;
        if n > avail {
            return Err(Error::corrupt(
                self.pos,
                format!("truncated {what}: expected {n} bytes, found {avail}"),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, want: &[u8; 8]) -> Result<()> {
        if self.buf.len() < 8 || &self.buf[..8] != want {
            let got = String::from_utf8_lossy(&self.buf[..self.buf.len().min(8)]).into_owned();
            return Err(Error::UnsupportedFormat(format!(
                "bad magic {got:?}, expected {:?}",
                String::from_utf8_lossy(want)
            )));
        }
        self.pos = 8;
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let at = self.pos;
        let v = self.u8("version")?;
        if v != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(format!("version {v} at byte {at}")));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| Error::corrupt(self.pos, format!("{what} size overflows")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    /// Fails unless exactly `n` bytes remain.
    fn expect_remaining(&self, n: usize, what: &str) -> Result<()> {
        let avail = self.buf.len() - self.pos;
        if avail != n {
            return Err(Error::corrupt(
                self.pos,
                format!("{what}: expected {n} bytes, found {avail}"),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        self.expect_remaining(0, "trailing bytes")
    }
}

fn checked_product(a: usize, b: usize, at: usize) -> Result<usize> {
    a.checked_mul(b)
        .ok_or_else(|| Error::corrupt(at, format!("header dimensions {a} x {b} overflow")))
}

pub fn encode_emb(m: &Array2<f64>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(EMB_MAGIC);
    w.u32(m.nrows())?;
    w.u32(m.ncols())?;
    w.f32s(m.iter());
    Ok(w.buf)
}

pub fn decode_emb(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = Reader::new(bytes);
    r.magic(EMB_MAGIC)?;
    let n = r.u32("row count")?;
    let d = r.u32("column count")?;
    let count = checked_product(n, d, r.pos)?;
    r.expect_remaining(checked_product(count, 4, r.pos)?, "payload length")?;
    let vals = r.f32s(count, "payload")?;
    Ok(Array2::from_shape_vec((n, d), vals).expect("length checked"))
}

fn label_row_bytes(classes: usize) -> usize {
    classes.div_ceil(8)
}

fn put_label_rows(w: &mut Writer, labels: &MultiHotLabels) {
    for row in labels.rows() {
        let mut bytes = vec![0u8; label_row_bytes(labels.classes())];
        for (j, &on) in row.iter().enumerate() {
            if on {
                bytes[j / 8] |= 1 << (j % 8);
            }
        }
        w.bytes(&bytes);
    }
}

fn take_label_rows(r: &mut Reader, n: usize, classes: usize) -> Result<MultiHotLabels> {
    let per = label_row_bytes(classes);
    if per == 0 && n > 0 {
        return Err(Error::corrupt(r.pos, "label rows with zero classes"));
    }
    let mut rows = Vec::with_capacity(n.min(1 << 16));
    for i in 0..n {
        let at = r.pos;
        let b = r.take(per, "label row")?;
        let row: Vec<bool> = (0..classes).map(|j| (b[j / 8] >> (j % 8)) & 1 == 1).collect();
        if !classes.is_multiple_of(8) && b[per - 1] >> (classes % 8) != 0 {
            return Err(Error::corrupt(at, format!("label row {i} has nonzero padding bits")));
        }
        rows.push(row);
    }
    MultiHotLabels::new(classes, rows)
}

pub fn encode_lbl(labels: &MultiHotLabels) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(LBL_MAGIC);
    w.u32(labels.len())?;
    w.u32(labels.classes())?;
    put_label_rows(&mut w, labels);
    Ok(w.buf)
}

pub fn decode_lbl(bytes: &[u8]) -> Result<MultiHotLabels> {
    let mut r = Reader::new(bytes);
    r.magic(LBL_MAGIC)?;
    let n = r.u32("row count")?;
    let classes = r.u32("class count")?;
    r.expect_remaining(checked_product(n, label_row_bytes(classes), r.pos)?, "payload length")?;
    take_label_rows(&mut r, n, classes)
}

fn put_codebooks(w: &mut Writer, cb: &Codebooks) -> Result<()> {
    w.u32(cb.m())?;
    w.u32(cb.k())?;
    w.u32(cb.d())?;
    w.f32s(cb.as_flat());
    Ok(())
}

fn take_codebooks(r: &mut Reader) -> Result<Codebooks> {
    let at = r.pos;
    let m = r.u32("M")?;
    let k = r.u32("K")?;
    let d = r.u32("d")?;
    if m == 0 || d == 0 || !k.is_power_of_two() {
        return Err(Error::corrupt(at, format!("invalid codebook header M={m} K={k} d={d}")));
    }
    let count = checked_product(checked_product(m, k, at)?, d, at)?;
    let vals = r.f32s(count, "codewords")?;
    Codebooks::from_flat(m, k, d, vals).map_err(|e| Error::corrupt(at, e.to_string()))
}

pub fn encode_cbk(cb: &Codebooks) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(CBK_MAGIC);
    w.u8(FORMAT_VERSION);
    put_codebooks(&mut w, cb)?;
    Ok(w.buf)
}

pub fn decode_cbk(bytes: &[u8]) -> Result<Codebooks> {
    let mut r = Reader::new(bytes);
    r.magic(CBK_MAGIC)?;
    r.version()?;
    let cb = take_codebooks(&mut r)?;
    r.finish()?;
    Ok(cb)
}

fn put_head(w: &mut Writer, head: &MlpHead) -> Result<()> {
    let dims = head.dims();
    w.u32(head.layers().len())?;
    for d in dims {
        w.u32(d)?;
    }
    for layer in head.layers() {
        w.f32s(layer.weight.iter());
        w.f32s(layer.bias.iter());
    }
    Ok(())
}

fn take_head(r: &mut Reader) -> Result<MlpHead> {
    let at = r.pos;
    let layers = r.u32("layer count")?;
    if layers == 0 || layers > 64 {
        return Err(Error::corrupt(at, format!("implausible layer count {layers}")));
    }
    let dims = (0..=layers).map(|_| r.u32("layer width")).collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(Error::corrupt(at, "zero layer width"));
    }
    let mut out = Vec::with_capacity(layers);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weight = r.f32s(checked_product(fan_out, fan_in, r.pos)?, "layer weights")?;
        let bias = r.f32s(fan_out, "layer bias")?;
        out.push(Layer {
            weight: Array2::from_shape_vec((fan_out, fan_in), weight).expect("sized"),
            bias: Array1::from_vec(bias),
        });
    }
    MlpHead::from_layers(out).map_err(|e| Error::corrupt(at, e.to_string()))
}

pub fn encode_model(model: &TrainedModel) -> Result<Vec<u8>> {
    let c = &model.config;
    let mut w = Writer::default();
    w.bytes(MDL_MAGIC);
    w.u8(FORMAT_VERSION);
    w.u32(c.m)?;
    w.u32(c.k)?;
    w.u32(c.dim)?;
    for v in [c.lambda, c.tau_s, c.tau_sg, c.tau_ce, c.lr] {
        w.f64(v);
    }
    w.u32(c.epochs)?;
    w.u32(c.lr_drop_epoch)?;
    w.u32(c.batch_size)?;
    w.u64(c.seed);
    w.u8(c.joint as u8 | (c.gumbel as u8) << 1 | (c.global_targets as u8) << 2);
    w.u8(c.target.code());
    put_head(&mut w, &model.model.image)?;
    put_head(&mut w, &model.model.text)?;
    put_codebooks(&mut w, &model.model.codebooks)?;
    w.u32(model.loss_trace.len())?;
    for rec in &model.loss_trace {
        w.u32(rec.epoch)?;
        w.u32(rec.batch)?;
        w.f64(rec.loss);
    }
    Ok(w.buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader::new(bytes);
    r.magic(MDL_MAGIC)?;
    r.version()?;
    let m = r.u32("M")?;
    let k = r.u32("K")?;
    let dim = r.u32("dim")?;
    let lambda = r.f64("lambda")?;
    let tau_s = r.f64("tau_s")?;
    let tau_sg = r.f64("tau_sg")?;
    let tau_ce = r.f64("tau_ce")?;
    let lr = r.f64("lr")?;
    let epochs = r.u32("epochs")?;
    let lr_drop_epoch = r.u32("lr drop epoch")?;
    let batch_size = r.u32("batch size")?;
    let seed = r.u64("seed")?;
    let flags = r.u8("flags")?;
    let at = r.pos;
    let target =
        TargetMode::from_code(r.u8("target mode")?).ok_or_else(|| Error::corrupt(at, "unknown target mode"))?;
    let image = take_head(&mut r)?;
    let text = take_head(&mut r)?;
    let at = r.pos;
    let codebooks = take_codebooks(&mut r)?;
    if (codebooks.m(), codebooks.k(), codebooks.dim()) != (m, k, dim)
        || image.output_dim() != dim
        || text.output_dim() != dim
    {
        return Err(Error::corrupt(at, "model header disagrees with layer/codebook shapes"));
    }
    let count = r.u32("loss trace length")?;
    let mut loss_trace = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        loss_trace.push(LossRecord {
            epoch: r.u32("trace epoch")?,
            batch: r.u32("trace batch")?,
            loss: r.f64("trace loss")?,
        });
    }
    r.finish()?;
    let hidden = |h: &MlpHead| {
        let d = h.dims();
        d[1..d.len() - 1].to_vec()
    };
    let config = TrainConfig {
        m,
        k,
        dim,
        lambda,
        tau_s,
        tau_sg,
        tau_ce,
        lr,
        epochs,
        lr_drop_epoch,
        batch_size,
        seed,
        joint: flags & 1 != 0,
        gumbel: flags & 2 != 0,
        global_targets: flags & 4 != 0,
        target,
        image_hidden: hidden(&image),
        text_hidden: hidden(&text),
    };
    Ok(TrainedModel {
        model: StudentModel { image, text, codebooks },
        config,
        loss_trace,
    })
}

pub fn encode_index(index: &Index) -> Result<Vec<u8>> {
    let cb = index.codebooks();
    let mut w = Writer::default();
    w.bytes(IDX_MAGIC);
    w.u8(FORMAT_VERSION);
    w.u32(index.len())?;
    w.u8(index.labels().is_some() as u8);
    put_codebooks(&mut w, cb)?;
    for &id in index.ids() {
        w.u32(id)?;
    }
    for code in index.codes() {
        w.bytes(code.as_bytes());
    }
    if let Some(labels) = index.labels() {
        w.u32(labels.classes())?;
        put_label_rows(&mut w, labels);
    }
    Ok(w.buf)
}

pub fn decode_index(bytes: &[u8]) -> Result<Index> {
    let mut r = Reader::new(bytes);
    r.magic(IDX_MAGIC)?;
    r.version()?;
    let n = r.u32("gallery size")?;
    let at = r.pos;
    let has_labels = match r.u8("labels flag")? {
        0 => false,
        1 => true,
        v => return Err(Error::corrupt(at, format!("labels flag {v}"))),
    };
    let codebooks = take_codebooks(&mut r)?;
    let ids = (0..n).map(|_| r.u32("gallery id")).collect::<Result<Vec<_>>>()?;
    let per = code_len_bytes(codebooks.m(), codebooks.k());
    let mut codes = Vec::new();
    for _ in 0..n {
        codes.push(PqCode::from_bytes(r.take(per, "code")?.to_vec()));
    }
    let labels = if has_labels {
        let classes = r.u32("class count")?;
        Some(take_label_rows(&mut r, n, classes)?)
    } else {
        None
    };
    r.finish()?;
    let at = r.pos;
    Index::from_parts(codebooks, codes, ids, labels).map_err(|e| Error::corrupt(at, e.to_string()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_emb(path: &Path) -> Result<Array2<f64>> {
    decode_emb(&read_file(path)?)
}

pub fn write_emb(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_file(path, &encode_emb(m)?)
}

pub fn read_lbl(path: &Path) -> Result<MultiHotLabels> {
    decode_lbl(&read_file(path)?)
}

pub fn write_lbl(path: &Path, labels: &MultiHotLabels) -> Result<()> {
    write_file(path, &encode_lbl(labels)?)
}

pub fn read_cbk(path: &Path) -> Result<Codebooks> {
    decode_cbk(&read_file(path)?)
}

pub fn write_cbk(path: &Path, cb: &Codebooks) -> Result<()> {
    write_file(path, &encode_cbk(cb)?)
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    decode_model(&read_file(path)?)
}

pub fn write_model(path: &Path, model: &TrainedModel) -> Result<()> {
    write_file(path, &encode_model(model)?)
}

pub fn read_index(path: &Path) -> Result<Index> {
    decode_index(&read_file(path)?)
}

pub fn write_index(path: &Path, index: &Index) -> Result<()> {
    write_file(path, &encode_index(index)?)
}
