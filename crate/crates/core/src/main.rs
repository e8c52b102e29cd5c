use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcmq::config::{parse_widths, RunConfig};
use dcmq::csvio::{parse_rankings_csv, rankings_csv, report_csv, usage_csv};
use dcmq::eval::{curve_csv, map_at_with, precision_curve, recall_curve, ApDenominator, RelevanceJudge};
use dcmq::formats::{read_emb, read_index, read_lbl, read_model, write_file, write_index, write_model};
use dcmq::index::{adc_search_batch, build_index};
use dcmq::quantizer::usage_histogram;
use dcmq::student::{train, Modality};
use dcmq::synth::{synth_dataset, write_dataset, SynthConfig};
use dcmq::targets::TargetMode;
use dcmq::{Error, Result};

/// Cross-modal retrieval with product-quantized codes.
#[derive(Debug, Parser)]
#[command(name = "dcmq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Train the student heads and codebooks.
    Train(TrainArgs),
    /// Encode a gallery into a code index.
    BuildIndex(BuildIndexArgs),
    /// Rank an index for each query.
    Search(SearchArgs),
    /// Score rankings against labels.
    Eval(EvalArgs),
    /// Codeword usage and entropy of an index.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    gallery: usize,
    #[arg(long, default_value_t = 100)]
    query: usize,
    #[arg(long, default_value_t = 128)]
    img_dim: usize,
    #[arg(long, default_value_t = 128)]
    txt_dim: usize,
    #[arg(long, default_value_t = 64)]
    teacher_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    labels_min: usize,
    #[arg(long, default_value_t = 3)]
    labels_max: usize,
    /// Squeeze cross-modal teacher similarities into [0.05, 0.19].
    #[arg(long)]
    range_compress: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// key = value file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    texts: Option<PathBuf>,
    #[arg(long)]
    teacher_img: Option<PathBuf>,
    #[arg(long)]
    teacher_txt: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// npc, identity, multihot or raw.
    #[arg(long)]
    target: Option<TargetMode>,
    #[arg(long)]
    no_gumbel: bool,
    #[arg(long)]
    no_joint: bool,
    #[arg(long)]
    global_targets: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma-separated hidden widths of the image head.
    #[arg(long)]
    image_hidden: Option<String>,
    /// Comma-separated hidden widths of the text head.
    #[arg(long)]
    text_hidden: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss trace CSV; defaults to the model path with `.loss.csv` appended.
    #[arg(long)]
    loss_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[arg(long)]
    model: PathBuf,
    /// Raw gallery features (EMB) of the chosen modality.
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    modality: Modality,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Raw query features (EMB) of the chosen modality.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    modality: Modality,
    #[arg(long, default_value_t = 100)]
    topk: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    rankings: PathBuf,
    #[arg(long)]
    labels_q: PathBuf,
    #[arg(long)]
    labels_g: PathBuf,
    #[arg(long, default_value_t = 5000)]
    map_at: usize,
    #[arg(long, default_value_t = 1000)]
    top: usize,
    #[arg(long, default_value_t = 1000)]
    recall_at: usize,
    /// Cutoff step of the exported curves.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// retrieved or min-r-total.
    #[arg(long, default_value = "retrieved")]
    ap_denominator: ApDenominator,
    /// metric,value report.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    precision_out: Option<PathBuf>,
    #[arg(long)]
    recall_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::BuildIndex(a) => build_index_cmd(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(a),
    }
}

/// Worker threads for search; unset or 0 means sequential.
fn threads() -> Result<usize> {
    match std::env::var("DCMQ_THREADS") {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("DCMQ_THREADS must be a non-negative integer, got {v:?}"))),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        classes: a.classes,
        n_train: a.train,
        n_gallery: a.gallery,
        n_query: a.query,
        img_dim: a.img_dim,
        txt_dim: a.txt_dim,
        teacher_dim: a.teacher_dim,
        noise: a.noise,
        labels_min: a.labels_min,
        labels_max: a.labels_max,
        range_compress: a.range_compress,
    };
    let ds = synth_dataset(&cfg)?;
    for (path, size) in write_dataset(&ds, &a.out_dir)? {
        println!("{}\t{size}", path.display());
    }
    Ok(())
}

fn required(value: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Config(format!("missing {name} (flag or config key)")))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut rc = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let t = &mut rc.train;
    if let Some(v) = a.target {
        t.target = v;
    }
    if a.no_gumbel {
        t.gumbel = false;
    }
    if a.no_joint {
        t.joint = false;
    }
    if a.global_targets {
        t.global_targets = true;
    }
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = a.$field { t.$field = v; })*};
    }
    set!(seed, epochs, lr, lambda, m, k, dim, batch_size);
    if let Some(w) = &a.image_hidden {
        t.image_hidden = parse_widths(w)?;
    }
    if let Some(w) = &a.text_hidden {
        t.text_hidden = parse_widths(w)?;
    }
    let images = required(a.images.or(rc.images), "images")?;
    let texts = required(a.texts.or(rc.texts), "texts")?;
    let teacher_img = required(a.teacher_img.or(rc.teacher_img), "teacher_img")?;
    let teacher_txt = required(a.teacher_txt.or(rc.teacher_txt), "teacher_txt")?;
    let labels_path = a.labels.or(rc.labels);
    let out = required(a.out.or(rc.out), "out")?;
    rc.train.validate()?;
    if rc.train.target == TargetMode::Multihot && labels_path.is_none() {
        return Err(Error::Config("target multihot needs labels".into()));
    }

    let img = read_emb(&images)?;
    let txt = read_emb(&texts)?;
    let ti = read_emb(&teacher_img)?;
    let tt = read_emb(&teacher_txt)?;
    let labels = labels_path.as_deref().map(read_lbl).transpose()?;
    eprintln!(
        "training on {} pairs: M={} K={} ({} bits), target {}, {} epochs",
        img.nrows(),
        rc.train.m,
        rc.train.k,
        rc.train.code_bits(),
        rc.train.target,
        rc.train.epochs
    );
    let model = train(&rc.train, img.view(), txt.view(), ti.view(), tt.view(), labels.as_ref())?;
    for epoch in 0..rc.train.epochs {
        if let Some(l) = model.mean_epoch_loss(epoch) {
            eprintln!("epoch {epoch}: mean loss {l:.6}");
        }
    }
    write_model(&out, &model)?;
    let loss_out = a.loss_out.unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".loss.csv");
        s.into()
    });
    write_text(&loss_out, &model.loss_csv())?;
    println!("{}", out.display());
    println!("{}", loss_out.display());
    Ok(())
}

fn build_index_cmd(a: BuildIndexArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let gallery = read_emb(&a.gallery)?;
    let labels = a.labels.as_deref().map(read_lbl).transpose()?;
    let encoded = model.encode(a.modality, gallery.view())?;
    let index = build_index(encoded.view(), model.codebooks(), labels)?;
    write_index(&a.out, &index)?;
    println!(
        "{}\t{} items\t{} bytes per code",
        a.out.display(),
        index.len(),
        index.code_bytes()
    );
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    if a.topk == 0 {
        return Err(Error::Parameter("--topk must be at least 1".into()));
    }
    let threads = threads()?;
    let model = read_model(&a.model)?;
    let index = read_index(&a.index)?;
    if model.codebooks() != index.codebooks() {
        return Err(Error::Alignment(
            "index was built with different codebooks than the model".into(),
        ));
    }
    let queries = read_emb(&a.queries)?;
    let encoded = model.encode(a.modality, queries.view())?;
    let lists = adc_search_batch(encoded.view(), &index, a.topk, threads)?;
    write_text(&a.out, &rankings_csv(&lists))
}

fn eval(a: EvalArgs) -> Result<()> {
    let judge = RelevanceJudge::new(read_lbl(&a.labels_q)?, read_lbl(&a.labels_g)?)?;
    let text = std::fs::read_to_string(&a.rankings).map_err(|e| Error::Io {
        path: a.rankings.clone(),
        source: e,
    })?;
    let rankings = parse_rankings_csv(&text, judge.queries())?;
    let map = map_at_with(&rankings, &judge, a.map_at, a.ap_denominator)?;
    let precision = precision_curve(&rankings, &judge, a.top, a.stride)?;
    let recall = recall_curve(&rankings, &judge, a.recall_at, a.stride)?;
    let scored = (0..judge.queries()).filter(|&q| judge.total_relevant(q) > 0).count();
    let report = vec![
        (format!("map@{}", a.map_at), map),
        (format!("precision@{}", a.top), precision.last().map_or(0.0, |p| p.1)),
        (format!("recall@{}", a.recall_at), recall.last().map_or(0.0, |p| p.1)),
        ("queries".to_string(), judge.queries() as f64),
        ("queries_with_relevant".to_string(), scored as f64),
    ];
    for (name, value) in &report {
        println!("{name}\t{value}");
    }
    write_text(&a.out, &report_csv(&report))?;
    if let Some(p) = &a.precision_out {
        write_text(p, &curve_csv("cutoff,precision", &precision))?;
    }
    if let Some(p) = &a.recall_out {
        write_text(p, &curve_csv("cutoff,recall", &recall))?;
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let index = read_index(&a.index)?;
    let cb = index.codebooks();
    let h = usage_histogram(index.codes(), cb.m(), cb.k())?;
    println!(
        "{} items, M={} K={}, mean entropy {:.4} bits (max {:.4})",
        index.len(),
        cb.m(),
        cb.k(),
        h.mean_entropy(),
        (cb.k() as f64).log2()
    );
    write_text(&a.out, &usage_csv(&h))
}
