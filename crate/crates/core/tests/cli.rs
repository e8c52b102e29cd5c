use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dcmq::csvio::parse_rankings_csv;
use dcmq::formats::{read_emb, read_index, read_model, write_index};
use dcmq::index::{adc_search, Index};
use dcmq::quantizer::{pack_code, Codebooks};
use dcmq::student::Modality;

fn dcmq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcmq"))
        .args(args)
        .env_remove("DCMQ_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dcmq(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Run {
    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Small synth + train + index + search + eval pipeline.
fn pipeline() -> Run {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let run = Run { _dir: dir, root };
    let data = run.p("data");
    ok(&[
        "synth",
        "--seed",
        "5",
        "--train",
        "120",
        "--gallery",
        "40",
        "--query",
        "8",
        "--img-dim",
        "16",
        "--txt-dim",
        "12",
        "--teacher-dim",
        "10",
        "--out-dir",
        s(&data),
    ]);
    let cfg = run.p("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "m = 4\nk = 16\ndim = 32\nepochs = 2\nlr_drop_epoch = 1\nbatch_size = 32\nlr = 1e-3\n\
             image_hidden = 16\ntext_hidden = 16\nimages = {}\ntexts = {}\nteacher_img = {}\nteacher_txt = {}\n\
             labels = {}\n",
            s(&data.join("train_img.emb")),
            s(&data.join("train_txt.emb")),
            s(&data.join("train_teacher_img.emb")),
            s(&data.join("train_teacher_txt.emb")),
            s(&data.join("train.lbl")),
        ),
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg), "--out", s(&run.p("model.mdl"))]);
    ok(&[
        "build-index",
        "--model",
        s(&run.p("model.mdl")),
        "--gallery",
        s(&data.join("gallery_txt.emb")),
        "--modality",
        "text",
        "--labels",
        s(&data.join("gallery.lbl")),
        "--out",
        s(&run.p("gallery.idx")),
    ]);
    ok(&[
        "search",
        "--model",
        s(&run.p("model.mdl")),
        "--index",
        s(&run.p("gallery.idx")),
        "--queries",
        s(&data.join("query_img.emb")),
        "--modality",
        "image",
        "--topk",
        "10",
        "--out",
        s(&run.p("rank.csv")),
    ]);
    ok(&[
        "eval",
        "--rankings",
        s(&run.p("rank.csv")),
        "--labels-q",
        s(&data.join("query.lbl")),
        "--labels-g",
        s(&data.join("gallery.lbl")),
        "--map-at",
        "10",
        "--top",
        "10",
        "--recall-at",
        "10",
        "--out",
        s(&run.p("report.csv")),
        "--precision-out",
        s(&run.p("precision.csv")),
        "--recall-out",
        s(&run.p("recall.csv")),
    ]);
    ok(&[
        "inspect",
        "--index",
        s(&run.p("gallery.idx")),
        "--out",
        s(&run.p("usage.csv")),
    ]);
    run
}

const OUTPUTS: [&str; 8] = [
    "model.mdl",
    "model.mdl.loss.csv",
    "gallery.idx",
    "rank.csv",
    "report.csv",
    "precision.csv",
    "recall.csv",
    "usage.csv",
];

#[test]
fn full_pipeline_is_byte_identical_across_runs() {
    let a = pipeline();
    let b = pipeline();
    for name in OUTPUTS {
        assert_eq!(
            std::fs::read(a.p(name)).unwrap(),
            std::fs::read(b.p(name)).unwrap(),
            "{name}"
        );
    }
    for name in dcmq::synth::DATASET_FILES {
        let x = std::fs::read(a.p("data").join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.p("data").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn csv_schemas() {
    let run = pipeline();
    let read = |n: &str| std::fs::read_to_string(run.p(n)).unwrap();
    assert!(read("model.mdl.loss.csv").starts_with("epoch,batch,loss\n"));
    assert_eq!(read("model.mdl.loss.csv").lines().count(), 1 + 2 * 4);
    assert!(read("rank.csv").starts_with("query_id,rank,gallery_id,score\n"));
    assert_eq!(read("rank.csv").lines().count(), 1 + 8 * 10);
    let report: Vec<String> = read("report.csv")
        .lines()
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(
        report,
        [
            "metric",
            "map@10",
            "precision@10",
            "recall@10",
            "queries",
            "queries_with_relevant"
        ]
    );
    assert!(read("precision.csv").starts_with("cutoff,precision\n1,"));
    assert_eq!(read("precision.csv").lines().count(), 11);
    assert!(read("recall.csv").starts_with("cutoff,recall\n"));
    let usage = read("usage.csv");
    let header: Vec<&str> = usage.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2 + 16);
    assert_eq!(&header[..3], ["book", "entropy_bits", "c0"]);
    assert_eq!(header[17], "c15");
    assert_eq!(usage.lines().count(), 1 + 4);
    for line in usage.lines().skip(1) {
        let counts: u64 = line.split(',').skip(2).map(|c| c.parse::<u64>().unwrap()).sum();
        assert_eq!(counts, 40);
    }
}

#[test]
fn search_matches_library() {
    let run = pipeline();
    let model = read_model(&run.p("model.mdl")).unwrap();
    let index = read_index(&run.p("gallery.idx")).unwrap();
    let queries = read_emb(&run.p("data").join("query_img.emb")).unwrap();
    let encoded = model.encode(Modality::Image, queries.view()).unwrap();
    let text = std::fs::read_to_string(run.p("rank.csv")).unwrap();
    let from_cli = parse_rankings_csv(&text, 8).unwrap();
    for (q, row) in encoded.rows().into_iter().enumerate() {
        assert_eq!(adc_search(&row.to_vec(), &index, 10).unwrap().ids(), from_cli[q]);
    }
}

#[test]
fn threaded_search_is_identical() {
    let run = pipeline();
    let out = Command::new(env!("CARGO_BIN_EXE_dcmq"))
        .args([
            "search",
            "--model",
            s(&run.p("model.mdl")),
            "--index",
            s(&run.p("gallery.idx")),
            "--queries",
            s(&run.p("data").join("query_img.emb")),
            "--modality",
            "image",
            "--topk",
            "10",
            "--out",
            s(&run.p("rank4.csv")),
        ])
        .env("DCMQ_THREADS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(run.p("rank.csv")).unwrap(),
        std::fs::read(run.p("rank4.csv")).unwrap()
    );
}

#[test]
fn topk_beyond_gallery_truncates_and_self_query_ranks_first() {
    let run = pipeline();
    let gallery = run.p("data").join("gallery_txt.emb");
    ok(&[
        "search",
        "--model",
        s(&run.p("model.mdl")),
        "--index",
        s(&run.p("gallery.idx")),
        "--queries",
        s(&gallery),
        "--modality",
        "text",
        "--topk",
        "1000",
        "--out",
        s(&run.p("self.csv")),
    ]);
    let text = std::fs::read_to_string(run.p("self.csv")).unwrap();
    let rankings = parse_rankings_csv(&text, 40).unwrap();
    let index = read_index(&run.p("gallery.idx")).unwrap();
    for (q, ranking) in rankings.iter().enumerate() {
        assert_eq!(ranking.len(), 40);
        // the item's own code has the highest reachable score; only an
        // identical code with a smaller id may precede it
        let first = ranking.iter().position(|&g| g == q).unwrap();
        for &g in &ranking[..first] {
            assert!(g < q && index.codes()[g] == index.codes()[q]);
        }
    }
}

#[test]
fn eval_perfect_and_reversed() {
    let run = pipeline();
    let data = run.p("data");
    let q = dcmq::formats::read_lbl(&data.join("query.lbl")).unwrap();
    let g = dcmq::formats::read_lbl(&data.join("gallery.lbl")).unwrap();
    let judge = dcmq::eval::RelevanceJudge::new(q.clone(), g.clone()).unwrap();
    let mut perfect = String::from("query_id,rank,gallery_id,score\n");
    let mut reversed = perfect.clone();
    for qi in 0..q.len() {
        let (mut rel, mut irr): (Vec<usize>, Vec<usize>) = (0..g.len()).partition(|&gi| judge.relevant(qi, gi));
        let order: Vec<usize> = rel.iter().chain(irr.iter()).copied().collect();
        for (r, gi) in order.iter().enumerate() {
            perfect.push_str(&format!("{qi},{},{gi},0\n", r + 1));
        }
        irr.append(&mut rel);
        for (r, gi) in irr.iter().enumerate() {
            reversed.push_str(&format!("{qi},{},{gi},0\n", r + 1));
        }
    }
    for (name, text) in [("perfect", &perfect), ("reversed", &reversed)] {
        std::fs::write(run.p(name), text).unwrap();
        ok(&[
            "eval",
            "--rankings",
            s(&run.p(name)),
            "--labels-q",
            s(&data.join("query.lbl")),
            "--labels-g",
            s(&data.join("gallery.lbl")),
            "--map-at",
            "40",
            "--top",
            "40",
            "--recall-at",
            "40",
            "--ap-denominator",
            "min-r-total",
            "--out",
            s(&run.p(&format!("{name}.csv"))),
        ]);
    }
    let map = |name: &str| -> f64 {
        let text = std::fs::read_to_string(run.p(&format!("{name}.csv"))).unwrap();
        text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(map("perfect"), 1.0);
    // oracle: every relevant item sits after all irrelevant ones
    let mut want = 0.0;
    let mut counted = 0;
    for qi in 0..q.len() {
        let total = (0..g.len()).filter(|&gi| judge.relevant(qi, gi)).count();
        if total == 0 {
            continue;
        }
        let skip = g.len() - total;
        want += (1..=total).map(|h| h as f64 / (skip + h) as f64).sum::<f64>() / total as f64;
        counted += 1;
    }
    assert!((map("reversed") - want / counted as f64).abs() < 1e-12);
}

#[test]
fn inspect_constant_and_uniform_indices() {
    let dir = tempfile::tempdir().unwrap();
    let cb = Codebooks::init(4, 16, 32, &mut dcmq::numerics::SeededRng::new(1)).unwrap();
    let mut rng = dcmq::numerics::SeededRng::new(2);
    let constant: Vec<_> = (0..200).map(|_| pack_code(&[3, 3, 3, 3], 16).unwrap()).collect();
    let uniform: Vec<_> = (0..4000)
        .map(|_| pack_code(&(0..4).map(|_| rng.below(16)).collect::<Vec<_>>(), 16).unwrap())
        .collect();
    for (name, codes, lo, hi) in [("constant", constant, 0.0, 0.0), ("uniform", uniform, 3.95, 4.0)] {
        let n = codes.len();
        let idx = Index::from_parts(cb.clone(), codes, (0..n).collect(), None).unwrap();
        let path = dir.path().join(format!("{name}.idx"));
        write_index(&path, &idx).unwrap();
        let out = dir.path().join(format!("{name}.csv"));
        ok(&["inspect", "--index", s(&path), "--out", s(&out)]);
        for line in std::fs::read_to_string(&out).unwrap().lines().skip(1) {
            let h: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((lo..=hi).contains(&h), "{name}: {h}");
        }
    }
}

#[test]
fn empty_gallery_and_dim_mismatch() {
    let run = pipeline();
    let empty = run.p("empty.emb");
    dcmq::formats::write_emb(&empty, &ndarray::Array2::zeros((0, 12))).unwrap();
    ok(&[
        "build-index",
        "--model",
        s(&run.p("model.mdl")),
        "--gallery",
        s(&empty),
        "--modality",
        "text",
        "--out",
        s(&run.p("empty.idx")),
    ]);
    assert!(read_index(&run.p("empty.idx")).unwrap().is_empty());
    // image gallery has 16 columns, the text head expects 12
    let out = dcmq(&[
        "build-index",
        "--model",
        s(&run.p("model.mdl")),
        "--gallery",
        s(&run.p("data").join("gallery_img.emb")),
        "--modality",
        "text",
        "--out",
        s(&run.p("bad.idx")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape"));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&dcmq(&["--help"])), 0);
    assert_eq!(code(&dcmq(&["--version"])), 0);
    assert_eq!(code(&dcmq(&[])), 1);
    assert_eq!(code(&dcmq(&["frobnicate"])), 1);
    assert_eq!(code(&dcmq(&["synth", "--bogus"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.emb");
    let out = dcmq(&[
        "train",
        "--images",
        s(&missing),
        "--texts",
        s(&missing),
        "--teacher-img",
        s(&missing),
        "--teacher-txt",
        s(&missing),
        "--out",
        s(&dir.path().join("m.mdl")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.emb"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "m = 4\ncolour = blue\n").unwrap();
    assert_eq!(code(&dcmq(&["train", "--config", s(&cfg)])), 1);
    std::fs::write(&cfg, "m = 3\n").unwrap();
    let out = dcmq(&[
        "train",
        "--config",
        s(&cfg),
        "--images",
        s(&missing),
        "--texts",
        s(&missing),
        "--teacher-img",
        s(&missing),
        "--teacher-txt",
        s(&missing),
        "--out",
        s(&dir.path().join("m.mdl")),
    ]);
    // validated before any file is opened
    assert_eq!(code(&out), 1);

    let junk = dir.path().join("junk.emb");
    std::fs::write(&junk, b"XXXXXXXX\0\0\0\0\0\0\0\0").unwrap();
    let out = dcmq(&["inspect", "--index", s(&junk), "--out", s(&dir.path().join("u.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn divergence_exits_with_three() {
    let run = pipeline();
    let data = run.p("data");
    let out = dcmq(&[
        "train",
        "--images",
        s(&data.join("train_img.emb")),
        "--texts",
        s(&data.join("train_txt.emb")),
        "--teacher-img",
        s(&data.join("train_teacher_img.emb")),
        "--teacher-txt",
        s(&data.join("train_teacher_txt.emb")),
        "--m",
        "4",
        "--dim",
        "32",
        "--image-hidden",
        "8",
        "--text-hidden",
        "8",
        "--epochs",
        "3",
        "--lr",
        "1e300",
        "--out",
        s(&run.p("boom.mdl")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn raw_target_flag_trains() {
    let run = pipeline();
    ok(&[
        "train",
        "--config",
        s(&run.p("run.cfg")),
        "--target",
        "raw",
        "--no-gumbel",
        "--no-joint",
        "--out",
        s(&run.p("raw.mdl")),
    ]);
    let m = read_model(&run.p("raw.mdl")).unwrap();
    assert_eq!(m.config.target, dcmq::targets::TargetMode::Raw);
    assert!(!m.config.gumbel && !m.config.joint);
    assert_ne!(
        std::fs::read(run.p("raw.mdl")).unwrap(),
        std::fs::read(run.p("model.mdl")).unwrap()
    );
}

#[test]
fn default_training_on_default_synth_output_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out-dir", s(&data)]);
    let start = std::time::Instant::now();
    ok(&[
        "train",
        "--images",
        s(&data.join("train_img.emb")),
        "--texts",
        s(&data.join("train_txt.emb")),
        "--teacher-img",
        s(&data.join("train_teacher_img.emb")),
        "--teacher-txt",
        s(&data.join("train_teacher_txt.emb")),
        "--labels",
        s(&data.join("train.lbl")),
        "--out",
        s(&dir.path().join("model.mdl")),
    ]);
    let elapsed = start.elapsed();
    assert!(elapsed < std::time::Duration::from_secs(120), "{elapsed:?}");
    let m = read_model(&dir.path().join("model.mdl")).unwrap();
    assert_eq!(m.config, dcmq::student::TrainConfig::default());
    assert_eq!(m.loss_trace.len(), 20 * 2000usize.div_ceil(64));
}
