use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sts_core::dsp::{read_mel1, read_wav, write_wav, WavFormat, Waveform};
use sts_core::melody::{write_f0_file, F0Track};

fn sts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sts"))
        .args(args)
        .env_remove("STS_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A voiced tone with a little vibrato, long enough to pass the duration
/// filter.
fn tone(path: &Path, hz: f64, seconds: f64) {
    let sr = 22050;
    let n = (seconds * sr as f64) as usize;
    let mut phase = 0.0f64;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            phase += 2.0 * std::f64::consts::PI * hz * (1.0 + 0.01 * (5.0 * t).sin()) / sr as f64;
            (0.4 * phase.sin() + 0.1 * (2.0 * phase).sin()) as f32
        })
        .collect();
    write_wav(path, &Waveform::new(samples, sr).unwrap(), WavFormat::Pcm16).unwrap();
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn corpus() -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    tone(&root.join("speech1.wav"), 140.0, 1.8);
    tone(&root.join("sing1.wav"), 220.0, 2.0);
    tone(&root.join("speech2.wav"), 120.0, 1.7);
    tone(&root.join("sing2.wav"), 330.0, 1.9);
    std::fs::write(
        root.join("train.jsonl"),
        "{\"id\": \"a\", \"speech\": \"speech1.wav\", \"singing\": \"sing1.wav\"}\n\
         {\"id\": \"b\", \"speech\": \"speech2.wav\", \"singing\": \"sing2.wav\"}\n",
    )
    .unwrap();
    Corpus { _dir: dir, root }
}

fn train_args<'a>(features: &'a str, run: &'a str, steps: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "train",
        "--features",
        features,
        "--run-dir",
        run,
        "--steps",
        steps,
        "--seed",
        "4",
        "--batch-size",
        "2",
        "--segment-frames",
        "32",
        "--set",
        "checkpoint_every=5",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn prepare_train_convert_evaluate_plot() {
    let c = corpus();
    let r = &c.root;
    let feats = r.join("feats");

    let o = sts(&["prepare", p(&r.join("train.jsonl")), p(&feats)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("2 ok, 0 failed, 2 rebuilt"), "{}", stdout(&o));
    assert!(feats.join("a/speech.mel1").is_file() && feats.join("b/contour.f0").is_file());
    let o = sts(&["prepare", p(&r.join("train.jsonl")), p(&feats)]);
    assert!(stdout(&o).contains("2 ok, 0 failed, 0 rebuilt"), "{}", stdout(&o));
    let o = sts(&["prepare", p(&r.join("train.jsonl")), p(&feats), "--force"]);
    assert!(stdout(&o).contains("2 rebuilt"), "{}", stdout(&o));

    // Training writes one metrics row per step and is reproducible.
    let run1 = r.join("run1");
    let run2 = r.join("run2");
    let o = sts(&train_args(p(&feats), p(&run1), "10", &[]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv1 = std::fs::read_to_string(run1.join("metrics.csv")).unwrap();
    assert_eq!(csv1.lines().count(), 11);
    assert!(run1.join("config.txt").is_file());
    sts(&train_args(p(&feats), p(&run2), "10", &[]));
    assert_eq!(std::fs::read_to_string(run2.join("metrics.csv")).unwrap(), csv1);

    // Resuming from step 5 reproduces the rest of the run.
    let run3 = r.join("run3");
    let o = sts(&train_args(p(&feats), p(&run3), "5", &[]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ckpt5 = run3.join("checkpoints/step-00000005.ckpt");
    let o = sts(&train_args(p(&feats), p(&run3), "10", &["--resume", p(&ckpt5)]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(run3.join("metrics.csv")).unwrap(), csv1);

    // Resuming with a different trajectory setting names the key.
    let o = sts(&train_args(p(&feats), p(&r.join("run4")), "10", &["--resume", p(&ckpt5), "--set", "beta=0.9"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));

    let o = sts(&train_args(p(&feats), p(&r.join("run5")), "10", &["--set", "gamma=1.5"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
    let o = sts(&train_args(p(&feats), p(&r.join("run5")), "10", &["--set", "decay_interval=0"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("decay_interval"), "{}", stderr(&o));
    let o = sts(&train_args(p(&feats), p(&r.join("run5")), "10", &["--set", "bogus=1"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));

    // Conversion with Griffin-Lim.
    let ckpt = run1.join("checkpoints/latest.ckpt");
    let f0 = r.join("melody.f0");
    let frames = 40usize;
    let hop = 276.0 / 22050.0;
    let track = F0Track::new(
        (0..frames).map(|i| i as f64 * hop).collect(),
        (0..frames).map(|i| if i < 30 { 261.63 } else { 0.0 }).collect(),
    )
    .unwrap();
    write_f0_file(&f0, &track).unwrap();
    let out = r.join("out/sung.wav");
    let convert = |out: &Path, extra: &[&str]| {
        let mut a = vec![
            "convert",
            "--speech",
            p(&r.join("speech1.wav")),
            "--f0",
            p(&f0),
            "--checkpoint",
            p(&ckpt),
            "--out",
            p(out),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        a.extend(extra.iter().map(|s| s.to_string()));
        sts(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let o = convert(&out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let wav = read_wav(&out).unwrap();
    assert_eq!(wav.sample_rate(), 22050);
    assert_eq!(wav.len(), frames * 276);
    let mel_a = std::fs::read(out.with_extension("mel1")).unwrap();
    assert_eq!(read_mel1(out.with_extension("mel1")).unwrap().n_frames(), frames);
    convert(&out, &[]);
    assert_eq!(std::fs::read(out.with_extension("mel1")).unwrap(), mel_a);

    // External vocoder: called as `<cmd> <mel> <wav>`.
    let script = r.join("vocoder.sh");
    std::fs::write(&script, "#!/bin/sh\necho \"$1\" > \"$2.args\"\ncp \"$VOC_SRC\" \"$2\"\n").unwrap();
    std::process::Command::new("chmod").args(["+x", p(&script)]).status().unwrap();
    std::env::set_var("VOC_SRC", r.join("sing1.wav"));
    let ext = r.join("ext.wav");
    let o = convert(&ext, &["--vocoder", "external", "--vocoder-cmd", p(&script)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let args = std::fs::read_to_string(r.join("ext.wav.args")).unwrap();
    assert_eq!(args.trim(), p(&ext.with_extension("mel1")));
    assert!(ext.is_file());

    // Too-short melody and mismatched config are validation errors.
    let short = r.join("short.f0");
    write_f0_file(&short, &F0Track::new(vec![0.0, hop, 2.0 * hop], vec![220.0; 3]).unwrap()).unwrap();
    let o = sts(&[
        "convert", "--speech", p(&r.join("speech1.wav")), "--f0", p(&short), "--checkpoint", p(&ckpt), "--out",
        p(&r.join("x.wav")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("8"), "{}", stderr(&o));
    let cfg = r.join("other.cfg");
    std::fs::write(&cfg, "seed = 4\nbatch_size = 2\nsegment_frames = 32\nlr = 0.5\n").unwrap();
    let o = convert(&r.join("y.wav"), &["--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lr"), "{}", stderr(&o));

    // Evaluation: the identity stub on matching audio scores zero LSD.
    std::fs::write(
        r.join("same.jsonl"),
        "{\"id\": \"x\", \"speech\": \"sing1.wav\", \"singing\": \"sing1.wav\"}\n\
         {\"id\": \"y\", \"speech\": \"sing2.wav\", \"singing\": \"sing2.wav\"}\n\
         {\"id\": \"z\", \"speech\": \"sing2.wav\", \"singing\": \"sing1.wav\"}\n",
    )
    .unwrap();
    let report = r.join("eval/identity.csv");
    let o = sts(&["evaluate", "--manifest", p(&r.join("same.jsonl")), "--identity", "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let lsd: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(&lsd[..2], &[0.0, 0.0]);
    assert!(report.with_extension("summary.txt").is_file());
    let o = sts(&["evaluate", "--manifest", p(&r.join("train.jsonl")), "--checkpoint", p(&ckpt), "--out", p(&r.join("m.csv"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(r.join("m.csv")).unwrap().lines().count(), 3);
    std::fs::write(r.join("empty.jsonl"), "").unwrap();
    let o = sts(&["evaluate", "--manifest", p(&r.join("empty.jsonl")), "--identity", "--out", p(&r.join("e.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no paired examples"), "{}", stderr(&o));

    let png = r.join("plot.png");
    let o = sts(&["plot", "--input", p(&out.with_extension("mel1")), "--input", p(&r.join("sing1.wav")), "--out", p(&png)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(std::fs::read(&png).unwrap().starts_with(b"\x89PNG"));
}

#[test]
fn prepare_reports_missing_audio() {
    let c = corpus();
    let r = &c.root;
    std::fs::write(
        r.join("bad.jsonl"),
        "{\"id\": \"good\", \"speech\": \"speech1.wav\", \"singing\": \"sing1.wav\"}\n\
         {\"id\": \"lost\", \"speech\": \"nowhere.wav\", \"singing\": \"sing2.wav\"}\n",
    )
    .unwrap();
    let o = sts(&["prepare", p(&r.join("bad.jsonl")), p(&r.join("f"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("lost"), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 ok, 1 failed"), "{}", stdout(&o));

    std::fs::write(r.join("nosing.jsonl"), "{\"speech\": \"speech1.wav\"}\n").unwrap();
    let o = sts(&["prepare", p(&r.join("nosing.jsonl")), p(&r.join("g"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":1"), "{}", stderr(&o));
    assert!(!r.join("g").exists());
}
