use std::path::Path;
use std::process::{Command, Output};

use rwkv_asr::frontend::{write_feature_file, FeatureSequence};
use rwkv_asr::runtime::synth_dataset;

const TINY: &str = "d_io=12\nd_att=12\nd_linear=24\nblocks=1\ndropout=0\nvocab=4\nd_pred=8\nd_joint=12\n\
conv_channels=2\nfeat_dim=10\nnum_utts=24\nepochs=1\nbatch_size=4\nmin_len=1\nmax_len=3\nheld_out=0.25\n";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwkv-asr")).args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Trains the tiny config and writes one synthetic utterance as a FEAT file.
fn trained(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let ckpt = dir.join("m.ckpt");
    let out = run(&["train", "--config", path(&cfg), "--out", path(&ckpt), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("epoch 1 train_nll"), "{text}");
    assert!(text.contains("saved"));
    let data = synth_dataset(9, 1, 4, 3..=3).unwrap();
    let src = &data.utterances[0].features.frames;
    // The tiny config reads 10-dimensional frames.
    let rows: Vec<Vec<f32>> = (0..src.rows()).map(|t| src.row(t)[..10].to_vec()).collect();
    let frames = rwkv_asr::Tensor::from_rows(&rows).unwrap();
    let feat = dir.join("u.feat");
    write_feature_file(&feat, &FeatureSequence::new(frames).unwrap()).unwrap();
    (ckpt, feat)
}

#[test]
fn train_decode_stream_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, feat) = trained(dir.path());

    let parallel = run(&["decode", "--ckpt", path(&ckpt), "--input", path(&feat)]);
    assert!(parallel.status.success());
    let streamed = run(&["decode", "--ckpt", path(&ckpt), "--input", path(&feat), "--mode", "stream"]);
    assert_eq!(stdout(&parallel), stdout(&streamed));

    let live = run(&["stream", "--ckpt", path(&ckpt), "--input", path(&feat)]);
    assert!(live.status.success());
    let joined = stdout(&live).lines().collect::<Vec<_>>().join(" ");
    assert_eq!(joined, stdout(&parallel).trim_end());

    let bench = run(&["bench", "--ckpt", path(&ckpt), "--frames", "50"]);
    let text = stdout(&bench);
    assert!(bench.status.success());
    for key in ["frames 50", "state_bytes ", "step_us_per_frame ", "latency_ms 0", "left_context 1"] {
        assert!(text.contains(key), "missing {key:?} in {text}");
    }
}

#[test]
fn loss_and_epoch_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let ckpt = dir.path().join("bat.ckpt");
    let out = run(&["train", "--config", path(&cfg), "--out", path(&ckpt), "--loss", "bat", "--epochs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("epoch 2 "));
    assert!(ckpt.exists());
}

#[test]
fn verify_oracle_suite_passes() {
    let out = run(&["verify", "--suite", "oracle", "--seed", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().count() >= 1);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let feat = dir.path().join("x.feat");
    std::fs::write(&feat, b"FEAT 0 10\n").unwrap();
    let out = run(&["decode", "--ckpt", path(&junk), "--input", path(&feat)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "vocab=4\nwidth=3\n").unwrap();
    let out = run(&["train", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key width"));

    assert!(!run(&["decode"]).status.success());
}

#[test]
fn shipped_toy_config_parses() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.cfg")).unwrap();
    let run = rwkv_asr::runtime::RunConfig::parse(&text).unwrap();
    assert_eq!(run.model.vocab, 16);
    assert_eq!(run.train.num_utts, 2000);
    assert_eq!(run.train.stop_at_accuracy, Some(0.95));
}
