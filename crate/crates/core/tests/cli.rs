use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "epochs = 2\nbatch_size = 3\nlatent_dim = 8\ntime_embed_dim = 8\ndecoder_hidden = 16\n\
                    decoder_blocks = 1\nencoder_hidden = 16\nencoder_features = 16\nlatent_hidden = 16\nlatent_blocks = 1\n";

fn cli(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothdiff"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SMOOTHDIFF_OUT")
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) {
    let out = cli(cwd, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(cwd: &Path, args: &[&str]) -> i32 {
    cli(cwd, args).status.code().unwrap()
}

/// Dataset of six small tori plus a two-epoch checkpoint in `t/`.
fn trained() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("c.toml"), TINY).unwrap();
    ok(root, &["synth", "--kind", "torus", "--count", "6", "--points", "64", "--out", "d"]);
    ok(root, &["train", "--config", "c.toml", "--dataset", "d", "--out", "t"]);
    dir
}

#[test]
fn train_writes_run_directory() {
    let dir = trained();
    let t = dir.path().join("t");
    for f in ["loss.csv", "model.sdpc", "config.toml", "run_manifest.json"] {
        assert!(t.join(f).is_file(), "{f} missing");
    }
    let loss = std::fs::read_to_string(t.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert!(loss.starts_with("epoch,recon,latent,entropy,total"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(t.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["epochs_done"], 2);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn resume_appends_to_loss_curve() {
    let dir = trained();
    let root = dir.path();
    ok(root, &["train", "--config", "c.toml", "--dataset", "d", "--resume", "t/model.sdpc", "--epochs", "2", "--out", "t"]);
    let loss = std::fs::read_to_string(root.join("t/loss.csv")).unwrap();
    let epochs: Vec<&str> = loss.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["0", "1", "2", "3"]);
    let (_, done) = smoothdiff::checkpoint::load(&root.join("t/model.sdpc")).unwrap();
    assert_eq!(done, 4);
}

#[test]
fn zero_alpha_matches_mode_off() {
    let dir = trained();
    let root = dir.path();
    let common = ["sample", "--checkpoint", "t/model.sdpc", "--count", "2", "--points", "64", "--steps", "20", "--seed", "4"];
    ok(root, &[&common[..], &["--alpha", "0", "--mode", "frozen", "--out", "a"]].concat());
    ok(root, &[&common[..], &["--alpha", "0", "--mode", "off", "--out", "b"]].concat());
    ok(root, &[&common[..], &["--alpha", "1e-3", "--knn-k", "8", "--out", "c"]].concat());
    for f in ["sample_0000.xyz", "sample_0001.xyz"] {
        let a = std::fs::read(root.join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(root.join("b").join(f)).unwrap());
        assert_ne!(a, std::fs::read(root.join("c").join(f)).unwrap());
    }
}

#[test]
fn eval_of_a_set_against_itself() {
    let dir = trained();
    let root = dir.path();
    ok(root, &["eval", "--reference", "d", "--generated", "d", "--knn-k", "8", "--out", "m.csv"]);
    let text = std::fs::read_to_string(root.join("m.csv")).unwrap();
    let value = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(value("mmd"), 0.0);
    assert_eq!(value("cov"), 1.0);
    assert_eq!(value("rs"), 0.0);
}

#[test]
fn sample_trajectory_and_sweep_outputs() {
    let dir = trained();
    let root = dir.path();
    ok(root, &["sample", "--checkpoint", "t/model.sdpc", "--count", "1", "--points", "64", "--steps", "10", "--knn-k", "8", "--trajectory", "--out", "s"]);
    let traj = std::fs::read_to_string(root.join("s/trajectory_0000.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "step,t,smoothness");
    assert_eq!(traj.lines().count(), 11);

    ok(root, &["sweep-k", "--checkpoint", "t/model.sdpc", "--reference", "d", "--k", "4,8", "--metric-k", "8",
               "--count", "2", "--points", "64", "--steps", "10", "--out", "sw.csv"]);
    let sweep = std::fs::read_to_string(root.join("sw.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = trained();
    let root = dir.path();
    // configuration conflicts and bad parameters
    assert_eq!(code(root, &["sample", "--checkpoint", "t/model.sdpc", "--alpha", "1e-3", "--mode", "off"]), 2);
    assert_eq!(code(root, &["sample", "--checkpoint", "t/model.sdpc", "--mode", "sideways"]), 2);
    assert_eq!(code(root, &["train", "--config", "c.toml", "--out", "x"]), 2);
    std::fs::write(root.join("bad.toml"), "learning_rate = 1.0\n").unwrap();
    let out = cli(root, &["train", "--config", "bad.toml", "--dataset", "d"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
    assert_eq!(code(root, &["synth", "--kind", "torus", "--count", "0", "--out", "z"]), 2);
    assert_eq!(code(root, &["no-such-command"]), 2);
    // data problems
    assert_eq!(code(root, &["sample", "--checkpoint", "missing.sdpc"]), 3);
    std::fs::write(root.join("junk.sdpc"), b"not a checkpoint").unwrap();
    assert_eq!(code(root, &["sample", "--checkpoint", "junk.sdpc"]), 3);
    std::fs::create_dir(root.join("empty")).unwrap();
    assert_eq!(code(root, &["eval", "--reference", "empty", "--generated", "d"]), 3);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_smoothdiff"))
        .args(["synth", "--kind", "sphere", "--count", "2", "--points", "16"])
        .current_dir(dir.path())
        .env("SMOOTHDIFF_OUT", "elsewhere")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("elsewhere").read_dir().unwrap().count() > 0);
}

#[test]
fn denoise_demo_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["denoise-demo"]);
    assert!(out.status.success());
    assert!(!out.stdout.is_empty());
}
