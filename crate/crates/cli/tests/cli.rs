use std::path::Path;
use std::process::{Command, Output};

fn mmnlse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmnlse"))
        .args(args)
        .current_dir(dir)
        .env_remove("MMNLSE_OUTPUT_DIR")
        .env_remove("MMNLSE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL_SSF: [&str; 4] = ["--set", "ssf.n_t=256", "--set", "ssf.n_z=1000"];

#[test]
fn tables_exit_zero_and_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmnlse(&["tables", "--output-dir", "t"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("t/tables.csv")).unwrap();
    assert!(csv.starts_with("table,row,column,computed,printed,rel_dev,tolerance,gated,pass,note"));
    assert!(!csv.contains(",true,false,"), "a gated cell failed");
}

#[test]
fn unknown_kind_and_preset_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&mmnlse(&["run", "--kind", "bogus"], tmp.path())), 2);
    assert_eq!(code(&mmnlse(&["run", "--kind", "ssf", "--preset", "nope"], tmp.path())), 2);
    std::fs::write(tmp.path().join("c.toml"), "kind = \"ssf\"\npreset = \"case1\"\nmystery = 1\n").unwrap();
    assert_eq!(code(&mmnlse(&["run", "--config", "c.toml"], tmp.path())), 2);
    assert_eq!(code(&mmnlse(&["run", "--kind", "analytic", "--preset", "case4"], tmp.path())), 2);
}

#[test]
fn rerun_from_stored_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--kind", "ssf", "--preset", "case4", "--output-dir", "a"];
    args.extend(SMALL_SSF);
    assert_eq!(code(&mmnlse(&args, tmp.path())), 0);
    let o = mmnlse(&["run", "--config", "a/config.toml", "--output-dir", "b"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["fields.bin", "l2.csv"] {
        assert_eq!(std::fs::read(tmp.path().join("a").join(f)).unwrap(), std::fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
    let manifest = |d: &str| -> serde_json::Value { serde_json::from_str(&std::fs::read_to_string(tmp.path().join(d).join("manifest.json")).unwrap()).unwrap() };
    let (a, b) = (manifest("a"), manifest("b"));
    assert_eq!(a["outputs"], b["outputs"]);
    assert_eq!(a["seed"], b["seed"]);
    assert_eq!(a["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn manifest_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--kind", "analytic", "--preset", "case1", "--output-dir", "m"];
    args.extend(SMALL_SSF);
    assert_eq!(code(&mmnlse(&args, tmp.path())), 0);
    let first = std::fs::read(tmp.path().join("m/manifest.json")).unwrap();
    assert_eq!(code(&mmnlse(&args, tmp.path())), 0);
    assert_eq!(first, std::fs::read(tmp.path().join("m/manifest.json")).unwrap());
}

#[test]
fn compare_identical_fields_is_zero_and_mode_mismatch_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--kind", "analytic", "--preset", "case1", "--output-dir", "ref"];
    args.extend(SMALL_SSF);
    assert_eq!(code(&mmnlse(&args, tmp.path())), 0);
    let o = mmnlse(
        &["compare", "--preset", "case1", "--checkpoint", "ref/fields.bin", "--reference", "ref/fields.bin", "--output-dir", "cmp"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(tmp.path().join("cmp/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("mode,mse_abs,mse_re,mse_im,max_err"));
    for (i, l) in lines.enumerate() {
        assert_eq!(l, format!("{},0.0,0.0,0.0,0.0", i + 1));
    }

    let mut args = vec!["run", "--kind", "analytic", "--preset", "desk-single", "--output-dir", "one"];
    args.extend(SMALL_SSF);
    assert_eq!(code(&mmnlse(&args, tmp.path())), 0);
    let o = mmnlse(
        &["compare", "--preset", "case1", "--checkpoint", "one/fields.bin", "--reference", "ref/fields.bin", "--output-dir", "bad"],
        tmp.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode"));
}

#[test]
fn diverging_training_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmnlse(
        &["run", "--kind", "train", "--preset", "desk-single", "--budget", "desk", "--lr", "1e300", "--min-lr", "1e290", "--max-iterations", "50", "--output-dir", "div"],
        tmp.path(),
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("div/manifest.json").exists());
}

#[test]
fn short_training_writes_checkpoint_and_compare_reads_it() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmnlse(
        &["run", "--kind", "train", "--preset", "desk-single", "--budget", "desk", "--max-iterations", "5", "--n-interior", "512", "--output-dir", "tr"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let loss = std::fs::read_to_string(tmp.path().join("tr/loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("iteration,total,pde,ic,lr"));
    assert_eq!(loss.lines().count(), 6);
    for f in ["net.bin", "net.json", "report.json", "metrics.csv", "config.toml"] {
        assert!(tmp.path().join("tr").join(f).exists(), "{f}");
    }
    let mut args = vec!["run", "--kind", "analytic", "--preset", "desk-single", "--output-dir", "ref"];
    args.extend(SMALL_SSF);
    assert_eq!(code(&mmnlse(&args, tmp.path())), 0);
    let o = mmnlse(
        &["compare", "--preset", "desk-single", "--checkpoint", "tr/net.bin", "--reference", "ref/fields.bin", "--output-dir", "cmp"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let errors = std::fs::read_to_string(tmp.path().join("cmp/errors.csv")).unwrap();
    assert_eq!(errors.lines().next(), Some("z,T,mode,abs_err,re_err,im_err"));
}

#[test]
fn several_presets_fan_out_into_separate_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--kind", "ssf", "--preset", "case3", "--preset", "case4", "--jobs", "2", "--output-dir", "multi"];
    args.extend(SMALL_SSF);
    let o = mmnlse(&args, tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for p in ["case3", "case4"] {
        assert!(tmp.path().join("multi").join(p).join("fields.bin").exists());
    }
}

#[test]
fn env_output_dir_is_below_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["run", "--kind", "analytic", "--preset", "case1"];
        args.extend(SMALL_SSF);
        args.extend(extra);
        Command::new(env!("CARGO_BIN_EXE_mmnlse"))
            .args(&args)
            .current_dir(tmp.path())
            .env("MMNLSE_OUTPUT_DIR", "from_env")
            .output()
            .unwrap()
    };
    assert_eq!(code(&run(&[])), 0);
    assert!(tmp.path().join("from_env/manifest.json").exists());
    assert_eq!(code(&run(&["--output-dir", "from_flag"])), 0);
    assert!(tmp.path().join("from_flag/manifest.json").exists());
}
