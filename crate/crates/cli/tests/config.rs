//! Flag > config file > default precedence, config-file parsing and the
//! `config.txt` echo.

mod common;

use std::fs;
use std::path::Path;

use common::{read_json, s, tiny_dataset, tten, tten_ok};
use serde_json::json;
use tempfile::tempdir;

const TINY: [&str; 8] = [
    "--users",
    "12",
    "--items",
    "10",
    "--interactions-per-user",
    "3",
    "--test-items-per-user",
    "2",
];

fn echoed(dir: &Path, key: &str) -> Option<String> {
    let text = fs::read_to_string(dir.join("config.txt")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .find_map(|l| {
            let (k, v) = l.split_once(" = ")?;
            (k == key).then(|| v.to_string())
        })
}

#[test]
fn precedence_matrix() {
    let tmp = tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "# file layer\npopularity_mix = 0.7\nseed = 9\n").unwrap();
    // (file, flag, expected mix, expected seed)
    let cases = [
        (false, false, 0.5, 0),
        (true, false, 0.7, 9),
        (false, true, 0.9, 4),
        (true, true, 0.9, 4),
    ];
    for (n, (file, flag, mix, seed)) in cases.into_iter().enumerate() {
        let out = tmp.path().join(format!("case{n}"));
        let mut args = vec!["generate", "--out", s(&out)];
        args.extend_from_slice(&TINY);
        if file {
            args.extend_from_slice(&["--config", s(&cfg)]);
        }
        if flag {
            args.extend_from_slice(&["--popularity-mix", "0.9", "--seed", "4"]);
        }
        tten_ok(&args);
        let truth = read_json(&out.join("ground_truth.json"));
        assert_eq!(truth["spec"]["popularity_mix"], json!(mix), "case {n}");
        assert_eq!(truth["spec"]["seed"], json!(seed), "case {n}");
        assert_eq!(echoed(&out, "popularity-mix"), Some(mix.to_string()), "case {n}");
        assert_eq!(echoed(&out, "seed"), Some(seed.to_string()), "case {n}");
        assert_eq!(echoed(&out, "users"), Some("12".into()));
        assert_eq!(echoed(&out, "out"), None, "output dir is not echoed");
    }
}

#[test]
fn config_paths_are_relative_to_the_file_and_the_echo_replays() {
    let tmp = tempdir().unwrap();
    let (train, test) = tiny_dataset(tmp.path(), 2);
    let conf_dir = tmp.path().join("conf");
    fs::create_dir(&conf_dir).unwrap();
    let cfg = conf_dir.join("train.conf");
    fs::write(
        &cfg,
        "train-file = ../data-2/train.txt\n\
         test_file = \"../data-2/test.txt\"\n\
         dim = 6   \n\
         batch-size = 16\n\
         epochs = 2\n\
         loss = bpr\n",
    )
    .unwrap();
    let first = tmp.path().join("first");
    tten_ok(&["train", "--config", s(&cfg), "--dim", "4", "--out", s(&first)]);
    let report = read_json(&first.join("report.json"));
    assert_eq!(report["config"]["dim"], json!(4), "flag beats file");
    assert_eq!(report["config"]["batch_size"], json!(16));
    assert_eq!(report["config"]["loss"], json!("bpr"));
    let shown = std::path::absolute(conf_dir.join("../data-2/train.txt")).unwrap();
    assert_eq!(echoed(&first, "train-file"), Some(s(&shown).to_string()));
    assert!(fs::read(&train).is_ok() && fs::read(&test).is_ok());

    let replay = tmp.path().join("replay");
    tten_ok(&["train", "--config", s(&first.join("config.txt")), "--out", s(&replay)]);
    for name in ["report.json", "final.emb", "config.txt"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(replay.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_file_errors_name_the_line() {
    let tmp = tempdir().unwrap();
    let cases = [
        ("dim = 4\nbogus = 1\n", ":2:", "bogus"),
        ("dim 4\n", ":1:", "="),
        ("dim = 4\ndim = 5\n", ":2:", "dim"),
        ("dim =\n", ":1:", "dim"),
        ("# ok\n\ndim = four\n", ":3:", "four"),
    ];
    for (n, (text, line, needle)) in cases.into_iter().enumerate() {
        let cfg = tmp.path().join(format!("bad{n}.conf"));
        fs::write(&cfg, text).unwrap();
        let out = tten(&["train", "--synthetic", "--config", s(&cfg), "--epochs", "1"]);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(!out.status.success(), "case {n} succeeded");
        assert!(stderr.contains(needle), "case {n}: {stderr}");
        assert!(stderr.contains(line), "case {n}: {stderr}");
    }
    let missing = tten(&["train", "--config", s(&tmp.path().join("nope.conf"))]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.conf"));
}

#[test]
fn sweep_grid_can_come_from_the_file() {
    let tmp = tempdir().unwrap();
    let (train, test) = tiny_dataset(tmp.path(), 3);
    let run = tmp.path().join("run");
    tten_ok(&[
        "train",
        "--train-file",
        s(&train),
        "--test-file",
        s(&test),
        "--epochs",
        "1",
        "--dim",
        "4",
        "--batch-size",
        "16",
        "--out",
        s(&run),
    ]);
    let cfg = tmp.path().join("sweep.conf");
    fs::write(&cfg, "p-grid = 0.2:0.6:0.2\nk = 3\n").unwrap();
    let out = tmp.path().join("sweep");
    tten_ok(&[
        "sweep",
        "--config",
        s(&cfg),
        "--train-file",
        s(&train),
        "--test-file",
        s(&test),
        "--embeddings",
        s(&run.join("final.emb")),
        "--out",
        s(&out),
    ]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let ps: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ps.len(), 3, "{csv}");
    let parsed: Vec<f64> = ps.iter().map(|p| p.parse().unwrap()).collect();
    for (got, want) in parsed.iter().zip([0.2, 0.4, 0.6]) {
        assert!((got - want).abs() < 1e-12, "{ps:?}");
    }
    assert_eq!(echoed(&out, "p-grid"), Some("0.2:0.6:0.2".into()));
}
