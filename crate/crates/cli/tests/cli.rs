use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn forage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forage"))
        .args(args)
        .env("FORAGE_THREADS", "1")
        .output()
        .expect("forage runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{name}.cfg"));
    let text = format!(
        "[experiment]\nname = {name}\nseed = 3\n\n[ppo]\nn_envs = 4\nrollout_len = 8\nminibatches = 2\nepochs = 1\ntotal_steps = 64\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn train(dir: &Path, name: &str) -> PathBuf {
    let cfg = write_config(dir, name, "");
    let out = dir.join(format!("{name}-run"));
    let o = forage(&["train", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--log-every", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn train_writes_checkpoint_log_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train(tmp.path(), "ScoreG-P2-FC-XP");
    for f in ["agent_0.bin", "agent_1.bin", "manifest.json", "training_log.csv", "trainer_state.json", "run.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let log = std::fs::read_to_string(out.join("training_log.csv")).unwrap();
    assert!(log.starts_with("step,agent_id,mean_return,action_entropy,message_entropy,value_loss,lr"));
    // 64 steps at 4·8 = 32 per iteration: two iterations, two agents each.
    assert_eq!(log.lines().count(), 5);
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["experiment"], "ScoreG-P2-FC-XP");
    assert_eq!(run["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn steps_override_sets_schedule_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ScoreG-P2-FC-XP", "");
    let out = tmp.path().join("run");
    let o = forage(&[
        "train",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--steps-override",
        "1.92e2",
        "--log-every",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("total_steps = 192"));
    let log = std::fs::read_to_string(out.join("training_log.csv")).unwrap();
    let lrs: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    // Six iterations of 32 steps; row 2k carries the lr used at step 32k.
    assert_eq!(lrs.len(), 12);
    assert!((lrs[0] - 2.5e-4).abs() < 1e-12);
    assert!((lrs[8] - 2.5e-4 / 3.0).abs() < 1e-12);
}

#[test]
fn misspelled_key_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ScoreG-P2-FC-XP", "leraning_rate = 0.001\n");
    let o = forage(&["train", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("leraning_rate"), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_exits_with_checkpoint_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = forage(&["eval", "--ckpt", tmp.path().join("nope").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn eval_self_pairing_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "ScoreG-P2-FC-XP");
    let run = |out: &str| {
        let out = tmp.path().join(out);
        let o = forage(&[
            "eval",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--episodes",
            "20",
            "--seeds",
            "0,1",
            "--pairing",
            "self",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out.join("metrics.json")).unwrap()
    };
    let a = run("e1");
    assert_eq!(a, run("e2"));
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    let sr = &v["seeds"][0]["sr"];
    assert!(sr[0][0].is_number() && sr[1][1].is_number());
    assert!(sr[0][1].is_null() && sr[1][0].is_null());
}

#[test]
fn eval_exports_traces_as_json_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "TemporalG-P2-FC-XP");
    let out = tmp.path().join("e");
    let o = forage(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--episodes",
        "5",
        "--seeds",
        "4",
        "--metrics",
        "sr",
        "--pairing",
        "cross",
        "--trace",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = std::fs::read_dir(out.join("traces"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["0-1-0.jsonl", "0-1-1.jsonl", "1-0-0.jsonl", "1-0-1.jsonl"]);
    let text = std::fs::read_to_string(out.join("traces/1-0-1.jsonl")).unwrap();
    let steps = foraging::env::read_trace(&text).unwrap();
    assert!(!steps.is_empty() && steps.len() <= 20);
    for (k, line) in text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["t"], k);
        for key in ["positions", "actions", "tokens_delivered", "reward"] {
            assert!(!v[key].is_null(), "{key} missing");
        }
    }
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["outputs"].as_array().unwrap().len(), 6);
}

#[test]
fn ring_eval_emits_distance_buckets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ScoreG-P15-Ring-XP", "");
    let ckpt = tmp.path().join("ring");
    let o = forage(&["train", cfg.to_str().unwrap(), "--out", ckpt.to_str().unwrap(), "--log-every", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("ring-eval");
    let o = forage(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--episodes",
        "2",
        "--seeds",
        "0",
        "--metrics",
        "sr,ic",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let d: Vec<u64> = v["sr_curve"].as_array().unwrap().iter().map(|p| p["distance"].as_u64().unwrap()).collect();
    assert_eq!(d, (1..=7).collect::<Vec<_>>());
}

#[test]
fn probe_rejects_mismatched_target_and_reports_widths() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "ScoreG-P2-FC-XP");
    let o = forage(&["probe", "--ckpt", ckpt.to_str().unwrap(), "--target", "time"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let out = tmp.path().join("probe");
    let o = forage(&[
        "probe",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--target",
        "hpos",
        "--features",
        "embedding",
        "--samples",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("probe.json")).unwrap()).unwrap();
    assert_eq!(v["summary"][0]["feature_width"], 160);
    assert_eq!(v["summary"][0]["chance"], 0.2);
    let csv = std::fs::read_to_string(out.join("probe.csv")).unwrap();
    assert!(csv.starts_with("game,agent,target,feature_mode,fold,seed,accuracy,chance"));
}

#[test]
fn ablate_validates_ranges_and_reuses_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train(tmp.path(), "ScoreG-P2-FC-XP");
    let o = forage(&["ablate", "--kind", "obstacles", "--ckpt", ckpt.to_str().unwrap(), "--values", "5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let out = tmp.path().join("grid");
    let o = forage(&[
        "ablate",
        "--kind",
        "gridsize",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--values",
        "5,9",
        "--episodes",
        "4",
        "--seeds",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("gridsize,") && l.contains(",9,sr,")), "{csv}");
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "cfg") {
            let text = std::fs::read_to_string(&path).unwrap();
            let cfg = foraging::population::ExperimentConfig::from_text(&text)
                .unwrap_or_else(|err| panic!("{}: {err}", path.display()));
            cfg.validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 5);
}
