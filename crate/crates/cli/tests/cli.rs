//! End-to-end tests of the `sltk` binary: every subcommand, wired together
//! the way a user would run them.

use std::path::Path;
use std::process::Command;

fn sltk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sltk"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn sltk");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_tiny_configs(dir: &Path) {
    std::fs::write(
        dir.join("spec.json"),
        r#"{"n_enc_layers":1,"n_dec_layers":1,"d_model":16,"d_ff":32,"h":2,"dropout":0.0,"label_smoothing":0.1,"pre_norm":true,"conv_channels":8,"emb_scale":1.0}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("train.json"),
        r#"{"epochs":2,"batch_target_units":64,"warmup":10,"k":0.5,"label_smoothing":0.1,"dropout":0.0,"seed":1,"average_last":2,"mt_loss_weight":1.0}"#,
    )
    .unwrap();
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_tiny_configs(dir);

    run_ok(sltk().args([
        "gen",
        "--out-dir",
        dir.join("data").to_str().unwrap(),
        "--seed",
        "5",
        "--n-train",
        "12",
        "--n-dev",
        "4",
        "--n-test",
        "4",
        "--alphabet",
        "6",
        "--min-len",
        "2",
        "--max-len",
        "3",
        "--frames-per-token",
        "2",
        "--noise-sd",
        "0.05",
        "--feature-dim",
        "8",
    ]));
    assert!(dir.join("data/train.jsonl").exists());
    assert!(dir.join("data/task.json").exists());

    run_ok(sltk().args([
        "train",
        "--data-dir",
        dir.join("data").to_str().unwrap(),
        "--out-dir",
        dir.join("asr").to_str().unwrap(),
        "--role",
        "asr",
        "--model-spec",
        dir.join("spec.json").to_str().unwrap(),
        "--train-config",
        dir.join("train.json").to_str().unwrap(),
    ]));
    assert!(dir.join("asr/average.sqbr").exists());
    assert!(dir.join("asr/loss.csv").exists());
    assert!(dir.join("asr/checkpoints/epoch-001.sqbr").exists());
    let loss_csv = std::fs::read_to_string(dir.join("asr/loss.csv")).unwrap();
    assert!(loss_csv.starts_with("step,loss,lrate\n"));

    run_ok(sltk().args([
        "train",
        "--data-dir",
        dir.join("data").to_str().unwrap(),
        "--out-dir",
        dir.join("mt").to_str().unwrap(),
        "--role",
        "mt",
        "--model-spec",
        dir.join("spec.json").to_str().unwrap(),
        "--train-config",
        dir.join("train.json").to_str().unwrap(),
    ]));

    // checkpoint averaging on the epoch files
    run_ok(sltk().args([
        "average",
        "--inputs",
        dir.join("asr/checkpoints/epoch-000.sqbr").to_str().unwrap(),
        dir.join("asr/checkpoints/epoch-001.sqbr").to_str().unwrap(),
        "--out",
        dir.join("asr/manual-avg.sqbr").to_str().unwrap(),
    ]));
    assert!(dir.join("asr/manual-avg.sqbr").exists());

    run_ok(sltk().args([
        "decode",
        "--run",
        dir.join("asr").to_str().unwrap(),
        "--data",
        dir.join("data/dev.jsonl").to_str().unwrap(),
        "--out-prefix",
        dir.join("dev-asr").to_str().unwrap(),
        "--beam",
        "3",
        "--n-best",
        "2",
    ]));
    let hyp = std::fs::read_to_string(dir.join("dev-asr.hyp")).unwrap();
    assert_eq!(hyp.lines().count(), 4);
    for line in hyp.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 4, "utt_id, text, logprob, normalized: {line}");
        assert!(fields[0].starts_with("utt-"));
        fields[2].parse::<f64>().unwrap();
        fields[3].parse::<f64>().unwrap();
    }
    let nbest = std::fs::read_to_string(dir.join("dev-asr.nbest")).unwrap();
    assert_eq!(nbest.lines().count(), 8, "two ranked rows per utterance");

    run_ok(sltk().args([
        "cascade",
        "--asr-run",
        dir.join("asr").to_str().unwrap(),
        "--mt-run",
        dir.join("mt").to_str().unwrap(),
        "--data",
        dir.join("data/dev.jsonl").to_str().unwrap(),
        "--mode",
        "ranked-n-best",
        "--out-prefix",
        dir.join("dev-cascade").to_str().unwrap(),
        "--asr-beam",
        "3",
        "--mt-beam",
        "2",
        "--n-best",
        "2",
    ]));
    assert!(dir.join("dev-cascade.hyp").exists());
    assert!(dir.join("dev-cascade.asr").exists());

    // evaluate the cascade output against references
    let refs: Vec<String> = std::fs::read_to_string(dir.join("data/dev.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["target"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    std::fs::write(dir.join("dev.ref"), refs.join("\n") + "\n").unwrap();
    let hyps: Vec<String> = std::fs::read_to_string(dir.join("dev-cascade.hyp"))
        .unwrap()
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().to_string())
        .collect();
    std::fs::write(dir.join("dev.hyp"), hyps.join("\n") + "\n").unwrap();
    let eval_out = run_ok(sltk().args([
        "evaluate",
        "--refs",
        dir.join("dev.ref").to_str().unwrap(),
        "--hyps",
        dir.join("dev.hyp").to_str().unwrap(),
        "--json",
        dir.join("report.json").to_str().unwrap(),
    ]));
    assert!(eval_out.contains("WER"));
    assert!(eval_out.contains("BLEU"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["wer"].is_number());
}

#[test]
fn experiment_and_report_with_results_env() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // a tiny experiment config to keep this fast
    let cfg = r#"{
        "id": "cli-exp", "kind": "asr", "dataset_id": "cli-d1", "seed": 0,
        "task": {"alphabet": 6, "min_len": 2, "max_len": 3, "frames_per_token": 2, "noise_sd": 0.05, "feature_dim": 8},
        "n_train": 10, "n_dev": 3, "n_test": 3,
        "src_token_mode": "char", "tgt_token_mode": "char",
        "asr": {"n_enc_layers":1,"n_dec_layers":1,"d_model":16,"d_ff":32,"h":2,"dropout":0.0,"label_smoothing":0.1},
        "mt": {"n_enc_layers":1,"n_dec_layers":1,"d_model":16,"d_ff":32,"h":2,"dropout":0.0,"label_smoothing":0.1},
        "e2e": {"n_enc_layers":1,"n_dec_layers":1,"d_model":16,"d_ff":32,"h":2,"dropout":0.0,"label_smoothing":0.1},
        "train": {"epochs":1,"batch_target_units":64,"warmup":10,"k":0.5,"label_smoothing":0.1,"dropout":0.0,"seed":0,"average_last":1,"mt_loss_weight":1.0},
        "decode_asr": {"beam":2,"length_penalty_alpha":1.0,"eos_gamma":1.0,"max_len":32,"n_best":2},
        "decode_mt": {"beam":2,"length_penalty_alpha":1.0,"eos_gamma":1.0,"max_len":32,"n_best":2},
        "connector": {"kind":"linear"},
        "emb_avg_rate": 0.1, "emb_avg_encoder": false, "emb_avg_decoder": true
    }"#;
    std::fs::write(dir.join("exp.json"), cfg).unwrap();
    let out = run_ok(
        sltk()
            .env("SLTK_RESULTS_DIR", dir.join("res").to_str().unwrap())
            .args(["experiment", "--config", dir.join("exp.json").to_str().unwrap()]),
    );
    assert!(out.contains("\"kind\":\"asr\""));
    assert!(dir.join("res/results.jsonl").exists());

    let table = run_ok(
        sltk()
            .env("SLTK_RESULTS_DIR", dir.join("res").to_str().unwrap())
            .args([
                "report",
                "--dataset",
                "cli-d1",
                "--json",
                dir.join("rows.json").to_str().unwrap(),
            ]),
    );
    assert!(table.contains("cli-exp [asr]"), "{table}");
    assert!(table.contains("dev/wer"));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("rows.json")).unwrap()).unwrap();
    assert!(rows.as_array().unwrap().len() >= 2);
}

#[test]
fn failures_exit_nonzero_with_stage_name() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // decode with a missing run directory
    let out = sltk()
        .args([
            "decode",
            "--run",
            dir.join("nope").to_str().unwrap(),
            "--data",
            dir.join("missing.jsonl").to_str().unwrap(),
            "--out-prefix",
            dir.join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error"), "{stderr}");

    // experiment that fails mid-stage leaves a marked row and exits nonzero
    let cfg = r#"{
        "id": "cli-fail", "kind": "asr", "dataset_id": "cli-d2", "seed": 0,
        "task": {"alphabet": 6, "min_len": 2, "max_len": 3, "frames_per_token": 2, "noise_sd": 0.05, "feature_dim": 8},
        "n_train": 6, "n_dev": 2, "n_test": 2,
        "src_token_mode": "char", "tgt_token_mode": "char",
        "asr": {"n_enc_layers":1,"n_dec_layers":1,"d_model":16,"d_ff":32,"h":2,"dropout":0.0,"label_smoothing":0.1},
        "mt": {"n_enc_layers":1,"n_dec_layers":1,"d_model":16,"d_ff":32,"h":2,"dropout":0.0,"label_smoothing":0.1},
        "e2e": {"n_enc_layers":1,"n_dec_layers":1,"d_model":16,"d_ff":32,"h":2,"dropout":0.0,"label_smoothing":0.1},
        "train": {"epochs":1,"batch_target_units":1,"warmup":10,"k":0.5,"label_smoothing":0.1,"dropout":0.0,"seed":0,"average_last":1,"mt_loss_weight":1.0},
        "decode_asr": {"beam":2,"length_penalty_alpha":1.0,"eos_gamma":1.0,"max_len":32,"n_best":2},
        "decode_mt": {"beam":2,"length_penalty_alpha":1.0,"eos_gamma":1.0,"max_len":32,"n_best":2},
        "connector": {"kind":"linear"},
        "emb_avg_rate": 0.1, "emb_avg_encoder": false, "emb_avg_decoder": true
    }"#;
    std::fs::write(dir.join("bad.json"), cfg).unwrap();
    let out = sltk()
        .env("SLTK_RESULTS_DIR", dir.join("res2").to_str().unwrap())
        .args(["experiment", "--config", dir.join("bad.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("train_asr"), "stage name in stderr: {stderr}");
    let rows = std::fs::read_to_string(dir.join("res2/results.jsonl")).unwrap();
    assert!(rows.contains("failed:train_asr"));
}
