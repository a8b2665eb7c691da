use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tabcond(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabcond")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&tabcond(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&tabcond(tmp.path(), &[])), 1);
    assert_eq!(code(&tabcond(tmp.path(), &["bogus"])), 1);
    assert_eq!(code(&tabcond(tmp.path(), &["experiment", "--kind", "drums"])), 1);
    fs::write(tmp.path().join("bad.toml"), "rng_seed = 1\nunknown_key = 2\n").unwrap();
    assert_eq!(code(&tabcond(tmp.path(), &["preprocess", "--config", "bad.toml"])), 1);
    assert_eq!(code(&tabcond(tmp.path(), &["preprocess", "--top-k", "0"])), 1);
    assert_eq!(code(&tabcond(tmp.path(), &["prompt", "--genre", "metal", "--mode", "full"])), 1);
}

#[test]
fn missing_inputs_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tabcond(tmp.path(), &["preprocess", "--corpus-dir", "absent"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&tabcond(tmp.path(), &["generate", "--model", "absent.json", "--combo", "b-d"])), 2);
    assert_eq!(code(&tabcond(tmp.path(), &["report", "--dir", "absent"])), 2);
}

#[test]
fn prompt_prints_instrument_block() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tabcond(tmp.path(), &["prompt", "--combo", "dg-b-d", "--mode", "partial"]);
    assert_eq!(code(&out), 0);
    let tokens: Vec<String> = stdout(&out).split_whitespace().map(str::to_string).collect();
    assert_eq!(
        tokens,
        [
            "artist:unknown", "downtune:0", "tempo:120", "inst_start", "distorted0", "bass", "drums", "inst_end",
            "start", "distorted0:note:s6:f0",
        ]
    );
}

#[test]
fn config_driven_pipeline_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&tabcond(dir, &["synth", "--kind", "separable", "--count", "30", "--seed", "4", "--out", "raw"])), 0);
    fs::write(
        dir.join("desk.toml"),
        "corpus_dir = \"raw\"\noutput_dir = \"out\"\nrng_seed = 1\n\n[experiment]\nper_cell_instrument = 2\nper_cell_genre = 2\nsnippets_per_genre = 2\n\n[preprocess]\nmin_genre_count = 10\n",
    )
    .unwrap();
    let flags = ["--config", "desk.toml", "--seed", "9"];
    for stage in [&["preprocess"][..], &["train"], &["experiment", "--kind", "instrument"], &["experiment", "--kind", "genre"]] {
        let args: Vec<&str> = stage.iter().chain(&flags).copied().collect();
        let out = tabcond(dir, &args);
        assert_eq!(code(&out), 0, "{stage:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(json(&dir.join("out/preprocess/stats.json"))["rng_seed"], 9);
    let run = json(&dir.join("out/experiments/instrument/run.json"));
    assert_eq!((run["songs"].as_u64(), run["per_cell"].as_u64()), (Some(64), Some(2)));
    let metrics = fs::read_to_string(dir.join("out/experiments/instrument/metrics.csv")).unwrap();
    assert!(metrics.starts_with("song_id,group,prompt_mode,combo_or_genre,pce,gc,pip,uip"));
    assert_eq!(metrics.lines().count(), 65);

    let out = tabcond(dir, &["stats", "--metrics", "out/experiments/instrument/metrics.csv", "--metric", "pip", "--out", "pip.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stats = json(&dir.join("pip.json"));
    assert_eq!(stats["reports"][0]["metric"], "pip");
    assert_eq!(stats["reports"][0]["df"], 3);

    let out = tabcond(dir, &["report", "--config", "desk.toml"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("genre experiment"));

    let gen = |seed: &str| {
        let out = tabcond(dir, &["generate", "--model", "out/models/genre.json", "--genre", "rock", "--mode", "empty", "--rng-seed", seed, "--count", "2"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    assert_eq!(gen("3"), gen("3"));
    assert_ne!(gen("3"), gen("4"));
}

#[test]
fn single_model_training_and_generation_to_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&tabcond(dir, &["synth", "--kind", "natural", "--count", "20", "--out", "songs"])), 0);
    let out = tabcond(dir, &["train", "--order", "3", "--corpus", "songs", "--out", "model.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(dir.join("prompt.txt"), "artist:unknown downtune:0 tempo:120 start").unwrap();
    let out = tabcond(dir, &["generate", "--model", "model.json", "--prompt", "prompt.txt", "--count", "3", "--max-tokens", "64", "--out", "gen"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<_> = fs::read_dir(dir.join("gen")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, ["song-0000.txt", "song-0001.txt", "song-0002.txt"]);
    let text = fs::read_to_string(dir.join("gen/song-0000.txt")).unwrap();
    assert!(text.split_whitespace().count() <= 4 + 64);

    let out = tabcond(dir, &["baselines", "--kind", "rhythm", "--input", "songs", "--out", "rhythm"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(dir.join("rhythm")).unwrap().count(), 20);
}
