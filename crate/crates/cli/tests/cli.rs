use std::path::Path;
use std::process::{Command, Output};

use neurodiv::checkpoint::Champion;
use neurodiv::config::ExperimentConfig;
use neurodiv::network::{count_parameters, Architecture, NeuronMode};

fn neurodiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurodiv")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// A small but complete swing-up experiment that runs in well under a second.
const TINY: &str = r#"
schema_version = 1
preset = "cartpole-recurrent"
[env]
max_steps = 100
[arch]
layer_sizes = [5, 6, 1]
[optimizer]
ga_generations = 70
total_generations = 80
eval_episodes = 4
[optimizer.ga]
population_size = 16
[optimizer.cmaes]
population_size = 8
[run]
checkpoint_every = 20
final_eval_episodes = 5
"#;

fn champion_file(dir: &Path, mode: NeuronMode) -> String {
    let arch = Architecture::new(vec![5, 128, 64, 1], mode, 0);
    let n = count_parameters(&arch);
    let genome = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 250.0 - 2.0).collect();
    let c = Champion::new(arch, Default::default(), genome).unwrap();
    let p = dir.join(format!("{mode:?}.json"));
    c.save(&p).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_smoke_with_preset_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\npreset = \"cartpole-recurrent\"\n[optimizer]\ntotal_generations = 2\n[run]\nfinal_eval_episodes = 3\n",
    );
    let out = dir.path().join("run");
    let o = neurodiv(&["train", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "{history}");
    assert!(history.starts_with("generation,stage,best_fitness,best_so_far,mean_fitness,std_fitness,periodic_eval_mean,periodic_eval_std,wallclock"));
    Champion::load(&out.join("champion.json")).unwrap();
    assert!(stdout(&o).contains("held-out"));
}

#[test]
fn reruns_are_bit_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(neurodiv(&["train", "--config", &cfg, "--out-dir", a.to_str().unwrap()]).status.success());
    assert!(neurodiv(&["train", "--config", &cfg, "--out-dir", b.to_str().unwrap(), "--workers", "3"]).status.success());
    for f in ["history.csv", "champion.json", "eval.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert!(neurodiv(&["train", "--config", &cfg, "--out-dir", c.to_str().unwrap(), "--seed-override", "9"]).status.success());
    assert_ne!(std::fs::read(a.join("history.csv")).unwrap(), std::fs::read(c.join("history.csv")).unwrap());
}

#[test]
fn invalid_config_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\npreset = \"cartpole-recurrent\"\n[optimizer]\nga_generations = 200\ntotal_generations = 100\n",
    );
    let out = dir.path().join("run");
    let o = neurodiv(&["train", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ga_generations"), "{}", stderr(&o));
    assert!(!out.exists());

    let bad = write(dir.path(), "bad.toml", "schema_version = 1\npreset = \"cartpole-recurrent\"\n[arch]\nneuron_mod = \"simple\"\n");
    let o = neurodiv(&["train", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("neuron_mod"), "{}", stderr(&o));

    assert_eq!(neurodiv(&["train"]).status.code(), Some(1));
    assert_eq!(neurodiv(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let champ = champion_file(dir.path(), NeuronMode::Recurrent);
    let out = dir.path().join("eval");
    let o = neurodiv(&["eval", "--champion", &champ, "--episodes", "1", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["n_episodes"], 1);
    assert_eq!(report["std"], 0.0);
    assert_eq!(report["mean"], report["scores"][0]);
}

#[test]
fn eval_rejects_corrupt_or_mutated_champions() {
    let dir = tempfile::tempdir().unwrap();
    let champ = champion_file(dir.path(), NeuronMode::Recurrent);
    let text = std::fs::read_to_string(&champ).unwrap();

    let truncated = write(dir.path(), "truncated.json", &text[..text.len() / 2]);
    let o = neurodiv(&["eval", "--champion", &truncated, "--episodes", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let mut c: serde_json::Value = serde_json::from_str(&text).unwrap();
    c["weight_checksum"] = serde_json::Value::String("ab".repeat(32));
    let mutated = write(dir.path(), "mutated.json", &c.to_string());
    let o = neurodiv(&["eval", "--champion", &mutated, "--episodes", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("weights were mutated"), "{}", stderr(&o));
}

#[test]
fn probe_writes_layer_traces() {
    let dir = tempfile::tempdir().unwrap();
    let rec = champion_file(dir.path(), NeuronMode::Recurrent);
    let o = neurodiv(&["probe", "--champion", &rec, "--layer", "2", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("traces_layer2.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 1 + 2 * 64);
    assert_eq!(rdr.records().count(), 1000);
    assert!(dir.path().join("ordering_layer2.json").exists());

    let simple_dir = dir.path().join("simple");
    let simple = champion_file(dir.path(), NeuronMode::Simple);
    let o = neurodiv(&["probe", "--champion", &simple, "--layer", "2", "--out-dir", simple_dir.to_str().unwrap()]);
    assert!(o.status.success());
    let mut rdr = csv::Reader::from_path(simple_dir.join("traces_layer2.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.len(), 1 + 64);
    assert!(headers.iter().all(|h| !h.contains("state")));

    let o = neurodiv(&["probe", "--champion", &rec, "--layer", "7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains('7'), "{}", stderr(&o));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TINY);
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    assert!(neurodiv(&["train", "--config", &cfg, "--out-dir", full.to_str().unwrap()]).status.success());

    let o = neurodiv(&["train", "--config", &cfg, "--out-dir", part.to_str().unwrap(), "--stop-after", "60"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("generation 60"), "{}", stdout(&o));
    assert!(!part.join("champion.json").exists());
    let ckpt = part.join("checkpoint.bin");

    let mut edited = ExperimentConfig::from_toml_str(TINY).unwrap();
    edited.arch.layer_sizes = vec![5, 7, 1];
    let edited = write(dir.path(), "edited.toml", &edited.to_toml_string().unwrap());
    let o = neurodiv(&["resume", "--checkpoint", ckpt.to_str().unwrap(), "--config", &edited]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("arch"), "{}", stderr(&o));

    let o = neurodiv(&["resume", "--checkpoint", ckpt.to_str().unwrap(), "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["history.csv", "champion.json", "eval.json"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(part.join(f)).unwrap(), "{f}");
    }

    let o = neurodiv(&["resume", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("nothing to do"), "{}", stdout(&o));
}

#[test]
fn presets_print_as_loadable_configs() {
    let o = neurodiv(&["preset"]);
    assert!(stdout(&o).contains("cartpole-same-ffnn"));
    let o = neurodiv(&["preset", "cartpole-small-ffnn"]);
    let cfg = ExperimentConfig::from_toml_str(&stdout(&o)).unwrap();
    assert_eq!(cfg.arch.layer_sizes, vec![5, 32, 32, 1]);
    assert_eq!(neurodiv(&["preset", "nope"]).status.code(), Some(1));
}

#[test]
fn shipped_champion_reproduces_its_recorded_score() {
    let champ = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../champions/recurrent-reduced-s0/champion.json");
    let recorded = Champion::load(&champ).unwrap().held_out.unwrap();
    let dir = tempfile::tempdir().unwrap();
    // a fresh block of held-out seeds, disjoint from the recorded one
    let seed = (recorded.base_seed + 10_000).to_string();
    let o = neurodiv(&["eval", "--champion", champ.to_str().unwrap(), "--seed", &seed, "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("eval.json")).unwrap()).unwrap();
    let mean = report["mean"].as_f64().unwrap();
    assert_eq!(report["n_episodes"], 100);
    assert!((mean - recorded.mean).abs() <= recorded.std, "{mean} vs {} ± {}", recorded.mean, recorded.std);

    let o = neurodiv(&["probe", "--champion", champ.to_str().unwrap(), "--layer", "2", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let ordering: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("ordering_layer2.json")).unwrap()).unwrap();
    assert!(ordering["max_divergence"].as_f64().unwrap() > 0.0);
}
