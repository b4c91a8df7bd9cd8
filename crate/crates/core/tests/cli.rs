use std::path::Path;
use std::sync::Arc;

use amod_core::cli::{main_with_args, split_days};
use amod_core::config::ScenarioConfig;
use amod_core::demand::RequestDistribution;
use amod_core::features::ModelWeights;
use amod_core::io::{load_json, load_requests, load_travel_times, Manifest};
use amod_core::learning::{build_training_set, train};
use amod_core::sim::run_simulation;

const CONFIG: &str = r#"
fleet_size = 8
period_s = 60
horizon_epochs = 20
start_s = 112800
objective = "profit"

[inputs]
requests = "data/requests.csv"
travel_times = "data/travel_times.json"

[policy]
kind = "sample_based"
horizon_s = 300

[training]
core_start_s = 25200
core_end_s = 25800
warmup_s = 600
cooldown_s = 600
extraction_period_s = 300
perturbations = 3
max_iterations = 4

[synthetic]
width_m = 2000
height_m = 2000
requests_per_hour = 60
days = 2
day_start_s = 24000
day_end_s = 27600
"#;

fn amod(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("amod").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(p).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn unknown_flags_and_missing_files_fail() {
    assert_eq!(amod(&["simulate", "--frobnicate"]), 2);
    assert_eq!(amod(&["launch"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.toml");
    assert_ne!(amod(&["simulate", "--config", s(&missing), "--out", s(dir.path())]), 0);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[inputs]\nrequests = \"nope.csv\"\n").unwrap();
    assert_ne!(amod(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]), 0);
}

#[test]
fn empty_stream_simulates_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(amod(&["simulate", "--out", s(&out), "--fleet", "3"]), 0);
    let rows = csv_rows(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "greedy");
    for field in 1..=5 {
        assert_eq!(rows[0][field].parse::<f64>().unwrap(), 0.0, "column {field}");
    }
    let m: Manifest = load_json(&out.join("manifest.json")).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.fallback_speed_kmh, Some(20.0));
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg_path = root.join("scenario.toml");
    std::fs::write(&cfg_path, CONFIG).unwrap();
    let data = root.join("data");
    let c = s(&cfg_path);

    assert_eq!(amod(&["generate", "--config", c, "--out", s(&data), "--seed", "5"]), 0);
    let first = std::fs::read(data.join("requests.csv")).unwrap();
    assert_eq!(amod(&["generate", "--config", c, "--out", s(&data), "--seed", "5"]), 0);
    assert_eq!(std::fs::read(data.join("requests.csv")).unwrap(), first, "same seed, same bytes");

    let cal = root.join("cal");
    assert_eq!(amod(&["calibrate", "--config", c, "--out", s(&cal)]), 0);
    let dist: RequestDistribution = load_json(&cal.join("distribution.json")).unwrap();
    assert_eq!(dist.days, 2.0);

    let fi = root.join("fi");
    assert_eq!(amod(&["full-info", "--config", c, "--out", s(&fi)]), 0);
    let bound: serde_json::Value = load_json(&fi.join("full_info.json")).unwrap();
    let bound = bound["bound"].as_f64().unwrap();

    let greedy = root.join("greedy");
    assert_eq!(amod(&["simulate", "--config", c, "--out", s(&greedy), "--policy", "greedy"]), 0);
    let g = csv_rows(&greedy.join("metrics.csv"));
    assert!(g[0][1].parse::<f64>().unwrap() <= bound + 1e-9);

    let trained = root.join("trained");
    assert_eq!(amod(&["train", "--config", c, "--out", s(&trained)]), 0);
    let model_path = trained.join("model.json");
    assert!(csv_rows(&trained.join("trace.csv")).len() >= 2);

    let sb = root.join("sb");
    assert_eq!(amod(&["simulate", "--config", c, "--out", s(&sb), "--model", s(&model_path)]), 0);
    let from_cli = csv_rows(&sb.join("metrics.csv"));

    // The same pipeline in process gives the same model and the same run.
    let cfg = ScenarioConfig::load(&cfg_path).unwrap();
    let tt = load_travel_times(&data.join("travel_times.json")).unwrap();
    let reqs = load_requests(&data.join("requests.csv"), 1.0, cfg.seeds.data, &cfg.objective(), &tt).unwrap().requests;
    let d = amod_core::demand::calibrate_distribution(&reqs, &cfg.rebalancing_grid(tt.area()), cfg.grid.bin_width_s).unwrap();
    let set = build_training_set(&split_days(&reqs), &d, &tt, &cfg.training_set_config(tt.area()).unwrap()).unwrap();
    let (model, _) = train(&set.instances, &cfg.train_config(), set.schema, set.normalization.clone()).unwrap();
    assert_eq!(ModelWeights::load(&model_path).unwrap(), model);

    let mut cfg = cfg;
    cfg.policy.model = Some(model_path.clone());
    let spec = cfg.policy_spec(&cfg.policy, tt.area()).unwrap();
    let tt = Arc::new(tt);
    let start = cfg.start_s.unwrap();
    let first_epoch = (start / cfg.period_s) as u32;
    let warm: Vec<_> = reqs.iter().filter(|r| r.start_time >= start - cfg.warmup_s && r.start_time < start).copied().collect();
    let scenario = amod_core::sim::Scenario {
        requests: reqs.clone(),
        fleet: amod_core::sim::place_fleet(&warm, cfg.fleet_size, tt.area(), cfg.seeds.fleet),
        first_epoch,
        epochs: cfg.horizon_epochs,
        period_s: cfg.period_s,
        objective: cfg.objective(),
        tt: tt.clone(),
        dist: Some(Arc::new(d)),
        snapshots: false,
    };
    let m = run_simulation(&scenario, &spec).unwrap().metrics;
    assert_eq!(&from_cli[0][0], "sample_based");
    assert_eq!(from_cli[0][1].parse::<f64>().unwrap(), m.reward);
    assert_eq!(from_cli[0][3].parse::<usize>().unwrap(), m.served);

    let eval = root.join("eval");
    assert_eq!(amod(&["evaluate", "--config", c, "--out", s(&eval), "--fleets", "4,8", "--densities", "0.5,1"]), 0);
    let rows = csv_rows(&eval.join("comparison.csv"));
    assert_eq!(rows.len(), 2 * 2 * 2);
    let manifest: Manifest = load_json(&eval.join("manifest.json")).unwrap();
    assert!(manifest.config_sha256.is_some());
    assert_eq!(manifest.inputs.len(), 2);
}
