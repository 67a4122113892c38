use std::path::PathBuf;

use radarfed::harness::{
    export_csv, read_summary_csv, run_experiment, run_experiment_with, ExperimentConfig, Mode, RunOptions,
    EPOCH_COLUMNS,
};
use radarfed::mixture::DensityGrid;
use radarfed::sidelink::{read_replay, MessageKind, BITS_PER_VALUE, FED_VALUES_PER_COMPONENT};

fn scenario(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    ExperimentConfig::load(&path).unwrap()
}

fn short(mode: Mode, epochs: u64) -> ExperimentConfig {
    let mut cfg = scenario("default.toml");
    cfg.mode = mode;
    cfg.n_epochs = epochs;
    cfg.kl.enabled = false;
    cfg
}

#[test]
fn shipped_scenarios_load() {
    for name in ["default.toml", "shadowed.toml", "colocated.toml"] {
        let cfg = scenario(name);
        cfg.validate().unwrap();
        assert_eq!(cfg.n_radars(), 3);
        assert_eq!(cfg.scenario.targets.len(), 2);
    }
}

#[test]
fn config_survives_toml_round_trip() {
    let cfg = scenario("shadowed.toml");
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_str_any(&text).unwrap(), cfg);
}

#[test]
fn isolated_radars_stay_silent() {
    let out = run_experiment(&short(Mode::Isolated, 20)).unwrap();
    assert_eq!(out.stats.total_bits(), 0);
    assert!(out.records.iter().flat_map(|r| &r.radars).all(|r| r.bits_sent == 0));
    assert_eq!(out.metrics.headline().rate_bps, 0.0);
}

#[test]
fn cooperation_sends_192_bits_per_point() {
    let out = run_experiment(&short(Mode::Cooperation, 20)).unwrap();
    for r in out.records.iter().flat_map(|r| &r.radars) {
        assert_eq!(r.bits_sent, 192 * r.cloud_points as u64);
    }
    let total: u64 = out.records.iter().flat_map(|r| &r.radars).map(|r| r.bits_sent).sum();
    assert_eq!(total, out.stats.total_bits());
}

#[test]
fn federation_sends_mixture_sized_messages() {
    let out = run_experiment(&short(Mode::Federation, 20)).unwrap();
    for r in out.records.iter().flat_map(|r| &r.radars) {
        let values = r.bits_sent / BITS_PER_VALUE;
        assert_eq!(r.bits_sent % BITS_PER_VALUE, 0);
        assert!(values >= 2);
        assert_eq!((values - 2) % FED_VALUES_PER_COMPONENT as u64, 0);
    }
    let coop = run_experiment(&short(Mode::Cooperation, 20)).unwrap();
    assert!(coop.stats.total_bits() > 20 * out.stats.total_bits());
}

#[test]
fn fusion_resolves_the_default_scene() {
    for mode in [Mode::Cooperation, Mode::Federation] {
        let out = run_experiment(&short(mode, 60)).unwrap();
        let m = out.metrics.headline();
        assert!(m.p_u.unwrap() < 0.2, "{mode}: P_u {:?}", m.p_u);
        let mae = m.mae.as_ref().unwrap();
        assert!(mae.x < 0.1 && mae.y < 0.1, "{mode}: {mae:?}");
    }
}

#[test]
fn csv_export_round_trips_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(Mode::Federation, 15);
    let out = run_experiment(&cfg).unwrap();
    let (epochs, summary) = export_csv(dir.path(), &[1, 2], &out.records, &out.metrics).unwrap();

    let mut reader = csv::Reader::from_path(&epochs).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..EPOCH_COLUMNS.len()], EPOCH_COLUMNS);
    assert_eq!(header.len(), EPOCH_COLUMNS.len() + 2 * 5);
    assert_eq!(reader.records().count(), 15 * 3);

    let back = read_summary_csv(&summary).unwrap();
    assert_eq!(back, vec![out.metrics]);
}

#[test]
fn replay_log_matches_link_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("wire.jsonl");
    let options = RunOptions {
        grid_dump: Some((dir.path().join("grids"), 5)),
        replay: Some(replay.clone()),
    };
    let out = run_experiment_with(&short(Mode::Federation, 10), &options).unwrap();
    let messages = read_replay(&replay).unwrap();
    assert_eq!(messages.len(), 10 * 3);
    assert!(messages.iter().all(|m| m.kind() == MessageKind::Fed));
    let bits: u64 = messages.iter().map(|m| m.payload_bits()).sum();
    assert_eq!(bits, out.stats.total_bits());

    let grid = DensityGrid::read_csv(&radarfed::harness::grid_path(&dir.path().join("grids"), 5, 2)).unwrap();
    assert!((grid.total() - 1.0).abs() < 1e-9);
}

#[test]
fn restricted_topology_only_feeds_listed_receivers() {
    let mut cfg = short(Mode::Federation, 10);
    cfg.scenario.edges = Some(vec![[1, 0]]);
    let out = run_experiment(&cfg).unwrap();
    // radar 2 has no link, so its posterior only ever carries its own components
    let alone = run_experiment(&ExperimentConfig {
        mode: Mode::Isolated,
        ..cfg.clone()
    })
    .unwrap();
    for (f, i) in out.records.iter().zip(&alone.records) {
        assert_eq!(f.radars[2].estimates, i.radars[2].estimates);
    }
    assert_eq!(out.stats.link_messages(1, 0), 10);
    assert_eq!(out.stats.link_messages(0, 1), 0);
}
