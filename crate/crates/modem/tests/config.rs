use modem::config::{nearest_key, parse_config, RunConfig, KEYS};
use std::io::Write;

fn write_cfg(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
    let path = dir.path().join("run.cfg");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(text.as_bytes()).unwrap();
    path
}

#[test]
fn empty_file_yields_full_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_cfg(&dir, "");
    let cfg = parse_config(Some(&path), &[]).unwrap();
    assert_eq!(cfg, RunConfig::default());
    // spot-check the published defaults
    assert_eq!(cfg.discount, 0.99);
    assert_eq!(cfg.frame_stack, 2);
    assert_eq!(cfg.seed_steps, 5000);
    assert_eq!(cfg.batch_size, 256);
    assert_eq!(cfg.demo_count, 5);
    assert_eq!(cfg.plan_population, 512);
    assert_eq!(cfg.plan_elites, 64);
    assert_eq!(cfg.plan_init_std, 2.0);
    assert_eq!(cfg.temporal_coef, 0.5);
    assert_eq!(cfg.reward_coef, 0.5);
    assert_eq!(cfg.td_coef, 0.1);
    assert_eq!(cfg.consistency_coef, 2.0);
    assert_eq!(cfg.per_alpha, 0.6);
    assert_eq!(cfg.per_beta, 0.4);
    assert_eq!(cfg.demo_ratio_start, 0.75);
    assert_eq!(cfg.demo_ratio_end, 0.25);
    assert_eq!(cfg.demo_ratio_steps, 100_000);
    assert_eq!(cfg.explore_start, 0.1);
    assert_eq!(cfg.explore_end, 0.05);
    assert_eq!(cfg.explore_steps, 25_000);
    assert_eq!(cfg.ema_coef, 0.99);
    assert_eq!(cfg.lr, 3e-4);
    assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
    // ±10/224 of a 32-pixel image, rounded up
    assert_eq!(cfg.resolved_max_shift(), 2);
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_cfg(&dir, "demo_count = 5\nbatch_size = 32\n# comment\n\nseed = 7\n");
    let overrides = vec![("demo_count".to_string(), "1".to_string())];
    let cfg = parse_config(Some(&path), &overrides).unwrap();
    assert_eq!(cfg.demo_count, 1);
    assert_eq!(cfg.batch_size, 32);
    assert_eq!(cfg.seed, 7);
}

#[test]
fn unknown_key_suggests_the_nearest_valid_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_cfg(&dir, "demos_count = 5\n");
    let err = parse_config(Some(&path), &[]).unwrap_err().to_string();
    assert!(err.contains("demos_count"), "{}", err);
    assert!(err.contains("demo_count"), "{}", err);
    assert_eq!(nearest_key("demos_count").as_deref(), Some("demo_count"));
    assert_eq!(nearest_key("lr"), Some("lr".to_string()));
    assert!(nearest_key("zzzzzzzzzzzz").is_none());
}

#[test]
fn out_of_range_values_name_key_and_constraint() {
    let dir = tempfile::tempdir().unwrap();
    for (line, key) in [
        ("discount = 1.5", "discount"),
        ("temporal_coef = 0", "temporal_coef"),
        ("horizon = 0", "horizon"),
        ("seed_steps = 999999999", "seed_steps"),
        ("plan_elites = 100000", "plan_elites"),
        ("grid_size = 4", "grid_size"),
        ("max_shift = 40", "max_shift"),
    ] {
        let path = write_cfg(&dir, line);
        let err = parse_config(Some(&path), &[]).unwrap_err().to_string();
        assert!(err.contains(key), "'{}' missing from '{}'", key, err);
    }
}

#[test]
fn malformed_lines_report_the_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_cfg(&dir, "seed = 1\nthis is not a key value pair\n");
    let err = parse_config(Some(&path), &[]).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{}", err);
}

#[test]
fn snapshot_reparses_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.set("task", "point_push").unwrap();
    cfg.set("seeds", "3,4,5").unwrap();
    cfg.set("grid_size", "16").unwrap();
    cfg.set("demo_noise", "0.125").unwrap();
    cfg.set("pretrain_policy", "false").unwrap();
    let snapshot = cfg.emit();
    let path = write_cfg(&dir, &snapshot);
    let reparsed = parse_config(Some(&path), &[]).unwrap();
    // the snapshot writes the resolved shift, so compare resolved views
    assert_eq!(reparsed.resolved_max_shift(), cfg.resolved_max_shift());
    let mut cfg_resolved = cfg.clone();
    cfg_resolved.max_shift = Some(cfg.resolved_max_shift());
    assert_eq!(reparsed, cfg_resolved);
    // emitting again is byte-stable
    assert_eq!(reparsed.emit(), snapshot);
}

#[test]
fn every_key_is_settable_and_gettable() {
    let mut cfg = RunConfig::default();
    for key in KEYS {
        let v = cfg.get(key);
        cfg.set(key, &v).unwrap_or_else(|e| panic!("{}: {}", key, e));
    }
    assert_eq!(cfg, {
        let mut c = RunConfig::default();
        c.max_shift = Some(c.resolved_max_shift());
        c
    });
}

#[test]
fn missing_file_is_an_io_error() {
    let err = parse_config(Some(std::path::Path::new("/nonexistent/x.cfg")), &[]);
    assert!(matches!(err, Err(modem::Error::Io { .. })));
}
