use vagent::config::{ConfigError, DatasetSpec, InitialState, Origin, RunConfig};
use vagent_core::data::Dataset;

#[test]
fn empty_file_gives_defaults() {
    let cfg = RunConfig::parse("").unwrap();
    assert_eq!((cfg.horizon, cfg.selections), (16, 16));
    assert_eq!(cfg.train.kappa, 0.05);
    assert_eq!(cfg.train.rho, 0.06);
    assert_eq!(cfg.train.lr, 1e-4);
    assert_eq!(cfg.x1, InitialState::Zero);
    let ds = Dataset::new("p", vec![vec![1.0, 1.0]]).unwrap();
    let env = cfg.env_for(&ds).unwrap();
    assert_eq!(env.alphas[0], 1.0);
    assert_eq!(env.alphas[15], 1.0 / 16.0);
    assert_eq!(env.x1, vec![0.0, 0.0]);
}

#[test]
fn horizon_recomputes_rates() {
    let cfg = RunConfig::parse("# comment\n\nH = 4   # trailing comment\n").unwrap();
    let ds = Dataset::new("p", vec![vec![0.5]]).unwrap();
    let env = cfg.env_for(&ds).unwrap();
    assert_eq!(env.alphas, vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
}

#[test]
fn zero_horizon_names_its_line() {
    let e = RunConfig::parse("A = 4\nH = 0\n").unwrap_err();
    assert_eq!(e.origin, Origin::Line(2));
    assert!(e.message.contains('H'), "{e}");
}

#[test]
fn unknown_and_malformed_lines_are_rejected() {
    let e = RunConfig::parse("H = 3\nfoo = 1\n").unwrap_err();
    assert_eq!(e.origin, Origin::Line(2));
    assert!(e.to_string().contains("unknown key"));
    assert_eq!(RunConfig::parse("kappa = lots").unwrap_err().origin, Origin::Line(1));
    assert_eq!(RunConfig::parse("\n\njust words").unwrap_err().origin, Origin::Line(3));
    assert_eq!(RunConfig::parse("rho = 1.5").unwrap_err().origin, Origin::Line(1));
}

#[test]
fn cross_key_checks_cite_the_offending_key() {
    let e: ConfigError = RunConfig::parse("alphas = 1, 0.5\nH = 3\n").unwrap_err();
    assert_eq!(e.origin, Origin::Line(1));
    let ok = RunConfig::parse("H = 2\nalphas = 1, 0.25\n").unwrap();
    assert_eq!(ok.alphas, Some(vec![1.0, 0.25]));
}

#[test]
fn overrides_apply_after_the_file() {
    let mut cfg = RunConfig::parse("H = 4\nseed = 3\n").unwrap();
    cfg.apply_overrides(&["H=6", "seed = 9", "batch=32"]).unwrap();
    assert_eq!(cfg.horizon, 6);
    assert_eq!(cfg.train.seed, 9);
    assert_eq!(cfg.train.batch_q, 32);
    let e = cfg.apply_overrides(&["nope=1"]).unwrap_err();
    assert_eq!(e.origin, Origin::Override("nope=1".into()));
}

#[test]
fn dataset_keys() {
    let cfg = RunConfig::parse("dataset = glyphs\nglyph_per_class = 3\nglyph_noise = 0.1\n").unwrap();
    assert_eq!(cfg.dataset, DatasetSpec::Glyphs { per_class: 3, noise: 0.1 });
    assert!(RunConfig::parse("dataset = glyphs\nglyph_noise = 0.5\n").is_err());
    assert!(RunConfig::parse("gmm_std = 0.2\ndataset = csv\n").is_err());
    assert!(RunConfig::parse("dataset = csv\n").is_err());
    let csv = RunConfig::parse("dataset = csv\ndata_path = pts.csv\n").unwrap();
    assert_eq!(csv.dataset, DatasetSpec::Csv("pts.csv".into()));
}

#[test]
fn dimension_and_initial_state_follow_the_dataset() {
    let ds = Dataset::new("p", vec![vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
    let mean = RunConfig::parse("x1 = mean").unwrap().env_for(&ds).unwrap();
    assert_eq!(mean.x1, vec![2.0, 4.0]);
    let fixed = RunConfig::parse("x1 = 1, -1").unwrap().env_for(&ds).unwrap();
    assert_eq!(fixed.x1, vec![1.0, -1.0]);
    assert!(RunConfig::parse("d = 3").unwrap().env_for(&ds).is_err());
    assert!(RunConfig::parse("d = 2\nx1 = 1,2,3").is_err());
}
