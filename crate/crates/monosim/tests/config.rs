use monosim::config::*;
use monosim_core::pipeline::ThetaGrid;

#[test]
fn parses_file_with_comments() {
    let s = LearnSettings::parse(
        "# desk run\neps = 0.05\nB=3   # sup bound\nL = 1\nfresh_split = off\nspectral_starts = all\ntheta_grid = geometric:16\n\n",
    )
    .unwrap();
    assert_eq!(s.eps, Some(0.05));
    assert_eq!(s.b, Some(3.0));
    assert_eq!(s.l, Some(1.0));
    assert_eq!(s.fresh_split, Some(false));
    assert_eq!(s.spectral_starts, Some(None));
    assert_eq!(s.theta_grid, Some(ThetaGrid::Geometric { ratio: 2.0, cap: 16 }));
}

#[test]
fn rejects_bad_lines() {
    assert!(LearnSettings::parse("eps 0.1").is_err());
    assert!(LearnSettings::parse("colour = red").is_err());
    assert!(LearnSettings::parse("eps = small").is_err());
    assert!(LearnSettings::parse("trace = maybe").is_err());
}

#[test]
fn flags_override_file_values() {
    let file = LearnSettings::parse("eps = 0.1\nB = 2\nrepeats = 3").unwrap();
    let flags = LearnSettings { eps: Some(0.05), seed: Some(9), ..Default::default() };
    let s = file.overlay(flags);
    assert_eq!(s.eps, Some(0.05));
    assert_eq!(s.b, Some(2.0));
    assert_eq!(s.repeats(), 3);
    assert_eq!(s.seed, Some(9));
}

#[test]
fn seed_precedence() {
    let none = LearnSettings::default();
    assert_eq!(none.resolve_seed(None).unwrap(), 0);
    assert_eq!(none.resolve_seed(Some("42")).unwrap(), 42);
    assert!(none.resolve_seed(Some("x")).is_err());
    let set = LearnSettings { seed: Some(7), ..Default::default() };
    assert_eq!(set.resolve_seed(Some("42")).unwrap(), 7);
}

#[test]
fn theta_grid_forms() {
    assert_eq!(parse_theta_grid("full").unwrap(), ThetaGrid::Full);
    assert_eq!(parse_theta_grid("geometric").unwrap(), ThetaGrid::Geometric { ratio: 2.0, cap: 64 });
    assert_eq!(parse_theta_grid("0.1, 0.4").unwrap(), ThetaGrid::Explicit(vec![0.1, 0.4]));
    assert!(parse_theta_grid("geometricx").is_err());
}

#[test]
fn builds_pipeline_config() {
    let s = LearnSettings::parse("eps = 0.1\nB = 1\nL = 1\nrestarts = 5\niterations = 7\nbeta = 2.5").unwrap();
    let cfg = s.pipeline_config(3).unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.schedule.restarts, 5);
    assert_eq!(cfg.schedule.iterations, 7);
    assert_eq!(cfg.beta(), 2.5);
    assert!(cfg.fresh_split);
    let faithful = LearnSettings { paper_faithful: Some(true), ..s.clone() }.pipeline_config(3).unwrap();
    assert_eq!(faithful.theta_grid, ThetaGrid::Full);
    assert!(faithful.single_sample_test);
    assert!(LearnSettings { eps: None, ..s }.pipeline_config(0).is_err());
}
