//! Preset expansions are pinned against a checked-in rendering, so a config
//! default that moves shows up as a diff. Regenerate with `UPDATE_GOLDEN=1`.

use std::path::Path;

use rbfpoint::harness::{expand_preset, render_expansion, ExperimentConfig, PRESETS};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/presets.txt");

fn render_all() -> String {
    let mut s = String::new();
    for (name, _) in PRESETS {
        s.push_str(&format!("## {name}\n"));
        s.push_str(&render_expansion(&expand_preset(name, Path::new("runs"), 0).unwrap()));
    }
    s
}

#[test]
fn expansions_match_golden() {
    let got = render_all();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(GOLDEN, &got).unwrap();
        return;
    }
    let want = std::fs::read_to_string(GOLDEN).expect("golden file missing; run with UPDATE_GOLDEN=1");
    assert_eq!(got, want, "preset expansions drifted; rerun with UPDATE_GOLDEN=1 if intended");
}

#[test]
fn rendered_configs_parse_back() {
    for (name, _) in PRESETS {
        for cfg in expand_preset(name, Path::new("runs"), 7).unwrap() {
            assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }
}

#[test]
fn seed_only_changes_the_seed() {
    let a = expand_preset("init", Path::new("runs"), 1).unwrap();
    let b = expand_preset("init", Path::new("runs"), 2).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.with("seed", 1).unwrap(), y.with("seed", 1).unwrap());
    }
}
