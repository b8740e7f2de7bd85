#![allow(dead_code)]

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use breakout_core::ingest::write_panels;
use breakout_core::{PanelMap, WeeklyPanel};
use chrono::NaiveDate;

/// Small models so end-to-end runs stay quick.
pub const FAST_CONFIG: &str = r#"
[pipeline.rf]
n_trees = 10

[pipeline.gbt]
n_rounds = 20
min_leaf = 5

[pipeline.mlnn]
hidden_sizes = [8]
epochs = 2

[pipeline.lstm]
hidden_size = 4
epochs = 1
"#;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_breakout")
}

/// Runs the binary in `dir` with info logging.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 3, 10).unwrap()
}

pub fn write_panel_file(dir: &Path, name: &str, panels: &PanelMap) -> PathBuf {
    let path = dir.join(name);
    write_panels(File::create(&path).unwrap(), panels).unwrap();
    path
}

pub fn write_fast_config(dir: &Path) -> PathBuf {
    let path = dir.join("fast.toml");
    std::fs::write(&path, FAST_CONFIG).unwrap();
    path
}

/// `n` entities whose weekly counts are `level + small periodic wiggle`,
/// identical across entities when `wiggle` is false.
pub fn flat_panels(n: usize, weeks: usize, level: f64, wiggle: bool) -> PanelMap {
    (0..n)
        .map(|i| {
            let social: Vec<f64> = (0..weeks)
                .map(|t| if wiggle { level + ((t * 7 + i * 3) % 5) as f64 } else { level })
                .collect();
            let broadcast: Vec<f64> = (0..weeks).map(|t| if wiggle { ((t + i) % 3) as f64 } else { 2.0 }).collect();
            let id = format!("e{i:03}");
            (id.clone(), WeeklyPanel::new(id, origin(), social, broadcast))
        })
        .collect()
}
