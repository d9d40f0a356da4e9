#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn osband(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osband")).args(args).output().expect("binary runs")
}

/// The example invocations shown in the README, with fixture paths filled in.
pub fn documented_commands() -> Vec<Vec<String>> {
    let p = |name: &str| fixture(name).to_str().unwrap().to_string();
    let raw: Vec<Vec<String>> = vec![
        vec!["estimate", "-f", "mean", "-i", &p("five.csv")],
        vec!["estimate", "-f", "quantile-es:0.4", "-i", &p("five.csv")],
        vec!["backtest", "-f", "mean", "-i", &p("balanced.csv")],
        vec!["backtest", "-f", "mean-var", "-i", &p("misspecified.csv")],
        vec!["verify", "-f", "mean-var", "--family", "gaussian"],
        vec!["verify", "-f", "covar-1d:0.05,0.1"],
        vec!["verify", "-f", "quantile:0.25", "--family", "atoms"],
        vec!["verify", "-f", "mean", "--draws", "20000", "--seed", "3"],
        vec!["verify", "--check", "es-witness"],
        vec!["recover-h", "--base", "mean-var", "--prime", "mean-var-prime", "--axis", "-1,0,1.5", "--axis", "0.5,1,2"],
        vec![
            "recover-h", "--base", "quantile-es:0.05", "--prime", "quantile-es-prime:0.05", "--axis", "-2,-1", "--axis",
            "-3,-2.5",
        ],
        vec![
            "recover-h", "--base", "mean-var", "--prime", "mean-var-modified", "--axis", "0,1", "--axis", "-1,1",
            "--battery", &p("remark1_battery.json"),
        ],
        vec!["power-study", "--config", &p("study.json"), "--format", "json"],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(String::from).collect())
    .collect();
    raw
}

/// Runs every documented command twice; returns the first one whose output differs.
pub fn first_nondeterministic() -> Option<Vec<String>> {
    documented_commands().into_iter().find(|args| {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let (x, y) = (osband(&a), osband(&a));
        x.stdout.is_empty() || x.stdout != y.stdout || x.status.code() != y.status.code()
    })
}
