//! Flag > `AUTOLABEL_SEED` > config file > default, for every key.

use std::fs;
use std::path::{Path, PathBuf};

use autolabel::cli::{Cli, Command};
use autolabel::config::{Settings, Strategy, KEYS};
use clap::Parser;

fn settings(config: Option<&Path>, env_seed: Option<&str>, flags: &[&str]) -> Settings {
    let mut args = vec!["autolabel".to_string(), "bootstrap".into(), "--out".into(), "x".into()];
    if let Some(c) = config {
        args.push("--config".into());
        args.push(c.display().to_string());
    }
    args.extend(flags.iter().map(|s| s.to_string()));
    let Command::Bootstrap { pipeline, .. } = Cli::try_parse_from(args).unwrap().command else {
        unreachable!()
    };
    pipeline.settings(env_seed, None).unwrap()
}

fn config_with(dir: &Path, line: &str) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(&path, format!("# generated\n{line}\n")).unwrap();
    path
}

/// Each invocation checks one key at all three layers: the default, a config
/// value over the default, and a `--set` value over the config.
macro_rules! precedence {
    ($($key:ident: $field:ident, $file:expr => $file_v:expr, $flag:expr => $flag_v:expr;)*) => {
        $(
            #[test]
            fn $key() {
                let dir = tempfile::tempdir().unwrap();
                let base = Settings::default();
                assert_eq!(settings(None, None, &[]).$field, base.$field);

                let conf = config_with(dir.path(), &format!("{} = {}", stringify!($key), $file));
                let from_file = settings(Some(&conf), None, &[]);
                let expected_file = $file_v(dir.path());
                assert_ne!(expected_file, base.$field, "file value must differ from default");
                assert_eq!(from_file.$field, expected_file);

                let set = format!("{}={}", stringify!($key), $flag);
                let from_flag = settings(Some(&conf), None, &["--set", &set]);
                let expected_flag = $flag_v(dir.path());
                assert_ne!(expected_flag, expected_file, "flag value must differ from file value");
                assert_eq!(from_flag.$field, expected_flag);
            }
        )*

        const COVERED: &[&str] = &[$(stringify!($key)),*];
    };
}

fn val<T: Clone>(v: T) -> impl Fn(&Path) -> T {
    move |_| v.clone()
}

fn rel(name: &'static str) -> impl Fn(&Path) -> Option<PathBuf> {
    move |dir| Some(dir.join(name))
}

fn abs(name: &'static str) -> impl Fn(&Path) -> Option<PathBuf> {
    move |_| Some(PathBuf::from(name))
}

precedence! {
    seed: seed, "5" => val(5u64), "9" => val(9u64);
    strategy: strategy, "transfer" => val(Strategy::Transfer), "cam" => val(Strategy::Cam);
    simple: simple, "s.txt" => rel("s.txt"), "other/s.txt" => abs("other/s.txt");
    source: source, "src.txt" => rel("src.txt"), "other/src.txt" => abs("other/src.txt");
    target: target, "t.txt" => rel("t.txt"), "other/t.txt" => abs("other/t.txt");
    validation: validation, "10" => val(10usize), "20" => val(20usize);
    high_radius: high_radius, "2" => val(2usize), "4" => val(4usize);
    learning_rate: learning_rate, "0.5" => val(0.5), "1.5" => val(1.5);
    momentum: momentum, "0.5" => val(0.5), "0.7" => val(0.7);
    weight_decay: weight_decay, "0.001" => val(0.001), "0" => val(0.0);
    batch_size: batch_size, "4" => val(4usize), "16" => val(16usize);
    lr_step: lr_step, "3" => val(3usize), "7" => val(7usize);
    epochs: epochs, "2" => val(2usize), "20" => val(20usize);
    gf_radius: gf_radius, "1" => val(1usize), "3" => val(3usize);
    gf_epsilon: gf_epsilon, "0.1" => val(0.1), "0.001" => val(0.001);
    select_lo: select_lo, "0.2" => val(0.2), "0.05" => val(0.05);
    select_hi: select_hi, "0.8" => val(0.8), "0.7" => val(0.7);
    tau: tau, "0.6" => val(0.6), "0.4" => val(0.4);
    tau_cam: tau_cam, "0.3" => val(0.3), "0.1" => val(0.1);
    rounds: rounds, "3" => val(3usize), "1" => val(1usize);
    patience: patience, "2" => val(2usize), "3" => val(3usize);
    reinit: reinit, "true" => val(true), "false" => val(false);
}

#[test]
fn every_key_has_a_precedence_test() {
    let mut covered = COVERED.to_vec();
    let mut keys = KEYS.to_vec();
    covered.sort_unstable();
    keys.sort_unstable();
    assert_eq!(covered, keys);
}

#[test]
fn dedicated_flags_override_config_and_set() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config_with(dir.path(), "seed = 5\nstrategy = transfer");
    let s = settings(
        Some(&conf),
        None,
        &["--set", "seed=6", "--seed", "7", "--strategy", "cam"],
    );
    assert_eq!(s.seed, 7);
    assert_eq!(s.strategy, Strategy::Cam);

    let args = [
        "autolabel",
        "iterate",
        "--config",
        conf.to_str().unwrap(),
        "--set",
        "rounds=5",
        "--rounds",
        "2",
        "--out",
        "x",
    ];
    let Command::Iterate { pipeline, rounds, .. } = Cli::try_parse_from(args).unwrap().command else {
        unreachable!()
    };
    assert_eq!(pipeline.settings(None, rounds).unwrap().rounds, 2);
}

#[test]
fn seed_env_sits_between_flag_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = config_with(dir.path(), "seed = 5");
    assert_eq!(settings(None, Some("3"), &[]).seed, 3);
    assert_eq!(settings(Some(&conf), Some("3"), &[]).seed, 3);
    assert_eq!(settings(Some(&conf), Some("3"), &["--seed", "8"]).seed, 8);
    assert_eq!(settings(Some(&conf), Some("3"), &["--set", "seed=4"]).seed, 4);
}
