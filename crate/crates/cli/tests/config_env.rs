//! Lives in its own binary because it mutates the process environment.

mod common;

use std::fs;

use common::{blob, cli, s, write_instances};
use instmatte::ErrorKind;
use instmatte_cli::report::{read_records, Record};
use instmatte_cli::settings::CONFIG_ENV;

#[test]
fn environment_names_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    write_instances(&gt.join("alphas/a"), &[blob(16, 16, 8.0, 8.0, 5.0, 5.0)]);
    let cfg = dir.path().join("env.toml");
    fs::write(&cfg, "errors = [\"grad\", \"conn\"]\nagg = \"pooled\"\n").unwrap();
    let report = dir.path().join("r.jsonl");

    std::env::set_var(CONFIG_ENV, &cfg);
    let o = cli(&["evaluate", s(&gt), s(&gt), "--out", s(&report)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let Record::Header { config, .. } = &read_records(&report).unwrap()[0] else {
        panic!("missing header");
    };
    assert_eq!(config.error_kinds, vec![ErrorKind::Grad, ErrorKind::Conn]);

    // an explicit flag beats the environment
    let o = cli(&["evaluate", s(&gt), s(&gt), "--out", s(&report), "--errors", "mse"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let Record::Header { config, .. } = &read_records(&report).unwrap()[0] else {
        panic!("missing header");
    };
    assert_eq!(config.error_kinds, vec![ErrorKind::Mse]);

    std::env::set_var(CONFIG_ENV, dir.path().join("missing.toml"));
    assert_eq!(cli(&["evaluate", s(&gt), s(&gt), "--out", s(&report)]).code, 1);
    std::env::remove_var(CONFIG_ENV);
}
