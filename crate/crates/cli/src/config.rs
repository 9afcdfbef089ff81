//! `--config <path>`: a flat `key=value` file. Keys are the long option names
//! of the chosen subcommand (`-` or `_` both accepted); `#` starts a comment
//! line. Options given on the command line take precedence.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};
use clap::Command;

fn read_pairs(path: &str) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {path}"))?;
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{path}:{}: expected key=value", no + 1);
        };
        let key = k.trim().replace('_', "-");
        if pairs.iter().any(|(p, _)| *p == key) {
            bail!("{path}:{}: duplicate config key `{key}`", no + 1);
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

/// Replaces `--config <path>` by the file's options, inserted right after the
/// subcommand so that later command-line options override them.
pub fn expand(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => path = Some(it.next().context("--config needs a path")?),
            Some(s) if s.starts_with("--config=") => path = Some(OsString::from(&s["--config=".len()..])),
            _ => rest.push(a),
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let path = path.to_string_lossy().into_owned();
    let Some(pos) = rest.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 1) else {
        bail!("--config needs a subcommand");
    };
    let name = rest[pos].to_string_lossy().into_owned();
    let Some(sub) = cmd.find_subcommand(&name) else { return Ok(rest) };
    let known =
        |key: &str| key != "config" && key != "help" && sub.get_arguments().chain(cmd.get_arguments()).any(|a| a.get_long() == Some(key));
    let mut injected = Vec::new();
    for (key, value) in read_pairs(&path)? {
        if !known(&key) {
            bail!("unknown config key `{key}` for {name} in {path}");
        }
        injected.push(OsString::from(format!("--{key}={value}")));
    }
    rest.splice(pos + 1..pos + 1, injected);
    Ok(rest)
}
