//! Run settings: a config file overlaid with command-line flags.
//!
//! Every value a command reads is recorded with the exact text it was given
//! (or its default), and that record is written to the output sidecar. Feeding
//! a sidecar back through `--config` therefore reruns the same computation.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub struct Settings {
    given: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

/// Reads `key = value` text, or the `settings` object of a JSON sidecar.
fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let obj = v
            .get("settings")
            .and_then(|s| s.as_object())
            .ok_or_else(|| anyhow!("{}: JSON config needs a `settings` object", path.display()))?;
        obj.iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => Ok((k.clone(), s.clone())),
                other => Ok((k.clone(), other.to_string())),
            })
            .collect()
    } else {
        Ok(fringelab::io::parse_key_values(&text)?)
    }
}

impl Settings {
    /// Config file values first, then flags on top.
    pub fn new(config: Option<&Path>, flags: BTreeMap<String, String>) -> Result<Self> {
        let mut given = match config {
            Some(p) => load_config(p)?,
            None => BTreeMap::new(),
        };
        given.extend(flags);
        Ok(Settings { given, used: RefCell::new(BTreeMap::new()) })
    }

    pub fn has(&self, key: &str) -> bool {
        self.given.contains_key(key)
    }

    fn raw(&self, key: &str, default: Option<&str>) -> Option<String> {
        let v = self.given.get(key).cloned().or_else(|| default.map(str::to_string))?;
        self.used.borrow_mut().insert(key.to_string(), v.clone());
        Some(v)
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.raw(key, Some(default)).expect("default given")
    }

    pub fn optional(&self, key: &str) -> Option<String> {
        self.raw(key, None)
    }

    pub fn required(&self, key: &str) -> Result<String> {
        self.raw(key, None).ok_or_else(|| anyhow!("missing setting `{key}`"))
    }

    pub fn parse<T: FromStr>(&self, key: &str, default: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.string(key, default);
        v.parse().map_err(|e| anyhow!("`{key}` = `{v}`: {e}"))
    }

    pub fn parse_optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.optional(key).map(|v| v.parse().map_err(|e| anyhow!("`{key}` = `{v}`: {e}"))).transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        self.flag_or(key, false)
    }

    pub fn flag_or(&self, key: &str, default: bool) -> Result<bool> {
        parse_bool(&self.string(key, &default.to_string())).with_context(|| format!("setting `{key}`"))
    }

    /// Angles are in radians unless `deg` is set. The default is given in
    /// radians and recorded in whichever unit is in effect.
    pub fn angle(&self, key: &str, default_rad: f64) -> Result<f64> {
        let deg = self.flag("deg")?;
        let default = if deg { default_rad.to_degrees() } else { default_rad };
        let v = self.string(key, &format!("{default}"));
        let x = parse_angle(&v).with_context(|| format!("setting `{key}`"))?;
        Ok(if deg { x.to_radians() } else { x })
    }

    /// A time in picoseconds; `ps` and `ns` suffixes are accepted.
    pub fn time_ps(&self, key: &str, default: &str) -> Result<f64> {
        let v = self.string(key, default);
        parse_time_ps(&v).with_context(|| format!("setting `{key}`"))
    }

    /// Fails on settings that no part of the command read; catches typos.
    /// `deg` is exempt since not every command takes angles.
    pub fn check_all_used(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> =
            self.given.keys().filter(|k| *k != "deg" && !used.contains_key(*k)).map(String::as_str).collect();
        if !unknown.is_empty() {
            bail!("unknown or unused setting(s) for this command: {}", unknown.join(", "));
        }
        Ok(())
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }
}

pub fn parse_bool(v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("`{v}` is not a boolean"),
    }
}

/// A number, optionally written with `pi` (e.g. `pi`, `-pi`, `2pi`, `pi/2`).
pub fn parse_angle(v: &str) -> Result<f64> {
    let s = v.trim().to_ascii_lowercase().replace(' ', "");
    if let Ok(x) = s.parse::<f64>() {
        return Ok(x);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), d.parse::<f64>().map_err(|_| anyhow!("bad angle `{v}`"))?),
        None => (s.clone(), 1.0),
    };
    let k = match num.strip_suffix("pi") {
        Some("") => 1.0,
        Some("-") => -1.0,
        Some(c) => c.trim_end_matches('*').parse::<f64>().map_err(|_| anyhow!("bad angle `{v}`"))?,
        None => bail!("bad angle `{v}`"),
    };
    Ok(k * std::f64::consts::PI / den)
}

pub fn parse_time_ps(v: &str) -> Result<f64> {
    let s = v.trim();
    let (num, factor) = if let Some(n) = s.strip_suffix("ns") {
        (n, 1e3)
    } else if let Some(n) = s.strip_suffix("ps") {
        (n, 1.0)
    } else {
        (s, 1.0)
    };
    let x: f64 = num.trim().parse().map_err(|_| anyhow!("bad time `{v}` (use e.g. 59ps or 0.059ns)"))?;
    Ok(x * factor)
}
