//! Plain-text `key = value` configuration with `#` comments.
//!
//! The same format is used for run manifests, so a manifest can be passed
//! back with `--config` to repeat a run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    n + 1
                )));
            };
            let key = key.trim().replace('-', "_");
            if key.is_empty() {
                return Err(CliError::usage(format!("config line {}: empty key", n + 1)));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::read)
    }

    /// Fail on keys the command does not understand.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::usage(format!(
                "unknown config key {k:?} (known: {})",
                known.join(", ")
            ))),
            None => Ok(()),
        }
    }

    /// The flag value when given, else the parsed file value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::usage(format!("config key {key} = {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::usage(format!("missing required setting {key}")))
    }
}

/// Ordered `key = value` lines, written as a manifest and echoed on stderr.
#[derive(Clone, Debug, Default)]
pub struct Resolved {
    lines: Vec<(String, String)>,
    notes: Vec<String>,
}

impl Resolved {
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Informational line, written as a comment so re-reading ignores it.
    pub fn note(&mut self, text: impl Display) {
        self.notes.push(text.to_string());
    }

    pub fn settings_text(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn manifest_text(&self) -> String {
        let mut s = self.settings_text();
        for n in &self.notes {
            s.push_str(&format!("# {n}\n"));
        }
        s
    }

    pub fn echo(&self) {
        eprint!("{}", self.settings_text());
    }
}

/// Comma-separated list, e.g. `8,16,32,64`.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Tile extents written `SAMPLESxTRACES`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Extent(pub usize, pub usize);

impl FromStr for Extent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected SAMPLESxTRACES, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Extent(parse(a)?, parse(b)?))
    }
}

impl Display for Extent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}
