//! INI-style run configuration: `[section]` headers with `key = value`
//! pairs, `#` or `;` comments. Lookups fail with the section.key name so
//! config errors point at the offending entry.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use qvlab_core::engine::{CovParams, PathGrid};
use qvlab_core::surfaces::VolSurface;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    CliError::Validation(format!("config line {lineno}: unterminated section header"))
                })?;
                let name = name.trim().to_string();
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "config line {lineno}: expected `key = value`, got `{line}`"
                ))
            })?;
            let section = current.as_ref().ok_or_else(|| {
                CliError::Validation(format!(
                    "config line {lineno}: `key = value` before any [section]"
                ))
            })?;
            sections
                .get_mut(section)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    pub fn get(&self, section: &str, key: &str) -> Result<&str, CliError> {
        self.raw(section, key).ok_or_else(|| {
            CliError::Validation(format!("missing config key `{section}.{key}`"))
        })
    }

    pub fn opt(&self, section: &str, key: &str) -> Option<&str> {
        self.raw(section, key)
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<f64, CliError> {
        self.get(section, key)?.parse().map_err(|_| {
            CliError::Validation(format!(
                "config key `{section}.{key}`: expected a number, got `{}`",
                self.raw(section, key).unwrap_or_default()
            ))
        })
    }

    pub fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(_) => self.get_f64(section, key).map(Some),
        }
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<u64, CliError> {
        self.get(section, key)?.parse().map_err(|_| {
            CliError::Validation(format!(
                "config key `{section}.{key}`: expected an integer, got `{}`",
                self.raw(section, key).unwrap_or_default()
            ))
        })
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<usize, CliError> {
        self.get(section, key)?.parse().map_err(|_| {
            CliError::Validation(format!(
                "config key `{section}.{key}`: expected an integer, got `{}`",
                self.raw(section, key).unwrap_or_default()
            ))
        })
    }

    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>, CliError> {
        let raw = self.get(section, key)?;
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    CliError::Validation(format!(
                        "config key `{section}.{key}`: bad number `{s}`"
                    ))
                })
            })
            .collect()
    }

    /// `section.key = value` lines, sorted, for embedding into artifacts.
    pub fn resolved_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (section, entries) in &self.sections {
            for (key, value) in entries {
                out.push(format!("{section}.{key} = {value}"));
            }
        }
        out
    }

    /// CSV comment block with the resolved config.
    pub fn comment_block(&self) -> String {
        let mut s = String::new();
        for line in self.resolved_lines() {
            let _ = writeln!(s, "# config {line}");
        }
        s
    }

    /// JSON object with the resolved config.
    pub fn json_value(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (section, entries) in &self.sections {
            for (key, value) in entries {
                map.insert(
                    format!("{section}.{key}"),
                    serde_json::Value::String(value.clone()),
                );
            }
        }
        serde_json::Value::Object(map)
    }

    // ---- typed section builders ----

    pub fn surface(&self) -> Result<VolSurface, CliError> {
        let family = self.get("surface", "family")?;
        let alpha = self.get_f64("surface", "alpha")?;
        let surface = match family {
            "constant" => VolSurface::constant(alpha),
            "seasonal" => VolSurface::seasonal(
                alpha,
                self.get_f64("surface", "a")?,
                self.get_f64("surface", "omega")?,
            ),
            "decaying_smile" => VolSurface::decaying_smile(
                alpha,
                self.opt_f64("surface", "a")?.unwrap_or(0.0),
                self.opt_f64("surface", "omega")?.unwrap_or(1.0),
                self.get_f64("surface", "b")?,
                self.get_f64("surface", "tau")?,
                self.get_f64("surface", "s_ref")?,
            ),
            other => {
                return Err(CliError::Validation(format!(
                    "config key `surface.family`: unknown family `{other}` \
                     (constant | seasonal | decaying_smile)"
                )))
            }
        };
        surface.map_err(|e| CliError::Validation(format!("section [surface]: {e}")))
    }

    pub fn grid(&self) -> Result<PathGrid, CliError> {
        let dt = self.get_f64("engine", "dt")?;
        let n_steps = self.get_usize("engine", "n_steps")?;
        let t_start = self.opt_f64("engine", "t_start")?.unwrap_or(0.0);
        PathGrid::new(t_start, dt, n_steps)
            .map_err(|e| CliError::Validation(format!("section [engine]: {e}")))
    }

    pub fn n_paths(&self) -> Result<usize, CliError> {
        self.get_usize("engine", "n_paths")
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get_u64("engine", "seed")
    }

    pub fn market(&self) -> Result<(f64, f64), CliError> {
        Ok((self.get_f64("market", "s0")?, self.get_f64("market", "r")?))
    }

    pub fn cov_params(&self) -> Result<CovParams, CliError> {
        CovParams::new(
            self.get_f64("cov", "alpha")?,
            self.get_f64("cov", "beta")?,
            self.opt_f64("cov", "domain_end")?,
        )
        .map_err(|e| CliError::Validation(format!("section [cov]: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let cfg = Config::parse(
            "# comment\n[market]\ns0 = 100\nr = 0.05\n\n[engine]\nseed = 42\ndt = 0.01\nn_steps = 10\nn_paths = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.get_f64("market", "s0").unwrap(), 100.0);
        assert_eq!(cfg.seed().unwrap(), 42);
        let grid = cfg.grid().unwrap();
        assert_eq!(grid.n_steps, 10);
    }

    #[test]
    fn missing_key_names_section_and_key() {
        let cfg = Config::parse("[engine]\ndt = 0.01\n").unwrap();
        let err = cfg.seed().unwrap_err();
        assert!(err.to_string().contains("engine.seed"), "{err}");
    }

    #[test]
    fn resolved_lines_are_sorted_and_stable() {
        let cfg = Config::parse("[b]\nk = 2\n[a]\nx = 1\n").unwrap();
        assert_eq!(cfg.resolved_lines(), vec!["a.x = 1", "b.k = 2"]);
    }
}
