//! Run parameters: flat `key = value` config files merged under command-line flags.

use std::path::PathBuf;

use serde::Serialize;

pub const OUTPUT_ENV: &str = "HRL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT: &str = "hrl-output";

/// Every field is optional; each experiment supplies its own defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Settings {
    pub n: Option<usize>,
    #[serde(rename = "J")]
    pub level: Option<u32>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub d: Option<usize>,
    pub lambda_min: Option<u32>,
    pub lambda_max: Option<u32>,
    pub l_max: Option<i32>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("{key}: invalid value {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), value: value.into(), reason: e.to_string() })
}

/// `a..b` (inclusive) or a single value `b`.
pub fn parse_lambda_range(s: &str) -> Result<(u32, u32), ConfigError> {
    let bad = |reason: &str| ConfigError::Value { key: "lambda".into(), value: s.into(), reason: reason.into() };
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s.trim(), s.trim()),
    };
    let lo: u32 = lo.parse().map_err(|_| bad("not an integer"))?;
    let hi: u32 = hi.parse().map_err(|_| bad("not an integer"))?;
    if lo == 0 || lo > hi {
        return Err(bad("need 1 ≤ lo ≤ hi"));
    }
    Ok((lo, hi))
}

impl Settings {
    /// Parses a config file. Blank lines and `#` comments are ignored.
    pub fn parse_config(text: &str) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) =
                body.split_once('=').ok_or_else(|| ConfigError::Syntax { line, text: raw.to_string() })?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(ConfigError::Syntax { line, text: raw.to_string() });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate { line, key: key.into() });
            }
            match key {
                "n" => s.n = Some(parse_value(key, value)?),
                "J" => s.level = Some(parse_value(key, value)?),
                "p" => s.p = Some(parse_value(key, value)?),
                "q" => s.q = Some(parse_value(key, value)?),
                "d" => s.d = Some(parse_value(key, value)?),
                "lambda_max" => s.lambda_max = Some(parse_value(key, value)?),
                "l_max" => s.l_max = Some(parse_value(key, value)?),
                "seed" => s.seed = Some(parse_value(key, value)?),
                "output_dir" => s.output_dir = Some(PathBuf::from(value)),
                "threads" => s.threads = Some(parse_value(key, value)?),
                _ => return Err(ConfigError::UnknownKey { line, key: key.into() }),
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Values set in `over` win.
    pub fn overlay(&self, over: &Settings) -> Settings {
        Settings {
            n: over.n.or(self.n),
            level: over.level.or(self.level),
            p: over.p.or(self.p),
            q: over.q.or(self.q),
            d: over.d.or(self.d),
            lambda_min: over.lambda_min.or(self.lambda_min),
            lambda_max: over.lambda_max.or(self.lambda_max),
            l_max: over.l_max.or(self.l_max),
            seed: over.seed.or(self.seed),
            output_dir: over.output_dir.clone().or_else(|| self.output_dir.clone()),
            threads: over.threads.or(self.threads),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(ConfigError::Value { key: key.into(), value, reason: reason.into() })
        };
        if let Some(n) = self.n {
            if !(1..=3).contains(&n) {
                return bad("n", n.to_string(), "dimension must be 1, 2 or 3");
            }
        }
        if let Some(j) = self.level {
            if !(2..=12).contains(&j) {
                return bad("J", j.to_string(), "level must be in 2..=12");
            }
        }
        if let Some(p) = self.p {
            if !(p > 1.0 && p.is_finite()) {
                return bad("p", p.to_string(), "need 1 < p < ∞");
            }
        }
        if let Some(q) = self.q {
            if !(q >= 1.0 && q.is_finite()) {
                return bad("q", q.to_string(), "need 1 ≤ q < ∞");
            }
        }
        if self.d == Some(0) {
            return bad("d", "0".into(), "need d ≥ 1");
        }
        if self.lambda_max == Some(0) {
            return bad("lambda_max", "0".into(), "need lambda_max ≥ 1");
        }
        if let (Some(lo), Some(hi)) = (self.lambda_min, self.lambda_max) {
            if lo > hi {
                return bad("lambda", format!("{lo}..{hi}"), "empty range");
            }
        }
        if self.threads == Some(0) {
            return bad("threads", "0".into(), "need threads ≥ 1");
        }
        Ok(())
    }

    /// Flags, then config, then `HRL_OUTPUT_DIR`, then `hrl-output`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let s = Settings::parse_config(
            "# comment\nn = 2\nJ=8\np = 4\nq = 2\nd = 1\nlambda_max = 5\nl_max = 3\nseed = 7 # trailing\noutput_dir = out/x\nthreads = 2\n",
        )
        .unwrap();
        assert_eq!(s.n, Some(2));
        assert_eq!(s.level, Some(8));
        assert_eq!(s.p, Some(4.0));
        assert_eq!(s.l_max, Some(3));
        assert_eq!(s.seed, Some(7));
        assert_eq!(s.output_dir, Some(PathBuf::from("out/x")));
        assert_eq!(s.threads, Some(2));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(Settings::parse_config("bogus = 1"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(Settings::parse_config("n 2"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(Settings::parse_config("n = 2\nn = 3"), Err(ConfigError::Duplicate { .. })));
        assert!(matches!(Settings::parse_config("p = 1"), Err(ConfigError::Value { .. })));
        assert!(matches!(Settings::parse_config("n = two"), Err(ConfigError::Value { .. })));
        assert!(matches!(Settings::parse_config("J = 40"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn flags_override_config() {
        let cfg = Settings { n: Some(3), seed: Some(1), ..Default::default() };
        let flags = Settings { seed: Some(9), ..Default::default() };
        let s = cfg.overlay(&flags);
        assert_eq!((s.n, s.seed), (Some(3), Some(9)));
    }

    #[test]
    fn lambda_ranges() {
        assert_eq!(parse_lambda_range("1..5").unwrap(), (1, 5));
        assert_eq!(parse_lambda_range("2..=4").unwrap(), (2, 4));
        assert_eq!(parse_lambda_range("3").unwrap(), (3, 3));
        assert!(parse_lambda_range("5..1").is_err());
        assert!(parse_lambda_range("0..3").is_err());
    }
}
