//! Experiment files.
//!
//! ```text
//! # defaults shared by every [config] block
//! nOps = 50000
//!
//! [config]
//! engine = nuec
//!
//! [config]
//! engine = fullop
//!
//! [sweep]
//! removeRatio = 0.05 | 0.0005
//! seed = 1 | 2 | 3
//! ```
//!
//! Keys before the first section are defaults. Each `[config]` block starts
//! from the defaults; with no block the defaults form the only config. The
//! single optional `[sweep]` block lists alternatives separated by `|`; every
//! config is expanded over the cross product, earlier sweep keys varying
//! slowest.

use std::fmt;

use nuec::sim::config::KEYS;
use nuec::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "field `{}`: {}", self.field, self.reason)
        } else {
            write!(f, "line {}: field `{}`: {}", self.line, self.field, self.reason)
        }
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, field: &str, reason: impl Into<String>) -> ParseError {
    ParseError { line, field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Experiment {
    /// One config per `[config]` block, with the line it starts on.
    pub configs: Vec<(usize, SimConfig)>,
    /// `(key, line, values)` in file order.
    pub sweep: Vec<(String, usize, Vec<String>)>,
}

enum Section {
    Defaults,
    Config,
    Sweep,
}

impl Experiment {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut defaults: Vec<(usize, String, String)> = Vec::new();
        let mut blocks: Vec<(usize, Vec<(usize, String, String)>)> = Vec::new();
        let mut sweep: Vec<(String, usize, Vec<String>)> = Vec::new();
        let mut seen_sweep = false;
        let mut section = Section::Defaults;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
                section = match name.trim() {
                    "config" => {
                        blocks.push((line, Vec::new()));
                        Section::Config
                    }
                    "sweep" if seen_sweep => return Err(err(line, "sweep", "only one [sweep] block is allowed")),
                    "sweep" => {
                        seen_sweep = true;
                        Section::Sweep
                    }
                    other => return Err(err(line, "section", format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(line, "line", format!("expected `key = value`, got `{body}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(line, key, format!("unknown key (expected one of {})", KEYS.join(", "))));
            }
            match section {
                Section::Defaults => defaults.push((line, key.into(), value.into())),
                Section::Config => blocks.last_mut().expect("inside a block").1.push((line, key.into(), value.into())),
                Section::Sweep => {
                    if sweep.iter().any(|(k, _, _)| k == key) {
                        return Err(err(line, key, "swept twice"));
                    }
                    let values: Vec<String> =
                        value.split('|').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
                    if values.is_empty() {
                        return Err(err(line, key, "sweep needs at least one value"));
                    }
                    sweep.push((key.into(), line, values));
                }
            }
        }

        if blocks.is_empty() {
            blocks.push((0, Vec::new()));
        }
        let mut configs = Vec::new();
        for (start, entries) in blocks {
            let mut cfg = SimConfig::default();
            for (line, key, value) in defaults.iter().chain(&entries) {
                cfg.set(key, value).map_err(|e| err(*line, key, reason_of(&e)))?;
            }
            configs.push((start, cfg));
        }
        Ok(Experiment { configs, sweep })
    }

    /// Every expanded config, in order, each validated.
    pub fn expand(&self) -> Result<Vec<SimConfig>, ParseError> {
        let mut out = Vec::new();
        for (start, base) in &self.configs {
            let mut combos: Vec<SimConfig> = vec![base.clone()];
            for (key, line, values) in &self.sweep {
                let mut next = Vec::with_capacity(combos.len() * values.len());
                for c in &combos {
                    for v in values {
                        let mut c = c.clone();
                        c.set(key, v).map_err(|e| err(*line, key, reason_of(&e)))?;
                        next.push(c);
                    }
                }
                combos = next;
            }
            for c in combos {
                c.validate().map_err(|e| err(*start, e.field(), reason_of(&e)))?;
                out.push(c);
            }
        }
        Ok(out)
    }
}

fn reason_of(e: &nuec::ConfigError) -> String {
    match e {
        nuec::ConfigError::Invalid { reason, .. } => reason.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nuec::sim::EngineKind;

    #[test]
    fn defaults_only_is_one_config() {
        let e = Experiment::parse("nOps = 10\n").unwrap();
        let cs = e.expand().unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].n_ops, 10);
    }

    #[test]
    fn blocks_inherit_defaults_and_sweep_expands_in_order() {
        let text = "nOps = 7\n[config]\nengine = nuec\n[config]\nengine = fullop\nnOps = 9\n[sweep]\nseed = 1 | 2\nremoveRatio = 0.1|0.2\n";
        let cs = Experiment::parse(text).unwrap().expand().unwrap();
        let got: Vec<_> = cs.iter().map(|c| (c.engine, c.n_ops, c.seed, c.remove_ratio)).collect();
        assert_eq!(
            got,
            vec![
                (EngineKind::Nuec, 7, 1, 0.1),
                (EngineKind::Nuec, 7, 1, 0.2),
                (EngineKind::Nuec, 7, 2, 0.1),
                (EngineKind::Nuec, 7, 2, 0.2),
                (EngineKind::Fullop, 9, 1, 0.1),
                (EngineKind::Fullop, 9, 1, 0.2),
                (EngineKind::Fullop, 9, 2, 0.1),
                (EngineKind::Fullop, 9, 2, 0.2),
            ]
        );
    }

    #[test]
    fn empty_sweep_block_is_a_single_row() {
        let cs = Experiment::parse("[config]\nnOps = 5\n[sweep]\n").unwrap().expand().unwrap();
        assert_eq!(cs.len(), 1);
    }

    #[test]
    fn errors_carry_line_and_field() {
        let e = Experiment::parse("nOps = 5\n\nremoveRatio = 1.5\n").unwrap().expand().unwrap_err();
        assert_eq!(e.field, "removeRatio");
        let e = Experiment::parse("nOps = 5\nnIds = many\n").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (2, "nIds"));
        let e = Experiment::parse("bogus = 1\n").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (1, "bogus"));
        let e = Experiment::parse("[sweep]\nseed = 1\n[sweep]\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = Experiment::parse("[sweep]\nnIds = 3 | x\n").unwrap().expand().unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (2, "nIds"));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cs = Experiment::parse("# header\n\nnOps = 3 # trailing\n").unwrap().expand().unwrap();
        assert_eq!(cs[0].n_ops, 3);
    }
}
