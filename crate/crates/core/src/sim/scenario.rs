//! Scenario files and the workloads they generate.
//!
//! A scenario names a seed, a duration, a Poisson arrival process with
//! optional burst segments, a weighted mix of SQL templates and a weighted
//! mix of service levels. Templates may contain placeholders filled from
//! the seeded generator: `{i:lo:hi}` draws an integer in `[lo, hi]` and
//! `{c:a|b|c}` picks one of the listed alternatives.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scheduler::ServiceLevel;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Burst {
    pub start_s: f64,
    pub end_s: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Arrival {
    pub rate_per_min: f64,
    #[serde(default)]
    pub bursts: Vec<Burst>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct QueryTemplate {
    pub weight: f64,
    /// Free-form class label such as `scan`, `join` or `groupby`.
    #[serde(default)]
    pub kind: String,
    pub sql: String,
}

/// Weights per level, or `"force:<level>"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelMix {
    Forced(String),
    Weights(BTreeMap<ServiceLevel, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub arrival: Arrival,
    pub query_mix: Vec<QueryTemplate>,
    pub level_mix: LevelMix,
    #[serde(default = "default_result_limit")]
    pub result_limit: usize,
    /// Flat config overrides, as in a config file.
    #[serde(default)]
    pub config: BTreeMap<String, serde_json::Value>,
}

fn default_result_limit() -> usize {
    100
}

/// One query of a workload: the trace row format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TraceRow {
    pub offset_ms: Millis,
    pub sql: String,
    pub level: ServiceLevel,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        let s: Scenario = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn duration_ms(&self) -> Millis {
        (self.duration_s * 1000.0).round() as Millis
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("durationS must be positive, got {}", self.duration_s));
        }
        if !(self.arrival.rate_per_min >= 0.0 && self.arrival.rate_per_min.is_finite()) {
            return bad("arrival.ratePerMin must be a nonnegative number".into());
        }
        for b in &self.arrival.bursts {
            if !(b.start_s >= 0.0 && b.end_s > b.start_s && b.multiplier > 0.0 && b.multiplier.is_finite()) {
                return bad(format!("invalid burst {b:?}"));
            }
        }
        if self.query_mix.is_empty() {
            return bad("queryMix is empty".into());
        }
        if self.query_mix.iter().any(|t| !(t.weight > 0.0 && t.weight.is_finite())) {
            return bad("queryMix weights must be positive".into());
        }
        for t in &self.query_mix {
            check_template(&t.sql)?;
        }
        match &self.level_mix {
            LevelMix::Forced(text) => {
                forced_level(text)?;
            }
            LevelMix::Weights(w) => {
                if w.is_empty() || w.values().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return bad("levelMix weights must be positive".into());
                }
            }
        }
        if self.result_limit == 0 {
            return bad("resultLimit must be at least 1".into());
        }
        Ok(())
    }

    /// Same scenario with every query forced to `level`.
    pub fn forced(&self, level: ServiceLevel) -> Scenario {
        Scenario {
            level_mix: LevelMix::Forced(format!("force:{}", level.name())),
            ..self.clone()
        }
    }

    /// Arrival rate per millisecond at time `t`.
    fn rate_at(&self, t_ms: f64) -> f64 {
        let s = t_ms / 1000.0;
        let m: f64 = self
            .arrival
            .bursts
            .iter()
            .filter(|b| s >= b.start_s && s < b.end_s)
            .map(|b| b.multiplier)
            .product();
        self.arrival.rate_per_min * m / 60_000.0
    }

    /// Arrival instants, SQL and levels. Arrival times and SQL come from
    /// their own generator streams, so forcing a level leaves them unchanged.
    pub fn workload(&self) -> Result<Vec<TraceRow>> {
        self.validate()?;
        let duration = self.duration_ms() as f64;
        let peak = self.arrival.rate_per_min / 60_000.0
            * self
                .arrival
                .bursts
                .iter()
                .map(|b| b.multiplier.max(1.0))
                .product::<f64>();
        let mut times = Vec::new();
        if peak > 0.0 {
            let mut arrivals = SplitMix64::stream(self.seed, 1);
            let mut t = 0.0;
            loop {
                t += arrivals.exponential(peak);
                if t >= duration {
                    break;
                }
                if arrivals.next_f64() * peak < self.rate_at(t) {
                    times.push(t.floor() as Millis);
                }
            }
        }

        let mut queries = SplitMix64::stream(self.seed, 2);
        let mut levels = SplitMix64::stream(self.seed, 3);
        let weights: Vec<f64> = self.query_mix.iter().map(|t| t.weight).collect();
        let forced = match &self.level_mix {
            LevelMix::Forced(text) => Some(forced_level(text)?),
            LevelMix::Weights(_) => None,
        };
        let level_table: Vec<(ServiceLevel, f64)> = match &self.level_mix {
            LevelMix::Weights(w) => w.iter().map(|(l, x)| (*l, *x)).collect(),
            LevelMix::Forced(_) => Vec::new(),
        };
        let level_weights: Vec<f64> = level_table.iter().map(|(_, w)| *w).collect();

        times
            .into_iter()
            .map(|offset_ms| {
                let template = &self.query_mix[queries.weighted(&weights)];
                let sql = instantiate(&template.sql, &mut queries)?;
                let drawn = if level_table.is_empty() {
                    ServiceLevel::Immediate
                } else {
                    level_table[levels.weighted(&level_weights)].0
                };
                Ok(TraceRow {
                    offset_ms,
                    sql,
                    level: forced.unwrap_or(drawn),
                })
            })
            .collect()
    }
}

pub fn forced_level(text: &str) -> Result<ServiceLevel> {
    text.strip_prefix("force:")
        .ok_or_else(|| Error::Config(format!("levelMix must be weights or \"force:<level>\", got {text:?}")))?
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))
}

fn check_template(sql: &str) -> Result<()> {
    instantiate(sql, &mut SplitMix64::new(0)).map(|_| ())
}

/// Fills the template's placeholders.
pub fn instantiate(template: &str, rng: &mut SplitMix64) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::Config(format!("unclosed placeholder in template {template:?}")))?;
        let body = &rest[open + 1..open + close];
        let bad = || Error::Config(format!("bad placeholder {{{body}}} in template {template:?}"));
        match body.split_once(':') {
            Some(("i", range)) => {
                let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
                let lo: i64 = lo.parse().map_err(|_| bad())?;
                let hi: i64 = hi.parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                out.push_str(&rng.range_i64(lo, hi).to_string());
            }
            Some(("c", choices)) => {
                let options: Vec<&str> = choices.split('|').collect();
                out.push_str(options[rng.below(options.len())]);
            }
            _ => return Err(bad()),
        }
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Reads a JSON-lines trace, one `{offsetMs, sql, level}` object per line.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
    parse_trace(&text, path)
}

pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<TraceRow>> {
    let mut rows: Vec<TraceRow> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Trace {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let row: TraceRow = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if rows.last().is_some_and(|prev| prev.offset_ms > row.offset_ms) {
            return Err(fail("offsets must be nondecreasing".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_trace(rows: &[TraceRow]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("trace rows serialize") + "\n")
        .collect()
}
