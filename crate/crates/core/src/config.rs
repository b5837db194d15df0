//! Runtime configuration.
//!
//! The on-disk format is a flat JSON object of dotted keys
//! (`{"vm.provision_lag_s": 90, "cf.price_multiplier": 10}`). Every key is
//! optional and defaults are listed on [`Config::default`]. Environment
//! variables prefixed with `TURBODB_` override file values, e.g.
//! `TURBODB_VM_PROVISION_LAG_S=120` sets `vm.provision_lag_s`.

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::money::{parse_decimal, Money};
use crate::Millis;

pub const ENV_PREFIX: &str = "TURBODB_";

#[derive(Debug, Clone, PartialEq)]
pub struct VmConfig {
    pub provision_lag: Millis,
    /// Price of one slot for one second.
    pub unit_price_per_slot_s: Money,
    pub slots_per_worker: usize,
    pub floor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfConfig {
    pub startup_lag: Millis,
    /// CF worker-second price as a multiple of the VM slot-second price.
    pub price_multiplier: Ratio<i128>,
    pub max_workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub low_watermark: f64,
    pub lazy_window: Millis,
    pub metrics_interval: Millis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedConfig {
    pub tick: Millis,
    pub default_grace: Millis,
    /// Slots a query's sub-plan occupies when it runs on the VM pool.
    pub vm_parallelism: usize,
    /// Ephemeral workers spawned for a sub-plan pushed down to CF.
    pub cf_parallelism: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Per-worker scan throughput used to turn bytes into task durations.
    pub scan_throughput_bytes_s: u64,
    /// Simulated bytes represented by each on-disk byte of the dataset.
    pub data_scale: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbUnit {
    /// 2^40 bytes.
    Binary,
    /// 10^12 bytes.
    Decimal,
}

impl TbUnit {
    pub fn bytes(self) -> i128 {
        match self {
            TbUnit::Binary => 1 << 40,
            TbUnit::Decimal => 1_000_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BillingConfig {
    pub tb_unit: TbUnit,
    pub rate_immediate: Money,
    pub rate_relaxed: Money,
    pub rate_best_of_effort: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nl2SqlBackend {
    Template,
    Http,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nl2SqlConfig {
    pub backend: Nl2SqlBackend,
    pub endpoint: Option<String>,
    pub timeout: Millis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub listen: String,
    pub token: Option<String>,
    pub ui_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub vm: VmConfig,
    pub cf: CfConfig,
    pub scaling: ScalingConfig,
    pub sched: SchedConfig,
    pub engine: EngineConfig,
    pub billing: BillingConfig,
    pub nl2sql: Nl2SqlConfig,
    pub gateway: GatewayConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            vm: VmConfig {
                provision_lag: 90_000,
                unit_price_per_slot_s: Money::from_micros(500),
                slots_per_worker: 4,
                floor: 1,
            },
            cf: CfConfig {
                startup_lag: 1_000,
                price_multiplier: Ratio::from_integer(10),
                max_workers: 512,
            },
            scaling: ScalingConfig {
                low_watermark: 0.2,
                lazy_window: 300_000,
                metrics_interval: 5_000,
            },
            sched: SchedConfig {
                tick: 1_000,
                default_grace: 300_000,
                vm_parallelism: 1,
                cf_parallelism: 8,
            },
            engine: EngineConfig {
                scan_throughput_bytes_s: 64 * 1024 * 1024,
                data_scale: 1,
            },
            billing: BillingConfig {
                tb_unit: TbUnit::Binary,
                rate_immediate: Money::from_micros(5_000_000),
                rate_relaxed: Money::from_micros(2_000_000),
                rate_best_of_effort: Money::from_micros(500_000),
            },
            nl2sql: Nl2SqlConfig {
                backend: Nl2SqlBackend::Template,
                endpoint: None,
                timeout: 10_000,
            },
            gateway: GatewayConfig {
                listen: "127.0.0.1:8080".into(),
                token: None,
                ui_dir: None,
            },
        }
    }
}

fn seconds_to_ms(key: &str, v: &Json) -> Result<Millis> {
    let ratio = number_ratio(key, v)?;
    let ms = ratio * Ratio::from_integer(1000);
    if ms < Ratio::from_integer(0) || !ms.is_integer() {
        return Err(Error::Config(format!(
            "{key}: expected a nonnegative duration with millisecond precision"
        )));
    }
    Ok(ms.to_integer() as Millis)
}

fn number_ratio(key: &str, v: &Json) -> Result<Ratio<i128>> {
    let text = match v {
        Json::Number(n) => n.to_string(),
        Json::String(s) => s.clone(),
        _ => return Err(Error::Config(format!("{key}: expected a number"))),
    };
    parse_decimal(&text).ok_or_else(|| Error::Config(format!("{key}: not a number: {text}")))
}

fn count(key: &str, v: &Json) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::Config(format!("{key}: expected a nonnegative integer")))
}

fn float(key: &str, v: &Json) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Config(format!("{key}: expected a number")))
}

fn money(key: &str, v: &Json) -> Result<Money> {
    let r = number_ratio(key, v)?;
    Ok(Money::from_micros_ratio(1, 1).scale(r * Ratio::from_integer(1_000_000)))
}

fn string(key: &str, v: &Json) -> Result<String> {
    match v {
        Json::String(s) => Ok(s.clone()),
        Json::Number(n) => Ok(n.to_string()),
        _ => Err(Error::Config(format!("{key}: expected a string"))),
    }
}

impl Config {
    /// Reads a flat JSON config file and applies `TURBODB_*` environment
    /// overrides on top.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        let map: BTreeMap<String, Json> =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Config::default();
        config.apply(&map)?;
        config.apply_env(std::env::vars())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies environment overrides from an iterator of `(name, value)`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut map = BTreeMap::new();
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let Some((section, key)) = rest.split_once('_') else {
                continue;
            };
            let key = format!("{}.{}", section.to_ascii_lowercase(), key.to_ascii_lowercase());
            let json = serde_json::from_str::<Json>(&value).unwrap_or(Json::String(value));
            map.insert(key, json);
        }
        self.apply(&map)
    }

    /// Applies flat dotted-key overrides. Unknown keys are rejected.
    pub fn apply(&mut self, map: &BTreeMap<String, Json>) -> Result<()> {
        for (key, v) in map {
            let k = key.as_str();
            match k {
                "vm.provision_lag_s" => self.vm.provision_lag = seconds_to_ms(k, v)?,
                "vm.unit_price_per_slot_s" => self.vm.unit_price_per_slot_s = money(k, v)?,
                "vm.slots_per_worker" => self.vm.slots_per_worker = count(k, v)?,
                "vm.floor" => self.vm.floor = count(k, v)?,
                "cf.startup_lag_s" => self.cf.startup_lag = seconds_to_ms(k, v)?,
                "cf.price_multiplier" => self.cf.price_multiplier = number_ratio(k, v)?,
                "cf.max_workers" => self.cf.max_workers = count(k, v)?,
                "scaling.low_watermark" => self.scaling.low_watermark = float(k, v)?,
                "scaling.lazy_window_s" => self.scaling.lazy_window = seconds_to_ms(k, v)?,
                "scaling.metrics_interval_s" => {
                    self.scaling.metrics_interval = seconds_to_ms(k, v)?
                }
                "sched.tick_s" => self.sched.tick = seconds_to_ms(k, v)?,
                "sched.default_grace_s" => self.sched.default_grace = seconds_to_ms(k, v)?,
                "sched.vm_parallelism" => self.sched.vm_parallelism = count(k, v)?,
                "sched.cf_parallelism" => self.sched.cf_parallelism = count(k, v)?,
                "engine.scan_throughput_mib_s" => {
                    let r = number_ratio(k, v)? * Ratio::from_integer(1024 * 1024);
                    self.engine.scan_throughput_bytes_s = r.to_integer() as u64;
                }
                "engine.data_scale" => self.engine.data_scale = count(k, v)? as u64,
                "billing.tb_unit" => {
                    self.billing.tb_unit = match string(k, v)?.as_str() {
                        "binary" => TbUnit::Binary,
                        "decimal" => TbUnit::Decimal,
                        other => {
                            return Err(Error::Config(format!(
                                "{k}: expected \"binary\" or \"decimal\", got {other:?}"
                            )))
                        }
                    }
                }
                "billing.rate_immediate" => self.billing.rate_immediate = money(k, v)?,
                "billing.rate_relaxed" => self.billing.rate_relaxed = money(k, v)?,
                "billing.rate_best_of_effort" => self.billing.rate_best_of_effort = money(k, v)?,
                "nl2sql.backend" => {
                    self.nl2sql.backend = match string(k, v)?.as_str() {
                        "template" => Nl2SqlBackend::Template,
                        "http" => Nl2SqlBackend::Http,
                        other => {
                            return Err(Error::Config(format!(
                                "{k}: expected \"template\" or \"http\", got {other:?}"
                            )))
                        }
                    }
                }
                "nl2sql.endpoint" => self.nl2sql.endpoint = Some(string(k, v)?),
                "nl2sql.timeout_s" => self.nl2sql.timeout = seconds_to_ms(k, v)?,
                "gateway.listen" => self.gateway.listen = string(k, v)?,
                "gateway.token" => self.gateway.token = Some(string(k, v)?),
                "gateway.ui_dir" => self.gateway.ui_dir = Some(string(k, v)?),
                _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let lo = Ratio::from_integer(9);
        let hi = Ratio::from_integer(24);
        if self.cf.price_multiplier < lo || self.cf.price_multiplier > hi {
            return Err(Error::Config(format!(
                "cf.price_multiplier must lie in [9, 24], got {}",
                self.cf.price_multiplier
            )));
        }
        if self.vm.slots_per_worker == 0 {
            return Err(Error::Config("vm.slots_per_worker must be >= 1".into()));
        }
        if self.vm.floor == 0 {
            return Err(Error::Config("vm.floor must be >= 1".into()));
        }
        if self.sched.tick == 0 || self.scaling.metrics_interval == 0 {
            return Err(Error::Config(
                "sched.tick_s and scaling.metrics_interval_s must be positive".into(),
            ));
        }
        if !self.scaling.metrics_interval.is_multiple_of(self.sched.tick) {
            return Err(Error::Config(
                "scaling.metrics_interval_s must be a multiple of sched.tick_s".into(),
            ));
        }
        if self.sched.default_grace == 0 {
            return Err(Error::Config("sched.default_grace_s must be positive".into()));
        }
        if self.sched.vm_parallelism == 0 || self.sched.cf_parallelism == 0 {
            return Err(Error::Config("parallelism settings must be >= 1".into()));
        }
        if self.cf.max_workers == 0 {
            return Err(Error::Config("cf.max_workers must be >= 1".into()));
        }
        if self.engine.scan_throughput_bytes_s == 0 || self.engine.data_scale == 0 {
            return Err(Error::Config(
                "engine.scan_throughput_mib_s and engine.data_scale must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.scaling.low_watermark) {
            return Err(Error::Config("scaling.low_watermark must lie in [0, 1]".into()));
        }
        for (name, rate) in [
            ("billing.rate_immediate", self.billing.rate_immediate),
            ("billing.rate_relaxed", self.billing.rate_relaxed),
            ("billing.rate_best_of_effort", self.billing.rate_best_of_effort),
        ] {
            if rate <= Money::ZERO {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// CF price per worker-second.
    pub fn cf_unit_price(&self) -> Money {
        self.vm.unit_price_per_slot_s.scale(self.cf.price_multiplier)
    }

    pub fn with_overrides(mut self, map: &BTreeMap<String, Json>) -> Result<Config> {
        self.apply(map)?;
        self.validate()?;
        Ok(self)
    }
}
