//! Scenario configuration: defaults, flat `key = value` files and overrides.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::clustering::ClusterParams;
use crate::mobility::MobilityParams;
use crate::network::{LinkParams, PowerProfile};
use crate::routing::RoutingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Chra,
    Backbone,
    Aodv,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Chra, Protocol::Backbone, Protocol::Aodv];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Chra => "chra",
            Protocol::Backbone => "backbone",
            Protocol::Aodv => "aodv",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chra" => Ok(Protocol::Chra),
            "backbone" => Ok(Protocol::Backbone),
            "aodv" => Ok(Protocol::Aodv),
            other => Err(ConfigError::Invalid {
                key: "protocol".into(),
                value: other.into(),
                reason: "expected chra, backbone or aodv".into(),
            }),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub area_side: f64,
    pub density: f64,
    /// Overrides `density` when set.
    pub node_count: Option<usize>,
    pub tx_range: f64,
    pub mobile_ratio: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: f64,
    pub duration: f64,
    pub runs: usize,
    pub protocol: Protocol,
    pub n: u32,
    pub t_sam: f64,
    pub t_ban: f64,
    pub flows: usize,
    pub period: f64,
    pub payload: u32,
    pub traffic_start: f64,
    pub discovery_timeout: f64,
    pub discovery_retries: u32,
    pub repair_timeout: f64,
    pub keepalive_period: f64,
    pub loss_timeout: f64,
    pub mobility_tick: f64,
    pub hop_latency: f64,
    pub rate_bps: f64,
    pub p_tx: f64,
    pub p_rx: f64,
    pub p_idle: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side: 200.0,
            density: 0.00125,
            node_count: None,
            tx_range: 35.0,
            mobile_ratio: 0.3,
            speed_min: 2.0,
            speed_max: 10.0,
            pause: 0.0,
            duration: 60.0,
            runs: 200,
            protocol: Protocol::Chra,
            n: 2,
            t_sam: 3.0,
            t_ban: 10.0,
            flows: 5,
            period: 0.5,
            payload: 512,
            traffic_start: 0.0,
            discovery_timeout: 1.0,
            discovery_retries: 2,
            repair_timeout: 0.5,
            keepalive_period: 1.0,
            loss_timeout: 2.5,
            mobility_tick: 0.1,
            hop_latency: 0.002,
            rate_bps: 54e6,
            p_tx: 0.25,
            p_rx: 0.10,
            p_idle: 0.01,
            seed: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "area_side",
    "density",
    "node_count",
    "tx_range",
    "mobile_ratio",
    "speed_range",
    "speed",
    "pause",
    "duration",
    "runs",
    "protocol",
    "n",
    "t_sam",
    "t_ban",
    "flows",
    "period",
    "payload",
    "traffic_start",
    "discovery_timeout",
    "discovery_retries",
    "repair_timeout",
    "keepalive_period",
    "loss_timeout",
    "mobility_tick",
    "hop_latency",
    "rate_bps",
    "p_tx",
    "p_rx",
    "p_idle",
    "seed",
];

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(key, value, "not a number"))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, value)?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, value, "must be > 0"))
    }
}

fn non_negative(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, value)?;
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, value, "must be >= 0"))
    }
}

impl ScenarioConfig {
    /// Parses a config file body; omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.trim().to_owned(),
                });
            };
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "area_side" => self.area_side = positive(key, value)?,
            "density" => self.density = positive(key, value)?,
            "node_count" => {
                let c: usize = num(key, value)?;
                if c == 0 {
                    return Err(invalid(key, value, "must be > 0"));
                }
                self.node_count = Some(c);
            }
            "tx_range" => self.tx_range = positive(key, value)?,
            "mobile_ratio" => {
                let r = non_negative(key, value)?;
                if r > 1.0 {
                    return Err(invalid(key, value, "must be within [0, 1]"));
                }
                self.mobile_ratio = r;
            }
            "speed_range" => {
                let (lo, hi) = value
                    .split_once('-')
                    .ok_or_else(|| invalid(key, value, "expected `min-max` in km/h"))?;
                let lo = non_negative(key, lo.trim())?;
                let hi = non_negative(key, hi.trim())?;
                if lo > hi {
                    return Err(invalid(key, value, "min exceeds max"));
                }
                self.speed_min = lo;
                self.speed_max = hi;
            }
            "speed" => {
                let v = non_negative(key, value)?;
                self.speed_min = v;
                self.speed_max = v;
            }
            "pause" => self.pause = non_negative(key, value)?,
            "duration" => self.duration = positive(key, value)?,
            "runs" => {
                self.runs = num(key, value)?;
                if self.runs == 0 {
                    return Err(invalid(key, value, "must be > 0"));
                }
            }
            "protocol" => self.protocol = value.parse()?,
            "n" => self.n = num(key, value)?,
            "t_sam" => self.t_sam = positive(key, value)?,
            "t_ban" => self.t_ban = non_negative(key, value)?,
            "flows" => self.flows = num(key, value)?,
            "period" => self.period = positive(key, value)?,
            "payload" => self.payload = num(key, value)?,
            "traffic_start" => self.traffic_start = non_negative(key, value)?,
            "discovery_timeout" => self.discovery_timeout = positive(key, value)?,
            "discovery_retries" => self.discovery_retries = num(key, value)?,
            "repair_timeout" => self.repair_timeout = positive(key, value)?,
            "keepalive_period" => self.keepalive_period = positive(key, value)?,
            "loss_timeout" => self.loss_timeout = positive(key, value)?,
            "mobility_tick" => self.mobility_tick = positive(key, value)?,
            "hop_latency" => self.hop_latency = non_negative(key, value)?,
            "rate_bps" => self.rate_bps = positive(key, value)?,
            "p_tx" => self.p_tx = non_negative(key, value)?,
            "p_rx" => self.p_rx = non_negative(key, value)?,
            "p_idle" => self.p_idle = non_negative(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.loss_timeout <= self.keepalive_period {
            return Err(invalid(
                "loss_timeout",
                &self.loss_timeout.to_string(),
                "must exceed keepalive_period",
            ));
        }
        if self.node_count() < 1 {
            return Err(invalid("density", &self.density.to_string(), "yields no nodes"));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
            .unwrap_or_else(|| (self.density * self.area_side * self.area_side).round() as usize)
    }

    pub fn routing_params(&self) -> RoutingParams {
        RoutingParams {
            n: self.n,
            t_sam: self.t_sam,
            t_ban: self.t_ban,
            discovery_timeout: self.discovery_timeout,
            discovery_retries: self.discovery_retries,
            repair_timeout: self.repair_timeout,
        }
    }

    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            hop_latency: self.hop_latency,
            rate_bps: self.rate_bps,
            min_airtime: 1e-4,
            power: PowerProfile {
                tx_w: self.p_tx,
                rx_w: self.p_rx,
                idle_w: self.p_idle,
            },
        }
    }

    pub fn mobility_params(&self) -> MobilityParams {
        MobilityParams {
            area_side: self.area_side,
            speed_min_kmh: self.speed_min,
            speed_max_kmh: self.speed_max,
            pause: self.pause,
        }
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            keepalive_period: self.keepalive_period,
            loss_timeout: self.loss_timeout,
            ..ClusterParams::default()
        }
    }
}
