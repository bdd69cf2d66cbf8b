use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datatypes::DataTypeKind;
use crate::error::ConfigError;
use crate::ids::ReplicaId;

/// Which replication scheme a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Nuec,
    Fullop,
    Stateship,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::Nuec, EngineKind::Fullop, EngineKind::Stateship];

    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Nuec => "nuec",
            EngineKind::Fullop => "fullop",
            EngineKind::Stateship => "stateship",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EngineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown engine `{s}` (expected nuec, fullop or stateship)"))
    }
}

/// Message delay model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Delivery {
    /// Every broadcast arrives one tick after it is sent.
    Fixed,
    /// Each (message, destination) pair gets an independent delay in `1..=max_delay`.
    Random { max_delay: u64 },
}

impl fmt::Display for Delivery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delivery::Fixed => f.write_str("fixed"),
            Delivery::Random { max_delay } => write!(f, "random:{max_delay}"),
        }
    }
}

impl FromStr for Delivery {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "fixed" {
            return Ok(Delivery::Fixed);
        }
        let max = s
            .strip_prefix("random:")
            .ok_or_else(|| format!("expected `fixed` or `random:<maxDelay>`, got `{s}`"))?;
        let max_delay: u64 = max.trim().parse().map_err(|_| format!("bad maximum delay `{max}`"))?;
        if max_delay == 0 {
            return Err("maximum delay must be at least 1".into());
        }
        Ok(Delivery::Random { max_delay })
    }
}

/// A fail-stop crash of `replica` just before global event `at_event`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Crash {
    pub replica: ReplicaId,
    pub at_event: u64,
}

impl fmt::Display for Crash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.replica.0, self.at_event)
    }
}

impl FromStr for Crash {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, at) = s.split_once('@').ok_or_else(|| format!("expected `<replica>@<event>`, got `{s}`"))?;
        let replica = r.trim().parse().map_err(|_| format!("bad replica `{r}`"))?;
        let at_event = at.trim().parse().map_err(|_| format!("bad event index `{at}`"))?;
        Ok(Crash { replica: ReplicaId(replica), at_event })
    }
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub n_replicas: usize,
    pub f: usize,
    pub data_type: DataTypeKind,
    pub engine: EngineKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_ops: u64,
    pub n_ids: u64,
    pub max_score: u64,
    pub remove_ratio: f64,
    pub sync_every_events: u64,
    pub seed: u64,
    pub crashes: Vec<Crash>,
    pub delivery: Delivery,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_replicas: 5,
            f: 2,
            data_type: DataTypeKind::TopKRmv,
            engine: EngineKind::Nuec,
            k: 100,
            n_ops: 50_000,
            n_ids: 1_000,
            max_score: 250_000,
            remove_ratio: 0.05,
            sync_every_events: 100,
            seed: 1,
            crashes: Vec::new(),
            delivery: Delivery::Fixed,
        }
    }
}

/// Every settable key, in canonical order.
pub const KEYS: [&str; 13] = [
    "nReplicas",
    "f",
    "dataType",
    "engine",
    "K",
    "nOps",
    "nIds",
    "maxScore",
    "removeRatio",
    "syncEveryEvents",
    "seed",
    "crashes",
    "delivery",
];

fn parse<T: FromStr>(field: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::invalid(field, format!("cannot parse `{value}`: {e}")))
}

impl SimConfig {
    /// Sets one field from its textual form. Does not validate cross-field
    /// invariants; call [`SimConfig::validate`] afterwards.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "nReplicas" => self.n_replicas = parse("nReplicas", value)?,
            "f" => self.f = parse("f", value)?,
            "dataType" => self.data_type = parse("dataType", value)?,
            "engine" => self.engine = parse("engine", value)?,
            "K" => self.k = parse("K", value)?,
            "nOps" => self.n_ops = parse("nOps", value)?,
            "nIds" => self.n_ids = parse("nIds", value)?,
            "maxScore" => self.max_score = parse("maxScore", value)?,
            "removeRatio" => self.remove_ratio = parse("removeRatio", value)?,
            "syncEveryEvents" => self.sync_every_events = parse("syncEveryEvents", value)?,
            "seed" => self.seed = parse("seed", value)?,
            "crashes" => {
                self.crashes = value
                    .split([',', ';', ' '])
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse("crashes", s))
                    .collect::<Result<_, _>>()?
            }
            "delivery" => self.delivery = parse("delivery", value)?,
            _ => {
                return Err(ConfigError::invalid(
                    "key",
                    format!("unknown key `{key}` (expected one of {})", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: u64| {
            if v == 0 {
                Err(ConfigError::invalid(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("nReplicas", self.n_replicas as u64)?;
        positive("K", self.k as u64)?;
        positive("nIds", self.n_ids)?;
        positive("maxScore", self.max_score)?;
        positive("syncEveryEvents", self.sync_every_events)?;
        if self.f >= self.n_replicas {
            return Err(ConfigError::invalid(
                "f",
                format!("must be smaller than nReplicas ({}), got {}", self.n_replicas, self.f),
            ));
        }
        if !(0.0..=1.0).contains(&self.remove_ratio) {
            return Err(ConfigError::invalid("removeRatio", format!("must lie in [0, 1], got {}", self.remove_ratio)));
        }
        if self.crashes.len() > self.f {
            return Err(ConfigError::invalid(
                "crashes",
                format!("{} crashes requested but f = {}", self.crashes.len(), self.f),
            ));
        }
        let mut crashed = std::collections::BTreeSet::new();
        for c in &self.crashes {
            if c.replica.index() >= self.n_replicas {
                return Err(ConfigError::invalid("crashes", format!("no replica {}", c.replica.0)));
            }
            if !crashed.insert(c.replica) {
                return Err(ConfigError::invalid("crashes", format!("replica {} crashes twice", c.replica.0)));
            }
        }
        if crashed.len() == self.n_replicas {
            return Err(ConfigError::invalid("crashes", "at least one replica must survive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SimConfig::default();
        assert_eq!((c.n_replicas, c.f, c.k, c.sync_every_events), (5, 2, 100, 100));
        c.validate().unwrap();
    }

    #[test]
    fn remove_ratio_out_of_range() {
        let mut c = SimConfig::default();
        c.set("removeRatio", "1.5").unwrap();
        assert_eq!(c.validate().unwrap_err().field(), "removeRatio");
    }

    #[test]
    fn too_many_crashes_rejected() {
        let mut c = SimConfig::default();
        c.set("crashes", "1@10, 2@20, 3@30").unwrap();
        assert_eq!(c.validate().unwrap_err().field(), "crashes");
        c.set("crashes", "1@10, 1@20").unwrap();
        assert_eq!(c.validate().unwrap_err().field(), "crashes");
        c.set("crashes", "1@10,3@20").unwrap();
        c.validate().unwrap();
        assert_eq!(c.crashes[1], Crash { replica: ReplicaId(3), at_event: 20 });
    }

    #[test]
    fn f_must_be_below_n() {
        let mut c = SimConfig::default();
        c.set("f", "5").unwrap();
        assert_eq!(c.validate().unwrap_err().field(), "f");
    }

    #[test]
    fn parse_errors_name_the_field() {
        let mut c = SimConfig::default();
        assert_eq!(c.set("nOps", "many").unwrap_err().field(), "nOps");
        assert_eq!(c.set("dataType", "bag").unwrap_err().field(), "dataType");
        assert_eq!(c.set("delivery", "random:0").unwrap_err().field(), "delivery");
        assert_eq!(c.set("colour", "red").unwrap_err().field(), "key");
    }

    #[test]
    fn delivery_round_trips() {
        for d in [Delivery::Fixed, Delivery::Random { max_delay: 7 }] {
            assert_eq!(d.to_string().parse::<Delivery>().unwrap(), d);
        }
    }
}
