//! Scenario configuration: the full description of one simulation setup,
//! loadable from a flat sectioned key-value file.
//!
//! The format is line-oriented: `[section]` headers, `key = value` pairs,
//! `#` comments. Unknown sections or keys and out-of-range values are
//! reported with their line number. A minimal file only needs the protocol
//! and a source count; everything else has documented defaults.
//!
//! ```text
//! [scenario]
//! protocol = FROG          # FROG | DYFRAG | IDSME
//! sources = 10
//! horizon_ms = 120000
//! seed = 1
//!
//! [radio]
//! range_m = 50.0
//! p_edge = 0.9
//! circle_factor = 0.5
//! # node = 3 10.0 -4.0     explicit placement (repeatable; overrides circle)
//!
//! [traffic]
//! normal_rate_pps = 2.0
//! urgent_rate_pps = 0.5
//! normal_units = 64
//! urgent_units = 16
//! arrival = poisson        # poisson | periodic
//!
//! [csma]
//! fragment_units = 16      # FROG's fixed fragment size
//!
//! [dyfrag]
//! f_min = 2
//! f_max = 64
//! t_assess_ms = 50
//!
//! [idsme]
//! slots = 12
//! cap_init = 4
//! channels = 4
//! cw_urgent = 8
//! cw_normal = 32
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::mac::dyfrag::DyFragConfig;
use crate::mac::frog::{CsmaTiming, FrogConfig, MacConfigError};
use crate::mac::idsme::{IdsmeConfig, IdsmeConfigError};
use crate::medium::MediumConfig;
use crate::time::{SimTime, Ticks, MILLIS};
use crate::traffic::{ArrivalProcess, TrafficProfile};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Protocol {
    Frog,
    Dyfrag,
    Idsme,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Frog, Protocol::Dyfrag, Protocol::Idsme];

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Frog => "FROG",
            Protocol::Dyfrag => "DYFRAG",
            Protocol::Idsme => "IDSME",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FROG" => Ok(Protocol::Frog),
            "DYFRAG" => Ok(Protocol::Dyfrag),
            "IDSME" => Ok(Protocol::Idsme),
            other => Err(format!(
                "unknown protocol {other:?} (expected FROG, DYFRAG or IDSME)"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RadioConfig {
    pub range_m: f64,
    pub p_edge: f64,
    /// Sources sit on a circle of `circle_factor * range_m` around the sink.
    pub circle_factor: f64,
    /// Explicit positions `(node id, x, y)`; when non-empty they replace the
    /// circular layout and must cover nodes 0..=sources.
    pub explicit: Vec<(u16, f64, f64)>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            range_m: 50.0,
            p_edge: 0.9,
            circle_factor: 0.35,
            explicit: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DyFragParams {
    pub min_units: u32,
    pub max_units: u32,
    pub assess_interval: Ticks,
}

impl Default for DyFragParams {
    fn default() -> Self {
        let d = DyFragConfig::default();
        DyFragParams {
            min_units: d.min_units,
            max_units: d.max_units,
            assess_interval: d.assess_interval,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub id: String,
    pub protocol: Protocol,
    pub sources: u16,
    pub horizon: SimTime,
    pub seed: u64,
    pub radio: RadioConfig,
    pub traffic: TrafficProfile,
    pub timing: CsmaTiming,
    pub frog_fragment_units: u32,
    pub dyfrag: DyFragParams,
    pub idsme: IdsmeConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            id: "scenario".to_string(),
            protocol: Protocol::Frog,
            sources: 10,
            horizon: SimTime::from_secs(120),
            seed: 1,
            radio: RadioConfig::default(),
            traffic: TrafficProfile::default(),
            timing: CsmaTiming::default(),
            frog_fragment_units: 16,
            dyfrag: DyFragParams::default(),
            idsme: IdsmeConfig::default(),
        }
    }
}

impl Scenario {
    pub fn frog_config(&self) -> FrogConfig {
        FrogConfig {
            timing: self.timing,
            fragment_units: self.frog_fragment_units,
        }
    }

    pub fn dyfrag_config(&self) -> DyFragConfig {
        DyFragConfig {
            timing: self.timing,
            min_units: self.dyfrag.min_units,
            max_units: self.dyfrag.max_units,
            assess_interval: self.dyfrag.assess_interval,
        }
    }

    pub fn medium_config(&self) -> MediumConfig {
        MediumConfig {
            range_m: self.radio.range_m,
            p_edge: self.radio.p_edge,
            channels: match self.protocol {
                Protocol::Idsme => self.idsme.channels,
                _ => 1,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.sources < 1 {
            return Err(ScenarioError::Invalid(
                "sources must be at least 1".to_string(),
            ));
        }
        if self.horizon == SimTime::ZERO {
            return Err(ScenarioError::Invalid(
                "horizon must be positive".to_string(),
            ));
        }
        if self.traffic.normal_rate_pps < 0.0 || self.traffic.urgent_rate_pps < 0.0 {
            return Err(ScenarioError::Invalid("rates must be >= 0".to_string()));
        }
        if self.traffic.normal_units < 1 || self.traffic.urgent_units < 1 {
            return Err(ScenarioError::Invalid(
                "payloads must be >= 1 unit".to_string(),
            ));
        }
        if self.radio.range_m <= 0.0 {
            return Err(ScenarioError::Invalid(
                "range_m must be positive".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.radio.p_edge) {
            return Err(ScenarioError::Invalid(
                "p_edge must be a probability".to_string(),
            ));
        }
        if !self.radio.explicit.is_empty() {
            for id in 0..=self.sources {
                if !self.radio.explicit.iter().any(|(n, _, _)| *n == id) {
                    return Err(ScenarioError::Invalid(format!(
                        "explicit layout misses node {id}"
                    )));
                }
            }
        }
        match self.protocol {
            Protocol::Frog => self.frog_config().validate()?,
            Protocol::Dyfrag => {
                if self.dyfrag.min_units > self.dyfrag.max_units {
                    return Err(ScenarioError::Invalid(format!(
                        "f_min ({}) must not exceed f_max ({})",
                        self.dyfrag.min_units, self.dyfrag.max_units
                    )));
                }
                self.dyfrag_config().validate()?;
                if self.dyfrag.max_units < self.traffic.normal_units {
                    return Err(ScenarioError::Invalid(
                        "f_max below the normal payload would fragment forever".to_string(),
                    ));
                }
            }
            Protocol::Idsme => {
                self.idsme.validate()?;
                let worst = self.idsme.slots_for_units(self.traffic.normal_units);
                if worst > self.idsme.total_slots - self.idsme.cap_max {
                    return Err(ScenarioError::Invalid(format!(
                        "a {}-unit packet needs {} CFP slots but only {} remain at cap_max",
                        self.traffic.normal_units,
                        worst,
                        self.idsme.total_slots - self.idsme.cap_max
                    )));
                }
            }
        }
        Ok(())
    }

    /// Node positions for this scenario (sink is node 0).
    pub fn positions(&self) -> Vec<(f64, f64)> {
        if self.radio.explicit.is_empty() {
            crate::medium::circle_layout(self.sources, self.radio.range_m, self.radio.circle_factor)
        } else {
            let mut positions = vec![(0.0, 0.0); self.sources as usize + 1];
            for &(id, x, y) in &self.radio.explicit {
                if let Some(slot) = positions.get_mut(id as usize) {
                    *slot = (x, y);
                }
            }
            positions
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key {key:?} in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: bad value for {key:?}: {msg}")]
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("missing required key: [scenario] protocol")]
    MissingProtocol,
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid MAC configuration: {0}")]
    Mac(#[from] MacConfigError),
    #[error("invalid i-DSME configuration: {0}")]
    Idsme(#[from] IdsmeConfigError),
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let mut sc = parse_scenario(&text)?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        sc.id = stem.to_string();
    }
    Ok(sc)
}

/// Parse and validate a scenario from its textual form.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut section = String::new();
    let mut saw_protocol = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or(ScenarioError::Malformed { line })?;
            section = name.trim().to_ascii_lowercase();
            match section.as_str() {
                "scenario" | "radio" | "traffic" | "csma" | "dyfrag" | "idsme" => {}
                other => {
                    return Err(ScenarioError::UnknownSection {
                        line,
                        section: other.to_string(),
                    })
                }
            }
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ScenarioError::Malformed { line })?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        apply_key(&mut sc, &section, &key, value, line, &mut saw_protocol)?;
    }

    if !saw_protocol {
        return Err(ScenarioError::MissingProtocol);
    }
    sc.validate()?;
    Ok(sc)
}

fn parse_num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, ScenarioError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ScenarioError::BadValue {
        line,
        key: key.to_string(),
        msg: e.to_string(),
    })
}

fn apply_key(
    sc: &mut Scenario,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
    saw_protocol: &mut bool,
) -> Result<(), ScenarioError> {
    let unknown = || ScenarioError::UnknownKey {
        line,
        section: section.to_string(),
        key: key.to_string(),
    };
    match section {
        "scenario" => match key {
            "protocol" => {
                sc.protocol = value.parse().map_err(|msg| ScenarioError::BadValue {
                    line,
                    key: key.to_string(),
                    msg,
                })?;
                *saw_protocol = true;
            }
            "sources" => sc.sources = parse_num(key, value, line)?,
            "horizon_ms" => sc.horizon = SimTime(parse_num::<u64>(key, value, line)? * MILLIS),
            "seed" => sc.seed = parse_num(key, value, line)?,
            "id" => sc.id = value.to_string(),
            _ => return Err(unknown()),
        },
        "radio" => match key {
            "range_m" => sc.radio.range_m = parse_num(key, value, line)?,
            "p_edge" => sc.radio.p_edge = parse_num(key, value, line)?,
            "circle_factor" => sc.radio.circle_factor = parse_num(key, value, line)?,
            "node" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(ScenarioError::BadValue {
                        line,
                        key: key.to_string(),
                        msg: "expected `node = <id> <x> <y>`".to_string(),
                    });
                }
                sc.radio.explicit.push((
                    parse_num(key, parts[0], line)?,
                    parse_num(key, parts[1], line)?,
                    parse_num(key, parts[2], line)?,
                ));
            }
            _ => return Err(unknown()),
        },
        "traffic" => match key {
            "normal_rate_pps" => sc.traffic.normal_rate_pps = parse_num(key, value, line)?,
            "urgent_rate_pps" => sc.traffic.urgent_rate_pps = parse_num(key, value, line)?,
            "normal_units" => sc.traffic.normal_units = parse_num(key, value, line)?,
            "urgent_units" => sc.traffic.urgent_units = parse_num(key, value, line)?,
            "arrival" => {
                sc.traffic.process = match value.to_ascii_lowercase().as_str() {
                    "poisson" => ArrivalProcess::Poisson,
                    "periodic" => ArrivalProcess::Periodic,
                    other => {
                        return Err(ScenarioError::BadValue {
                            line,
                            key: key.to_string(),
                            msg: format!("unknown arrival process {other:?}"),
                        })
                    }
                }
            }
            _ => return Err(unknown()),
        },
        "csma" => match key {
            "fragment_units" => sc.frog_fragment_units = parse_num(key, value, line)?,
            "cca_us" => sc.timing.cca = parse_num(key, value, line)?,
            "backoff_unit_us" => sc.timing.backoff_unit = parse_num(key, value, line)?,
            "min_be" => sc.timing.min_be = parse_num(key, value, line)?,
            "max_be" => sc.timing.max_be = parse_num(key, value, line)?,
            "max_retries" => sc.timing.max_retries = parse_num(key, value, line)?,
            "control_air_us" => sc.timing.control_air = parse_num(key, value, line)?,
            "data_overhead_us" => sc.timing.data_overhead = parse_num(key, value, line)?,
            "unit_air_us" => sc.timing.ticks_per_unit = parse_num(key, value, line)?,
            "frag_gap_us" => sc.timing.frag_gap = parse_num(key, value, line)?,
            "turnaround_us" => sc.timing.turnaround = parse_num(key, value, line)?,
            "cts_wait_us" => sc.timing.cts_wait = parse_num(key, value, line)?,
            "ack_wait_us" => sc.timing.ack_wait = parse_num(key, value, line)?,
            _ => return Err(unknown()),
        },
        "dyfrag" => match key {
            "f_min" => sc.dyfrag.min_units = parse_num(key, value, line)?,
            "f_max" => sc.dyfrag.max_units = parse_num(key, value, line)?,
            "t_assess_ms" => {
                sc.dyfrag.assess_interval = parse_num::<u64>(key, value, line)? * MILLIS
            }
            _ => return Err(unknown()),
        },
        "idsme" => match key {
            "slot_us" => sc.idsme.slot = parse_num(key, value, line)?,
            "slots" => sc.idsme.total_slots = parse_num(key, value, line)?,
            "cap_init" => sc.idsme.cap_init = parse_num(key, value, line)?,
            "cap_min" => sc.idsme.cap_min = parse_num(key, value, line)?,
            "cap_max" => sc.idsme.cap_max = parse_num(key, value, line)?,
            "channels" => sc.idsme.channels = parse_num(key, value, line)?,
            "cw_urgent" => sc.idsme.cw_urgent = parse_num(key, value, line)?,
            "cw_normal" => sc.idsme.cw_normal = parse_num(key, value, line)?,
            _ => return Err(unknown()),
        },
        "" => return Err(ScenarioError::Malformed { line }),
        _ => unreachable!("section validated at header"),
    }
    Ok(())
}
