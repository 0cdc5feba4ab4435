//! JSON scenario configuration.
//!
//! Only `rx_area` and `eve_area` are required. Every other key falls back to
//! the reference deployment: BS at (0, 0, 7.5) m with a 4x4 UPA, RIS at
//! (0, 50, 3) m with a 10x15 UPA, PL0 = -30 dB at 1 m, exponent 2.2,
//! K = 13.2, σ² = -105 dBm, P_T = 35 dBm, ε = 1e-5 and 100 trials.
//!
//! Powers accept either a bare number (dBm) or a string with a unit, e.g.
//! `"-105 dBm"`, `"5 dBW"`, `"3.2e-14 W"` or `"2 mW"`. The resolved
//! configuration always serializes powers as dBm numbers.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channel::{dbm_to_watts, watts_to_dbm, PathlossModel, RicianModel};
use crate::error::{Error, Result};
use crate::evaluation::{
    ensure_disjoint, ExperimentSettings, MaxRateReading, MonteCarloConfig, Scenario, SchemeKind,
};
use crate::geometry::{PlanarArea, Position3D, UpaGeometry};
use crate::optimizer::AoConfig;
use crate::spatial::QuadratureGrid;

/// Power level held in dBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDbm(pub f64);

impl PowerDbm {
    pub fn watts(&self) -> f64 {
        dbm_to_watts(self.0)
    }
}

impl Serialize for PowerDbm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for PowerDbm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(PowerDbm(v)),
            Raw::Text(s) => parse_power(&s).map(PowerDbm).map_err(serde::de::Error::custom),
        }
    }
}

/// Parse `"<value> <unit>"` into dBm.
pub fn parse_power(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim().replace('\u{2212}', "-");
    let split = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse power `{text}`"))?;
    let dbm = match unit.trim() {
        "" | "dBm" | "dbm" => value,
        "dBW" | "dbw" => value + 30.0,
        "W" | "w" => {
            if value <= 0.0 {
                return Err(format!("power must be positive, got `{text}`"));
            }
            watts_to_dbm(value)
        }
        "mW" | "mw" => {
            if value <= 0.0 {
                return Err(format!("power must be positive, got `{text}`"));
            }
            10.0 * value.log10()
        }
        other => return Err(format!("unknown power unit `{other}` in `{text}`")),
    };
    if !dbm.is_finite() {
        return Err(format!("power must be finite, got `{text}`"));
    }
    Ok(dbm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathlossConfig {
    #[serde(default = "default_pl0_db")]
    pub pl0_db: f64,
    #[serde(default = "default_d0")]
    pub d0_m: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

impl Default for PathlossConfig {
    fn default() -> Self {
        Self {
            pl0_db: default_pl0_db(),
            d0_m: default_d0(),
            exponent: default_exponent(),
        }
    }
}

impl PathlossConfig {
    fn model(&self, key: &str) -> Result<PathlossModel> {
        PathlossModel::from_db(self.pl0_db, self.d0_m, self.exponent)
            .map_err(|e| Error::config(key, e.to_string()))
    }
}

fn default_pl0_db() -> f64 {
    -30.0
}
fn default_d0() -> f64 {
    1.0
}
fn default_exponent() -> f64 {
    2.2
}
fn default_bs_position() -> Position3D {
    Position3D::new(0.0, 0.0, 7.5)
}
fn default_ris_position() -> Position3D {
    Position3D::new(0.0, 50.0, 3.0)
}
fn default_bs_array() -> UpaGeometry {
    UpaGeometry {
        n_vertical: 4,
        n_horizontal: 4,
        spacing_ratio: 0.5,
    }
}
fn default_ris_array() -> UpaGeometry {
    UpaGeometry {
        n_vertical: 10,
        n_horizontal: 15,
        spacing_ratio: 0.5,
    }
}
fn default_k() -> f64 {
    13.2
}
fn default_noise() -> PowerDbm {
    PowerDbm(-105.0)
}
fn default_transmit_power() -> PowerDbm {
    PowerDbm(35.0)
}
fn default_power_grid() -> Vec<f64> {
    (0..9).map(|i| 20.0 + 2.5 * i as f64).collect()
}
fn default_eval_grid() -> QuadratureGrid {
    QuadratureGrid { nx: 48, ny: 30 }
}
fn default_fading_samples() -> usize {
    1
}
fn default_schemes() -> Vec<SchemeKind> {
    SchemeKind::ALL.to_vec()
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_bs_position")]
    pub bs_position: Position3D,
    #[serde(default = "default_ris_position")]
    pub ris_position: Position3D,
    #[serde(default = "default_bs_array")]
    pub bs_array: UpaGeometry,
    #[serde(default = "default_ris_array")]
    pub ris_array: UpaGeometry,
    pub rx_area: PlanarArea,
    pub eve_area: PlanarArea,
    /// RIS to RX/Eve pathloss.
    #[serde(default)]
    pub pathloss: PathlossConfig,
    #[serde(default)]
    pub bs_ris_pathloss: PathlossConfig,
    #[serde(default = "default_k")]
    pub rician_k: f64,
    #[serde(default = "default_k")]
    pub bs_ris_rician_k: f64,
    #[serde(default = "default_noise")]
    pub noise_power: PowerDbm,
    /// Operating point for `optimize` and `heatmap`.
    #[serde(default = "default_transmit_power")]
    pub transmit_power: PowerDbm,
    #[serde(default = "default_power_grid")]
    pub power_grid_dbm: Vec<f64>,
    #[serde(default)]
    pub quadrature: QuadratureGrid,
    #[serde(default = "default_eval_grid")]
    pub eval_grid: QuadratureGrid,
    #[serde(default = "default_fading_samples")]
    pub fading_samples: usize,
    #[serde(default)]
    pub max_rate_reading: MaxRateReading,
    #[serde(default)]
    pub ao: AoConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeKind>,
}

/// Dotted key for a deserialization error: the path to the failing value,
/// extended by the field name for missing and unknown fields.
fn error_key(path: &str, msg: &str) -> String {
    let field = ["missing field `", "unknown field `"].iter().find_map(|marker| {
        let rest = msg.split(marker).nth(1)?;
        Some(rest[..rest.find('`')?].to_string())
    });
    let path = if path == "." { "" } else { path };
    match (path.is_empty(), field) {
        (true, Some(f)) => f,
        (false, Some(f)) if msg.starts_with("unknown field") => {
            // serde reports the unknown key itself as the last path segment
            if path.ends_with(&f) { path.to_string() } else { format!("{path}.{f}") }
        }
        (false, Some(f)) => format!("{path}.{f}"),
        (true, None) => "<document>".to_string(),
        (false, None) => path.to_string(),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let msg = e.inner().to_string();
            Error::config(error_key(&e.path().to_string(), &msg), msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |key: &str, r: Result<()>| r.map_err(|e| Error::config(key, e.to_string()));
        wrap("bs_array", self.bs_array.validate())?;
        wrap("ris_array", self.ris_array.validate())?;
        wrap("rx_area", self.rx_area.validate())?;
        wrap("eve_area", self.eve_area.validate())?;
        ensure_disjoint(&self.rx_area, &self.eve_area)?;
        if !self.bs_position.is_finite() {
            return Err(Error::config("bs_position", "coordinates must be finite"));
        }
        if !self.ris_position.is_finite() {
            return Err(Error::config("ris_position", "coordinates must be finite"));
        }
        self.pathloss.model("pathloss")?;
        self.bs_ris_pathloss.model("bs_ris_pathloss")?;
        RicianModel::new(self.rician_k).map_err(|e| Error::config("rician_k", e.to_string()))?;
        RicianModel::new(self.bs_ris_rician_k)
            .map_err(|e| Error::config("bs_ris_rician_k", e.to_string()))?;
        for (key, p) in [
            ("noise_power", self.noise_power.0),
            ("transmit_power", self.transmit_power.0),
        ] {
            if !p.is_finite() {
                return Err(Error::config(key, "must be a finite dBm value"));
            }
        }
        if self.power_grid_dbm.is_empty() || self.power_grid_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("power_grid_dbm", "needs at least one finite dBm value"));
        }
        for (key, g) in [("quadrature", self.quadrature), ("eval_grid", self.eval_grid)] {
            if g.nx == 0 || g.ny == 0 {
                return Err(Error::config(key, "grid needs at least one cell per axis"));
            }
        }
        if self.fading_samples == 0 {
            return Err(Error::config("fading_samples", "must be at least 1"));
        }
        self.ao.validate()?;
        if self.monte_carlo.n_trials == 0 {
            return Err(Error::config("monte_carlo.n_trials", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "needs at least one scheme"));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let scenario = Scenario {
            p_bs: self.bs_position,
            p_ris: self.ris_position,
            bs_geom: self.bs_array,
            ris_geom: self.ris_array,
            rx_area: self.rx_area,
            eve_area: self.eve_area,
            link_pathloss: self.pathloss.model("pathloss")?,
            link_rician: RicianModel::new(self.rician_k)?,
            bs_ris_pathloss: self.bs_ris_pathloss.model("bs_ris_pathloss")?,
            bs_ris_rician: RicianModel::new(self.bs_ris_rician_k)?,
            noise_power: self.noise_power.watts(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            quadrature: self.quadrature,
            eval_grid: self.eval_grid,
            ao: self.ao,
            fading_samples: self.fading_samples,
            reading: self.max_rate_reading,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::parse(&text)
}
