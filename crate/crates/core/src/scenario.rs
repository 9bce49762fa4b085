//! Mission scenarios: positions, powers, noise, geometry and time budget.
//!
//! All fields are stored in linear SI units. The config document is a flat
//! TOML table whose keys carry their unit as a suffix (`_m`, `_s`, `_mps`,
//! `_W`, `_mW`, `_dB`, `_dBm`); decibel keys are converted on load and the
//! serializer always writes the linear keys, so `load(serialize(s)) == s`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::geometry::{dist, is_finite, Point};
use crate::{Error, Result};

/// Altitude used when a config omits `alt_m`.
pub const DEFAULT_ALTITUDE: f64 = 100.0;
/// Seed of the reference random scenario used by tests and the CLI default.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub gu_pos: Vec<Point>,
    pub eve_pos: Point,
    /// Flight altitude `H` (m).
    pub alt: f64,
    /// Mission time `T` (s).
    pub mission_time: f64,
    /// Maximum speed `V` (m/s).
    pub v_max: f64,
    pub d_min: f64,
    /// Transmit power of UAV-S (W).
    pub p_s: f64,
    /// Jamming power of UAV-J (W).
    pub p_j: f64,
    /// Channel power gain at 1 m (linear).
    pub beta0: f64,
    pub sigma2_gu: f64,
    pub sigma2_eve: f64,
    pub start_s: Point,
    pub end_s: Point,
    pub start_j: Point,
    pub end_j: Point,
    /// Turning points per inter-hover leg.
    pub n_turn: usize,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.gu_pos.len()
    }

    /// Scenario with the reference simulation parameters and the given nodes.
    /// Area is the side of the square operating region; UAV corners sit at
    /// 10% / 90% of it (450/50 m for a 500 m area).
    pub fn with_reference_params(gu_pos: Vec<Point>, eve_pos: Point, area: f64) -> Self {
        let lo = 0.1 * area;
        let hi = 0.9 * area;
        Scenario {
            gu_pos,
            eve_pos,
            alt: DEFAULT_ALTITUDE,
            mission_time: 150.0,
            v_max: 10.0,
            d_min: 3.0,
            p_s: 10e-3,
            p_j: 1e-3,
            beta0: db_to_linear(-30.0),
            sigma2_gu: dbm_to_watt(-80.0),
            sigma2_eve: dbm_to_watt(-80.0),
            start_s: [hi, hi],
            end_s: [hi, lo],
            start_j: [lo, hi],
            end_j: [lo, lo],
            n_turn: 1,
        }
    }

    /// The scenario most tests and the CLI default to: `random(DEFAULT_SEED, 4, 500)`.
    pub fn reference() -> Self {
        random_scenario(DEFAULT_SEED, 4, 500.0)
    }

    pub fn validate(&self) -> Result<()> {
        let pts = self.gu_pos.iter().chain([
            &self.eve_pos,
            &self.start_s,
            &self.end_s,
            &self.start_j,
            &self.end_j,
        ]);
        for p in pts {
            if !is_finite(*p) {
                return Err(Error::NonFinite("position".into()));
            }
        }
        let scalars = [
            ("alt", self.alt),
            ("T", self.mission_time),
            ("V", self.v_max),
            ("d_min", self.d_min),
            ("P_S", self.p_s),
            ("P_J", self.p_j),
            ("beta0", self.beta0),
            ("sigma2_gu", self.sigma2_gu),
            ("sigma2_eve", self.sigma2_eve),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        let inv = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Invariant(msg.into()))
            }
        };
        inv(self.k() >= 1, "at least one ground user required (K >= 1)")?;
        inv(self.mission_time > 0.0, "mission time must be positive")?;
        inv(self.v_max > 0.0, "maximum speed must be positive")?;
        inv(self.d_min >= 0.0, "safety distance must be nonnegative")?;
        inv(self.alt > 0.0, "altitude must be positive")?;
        inv(
            self.p_s >= 0.0 && self.p_j >= 0.0,
            "powers must be nonnegative",
        )?;
        inv(self.beta0 > 0.0, "beta0 must be positive")?;
        inv(
            self.sigma2_gu > 0.0 && self.sigma2_eve > 0.0,
            "noise powers must be positive",
        )?;
        inv(
            dist(self.start_s, self.start_j) >= self.d_min,
            "initial separation below d_min",
        )?;
        inv(
            dist(self.end_s, self.end_j) >= self.d_min,
            "final separation below d_min",
        )?;
        let need = dist(self.start_s, self.end_s).max(dist(self.start_j, self.end_j)) / self.v_max;
        inv(
            self.mission_time >= need,
            "mission time too short to reach the final points",
        )?;
        Ok(())
    }

    /// Copy with a different jamming power.
    pub fn with_p_j(&self, p_j: f64) -> Self {
        Scenario {
            p_j,
            ..self.clone()
        }
    }

    /// Parse a config document (see module docs for the key set).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        Self::from_table(&table)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn from_table(t: &Table) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "K",
            "N",
            "area_m",
            "gu_m",
            "eve_m",
            "alt_m",
            "T_s",
            "V_mps",
            "d_min_m",
            "P_S_W",
            "P_S_mW",
            "P_J_W",
            "P_J_mW",
            "beta0",
            "beta0_dB",
            "noise_dBm",
            "noise_gu_dBm",
            "noise_eve_dBm",
            "sigma2_gu_W",
            "sigma2_eve_W",
            "start_S_m",
            "end_S_m",
            "start_J_m",
            "end_J_m",
        ];
        if let Some(k) = t.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::BadValue {
                key: k.clone(),
                msg: "unknown key".into(),
            });
        }
        let gu_pos = match t.get("gu_m") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| point_value("gu_m", v))
                .collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(bad("gu_m", "expected an array of [x, y] points")),
            None => return Err(Error::MissingKey("gu_m".into())),
        };
        if let Some(k) = t.get("K") {
            let k = int_value("K", k)?;
            if k != gu_pos.len() {
                return Err(bad("K", "does not match the number of gu_m points"));
            }
        }
        let n_turn = match t.get("N") {
            Some(v) => int_value("N", v)?,
            None => 1,
        };
        let alt = match t.get("alt_m") {
            Some(v) => num_value("alt_m", v)?,
            None => DEFAULT_ALTITUDE,
        };
        let p_s = power(t, "P_S")?;
        let p_j = power(t, "P_J")?;
        let beta0 = match (t.get("beta0"), t.get("beta0_dB")) {
            (Some(v), None) => num_value("beta0", v)?,
            (None, Some(v)) => db_to_linear(num_value("beta0_dB", v)?),
            (Some(_), Some(_)) => return Err(bad("beta0", "give either beta0 or beta0_dB")),
            (None, None) => return Err(Error::MissingKey("beta0_dB".into())),
        };
        let sigma2_gu = noise(t, "gu")?;
        let sigma2_eve = noise(t, "eve")?;
        let s = Scenario {
            gu_pos,
            eve_pos: point(t, "eve_m")?,
            alt,
            mission_time: num(t, "T_s")?,
            v_max: num(t, "V_mps")?,
            d_min: num(t, "d_min_m")?,
            p_s,
            p_j,
            beta0,
            sigma2_gu,
            sigma2_eve,
            start_s: point(t, "start_S_m")?,
            end_s: point(t, "end_S_m")?,
            start_j: point(t, "start_J_m")?,
            end_j: point(t, "end_J_m")?,
            n_turn,
        };
        s.validate()?;
        Ok(s)
    }

    /// Serialize with linear-unit keys only.
    pub fn to_toml_string(&self) -> String {
        let pt = |p: Point| Value::Array(vec![Value::Float(p[0]), Value::Float(p[1])]);
        let mut t = Table::new();
        t.insert("K".into(), Value::Integer(self.k() as i64));
        t.insert("N".into(), Value::Integer(self.n_turn as i64));
        t.insert(
            "gu_m".into(),
            Value::Array(self.gu_pos.iter().map(|p| pt(*p)).collect()),
        );
        t.insert("eve_m".into(), pt(self.eve_pos));
        t.insert("alt_m".into(), Value::Float(self.alt));
        t.insert("T_s".into(), Value::Float(self.mission_time));
        t.insert("V_mps".into(), Value::Float(self.v_max));
        t.insert("d_min_m".into(), Value::Float(self.d_min));
        t.insert("P_S_W".into(), Value::Float(self.p_s));
        t.insert("P_J_W".into(), Value::Float(self.p_j));
        t.insert("beta0".into(), Value::Float(self.beta0));
        t.insert("sigma2_gu_W".into(), Value::Float(self.sigma2_gu));
        t.insert("sigma2_eve_W".into(), Value::Float(self.sigma2_eve));
        t.insert("start_S_m".into(), pt(self.start_s));
        t.insert("end_S_m".into(), pt(self.end_s));
        t.insert("start_J_m".into(), pt(self.start_j));
        t.insert("end_J_m".into(), pt(self.end_j));
        toml::to_string(&t).expect("a flat table always serializes")
    }

    /// SHA-256 of the canonical serialization, lowercase hex.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Uniform placement of `k` users and the eavesdropper in `[0, area]²` with
/// the reference parameters. Deterministic in `seed`.
pub fn random_scenario(seed: u64, k: usize, area: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || [rng.gen_range(0.0..=area), rng.gen_range(0.0..=area)];
    let gu_pos: Vec<Point> = (0..k).map(|_| draw()).collect();
    let eve_pos = draw();
    Scenario::with_reference_params(gu_pos, eve_pos, area)
}

fn bad(key: &str, msg: &str) -> Error {
    Error::BadValue {
        key: key.into(),
        msg: msg.into(),
    }
}

fn num_value(key: &str, v: &Value) -> Result<f64> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        _ => return Err(bad(key, "expected a number")),
    };
    if !x.is_finite() {
        return Err(Error::NonFinite(key.into()));
    }
    Ok(x)
}

fn int_value(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(bad(key, "expected a nonnegative integer")),
    }
}

fn point_value(key: &str, v: &Value) -> Result<Point> {
    match v {
        Value::Array(a) if a.len() == 2 => Ok([num_value(key, &a[0])?, num_value(key, &a[1])?]),
        _ => Err(bad(key, "expected [x, y]")),
    }
}

fn num(t: &Table, key: &str) -> Result<f64> {
    num_value(
        key,
        t.get(key).ok_or_else(|| Error::MissingKey(key.into()))?,
    )
}

fn point(t: &Table, key: &str) -> Result<Point> {
    point_value(
        key,
        t.get(key).ok_or_else(|| Error::MissingKey(key.into()))?,
    )
}

fn power(t: &Table, base: &str) -> Result<f64> {
    let w = format!("{base}_W");
    let mw = format!("{base}_mW");
    match (t.get(&w), t.get(&mw)) {
        (Some(v), None) => num_value(&w, v),
        (None, Some(v)) => Ok(num_value(&mw, v)? * 1e-3),
        (Some(_), Some(_)) => Err(bad(&w, "give either the W or the mW key")),
        (None, None) => Err(Error::MissingKey(mw)),
    }
}

fn noise(t: &Table, who: &str) -> Result<f64> {
    let w = format!("sigma2_{who}_W");
    let dbm = format!("noise_{who}_dBm");
    if let Some(v) = t.get(&w) {
        return num_value(&w, v);
    }
    if let Some(v) = t.get(&dbm) {
        return Ok(dbm_to_watt(num_value(&dbm, v)?));
    }
    match t.get("noise_dBm") {
        Some(v) => Ok(dbm_to_watt(num_value("noise_dBm", v)?)),
        None => Err(Error::MissingKey(dbm)),
    }
}
