//! Device noise parameters and their TOML config file.
//!
//! ```toml
//! [readout]
//! q0 = 0.943          # same-state preservation, m_s = 0
//! q1 = 0.991          # same-state preservation, m_s = -1
//! f0 = 0.95           # assignment fidelity, m_s = 0
//! f1 = 0.995          # assignment fidelity, m_s = -1
//! # table = [...]     # alternatively all eight p(a, s' | s), ordered s, a, s'
//! init0 = 0.998
//! init1 = 0.995
//! dephase_on_flip = [1.0, 1.0, 1.0]
//!
//! [gates]
//! p_gate = 0.01
//! p_echo = 0.005
//!
//! [t2star]
//! spins_ms = [9.9, 11.2, 17.3]
//! segment_time_ms = 3.3333333333333335
//!
//! [phases]
//! phi0 = [0.0, 0.0, 0.0]
//! phi1 = [0.3, 0.7, 1.1]
//! ```
//!
//! Missing keys take the defaults above; unknown keys are rejected.

use std::path::Path;

use log::info;
use toml::{Table, Value};

use crate::error::{check_probability, Error, Result};
use crate::instrument::{ReadoutFactors, ReadoutModel};

/// Environment variable that may name the config file.
pub const CONFIG_ENV: &str = "ZP_CONFIG";

pub const DEFAULT_Q: [f64; 2] = [0.943, 0.991];
pub const DEFAULT_F: [f64; 2] = [0.95, 0.995];
pub const DEFAULT_INIT: [f64; 2] = [0.998, 0.995];
pub const DEFAULT_T2STAR_MS: [f64; 3] = [9.9, 11.2, 17.3];
/// Total sequence time of the three-measurement GHZ protocol, split evenly.
pub const DEFAULT_SEGMENT_MS: f64 = 10.0 / 3.0;
pub const DEFAULT_P_GATE: f64 = 0.006;
pub const DEFAULT_P_ECHO: f64 = 0.005;
pub const DEFAULT_DEPHASE_ON_FLIP: [f64; 3] = [1.0; 3];
pub const DEFAULT_PHI0: [f64; 3] = [0.0; 3];
pub const DEFAULT_PHI1: [f64; 3] = [0.3, 0.7, 1.1];

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseParams {
    pub readout: ReadoutModel,
    /// Electron initialization fidelity into m_s=0 and m_s=−1.
    pub init_fid: [f64; 2],
    /// Depolarizing probability per electron-controlled rotation.
    pub p_gate: f64,
    /// Probability that the readout echo pulse fails to flip the electron.
    pub p_echo: f64,
    /// Nuclear T₂* per spin in ms; `inf` disables idle dephasing.
    pub t2star_ms: [f64; 3],
    /// Idle time charged to each measurement segment, in ms.
    pub segment_time_ms: f64,
    /// Conditional phase per spin acquired during one readout with the
    /// electron in m_s=0 / m_s=−1, in radians.
    pub phi0: [f64; 3],
    pub phi1: [f64; 3],
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            readout: ReadoutModel::factorized(
                ReadoutFactors {
                    q0: DEFAULT_Q[0],
                    q1: DEFAULT_Q[1],
                    f0: DEFAULT_F[0],
                    f1: DEFAULT_F[1],
                },
                DEFAULT_DEPHASE_ON_FLIP,
            )
            .expect("valid defaults"),
            init_fid: DEFAULT_INIT,
            p_gate: DEFAULT_P_GATE,
            p_echo: DEFAULT_P_ECHO,
            t2star_ms: DEFAULT_T2STAR_MS,
            segment_time_ms: DEFAULT_SEGMENT_MS,
            phi0: DEFAULT_PHI0,
            phi1: DEFAULT_PHI1,
        }
    }
}

impl NoiseParams {
    /// Noise-free device with the default conditional phases.
    pub fn ideal() -> Self {
        Self {
            readout: ReadoutModel::ideal(),
            init_fid: [1.0, 1.0],
            p_gate: 0.0,
            p_echo: 0.0,
            t2star_ms: [f64::INFINITY; 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("readout.init0", self.init_fid[0])?;
        check_probability("readout.init1", self.init_fid[1])?;
        check_probability("gates.p_gate", self.p_gate)?;
        check_probability("gates.p_echo", self.p_echo)?;
        for (k, &d) in self.readout.dephase_on_flip.iter().enumerate() {
            check_probability(&format!("readout.dephase_on_flip[{k}]"), d)?;
        }
        for (k, &t) in self.t2star_ms.iter().enumerate() {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::config(format!("t2star.spins_ms[{k}]"), format!("{t} is not > 0")));
            }
        }
        if !(self.segment_time_ms.is_finite() && self.segment_time_ms > 0.0) {
            return Err(Error::config(
                "t2star.segment_time_ms",
                format!("{} is not a finite time > 0", self.segment_time_ms),
            ));
        }
        for (name, arr) in [("phases.phi0", &self.phi0), ("phases.phi1", &self.phi1)] {
            if arr.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(name, "phases must be finite"));
            }
        }
        Ok(())
    }

    /// Parses config text; see the module docs for the format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.to_string().trim().to_string()))?;
        let mut doc = Doc { table, defaulted: Vec::new() };
        let params = doc.extract()?;
        for key in &doc.defaulted {
            info!("config: `{key}` not set, using default");
        }
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        let arr = |a: &[f64]| Value::Array(a.iter().map(|&x| Value::Float(x)).collect());
        let mut readout = Table::new();
        match self.readout.factors() {
            Some(f) => {
                readout.insert("q0".into(), Value::Float(f.q0));
                readout.insert("q1".into(), Value::Float(f.q1));
                readout.insert("f0".into(), Value::Float(f.f0));
                readout.insert("f1".into(), Value::Float(f.f1));
            }
            None => {
                let flat: Vec<f64> = self.readout.table().iter().flatten().flatten().copied().collect();
                readout.insert("table".into(), arr(&flat));
            }
        }
        readout.insert("init0".into(), Value::Float(self.init_fid[0]));
        readout.insert("init1".into(), Value::Float(self.init_fid[1]));
        readout.insert("dephase_on_flip".into(), arr(&self.readout.dephase_on_flip));

        let mut gates = Table::new();
        gates.insert("p_gate".into(), Value::Float(self.p_gate));
        gates.insert("p_echo".into(), Value::Float(self.p_echo));

        let mut t2 = Table::new();
        t2.insert("spins_ms".into(), arr(&self.t2star_ms));
        t2.insert("segment_time_ms".into(), Value::Float(self.segment_time_ms));

        let mut phases = Table::new();
        phases.insert("phi0".into(), arr(&self.phi0));
        phases.insert("phi1".into(), arr(&self.phi1));

        let mut root = Table::new();
        root.insert("readout".into(), Value::Table(readout));
        root.insert("gates".into(), Value::Table(gates));
        root.insert("t2star".into(), Value::Table(t2));
        root.insert("phases".into(), Value::Table(phases));
        toml::to_string(&root).expect("plain tables serialize")
    }
}

pub fn load_config(path: &Path) -> Result<NoiseParams> {
    let text = std::fs::read_to_string(path)?;
    NoiseParams::from_toml_str(&text)
}

pub fn save_config(params: &NoiseParams, path: &Path) -> Result<()> {
    std::fs::write(path, params.to_toml_string())?;
    Ok(())
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("readout", &["q0", "q1", "f0", "f1", "table", "init0", "init1", "dephase_on_flip"]),
    ("gates", &["p_gate", "p_echo"]),
    ("t2star", &["spins_ms", "segment_time_ms"]),
    ("phases", &["phi0", "phi1"]),
];

struct Doc {
    table: Table,
    defaulted: Vec<String>,
}

impl Doc {
    fn extract(&mut self) -> Result<NoiseParams> {
        for (name, value) in &self.table {
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
                return Err(Error::config(name.as_str(), "unknown section"));
            };
            let Value::Table(section) = value else {
                return Err(Error::config(name.as_str(), "expected a [section]"));
            };
            for key in section.keys() {
                if !keys.contains(&key.as_str()) {
                    return Err(Error::config(format!("{name}.{key}"), "unknown key"));
                }
            }
        }

        let dephase = self.array::<3>("readout", "dephase_on_flip", DEFAULT_DEPHASE_ON_FLIP)?;
        let readout = if self.get("readout", "table").is_some() {
            for k in ["q0", "q1", "f0", "f1"] {
                if self.get("readout", k).is_some() {
                    return Err(Error::config(
                        format!("readout.{k}"),
                        "cannot be combined with readout.table",
                    ));
                }
            }
            let flat = self.array::<8>("readout", "table", [0.0; 8])?;
            let mut t = [[[0.0; 2]; 2]; 2];
            for (i, v) in flat.into_iter().enumerate() {
                t[i / 4][(i / 2) % 2][i % 2] = v;
            }
            ReadoutModel::from_table(t, dephase)
                .map_err(|e| Error::config("readout.table", e.to_string()))?
        } else {
            let factors = ReadoutFactors {
                q0: self.float("readout", "q0", DEFAULT_Q[0])?,
                q1: self.float("readout", "q1", DEFAULT_Q[1])?,
                f0: self.float("readout", "f0", DEFAULT_F[0])?,
                f1: self.float("readout", "f1", DEFAULT_F[1])?,
            };
            ReadoutModel::factorized(factors, dephase)?
        };

        Ok(NoiseParams {
            readout,
            init_fid: [
                self.float("readout", "init0", DEFAULT_INIT[0])?,
                self.float("readout", "init1", DEFAULT_INIT[1])?,
            ],
            p_gate: self.float("gates", "p_gate", DEFAULT_P_GATE)?,
            p_echo: self.float("gates", "p_echo", DEFAULT_P_ECHO)?,
            t2star_ms: self.array::<3>("t2star", "spins_ms", DEFAULT_T2STAR_MS)?,
            segment_time_ms: self.float("t2star", "segment_time_ms", DEFAULT_SEGMENT_MS)?,
            phi0: self.array::<3>("phases", "phi0", DEFAULT_PHI0)?,
            phi1: self.array::<3>("phases", "phi1", DEFAULT_PHI1)?,
        })
    }

    fn get(&self, section: &str, key: &str) -> Option<&Value> {
        self.table.get(section)?.as_table()?.get(key)
    }

    fn float(&mut self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => {
                self.defaulted.push(format!("{section}.{key}"));
                Ok(default)
            }
            Some(v) => as_float(v).ok_or_else(|| Error::config(format!("{section}.{key}"), "expected a number")),
        }
    }

    fn array<const N: usize>(&mut self, section: &str, key: &str, default: [f64; N]) -> Result<[f64; N]> {
        let name = format!("{section}.{key}");
        match self.get(section, key) {
            None => {
                self.defaulted.push(name);
                Ok(default)
            }
            Some(Value::Array(items)) if items.len() == N => {
                let mut out = [0.0; N];
                for (slot, v) in out.iter_mut().zip(items) {
                    *slot = as_float(v).ok_or_else(|| Error::config(name.clone(), "expected numbers"))?;
                }
                Ok(out)
            }
            Some(_) => Err(Error::config(name, format!("expected an array of {N} numbers"))),
        }
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}
