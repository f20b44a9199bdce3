//! Repeated ancilla readouts under a two-state hidden Markov model.
//!
//! The hidden state is the ancilla level. Each round, from state `s`, the
//! readout emits `a` and leaves the ancilla in `s′` with probability
//! `table[s][a][s′]`; nothing else happens between rounds.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::NoiseParams;
use crate::error::{Error, Result};
use crate::instrument::ReadoutModel;

pub const ROUNDS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prepared {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "mixed")]
    Mixed,
}

impl Prepared {
    const ALL: [Prepared; 3] = [Prepared::Zero, Prepared::One, Prepared::Mixed];

    fn index(self) -> usize {
        self as usize
    }

    /// Distribution of the hidden state before the first readout.
    pub fn initial(self, init_fid: [f64; 2]) -> [f64; 2] {
        match self {
            Prepared::Zero => [init_fid[0], 1.0 - init_fid[0]],
            Prepared::One => [1.0 - init_fid[1], init_fid[1]],
            Prepared::Mixed => [0.5, 0.5],
        }
    }
}

impl std::str::FromStr for Prepared {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(Prepared::Zero),
            "1" => Ok(Prepared::One),
            "mixed" => Ok(Prepared::Mixed),
            other => Err(Error::config("prepared", format!("expected 0, 1 or mixed, got {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub r1: u8,
    pub r2: u8,
    pub r3: u8,
    pub prepared: Prepared,
}

impl Trial {
    pub fn outcomes(&self) -> [u8; ROUNDS] {
        [self.r1, self.r2, self.r3]
    }

    fn pattern(&self) -> usize {
        (self.r1 as usize) << 2 | (self.r2 as usize) << 1 | self.r3 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutRecords {
    trials: Vec<Trial>,
}

impl ReadoutRecords {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if let Some(t) = trials.iter().find(|t| t.outcomes().iter().any(|&r| r > 1)) {
            return Err(Error::InvalidReadout(format!("non-binary readout {:?}", t.outcomes())));
        }
        Ok(Self { trials })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn extend(&mut self, other: &ReadoutRecords) {
        self.trials.extend_from_slice(&other.trials);
    }

    /// Trial counts indexed by [prepared][r1 r2 r3 as a 3-bit number].
    pub fn counts(&self) -> [[u64; 8]; 3] {
        let mut c = [[0; 8]; 3];
        for t in &self.trials {
            c[t.prepared.index()][t.pattern()] += 1;
        }
        c
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for t in &self.trials {
            wtr.serialize(t).map_err(csv_error)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let trials = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<Trial>, _>>()
            .map_err(csv_error)?;
        Self::new(trials)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::config("records", e.to_string())
}

/// Draws `n_trials` runs of three repeated readouts.
pub fn simulate_repeated_readout(
    params: &NoiseParams,
    n_trials: usize,
    prepared: Prepared,
    seed: u64,
) -> Result<ReadoutRecords> {
    params.validate()?;
    if n_trials == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let table = params.readout.table();
    let init = prepared.initial(params.init_fid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials = (0..n_trials)
        .map(|_| {
            let mut s = usize::from(rng.gen::<f64>() >= init[0]);
            let mut r = [0u8; ROUNDS];
            for slot in &mut r {
                let row = &table[s];
                let u: f64 = rng.gen();
                let (a, sp) = pick(row, u);
                *slot = a as u8;
                s = sp;
            }
            Trial {
                r1: r[0],
                r2: r[1],
                r3: r[2],
                prepared,
            }
        })
        .collect();
    ReadoutRecords::new(trials)
}

fn pick(row: &[[f64; 2]; 2], u: f64) -> (usize, usize) {
    let mut acc = 0.0;
    let mut last = (0, 0);
    for a in 0..2 {
        for sp in 0..2 {
            if row[a][sp] > 0.0 {
                last = (a, sp);
                acc += row[a][sp];
                if u < acc {
                    return (a, sp);
                }
            }
        }
    }
    last
}

/// Probability of one outcome pattern by the forward recursion.
pub fn pattern_probability(model: &ReadoutModel, initial: [f64; 2], outcomes: &[u8]) -> f64 {
    let t = model.table();
    let mut alpha = initial;
    for &a in outcomes {
        let a = a as usize;
        alpha = [
            alpha[0] * t[0][a][0] + alpha[1] * t[1][a][0],
            alpha[0] * t[0][a][1] + alpha[1] * t[1][a][1],
        ];
    }
    alpha[0] + alpha[1]
}

/// Exact log-likelihood of the records. Returns `f64::NEG_INFINITY` if any
/// recorded pattern has probability zero under the candidate.
pub fn log_likelihood(records: &ReadoutRecords, model: &ReadoutModel, init_fid: [f64; 2]) -> f64 {
    log_likelihood_counts(&records.counts(), model, init_fid)
}

pub(crate) fn log_likelihood_counts(counts: &[[u64; 8]; 3], model: &ReadoutModel, init_fid: [f64; 2]) -> f64 {
    let mut ll = 0.0;
    for prep in Prepared::ALL {
        let initial = prep.initial(init_fid);
        for (pattern, &n) in counts[prep.index()].iter().enumerate() {
            if n == 0 {
                continue;
            }
            let outcomes = [(pattern >> 2) as u8 & 1, (pattern >> 1) as u8 & 1, pattern as u8 & 1];
            let p = pattern_probability(model, initial, &outcomes);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += n as f64 * p.ln();
        }
    }
    ll
}
