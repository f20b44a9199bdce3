//! Compilation of parity-measurement schedules into control sequences.
//!
//! Conditional nuclear phases accrue during each readout and depend on the
//! electron state. The phase-branched strategy undoes φ₀ or φ₁ depending on
//! the outcome, so the program is a binary tree with 2^m leaves. The
//! phase-echoed strategy flips the electron halfway through, so φ₀ + φ₁
//! accrues whatever the outcome and the program is a list of m segments.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::NoiseParams;
use crate::error::{Error, Result};
use crate::instrument::{
    apply_instrument, label_of_bit, sample_with, segment_instrument, Instrument, OutcomeRecord, PhaseHandling,
    Segment,
};
use crate::pauli::PauliString;
use crate::qmat::DensityMatrix;

pub const MAX_STEPS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Branched,
    Echoed,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Branched => "branched",
            Mode::Echoed => "echoed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    steps: Vec<PauliString>,
    mode: Mode,
}

impl Schedule {
    pub fn new(steps: Vec<PauliString>, mode: Mode) -> Result<Self> {
        if steps.is_empty() || steps.len() > MAX_STEPS {
            return Err(Error::ScheduleLength(steps.len()));
        }
        for s in &steps {
            if s.n_qubits() != 3 {
                return Err(Error::RegisterMismatch {
                    left: s.n_qubits(),
                    right: 3,
                });
            }
            s.projectors()?;
        }
        Ok(Self { steps, mode })
    }

    pub fn steps(&self) -> &[PauliString] {
        &self.steps
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Per-spin conditional phases for one readout window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTracker {
    pub phi0: [f64; 3],
    pub phi1: [f64; 3],
}

impl PhaseTracker {
    pub fn from_noise(noise: &NoiseParams) -> Self {
        Self {
            phi0: noise.phi0,
            phi1: noise.phi1,
        }
    }

    /// Phase accrued with the electron in assigned state `bit`.
    pub fn accrued(&self, bit: usize) -> [f64; 3] {
        if bit == 0 {
            self.phi0
        } else {
            self.phi1
        }
    }
}

/// Reduces an angle to [0, 2π).
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A phase-correction gate Rz(−radians) on one spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCorrection {
    pub spin: usize,
    pub radians: f64,
}

/// Merges adjacent corrections on the same spin and drops null ones.
fn merge_corrections(gates: &[PhaseCorrection]) -> Vec<PhaseCorrection> {
    let mut out: Vec<PhaseCorrection> = Vec::new();
    for g in gates {
        match out.last_mut() {
            Some(last) if last.spin == g.spin => last.radians += g.radians,
            _ => out.push(*g),
        }
    }
    for g in &mut out {
        g.radians = wrap_angle(g.radians);
    }
    out.retain(|g| g.radians != 0.0);
    out
}

fn correction_array(gates: &[PhaseCorrection]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for g in gates {
        out[g.spin] = wrap_angle(out[g.spin] + g.radians);
    }
    out
}

/// One segment of an echoed program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoedSegment {
    pub observable: PauliString,
    pub echo: bool,
    pub corrections: Vec<PhaseCorrection>,
}

/// A node of a phase-branched program. The root has an empty history;
/// every other node holds the corrections for the last outcome on its path
/// and, unless it is a leaf, the next observable to measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchNode {
    pub history: Vec<i8>,
    pub corrections: Vec<PhaseCorrection>,
    pub measure: Option<PauliString>,
    pub children: Vec<BranchNode>,
}

impl BranchNode {
    fn leaf_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(BranchNode::leaf_count).sum()
        }
    }

    fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    fn child(&self, label: i8) -> Option<&BranchNode> {
        self.children.iter().find(|c| c.history.last() == Some(&label))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ControlSequence {
    Branched { root: BranchNode },
    Echoed { segments: Vec<EchoedSegment> },
}

impl ControlSequence {
    pub fn mode(&self) -> Mode {
        match self {
            ControlSequence::Branched { .. } => Mode::Branched,
            ControlSequence::Echoed { .. } => Mode::Echoed,
        }
    }

    /// JSON dump of the compiled program.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

pub fn compile(schedule: &Schedule, phases: &PhaseTracker) -> Result<ControlSequence> {
    match schedule.mode {
        Mode::Branched => Ok(ControlSequence::Branched {
            root: branch_node(&schedule.steps, Vec::new(), Vec::new(), phases),
        }),
        Mode::Echoed => {
            let segments = schedule
                .steps
                .iter()
                .map(|obs| {
                    // Undo the window before the echo and the window after.
                    let raw: Vec<PhaseCorrection> = (0..3)
                        .flat_map(|spin| {
                            [
                                PhaseCorrection {
                                    spin,
                                    radians: phases.phi0[spin],
                                },
                                PhaseCorrection {
                                    spin,
                                    radians: phases.phi1[spin],
                                },
                            ]
                        })
                        .collect();
                    EchoedSegment {
                        observable: obs.clone(),
                        echo: true,
                        corrections: merge_corrections(&raw),
                    }
                })
                .collect();
            Ok(ControlSequence::Echoed { segments })
        }
    }
}

fn branch_node(
    remaining: &[PauliString],
    history: Vec<i8>,
    corrections: Vec<PhaseCorrection>,
    phases: &PhaseTracker,
) -> BranchNode {
    let Some((next, rest)) = remaining.split_first() else {
        return BranchNode {
            history,
            corrections,
            measure: None,
            children: Vec::new(),
        };
    };
    let children = (0..2)
        .map(|bit| {
            let mut h = history.clone();
            h.push(label_of_bit(bit));
            let acc = phases.accrued(bit);
            let raw: Vec<PhaseCorrection> = (0..3)
                .map(|spin| PhaseCorrection {
                    spin,
                    radians: acc[spin],
                })
                .collect();
            branch_node(rest, h, merge_corrections(&raw), phases)
        })
        .collect();
    BranchNode {
        history,
        corrections,
        measure: Some(next.clone()),
        children,
    }
}

/// (number of distinct control branches, number of readout segments).
pub fn count_branches(seq: &ControlSequence) -> (usize, usize) {
    match seq {
        ControlSequence::Branched { root } => (root.leaf_count(), root.depth()),
        ControlSequence::Echoed { segments } => (1, segments.len()),
    }
}

/// Master-seed → per-trajectory seed (SplitMix64 of the counter).
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Executes a compiled program, building each segment's instrument once.
pub struct Executor<'a> {
    seq: &'a ControlSequence,
    noise: &'a NoiseParams,
    instruments: Mutex<HashMap<String, Arc<Instrument>>>,
}

impl<'a> Executor<'a> {
    pub fn new(seq: &'a ControlSequence, noise: &'a NoiseParams) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            seq,
            noise,
            instruments: Mutex::new(HashMap::new()),
        })
    }

    fn build(&self, observable: &PauliString, phases: PhaseHandling) -> Result<Arc<Instrument>> {
        let key = format!("{observable}|{phases:?}");
        if let Some(inst) = self.instruments.lock().expect("poisoned").get(&key) {
            return Ok(inst.clone());
        }
        let inst = Arc::new(segment_instrument(&Segment::new(observable, self.noise, phases)?)?);
        self.instruments.lock().expect("poisoned").insert(key, inst.clone());
        Ok(inst)
    }

    /// Instrument for the readout following `history`, or `None` once the
    /// program is exhausted.
    fn instrument_at(&self, history: &[i8]) -> Result<Option<Arc<Instrument>>> {
        match self.seq {
            ControlSequence::Echoed { segments } => {
                let Some(seg) = segments.get(history.len()) else {
                    return Ok(None);
                };
                let phases = PhaseHandling::Echoed {
                    correction: correction_array(&seg.corrections),
                };
                self.build(&seg.observable, phases).map(Some)
            }
            ControlSequence::Branched { root } => {
                let mut node = root;
                for &label in history {
                    node = node
                        .child(label)
                        .ok_or_else(|| Error::Numerical(format!("no branch for history {history:?}")))?;
                }
                let Some(obs) = &node.measure else {
                    return Ok(None);
                };
                let plus = node.child(1).expect("internal node has two children");
                let minus = node.child(-1).expect("internal node has two children");
                let phases = PhaseHandling::Branched {
                    corrections: [correction_array(&plus.corrections), correction_array(&minus.corrections)],
                };
                self.build(obs, phases).map(Some)
            }
        }
    }

    /// All 2^m outcome strings with probabilities and post-states.
    pub fn exact(&self, rho: &DensityMatrix) -> Result<Vec<OutcomeRecord>> {
        let mut frontier = vec![OutcomeRecord {
            labels: Vec::new(),
            probability: 1.0,
            post_state: Some(rho.clone()),
        }];
        loop {
            let Some(first) = frontier.first() else { break };
            if self.instrument_at(&first.labels)?.is_none() {
                break;
            }
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for rec in frontier {
                let inst = self.instrument_at(&rec.labels)?.expect("uniform depth");
                match &rec.post_state {
                    Some(state) => {
                        for child in apply_instrument(state, &inst)? {
                            let mut labels = rec.labels.clone();
                            labels.extend(&child.labels);
                            next.push(OutcomeRecord {
                                labels,
                                probability: rec.probability * child.probability,
                                post_state: child.post_state,
                            });
                        }
                    }
                    None => {
                        for b in inst.branches() {
                            let mut labels = rec.labels.clone();
                            labels.push(b.label());
                            next.push(OutcomeRecord {
                                labels,
                                probability: 0.0,
                                post_state: None,
                            });
                        }
                    }
                }
            }
            frontier = next;
        }
        let total: f64 = frontier.iter().map(|r| r.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Numerical(format!("outcome probabilities sum to {total}")));
        }
        Ok(frontier)
    }

    /// One sampled trajectory; `probability` is the probability of the
    /// sampled outcome string.
    pub fn sample(&self, rho: &DensityMatrix, seed: u64) -> Result<OutcomeRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = rho.clone();
        let mut labels = Vec::new();
        let mut probability = 1.0;
        while let Some(inst) = self.instrument_at(&labels)? {
            let rec = sample_with(&state, &inst, &mut rng)?;
            labels.extend(&rec.labels);
            probability *= rec.probability;
            match rec.post_state {
                Some(s) => state = s,
                None => return Err(Error::Numerical("sampled a zero-probability branch".into())),
            }
        }
        Ok(OutcomeRecord {
            labels,
            probability,
            post_state: Some(state),
        })
    }

    /// Outcome strings of `n` independent trajectories; trajectory `i` uses
    /// seed `trajectory_seed(seed, i)`, so the result does not depend on the
    /// thread count. Conditional states are cached by outcome history.
    pub fn sample_batch(&self, rho: &DensityMatrix, n: usize, seed: u64) -> Result<Vec<Vec<i8>>> {
        let states: Mutex<HashMap<Vec<i8>, Arc<DensityMatrix>>> = Mutex::new(HashMap::new());
        states.lock().expect("poisoned").insert(Vec::new(), Arc::new(rho.clone()));
        let conditional = |history: &[i8]| -> Result<Arc<DensityMatrix>> {
            if let Some(s) = states.lock().expect("poisoned").get(history) {
                return Ok(s.clone());
            }
            // Parents are always cached before children.
            let (last, prefix) = history.split_last().expect("root is cached");
            let parent = states.lock().expect("poisoned").get(prefix).cloned().expect("parent cached");
            let inst = self.instrument_at(prefix)?.expect("prefix is internal");
            let branch = inst.branch(*last).expect("label exists");
            let out = branch.apply_unnormalized(parent.matrix());
            let p = out.trace().re;
            let s = Arc::new(DensityMatrix::from_trusted(out.scale(crate::qmat::C64::new(1.0 / p, 0.0))));
            states.lock().expect("poisoned").insert(history.to_vec(), s.clone());
            Ok(s)
        };

        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i));
                let mut labels: Vec<i8> = Vec::new();
                while let Some(inst) = self.instrument_at(&labels)? {
                    let state = conditional(&labels)?;
                    let probs: Vec<f64> = inst.branches().iter().map(|b| b.probability(&state).max(0.0)).collect();
                    let u: f64 = rand::Rng::gen::<f64>(&mut rng) * probs.iter().sum::<f64>();
                    let mut acc = 0.0;
                    let mut pick = inst.branches().len() - 1;
                    for (k, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    labels.push(inst.branches()[pick].label());
                }
                Ok(labels)
            })
            .collect()
    }
}

/// Runs a compiled program on `rho`: every outcome string for the exact
/// engine, one trajectory for the sampled engine.
pub fn execute(
    seq: &ControlSequence,
    rho: &DensityMatrix,
    noise: &NoiseParams,
    engine: Engine,
    seed: u64,
) -> Result<Vec<OutcomeRecord>> {
    if rho.n_qubits() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 8,
            found: rho.dim(),
        });
    }
    let ex = Executor::new(seq, noise)?;
    match engine {
        Engine::Exact => ex.exact(rho),
        Engine::Sampled => Ok(vec![ex.sample(rho, seed)?]),
    }
}
