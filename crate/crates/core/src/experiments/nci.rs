//! The eight-dimensional noncontextuality inequality
//! C = ⟨C₁⟩ + ⟨C₂⟩ + ⟨C₃⟩ + ⟨C₄⟩ − ⟨C₅⟩ ≤ 3.

use serde::{Deserialize, Serialize};

use super::{binary_standard_error, p_value, run_schedule, standard_error, BarRow, EngineConfig, ScheduleRun};
use crate::calibration::NoiseParams;
use crate::error::Result;
use crate::pauli::observables::contexts;
use crate::qmat::{maximally_mixed, DensityMatrix};
use crate::sequencer::{Engine, Mode};

pub const NCHV_BOUND: i32 = 3;

/// Names of the ten observables, in the order used by assignments.
pub const NCHV_OBSERVABLES: [&str; 10] = ["X1", "Y1", "X2", "Y2", "X3", "Y3", "P1", "P2", "P3", "P4"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NchvResult {
    pub bound: i32,
    /// A maximizing ±1 assignment, ordered as [`NCHV_OBSERVABLES`].
    pub assignment: [i8; 10],
}

/// Context products for a deterministic assignment, C₁…C₅.
pub fn classical_contexts(v: &[i8; 10]) -> [i32; 5] {
    let g = |i: usize| v[i] as i32;
    let (x1, y1, x2, y2, x3, y3) = (g(0), g(1), g(2), g(3), g(4), g(5));
    let (p1, p2, p3, p4) = (g(6), g(7), g(8), g(9));
    [
        x1 * y2 * y3 * p1,
        y1 * x2 * y3 * p2,
        y1 * y2 * x3 * p3,
        x1 * x2 * x3 * p4,
        p1 * p2 * p3 * p4,
    ]
}

pub fn classical_c(v: &[i8; 10]) -> i32 {
    let c = classical_contexts(v);
    c[0] + c[1] + c[2] + c[3] - c[4]
}

/// Maximum of C over all 2¹⁰ deterministic assignments.
pub fn nchv_bound() -> NchvResult {
    let mut best: Option<NchvResult> = None;
    for bits in 0..1u32 << 10 {
        let assignment: [i8; 10] = std::array::from_fn(|k| if bits >> k & 1 == 0 { 1 } else { -1 });
        let c = classical_c(&assignment);
        if best.as_ref().is_none_or(|b| c > b.bound) {
            best = Some(NchvResult { bound: c, assignment });
        }
    }
    best.expect("nonempty enumeration")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextResult {
    pub id: String,
    /// Observables in measurement order.
    pub observables: Vec<String>,
    pub mean: f64,
    pub standard_error: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NciReport {
    pub engine: Engine,
    pub mode: Mode,
    pub contexts: Vec<ContextResult>,
    pub c_value: f64,
    pub standard_error: Option<f64>,
    /// Composite rounds behind the p-value.
    pub rounds: Option<usize>,
    pub p_value: Option<f64>,
}

impl NciReport {
    pub fn bars(&self) -> Vec<BarRow> {
        let mut rows: Vec<BarRow> = self
            .contexts
            .iter()
            .map(|c| BarRow {
                label: c.id.clone(),
                value: c.mean,
                standard_error: c.standard_error,
            })
            .collect();
        rows.push(BarRow {
            label: "C".into(),
            value: self.c_value,
            standard_error: self.standard_error,
        });
        rows
    }
}

/// Runs the five contexts, each on a fresh maximally mixed state, with the
/// phase-echoed sequencer.
pub fn run_nci(params: &NoiseParams, cfg: &EngineConfig) -> Result<NciReport> {
    run_nci_on(params, cfg, &maximally_mixed(3)?)
}

pub fn run_nci_on(params: &NoiseParams, cfg: &EngineConfig, rho: &DensityMatrix) -> Result<NciReport> {
    let mode = Mode::Echoed;
    let mut results = Vec::with_capacity(5);
    // Per-round values, for the composite-round statistics.
    let mut rounds: Vec<Vec<f64>> = Vec::new();
    for (i, ctx) in contexts().into_iter().enumerate() {
        // The parity first, then the single-spin observables; C₅ in order.
        let steps = if i < 4 {
            let mut s = vec![ctx[3].clone()];
            s.extend_from_slice(&ctx[..3]);
            s
        } else {
            ctx
        };
        let names = steps.iter().map(ToString::to_string).collect();
        let (mean, se, samples) = match run_schedule(steps, mode, params, rho, cfg, i as u64)? {
            ScheduleRun::Exact(records) => {
                let mean: f64 = records.iter().map(|r| r.probability * r.label_product() as f64).sum();
                (mean, cfg.trials.map(|n| binary_standard_error(mean, n)), None)
            }
            ScheduleRun::Sampled(histories) => {
                let values: Vec<f64> = histories.iter().map(|h| h.iter().map(|&l| l as f64).product()).collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let se = standard_error(&values)?;
                let n = values.len();
                rounds.push(values);
                (mean, Some(se), Some(n))
            }
        };
        results.push(ContextResult {
            id: format!("C{}", i + 1),
            observables: names,
            mean,
            standard_error: se,
            samples,
        });
    }

    let c_value = results[..4].iter().map(|c| c.mean).sum::<f64>() - results[4].mean;
    let (standard_error, n_rounds) = match cfg.engine {
        Engine::Exact => (
            cfg.trials.map(|_| results.iter().map(|c| c.standard_error.unwrap().powi(2)).sum::<f64>().sqrt()),
            cfg.trials,
        ),
        Engine::Sampled => {
            let n = rounds[0].len();
            let composite: Vec<f64> = (0..n)
                .map(|r| rounds[..4].iter().map(|v| v[r]).sum::<f64>() - rounds[4][r])
                .collect();
            (Some(standard_error(&composite)?), Some(n))
        }
    };
    Ok(NciReport {
        engine: cfg.engine,
        mode,
        contexts: results,
        c_value,
        standard_error,
        rounds: n_rounds,
        p_value: n_rounds.map(|n| p_value(c_value, n)),
    })
}
