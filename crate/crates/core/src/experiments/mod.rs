//! The simulated experiments, the classical bound, and the statistics
//! used to report them.

mod ghz;
mod nci;
mod zeno;

pub use ghz::*;
pub use nci::*;
pub use zeno::*;

use serde::{Deserialize, Serialize};

use crate::calibration::NoiseParams;
use crate::error::{Error, Result};
use crate::instrument::{PhaseHandling, Segment};
use crate::instrument::segment_instrument;
use crate::pauli::PauliString;
use crate::qmat::{ComplexMatrix, DensityMatrix, C64};
use crate::sequencer::{compile, Engine, Executor, Mode, PhaseTracker, Schedule};

/// How an experiment is evaluated. For the exact engine `trials`, when set,
/// is the sample size used to project standard errors and p-values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub engine: Engine,
    pub trials: Option<usize>,
    pub seed: u64,
}

impl EngineConfig {
    pub fn exact() -> Self {
        Self {
            engine: Engine::Exact,
            trials: None,
            seed: 0,
        }
    }

    pub fn sampled(trials: usize, seed: u64) -> Self {
        Self {
            engine: Engine::Sampled,
            trials: Some(trials),
            seed,
        }
    }

    fn sample_count(&self) -> Result<usize> {
        match self.trials {
            Some(n) if n >= 2 => Ok(n),
            other => Err(Error::TooFewSamples {
                needed: 2,
                got: other.unwrap_or(0),
            }),
        }
    }
}

/// Master seed for one of several independent streams of an experiment.
pub(crate) fn stream_seed(master: u64, stream: u64) -> u64 {
    crate::sequencer::trajectory_seed(master ^ 0xA5A5_5A5A_C3C3_3C3C, stream)
}

/// Sample standard deviation over √n.
pub fn standard_error(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((var / n as f64).sqrt())
}

/// Standard error of the mean of `n` ±1 samples with expectation `mean`,
/// with the same Bessel correction as [`standard_error`].
pub fn binary_standard_error(mean: f64, n: usize) -> f64 {
    if n < 2 {
        return f64::NAN;
    }
    let nf = n as f64;
    ((1.0 - mean * mean).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
}

/// Hoeffding bound on the probability that a noncontextual model yields a
/// composite-round mean of at least `mean_c` over `n_rounds` rounds. Each
/// round lies in [−5, 5].
pub fn p_value(mean_c: f64, n_rounds: usize) -> f64 {
    if mean_c <= NCHV_BOUND as f64 {
        return 1.0;
    }
    let gap = mean_c - NCHV_BOUND as f64;
    (-2.0 * n_rounds as f64 * gap * gap / 100.0).exp()
}

/// Probability that one noisy measurement of `observable` leaves a state
/// spread uniformly over its `sign` eigenspace inside that eigenspace.
/// Phases are tracked per outcome.
pub fn parity_preservation(params: &NoiseParams, observable: &PauliString, sign: i8) -> Result<f64> {
    let proj = observable.projectors()?.for_outcome(sign).clone();
    let rank = proj.trace().re;
    let rho = DensityMatrix::from_trusted(proj.scale(C64::new(1.0 / rank, 0.0)));
    let phases = PhaseHandling::Branched {
        corrections: [params.phi0, params.phi1],
    };
    let inst = segment_instrument(&Segment::new(observable, params, phases)?)?;
    let out: ComplexMatrix = inst.channel().apply(&rho)?.into_matrix();
    Ok(proj.matmul(&out)?.trace().re)
}

/// Outcome strings and, for the exact engine, their probabilities and
/// post-states.
pub(crate) enum ScheduleRun {
    Exact(Vec<crate::instrument::OutcomeRecord>),
    Sampled(Vec<Vec<i8>>),
}

pub(crate) fn run_schedule(
    steps: Vec<PauliString>,
    mode: Mode,
    params: &NoiseParams,
    rho: &DensityMatrix,
    cfg: &EngineConfig,
    stream: u64,
) -> Result<ScheduleRun> {
    let seq = compile(&Schedule::new(steps, mode)?, &PhaseTracker::from_noise(params))?;
    let ex = Executor::new(&seq, params)?;
    match cfg.engine {
        Engine::Exact => Ok(ScheduleRun::Exact(ex.exact(rho)?)),
        Engine::Sampled => Ok(ScheduleRun::Sampled(ex.sample_batch(
            rho,
            cfg.sample_count()?,
            stream_seed(cfg.seed, stream),
        )?)),
    }
}

pub(crate) fn outcome_label(labels: &[i8]) -> String {
    labels.iter().map(|&l| if l > 0 { '+' } else { '-' }).collect()
}

/// One row of figure data: outcome label, value, standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarRow {
    pub label: String,
    pub value: f64,
    pub standard_error: Option<f64>,
}
