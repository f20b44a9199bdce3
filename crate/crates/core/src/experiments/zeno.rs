//! Dephasing of a GHZ state with and without interleaved parity
//! measurements.
//!
//! Each stretch of free evolution between measurements is one T₂* window:
//! coherences decay by exp(−(t/T₂*)²) within a window, and a projective
//! measurement starts the next window afresh. With no measurements the
//! whole time is a single window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ghz_target, standard_error, stream_seed, EngineConfig};
use crate::calibration::NoiseParams;
use crate::error::{Error, Result};
use crate::instrument::{ideal_parity_instrument, sample_with, t2star_strength, Channel, Instrument};
use crate::instrument::dephasing_channel;
use crate::pauli::observables::{p1, p2, p3};
use crate::qmat::{fidelity, DensityMatrix, StateVector};
use crate::sequencer::{trajectory_seed, Engine};

pub const DEFAULT_ZENO_TIME_MS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZenoReport {
    pub measurements: usize,
    pub total_time_ms: f64,
    pub engine: Engine,
    pub fidelity_measured: f64,
    pub fidelity_measured_se: Option<f64>,
    pub fidelity_unmeasured: f64,
    pub fidelity_unmeasured_se: Option<f64>,
}

/// Per-spin dephasing for one window of `t_ms`.
struct Window(Vec<Channel>);

impl Window {
    fn new(params: &NoiseParams, t_ms: f64) -> Result<Self> {
        (0..3)
            .map(|k| dephasing_channel(3, k, t2star_strength(t_ms, params.t2star_ms[k])))
            .collect::<Result<_>>()
            .map(Window)
    }

    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.0.iter().try_fold(rho.clone(), |r, ch| ch.apply(&r))
    }
}

/// Fidelity with the (+,+,+) target after `m` measurements spread evenly
/// over `total_time_ms`, against the same time without measurements.
pub fn run_zeno_study(params: &NoiseParams, m: usize, total_time_ms: f64, cfg: &EngineConfig) -> Result<ZenoReport> {
    params.validate()?;
    if !(total_time_ms > 0.0) || !total_time_ms.is_finite() {
        return Err(Error::config("total_time_ms", format!("{total_time_ms} is not > 0")));
    }
    let target = ghz_target([1, 1, 1]);
    let rho0 = target.to_density();
    let free = Window::new(params, total_time_ms)?;
    let short = Window::new(params, total_time_ms / (m + 1) as f64)?;
    let schedule: Vec<Instrument> = (0..m)
        .map(|i| ideal_parity_instrument(&[p1(), p2(), p3()][i % 3]))
        .collect::<Result<_>>()?;

    match cfg.engine {
        Engine::Exact => {
            let unmeasured = fidelity(&target, &free.apply(&rho0)?)?;
            let mut rho = short.apply(&rho0)?;
            for inst in &schedule {
                rho = inst.channel().apply(&rho)?;
                rho = short.apply(&rho)?;
            }
            Ok(ZenoReport {
                measurements: m,
                total_time_ms,
                engine: Engine::Exact,
                fidelity_measured: fidelity(&target, &rho)?,
                fidelity_measured_se: None,
                fidelity_unmeasured: unmeasured,
                fidelity_unmeasured_se: None,
            })
        }
        Engine::Sampled => {
            let n = cfg.sample_count()?;
            let measured = sample_survival(&target, &rho0, &short, &schedule, n, stream_seed(cfg.seed, 0))?;
            let unmeasured = sample_survival(&target, &rho0, &free, &[], n, stream_seed(cfg.seed, 1))?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Ok(ZenoReport {
                measurements: m,
                total_time_ms,
                engine: Engine::Sampled,
                fidelity_measured: mean(&measured),
                fidelity_measured_se: Some(standard_error(&measured)?),
                fidelity_unmeasured: mean(&unmeasured),
                fidelity_unmeasured_se: Some(standard_error(&unmeasured)?),
            })
        }
    }
}

/// Per-trial 0/1 outcomes of a final projective test for the target, after
/// sampled measurement trajectories.
fn sample_survival(
    target: &StateVector,
    rho0: &DensityMatrix,
    window: &Window,
    schedule: &[Instrument],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i));
            let mut rho = window.apply(rho0)?;
            for inst in schedule {
                let rec = sample_with(&rho, inst, &mut rng)?;
                rho = rec.post_state.ok_or_else(|| Error::Numerical("sampled a zero-probability branch".into()))?;
                rho = window.apply(&rho)?;
            }
            let f = fidelity(target, &rho)?;
            Ok(if rng.gen::<f64>() < f { 1.0 } else { 0.0 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measured_t2() -> NoiseParams {
        NoiseParams {
            t2star_ms: [9.9, 11.2, 17.3],
            ..NoiseParams::ideal()
        }
    }

    #[test]
    fn no_measurements_means_no_difference() {
        let r = run_zeno_study(&measured_t2(), 0, 10.0, &EngineConfig::exact()).unwrap();
        assert!((r.fidelity_measured - r.fidelity_unmeasured).abs() < 1e-12);
    }

    #[test]
    fn measurements_slow_the_decay() {
        // Oracle: the GHZ coherence decays by the product of the per-spin
        // factors, window by window, and the measurements leave the
        // resulting mixture of GHZ states untouched.
        let p = measured_t2();
        let oracle = |m: usize| {
            let t = 10.0 / (m + 1) as f64;
            let c: f64 = p.t2star_ms.iter().map(|t2| (-(t / t2).powi(2)).exp()).product();
            0.5 * (1.0 + c.powi(m as i32 + 1))
        };
        let mut last = 0.0;
        for m in [1, 2, 4, 8] {
            let r = run_zeno_study(&p, m, 10.0, &EngineConfig::exact()).unwrap();
            assert!((r.fidelity_measured - oracle(m)).abs() < 1e-12);
            assert!((r.fidelity_unmeasured - oracle(0)).abs() < 1e-12);
            assert!(r.fidelity_measured > r.fidelity_unmeasured);
            assert!(r.fidelity_measured >= last);
            last = r.fidelity_measured;
        }
    }

    #[test]
    fn sampled_study_tracks_exact() {
        let p = measured_t2();
        let e = run_zeno_study(&p, 2, 10.0, &EngineConfig::exact()).unwrap();
        let s = run_zeno_study(&p, 2, 10.0, &EngineConfig::sampled(20_000, 4)).unwrap();
        assert!((s.fidelity_measured - e.fidelity_measured).abs() < 5.0 * s.fidelity_measured_se.unwrap());
        assert!((s.fidelity_unmeasured - e.fidelity_unmeasured).abs() < 5.0 * s.fidelity_unmeasured_se.unwrap());
    }
}
