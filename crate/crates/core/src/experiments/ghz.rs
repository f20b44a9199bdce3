//! GHZ-state generation by three parity measurements, and the single-shot
//! version that adds the fourth parity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binary_standard_error, outcome_label, run_schedule, standard_error, stream_seed, BarRow, EngineConfig, ScheduleRun};
use crate::calibration::NoiseParams;
use crate::error::{Error, Result};
use crate::pauli::observables::{p1, p2, p3, parities};
use crate::pauli::PauliString;
use crate::qmat::{fidelity, maximally_mixed, ComplexMatrix, DensityMatrix, StateVector, C64};
use crate::sequencer::{Engine, Mode};

/// The joint eigenstate of p₁, p₂, p₃ with the given eigenvalues, with its
/// first nonzero amplitude real and positive.
pub fn ghz_target(outcomes: [i8; 3]) -> StateVector {
    let mut proj = ComplexMatrix::identity(8);
    for (obs, &o) in [p1(), p2(), p3()].iter().zip(&outcomes) {
        let pair = obs.projectors().expect("parities are measurable");
        proj = proj.matmul(pair.for_outcome(o)).expect("8x8");
    }
    let j = (0..8).find(|&j| proj[(j, j)].re > 1e-12).expect("rank one");
    let norm = proj[(j, j)].re.sqrt();
    let amps: Vec<C64> = proj.column(j).iter().map(|z| z / norm).collect();
    StateVector::new(amps).expect("unit norm")
}

/// The eight sign patterns in enumeration order, (+,+,+) first.
pub fn outcome_triples() -> Vec<[i8; 3]> {
    (0..8)
        .map(|b| std::array::from_fn(|k| if (b >> (2 - k)) & 1 == 0 { 1 } else { -1 }))
        .collect()
}

/// The seven non-identity elements of the target's stabilizer group,
/// signed so that each has eigenvalue +1 on the target.
pub fn ghz_stabilizers(outcomes: [i8; 3]) -> Vec<PauliString> {
    let gens: Vec<PauliString> = [p1(), p2(), p3()]
        .into_iter()
        .zip(outcomes)
        .map(|(p, o)| if o > 0 { p } else { p.negate() })
        .collect();
    (1..8usize)
        .map(|mask| {
            let picked: Vec<PauliString> = (0..3).filter(|k| mask >> k & 1 == 1).map(|k| gens[k].clone()).collect();
            crate::pauli::product(&picked).expect("same register")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhzBranch {
    pub outcome: String,
    pub probability: f64,
    pub probability_se: Option<f64>,
    /// Fidelity with the readout error of the final analysis removed.
    pub fidelity: f64,
    pub fidelity_se: Option<f64>,
    /// Fidelity as seen through the noisy final electron readout.
    pub raw_fidelity: f64,
    pub raw_fidelity_se: Option<f64>,
    pub post_state: Option<ComplexMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhzReport {
    pub mode: Mode,
    pub engine: Engine,
    pub trials: Option<usize>,
    pub branches: Vec<GhzBranch>,
    /// Unweighted mean over the eight branches.
    pub average_fidelity: f64,
    pub average_fidelity_se: Option<f64>,
    pub average_raw_fidelity: f64,
    pub best_branch: String,
}

impl GhzReport {
    pub fn bars(&self) -> Vec<BarRow> {
        self.branches
            .iter()
            .map(|b| BarRow {
                label: b.outcome.clone(),
                value: b.fidelity,
                standard_error: b.fidelity_se,
            })
            .collect()
    }
}

/// Assignment fidelities of the final readout, and the denominator of the
/// correction that undoes them.
fn final_readout(params: &NoiseParams) -> Result<(f64, f64, f64)> {
    let f0 = params.readout.assignment_fidelity(0);
    let f1 = params.readout.assignment_fidelity(1);
    let contrast = f0 + f1 - 1.0;
    if contrast <= 1e-9 {
        return Err(Error::InvalidReadout(format!(
            "assignment fidelities {f0} and {f1} leave no contrast to correct"
        )));
    }
    Ok((f0, f1, contrast))
}

/// Exact (corrected, raw) fidelities of `rho` with the branch target.
fn exact_fidelities(rho: &DensityMatrix, outcomes: [i8; 3], params: &NoiseParams) -> Result<(f64, f64)> {
    let (f0, f1, contrast) = final_readout(params)?;
    let corrected = fidelity(&ghz_target(outcomes), rho)?;
    let mut raw = 1.0;
    for s in ghz_stabilizers(outcomes) {
        let e = rho.expectation(&s.to_matrix())?.re;
        raw += (f0 - f1) + contrast * e;
    }
    Ok((corrected, raw / 8.0))
}

pub fn run_ghz_generation(params: &NoiseParams, mode: Mode, cfg: &EngineConfig) -> Result<GhzReport> {
    let rho = maximally_mixed(3)?;
    let steps = vec![p1(), p2(), p3()];
    let triples = outcome_triples();
    let branches: Vec<GhzBranch> = match run_schedule(steps.clone(), mode, params, &rho, cfg, 0)? {
        ScheduleRun::Exact(records) => records
            .into_iter()
            .zip(&triples)
            .map(|(rec, &t)| {
                debug_assert_eq!(rec.labels, t.to_vec());
                let (fid, raw) = match &rec.post_state {
                    Some(state) => exact_fidelities(state, t, params)?,
                    None => (0.0, 0.0),
                };
                Ok(GhzBranch {
                    outcome: outcome_label(&t),
                    probability: rec.probability,
                    probability_se: cfg.trials.map(|n| binary_standard_error(2.0 * rec.probability - 1.0, n) / 2.0),
                    fidelity: fid,
                    fidelity_se: None,
                    raw_fidelity: raw,
                    raw_fidelity_se: None,
                    post_state: rec.post_state.map(DensityMatrix::into_matrix),
                })
            })
            .collect::<Result<_>>()?,
        ScheduleRun::Sampled(histories) => sampled_branches(params, mode, cfg, &histories)?,
    };

    let avg = branches.iter().map(|b| b.fidelity).sum::<f64>() / 8.0;
    let avg_raw = branches.iter().map(|b| b.raw_fidelity).sum::<f64>() / 8.0;
    let avg_se = if branches.iter().all(|b| b.fidelity_se.is_some()) {
        Some(branches.iter().map(|b| b.fidelity_se.unwrap().powi(2)).sum::<f64>().sqrt() / 8.0)
    } else {
        None
    };
    let best = branches
        .iter()
        .fold(&branches[0], |best, b| if b.fidelity > best.fidelity { b } else { best })
        .outcome
        .clone();
    Ok(GhzReport {
        mode,
        engine: cfg.engine,
        trials: cfg.trials,
        branches,
        average_fidelity: avg,
        average_fidelity_se: avg_se,
        average_raw_fidelity: avg_raw,
        best_branch: best,
    })
}

/// Direct fidelity estimation: after the three parity readouts, each trial
/// measures one stabilizer of its branch target, chosen uniformly, through
/// the noisy electron readout.
fn sampled_branches(params: &NoiseParams, mode: Mode, cfg: &EngineConfig, histories: &[Vec<i8>]) -> Result<Vec<GhzBranch>> {
    let (f0, f1, contrast) = final_readout(params)?;
    // Exact branch states; the sampled histories decide how often each is
    // reached.
    let exact = run_schedule(
        vec![p1(), p2(), p3()],
        mode,
        params,
        &maximally_mixed(3)?,
        &EngineConfig::exact(),
        0,
    )?;
    let ScheduleRun::Exact(records) = exact else { unreachable!() };
    let triples = outcome_triples();
    let plus_probs: Vec<Vec<f64>> = records
        .iter()
        .zip(&triples)
        .map(|(rec, &t)| {
            ghz_stabilizers(t)
                .iter()
                .map(|s| match &rec.post_state {
                    Some(st) => Ok(st.expectation(&s.projectors()?.plus)?.re),
                    None => Ok(0.0),
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let index_of = |h: &[i8]| h.iter().fold(0usize, |acc, &l| acc << 1 | usize::from(l < 0));
    let final_seed = stream_seed(cfg.seed, 1);
    // (branch, corrected estimate, raw estimate) per trial.
    let estimates: Vec<(usize, f64, f64)> = histories
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let b = index_of(h);
            let mut rng = ChaCha8Rng::seed_from_u64(crate::sequencer::trajectory_seed(final_seed, i as u64));
            let k = rng.gen_range(0..7);
            let plus = rng.gen::<f64>() < plus_probs[b][k];
            let read_zero = if plus { rng.gen::<f64>() < f0 } else { rng.gen::<f64>() >= f1 };
            let r = if read_zero { 1.0 } else { -1.0 };
            let c = (r - (f0 - f1)) / contrast;
            (b, (1.0 + 7.0 * c) / 8.0, (1.0 + 7.0 * r) / 8.0)
        })
        .collect();

    let n = histories.len();
    triples
        .iter()
        .enumerate()
        .map(|(b, t)| {
            let corrected: Vec<f64> = estimates.iter().filter(|e| e.0 == b).map(|e| e.1).collect();
            let raw: Vec<f64> = estimates.iter().filter(|e| e.0 == b).map(|e| e.2).collect();
            let m = corrected.len();
            if m < 2 {
                return Err(Error::TooFewSamples { needed: 2, got: m });
            }
            let p = m as f64 / n as f64;
            Ok(GhzBranch {
                outcome: outcome_label(t),
                probability: p,
                probability_se: Some((p * (1.0 - p) / n as f64).sqrt()),
                fidelity: corrected.iter().sum::<f64>() / m as f64,
                fidelity_se: Some(standard_error(&corrected)?),
                raw_fidelity: raw.iter().sum::<f64>() / m as f64,
                raw_fidelity_se: Some(standard_error(&raw)?),
                post_state: None,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleShotReport {
    pub mode: Mode,
    pub engine: Engine,
    pub trials: Option<usize>,
    /// ⟨P₁ × P₂ × P₃ × P₄⟩
    pub product: f64,
    pub standard_error: Option<f64>,
    /// Mean outcome of each parity.
    pub parity_means: [f64; 4],
    /// Probability of each of the 16 outcome strings.
    pub outcomes: Vec<BarRow>,
}

impl SingleShotReport {
    pub fn bars(&self) -> Vec<BarRow> {
        let mut rows: Vec<BarRow> = ["P1", "P2", "P3", "P4"]
            .iter()
            .zip(self.parity_means)
            .map(|(l, v)| BarRow {
                label: l.to_string(),
                value: v,
                standard_error: self.trials.map(|n| binary_standard_error(v, n)),
            })
            .collect();
        rows.push(BarRow {
            label: "P1P2P3P4".into(),
            value: self.product,
            standard_error: self.standard_error,
        });
        rows
    }
}

pub fn run_single_shot_ghz(params: &NoiseParams, mode: Mode, cfg: &EngineConfig) -> Result<SingleShotReport> {
    run_single_shot_on(params, mode, cfg, &maximally_mixed(3)?)
}

/// Single-shot run from an arbitrary input state.
pub fn run_single_shot_on(params: &NoiseParams, mode: Mode, cfg: &EngineConfig, rho: &DensityMatrix) -> Result<SingleShotReport> {
    let strings: Vec<Vec<i8>> = (0..16)
        .map(|b| (0..4).map(|k| if (b >> (3 - k)) & 1 == 0 { 1 } else { -1 }).collect())
        .collect();
    let (probs, product, se, n) = match run_schedule(parities().to_vec(), mode, params, rho, cfg, 0)? {
        ScheduleRun::Exact(records) => {
            let probs: Vec<f64> = records.iter().map(|r| r.probability).collect();
            let product: f64 = records.iter().map(|r| r.probability * r.label_product() as f64).sum();
            let se = cfg.trials.map(|n| binary_standard_error(product, n));
            (probs, product, se, cfg.trials)
        }
        ScheduleRun::Sampled(histories) => {
            let n = histories.len();
            let mut probs = vec![0.0; 16];
            for h in &histories {
                let idx = h.iter().fold(0usize, |acc, &l| acc << 1 | usize::from(l < 0));
                probs[idx] += 1.0 / n as f64;
            }
            let values: Vec<f64> = histories.iter().map(|h| h.iter().map(|&l| l as f64).product()).collect();
            let product = values.iter().sum::<f64>() / n as f64;
            (probs, product, Some(standard_error(&values)?), Some(n))
        }
    };
    let mut parity_means = [0.0; 4];
    for (s, p) in strings.iter().zip(&probs) {
        for k in 0..4 {
            parity_means[k] += p * s[k] as f64;
        }
    }
    let outcomes = strings
        .iter()
        .zip(&probs)
        .map(|(s, &p)| BarRow {
            label: outcome_label(s),
            value: p,
            standard_error: n.map(|n| (p * (1.0 - p) / n as f64).sqrt()),
        })
        .collect();
    Ok(SingleShotReport {
        mode,
        engine: cfg.engine,
        trials: n,
        product,
        standard_error: se,
        parity_means,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{random_density, ComplexMatrix, ONE};

    fn ket(amps: &[(usize, f64)]) -> StateVector {
        let mut v = vec![C64::new(0.0, 0.0); 8];
        for &(i, a) in amps {
            v[i] = C64::new(a, 0.0);
        }
        StateVector::new(v).unwrap()
    }

    #[test]
    fn all_plus_target() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = ket(&[(0, h), (7, -h)]);
        let got = ghz_target([1, 1, 1]);
        for (a, b) in got.amplitudes().iter().zip(want.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
        // XYY|000⟩ = −|111⟩ and XYY|111⟩ = −|000⟩, so the difference is a +1 eigenvector.
        let v = p1().to_matrix().apply(got.amplitudes()).unwrap();
        for (a, b) in v.iter().zip(got.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn all_minus_target_matches_eigensolver() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = ket(&[(0, h), (7, h)]);
        assert!((ghz_target([-1, -1, -1]).inner(&want).norm() - 1.0).abs() < 1e-12);
        // Oracle: the +1 eigenvector of the sum of the signed generators.
        let sum = &(&p1().negate().to_matrix() + &p2().negate().to_matrix()) + &p3().negate().to_matrix();
        let (vals, vecs) = sum.eigh().unwrap();
        assert!((vals[7] - 3.0).abs() < 1e-9);
        let top = StateVector::normalized(vecs.column(7)).unwrap();
        assert!((top.inner(&want).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn targets_form_an_orthonormal_basis() {
        let states: Vec<StateVector> = outcome_triples().into_iter().map(ghz_target).collect();
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((a.inner(b) - C64::new(want, 0.0)).norm() < 1e-12);
            }
            let first = a.amplitudes().iter().find(|z| z.norm() > 1e-12).unwrap();
            assert!(first.im.abs() < 1e-15 && first.re > 0.0);
        }
    }

    #[test]
    fn stabilizers_fix_their_target() {
        for t in outcome_triples() {
            let psi = ghz_target(t);
            for s in ghz_stabilizers(t) {
                let v = s.to_matrix().apply(psi.amplitudes()).unwrap();
                assert!(v.iter().zip(psi.amplitudes()).all(|(a, b)| (a - b).norm() < 1e-12), "{s}");
            }
        }
    }

    #[test]
    fn ideal_generation_is_perfect() {
        for mode in [Mode::Branched, Mode::Echoed] {
            let r = run_ghz_generation(&NoiseParams::ideal(), mode, &EngineConfig::exact()).unwrap();
            assert_eq!(r.branches.len(), 8);
            for b in &r.branches {
                assert!((b.probability - 0.125).abs() < 1e-9);
                assert!((b.fidelity - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn echo_errors_only_lower_fidelity() {
        let mut params = NoiseParams::default();
        params.p_echo = 0.0;
        let b = run_ghz_generation(&params, Mode::Branched, &EngineConfig::exact()).unwrap();
        let e = run_ghz_generation(&params, Mode::Echoed, &EngineConfig::exact()).unwrap();
        assert!((b.average_fidelity - e.average_fidelity).abs() < 1e-12);
        params.p_echo = 0.02;
        let e = run_ghz_generation(&params, Mode::Echoed, &EngineConfig::exact()).unwrap();
        assert!(e.average_fidelity < b.average_fidelity);
    }

    #[test]
    fn raw_fidelity_is_below_corrected() {
        let r = run_ghz_generation(&NoiseParams::default(), Mode::Branched, &EngineConfig::exact()).unwrap();
        assert!(r.average_raw_fidelity < r.average_fidelity);
        let ideal = run_ghz_generation(&NoiseParams::ideal(), Mode::Branched, &EngineConfig::exact()).unwrap();
        assert!((ideal.average_raw_fidelity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fidelity_does_not_rise_with_noise() {
        use crate::instrument::{ReadoutFactors, ReadoutModel};
        let avg = |p: &NoiseParams| run_ghz_generation(p, Mode::Branched, &EngineConfig::exact()).unwrap().average_fidelity;
        let base = NoiseParams {
            t2star_ms: crate::calibration::DEFAULT_T2STAR_MS,
            ..NoiseParams::ideal()
        };
        let readout = |q0: f64, q1: f64| ReadoutModel::factorized(ReadoutFactors { q0, q1, f0: 1.0, f1: 1.0 }, [1.0; 3]).unwrap();
        let sweeps: Vec<Vec<NoiseParams>> = vec![
            [0.0, 0.01, 0.03].iter().map(|&p| NoiseParams { p_gate: p, ..base.clone() }).collect(),
            [1.0, 0.97, 0.94].iter().map(|&q| NoiseParams { readout: readout(q, 1.0), ..base.clone() }).collect(),
            [1.0, 0.99, 0.97].iter().map(|&q| NoiseParams { readout: readout(1.0, q), ..base.clone() }).collect(),
            [1.0, 3.0, 6.0].iter().map(|&t| NoiseParams { segment_time_ms: t, ..base.clone() }).collect(),
        ];
        for sweep in sweeps {
            let f: Vec<f64> = sweep.iter().map(avg).collect();
            assert!(f[0] >= f[1] - 1e-12 && f[1] >= f[2] - 1e-12, "{f:?}");
            assert!(f[2] < f[0]);
        }
    }

    #[test]
    fn ideal_single_shot_is_minus_one() {
        let r = run_single_shot_ghz(&NoiseParams::ideal(), Mode::Branched, &EngineConfig::exact()).unwrap();
        assert!((r.product + 1.0).abs() < 1e-9);
        assert_eq!(r.outcomes.len(), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for rank in 1..=4 {
            let rho = random_density(3, rank, &mut rng).unwrap();
            let r = run_single_shot_on(&NoiseParams::ideal(), Mode::Echoed, &EngineConfig::exact(), &rho).unwrap();
            assert!((r.product + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn classical_values_give_plus_one() {
        // Fixed ±1 values for X_k and Y_k; each parity is the product of its letters.
        for bits in 0..64u32 {
            let val = |k: usize, is_x: bool| if bits >> (2 * k + usize::from(!is_x)) & 1 == 0 { 1i32 } else { -1 };
            let parity = |letters: [bool; 3]| (0..3).map(|k| val(k, letters[k])).product::<i32>();
            let prod = parity([true, false, false]) * parity([false, true, false]) * parity([false, false, true]) * parity([true, true, true]);
            assert_eq!(prod, 1);
        }
        // The quantum operator product is −I.
        let m = [p1(), p2(), p3(), crate::pauli::observables::p4()]
            .iter()
            .map(|p| p.to_matrix())
            .reduce(|a, b| a.matmul(&b).unwrap())
            .unwrap();
        assert!(m.approx_eq(&ComplexMatrix::identity(8).scale(-ONE), 1e-12));
    }

    #[test]
    fn sampled_generation_is_deterministic() {
        let cfg = EngineConfig::sampled(4000, 3);
        let a = run_ghz_generation(&NoiseParams::default(), Mode::Echoed, &cfg).unwrap();
        let b = run_ghz_generation(&NoiseParams::default(), Mode::Echoed, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
