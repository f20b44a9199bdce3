//! Maximum-likelihood readout calibration.
//!
//! Fits the factorized parameters (q₀, q₁, f₀, f₁) with initialization
//! fidelities held fixed. The search runs Nelder–Mead in logit space from a
//! number of seeded starting points.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::records::{log_likelihood_counts, ReadoutRecords};
use crate::error::{Error, Result};
use crate::instrument::{ReadoutFactors, ReadoutModel};
use crate::qmat::{ComplexMatrix, C64};
use crate::sequencer::trajectory_seed;

pub const RECOMMENDED_TRIALS: usize = 1000;
const N_PARAMS: usize = 4;
pub const PARAM_NAMES: [&str; N_PARAMS] = ["q0", "q1", "f0", "f1"];
/// Logits are kept inside ±LOGIT_MAX so boundary fits stay finite.
const LOGIT_MAX: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            seed: 0,
            max_iters: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub factors: ReadoutFactors,
    pub log_likelihood: f64,
    pub iterations: u64,
    pub winning_restart: usize,
    /// From the observed information; `None` when the optimum sits on the
    /// boundary or the information matrix is singular.
    pub std_errors: Option<[f64; N_PARAMS]>,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub n_trials: usize,
}

impl FitReport {
    pub fn as_array(&self) -> [f64; N_PARAMS] {
        to_array(&self.factors)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln().clamp(-LOGIT_MAX, LOGIT_MAX)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-LOGIT_MAX, LOGIT_MAX)).exp())
}

fn to_array(f: &ReadoutFactors) -> [f64; N_PARAMS] {
    [f.q0, f.q1, f.f0, f.f1]
}

fn from_array(p: &[f64]) -> ReadoutFactors {
    ReadoutFactors {
        q0: p[0],
        q1: p[1],
        f0: p[2],
        f1: p[3],
    }
}

#[derive(Clone)]
struct Objective<'a> {
    counts: &'a [[u64; 8]; 3],
    init_fid: [f64; 2],
    dephase_on_flip: [f64; 3],
    scale: f64,
}

impl Objective<'_> {
    fn ll(&self, p: &[f64]) -> f64 {
        match ReadoutModel::factorized(from_array(p), self.dephase_on_flip) {
            Ok(m) => log_likelihood_counts(self.counts, &m, self.init_fid),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let p: Vec<f64> = theta.iter().map(|&x| sigmoid(x)).collect();
        let ll = self.ll(&p);
        Ok(if ll.is_finite() { -ll / self.scale } else { f64::MAX })
    }
}

struct RestartResult {
    params: [f64; N_PARAMS],
    ll: f64,
    iterations: u64,
    converged: bool,
}

fn run_restart(obj: &Objective<'_>, start: [f64; N_PARAMS], max_iters: u64) -> Result<RestartResult> {
    let x0: Vec<f64> = start.iter().map(|&p| logit(p)).collect();
    let mut simplex = vec![x0.clone()];
    for k in 0..N_PARAMS {
        let mut v = x0.clone();
        v[k] += if v[k] > 0.0 { -0.5 } else { 0.5 };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-13)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let res = Executor::new(obj.clone(), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let state = res.state();
    let theta = state.get_best_param().ok_or_else(|| Error::Numerical("optimizer returned no point".into()))?;
    let mut params = [0.0; N_PARAMS];
    for (p, &x) in params.iter_mut().zip(theta) {
        *p = sigmoid(x);
    }
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    Ok(RestartResult {
        params,
        ll: obj.ll(&params),
        iterations: state.get_iter(),
        converged,
    })
}

/// Starting point for restart 0: the guess itself, read through its
/// marginals if it is not in factorized form.
fn guess_factors(model: &ReadoutModel) -> [f64; N_PARAMS] {
    match model.factors() {
        Some(f) => to_array(&f),
        None => [
            model.same_state_preservation(0),
            model.same_state_preservation(1),
            model.assignment_fidelity(0),
            model.assignment_fidelity(1),
        ],
    }
}

pub fn fit_readout(
    records: &ReadoutRecords,
    init_guess: &ReadoutModel,
    init_fid: [f64; 2],
    opts: &FitOptions,
) -> Result<FitReport> {
    let counts = records.counts();
    let obj = Objective {
        counts: &counts,
        init_fid,
        dephase_on_flip: init_guess.dephase_on_flip,
        scale: records.len() as f64,
    };
    let mut warnings = Vec::new();
    if records.len() < RECOMMENDED_TRIALS {
        let msg = format!("only {} trials; at least {RECOMMENDED_TRIALS} recommended", records.len());
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let restarts = opts.restarts.max(1);
    let starts: Vec<[f64; N_PARAMS]> = (0..restarts)
        .map(|i| {
            if i == 0 {
                guess_factors(init_guess)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(opts.seed, i as u64));
                std::array::from_fn(|_| rng.gen_range(0.5..0.999))
            }
        })
        .collect();
    let results: Vec<RestartResult> = starts
        .par_iter()
        .map(|&s| run_restart(&obj, s, opts.max_iters))
        .collect::<Result<_>>()?;

    // Highest likelihood wins; ties go to the lowest restart index.
    let (winner, best) = results
        .iter()
        .enumerate()
        .fold(None::<(usize, &RestartResult)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.ll >= r.ll => acc,
            _ => Some((i, r)),
        })
        .expect("at least one restart");

    let mut params = best.params;
    // With only mixed-state records the two hidden levels can be swapped;
    // pick the labelling whose assignment beats chance.
    let only_mixed = counts[0].iter().chain(&counts[1]).all(|&n| n == 0);
    if only_mixed && params[2] + params[3] < 1.0 {
        params = [params[1], params[0], 1.0 - params[3], 1.0 - params[2]];
    }
    if !best.converged {
        let msg = format!("simplex search hit the {} iteration cap", opts.max_iters);
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(FitReport {
        factors: from_array(&params),
        log_likelihood: obj.ll(&params),
        iterations: best.iterations,
        winning_restart: winner,
        std_errors: standard_errors(&obj, &params),
        converged: best.converged,
        warnings,
        n_trials: records.len(),
    })
}

/// Square roots of the diagonal of the inverse observed information, by
/// central differences of the log-likelihood in the natural parameters.
fn standard_errors(obj: &Objective<'_>, p: &[f64; N_PARAMS]) -> Option<[f64; N_PARAMS]> {
    let h: Vec<f64> = p.iter().map(|&x| 1e-4 * x.min(1.0 - x).min(0.01)).collect();
    if h.iter().any(|&s| s < 1e-9) {
        return None;
    }
    let at = |d: &[(usize, f64)]| {
        let mut q = *p;
        for &(k, s) in d {
            q[k] += s;
        }
        obj.ll(&q)
    };
    let f0 = at(&[]);
    let mut info = ComplexMatrix::zeros(N_PARAMS, N_PARAMS);
    for i in 0..N_PARAMS {
        for j in i..N_PARAMS {
            let second = if i == j {
                (at(&[(i, h[i])]) - 2.0 * f0 + at(&[(i, -h[i])])) / (h[i] * h[i])
            } else {
                (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])]) - at(&[(i, -h[i]), (j, h[j])])
                    + at(&[(i, -h[i]), (j, -h[j])]))
                    / (4.0 * h[i] * h[j])
            };
            info[(i, j)] = C64::new(-second, 0.0);
            info[(j, i)] = C64::new(-second, 0.0);
        }
    }
    let (vals, vecs) = info.eigh().ok()?;
    if vals.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let mut se = [0.0; N_PARAMS];
    for (i, s) in se.iter_mut().enumerate() {
        let var: f64 = (0..N_PARAMS).map(|k| vecs[(i, k)].norm_sqr() / vals[k]).sum();
        *s = var.sqrt();
    }
    Some(se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::records::{simulate_repeated_readout, Prepared};
    use crate::calibration::NoiseParams;

    const TRUTH: [f64; 4] = [0.943, 0.991, 0.95, 0.995];

    fn truth_params() -> NoiseParams {
        NoiseParams {
            readout: ReadoutModel::factorized(from_array(&TRUTH), [1.0; 3]).unwrap(),
            ..NoiseParams::default()
        }
    }

    #[test]
    fn recovers_generating_parameters() {
        let p = truth_params();
        let recs = simulate_repeated_readout(&p, 200_000, Prepared::Mixed, 17).unwrap();
        let fit = fit_readout(&recs, &ReadoutModel::ideal(), p.init_fid, &FitOptions::default()).unwrap();
        for (k, (&got, &want)) in fit.as_array().iter().zip(&TRUTH).enumerate() {
            assert!((got - want).abs() < 0.01, "{}: {got} vs {want}", PARAM_NAMES[k]);
        }
        assert!(fit.std_errors.is_some());
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn noiseless_records_fit_to_the_boundary() {
        let p = NoiseParams::ideal();
        let mut recs = simulate_repeated_readout(&p, 5_000, Prepared::Zero, 1).unwrap();
        recs.extend(&simulate_repeated_readout(&p, 5_000, Prepared::One, 2).unwrap());
        let fit = fit_readout(&recs, &ReadoutModel::ideal(), p.init_fid, &FitOptions::default()).unwrap();
        for v in fit.as_array() {
            assert!(v > 1.0 - 1e-3, "{v}");
        }
        assert!(fit.std_errors.is_none());
    }

    #[test]
    fn fits_are_deterministic() {
        let p = truth_params();
        let recs = simulate_repeated_readout(&p, 5_000, Prepared::Mixed, 4).unwrap();
        let opts = FitOptions {
            seed: 12,
            ..FitOptions::default()
        };
        let a = fit_readout(&recs, &ReadoutModel::ideal(), p.init_fid, &opts).unwrap();
        let b = fit_readout(&recs, &ReadoutModel::ideal(), p.init_fid, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_samples_are_flagged() {
        let p = truth_params();
        let recs = simulate_repeated_readout(&p, 200, Prepared::Mixed, 4).unwrap();
        let fit = fit_readout(&recs, &ReadoutModel::ideal(), p.init_fid, &FitOptions::default()).unwrap();
        assert_eq!(fit.warnings.len(), 1);
    }

    #[test]
    fn recovery_is_within_three_standard_errors() {
        let p = truth_params();
        let mut covered = 0;
        for rep in 0..100 {
            let recs = simulate_repeated_readout(&p, 100_000, Prepared::Mixed, 1000 + rep).unwrap();
            let fit = fit_readout(&recs, &ReadoutModel::ideal(), p.init_fid, &FitOptions::default()).unwrap();
            let se = fit.std_errors.unwrap();
            if fit.as_array().iter().zip(&TRUTH).zip(&se).all(|((g, t), s)| (g - t).abs() <= 3.0 * s) {
                covered += 1;
            }
        }
        assert!(covered >= 95, "{covered}/100");
    }
}
