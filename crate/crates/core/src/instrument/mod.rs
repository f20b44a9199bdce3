//! Quantum channels and measurement instruments.

mod channel;
mod readout;
pub mod segment;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use channel::{depolarizing_channel, dephasing_channel, t2star_strength, Channel};
pub use readout::{ReadoutFactors, ReadoutModel};
pub use segment::{PhaseHandling, Segment};

use crate::calibration::NoiseParams;
use crate::error::{Error, Result};
use crate::pauli::PauliString;
use crate::qmat::{ComplexMatrix, DensityMatrix, C64, VALIDATION_TOL, ZERO};

/// Branch probabilities below this are reported as zero-probability.
pub const ZERO_PROBABILITY: f64 = 1e-12;

/// Parity label of an assigned ancilla bit (0 ↦ +1).
pub fn label_of_bit(bit: usize) -> i8 {
    if bit == 0 {
        1
    } else {
        -1
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    label: i8,
    kraus: Vec<ComplexMatrix>,
    effect: ComplexMatrix,
    superop: ComplexMatrix,
}

impl Branch {
    pub fn label(&self) -> i8 {
        self.label
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// Σ K†K for this branch.
    pub fn effect(&self) -> &ComplexMatrix {
        &self.effect
    }

    pub fn probability(&self, rho: &DensityMatrix) -> f64 {
        let d = rho.dim();
        let m = rho.matrix();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += self.effect[(i, j)] * m[(j, i)];
            }
        }
        acc.re
    }

    /// Unnormalized branch output.
    pub fn apply_unnormalized(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let d = rho.rows();
        let out = self.superop.apply(rho.as_slice()).expect("dimension checked");
        ComplexMatrix::new(d, d, out).expect("finite")
    }
}

/// Outcome-labelled completely positive maps summing to a trace-preserving map.
#[derive(Clone, Debug)]
pub struct Instrument {
    dim: usize,
    branches: Vec<Branch>,
}

impl Instrument {
    pub fn new(branches: Vec<(i8, Vec<ComplexMatrix>)>) -> Result<Self> {
        let dim = branches
            .first()
            .and_then(|(_, ks)| ks.first())
            .map(|k| k.cols())
            .ok_or_else(|| Error::InvalidInstrument("no branches".into()))?;
        let mut labels: Vec<i8> = branches.iter().map(|(l, _)| *l).collect();
        if labels.iter().any(|l| l.abs() != 1) {
            return Err(Error::InvalidInstrument("labels must be +1 or -1".into()));
        }
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != branches.len() {
            return Err(Error::InvalidInstrument("duplicate branch labels".into()));
        }
        let mut built = Vec::with_capacity(branches.len());
        for (label, kraus) in branches {
            if kraus.is_empty() || kraus.iter().any(|k| k.rows() != dim || k.cols() != dim) {
                return Err(Error::InvalidInstrument(format!(
                    "branch {label:+} needs square {dim}x{dim} Kraus operators"
                )));
            }
            let mut effect = ComplexMatrix::zeros(dim, dim);
            for k in &kraus {
                effect = &effect + &(&k.adjoint() * k);
            }
            let superop = superop_from_kraus(&kraus);
            built.push(Branch {
                label,
                kraus,
                effect,
                superop,
            });
        }
        let inst = Self { dim, branches: built };
        let err = inst.completeness_error();
        if err > VALIDATION_TOL {
            return Err(Error::InvalidInstrument(format!("completeness violated by {err:.3e}")));
        }
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch(&self, label: i8) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn completeness_error(&self) -> f64 {
        let mut sum = ComplexMatrix::zeros(self.dim, self.dim);
        for b in &self.branches {
            sum = &sum + &b.effect;
        }
        sum.max_abs_diff(&ComplexMatrix::identity(self.dim))
    }

    /// The non-selective channel Σ over all branches.
    pub fn channel(&self) -> Channel {
        Channel::new(self.branches.iter().flat_map(|b| b.kraus.iter().cloned()).collect())
            .expect("instrument is complete")
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        Ok(())
    }
}

/// S such that vec(Σ K ρ K†) = S · vec(ρ), with row-major vec.
fn superop_from_kraus(kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let d = kraus[0].rows();
    let mut s = ComplexMatrix::zeros(d * d, d * d);
    for k in kraus {
        for i in 0..d {
            for kk in 0..d {
                let a = k[(i, kk)];
                if a == ZERO {
                    continue;
                }
                for j in 0..d {
                    for l in 0..d {
                        s[(i * d + j, kk * d + l)] += a * k[(j, l)].conj();
                    }
                }
            }
        }
    }
    s
}

/// Kraus operators of a completely positive map from its superoperator via
/// the eigen-decomposition of the Choi matrix.
fn kraus_from_superop(s: &ComplexMatrix, d: usize) -> Result<Vec<ComplexMatrix>> {
    // J[(i,r),(j,c)] = Φ(|i⟩⟨j|)[r,c] = S[(r,c),(i,j)]
    let mut choi = ComplexMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            for r in 0..d {
                for c in 0..d {
                    choi[(i * d + r, j * d + c)] = s[(r * d + c, i * d + j)];
                }
            }
        }
    }
    let (vals, vecs) = choi.eigh()?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if let Some(&min) = vals.first() {
        if min < -1e-9 * scale {
            return Err(Error::Numerical(format!("map is not completely positive (Choi eigenvalue {min:.3e})")));
        }
    }
    let mut kraus = Vec::new();
    for (n, &lambda) in vals.iter().enumerate() {
        if lambda <= 1e-14 * scale {
            continue;
        }
        let w = lambda.sqrt();
        let mut k = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            for r in 0..d {
                k[(r, i)] = vecs[(i * d + r, n)] * w;
            }
        }
        kraus.push(k);
    }
    if kraus.is_empty() {
        kraus.push(ComplexMatrix::zeros(d, d));
    }
    Ok(kraus)
}

/// Ideal projective parity measurement: branches ±1 with Kraus (I ± M)/2.
pub fn ideal_parity_instrument(s: &PauliString) -> Result<Instrument> {
    let pp = s.projectors()?;
    Instrument::new(vec![(1, vec![pp.plus]), (-1, vec![pp.minus])])
}

/// A measurement segment as an instrument on the spin register.
pub fn segment_instrument(seg: &Segment<'_>) -> Result<Instrument> {
    let d = 1 << segment::N_SPINS;
    let ops = segment::branch_superops(seg);
    let mut branches = Vec::with_capacity(2);
    for (bit, op) in ops.iter().enumerate() {
        branches.push((label_of_bit(bit), kraus_from_superop(op, d)?));
    }
    Instrument::new(branches)
}

/// The ancilla-mediated parity measurement with gate errors, readout
/// backaction, uncompute and idle dephasing. Labels are the assigned
/// ancilla values (m_s=0 ↦ +1).
pub fn noisy_parity_instrument(s: &PauliString, noise: &NoiseParams) -> Result<Instrument> {
    segment_instrument(&Segment::new(s, noise, PhaseHandling::Untracked)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeRecord {
    pub labels: Vec<i8>,
    pub probability: f64,
    /// Normalized post-measurement state; `None` for zero-probability
    /// branches.
    pub post_state: Option<DensityMatrix>,
}

impl OutcomeRecord {
    pub fn is_zero_probability(&self) -> bool {
        self.post_state.is_none()
    }

    /// Product of all outcome labels.
    pub fn label_product(&self) -> i8 {
        self.labels.iter().product()
    }
}

fn normalize(unnorm: ComplexMatrix) -> (f64, Option<DensityMatrix>) {
    let p = unnorm.trace().re;
    if p < ZERO_PROBABILITY {
        (p.max(0.0), None)
    } else {
        (p, Some(DensityMatrix::from_trusted(unnorm.scale(C64::new(1.0 / p, 0.0)))))
    }
}

/// All branches of `inst` applied to `rho`, in branch order.
pub fn apply_instrument(rho: &DensityMatrix, inst: &Instrument) -> Result<Vec<OutcomeRecord>> {
    inst.check_dim(rho)?;
    let records: Vec<OutcomeRecord> = inst
        .branches
        .iter()
        .map(|b| {
            let (probability, post_state) = normalize(b.apply_unnormalized(rho.matrix()));
            OutcomeRecord {
                labels: vec![b.label],
                probability,
                post_state,
            }
        })
        .collect();
    let total: f64 = records.iter().map(|r| r.probability).sum();
    if (total - 1.0).abs() > VALIDATION_TOL {
        return Err(Error::Numerical(format!("branch probabilities sum to {total}")));
    }
    Ok(records)
}

/// Exact enumeration of a sequence of instruments; one record per outcome
/// string, in lexicographic order of labels (+1 before −1).
pub fn apply_sequence(rho: &DensityMatrix, seq: &[&Instrument]) -> Result<Vec<OutcomeRecord>> {
    let mut frontier = vec![OutcomeRecord {
        labels: Vec::new(),
        probability: 1.0,
        post_state: Some(rho.clone()),
    }];
    for inst in seq {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for rec in frontier {
            match &rec.post_state {
                Some(state) => {
                    for child in apply_instrument(state, inst)? {
                        let mut labels = rec.labels.clone();
                        labels.extend(child.labels);
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
                        labels.push(b.label);
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
    Ok(frontier)
}

/// Samples one branch with its Born probability, drawing from `rng`.
pub fn sample_with<R: Rng + ?Sized>(rho: &DensityMatrix, inst: &Instrument, rng: &mut R) -> Result<OutcomeRecord> {
    inst.check_dim(rho)?;
    let probs: Vec<f64> = inst.branches.iter().map(|b| b.probability(rho).max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > VALIDATION_TOL {
        return Err(Error::Numerical(format!("branch probabilities sum to {total}")));
    }
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = inst.branches.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = i;
            break;
        }
    }
    let b = &inst.branches[chosen];
    let (probability, post_state) = normalize(b.apply_unnormalized(rho.matrix()));
    Ok(OutcomeRecord {
        labels: vec![b.label],
        probability,
        post_state,
    })
}

/// Samples one branch; deterministic given `rng_seed`.
pub fn sample_instrument(rho: &DensityMatrix, inst: &Instrument, rng_seed: u64) -> Result<OutcomeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_with(rho, inst, &mut rng)
}
