//! One ancilla-assisted parity measurement on the three-spin register,
//! simulated on the joint spins ⊗ ancilla space (ancilla = qubit 3).
//!
//! Stages, in order:
//! 1. ancilla prepared in |0⟩ with a bit-flip of probability `1 − init0`;
//! 2. one depolarizing event per electron-controlled rotation: on
//!    {spin k, ancilla} for every spin in the observable's support, plus one
//!    on the ancilla alone;
//! 3. the parity map U = P₊ ⊗ I + P₋ ⊗ X;
//! 4. ancilla readout per the joint table, dephasing the coupled spins by
//!    `dephase_on_flip` whenever the ancilla flips;
//! 5. conditional-phase accrual, optional echo, and phase corrections;
//! 6. the inverse map U followed by the same set of gate errors;
//! 7. T₂* dephasing of every spin for the segment time.

use crate::calibration::NoiseParams;
use crate::error::{Error, Result};
use crate::instrument::channel::{t2star_strength, PauliMask, PauliMix};
use crate::pauli::PauliString;
use crate::qmat::{kron, ComplexMatrix, DensityMatrix, C64, ONE, ZERO};

pub(crate) const N_SPINS: usize = 3;
const N_JOINT: usize = N_SPINS + 1;
const ANCILLA: usize = N_SPINS;
const D_SPINS: usize = 1 << N_SPINS;
const D_JOINT: usize = 1 << N_JOINT;

/// How conditional phases are accrued and undone within a segment.
#[derive(Clone, Debug, PartialEq)]
pub enum PhaseHandling {
    /// No conditional phase accrual.
    Untracked,
    /// Phase φ_a accrues for assigned outcome bit `a`; the correction for
    /// that outcome, `corrections[a]`, is undone afterwards.
    Branched { corrections: [[f64; 3]; 2] },
    /// The ancilla is flipped halfway through the accrual window and flipped
    /// back, so φ₀ + φ₁ accrues for either outcome; one correction for all.
    Echoed { correction: [f64; 3] },
}

pub struct Segment<'a> {
    observable: &'a PauliString,
    noise: &'a NoiseParams,
    phases: PhaseHandling,
    parity_map: ComplexMatrix,
    gate_errors: PauliMix,
    flip_dephasing: PauliMix,
    idle: PauliMix,
}

impl<'a> Segment<'a> {
    pub fn new(observable: &'a PauliString, noise: &'a NoiseParams, phases: PhaseHandling) -> Result<Self> {
        if observable.n_qubits() != N_SPINS {
            return Err(Error::RegisterMismatch {
                left: observable.n_qubits(),
                right: N_SPINS,
            });
        }
        noise.validate()?;
        let proj = observable.projectors()?;
        let x = crate::pauli::Letter::X.matrix();
        let parity_map = &kron(&proj.plus, &ComplexMatrix::identity(2))? + &kron(&proj.minus, &x)?;

        let support = observable.support();
        let mut gate_errors = PauliMix::identity(N_JOINT);
        for &k in &support {
            gate_errors = gate_errors.then(&PauliMix::depolarizing(N_JOINT, &[k, ANCILLA], noise.p_gate));
        }
        gate_errors = gate_errors.then(&PauliMix::depolarizing(N_JOINT, &[ANCILLA], noise.p_gate));

        let mut flip_dephasing = PauliMix::identity(N_JOINT);
        for &k in &support {
            flip_dephasing = flip_dephasing.then(&PauliMix::dephasing(N_JOINT, k, noise.readout.dephase_on_flip[k]));
        }

        let mut idle = PauliMix::identity(N_JOINT);
        for k in 0..N_SPINS {
            let lambda = t2star_strength(noise.segment_time_ms, noise.t2star_ms[k]);
            idle = idle.then(&PauliMix::dephasing(N_JOINT, k, lambda));
        }

        Ok(Self {
            observable,
            noise,
            phases,
            parity_map,
            gate_errors,
            flip_dephasing,
            idle,
        })
    }

    pub fn observable(&self) -> &PauliString {
        self.observable
    }

    /// Ancilla state right after initialization.
    fn ancilla_init(&self) -> ComplexMatrix {
        let f = self.noise.init_fid[0];
        ComplexMatrix::diag(&[C64::new(f, 0.0), C64::new(1.0 - f, 0.0)])
    }

    /// Unnormalized joint states for assigned outcome bits 0 (parity +1)
    /// and 1 (parity −1), starting from `rho ⊗ ancilla_init`.
    pub fn joint_outputs(&self, rho: &DensityMatrix) -> Result<[ComplexMatrix; 2]> {
        if rho.dim() != D_SPINS {
            return Err(Error::DimensionMismatch {
                expected: D_SPINS,
                found: rho.dim(),
            });
        }
        let joint = kron(rho.matrix(), &self.ancilla_init())?;
        Ok(self.run_joint(&joint))
    }

    pub(crate) fn run_joint(&self, joint: &ComplexMatrix) -> [ComplexMatrix; 2] {
        let mut m = self.gate_errors.apply(joint);
        m = self.parity_map.conjugate_by(&m);
        let mut outs = self.readout(&m);
        for (bit, out) in outs.iter_mut().enumerate() {
            let mut o = self.phase_stage(bit, out);
            o = self.parity_map.conjugate_by(&o);
            o = self.gate_errors.apply(&o);
            *out = self.idle.apply(&o);
        }
        outs
    }

    fn readout(&self, m: &ComplexMatrix) -> [ComplexMatrix; 2] {
        let table = self.noise.readout.table();
        let block = |s: usize| {
            let mut b = ComplexMatrix::zeros(D_JOINT, D_JOINT);
            for i in 0..D_SPINS {
                for j in 0..D_SPINS {
                    b[(2 * i + s, 2 * j + s)] = m[(2 * i + s, 2 * j + s)];
                }
            }
            b
        };
        let blocks = [block(0), block(1)];
        let flipped = [
            self.flip_dephasing.apply(&flip_ancilla(&blocks[0])),
            self.flip_dephasing.apply(&flip_ancilla(&blocks[1])),
        ];
        let mut outs = [ComplexMatrix::zeros(D_JOINT, D_JOINT), ComplexMatrix::zeros(D_JOINT, D_JOINT)];
        for (a, out) in outs.iter_mut().enumerate() {
            for s in 0..2 {
                let stay = table[s][a][s];
                let flip = table[s][a][1 - s];
                if stay > 0.0 {
                    *out = &*out + &blocks[s].scale(C64::new(stay, 0.0));
                }
                if flip > 0.0 {
                    *out = &*out + &flipped[s].scale(C64::new(flip, 0.0));
                }
            }
        }
        outs
    }

    fn phase_stage(&self, bit: usize, m: &ComplexMatrix) -> ComplexMatrix {
        let acc = [&self.noise.phi0, &self.noise.phi1];
        match &self.phases {
            PhaseHandling::Untracked => m.clone(),
            PhaseHandling::Branched { corrections } => {
                let net = sub(acc[bit], &corrections[bit]);
                spin_phases(m, &net)
            }
            PhaseHandling::Echoed { correction } => {
                let p = self.noise.p_echo;
                let ok = spin_phases(m, &sub(&add(acc[bit], acc[1 - bit]), correction));
                if p == 0.0 {
                    return ok;
                }
                let doubled = add(acc[bit], acc[bit]);
                let failed = flip_ancilla(&spin_phases(m, &sub(&doubled, correction)));
                &ok.scale(C64::new(1.0 - p, 0.0)) + &failed.scale(C64::new(p, 0.0))
            }
        }
    }
}

fn add(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn flip_ancilla(m: &ComplexMatrix) -> ComplexMatrix {
    PauliMask { x: 1, z: 0 }.conjugate(m)
}

/// Conjugates by ⊗_k diag(1, e^{iθ_k}) on the spins of the joint register.
fn spin_phases(m: &ComplexMatrix, theta: &[f64; 3]) -> ComplexMatrix {
    if theta.iter().all(|&t| t == 0.0) {
        return m.clone();
    }
    let phase: Vec<C64> = (0..D_JOINT)
        .map(|idx| {
            let spins = idx >> 1;
            let angle: f64 = (0..N_SPINS)
                .filter(|k| spins & (1 << (N_SPINS - 1 - k)) != 0)
                .map(|k| theta[k])
                .sum();
            C64::from_polar(1.0, angle)
        })
        .collect();
    let mut out = m.clone();
    for a in 0..D_JOINT {
        for b in 0..D_JOINT {
            let z = out[(a, b)];
            if z != ZERO {
                out[(a, b)] = z * phase[a] * phase[b].conj();
            }
        }
    }
    out
}

/// Traces the ancilla out of a joint matrix.
pub(crate) fn trace_ancilla(m: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(D_SPINS, D_SPINS);
    for i in 0..D_SPINS {
        for j in 0..D_SPINS {
            out[(i, j)] = m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)];
        }
    }
    out
}

/// Reduced ancilla state (2×2) of a joint matrix.
pub fn ancilla_state(m: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(2, 2);
    for s in 0..2 {
        for t in 0..2 {
            out[(s, t)] = (0..D_SPINS).map(|i| m[(2 * i + s, 2 * i + t)]).sum();
        }
    }
    out
}

/// Per-branch superoperators (row-major vectorization, 64×64) of the
/// segment as a map on the spin register.
pub(crate) fn branch_superops(seg: &Segment<'_>) -> [ComplexMatrix; 2] {
    let d2 = D_SPINS * D_SPINS;
    let mut ops = [ComplexMatrix::zeros(d2, d2), ComplexMatrix::zeros(d2, d2)];
    let anc = seg.ancilla_init();
    for i in 0..D_SPINS {
        for j in 0..D_SPINS {
            let mut e = ComplexMatrix::zeros(D_SPINS, D_SPINS);
            e[(i, j)] = ONE;
            let joint = kron(&e, &anc).expect("16x16");
            let outs = seg.run_joint(&joint);
            for (op, out) in ops.iter_mut().zip(outs.iter()) {
                let red = trace_ancilla(out);
                for r in 0..D_SPINS {
                    for c in 0..D_SPINS {
                        op[(r * D_SPINS + c, i * D_SPINS + j)] = red[(r, c)];
                    }
                }
            }
        }
    }
    ops
}
