use crate::error::{check_probability, Error, Result};
use crate::pauli::{Letter, PauliString, Phase};
use crate::qmat::{ComplexMatrix, DensityMatrix, C64, MAX_QUBITS, VALIDATION_TOL};

/// A Pauli operator up to phase, as X and Z bit masks over basis indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct PauliMask {
    pub x: usize,
    pub z: usize,
}

impl PauliMask {
    pub const IDENTITY: PauliMask = PauliMask { x: 0, z: 0 };

    fn compose(self, other: PauliMask) -> PauliMask {
        PauliMask {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
        }
    }

    /// P·M·P† in O(d²); the phase of P cancels.
    pub fn conjugate(self, m: &ComplexMatrix) -> ComplexMatrix {
        let d = m.rows();
        let sign = |j: usize| if (self.z & j).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut out = ComplexMatrix::zeros(d, d);
        for a in 0..d {
            let ja = a ^ self.x;
            let sa = sign(ja);
            for b in 0..d {
                let jb = b ^ self.x;
                out[(a, b)] = m[(ja, jb)] * (sa * sign(jb));
            }
        }
        out
    }

    fn to_string(self, n: usize) -> PauliString {
        let letters = (0..n)
            .map(|q| {
                let bit = 1 << (n - 1 - q);
                match (self.x & bit != 0, self.z & bit != 0) {
                    (false, false) => Letter::I,
                    (true, false) => Letter::X,
                    (true, true) => Letter::Y,
                    (false, true) => Letter::Z,
                }
            })
            .collect();
        PauliString::new(Phase::PLUS_ONE, letters).expect("n <= 4")
    }
}

/// A probabilistic mixture of Pauli conjugations.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct PauliMix {
    n_qubits: usize,
    terms: Vec<(PauliMask, f64)>,
}

impl PauliMix {
    pub fn identity(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: vec![(PauliMask::IDENTITY, 1.0)],
        }
    }

    fn bit(&self, q: usize) -> usize {
        1 << (self.n_qubits - 1 - q)
    }

    pub fn dephasing(n_qubits: usize, qubit: usize, strength: f64) -> Self {
        let mut m = Self::identity(n_qubits);
        let p = strength / 2.0;
        m.terms = vec![
            (PauliMask::IDENTITY, 1.0 - p),
            (PauliMask { x: 0, z: m.bit(qubit) }, p),
        ];
        m.prune();
        m
    }

    /// With probability `p`, the reduced state on `qubits` is replaced by the
    /// maximally mixed state (uniform Pauli twirl).
    pub fn depolarizing(n_qubits: usize, qubits: &[usize], p: f64) -> Self {
        let base = Self::identity(n_qubits);
        let k = qubits.len();
        let count = 1usize << (2 * k);
        let each = p / count as f64;
        let mut terms = Vec::with_capacity(count);
        for code in 0..count {
            let mut mask = PauliMask::IDENTITY;
            for (i, &q) in qubits.iter().enumerate() {
                let letter = (code >> (2 * i)) & 3;
                if letter & 1 != 0 {
                    mask.x |= base.bit(q);
                }
                if letter & 2 != 0 {
                    mask.z |= base.bit(q);
                }
            }
            let w = if mask == PauliMask::IDENTITY { 1.0 - p + each } else { each };
            terms.push((mask, w));
        }
        let mut m = Self { n_qubits, terms };
        m.prune();
        m
    }

    /// The mixture of applying `self` and then `other` independently.
    pub fn then(&self, other: &PauliMix) -> PauliMix {
        let mut acc: std::collections::BTreeMap<PauliMask, f64> = Default::default();
        for &(a, pa) in &self.terms {
            for &(b, pb) in &other.terms {
                *acc.entry(a.compose(b)).or_default() += pa * pb;
            }
        }
        let mut m = PauliMix {
            n_qubits: self.n_qubits,
            terms: acc.into_iter().collect(),
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        self.terms.retain(|&(_, p)| p > 0.0);
        if self.terms.is_empty() {
            self.terms.push((PauliMask::IDENTITY, 1.0));
        }
    }

    pub fn apply(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let d = m.rows();
        let mut out = ComplexMatrix::zeros(d, d);
        for &(mask, p) in &self.terms {
            let term = if mask == PauliMask::IDENTITY { m.clone() } else { mask.conjugate(m) };
            out = &out + &term.scale(C64::new(p, 0.0));
        }
        out
    }

    fn kraus(&self) -> Vec<ComplexMatrix> {
        self.terms
            .iter()
            .map(|&(mask, p)| {
                mask.to_string(self.n_qubits)
                    .to_matrix()
                    .scale(C64::new(p.sqrt(), 0.0))
            })
            .collect()
    }
}

/// A completely positive trace-preserving map in Kraus form.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    kraus: Vec<ComplexMatrix>,
    pauli: Option<PauliMix>,
}

impl Channel {
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        check_kraus_completeness(&kraus)?;
        Ok(Self { kraus, pauli: None })
    }

    pub(crate) fn from_pauli_mix(mix: PauliMix) -> Self {
        Self {
            kraus: mix.kraus(),
            pauli: Some(mix),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kraus: vec![ComplexMatrix::identity(dim)],
            pauli: None,
        }
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].rows()
    }

    /// max |Σ K†K − I|
    pub fn completeness_error(&self) -> f64 {
        completeness_error(&self.kraus)
    }

    pub fn apply_matrix(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.rows() != self.dim() || !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: m.rows(),
            });
        }
        if let Some(mix) = &self.pauli {
            return Ok(mix.apply(m));
        }
        let mut out = ComplexMatrix::zeros(m.rows(), m.cols());
        for k in &self.kraus {
            out = &out + &k.conjugate_by(m);
        }
        Ok(out)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_trusted(self.apply_matrix(rho.matrix())?))
    }
}

pub(crate) fn completeness_error(kraus: &[ComplexMatrix]) -> f64 {
    let dim = kraus[0].cols();
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for k in kraus {
        sum = &sum + &(&k.adjoint() * k);
    }
    sum.max_abs_diff(&ComplexMatrix::identity(dim))
}

fn check_kraus_completeness(kraus: &[ComplexMatrix]) -> Result<()> {
    let first = kraus
        .first()
        .ok_or_else(|| Error::InvalidChannel("no Kraus operators".into()))?;
    if !first.is_square() || kraus.iter().any(|k| k.rows() != first.rows() || k.cols() != first.cols()) {
        return Err(Error::InvalidChannel("Kraus operators must share one square shape".into()));
    }
    let err = completeness_error(kraus);
    if err > VALIDATION_TOL {
        return Err(Error::InvalidChannel(format!("completeness violated by {err:.3e}")));
    }
    Ok(())
}

fn check_register(n_qubits: usize, qubits: &[usize]) -> Result<()> {
    if !(1..=MAX_QUBITS).contains(&n_qubits) {
        return Err(Error::QubitCount(n_qubits));
    }
    if qubits.is_empty() {
        return Err(Error::QubitSelection("empty qubit set".into()));
    }
    let mut seen = 0usize;
    for &q in qubits {
        if q >= n_qubits || seen & (1 << q) != 0 {
            return Err(Error::QubitSelection(format!("qubit {q} of {n_qubits}")));
        }
        seen |= 1 << q;
    }
    Ok(())
}

/// Z-basis dephasing of `qubit`: off-diagonal elements are multiplied by
/// `1 − strength`. Kraus form {√(1−p)·I, √p·Z} with p = strength/2.
pub fn dephasing_channel(n_qubits: usize, qubit: usize, strength: f64) -> Result<Channel> {
    check_register(n_qubits, &[qubit])?;
    check_probability("dephasing strength", strength)?;
    Ok(Channel::from_pauli_mix(PauliMix::dephasing(n_qubits, qubit, strength)))
}

/// With probability `p`, replaces the reduced state on `qubits` with the
/// maximally mixed state.
pub fn depolarizing_channel(n_qubits: usize, qubits: &[usize], p: f64) -> Result<Channel> {
    check_register(n_qubits, qubits)?;
    check_probability("depolarizing probability", p)?;
    Ok(Channel::from_pauli_mix(PauliMix::depolarizing(n_qubits, qubits, p)))
}

/// Gaussian free-induction decay: the coherence multiplier after `t` is
/// exp(−(t/T₂*)²). Returns the matching dephasing strength.
pub fn t2star_strength(t: f64, t2star: f64) -> f64 {
    if t2star.is_infinite() || t <= 0.0 {
        0.0
    } else {
        1.0 - (-(t / t2star).powi(2)).exp()
    }
}
