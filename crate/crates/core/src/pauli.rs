//! Signed Pauli strings with exact phase bookkeeping.
//!
//! Text form: an optional sign (`+`, `-`, `+i`, `-i`) followed by one letter
//! per qubit, e.g. `+XYY`, `-XXX`, `IYI`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{kron_all, ComplexMatrix, C64, I, ONE, ZERO};

/// The four units {+1, +i, −1, −i}, stored as a power of i.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const PLUS_ONE: Phase = Phase(0);
    pub const PLUS_I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn mul(self, other: Phase) -> Phase {
        Phase((self.0 + other.0) % 4)
    }

    pub fn is_real(self) -> bool {
        self.0.is_multiple_of(2)
    }

    /// +1 or −1 for real phases.
    pub fn sign(self) -> Option<i8> {
        match self.0 {
            0 => Some(1),
            2 => Some(-1),
            _ => None,
        }
    }

    pub fn to_complex(self) -> C64 {
        match self.0 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    /// Product of two letters as (phase, letter).
    pub fn mul(self, other: Letter) -> (Phase, Letter) {
        use Letter::*;
        match (self, other) {
            (I, b) => (Phase::PLUS_ONE, b),
            (a, I) => (Phase::PLUS_ONE, a),
            (a, b) if a == b => (Phase::PLUS_ONE, I),
            (X, Y) => (Phase::PLUS_I, Z),
            (Y, Z) => (Phase::PLUS_I, X),
            (Z, X) => (Phase::PLUS_I, Y),
            (Y, X) => (Phase::MINUS_I, Z),
            (Z, Y) => (Phase::MINUS_I, X),
            (X, Z) => (Phase::MINUS_I, Y),
            _ => unreachable!(),
        }
    }

    pub fn anticommutes(self, other: Letter) -> bool {
        self != Letter::I && other != Letter::I && self != other
    }

    pub fn matrix(self) -> ComplexMatrix {
        let data = match self {
            Letter::I => vec![ONE, ZERO, ZERO, ONE],
            Letter::X => vec![ZERO, ONE, ONE, ZERO],
            Letter::Y => vec![ZERO, -I, I, ZERO],
            Letter::Z => vec![ONE, ZERO, ZERO, -ONE],
        };
        ComplexMatrix::new(2, 2, data).expect("2x2 Pauli")
    }

    fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_uppercase() {
            'I' => Some(Letter::I),
            'X' => Some(Letter::X),
            'Y' => Some(Letter::Y),
            'Z' => Some(Letter::Z),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    phase: Phase,
    letters: Vec<Letter>,
}

impl PauliString {
    pub fn new(phase: Phase, letters: Vec<Letter>) -> Result<Self> {
        if letters.is_empty() || letters.len() > crate::qmat::MAX_QUBITS {
            return Err(Error::PauliParse {
                text: letters.iter().map(|l| l.as_char()).collect(),
                reason: "register size must be 1..=4".into(),
            });
        }
        Ok(Self { phase, letters })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(Phase::PLUS_ONE, vec![Letter::I; n])
    }

    /// `letter` on `qubit`, identity elsewhere.
    pub fn single(letter: Letter, qubit: usize, n: usize) -> Result<Self> {
        if qubit >= n {
            return Err(Error::QubitSelection(format!("qubit {qubit} of {n}")));
        }
        let mut letters = vec![Letter::I; n];
        letters[qubit] = letter;
        Self::new(Phase::PLUS_ONE, letters)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&l| l != Letter::I).count()
    }

    /// Qubits carrying a non-identity letter.
    pub fn support(&self) -> Vec<usize> {
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != Letter::I)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    pub fn negate(&self) -> Self {
        Self {
            phase: self.phase.mul(Phase::MINUS_ONE),
            letters: self.letters.clone(),
        }
    }

    fn check_sizes(&self, other: &Self) -> Result<()> {
        if self.n_qubits() != other.n_qubits() {
            return Err(Error::RegisterMismatch {
                left: self.n_qubits(),
                right: other.n_qubits(),
            });
        }
        Ok(())
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_sizes(other)?;
        let mut phase = self.phase.mul(other.phase);
        let letters = self
            .letters
            .iter()
            .zip(&other.letters)
            .map(|(&a, &b)| {
                let (ph, l) = a.mul(b);
                phase = phase.mul(ph);
                l
            })
            .collect();
        Ok(Self { phase, letters })
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        self.check_sizes(other)?;
        let anti = self
            .letters
            .iter()
            .zip(&other.letters)
            .filter(|(a, b)| a.anticommutes(**b))
            .count();
        Ok(anti % 2 == 0)
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let mats: Vec<ComplexMatrix> = self.letters.iter().map(|l| l.matrix()).collect();
        kron_all(&mats)
            .expect("at most four qubits")
            .scale(self.phase.to_complex())
    }

    /// The ±1 eigenspace projectors (I ± M)/2.
    pub fn projectors(&self) -> Result<ProjectorPair> {
        if !self.phase.is_real() || self.is_identity() {
            return Err(Error::NotMeasurable(self.to_string()));
        }
        let m = self.to_matrix();
        let id = ComplexMatrix::identity(m.rows());
        let half = C64::new(0.5, 0.0);
        Ok(ProjectorPair {
            plus: (&id + &m).scale(half),
            minus: (&id - &m).scale(half),
        })
    }
}

/// Product of a list of strings, left to right.
pub fn product(strings: &[PauliString]) -> Result<PauliString> {
    let (first, rest) = strings
        .split_first()
        .ok_or_else(|| Error::InvalidMatrix("empty Pauli product".into()))?;
    rest.iter().try_fold(first.clone(), |acc, s| acc.multiply(s))
}

/// True iff every pair in `strings` commutes.
pub fn compatible_set(strings: &[PauliString]) -> Result<bool> {
    for (i, a) in strings.iter().enumerate() {
        for b in &strings[i + 1..] {
            if !a.commutes(b)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.phase.0 {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{sign}")?;
        for l in &self.letters {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let err = |reason: &str| Error::PauliParse {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let t = text.trim();
        let (phase, body) = if let Some(rest) = t.strip_prefix("+i") {
            (Phase::PLUS_I, rest)
        } else if let Some(rest) = t.strip_prefix("-i") {
            (Phase::MINUS_I, rest)
        } else if let Some(rest) = t.strip_prefix('+') {
            (Phase::PLUS_ONE, rest)
        } else if let Some(rest) = t.strip_prefix('-') {
            (Phase::MINUS_ONE, rest)
        } else {
            (Phase::PLUS_ONE, t)
        };
        if body.is_empty() {
            return Err(err("no letters"));
        }
        let letters = body
            .chars()
            .map(|c| Letter::from_char(c).ok_or_else(|| err(&format!("bad letter {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        PauliString::new(phase, letters).map_err(|_| err("register size must be 1..=4"))
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorPair {
    pub plus: ComplexMatrix,
    pub minus: ComplexMatrix,
}

impl ProjectorPair {
    pub fn for_outcome(&self, outcome: i8) -> &ComplexMatrix {
        if outcome > 0 {
            &self.plus
        } else {
            &self.minus
        }
    }
}

/// The named observables of the three-spin register.
pub mod observables {
    use super::*;

    fn parse(s: &str) -> PauliString {
        s.parse().expect("static Pauli string")
    }

    /// X on spin `k` (0-based).
    pub fn x(k: usize) -> PauliString {
        PauliString::single(Letter::X, k, 3).expect("k < 3")
    }

    /// Y on spin `k` (0-based).
    pub fn y(k: usize) -> PauliString {
        PauliString::single(Letter::Y, k, 3).expect("k < 3")
    }

    pub fn p1() -> PauliString {
        parse("+XYY")
    }

    pub fn p2() -> PauliString {
        parse("+YXY")
    }

    pub fn p3() -> PauliString {
        parse("+YYX")
    }

    pub fn p4() -> PauliString {
        parse("+XXX")
    }

    /// p₁…p₄ in measurement order.
    pub fn parities() -> [PauliString; 4] {
        [p1(), p2(), p3(), p4()]
    }

    /// The five contexts of the eight-dimensional noncontextuality
    /// inequality. The first four hold three single-spin observables followed
    /// by the parity they multiply to; the fifth holds the four parities.
    pub fn contexts() -> [Vec<PauliString>; 5] {
        [
            vec![x(0), y(1), y(2), p1()],
            vec![y(0), x(1), y(2), p2()],
            vec![y(0), y(1), x(2), p3()],
            vec![x(0), x(1), x(2), p4()],
            vec![p1(), p2(), p3(), p4()],
        ]
    }
}
