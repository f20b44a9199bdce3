//! Small dense complex linear algebra for registers of at most four qubits.
//!
//! Qubit 0 is the leftmost Kronecker factor, i.e. the most significant bit
//! of a basis index. The electron ancilla, when present, is qubit 3.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance for density-matrix validation (Hermiticity, trace).
pub const VALIDATION_TOL: f64 = 1e-10;
/// Most negative eigenvalue still accepted as positive semidefinite.
pub const EIGEN_TOL: f64 = 1e-9;
/// Tolerance for exact algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;

const MAX_ENTRIES: usize = 1 << 16;
pub const MAX_QUBITS: usize = 4;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix("zero dimension".into()));
        }
        if rows.saturating_mul(cols) > MAX_ENTRIES {
            return Err(Error::Oversized { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// |v⟩⟨w|
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        let mut m = Self::zeros(v.len(), w.len());
        for (i, a) in v.iter().enumerate() {
            for (j, b) in w.iter().enumerate() {
                m[(i, j)] = a * b.conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * z).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        Ok(self.matmul_unchecked(other))
    }

    pub(crate) fn matmul_unchecked(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// K·M·K†
    pub(crate) fn conjugate_by(&self, m: &Self) -> Self {
        self.matmul_unchecked(m).matmul_unchecked(&self.adjoint())
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest elementwise deviation |M_ij − conj(M_ji)|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and the unitary whose columns
    /// are the corresponding eigenvectors.
    pub fn eigh(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        if !self.is_square() {
            return Err(Error::InvalidMatrix("eigh needs a square matrix".into()));
        }
        Ok(jacobi_eigh(self))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.eigh().map(|(vals, _)| vals)
    }

    /// Column `c` as a vector.
    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    /// Panics on a dimension mismatch; use [`ComplexMatrix::matmul`] for a
    /// checked product.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        self.matmul_unchecked(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r.saturating_mul(c) <= MAX_ENTRIES => (r, c),
        _ => {
            return Err(Error::Oversized {
                rows: a.rows.saturating_mul(b.rows),
                cols: a.cols.saturating_mul(b.cols),
            })
        }
    };
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let x = a[(ar, ac)];
            if x == ZERO {
                continue;
            }
            for br in 0..b.rows {
                for bc in 0..b.cols {
                    out[(ar * b.rows + br, ac * b.cols + bc)] = x * b[(br, bc)];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of a list of factors, leftmost first.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut it = factors.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidMatrix("empty Kronecker product".into()))?
        .clone();
    it.try_fold(first, |acc, m| kron(&acc, m))
}

/// Embeds a single-qubit operator on `qubit` of an `n`-qubit register.
pub fn embed(op: &ComplexMatrix, qubit: usize, n: usize) -> Result<ComplexMatrix> {
    if qubit >= n {
        return Err(Error::QubitSelection(format!("qubit {qubit} of {n}")));
    }
    let id = ComplexMatrix::identity(2);
    let factors: Vec<&ComplexMatrix> = (0..n).map(|k| if k == qubit { op } else { &id }).collect();
    kron_all(factors)
}

fn jacobi_eigh(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = m.rows;
    let mut a = m.clone();
    // Symmetrize so that round-off asymmetry does not leak into the result.
    for i in 0..n {
        for j in i..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phase = apq / r; // e^{iα}
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (2.0 * r).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                let ph_c = phase.conj(); // e^{-iα}

                // A ← A·U, V ← V·U with U = [[c, s], [-s e^{-iα}, c e^{-iα}]]
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * ph_c * s;
                    a[(k, q)] = akp * s + akq * ph_c * c;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * ph_c * s;
                    v[(k, q)] = vkp * s + vkq * ph_c * c;
                }
                // A ← U†·A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * phase * s;
                    a[(q, k)] = apk * s + aqk * phase * c;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, new_c)] = v[(r, old_c)];
        }
    }
    (values, vectors)
}

/// A normalized pure state on a register of 1..=4 qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() || !(2..=1 << MAX_QUBITS).contains(&dim) {
            return Err(Error::InvalidMatrix(format!(
                "state dimension {dim} is not 2^n with 1 <= n <= 4"
            )));
        }
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::InvalidMatrix(format!("squared norm {norm} != 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `amplitudes`; fails on a (near) zero vector.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-14 {
            return Err(Error::InvalidMatrix("cannot normalize a zero vector".into()));
        }
        Self::new(amplitudes.into_iter().map(|z| z / norm).collect())
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::QubitCount(n_qubits));
        }
        let dim = 1 << n_qubits;
        if index >= dim {
            return Err(Error::QubitSelection(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { amplitudes: amps })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn with_global_phase(&self, angle: f64) -> Self {
        let ph = C64::from_polar(1.0, angle);
        Self {
            amplitudes: self.amplitudes.iter().map(|z| z * ph).collect(),
        }
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            n_qubits: self.n_qubits(),
            matrix: self.projector(),
        }
    }
}

/// One failed density-matrix invariant and its magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NotSquare { rows: usize, cols: usize },
    Dimension(usize),
    Hermiticity(f64),
    Trace(f64),
    NegativeEigenvalue(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotSquare { rows, cols } => write!(f, "not square ({rows}x{cols})"),
            Violation::Dimension(d) => write!(f, "dimension {d} is not 2^n, 1 <= n <= 4"),
            Violation::Hermiticity(e) => write!(f, "Hermiticity violated by {e:.3e}"),
            Violation::Trace(e) => write!(f, "trace off by {e:.3e}"),
            Violation::NegativeEigenvalue(e) => write!(f, "eigenvalue {e:.3e} < 0"),
        }
    }
}

/// A validated density matrix over `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix produced by a trace-preserving computation on a valid
    /// input; skips the eigen-decomposition.
    pub(crate) fn from_trusted(matrix: ComplexMatrix) -> Self {
        debug_assert!(matrix.is_square() && matrix.rows().is_power_of_two());
        Self {
            n_qubits: matrix.rows().trailing_zeros() as usize,
            matrix,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Tr(ρ·O)
    pub fn expectation(&self, op: &ComplexMatrix) -> Result<C64> {
        if op.rows() != self.dim() || op.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.rows(),
            });
        }
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += self.matrix[(i, j)] * op[(j, i)];
            }
        }
        Ok(acc)
    }

    /// Tensor product with another register, self on the left.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let n = self.n_qubits + other.n_qubits;
        if n > MAX_QUBITS {
            return Err(Error::QubitCount(n));
        }
        Ok(Self::from_trusted(kron(&self.matrix, &other.matrix)?))
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        let diff = &self.matrix - &other.matrix;
        Ok(0.5 * diff.eigenvalues()?.iter().map(|x| x.abs()).sum::<f64>())
    }
}

pub fn maximally_mixed(n: usize) -> Result<DensityMatrix> {
    if !(1..=MAX_QUBITS).contains(&n) {
        return Err(Error::QubitCount(n));
    }
    let dim = 1 << n;
    Ok(DensityMatrix {
        n_qubits: n,
        matrix: ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)),
    })
}

/// Random state of the given rank: a normalized sum of `rank` weighted
/// projectors onto Gaussian vectors. Rank 1 gives a pure state.
pub fn random_density<R: rand::Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> Result<DensityMatrix> {
    if !(1..=MAX_QUBITS).contains(&n) {
        return Err(Error::QubitCount(n));
    }
    let dim = 1 << n;
    let mut acc = ComplexMatrix::zeros(dim, dim);
    for _ in 0..rank.max(1) {
        let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let w: f64 = if rank <= 1 { 1.0 } else { rng.gen::<f64>() };
        acc = &acc + &ComplexMatrix::outer(&v, &v).scale(C64::new(w, 0.0));
    }
    let t = acc.trace().re;
    let mut matrix = acc.scale(C64::new(1.0 / t, 0.0));
    // Enforce exact Hermiticity.
    let adj = matrix.adjoint();
    matrix = (&matrix + &adj).scale(C64::new(0.5, 0.0));
    Ok(DensityMatrix { n_qubits: n, matrix })
}

/// Checks every density-matrix invariant, returning all violations found.
pub fn validate_density(m: ComplexMatrix) -> std::result::Result<DensityMatrix, Vec<Violation>> {
    if !m.is_square() {
        return Err(vec![Violation::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        }]);
    }
    let dim = m.rows();
    if !dim.is_power_of_two() || !(2..=1 << MAX_QUBITS).contains(&dim) {
        return Err(vec![Violation::Dimension(dim)]);
    }
    let mut violations = Vec::new();
    let herm = m.hermiticity_error();
    if herm > VALIDATION_TOL {
        violations.push(Violation::Hermiticity(herm));
    }
    let tr = m.trace();
    let tr_err = (tr - ONE).norm();
    if tr_err > VALIDATION_TOL {
        violations.push(Violation::Trace(tr_err));
    }
    let (vals, _) = jacobi_eigh(&m);
    if let Some(&min) = vals.first() {
        if min < -EIGEN_TOL {
            violations.push(Violation::NegativeEigenvalue(min));
        }
    }
    if violations.is_empty() {
        Ok(DensityMatrix::from_trusted(m))
    } else {
        Err(violations)
    }
}

impl TryFrom<ComplexMatrix> for DensityMatrix {
    type Error = Error;
    fn try_from(m: ComplexMatrix) -> Result<Self> {
        validate_density(m).map_err(Error::NotDensity)
    }
}

/// Reduced state on the qubits in `keep` (in ascending qubit order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits;
    if keep.is_empty() {
        return Err(Error::QubitSelection("empty keep set".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&q| q >= n) {
        return Err(Error::QubitSelection(format!("qubit {bad} of {n}")));
    }
    let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
    Ok(DensityMatrix::from_trusted(trace_out(&rho.matrix, n, &kept, &traced)))
}

fn trace_out(m: &ComplexMatrix, n: usize, kept: &[usize], traced: &[usize]) -> ComplexMatrix {
    let bit = |q: usize| 1usize << (n - 1 - q);
    let compose = |sub: usize, qubits: &[usize]| -> usize {
        let k = qubits.len();
        qubits
            .iter()
            .enumerate()
            .filter(|(pos, _)| sub & (1 << (k - 1 - pos)) != 0)
            .map(|(_, &q)| bit(q))
            .sum()
    };
    let dk = 1 << kept.len();
    let dt = 1 << traced.len();
    let mut out = ComplexMatrix::zeros(dk, dk);
    for i in 0..dk {
        let ii = compose(i, kept);
        for j in 0..dk {
            let jj = compose(j, kept);
            let mut acc = ZERO;
            for t in 0..dt {
                let tt = compose(t, traced);
                acc += m[(ii | tt, jj | tt)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// ⟨ψ|ρ|ψ⟩, clamped to [0, 1].
pub fn fidelity(psi: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    if psi.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: psi.dim(),
        });
    }
    let rho_psi = rho.matrix.apply(psi.amplitudes())?;
    let f = psi.inner(&StateVector {
        amplitudes: rho_psi,
    });
    if f.im.abs() > VALIDATION_TOL {
        return Err(Error::Numerical(format!("fidelity has imaginary part {}", f.im)));
    }
    Ok(f.re.clamp(0.0, 1.0))
}
