use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Factorized parameters of a readout: same-state preservation `q` and
/// assignment fidelity `f` per pre-measurement state, with flip and
/// assignment conditionally independent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutFactors {
    pub q0: f64,
    pub q1: f64,
    pub f0: f64,
    pub f1: f64,
}

/// Single-shot ancilla readout with backaction.
///
/// `table[s][a][s_post]` is the joint probability of assigning `a` and
/// leaving the ancilla in `s_post` given pre-measurement state `s`
/// (0 ≡ m_s=0, 1 ≡ m_s=−1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    table: [[[f64; 2]; 2]; 2],
    factors: Option<ReadoutFactors>,
    /// Dephasing strength applied to each coupled nuclear spin when the
    /// ancilla flips during readout.
    pub dephase_on_flip: [f64; 3],
}

impl ReadoutModel {
    pub fn factorized(factors: ReadoutFactors, dephase_on_flip: [f64; 3]) -> Result<Self> {
        let ReadoutFactors { q0, q1, f0, f1 } = factors;
        for (name, v) in [("readout.q0", q0), ("readout.q1", q1), ("readout.f0", f0), ("readout.f1", f1)] {
            check_probability(name, v)?;
        }
        let mut table = [[[0.0; 2]; 2]; 2];
        for (s, (q, f)) in [(q0, f0), (q1, f1)].into_iter().enumerate() {
            for a in 0..2 {
                let pa = if a == s { f } else { 1.0 - f };
                for sp in 0..2 {
                    let ps = if sp == s { q } else { 1.0 - q };
                    table[s][a][sp] = pa * ps;
                }
            }
        }
        let mut m = Self::from_table(table, dephase_on_flip)?;
        m.factors = Some(factors);
        Ok(m)
    }

    pub fn from_table(table: [[[f64; 2]; 2]; 2], dephase_on_flip: [f64; 3]) -> Result<Self> {
        for (s, row) in table.iter().enumerate() {
            let mut sum = 0.0;
            for (a, pair) in row.iter().enumerate() {
                for (sp, &p) in pair.iter().enumerate() {
                    check_probability(&format!("readout.table[s={s}][a={a}][s'={sp}]"), p)?;
                    sum += p;
                }
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidReadout(format!(
                    "row for pre-state {s} sums to {sum}"
                )));
            }
        }
        for (k, &d) in dephase_on_flip.iter().enumerate() {
            check_probability(&format!("readout.dephase_on_flip[{k}]"), d)?;
        }
        Ok(Self {
            table,
            factors: None,
            dephase_on_flip,
        })
    }

    /// Perfect assignment and no backaction.
    pub fn ideal() -> Self {
        Self::factorized(
            ReadoutFactors {
                q0: 1.0,
                q1: 1.0,
                f0: 1.0,
                f1: 1.0,
            },
            [1.0; 3],
        )
        .expect("valid")
    }

    pub fn table(&self) -> &[[[f64; 2]; 2]; 2] {
        &self.table
    }

    pub fn factors(&self) -> Option<ReadoutFactors> {
        self.factors
    }

    /// p(a, s′ | s)
    pub fn prob(&self, s: usize, a: usize, s_post: usize) -> f64 {
        self.table[s][a][s_post]
    }

    /// Probability that the post-measurement state equals the pre-state.
    pub fn same_state_preservation(&self, s: usize) -> f64 {
        self.table[s][0][s] + self.table[s][1][s]
    }

    /// Probability that the readout reports the pre-state.
    pub fn assignment_fidelity(&self, s: usize) -> f64 {
        self.table[s][s][0] + self.table[s][s][1]
    }

    /// Probability that the post-state matches the assigned value, given `s`.
    pub fn projectiveness(&self, s: usize) -> f64 {
        self.table[s][0][0] + self.table[s][1][1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorized_marginals() {
        let m = ReadoutModel::factorized(
            ReadoutFactors {
                q0: 0.943,
                q1: 0.991,
                f0: 0.95,
                f1: 0.995,
            },
            [1.0; 3],
        )
        .unwrap();
        assert!((m.same_state_preservation(0) - 0.943).abs() < 1e-15);
        assert!((m.same_state_preservation(1) - 0.991).abs() < 1e-15);
        assert!((m.assignment_fidelity(0) - 0.95).abs() < 1e-15);
        assert!((m.assignment_fidelity(1) - 0.995).abs() < 1e-15);
        for s in 0..2 {
            let total: f64 = m.table()[s].iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        let mut t = *ReadoutModel::ideal().table();
        t[0][0][0] = 0.9;
        assert!(matches!(ReadoutModel::from_table(t, [1.0; 3]), Err(Error::InvalidReadout(_))));
        t[0][0][0] = 1.2;
        assert!(ReadoutModel::from_table(t, [1.0; 3]).is_err());
        let bad = ReadoutFactors {
            q0: 1.2,
            q1: 1.0,
            f0: 1.0,
            f1: 1.0,
        };
        let err = ReadoutModel::factorized(bad, [1.0; 3]).unwrap_err();
        assert!(err.to_string().contains("readout.q0"));
    }
}
