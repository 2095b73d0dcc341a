//! Explicit Runge–Kutta tableaus and their complete-positivity check.
//!
//! The integrating-factor step built from `(A, b, c)` is a sum of terms
//! `K ρ K†` weighted by products of entries of `A` and `b`, so it is CP
//! whenever those entries are non-negative.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on `Σ b_i = 1` and `c_i = Σ_j a_ij`.
const CONSISTENCY_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    name: String,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    order: usize,
}

impl ButcherTableau {
    /// Checks shape, explicitness and consistency. CP validity is a separate
    /// question answered by [`validate_tableau`].
    pub fn new(
        name: impl Into<String>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        order: usize,
    ) -> Result<Self> {
        let tab = ButcherTableau {
            name: name.into(),
            a,
            b,
            c,
            order,
        };
        tab.check_consistency()?;
        Ok(tab)
    }

    fn check_consistency(&self) -> Result<()> {
        let s = self.b.len();
        let bad = |msg: String| Err(Error::InconsistentTableau(msg));
        if s == 0 {
            return bad("tableau has no stages".into());
        }
        if self.c.len() != s || self.a.len() != s {
            return bad(format!(
                "stage count mismatch: A has {} rows, b has {}, c has {}",
                self.a.len(),
                s,
                self.c.len()
            ));
        }
        let all = self
            .a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(&self.c);
        if all.clone().any(|x| !x.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != s {
                return bad(format!("row {i} of A has {} entries, expected {s}", row.len()));
            }
            if let Some(j) = (i..s).find(|&j| row[j] != 0.0) {
                return bad(format!("A[{i}][{j}] is on or above the diagonal (not explicit)"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - self.c[i]).abs() > CONSISTENCY_TOLERANCE {
                return bad(format!("c[{i}] = {} but row sum of A is {sum}", self.c[i]));
            }
        }
        let bsum: f64 = self.b.iter().sum();
        if (bsum - 1.0).abs() > CONSISTENCY_TOLERANCE {
            return bad(format!("weights sum to {bsum}, expected 1"));
        }
        if self.order == 0 {
            return bad("declared order must be at least 1".into());
        }
        Ok(())
    }

    pub fn forward_euler() -> Self {
        Self::new("euler", vec![vec![0.0]], vec![1.0], vec![0.0], 1).expect("valid tableau")
    }

    pub fn heun() -> Self {
        Self::new(
            "heun",
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
            vec![0.0, 1.0],
            2,
        )
        .expect("valid tableau")
    }

    /// Three-stage third-order strong-stability-preserving method of Shu and Osher.
    pub fn ssprk3() -> Self {
        Self::new(
            "ssprk3",
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.25, 0.25, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            vec![0.0, 1.0, 0.5],
            3,
        )
        .expect("valid tableau")
    }

    /// The classic fourth-order method.
    pub fn rk4() -> Self {
        Self::new(
            "rk4",
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            vec![0.0, 0.5, 0.5, 1.0],
            4,
        )
        .expect("valid tableau")
    }

    pub fn builtins() -> Vec<Self> {
        vec![Self::forward_euler(), Self::heun(), Self::ssprk3(), Self::rk4()]
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "euler" | "forward-euler" => Some(Self::forward_euler()),
            "heun" | "heun2" => Some(Self::heun()),
            "ssprk3" => Some(Self::ssprk3()),
            "rk4" | "classic-rk4" => Some(Self::rk4()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Every flow coefficient `c_i`, `c_i − c_j` (for `a_ij ≠ 0`), `1 − c_i`
    /// (for `b_i ≠ 0`) and `1` that a step with this tableau evaluates.
    pub fn flow_coefficients(&self) -> Vec<f64> {
        let s = self.stages();
        let mut out = vec![1.0];
        for i in 0..s {
            out.push(self.c[i]);
            for j in 0..i {
                if self.a[i][j] != 0.0 {
                    out.push(self.c[i] - self.c[j]);
                }
            }
            if self.b[i] != 0.0 {
                out.push(1.0 - self.c[i]);
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

impl fmt::Display for ButcherTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (s={}, order {})", self.name, self.stages(), self.order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: EntryKind,
    /// `(i, j)` for `A`, `(i, 0)` for `b`.
    pub index: (usize, usize),
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpValidity {
    /// All entries of `A` and `b` are non-negative.
    pub is_cp_valid: bool,
    pub violations: Vec<Violation>,
    /// `0 ≤ c_i ≤ 1` and `c_i ≥ c_j` for every pair with `a_ij ≠ 0`, i.e.
    /// every flow offset is a forward flow.
    pub offsets_ok: bool,
}

impl CpValidity {
    pub fn describe(&self) -> String {
        self.violations
            .iter()
            .map(|v| match v.kind {
                EntryKind::A => format!("a[{}][{}] = {}", v.index.0, v.index.1, v.value),
                EntryKind::B => format!("b[{}] = {}", v.index.0, v.value),
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

pub fn validate_tableau(tab: &ButcherTableau) -> Result<CpValidity> {
    tab.check_consistency()?;
    let s = tab.stages();
    let mut violations = Vec::new();
    for i in 0..s {
        for j in 0..i {
            if tab.a[i][j] < 0.0 {
                violations.push(Violation {
                    kind: EntryKind::A,
                    index: (i, j),
                    value: tab.a[i][j],
                });
            }
        }
    }
    for (i, &b) in tab.b.iter().enumerate() {
        if b < 0.0 {
            violations.push(Violation {
                kind: EntryKind::B,
                index: (i, 0),
                value: b,
            });
        }
    }
    let offsets_ok = tab.c.iter().all(|&c| (0.0..=1.0).contains(&c))
        && (0..s).all(|i| (0..i).all(|j| tab.a[i][j] == 0.0 || tab.c[i] >= tab.c[j]));
    Ok(CpValidity {
        is_cp_valid: violations.is_empty(),
        violations,
        offsets_ok,
    })
}

/// Errors unless the tableau is CP-valid or `force` is set.
pub fn require_cp_valid(tab: &ButcherTableau, force: bool) -> Result<CpValidity> {
    let validity = validate_tableau(tab)?;
    if !validity.is_cp_valid && !force {
        return Err(Error::NotCpValid {
            name: tab.name().to_string(),
            reason: format!("negative coefficients {}", validity.describe()),
        });
    }
    Ok(validity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_cp_valid() {
        for tab in ButcherTableau::builtins() {
            let v = validate_tableau(&tab).unwrap();
            assert!(v.is_cp_valid, "{tab}");
            assert!(v.violations.is_empty());
        }
        assert!(validate_tableau(&ButcherTableau::rk4()).unwrap().offsets_ok);
        // Shu–Osher stage 3 evaluates c₃ − c₂ = −½.
        assert!(!validate_tableau(&ButcherTableau::ssprk3()).unwrap().offsets_ok);
    }

    #[test]
    fn negative_weight_is_recorded() {
        let tab = ButcherTableau::new(
            "neg",
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![1.5, -0.5],
            vec![0.0, 1.0],
            1,
        )
        .unwrap();
        let v = validate_tableau(&tab).unwrap();
        assert!(!v.is_cp_valid);
        assert_eq!(
            v.violations,
            vec![Violation {
                kind: EntryKind::B,
                index: (1, 0),
                value: -0.5
            }]
        );
        assert!(require_cp_valid(&tab, false).is_err());
        assert!(require_cp_valid(&tab, true).is_ok());
    }

    #[test]
    fn negative_stage_coefficient_is_recorded() {
        let tab = ButcherTableau::new(
            "neg-a",
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![1.5, -0.5, 0.0],
            ],
            vec![0.25, 0.25, 0.5],
            vec![0.0, 1.0, 1.0],
            2,
        )
        .unwrap();
        let v = validate_tableau(&tab).unwrap();
        assert!(!v.is_cp_valid);
        assert_eq!(v.violations[0].kind, EntryKind::A);
        assert_eq!(v.violations[0].index, (2, 1));
    }

    #[test]
    fn inconsistent_tableaus_are_rejected() {
        let row_sum = ButcherTableau::new(
            "bad-c",
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
            vec![0.0, 0.9],
            2,
        );
        assert!(matches!(row_sum, Err(Error::InconsistentTableau(_))));
        let implicit = ButcherTableau::new("imp", vec![vec![1.0]], vec![1.0], vec![1.0], 1);
        assert!(implicit.is_err());
        let weights = ButcherTableau::new("w", vec![vec![0.0]], vec![0.9], vec![0.0], 1);
        assert!(weights.is_err());
    }

    #[test]
    fn rk4_flow_coefficients() {
        assert_eq!(ButcherTableau::rk4().flow_coefficients(), vec![0.0, 0.5, 1.0]);
        assert_eq!(
            ButcherTableau::ssprk3().flow_coefficients(),
            vec![-0.5, 0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(ButcherTableau::builtin("rk4").unwrap().stages(), 4);
        assert_eq!(ButcherTableau::builtin("heun").unwrap().order(), 2);
        assert!(ButcherTableau::builtin("dopri5").is_none());
    }
}
