//! Independent oracles: central finite differences, a sort-based k-th-largest,
//! a brute-force convolution and straight scalar transcriptions of every
//! activation. None of them share code with the implementations they check.

mod reference;
mod suite;

pub use reference::{activation_reference, conv2d_reference, ScalarActivation};
pub use suite::{activation_gradcheck, checked_kinds, network_gradcheck, Fault, SuiteOptions, GRADCHECK_NETWORK};

use std::fmt;

use crate::error::{Error, Result};

/// Kink exclusion radius used by every finite-difference check.
pub const KINK_RADIUS: f64 = 1e-3;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Relative error budget for analytic vs numeric gradients.
pub const GRAD_TOLERANCE: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Central differences `(f(o + h e_i) - f(o - h e_i)) / 2h` for every coordinate.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut o = params.to_vec();
    let mut grad = Vec::with_capacity(o.len());
    for i in 0..o.len() {
        let orig = o[i];
        o[i] = orig + step;
        let plus = f(&o);
        o[i] = orig - step;
        let minus = f(&o);
        o[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite { op: "fd_gradient" });
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// k-th largest value, `k` 1-based, duplicates counted individually.
pub fn kth_largest_oracle(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!(
            "k = {k} out of range for {} values",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[k - 1])
}

/// Worst analytic-vs-numeric disagreement for one named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst element (within its tensor).
    pub offending_index: Option<usize>,
    pub step: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn new(tolerance: f64) -> Self {
        GradCheckReport {
            tolerance,
            entries: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.entries.iter().filter(|e| !e.passed)
    }

    /// Folds one analytic/numeric pair into the entry called `name`.
    pub fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let err = rel_error(analytic, numeric);
        let tol = self.tolerance;
        let entry = match self.entries.iter_mut().position(|e| e.name == name) {
            Some(i) => &mut self.entries[i],
            None => {
                self.entries.push(ParamCheck {
                    name: name.to_string(),
                    max_rel_error: 0.0,
                    offending_index: None,
                    step: FD_STEP,
                    checked: 0,
                    passed: true,
                });
                self.entries.last_mut().expect("just pushed")
            }
        };
        entry.checked += 1;
        if entry.offending_index.is_none() || err > entry.max_rel_error {
            entry.max_rel_error = err;
            entry.offending_index = Some(index);
        }
        entry.passed = entry.max_rel_error <= tol;
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.entries.extend(other.entries);
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<28} {:>12} {:>8} {:>9} {:>8}  result",
            "parameter", "max_rel_err", "index", "step", "checked"
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<28} {:>12.3e} {:>8} {:>9.0e} {:>8}  {}",
                e.name,
                e.max_rel_error,
                e.offending_index.map_or("-".to_string(), |i| i.to_string()),
                e.step,
                e.checked,
                if e.passed { "pass" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "tolerance {:.0e}: {}",
            self.tolerance,
            if self.passed() { "all passed" } else { "FAILED" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_square() {
        let g = fd_gradient(|o| o[0] * o[0], &[3.0], 1e-6).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-7);
    }

    #[test]
    fn fd_of_constant_is_zero() {
        let g = fd_gradient(|_| 4.25, &[1.0, -2.0, 3.0], 1e-6).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn fd_rejects_bad_step_and_non_finite() {
        assert!(fd_gradient(|o| o[0], &[1.0], 0.0).is_err());
        assert!(matches!(
            fd_gradient(|o| 1.0 / (o[0] - 1e-6), &[0.0], 1e-6),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn fd_matches_srelu_a_r_gradient() {
        // h(2) with t_r=1, a_r=o, t_l=-1, a_l=0.1 -> 1 + o * (2 - 1)
        let h = |o: &[f64]| ScalarActivation::srelu(1.0, o[0], -1.0, 0.1).eval(2.0);
        let g = fd_gradient(h, &[0.5], 1e-6).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn kth_largest_cases() {
        let x = [5.0, 3.0, 8.0, 1.0];
        assert_eq!(kth_largest_oracle(&x, 2).unwrap(), 5.0);
        assert_eq!(kth_largest_oracle(&x, 1).unwrap(), 8.0);
        assert_eq!(kth_largest_oracle(&x, 4).unwrap(), 1.0);
        assert_eq!(kth_largest_oracle(&[7.0, 7.0, 7.0], 2).unwrap(), 7.0);
        assert!(kth_largest_oracle(&x, 0).is_err());
        assert!(kth_largest_oracle(&x, 5).is_err());
    }

    #[test]
    fn rel_error_floor() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert_eq!(rel_error(1.0, 1.0), 0.0);
        assert!((rel_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn report_tracks_worst_entry() {
        let mut r = GradCheckReport::new(1e-5);
        r.record("w", 0, 1.0, 1.0);
        r.record("w", 1, 1.0, 1.5);
        r.record("w", 2, 1.0, 1.0 + 1e-9);
        let e = &r.entries[0];
        assert_eq!(e.offending_index, Some(1));
        assert_eq!(e.checked, 3);
        assert!(!r.passed());
        assert!(r.to_string().contains("FAIL"));
    }
}
