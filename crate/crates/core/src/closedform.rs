//! Analytic thresholds and feasibility conditions.
//!
//! Feasibility predicates use strict inequalities, so a point exactly on the
//! boundary is reported infeasible.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FormulaValue {
    Real(f64),
    Bool(bool),
    Interval(f64, f64),
}

impl std::fmt::Display for FormulaValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormulaValue::Real(v) => write!(f, "{v:.12}"),
            FormulaValue::Bool(b) => write!(f, "{b}"),
            FormulaValue::Interval(lo, hi) => write!(f, "[{lo:.12}, {hi:.12}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormulaResult {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    pub value: FormulaValue,
    pub description: &'static str,
}

pub struct FormulaSpec {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub description: &'static str,
}

pub const FORMULAS: &[FormulaSpec] = &[
    FormulaSpec { name: "branciard_feasible", args: &["eta1", "eta2"], description: "eta1 + eta2 < 3 eta1 eta2" },
    FormulaSpec { name: "eberhard_sym", args: &[], description: "symmetric threshold 2/3" },
    FormulaSpec { name: "larsson_cabello_asym", args: &[], description: "threshold 1/2 with one perfect detector" },
    FormulaSpec { name: "hardy_prob", args: &["alpha"], description: "(1-a^2)^2 a^2 / (2-a^2)" },
    FormulaSpec { name: "garbarino_feasible", args: &["eta1", "eta2", "alpha"], description: "eta1 > 2(1-eta2)/a^2" },
    FormulaSpec { name: "bc_chain_sym", args: &["N"], description: "2 / (N cos(pi/2N) + 1)" },
    FormulaSpec { name: "bc_chain_asym", args: &["N"], description: "(N-1) / (N cos(pi/2N))" },
    FormulaSpec {
        name: "quintino_feasible",
        args: &["eta1_0", "eta1_1", "eta2_0", "eta2_1"],
        description: "any of the four setting-dependent conditions",
    },
    FormulaSpec { name: "ch_nsite_threshold", args: &["n"], description: "n / (2n-1)" },
    FormulaSpec { name: "mermin_threshold", args: &["n"], description: "n / (2n-2)" },
    FormulaSpec { name: "mermin_classical_bound", args: &["n"], description: "2^((n-1)/2) for odd n, 2^(n/2) for even n" },
    FormulaSpec { name: "pam_eta_qc", args: &["d", "Istar"], description: "(d-1) / I*" },
    FormulaSpec { name: "pam_eta_dim", args: &["d", "Istar"], description: "I* / d" },
    FormulaSpec { name: "istar_bounds", args: &["d"], description: "d - 2 + sqrt2 <= I* <= d" },
    FormulaSpec { name: "bilocal_scaling", args: &["eta1", "eta2", "B"], description: "sqrt(eta1 eta2) B" },
];

fn domain(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn check_eta(name: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(domain(format!("{name} = {v} outside [0,1]")))
    }
}

fn check_int(name: &str, v: f64, min: u64) -> Result<u64> {
    if v.fract() != 0.0 || v < min as f64 || !v.is_finite() {
        return Err(domain(format!("{name} = {v} must be an integer ≥ {min}")));
    }
    Ok(v as u64)
}

fn check_alpha(v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(domain(format!("alpha = {v} outside (0,1)")))
    }
}

pub fn branciard_feasible(eta1: f64, eta2: f64) -> Result<bool> {
    let (e1, e2) = (check_eta("eta1", eta1)?, check_eta("eta2", eta2)?);
    Ok(e1 + e2 < 3.0 * e1 * e2)
}

pub fn eberhard_sym() -> f64 {
    2.0 / 3.0
}

pub fn larsson_cabello_asym() -> f64 {
    0.5
}

pub fn hardy_prob(alpha: f64) -> Result<f64> {
    let a2 = check_alpha(alpha)?.powi(2);
    Ok((1.0 - a2).powi(2) * a2 / (2.0 - a2))
}

pub fn garbarino_feasible(eta1: f64, eta2: f64, alpha: f64) -> Result<bool> {
    let (e1, e2) = (check_eta("eta1", eta1)?, check_eta("eta2", eta2)?);
    let a = check_alpha(alpha)?;
    Ok(e1 > 2.0 * (1.0 - e2) / (a * a))
}

pub fn bc_chain_sym(n: u64) -> Result<f64> {
    let n = check_int("N", n as f64, 2)? as f64;
    Ok(2.0 / (n * (std::f64::consts::PI / (2.0 * n)).cos() + 1.0))
}

pub fn bc_chain_asym(n: u64) -> Result<f64> {
    let n = check_int("N", n as f64, 2)? as f64;
    Ok((n - 1.0) / (n * (std::f64::consts::PI / (2.0 * n)).cos()))
}

pub fn quintino_feasible(e10: f64, e11: f64, e20: f64, e21: f64) -> Result<bool> {
    let e10 = check_eta("eta1_0", e10)?;
    let e11 = check_eta("eta1_1", e11)?;
    let e20 = check_eta("eta2_0", e20)?;
    let e21 = check_eta("eta2_1", e21)?;
    let conds = [
        e10 * e20 + e10 * e21 + e11 * e20 - e10 - e20,
        e10 * e21 + e10 * e20 + e11 * e21 - e10 - e21,
        e11 * e20 + e11 * e21 + e10 * e20 - e11 - e20,
        e11 * e21 + e11 * e20 + e10 * e21 - e11 - e21,
    ];
    Ok(conds.iter().any(|c| *c > 0.0))
}

pub fn ch_nsite_threshold(n: u64) -> Result<f64> {
    let n = check_int("n", n as f64, 2)? as f64;
    Ok(n / (2.0 * n - 1.0))
}

pub fn mermin_threshold(n: u64) -> Result<f64> {
    let n = check_int("n", n as f64, 2)? as f64;
    Ok(n / (2.0 * n - 2.0))
}

pub fn mermin_classical_bound(n: u64) -> Result<f64> {
    let n = check_int("n", n as f64, 2)?;
    let e = if n % 2 == 1 { (n - 1) as f64 / 2.0 } else { n as f64 / 2.0 };
    Ok(2f64.powf(e))
}

pub fn pam_eta_qc(d: u64, istar: f64) -> Result<f64> {
    let d = check_int("d", d as f64, 2)? as f64;
    if !(istar > 0.0) {
        return Err(domain(format!("Istar = {istar} must be positive")));
    }
    Ok((d - 1.0) / istar)
}

pub fn pam_eta_dim(d: u64, istar: f64) -> Result<f64> {
    let d = check_int("d", d as f64, 2)? as f64;
    if !(istar > 0.0) {
        return Err(domain(format!("Istar = {istar} must be positive")));
    }
    Ok(istar / d)
}

pub fn istar_bounds(d: u64) -> Result<(f64, f64)> {
    let d = check_int("d", d as f64, 2)? as f64;
    Ok((d - 2.0 + std::f64::consts::SQRT_2, d))
}

pub fn bilocal_scaling(eta1: f64, eta2: f64, b: f64) -> Result<f64> {
    let (e1, e2) = (check_eta("eta1", eta1)?, check_eta("eta2", eta2)?);
    Ok((e1 * e2).sqrt() * b)
}

/// Dispatch by name with positional arguments in the order listed in
/// [`FORMULAS`].
pub fn formula(name: &str, args: &[f64]) -> Result<FormulaResult> {
    let spec = FORMULAS
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| domain(format!("unknown formula '{name}'")))?;
    if args.len() != spec.args.len() {
        return Err(domain(format!("{name} takes {} arguments ({}), got {}", spec.args.len(), spec.args.join(", "), args.len())));
    }
    let int = |k: usize| check_int(spec.args[k], args[k], 2);
    use FormulaValue::*;
    let value = match name {
        "branciard_feasible" => Bool(branciard_feasible(args[0], args[1])?),
        "eberhard_sym" => Real(eberhard_sym()),
        "larsson_cabello_asym" => Real(larsson_cabello_asym()),
        "hardy_prob" => Real(hardy_prob(args[0])?),
        "garbarino_feasible" => Bool(garbarino_feasible(args[0], args[1], args[2])?),
        "bc_chain_sym" => Real(bc_chain_sym(int(0)?)?),
        "bc_chain_asym" => Real(bc_chain_asym(int(0)?)?),
        "quintino_feasible" => Bool(quintino_feasible(args[0], args[1], args[2], args[3])?),
        "ch_nsite_threshold" => Real(ch_nsite_threshold(int(0)?)?),
        "mermin_threshold" => Real(mermin_threshold(int(0)?)?),
        "mermin_classical_bound" => Real(mermin_classical_bound(int(0)?)?),
        "pam_eta_qc" => Real(pam_eta_qc(int(0)?, args[1])?),
        "pam_eta_dim" => Real(pam_eta_dim(int(0)?, args[1])?),
        "istar_bounds" => {
            let (lo, hi) = istar_bounds(int(0)?)?;
            Interval(lo, hi)
        }
        "bilocal_scaling" => Real(bilocal_scaling(args[0], args[1], args[2])?),
        _ => unreachable!("formula table and dispatch disagree"),
    };
    Ok(FormulaResult {
        name: name.to_string(),
        inputs: spec.args.iter().map(|a| a.to_string()).zip(args.iter().copied()).collect(),
        value,
        description: spec.description,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoted_values() {
        assert!((ch_nsite_threshold(2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((bc_chain_sym(2).unwrap() - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert_eq!(mermin_threshold(3).unwrap(), 0.75);
        assert!(garbarino_feasible(0.01, 1.0, 0.5).unwrap());
        assert!(!branciard_feasible(2.0 / 3.0, 2.0 / 3.0).unwrap());
        assert_eq!(mermin_classical_bound(3).unwrap(), 2.0);
        assert_eq!(mermin_classical_bound(4).unwrap(), 4.0);
    }

    #[test]
    fn domain_errors() {
        assert!(branciard_feasible(1.2, 0.5).is_err());
        assert!(hardy_prob(1.0).is_err());
        assert!(ch_nsite_threshold(1).is_err());
        assert!(formula("bc_chain_sym", &[2.5]).is_err());
        assert!(formula("eberhard_sym", &[1.0]).is_err());
        assert!(formula("nope", &[]).is_err());
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let r = formula("bc_chain_asym", &[3.0]).unwrap();
        assert_eq!(r.value, FormulaValue::Real(bc_chain_asym(3).unwrap()));
        assert_eq!(r.inputs, vec![("N".to_string(), 3.0)]);
        for spec in FORMULAS {
            assert!(spec.args.iter().all(|a| !a.is_empty()), "{}", spec.name);
        }
    }
}
