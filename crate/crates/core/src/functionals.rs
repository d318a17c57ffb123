//! Named inequality functionals.
//!
//! A linear functional is a coefficient vector over a scenario's flat
//! layout plus a constant. The bilocal IJ expression is the one nonlinear
//! member and is evaluated by [`evaluate_ij`].

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::behaviors::{Behavior, Scenario};
use crate::error::{Error, Result};

pub type Params = Map<String, Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// Violated when value > bound.
    Above,
    /// Violated when value < bound.
    Below,
    /// Violated when |value| > bound.
    AbsAbove,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Linear,
    /// √|I| + √|J| on a bilocal table.
    Ij,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Functional {
    pub name: String,
    pub label: String,
    pub scenario: Scenario,
    pub kind: Kind,
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub classical_bound: f64,
    pub sense: Sense,
}

impl Functional {
    fn linear(name: &str, label: String, scenario: Scenario, bound: f64, sense: Sense) -> Self {
        Functional {
            name: name.to_string(),
            label,
            scenario,
            kind: Kind::Linear,
            coeffs: vec![0.0; scenario.len()],
            constant: 0.0,
            classical_bound: bound,
            sense,
        }
    }

    fn add(&mut self, flat: usize, c: f64) {
        self.coeffs[flat] += c;
    }

    /// Nonzero coefficients as (flat index, weight).
    pub fn terms(&self) -> Vec<(usize, f64)> {
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, c)| (k, *c)).collect()
    }

    pub fn evaluate(&self, b: &Behavior) -> Result<f64> {
        match self.kind {
            Kind::Ij => evaluate_ij(b),
            Kind::Linear => {
                if b.scenario() != self.scenario {
                    return Err(Error::ScenarioMismatch(format!(
                        "{} is defined on {}, behavior is {}",
                        self.name,
                        self.scenario.label(),
                        b.scenario().label()
                    )));
                }
                Ok(self.evaluate_flat(b.probs()))
            }
        }
    }

    /// Linear part on a raw coordinate vector (used for vertices).
    pub fn evaluate_flat(&self, p: &[f64]) -> f64 {
        self.coeffs.iter().zip(p).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }

    /// Same functional on a scenario with more outcomes; the added
    /// outcomes get coefficient zero.
    pub fn embed(&self, target: Scenario) -> Result<Functional> {
        if target == self.scenario || self.kind == Kind::Ij {
            return Ok(self.clone());
        }
        let fits = match (self.scenario, target) {
            (Scenario::Bell { n_a, n_b, n_x, n_y }, Scenario::Bell { n_a: ta, n_b: tb, n_x: tx, n_y: ty }) => {
                n_x == tx && n_y == ty && ta >= n_a && tb >= n_b
            }
            (Scenario::Instrumental { n_x, n_a, n_b }, Scenario::Instrumental { n_x: tx, n_a: ta, n_b: tb }) => {
                n_x == tx && ta >= n_a && tb >= n_b
            }
            (Scenario::Pam { n_x, n_y, n_b }, Scenario::Pam { n_x: tx, n_y: ty, n_b: tb }) => {
                n_x == tx && n_y == ty && tb >= n_b
            }
            _ => false,
        };
        if !fits {
            return Err(Error::ScenarioMismatch(format!(
                "{} on {} cannot be read on {}",
                self.name,
                self.scenario.label(),
                target.label()
            )));
        }
        let mut coeffs = vec![0.0; target.len()];
        for (k, c) in self.terms() {
            coeffs[target.flat_index(&self.scenario.index_tuple(k))?] = c;
        }
        Ok(Functional { scenario: target, coeffs, ..self.clone() })
    }

    /// Positive exactly when `value` violates the classical bound.
    pub fn margin(&self, value: f64) -> f64 {
        match self.sense {
            Sense::Above => value - self.classical_bound,
            Sense::Below => self.classical_bound - value,
            Sense::AbsAbove => value.abs() - self.classical_bound,
        }
    }

    pub fn violates(&self, value: f64) -> bool {
        self.margin(value) > 0.0
    }

    /// Human-readable `Σ c·p(..|..) ≤ bound` form.
    pub fn render(&self) -> String {
        match self.kind {
            Kind::Ij => format!("sqrt|I| + sqrt|J| <= {}", self.classical_bound),
            Kind::Linear => {
                let (op, bound) = match self.sense {
                    Sense::Above => ("<=", self.classical_bound),
                    Sense::Below => (">=", self.classical_bound),
                    Sense::AbsAbove => ("<=", self.classical_bound),
                };
                let lhs = render_terms(&self.scenario, &self.coeffs, self.constant);
                if self.sense == Sense::AbsAbove {
                    format!("|{lhs}| {op} {bound}")
                } else {
                    format!("{lhs} {op} {bound}")
                }
            }
        }
    }
}

/// Readable name of one probability coordinate, e.g. `p(0,1|0,1)` or
/// `p(1|do(0))`.
pub fn coordinate_name(sc: &Scenario, flat: usize) -> String {
    let t = sc.index_tuple(flat);
    let u = |k: usize| t[k].map(|v| v.to_string()).unwrap_or_default();
    match sc {
        Scenario::Bell { .. } => format!("p({},{}|{},{})", u(0), u(1), u(2), u(3)),
        Scenario::Instrumental { .. } => {
            if t[0] == Some(0) {
                format!("p({},{}|{})", u(1), u(2), u(3))
            } else {
                format!("p({}|do({}))", u(2), u(1))
            }
        }
        Scenario::Pam { .. } => format!("p({}|{},{})", u(0), u(1), u(2)),
        Scenario::Bilocal { .. } => format!("p({},{}{},{}|{},{})", u(0), u(1), u(2), u(3), u(4), u(5)),
        Scenario::NParty { n } => {
            let outs: Vec<String> = (0..*n).map(&u).collect();
            let sets: Vec<String> = (*n..2 * n).map(&u).collect();
            format!("p({}|{})", outs.join(""), sets.join(""))
        }
    }
}

pub fn render_terms(sc: &Scenario, coeffs: &[f64], constant: f64) -> String {
    let mut out = String::new();
    for (k, c) in coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let sign = if *c < 0.0 { "-" } else if out.is_empty() { "" } else { "+" };
        let mag = c.abs();
        if !out.is_empty() {
            out.push(' ');
        }
        if mag == 1.0 {
            let _ = write!(out, "{sign}{}", coordinate_name(sc, k));
        } else {
            let _ = write!(out, "{sign}{}*{}", fmt_coeff(mag), coordinate_name(sc, k));
        }
    }
    if constant != 0.0 {
        let _ = write!(out, " {} {}", if constant < 0.0 { "-" } else { "+" }, fmt_coeff(constant.abs()));
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn fmt_coeff(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn get_usize(params: &Params, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
            .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
            .map(|u| u as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("{key} must be a nonnegative integer, got {v}"))),
    }
}

fn get_f64(params: &Params, key: &str) -> Result<Option<f64>> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
            .map(Some)
            .ok_or_else(|| Error::InvalidParameter(format!("{key} must be a number, got {v}"))),
    }
}

fn get_str<'a>(params: &'a Params, key: &str, default: &'a str) -> Result<&'a str> {
    match params.get(key) {
        None => Ok(default),
        Some(Value::String(s)) => Ok(s),
        Some(v) => Err(Error::InvalidParameter(format!("{key} must be a string, got {v}"))),
    }
}

fn check_bit(key: &str, v: usize) -> Result<usize> {
    if v > 1 {
        return Err(Error::InvalidParameter(format!("{key} must be 0 or 1")));
    }
    Ok(v)
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Adds w·E_xy with E_xy = Σ (−1)^{a+b} p(a,b|x,y) on a binary Bell table.
fn add_bell_correlator(f: &mut Functional, x: usize, y: usize, w: f64) {
    let sc = f.scenario;
    for a in 0..2 {
        for b in 0..2 {
            f.add(sc.ix_bell(a, b, x, y), w * sign(a + b));
        }
    }
}

/// Adds w·⟨Π parties⟩ for the setting mask `sets`.
fn add_nparty_correlator(f: &mut Functional, n: usize, sets: usize, w: f64) {
    let sc = f.scenario;
    for outs in 0..1usize << n {
        f.add(sc.ix_nparty(outs, sets), w * sign(outs.count_ones() as usize));
    }
}

fn chsh(params: &Params) -> Result<Functional> {
    let branch = get_str(params, "branch", "abs")?;
    let sc = Scenario::bell(2, 2, 2, 2);
    let (bound, sense) = match branch {
        "abs" => (2.0, Sense::AbsAbove),
        "upper" => (2.0, Sense::Above),
        "lower" => (-2.0, Sense::Below),
        other => return Err(Error::InvalidParameter(format!("chsh branch must be abs, upper or lower, got {other}"))),
    };
    let mut f = Functional::linear("chsh", format!("CHSH ({branch})"), sc, bound, sense);
    for (x, y, w) in [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)] {
        add_bell_correlator(&mut f, x, y, w);
    }
    Ok(f)
}

/// Outcome 2 is the no-click.
fn eberhard() -> Functional {
    let sc = Scenario::bell(3, 3, 2, 2);
    let mut f = Functional::linear("eberhard", "Eberhard E_b".into(), sc, 0.0, Sense::Below);
    f.add(sc.ix_bell(0, 1, 0, 1), 1.0);
    f.add(sc.ix_bell(0, 2, 0, 1), 1.0);
    f.add(sc.ix_bell(1, 0, 1, 0), 1.0);
    f.add(sc.ix_bell(2, 0, 1, 0), 1.0);
    f.add(sc.ix_bell(0, 0, 1, 1), 1.0);
    f.add(sc.ix_bell(0, 0, 0, 0), -1.0);
    f
}

/// Settings A₁, A₂, B₁, B₂ are x, y = 0, 1; relations are mod 3.
fn cglmp3() -> Functional {
    let sc = Scenario::bell(3, 3, 2, 2);
    let mut f = Functional::linear("cglmp3", "CGLMP I3".into(), sc, 2.0, Sense::Above);
    // w·P(A_x = B_y + k)
    let mut add = |x: usize, y: usize, k: i64, w: f64| {
        for b in 0..3i64 {
            let a = (b + k).rem_euclid(3);
            f.add(sc.ix_bell(a as usize, b as usize, x, y), w);
        }
    };
    add(0, 0, 0, 1.0); // P(A1 = B1)
    add(0, 0, -1, -1.0); // P(A1 = B1 − 1)
    add(1, 0, -1, 1.0); // P(B1 = A2 + 1)
    add(1, 0, 0, -1.0); // P(B1 = A2)
    add(1, 1, 0, 1.0); // P(A2 = B2)
    add(1, 1, -1, -1.0); // P(A2 = B2 − 1)
    add(0, 1, 0, 1.0); // P(B2 = A1)
    add(0, 1, 1, -1.0); // P(B2 = A1 − 1)
    f
}

fn mermin3() -> Functional {
    let n = 3;
    let mut f = Functional::linear("mermin3", "Mermin (3 parties)".into(), Scenario::NParty { n }, 2.0, Sense::AbsAbove);
    // ⟨A0B0C1⟩ + ⟨A0B1C0⟩ + ⟨A1B0C0⟩ − ⟨A1B1C1⟩, setting 0 ↔ σx, 1 ↔ σy
    for (sets, w) in [(0b100, 1.0), (0b010, 1.0), (0b001, 1.0), (0b111, -1.0)] {
        add_nparty_correlator(&mut f, n, sets, w);
    }
    f
}

fn svetlichny3() -> Functional {
    let n = 3;
    let mut f =
        Functional::linear("svetlichny3", "Svetlichny (3 parties)".into(), Scenario::NParty { n }, 4.0, Sense::AbsAbove);
    for sets in 0..8usize {
        // M carries the odd-weight masks, M' the even ones
        let w = match sets.count_ones() {
            0 => -1.0,
            1 => 1.0,
            2 => 1.0,
            _ => -1.0,
        };
        add_nparty_correlator(&mut f, n, sets, w);
    }
    f
}

/// Multipartite CH: setting 0 is "A", setting 1 is "B", outcome 1 is the
/// detection event counted by E_S and p_S.
fn ch_nsite(params: &Params) -> Result<Functional> {
    let n = get_usize(params, "n", 3)?;
    if !(2..=4).contains(&n) {
        return Err(Error::InvalidParameter(format!("ch_nsite supports n in [2,4], got {n}")));
    }
    let sc = Scenario::NParty { n };
    let mut f = Functional::linear("ch_nsite", format!("CH ({n} parties)"), sc, 0.0, Sense::Above);
    let all = (1usize << n) - 1;
    for set in 0..1usize << n {
        let k = set.count_ones() as usize;
        if k == 1 {
            f.add(sc.ix_nparty(all, set), 1.0);
        } else if k >= 2 && k % 2 == 0 {
            f.add(sc.ix_nparty(all, set), -1.0);
        }
    }
    // −Σ_{|S|=n−1} p_S with the others measuring A and marginalized
    for s in 0..1usize << n {
        if s.count_ones() as usize != n - 1 {
            continue;
        }
        for outs in 0..1usize << n {
            if outs & s == s {
                f.add(sc.ix_nparty(outs, 0), -1.0);
            }
        }
    }
    f.add(sc.ix_nparty(all, 0), (n - 1) as f64);
    Ok(f)
}

fn pearl(params: &Params) -> Result<Functional> {
    let a = check_bit("a", get_usize(params, "a", 0)?)?;
    let b = check_bit("b", get_usize(params, "b", 0)?)?;
    let x = check_bit("x", get_usize(params, "x", 0)?)?;
    let sc = Scenario::instrumental(2, 2, 2);
    let mut f = Functional::linear("pearl", format!("Pearl (a={a}, b={b}, x={x})"), sc, 1.0, Sense::Above);
    f.add(sc.ix_obs(a, b, x), 1.0);
    f.add(sc.ix_obs(a, b ^ 1, x ^ 1), 1.0);
    Ok(f)
}

/// The second x=1 term is p(a⊕1, b|1). Written with a literal outcome 1
/// it is only valid for b = 1; for b = 0 a deterministic strategy reaches 1.
fn bonet(params: &Params) -> Result<Functional> {
    let a = check_bit("a", get_usize(params, "a", 0)?)?;
    let b = check_bit("b", get_usize(params, "b", 0)?)?;
    let sc = Scenario::instrumental(3, 2, 2);
    let mut f = Functional::linear("bonet", format!("Bonet (a={a}, b={b})"), sc, 0.0, Sense::Above);
    f.add(sc.ix_obs(a, b, 0), 1.0);
    f.add(sc.ix_obs(a, b, 1), -1.0);
    f.add(sc.ix_obs(a ^ 1, b, 1), -1.0);
    f.add(sc.ix_obs(a ^ 1, b ^ 1, 2), -1.0);
    f.add(sc.ix_obs(a, b, 2), -1.0);
    Ok(f)
}

/// `perm` (0..24) selects a relabeling of the four settings.
fn kedagni(params: &Params) -> Result<Functional> {
    let a = check_bit("a", get_usize(params, "a", 0)?)?;
    let b = check_bit("b", get_usize(params, "b", 0)?)?;
    let perm_idx = get_usize(params, "perm", 0)?;
    let perms = permutations(4);
    let perm = perms
        .get(perm_idx)
        .ok_or_else(|| Error::InvalidParameter(format!("perm must be below {}", perms.len())))?
        .clone();
    let sc = Scenario::instrumental(4, 2, 2);
    let mut f = Functional::linear("kedagni", format!("Kedagni (a={a}, b={b}, perm={perm_idx})"), sc, 0.0, Sense::Above);
    let x = |k: usize| perm[k];
    f.add(sc.ix_obs(a, b, x(0)), 1.0);
    f.add(sc.ix_obs(a ^ 1, b, x(0)), 1.0);
    f.add(sc.ix_obs(a, b ^ 1, x(1)), -1.0);
    f.add(sc.ix_obs(a ^ 1, b, x(1)), -1.0);
    f.add(sc.ix_obs(a, b, x(2)), -1.0);
    f.add(sc.ix_obs(a ^ 1, b, x(2)), -1.0);
    f.add(sc.ix_obs(a, b, x(3)), -1.0);
    f.add(sc.ix_obs(a ^ 1, b ^ 1, x(3)), -1.0);
    Ok(f)
}

/// All permutations of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// p(1|do(0)) − p(0,1|1) + p(0,0|0) + p(1,1|0) − p(1,1|1) ≥ 0
fn i222() -> Functional {
    let sc = Scenario::instrumental(2, 2, 2);
    let mut f = Functional::linear("i222", "I222".into(), sc, 0.0, Sense::Below);
    f.add(sc.ix_do(1, 0), 1.0);
    f.add(sc.ix_obs(0, 1, 1), -1.0);
    f.add(sc.ix_obs(0, 0, 0), 1.0);
    f.add(sc.ix_obs(1, 1, 0), 1.0);
    f.add(sc.ix_obs(1, 1, 1), -1.0);
    f
}

/// p(00|1) − p(01|0) + p(02|1) − p(11|0) + p(11|1) + p(1|do(0)) ≥ 0
fn i223() -> Functional {
    let sc = Scenario::instrumental(2, 2, 3);
    let mut f = Functional::linear("i223", "I223".into(), sc, 0.0, Sense::Below);
    f.add(sc.ix_obs(0, 0, 1), 1.0);
    f.add(sc.ix_obs(0, 1, 0), -1.0);
    f.add(sc.ix_obs(0, 2, 1), 1.0);
    f.add(sc.ix_obs(1, 1, 0), -1.0);
    f.add(sc.ix_obs(1, 1, 1), 1.0);
    f.add(sc.ix_do(1, 0), 1.0);
    f
}

/// −p(00|1) − p(01|0) − p(02|1) + p(0|do(1)) − p(10|0) − p(10|1) + 1 ≥ 0
fn i233() -> Functional {
    let sc = Scenario::instrumental(2, 3, 3);
    let mut f = Functional::linear("i233", "I233".into(), sc, 0.0, Sense::Below);
    f.add(sc.ix_obs(0, 0, 1), -1.0);
    f.add(sc.ix_obs(0, 1, 0), -1.0);
    f.add(sc.ix_obs(0, 2, 1), -1.0);
    f.add(sc.ix_do(0, 1), 1.0);
    f.add(sc.ix_obs(1, 0, 0), -1.0);
    f.add(sc.ix_obs(1, 0, 1), -1.0);
    f.constant = 1.0;
    f
}

/// Lower bound on the causal effect from observational data:
/// 2p(0,0|0) + p(1,1|0) + p(0,1|1) + p(1,1|1) − 2, or with `eta` the
/// efficiency-corrected constant −1−η². A classical model has ACE at least
/// this value; since ACE ≤ 1 the value itself never exceeds 1 classically.
fn ace_lb(params: &Params) -> Result<Functional> {
    let sc = Scenario::instrumental(2, 2, 2);
    let eta = get_f64(params, "eta")?;
    let (name, label, constant) = match eta {
        None => ("ace_lb", "ACE lower bound".to_string(), -2.0),
        Some(e) if (0.0..=1.0).contains(&e) => ("ace_lb_eta", format!("ACE lower bound (eta={e})"), -1.0 - e * e),
        Some(e) => return Err(Error::InvalidParameter(format!("eta = {e} outside [0,1]"))),
    };
    let mut f = Functional::linear(name, label, sc, 1.0, Sense::Above);
    f.add(sc.ix_obs(0, 0, 0), 2.0);
    f.add(sc.ix_obs(1, 1, 0), 1.0);
    f.add(sc.ix_obs(0, 1, 1), 1.0);
    f.add(sc.ix_obs(1, 1, 1), 1.0);
    f.constant = constant;
    Ok(f)
}

/// E₀₀ + E₀₁ + E₁₀ − E₁₁ − E₂₀ ≤ 3 with E = p(0) − p(1).
fn s3() -> Functional {
    let sc = Scenario::pam(3, 2, 2);
    let mut f = Functional::linear("s3", "S3".into(), sc, 3.0, Sense::Above);
    for (x, y, w) in [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0), (2, 0, -1.0)] {
        f.add(sc.ix_pam(0, x, y), w);
        f.add(sc.ix_pam(1, x, y), -w);
    }
    f
}

/// Σ_x Σ_y (−1)^{x_y} p(0|x,y), x ranging over n-bit strings.
fn tn(params: &Params) -> Result<Functional> {
    let n = get_usize(params, "n", 2)?;
    if !(2..=6).contains(&n) {
        return Err(Error::InvalidParameter(format!("tn supports n in [2,6], got {n}")));
    }
    let sc = Scenario::pam(1 << n, n, 2);
    let mut f = Functional::linear("tn", format!("T{n}"), sc, 0.0, Sense::Above);
    for x in 0..1usize << n {
        for y in 0..n {
            f.add(sc.ix_pam(0, x, y), sign((x >> y) & 1));
        }
    }
    f.classical_bound = tn_classical_bound(n);
    Ok(f)
}

/// Best classical value of T_n with a bit of communication: for each
/// decoding table, every preparation picks its best message.
pub fn tn_classical_bound(n: usize) -> f64 {
    let mut best = f64::MIN;
    for dec in 0..1usize << (2 * n) {
        // dec bit (m*n + y) is the output for message m, setting y
        let mut total = 0.0;
        for x in 0..1usize << n {
            let mut best_m = f64::MIN;
            for m in 0..2 {
                let v: f64 = (0..n)
                    .map(|y| if (dec >> (m * n + y)) & 1 == 0 { sign((x >> y) & 1) } else { 0.0 })
                    .sum();
                best_m = best_m.max(v);
            }
            total += best_m;
        }
        best = best.max(total);
    }
    best
}

/// −Σ_y p(0|0,y) + Σ_{x=1..d} Σ_{y=0..d−x} α_xy p(0|x,y) with
/// α_xy = −1 when x + y ≤ d − 1 and +1 otherwise.
fn id_witness(params: &Params) -> Result<Functional> {
    let d = get_usize(params, "d", 2)?;
    let n_b = get_usize(params, "n_b", 3)?;
    if !(2..=6).contains(&d) || n_b < 1 {
        return Err(Error::InvalidParameter(format!("id_witness needs d in [2,6] and n_b ≥ 1, got d={d}, n_b={n_b}")));
    }
    let sc = Scenario::pam(d + 1, d, n_b);
    let mut f = Functional::linear("id_witness", format!("I{} witness", d + 1), sc, (d - 1) as f64, Sense::Above);
    for y in 0..d {
        f.add(sc.ix_pam(0, 0, y), -1.0);
    }
    for x in 1..=d {
        for y in 0..=d - x {
            let alpha = if x + y < d { -1.0 } else { 1.0 };
            f.add(sc.ix_pam(0, x, y), alpha);
        }
    }
    Ok(f)
}

fn ij() -> Functional {
    Functional {
        name: "ij".into(),
        label: "Bilocal IJ".into(),
        scenario: Scenario::Bilocal { n_a: 2, n_c: 2 },
        kind: Kind::Ij,
        coeffs: Vec::new(),
        constant: 0.0,
        classical_bound: 1.0,
        sense: Sense::Above,
    }
}

pub fn build(name: &str, params: &Params) -> Result<Functional> {
    let f = match name {
        "chsh" => chsh(params)?,
        "eberhard" => eberhard(),
        "cglmp3" => cglmp3(),
        "mermin3" => mermin3(),
        "svetlichny3" => svetlichny3(),
        "ch_nsite" => ch_nsite(params)?,
        "pearl" => pearl(params)?,
        "bonet" => bonet(params)?,
        "kedagni" => kedagni(params)?,
        "i222" => i222(),
        "i223" => i223(),
        "i233" => i233(),
        "ace_lb" | "ace_lb_eta" => {
            if name == "ace_lb_eta" && !params.contains_key("eta") {
                return Err(Error::InvalidParameter("ace_lb_eta needs eta".into()));
            }
            ace_lb(params)?
        }
        "s3" => s3(),
        "tn" => tn(params)?,
        "id_witness" => id_witness(params)?,
        "ij" => ij(),
        other => return Err(Error::UnknownFunctional(other.to_string())),
    };
    Ok(f)
}

pub fn build_default(name: &str) -> Result<Functional> {
    build(name, &Params::new())
}

pub const NAMES: &[&str] = &[
    "chsh", "eberhard", "cglmp3", "mermin3", "svetlichny3", "ch_nsite", "pearl", "bonet", "kedagni", "i222", "i223",
    "i233", "ace_lb", "ace_lb_eta", "s3", "tn", "id_witness", "ij",
];

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub scenario: String,
    pub params: String,
    pub classical_bound: f64,
    pub sense: Sense,
}

pub fn catalog() -> Vec<CatalogEntry> {
    NAMES
        .iter()
        .map(|name| {
            let (params, f) = match *name {
                "ace_lb_eta" => {
                    let mut p = Params::new();
                    p.insert("eta".into(), Value::from(1.0));
                    ("eta".to_string(), build(name, &p).expect("catalog entry builds"))
                }
                _ => (default_params(name).to_string(), build_default(name).expect("catalog entry builds")),
            };
            CatalogEntry {
                name: name.to_string(),
                scenario: f.scenario.label(),
                params,
                classical_bound: f.classical_bound,
                sense: f.sense,
            }
        })
        .collect()
}

fn default_params(name: &str) -> &'static str {
    match name {
        "chsh" => "branch=abs|upper|lower",
        "ch_nsite" => "n=3",
        "pearl" => "a=0 b=0 x=0",
        "bonet" => "a=0 b=0",
        "kedagni" => "a=0 b=0 perm=0",
        "tn" => "n=2",
        "id_witness" => "d=2 n_b=3",
        _ => "",
    }
}

/// (I, J) from correlators Σ (−1)^{a+b^y+c} p over conclusive outcomes
/// (a, c < 2); explicit no-click outcomes contribute nothing.
pub fn ij_components(b: &Behavior) -> Result<(f64, f64)> {
    let Scenario::Bilocal { .. } = b.scenario() else {
        return Err(Error::ScenarioMismatch(format!("IJ needs a bilocal table, got {}", b.scenario().label())));
    };
    let corr = |x: usize, z: usize, which: usize| -> f64 {
        let mut s = 0.0;
        for a in 0..2 {
            for b0 in 0..2 {
                for b1 in 0..2 {
                    for c in 0..2 {
                        let by = if which == 0 { b0 } else { b1 };
                        s += sign(a + by + c) * b.bilocal(a, b0, b1, c, x, z);
                    }
                }
            }
        }
        s
    };
    let mut i = 0.0;
    let mut j = 0.0;
    for x in 0..2 {
        for z in 0..2 {
            i += 0.25 * corr(x, z, 0);
            j += 0.25 * sign(x + z) * corr(x, z, 1);
        }
    }
    Ok((i, j))
}

pub fn evaluate_ij(b: &Behavior) -> Result<f64> {
    let (i, j) = ij_components(b)?;
    Ok(i.abs().sqrt() + j.abs().sqrt())
}

pub fn evaluate(f: &Functional, b: &Behavior) -> Result<f64> {
    f.evaluate(b)
}
