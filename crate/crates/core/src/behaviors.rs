//! Conditional probability tables for the supported causal scenarios.
//!
//! A [`Behavior`] is a flat vector of probabilities plus a [`Scenario`]
//! that fixes the cardinalities and the index layout. Every scenario has
//! one layout, shared by functionals (coefficient vectors) and the
//! polytope code (vertex coordinates).

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::qcore::{born_joint, CMatrix, Povm, QuantumState, TOL};

/// Tolerance for marginal checks (no-signaling, x-independence of do terms).
pub const SIGNALING_TOL: f64 = 1e-6;

static CLAMPED: AtomicUsize = AtomicUsize::new(0);

/// Number of entries in [−1e-9, 0) that were clamped to zero so far.
pub fn clamp_count() -> usize {
    CLAMPED.load(Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// p(a,b|x,y)
    Bell { n_a: usize, n_b: usize, n_x: usize, n_y: usize },
    /// p(a,b|x) followed by p(b|do(a)); Bob holds one measurement per a.
    Instrumental { n_x: usize, n_a: usize, n_b: usize },
    /// p(b|x,y)
    Pam { n_x: usize, n_y: usize, n_b: usize },
    /// p(a,b⁰,b¹,c|x,z) with binary x, z, b⁰, b¹. `n_a`, `n_c` are 2, or 3
    /// when the end parties record an explicit no-click.
    Bilocal { n_a: usize, n_c: usize },
    /// Binary settings and outcomes for each of `n` parties.
    NParty { n: usize },
}

impl Scenario {
    pub fn bell(n_a: usize, n_b: usize, n_x: usize, n_y: usize) -> Self {
        Scenario::Bell { n_a, n_b, n_x, n_y }
    }

    pub fn instrumental(n_x: usize, n_a: usize, n_b: usize) -> Self {
        Scenario::Instrumental { n_x, n_a, n_b }
    }

    pub fn pam(n_x: usize, n_y: usize, n_b: usize) -> Self {
        Scenario::Pam { n_x, n_y, n_b }
    }

    pub fn validate(&self) -> Result<()> {
        let counts: Vec<usize> = match *self {
            Scenario::Bell { n_a, n_b, n_x, n_y } => vec![n_a, n_b, n_x, n_y],
            Scenario::Instrumental { n_x, n_a, n_b } => vec![n_x, n_a, n_b],
            Scenario::Pam { n_x, n_y, n_b } => vec![n_x, n_y, n_b],
            Scenario::Bilocal { n_a, n_c } => {
                if !(2..=3).contains(&n_a) || !(2..=3).contains(&n_c) {
                    return Err(Error::InvalidBehavior("bilocal end outcomes must be 2 or 3".into()));
                }
                vec![n_a, n_c]
            }
            Scenario::NParty { n } => {
                if !(2..=4).contains(&n) {
                    return Err(Error::InvalidBehavior(format!("party count {n} outside [2,4]")));
                }
                vec![n]
            }
        };
        if counts.iter().any(|c| *c == 0) {
            return Err(Error::InvalidBehavior("cardinalities must be positive".into()));
        }
        if self.len() > 1 << 20 {
            return Err(Error::TooLarge(format!("{} entries", self.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match *self {
            Scenario::Bell { n_a, n_b, n_x, n_y } => n_a * n_b * n_x * n_y,
            Scenario::Instrumental { n_x, n_a, n_b } => n_x * n_a * n_b + n_a * n_b,
            Scenario::Pam { n_x, n_y, n_b } => n_x * n_y * n_b,
            Scenario::Bilocal { n_a, n_c } => 4 * n_a * 4 * n_c,
            Scenario::NParty { n } => 1 << (2 * n),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Short name used in CSV files and logs.
    pub fn label(&self) -> String {
        match *self {
            Scenario::Bell { n_a, n_b, n_x, n_y } => format!("bell({n_a},{n_b},{n_x},{n_y})"),
            Scenario::Instrumental { n_x, n_a, n_b } => format!("instrumental({n_x},{n_a},{n_b})"),
            Scenario::Pam { n_x, n_y, n_b } => format!("pam({n_x},{n_y},{n_b})"),
            Scenario::Bilocal { n_a, n_c } => format!("bilocal({n_a},{n_c})"),
            Scenario::NParty { n } => format!("nparty({n})"),
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| Error::Parse(format!("bad scenario label '{s}'")))?;
        let kind = &s[..open];
        let body = s[open + 1..].strip_suffix(')').ok_or_else(|| Error::Parse(format!("bad scenario label '{s}'")))?;
        let nums: Vec<usize> = body
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| Error::Parse(format!("'{t}': {e}"))))
            .collect::<Result<_>>()?;
        let sc = match (kind, nums.as_slice()) {
            ("bell", [a, b, x, y]) => Scenario::bell(*a, *b, *x, *y),
            ("instrumental", [x, a, b]) => Scenario::instrumental(*x, *a, *b),
            ("pam", [x, y, b]) => Scenario::pam(*x, *y, *b),
            ("bilocal", [a, c]) => Scenario::Bilocal { n_a: *a, n_c: *c },
            ("nparty", [n]) => Scenario::NParty { n: *n },
            _ => return Err(Error::Parse(format!("bad scenario label '{s}'"))),
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn index_names(&self) -> Vec<String> {
        let v: Vec<&str> = match self {
            Scenario::Bell { .. } => vec!["a", "b", "x", "y"],
            Scenario::Instrumental { .. } => vec!["part", "a", "b", "x"],
            Scenario::Pam { .. } => vec!["b", "x", "y"],
            Scenario::Bilocal { .. } => vec!["a", "b0", "b1", "c", "x", "z"],
            Scenario::NParty { n } => {
                let mut names: Vec<String> = (0..*n).map(|k| format!("o{k}")).collect();
                names.extend((0..*n).map(|k| format!("s{k}")));
                return names;
            }
        };
        v.into_iter().map(String::from).collect()
    }

    /// Index tuple of a flat position, in the order of [`index_names`].
    /// For the do-part of an instrumental table the `x` slot is `None`.
    ///
    /// [`index_names`]: Scenario::index_names
    pub fn index_tuple(&self, flat: usize) -> Vec<Option<usize>> {
        match *self {
            Scenario::Bell { n_a, n_b, n_y, .. } => {
                let b = flat % n_b;
                let a = (flat / n_b) % n_a;
                let y = (flat / (n_a * n_b)) % n_y;
                let x = flat / (n_a * n_b * n_y);
                vec![Some(a), Some(b), Some(x), Some(y)]
            }
            Scenario::Instrumental { n_x, n_a, n_b } => {
                let obs = n_x * n_a * n_b;
                if flat < obs {
                    let b = flat % n_b;
                    let a = (flat / n_b) % n_a;
                    let x = flat / (n_a * n_b);
                    vec![Some(0), Some(a), Some(b), Some(x)]
                } else {
                    let r = flat - obs;
                    vec![Some(1), Some(r / n_b), Some(r % n_b), None]
                }
            }
            Scenario::Pam { n_y, n_b, .. } => {
                let b = flat % n_b;
                let y = (flat / n_b) % n_y;
                let x = flat / (n_b * n_y);
                vec![Some(b), Some(x), Some(y)]
            }
            Scenario::Bilocal { n_a, n_c } => {
                let c = flat % n_c;
                let b1 = (flat / n_c) % 2;
                let b0 = (flat / (2 * n_c)) % 2;
                let a = (flat / (4 * n_c)) % n_a;
                let z = (flat / (4 * n_c * n_a)) % 2;
                let x = flat / (8 * n_c * n_a);
                vec![Some(a), Some(b0), Some(b1), Some(c), Some(x), Some(z)]
            }
            Scenario::NParty { n } => {
                let outs = flat % (1 << n);
                let sets = flat >> n;
                let mut v: Vec<Option<usize>> = (0..n).map(|k| Some((outs >> k) & 1)).collect();
                v.extend((0..n).map(|k| Some((sets >> k) & 1)));
                v
            }
        }
    }

    /// Flat position from an index tuple (inverse of [`Scenario::index_tuple`]).
    pub fn flat_index(&self, idx: &[Option<usize>]) -> Result<usize> {
        let bad = || Error::InvalidBehavior(format!("index {idx:?} invalid for {}", self.label()));
        let get = |k: usize, bound: usize| -> Result<usize> {
            match idx.get(k).copied().flatten() {
                Some(v) if v < bound => Ok(v),
                _ => Err(bad()),
            }
        };
        match *self {
            Scenario::Bell { n_a, n_b, n_x, n_y } => {
                if idx.len() != 4 {
                    return Err(bad());
                }
                Ok(self.ix_bell(get(0, n_a)?, get(1, n_b)?, get(2, n_x)?, get(3, n_y)?))
            }
            Scenario::Instrumental { n_x, n_a, n_b } => {
                if idx.len() != 4 {
                    return Err(bad());
                }
                match get(0, 2)? {
                    0 => Ok(self.ix_obs(get(1, n_a)?, get(2, n_b)?, get(3, n_x)?)),
                    _ => Ok(self.ix_do(get(2, n_b)?, get(1, n_a)?)),
                }
            }
            Scenario::Pam { n_x, n_y, n_b } => {
                if idx.len() != 3 {
                    return Err(bad());
                }
                Ok(self.ix_pam(get(0, n_b)?, get(1, n_x)?, get(2, n_y)?))
            }
            Scenario::Bilocal { n_a, n_c } => {
                if idx.len() != 6 {
                    return Err(bad());
                }
                Ok(self.ix_bilocal(get(0, n_a)?, get(1, 2)?, get(2, 2)?, get(3, n_c)?, get(4, 2)?, get(5, 2)?))
            }
            Scenario::NParty { n } => {
                if idx.len() != 2 * n {
                    return Err(bad());
                }
                let mut outs = 0;
                let mut sets = 0;
                for k in 0..n {
                    outs |= get(k, 2)? << k;
                    sets |= get(n + k, 2)? << k;
                }
                Ok(self.ix_nparty(outs, sets))
            }
        }
    }

    /// Groups of flat indices that must each sum to one.
    pub fn normalization_groups(&self) -> Vec<Vec<usize>> {
        let len = self.len();
        let group_of = |f: usize| -> usize {
            match *self {
                Scenario::Bell { n_a, n_b, .. } => f / (n_a * n_b),
                Scenario::Instrumental { n_x, n_a, n_b } => {
                    if f < n_x * n_a * n_b {
                        f / (n_a * n_b)
                    } else {
                        n_x + (f - n_x * n_a * n_b) / n_b
                    }
                }
                Scenario::Pam { n_b, .. } => f / n_b,
                Scenario::Bilocal { n_a, n_c } => f / (4 * n_a * n_c),
                Scenario::NParty { n } => f >> n,
            }
        };
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for f in 0..len {
            let g = group_of(f);
            if groups.len() <= g {
                groups.resize(g + 1, Vec::new());
            }
            groups[g].push(f);
        }
        groups
    }

    // Layout helpers. These assume the scenario kind matches the call.

    #[inline]
    pub fn ix_bell(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        match *self {
            Scenario::Bell { n_a, n_b, n_y, .. } => ((x * n_y + y) * n_a + a) * n_b + b,
            _ => panic!("bell index on {}", self.label()),
        }
    }

    #[inline]
    pub fn ix_obs(&self, a: usize, b: usize, x: usize) -> usize {
        match *self {
            Scenario::Instrumental { n_a, n_b, .. } => (x * n_a + a) * n_b + b,
            _ => panic!("instrumental index on {}", self.label()),
        }
    }

    #[inline]
    pub fn ix_do(&self, b: usize, a: usize) -> usize {
        match *self {
            Scenario::Instrumental { n_x, n_a, n_b } => n_x * n_a * n_b + a * n_b + b,
            _ => panic!("instrumental index on {}", self.label()),
        }
    }

    #[inline]
    pub fn ix_pam(&self, b: usize, x: usize, y: usize) -> usize {
        match *self {
            Scenario::Pam { n_y, n_b, .. } => (x * n_y + y) * n_b + b,
            _ => panic!("pam index on {}", self.label()),
        }
    }

    #[inline]
    pub fn ix_bilocal(&self, a: usize, b0: usize, b1: usize, c: usize, x: usize, z: usize) -> usize {
        match *self {
            Scenario::Bilocal { n_a, n_c } => ((((x * 2 + z) * n_a + a) * 2 + b0) * 2 + b1) * n_c + c,
            _ => panic!("bilocal index on {}", self.label()),
        }
    }

    /// `outs`, `sets` are bit masks, bit k belonging to party k.
    #[inline]
    pub fn ix_nparty(&self, outs: usize, sets: usize) -> usize {
        match *self {
            Scenario::NParty { n } => (sets << n) | outs,
            _ => panic!("n-party index on {}", self.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    p: Vec<f64>,
}

impl Behavior {
    /// Validates nonnegativity and per-setting normalization. Entries in
    /// [−1e-9, 0) are clamped to zero and counted.
    pub fn new(scenario: Scenario, mut p: Vec<f64>) -> Result<Self> {
        scenario.validate()?;
        if p.len() != scenario.len() {
            return Err(Error::InvalidBehavior(format!(
                "{} needs {} entries, got {}",
                scenario.label(),
                scenario.len(),
                p.len()
            )));
        }
        for (k, v) in p.iter_mut().enumerate() {
            if !v.is_finite() || *v < -TOL {
                return Err(Error::InvalidBehavior(format!("entry {k} = {v} is negative or not finite")));
            }
            if *v < 0.0 {
                *v = 0.0;
                CLAMPED.fetch_add(1, Ordering::Relaxed);
            }
        }
        for g in scenario.normalization_groups() {
            let s: f64 = g.iter().map(|&i| p[i]).sum();
            if (s - 1.0).abs() > TOL {
                let at = scenario.index_tuple(g[0]);
                return Err(Error::InvalidBehavior(format!("group starting at {at:?} sums to {s}")));
            }
        }
        Ok(Behavior { scenario, p })
    }

    /// For tables produced by exact affine maps of valid tables.
    pub(crate) fn trusted(scenario: Scenario, p: Vec<f64>) -> Self {
        debug_assert_eq!(p.len(), scenario.len());
        Behavior { scenario, p }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, flat: usize) -> f64 {
        self.p[flat]
    }

    pub fn bell(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[self.scenario.ix_bell(a, b, x, y)]
    }

    pub fn obs(&self, a: usize, b: usize, x: usize) -> f64 {
        self.p[self.scenario.ix_obs(a, b, x)]
    }

    pub fn do_(&self, b: usize, a: usize) -> f64 {
        self.p[self.scenario.ix_do(b, a)]
    }

    pub fn pam(&self, b: usize, x: usize, y: usize) -> f64 {
        self.p[self.scenario.ix_pam(b, x, y)]
    }

    pub fn bilocal(&self, a: usize, b0: usize, b1: usize, c: usize, x: usize, z: usize) -> f64 {
        self.p[self.scenario.ix_bilocal(a, b0, b1, c, x, z)]
    }

    pub fn nparty(&self, outs: usize, sets: usize) -> f64 {
        self.p[self.scenario.ix_nparty(outs, sets)]
    }

    /// Alice's marginal p(a|x,y) in a Bell table.
    pub fn bell_marginal_a(&self, a: usize, x: usize, y: usize) -> f64 {
        let Scenario::Bell { n_b, .. } = self.scenario else { panic!("not a Bell table") };
        (0..n_b).map(|b| self.bell(a, b, x, y)).sum()
    }

    pub fn bell_marginal_b(&self, b: usize, x: usize, y: usize) -> f64 {
        let Scenario::Bell { n_a, .. } = self.scenario else { panic!("not a Bell table") };
        (0..n_a).map(|a| self.bell(a, b, x, y)).sum()
    }

    /// p(a|x) of an instrumental table.
    pub fn obs_marginal_a(&self, a: usize, x: usize) -> f64 {
        let Scenario::Instrumental { n_b, .. } = self.scenario else { panic!("not an instrumental table") };
        (0..n_b).map(|b| self.obs(a, b, x)).sum()
    }
}

fn require_povms(povms: &[Povm], dim: usize, who: &str) -> Result<usize> {
    let first = povms.first().ok_or_else(|| Error::InvalidPovm(format!("{who}: no measurements")))?;
    let n = first.outcomes();
    for (k, m) in povms.iter().enumerate() {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch(format!("{who} measurement {k} has dim {}, expected {dim}", m.dim())));
        }
        if m.outcomes() != n {
            return Err(Error::InvalidPovm(format!("{who} measurements have different outcome counts")));
        }
    }
    Ok(n)
}

fn split_dims(state: &QuantumState, da: usize) -> Result<usize> {
    if da == 0 || state.dim() % da != 0 {
        return Err(Error::DimensionMismatch(format!("state dim {} not divisible by {da}", state.dim())));
    }
    Ok(state.dim() / da)
}

pub fn bell_from_quantum(state: &QuantumState, a_povms: &[Povm], b_povms: &[Povm]) -> Result<Behavior> {
    let da = a_povms.first().map(|m| m.dim()).ok_or_else(|| Error::InvalidPovm("no Alice measurements".into()))?;
    let db = split_dims(state, da)?;
    let n_a = require_povms(a_povms, da, "Alice")?;
    let n_b = require_povms(b_povms, db, "Bob")?;
    let sc = Scenario::bell(n_a, n_b, a_povms.len(), b_povms.len());
    let mut p = vec![0.0; sc.len()];
    for (x, ma) in a_povms.iter().enumerate() {
        for (y, mb) in b_povms.iter().enumerate() {
            for (a, ea) in ma.effects().iter().enumerate() {
                for (b, eb) in mb.effects().iter().enumerate() {
                    p[sc.ix_bell(a, b, x, y)] = born_joint(state, &[ea, eb])?;
                }
            }
        }
    }
    Behavior::new(sc, p)
}

/// Bob's measurement is chosen by Alice's outcome: `b_povms[a]`.
pub fn instrumental_from_quantum(state: &QuantumState, a_povms: &[Povm], b_povms: &[Povm]) -> Result<Behavior> {
    let da = a_povms.first().map(|m| m.dim()).ok_or_else(|| Error::InvalidPovm("no Alice measurements".into()))?;
    let db = split_dims(state, da)?;
    let n_a = require_povms(a_povms, da, "Alice")?;
    let n_b = require_povms(b_povms, db, "Bob")?;
    if b_povms.len() != n_a {
        return Err(Error::InvalidPovm(format!(
            "Bob needs one measurement per Alice outcome ({n_a}), got {}",
            b_povms.len()
        )));
    }
    let sc = Scenario::instrumental(a_povms.len(), n_a, n_b);
    let mut p = vec![0.0; sc.len()];
    let id_a = CMatrix::identity(da);
    for (x, ma) in a_povms.iter().enumerate() {
        for (a, ea) in ma.effects().iter().enumerate() {
            for (b, eb) in b_povms[a].effects().iter().enumerate() {
                p[sc.ix_obs(a, b, x)] = born_joint(state, &[ea, eb])?;
            }
        }
    }
    for (a, mb) in b_povms.iter().enumerate() {
        for (b, eb) in mb.effects().iter().enumerate() {
            p[sc.ix_do(b, a)] = born_joint(state, &[&id_a, eb])?;
        }
    }
    Behavior::new(sc, p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoSignalingReport {
    /// max |p(a|x,y) − p(a|x,y')|
    pub alice_deviation: f64,
    /// max |p(b|x,y) − p(b|x',y)|
    pub bob_deviation: f64,
    pub pass: bool,
}

pub fn no_signaling_report(b: &Behavior) -> Result<NoSignalingReport> {
    let Scenario::Bell { n_a, n_b, n_x, n_y } = b.scenario else {
        return Err(Error::ScenarioMismatch(format!("no-signaling check needs a Bell table, got {}", b.scenario.label())));
    };
    let mut alice: f64 = 0.0;
    for x in 0..n_x {
        for a in 0..n_a {
            let m: Vec<f64> = (0..n_y).map(|y| b.bell_marginal_a(a, x, y)).collect();
            let spread = m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min);
            alice = alice.max(spread);
        }
    }
    let mut bob: f64 = 0.0;
    for y in 0..n_y {
        for bb in 0..n_b {
            let m: Vec<f64> = (0..n_x).map(|x| b.bell_marginal_b(bb, x, y)).collect();
            let spread = m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min);
            bob = bob.max(spread);
        }
    }
    Ok(NoSignalingReport {
        alice_deviation: alice,
        bob_deviation: bob,
        pass: alice < SIGNALING_TOL && bob < SIGNALING_TOL,
    })
}

/// p(a,b|x) = p_Bell(a,b|x,y=a) and p(b|do(a)) = Σ_a' p_Bell(a',b|x=0,y=a).
pub fn instrumental_from_bell(b: &Behavior) -> Result<Behavior> {
    let Scenario::Bell { n_a, n_b, n_x, n_y } = b.scenario else {
        return Err(Error::ScenarioMismatch(format!("expected a Bell table, got {}", b.scenario.label())));
    };
    if n_y != n_a {
        return Err(Error::ScenarioMismatch(format!("Bob needs one setting per Alice outcome ({n_a}), has {n_y}")));
    }
    let report = no_signaling_report(b)?;
    if !report.pass {
        let which = if report.alice_deviation >= SIGNALING_TOL {
            format!("Alice's marginal varies with y by {:.3e}", report.alice_deviation)
        } else {
            format!("Bob's marginal varies with x by {:.3e}", report.bob_deviation)
        };
        return Err(Error::Signaling(which));
    }
    let sc = Scenario::instrumental(n_x, n_a, n_b);
    let mut p = vec![0.0; sc.len()];
    for x in 0..n_x {
        for a in 0..n_a {
            for bb in 0..n_b {
                p[sc.ix_obs(a, bb, x)] = b.bell(a, bb, x, a);
            }
        }
    }
    for a in 0..n_a {
        for bb in 0..n_b {
            p[sc.ix_do(bb, a)] = b.bell_marginal_b(bb, 0, a);
        }
    }
    Behavior::new(sc, p)
}

/// p(b|x,y) = Tr(ρ_x M_{b|y})
pub fn pam_from_quantum(states: &[QuantumState], povms: &[Povm]) -> Result<Behavior> {
    let d = states.first().map(|s| s.dim()).ok_or_else(|| Error::InvalidState("no preparations".into()))?;
    if states.iter().any(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch("preparations of different dimension".into()));
    }
    let n_b = require_povms(povms, d, "measurement")?;
    let sc = Scenario::pam(states.len(), povms.len(), n_b);
    let mut p = vec![0.0; sc.len()];
    for (x, s) in states.iter().enumerate() {
        for (y, m) in povms.iter().enumerate() {
            for (b, e) in m.effects().iter().enumerate() {
                p[sc.ix_pam(b, x, y)] = born_joint(s, &[e])?;
            }
        }
    }
    Behavior::new(sc, p)
}

/// Entanglement swapping: ρ₁ on (A, B₁), ρ₂ on (B₂, C), Bob's 4-outcome
/// measurement on (B₁, B₂) with outcome k read as (b⁰, b¹) = (k>>1, k&1).
pub fn bilocal_from_quantum(
    rho1: &QuantumState,
    rho2: &QuantumState,
    a_povms: &[Povm],
    b_bsm: &Povm,
    c_povms: &[Povm],
) -> Result<Behavior> {
    if rho1.dim() != 4 || rho2.dim() != 4 {
        return Err(Error::DimensionMismatch("bilocal sources must be two-qubit states".into()));
    }
    if a_povms.len() != 2 || c_povms.len() != 2 {
        return Err(Error::InvalidPovm("end parties need exactly two settings".into()));
    }
    if require_povms(a_povms, 2, "Alice")? != 2 || require_povms(c_povms, 2, "Charlie")? != 2 {
        return Err(Error::InvalidPovm("end-party measurements must be dichotomic".into()));
    }
    if b_bsm.dim() != 4 || b_bsm.outcomes() != 4 {
        return Err(Error::InvalidPovm("middle measurement must be a 4-outcome two-qubit POVM".into()));
    }
    let state = QuantumState::new(crate::qcore::tensor(rho1.mat(), rho2.mat()))?;
    let sc = Scenario::Bilocal { n_a: 2, n_c: 2 };
    let mut p = vec![0.0; sc.len()];
    for x in 0..2 {
        for z in 0..2 {
            for a in 0..2 {
                for (k, eb) in b_bsm.effects().iter().enumerate() {
                    for cc in 0..2 {
                        let v = born_joint(&state, &[&a_povms[x].effects()[a], eb, &c_povms[z].effects()[cc]])?;
                        p[sc.ix_bilocal(a, k >> 1, k & 1, cc, x, z)] = v;
                    }
                }
            }
        }
    }
    Behavior::new(sc, p)
}

/// `povms[k][s]` is party k's dichotomic measurement for setting s.
pub fn nparty_from_quantum(state: &QuantumState, povms: &[Vec<Povm>]) -> Result<Behavior> {
    let n = povms.len();
    if state.dim() != 1 << n {
        return Err(Error::DimensionMismatch(format!("{n} qubit parties need state dim {}", 1 << n)));
    }
    for (k, party) in povms.iter().enumerate() {
        if party.len() != 2 || require_povms(party, 2, &format!("party {k}"))? != 2 {
            return Err(Error::InvalidPovm(format!("party {k} needs two dichotomic qubit measurements")));
        }
    }
    let sc = Scenario::NParty { n };
    sc.validate()?;
    let mut p = vec![0.0; sc.len()];
    for sets in 0..1usize << n {
        for outs in 0..1usize << n {
            let effects: Vec<&CMatrix> =
                (0..n).map(|k| &povms[k][(sets >> k) & 1].effects()[(outs >> k) & 1]).collect();
            p[sc.ix_nparty(outs, sets)] = born_joint(state, &effects)?;
        }
    }
    Behavior::new(sc, p)
}

/// max over a, a', b of |p(b|do(a)) − p(b|do(a'))|.
pub fn ace(b: &Behavior) -> Result<f64> {
    let Scenario::Instrumental { n_a, n_b, .. } = b.scenario else {
        return Err(Error::ScenarioMismatch(format!("ACE needs an instrumental table, got {}", b.scenario.label())));
    };
    let mut best: f64 = 0.0;
    for bb in 0..n_b {
        for a in 0..n_a {
            for a2 in a + 1..n_a {
                best = best.max((b.do_(bb, a) - b.do_(bb, a2)).abs());
            }
        }
    }
    Ok(best.min(1.0))
}

/// 17 significant digits, enough for an exact f64 round trip.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv(b: &Behavior) -> String {
    let sc = b.scenario;
    let mut out = String::new();
    let _ = writeln!(out, "scenario,{},value", sc.index_names().join(","));
    for (k, v) in b.p.iter().enumerate() {
        let idx: Vec<String> = sc
            .index_tuple(k)
            .iter()
            .map(|i| i.map(|v| v.to_string()).unwrap_or_default())
            .collect();
        let _ = writeln!(out, "\"{}\",{},{}", sc.label(), idx.join(","), fmt17(*v));
    }
    out
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in line.chars() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    fields.push(cur);
    fields
}

pub fn from_csv(text: &str) -> Result<Behavior> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty behavior CSV".into()))?;
    let cols = split_csv_line(header);
    if cols.first().map(String::as_str) != Some("scenario") || cols.last().map(String::as_str) != Some("value") {
        return Err(Error::Parse("behavior CSV header must be scenario,...,value".into()));
    }
    let mut scenario: Option<Scenario> = None;
    let mut p: Vec<Option<f64>> = Vec::new();
    for (n, line) in lines.enumerate() {
        let f = split_csv_line(line);
        if f.len() != cols.len() {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", n + 2, f.len(), cols.len())));
        }
        let sc = Scenario::parse_label(&f[0])?;
        match scenario {
            None => {
                if sc.index_names() != cols[1..cols.len() - 1] {
                    return Err(Error::Parse("header does not match scenario index names".into()));
                }
                scenario = Some(sc);
                p = vec![None; sc.len()];
            }
            Some(s) if s != sc => return Err(Error::Parse("mixed scenarios in one file".into())),
            _ => {}
        }
        let idx: Vec<Option<usize>> = f[1..f.len() - 1]
            .iter()
            .map(|t| {
                if t.is_empty() {
                    Ok(None)
                } else {
                    t.parse::<usize>().map(Some).map_err(|e| Error::Parse(format!("'{t}': {e}")))
                }
            })
            .collect::<Result<_>>()?;
        let flat = sc.flat_index(&idx)?;
        let v: f64 = f[f.len() - 1].trim().parse().map_err(|e| Error::Parse(format!("value: {e}")))?;
        if p[flat].replace(v).is_some() {
            return Err(Error::Parse(format!("duplicate entry {idx:?}")));
        }
    }
    let sc = scenario.ok_or_else(|| Error::Parse("behavior CSV has no rows".into()))?;
    let p: Vec<f64> = p
        .into_iter()
        .enumerate()
        .map(|(k, v)| v.ok_or_else(|| Error::Parse(format!("missing entry {:?}", sc.index_tuple(k)))))
        .collect::<Result<_>>()?;
    Behavior::new(sc, p)
}

/// JSON with the table nested in the order settings → outcomes, e.g.
/// `p[x][y][a][b]` for Bell and `{"obs": p[x][a][b], "do": p[a][b]}`
/// for instrumental tables.
pub fn to_json(b: &Behavior) -> Value {
    let sc = b.scenario;
    let nest = |dims: &[usize], offset: usize| -> Value {
        fn rec(p: &[f64], dims: &[usize], offset: usize) -> Value {
            if dims.is_empty() {
                return json!(p[offset]);
            }
            let stride: usize = dims[1..].iter().product();
            Value::Array((0..dims[0]).map(|i| rec(p, &dims[1..], offset + i * stride)).collect())
        }
        rec(&b.p, dims, offset)
    };
    let table = match sc {
        Scenario::Bell { n_a, n_b, n_x, n_y } => nest(&[n_x, n_y, n_a, n_b], 0),
        Scenario::Instrumental { n_x, n_a, n_b } => {
            json!({"obs": nest(&[n_x, n_a, n_b], 0), "do": nest(&[n_a, n_b], n_x * n_a * n_b)})
        }
        Scenario::Pam { n_x, n_y, n_b } => nest(&[n_x, n_y, n_b], 0),
        Scenario::Bilocal { n_a, n_c } => nest(&[2, 2, n_a, 2, 2, n_c], 0),
        Scenario::NParty { n } => nest(&[1 << n, 1 << n], 0),
    };
    json!({"scenario": sc, "p": table})
}

pub fn from_json(v: &Value) -> Result<Behavior> {
    let sc: Scenario = serde_json::from_value(v["scenario"].clone()).map_err(|e| Error::Parse(e.to_string()))?;
    sc.validate()?;
    fn flatten(v: &Value, out: &mut Vec<f64>) -> Result<()> {
        match v {
            Value::Array(items) => items.iter().try_for_each(|i| flatten(i, out)),
            Value::Number(n) => {
                out.push(n.as_f64().ok_or_else(|| Error::Parse("bad number".into()))?);
                Ok(())
            }
            _ => Err(Error::Parse("behavior table must be nested numeric arrays".into())),
        }
    }
    let mut p = Vec::with_capacity(sc.len());
    match sc {
        Scenario::Instrumental { .. } => {
            flatten(&v["p"]["obs"], &mut p)?;
            flatten(&v["p"]["do"], &mut p)?;
        }
        _ => flatten(&v["p"], &mut p)?,
    }
    Behavior::new(sc, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{bloch_direction, bloch_projective, schmidt_pair, singlet};
    use std::f64::consts::PI;

    fn chsh_value(b: &Behavior) -> f64 {
        let e = |x, y| {
            (0..2)
                .flat_map(|a| (0..2).map(move |bb| (a, bb)))
                .map(|(a, bb)| if (a + bb) % 2 == 0 { 1.0 } else { -1.0 } * b.bell(a, bb, x, y))
                .sum::<f64>()
        };
        e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1)
    }

    fn xz(angle: f64) -> Povm {
        bloch_projective(bloch_direction(angle, 0.0)).unwrap()
    }

    fn deterministic_bell(f: [usize; 2], g: [usize; 2]) -> Behavior {
        let sc = Scenario::bell(2, 2, 2, 2);
        let mut p = vec![0.0; 16];
        for x in 0..2 {
            for y in 0..2 {
                p[sc.ix_bell(f[x], g[y], x, y)] = 1.0;
            }
        }
        Behavior::new(sc, p).unwrap()
    }

    #[test]
    fn singlet_reaches_tsirelson() {
        let a = [xz(0.0), xz(PI / 2.0)];
        let b = [xz(PI / 4.0), xz(-PI / 4.0)];
        let beh = bell_from_quantum(&singlet(), &a, &b).unwrap();
        assert!((chsh_value(&beh).abs() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(no_signaling_report(&beh).unwrap().pass);
    }

    #[test]
    fn product_state_factorizes() {
        let s = schmidt_pair(0.0).unwrap();
        let a = [xz(0.3), xz(1.2)];
        let b = [xz(2.0), xz(-0.4)];
        let beh = bell_from_quantum(&s, &a, &b).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let prod = beh.bell_marginal_a(i, x, y) * beh.bell_marginal_b(j, x, y);
                        assert!((beh.bell(i, j, x, y) - prod).abs() < 1e-12);
                    }
                }
            }
        }
        assert!(chsh_value(&beh).abs() <= 2.0 + 1e-12);
    }

    #[test]
    fn signaling_table_is_reported() {
        let sc = Scenario::bell(2, 2, 2, 2);
        let mut p = vec![0.25; 16];
        // shift mass so that p(a=0|x=0,y=1) = 0.6 while p(a=0|x=0,y=0) = 0.5
        p[sc.ix_bell(0, 0, 0, 1)] = 0.35;
        p[sc.ix_bell(1, 0, 0, 1)] = 0.15;
        let b = Behavior::new(sc, p).unwrap();
        let r = no_signaling_report(&b).unwrap();
        assert!(!r.pass);
        assert!((r.alice_deviation - 0.1).abs() < 1e-12);
        assert!(matches!(instrumental_from_bell(&b), Err(Error::Signaling(_))));
        assert!(no_signaling_report(&deterministic_bell([0, 1], [1, 1])).unwrap().pass);
    }

    #[test]
    fn deterministic_bell_maps_to_deterministic_instrumental() {
        let b = deterministic_bell([1, 0], [0, 1]);
        let i = instrumental_from_bell(&b).unwrap();
        assert!(i.probs().iter().all(|v| *v == 0.0 || *v == 1.0));
        assert_eq!(i.obs(1, 1, 0), 1.0);
        assert_eq!(i.do_(0, 0), 1.0);
    }

    #[test]
    fn pr_box_maps_to_valid_instrumental_table() {
        let sc = Scenario::bell(2, 2, 2, 2);
        let mut p = vec![0.0; 16];
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    let b = a ^ (x & y);
                    p[sc.ix_bell(a, b, x, y)] = 0.5;
                }
            }
        }
        let pr = Behavior::new(sc, p).unwrap();
        assert!((chsh_value(&pr) - 4.0).abs() < 1e-12);
        let i = instrumental_from_bell(&pr).unwrap();
        assert_eq!(i.scenario(), Scenario::instrumental(2, 2, 2));
    }

    #[test]
    fn instrumental_from_quantum_examples() {
        let prod = schmidt_pair(0.0).unwrap();
        let a = [xz(0.7), xz(2.1)];
        let b = [xz(0.2), xz(1.4)];
        let i = instrumental_from_quantum(&prod, &a, &b).unwrap();
        for x in 0..2 {
            for aa in 0..2 {
                for bb in 0..2 {
                    let f = i.obs_marginal_a(aa, x) * i.do_(bb, aa);
                    assert!((i.obs(aa, bb, x) - f).abs() < 1e-12);
                }
            }
        }
        assert!(instrumental_from_quantum(&prod, &a, &b[..1]).is_err());
        // identical Bob measurements: no causal effect
        let same = instrumental_from_quantum(&singlet(), &a, &[xz(0.4), xz(0.4)]).unwrap();
        assert!(ace(&same).unwrap() < 1e-12);
    }

    #[test]
    fn ace_examples() {
        let sc = Scenario::instrumental(2, 2, 2);
        let mut p = vec![0.0; sc.len()];
        p[sc.ix_obs(0, 0, 0)] = 1.0;
        p[sc.ix_obs(1, 1, 1)] = 1.0;
        p[sc.ix_do(0, 0)] = 1.0;
        p[sc.ix_do(1, 1)] = 1.0;
        let b = Behavior::new(sc, p).unwrap();
        assert_eq!(ace(&b).unwrap(), 1.0);
    }

    #[test]
    fn bilocal_swapping_and_mixed_sources() {
        let phi = crate::qcore::bell_state(crate::qcore::BellLabel::PhiPlus).unwrap();
        let a = [xz(PI / 4.0), xz(-PI / 4.0)];
        let cc = [xz(PI / 4.0), xz(-PI / 4.0)];
        let bsm = crate::qcore::bell_state_measurement();
        let b = bilocal_from_quantum(&phi, &phi, &a, &bsm, &cc).unwrap();
        assert_eq!(b.scenario(), Scenario::Bilocal { n_a: 2, n_c: 2 });
        let mixed = QuantumState::maximally_mixed(4);
        let m = bilocal_from_quantum(&mixed, &mixed, &a, &bsm, &cc).unwrap();
        assert!(m.probs().iter().all(|v| (v - 1.0 / 16.0).abs() < 1e-12));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let a = [xz(0.3), xz(1.9)];
        let b = [xz(0.8), xz(-1.1)];
        let beh = bell_from_quantum(&schmidt_pair(0.61).unwrap(), &a, &b).unwrap();
        let csv = to_csv(&beh);
        assert!(csv.starts_with("scenario,a,b,x,y,value\n"));
        let back = from_csv(&csv).unwrap();
        assert_eq!(back, beh);
        assert_eq!(to_csv(&back), csv);
        let j = to_json(&beh);
        assert_eq!(from_json(&j).unwrap(), beh);

        let inst = instrumental_from_quantum(&singlet(), &a, &b).unwrap();
        assert_eq!(from_csv(&to_csv(&inst)).unwrap(), inst);
        assert_eq!(from_json(&to_json(&inst)).unwrap(), inst);
    }

    #[test]
    fn rejects_bad_tables() {
        let sc = Scenario::pam(1, 1, 2);
        assert!(Behavior::new(sc, vec![0.5, 0.6]).is_err());
        assert!(Behavior::new(sc, vec![1.1, -0.1]).is_err());
        let ok = Behavior::new(sc, vec![1.0 + 5e-10, -5e-10]).unwrap();
        assert_eq!(ok.get(1), 0.0);
        assert!(clamp_count() >= 1);
    }

    #[test]
    fn index_layouts_round_trip() {
        for sc in [
            Scenario::bell(3, 2, 2, 3),
            Scenario::instrumental(3, 2, 3),
            Scenario::pam(4, 2, 3),
            Scenario::Bilocal { n_a: 3, n_c: 2 },
            Scenario::NParty { n: 3 },
        ] {
            for k in 0..sc.len() {
                assert_eq!(sc.flat_index(&sc.index_tuple(k)).unwrap(), k, "{}", sc.label());
            }
            let covered: usize = sc.normalization_groups().iter().map(Vec::len).sum();
            assert_eq!(covered, sc.len());
            assert_eq!(Scenario::parse_label(&sc.label()).unwrap(), sc);
        }
    }
}
