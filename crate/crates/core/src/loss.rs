//! Detector-inefficiency models.
//!
//! Each map takes an ideal behavior and returns what imperfect detectors
//! record. A party's detector clicks with probability η, independently of
//! everything else. A missed click either lands on a fixed outcome (the
//! sink, "absorption") or on a new outcome ∅ appended as the last index.

use serde::{Deserialize, Serialize};

use crate::behaviors::{Behavior, Scenario};
use crate::error::{Error, Result};

fn check_eta(name: &str, eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) || eta.is_nan() {
        return Err(Error::InvalidParameter(format!("{name} = {eta} outside [0,1]")));
    }
    Ok(())
}

fn check_sink(who: &str, sink: usize, n: usize) -> Result<()> {
    if sink >= n {
        return Err(Error::InvalidParameter(format!("{who} sink {sink} is not one of {n} outcomes")));
    }
    Ok(())
}

fn bell_dims(b: &Behavior) -> Result<(usize, usize, usize, usize)> {
    match b.scenario() {
        Scenario::Bell { n_a, n_b, n_x, n_y } => Ok((n_a, n_b, n_x, n_y)),
        s => Err(Error::ScenarioMismatch(format!("expected a Bell table, got {}", s.label()))),
    }
}

fn instrumental_dims(b: &Behavior) -> Result<(usize, usize, usize)> {
    match b.scenario() {
        Scenario::Instrumental { n_x, n_a, n_b } => Ok((n_x, n_a, n_b)),
        s => Err(Error::ScenarioMismatch(format!("expected an instrumental table, got {}", s.label()))),
    }
}

fn pam_dims(b: &Behavior) -> Result<(usize, usize, usize)> {
    match b.scenario() {
        Scenario::Pam { n_x, n_y, n_b } => Ok((n_x, n_y, n_b)),
        s => Err(Error::ScenarioMismatch(format!("expected a prepare-and-measure table, got {}", s.label()))),
    }
}

/// Missed clicks are read as `sink_a` / `sink_b`.
pub fn bell_absorb(b: &Behavior, eta1: f64, eta2: f64, sink_a: usize, sink_b: usize) -> Result<Behavior> {
    let (n_a, n_b, n_x, n_y) = bell_dims(b)?;
    check_eta("eta1", eta1)?;
    check_eta("eta2", eta2)?;
    check_sink("Alice", sink_a, n_a)?;
    check_sink("Bob", sink_b, n_b)?;
    let sc = b.scenario();
    let mut p = vec![0.0; sc.len()];
    for x in 0..n_x {
        for y in 0..n_y {
            for a in 0..n_a {
                for bb in 0..n_b {
                    p[sc.ix_bell(a, bb, x, y)] = eta1 * eta2 * b.bell(a, bb, x, y);
                }
                p[sc.ix_bell(a, sink_b, x, y)] += eta1 * (1.0 - eta2) * b.bell_marginal_a(a, x, y);
            }
            for bb in 0..n_b {
                p[sc.ix_bell(sink_a, bb, x, y)] += (1.0 - eta1) * eta2 * b.bell_marginal_b(bb, x, y);
            }
            p[sc.ix_bell(sink_a, sink_b, x, y)] += (1.0 - eta1) * (1.0 - eta2);
        }
    }
    Ok(Behavior::trusted(sc, p))
}

/// Each party gains a last outcome ∅ for the missed click.
pub fn bell_extra_outcome(b: &Behavior, eta1: f64, eta2: f64) -> Result<Behavior> {
    let (n_a, n_b, n_x, n_y) = bell_dims(b)?;
    check_eta("eta1", eta1)?;
    check_eta("eta2", eta2)?;
    let sc = Scenario::bell(n_a + 1, n_b + 1, n_x, n_y);
    let mut p = vec![0.0; sc.len()];
    for x in 0..n_x {
        for y in 0..n_y {
            for a in 0..n_a {
                for bb in 0..n_b {
                    p[sc.ix_bell(a, bb, x, y)] = eta1 * eta2 * b.bell(a, bb, x, y);
                }
                p[sc.ix_bell(a, n_b, x, y)] = eta1 * (1.0 - eta2) * b.bell_marginal_a(a, x, y);
            }
            for bb in 0..n_b {
                p[sc.ix_bell(n_a, bb, x, y)] = (1.0 - eta1) * eta2 * b.bell_marginal_b(bb, x, y);
            }
            p[sc.ix_bell(n_a, n_b, x, y)] = (1.0 - eta1) * (1.0 - eta2);
        }
    }
    Ok(Behavior::trusted(sc, p))
}

/// Absorption in the instrumental scenario. When Alice misses, her
/// recorded outcome is the sink and Bob measures with the setting that
/// belongs to it, so that row picks up Bob's interventional statistics.
/// Written for any cardinalities; for binary a, b it is exactly the
/// Bell absorption model pushed through the Bell-to-instrumental map.
pub fn instrumental_absorb(b: &Behavior, eta1: f64, eta2: f64, sink_a: usize, sink_b: usize) -> Result<Behavior> {
    let (n_x, n_a, n_b) = instrumental_dims(b)?;
    check_eta("eta1", eta1)?;
    check_eta("eta2", eta2)?;
    check_sink("Alice", sink_a, n_a)?;
    check_sink("Bob", sink_b, n_b)?;
    let sc = b.scenario();
    let mut p = vec![0.0; sc.len()];
    for x in 0..n_x {
        for a in 0..n_a {
            for bb in 0..n_b {
                p[sc.ix_obs(a, bb, x)] = eta1 * eta2 * b.obs(a, bb, x);
            }
            p[sc.ix_obs(a, sink_b, x)] += eta1 * (1.0 - eta2) * b.obs_marginal_a(a, x);
        }
        for bb in 0..n_b {
            p[sc.ix_obs(sink_a, bb, x)] += (1.0 - eta1) * eta2 * b.do_(bb, sink_a);
        }
        p[sc.ix_obs(sink_a, sink_b, x)] += (1.0 - eta1) * (1.0 - eta2);
    }
    lossy_do(b, &sc, &mut p, eta2, sink_b);
    Ok(Behavior::trusted(sc, p))
}

/// do-terms with Bob's missed clicks sent to `sink`.
fn lossy_do(b: &Behavior, sc: &Scenario, p: &mut [f64], eta2: f64, sink: usize) {
    let Scenario::Instrumental { n_a, n_b, .. } = *sc else { unreachable!() };
    for a in 0..n_a {
        for bb in 0..n_b {
            if bb < n_b && sink < n_b {
                p[sc.ix_do(bb, a)] = eta2 * b.do_(bb, a);
            }
        }
        p[sc.ix_do(sink, a)] += 1.0 - eta2;
    }
}

/// Alice's detectors are perfect; Bob gains ∅.
pub fn instrumental_perfect_alice(b: &Behavior, eta2: f64) -> Result<Behavior> {
    instrumental_hybrid(b, 1.0, eta2, 0)
}

/// Alice's missed clicks are absorbed into `sink_a`; Bob gains ∅.
pub fn instrumental_hybrid(b: &Behavior, eta1: f64, eta2: f64, sink_a: usize) -> Result<Behavior> {
    let (n_x, n_a, n_b) = instrumental_dims(b)?;
    check_eta("eta1", eta1)?;
    check_eta("eta2", eta2)?;
    check_sink("Alice", sink_a, n_a)?;
    let sc = Scenario::instrumental(n_x, n_a, n_b + 1);
    let empty = n_b;
    let mut p = vec![0.0; sc.len()];
    for x in 0..n_x {
        for a in 0..n_a {
            for bb in 0..n_b {
                p[sc.ix_obs(a, bb, x)] = eta1 * eta2 * b.obs(a, bb, x);
            }
            p[sc.ix_obs(a, empty, x)] = eta1 * (1.0 - eta2) * b.obs_marginal_a(a, x);
        }
        for bb in 0..n_b {
            p[sc.ix_obs(sink_a, bb, x)] += (1.0 - eta1) * eta2 * b.do_(bb, sink_a);
        }
        p[sc.ix_obs(sink_a, empty, x)] += (1.0 - eta1) * (1.0 - eta2);
    }
    for a in 0..n_a {
        for bb in 0..n_b {
            p[sc.ix_do(bb, a)] = eta2 * b.do_(bb, a);
        }
        p[sc.ix_do(empty, a)] = 1.0 - eta2;
    }
    Ok(Behavior::trusted(sc, p))
}

fn check_setting_etas(eta_y: &[f64], n_y: usize) -> Result<()> {
    if eta_y.len() != n_y {
        return Err(Error::InvalidParameter(format!("{} efficiencies for {n_y} measurement settings", eta_y.len())));
    }
    eta_y.iter().try_for_each(|e| check_eta("eta_y", *e))
}

/// p'(b|x,y) = η_y p(b|x,y) + (1−η_y) δ_{b,sink}
pub fn pam_absorb(b: &Behavior, eta_y: &[f64], sink: usize) -> Result<Behavior> {
    let (n_x, n_y, n_b) = pam_dims(b)?;
    check_setting_etas(eta_y, n_y)?;
    check_sink("receiver", sink, n_b)?;
    let sc = b.scenario();
    let mut p = vec![0.0; sc.len()];
    for x in 0..n_x {
        for (y, eta) in eta_y.iter().enumerate() {
            for bb in 0..n_b {
                p[sc.ix_pam(bb, x, y)] = eta * b.pam(bb, x, y);
            }
            p[sc.ix_pam(sink, x, y)] += 1.0 - eta;
        }
    }
    Ok(Behavior::trusted(sc, p))
}

/// Receiver gains ∅ with probability 1−η_y.
pub fn pam_extra_outcome(b: &Behavior, eta_y: &[f64]) -> Result<Behavior> {
    let (n_x, n_y, n_b) = pam_dims(b)?;
    check_setting_etas(eta_y, n_y)?;
    let sc = Scenario::pam(n_x, n_y, n_b + 1);
    let mut p = vec![0.0; sc.len()];
    for x in 0..n_x {
        for (y, eta) in eta_y.iter().enumerate() {
            for bb in 0..n_b {
                p[sc.ix_pam(bb, x, y)] = eta * b.pam(bb, x, y);
            }
            p[sc.ix_pam(n_b, x, y)] = 1.0 - eta;
        }
    }
    Ok(Behavior::trusted(sc, p))
}

/// The two end parties of the bilocal chain record ∅ (outcome 2) when
/// their detector misses; the middle party's joint measurement is ideal.
/// Correlators over conclusive outcomes scale by η₁η₂, so the IJ value
/// scales by √(η₁η₂).
pub fn bilocal_end_loss(b: &Behavior, eta1: f64, eta2: f64) -> Result<Behavior> {
    if b.scenario() != (Scenario::Bilocal { n_a: 2, n_c: 2 }) {
        return Err(Error::ScenarioMismatch(format!("expected an ideal bilocal table, got {}", b.scenario().label())));
    }
    check_eta("eta1", eta1)?;
    check_eta("eta2", eta2)?;
    let sc = Scenario::Bilocal { n_a: 3, n_c: 3 };
    let mut p = vec![0.0; sc.len()];
    for x in 0..2 {
        for z in 0..2 {
            for b0 in 0..2 {
                for b1 in 0..2 {
                    let q = |a: usize, c: usize| b.bilocal(a, b0, b1, c, x, z);
                    for a in 0..2 {
                        for c in 0..2 {
                            p[sc.ix_bilocal(a, b0, b1, c, x, z)] = eta1 * eta2 * q(a, c);
                        }
                        p[sc.ix_bilocal(a, b0, b1, 2, x, z)] = eta1 * (1.0 - eta2) * (q(a, 0) + q(a, 1));
                    }
                    for c in 0..2 {
                        p[sc.ix_bilocal(2, b0, b1, c, x, z)] = (1.0 - eta1) * eta2 * (q(0, c) + q(1, c));
                    }
                    p[sc.ix_bilocal(2, b0, b1, 2, x, z)] =
                        (1.0 - eta1) * (1.0 - eta2) * (q(0, 0) + q(0, 1) + q(1, 0) + q(1, 1));
                }
            }
        }
    }
    Ok(Behavior::trusted(sc, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossModel {
    Absorption,
    ExtraOutcome,
    /// Alice absorbs into `sink_a`, Bob records ∅ (instrumental only).
    Hybrid,
    /// Perfect Alice, Bob records ∅ (instrumental only).
    PerfectAlice,
}

/// Serialized form: `{model, eta: [..] | eta_y: [..], sink_a, sink_b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub model: LossModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink_a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink_b: Option<usize>,
}

/// Default Alice sink for the hybrid model when none is given.
pub const HYBRID_DEFAULT_SINK_A: usize = 1;

impl LossSpec {
    pub fn absorption(eta1: f64, eta2: f64, sink_a: usize, sink_b: usize) -> Self {
        LossSpec { model: LossModel::Absorption, eta: Some(vec![eta1, eta2]), eta_y: None, sink_a: Some(sink_a), sink_b: Some(sink_b) }
    }

    pub fn extra_outcome(eta1: f64, eta2: f64) -> Self {
        LossSpec { model: LossModel::ExtraOutcome, eta: Some(vec![eta1, eta2]), eta_y: None, sink_a: None, sink_b: None }
    }

    pub fn hybrid(eta1: f64, eta2: f64, sink_a: usize) -> Self {
        LossSpec { model: LossModel::Hybrid, eta: Some(vec![eta1, eta2]), eta_y: None, sink_a: Some(sink_a), sink_b: None }
    }

    pub fn perfect_alice(eta2: f64) -> Self {
        LossSpec { model: LossModel::PerfectAlice, eta: Some(vec![1.0, eta2]), eta_y: None, sink_a: None, sink_b: None }
    }

    pub fn pam_absorption(eta_y: Vec<f64>, sink: usize) -> Self {
        LossSpec { model: LossModel::Absorption, eta: None, eta_y: Some(eta_y), sink_a: None, sink_b: Some(sink) }
    }

    pub fn pam_extra_outcome(eta_y: Vec<f64>) -> Self {
        LossSpec { model: LossModel::ExtraOutcome, eta: None, eta_y: Some(eta_y), sink_a: None, sink_b: None }
    }

    /// Same model and sinks with party efficiencies replaced.
    pub fn with_parties(&self, eta1: f64, eta2: f64) -> Self {
        LossSpec { eta: Some(vec![eta1, eta2]), eta_y: None, ..self.clone() }
    }

    /// Same model and sinks with per-setting efficiencies replaced.
    pub fn with_settings(&self, eta_y: Vec<f64>) -> Self {
        LossSpec { eta: None, eta_y: Some(eta_y), ..self.clone() }
    }

    fn parties(&self) -> Result<(f64, f64)> {
        match self.eta.as_deref() {
            Some([e]) => Ok((*e, *e)),
            Some([e1, e2]) => Ok((*e1, *e2)),
            _ => Err(Error::InvalidParameter("party efficiencies must be given as eta: [η] or [η₁, η₂]".into())),
        }
    }

    fn sink(v: Option<usize>, what: &str) -> Result<usize> {
        v.ok_or_else(|| Error::InvalidParameter(format!("absorption model needs an explicit {what}")))
    }

    pub fn apply(&self, b: &Behavior) -> Result<Behavior> {
        match (b.scenario(), self.model) {
            (Scenario::Bell { .. }, LossModel::Absorption) => {
                let (e1, e2) = self.parties()?;
                bell_absorb(b, e1, e2, Self::sink(self.sink_a, "sink_a")?, Self::sink(self.sink_b, "sink_b")?)
            }
            (Scenario::Bell { .. }, LossModel::ExtraOutcome) => {
                let (e1, e2) = self.parties()?;
                bell_extra_outcome(b, e1, e2)
            }
            (Scenario::Instrumental { .. }, LossModel::Absorption) => {
                let (e1, e2) = self.parties()?;
                instrumental_absorb(b, e1, e2, Self::sink(self.sink_a, "sink_a")?, Self::sink(self.sink_b, "sink_b")?)
            }
            (Scenario::Instrumental { .. }, LossModel::Hybrid) => {
                let (e1, e2) = self.parties()?;
                instrumental_hybrid(b, e1, e2, self.sink_a.unwrap_or(HYBRID_DEFAULT_SINK_A))
            }
            (Scenario::Instrumental { .. }, LossModel::PerfectAlice) => {
                let (_, e2) = self.parties()?;
                instrumental_perfect_alice(b, e2)
            }
            (Scenario::Instrumental { .. }, LossModel::ExtraOutcome) => Err(Error::InvalidParameter(
                "an explicit no-click for Alice would need p(b|do(∅)); use hybrid or perfect_alice".into(),
            )),
            (Scenario::Pam { .. }, LossModel::Absorption) => {
                let eta_y = self.eta_y.as_deref().ok_or_else(|| Error::InvalidParameter("PAM loss needs eta_y".into()))?;
                pam_absorb(b, eta_y, Self::sink(self.sink_b, "sink_b")?)
            }
            (Scenario::Pam { .. }, LossModel::ExtraOutcome) => {
                let eta_y = self.eta_y.as_deref().ok_or_else(|| Error::InvalidParameter("PAM loss needs eta_y".into()))?;
                pam_extra_outcome(b, eta_y)
            }
            (Scenario::Bilocal { .. }, LossModel::ExtraOutcome) => {
                let (e1, e2) = self.parties()?;
                bilocal_end_loss(b, e1, e2)
            }
            (sc, model) => Err(Error::ScenarioMismatch(format!("loss model {model:?} is not defined for {}", sc.label()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviors::{bell_from_quantum, instrumental_from_bell, instrumental_from_quantum, pam_from_quantum};
    use crate::qcore::{bloch_direction, bloch_projective, bloch_qubit, schmidt_pair, Povm};

    fn m(t: f64, p: f64) -> Povm {
        bloch_projective(bloch_direction(t, p)).unwrap()
    }

    fn sample_bell() -> Behavior {
        bell_from_quantum(&schmidt_pair(0.5).unwrap(), &[m(0.2, 0.0), m(1.7, 0.3)], &[m(0.9, 1.0), m(2.4, -0.2)]).unwrap()
    }

    fn sample_instrumental() -> Behavior {
        instrumental_from_quantum(&schmidt_pair(0.6).unwrap(), &[m(0.1, 0.0), m(1.5, 0.4)], &[m(0.8, 0.2), m(2.2, 1.1)])
            .unwrap()
    }

    fn renormalized(b: &Behavior) -> Behavior {
        Behavior::new(b.scenario(), b.probs().to_vec()).expect("loss output must be a valid behavior")
    }

    #[test]
    fn bell_absorb_limits() {
        let b = sample_bell();
        let same = bell_absorb(&b, 1.0, 1.0, 1, 0).unwrap();
        assert!(same.probs().iter().zip(b.probs()).all(|(x, y)| (x - y).abs() < 1e-15));
        let dead = renormalized(&bell_absorb(&b, 0.0, 0.0, 1, 0).unwrap());
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(dead.bell(1, 0, x, y), 1.0);
            }
        }
        renormalized(&bell_absorb(&b, 0.3, 0.8, 0, 1).unwrap());
        assert!(bell_absorb(&b, 1.2, 0.5, 1, 0).is_err());
        assert!(bell_absorb(&b, 0.5, 0.5, 2, 0).is_err());
    }

    #[test]
    fn bell_extra_outcome_structure() {
        let b = sample_bell();
        let full = bell_extra_outcome(&b, 1.0, 1.0).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..3 {
                    for bb in 0..3 {
                        let expect = if a < 2 && bb < 2 { b.bell(a, bb, x, y) } else { 0.0 };
                        assert!((full.bell(a, bb, x, y) - expect).abs() < 1e-15);
                    }
                }
            }
        }
        let l = renormalized(&bell_extra_outcome(&b, 0.7, 0.4).unwrap());
        for a in 0..2 {
            assert!((l.bell_marginal_a(a, 1, 0) - 0.7 * b.bell_marginal_a(a, 1, 0)).abs() < 1e-12);
        }
        assert!(crate::behaviors::no_signaling_report(&l).unwrap().pass);
    }

    #[test]
    fn instrumental_absorb_matches_bell_route() {
        let bell = sample_bell();
        for (sa, sb) in [(1, 0), (1, 1), (0, 0), (0, 1)] {
            let (e1, e2) = (0.73, 0.58);
            let via_bell = instrumental_from_bell(&renormalized(&bell_absorb(&bell, e1, e2, sa, sb).unwrap())).unwrap();
            let direct = instrumental_absorb(&instrumental_from_bell(&bell).unwrap(), e1, e2, sa, sb).unwrap();
            for (x, y) in via_bell.probs().iter().zip(direct.probs()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_alice_and_hybrid() {
        let b = sample_instrumental();
        let id = instrumental_perfect_alice(&b, 1.0).unwrap();
        for x in 0..2 {
            for a in 0..2 {
                for bb in 0..2 {
                    assert_eq!(id.obs(a, bb, x), b.obs(a, bb, x));
                }
                assert_eq!(id.obs(a, 2, x), 0.0);
            }
        }
        let dead = renormalized(&instrumental_perfect_alice(&b, 0.0).unwrap());
        for x in 0..2 {
            for a in 0..2 {
                assert!((dead.obs(a, 2, x) - b.obs_marginal_a(a, x)).abs() < 1e-15);
            }
        }
        let h = instrumental_hybrid(&b, 1.0, 0.6, 1).unwrap();
        assert_eq!(h, instrumental_perfect_alice(&b, 0.6).unwrap());
        renormalized(&instrumental_hybrid(&b, 0.35, 0.6, 0).unwrap());
        renormalized(&instrumental_absorb(&b, 0.35, 0.6, 1, 1).unwrap());
    }

    #[test]
    fn pam_models() {
        let states: Vec<_> = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.6, -0.8]]
            .iter()
            .map(|r| bloch_qubit(*r).unwrap())
            .collect();
        let b = pam_from_quantum(&states, &[m(0.4, 0.1), m(1.9, 2.0)]).unwrap();
        assert_eq!(pam_absorb(&b, &[1.0, 1.0], 0).unwrap(), b);
        let abs = renormalized(&pam_absorb(&b, &[0.6, 0.9], 1).unwrap());
        assert!((abs.pam(1, 2, 0) - (0.6 * b.pam(1, 2, 0) + 0.4)).abs() < 1e-15);
        let ext = renormalized(&pam_extra_outcome(&b, &[0.0, 0.0]).unwrap());
        assert!((0..3).all(|x| ext.pam(2, x, 1) == 1.0));
        assert!(pam_absorb(&b, &[0.5], 0).is_err());
    }

    #[test]
    fn loss_spec_json_and_dispatch() {
        let spec: LossSpec = serde_json::from_str(r#"{"model":"absorption","eta":[0.8,0.7],"sink_a":1,"sink_b":0}"#).unwrap();
        let b = sample_bell();
        assert_eq!(spec.apply(&b).unwrap(), bell_absorb(&b, 0.8, 0.7, 1, 0).unwrap());
        let no_sink: LossSpec = serde_json::from_str(r#"{"model":"absorption","eta":[0.8]}"#).unwrap();
        assert!(no_sink.apply(&b).is_err());
        let pam: LossSpec = serde_json::from_str(r#"{"model":"extra_outcome","eta_y":[0.5,0.5]}"#).unwrap();
        assert!(pam.apply(&b).is_err());
        let inst = LossSpec::extra_outcome(0.9, 0.9);
        assert!(inst.apply(&sample_instrumental()).is_err());
        assert!(serde_json::from_str::<LossSpec>(r#"{"model":"absorption","etaa":[1]}"#).is_err());
    }
}
