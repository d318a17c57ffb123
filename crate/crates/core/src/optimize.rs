//! Strategy search and threshold location.
//!
//! Every search maximizes the violation margin of a functional (see
//! [`Functional::margin`]) over a box-bounded parameter vector that decodes
//! to pure states and projective measurements. Restarts run on rayon, each
//! with its own seed derived from the configured seed and the restart index,
//! so results do not depend on the thread count.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behaviors::{
    bell_from_quantum, bilocal_from_quantum, instrumental_from_quantum, nparty_from_quantum, pam_from_quantum,
    Behavior, Scenario,
};
use crate::error::{Error, Result};
use crate::functionals::{Functional, Kind};
use crate::loss::{LossModel, LossSpec};
use crate::qcore::{
    apply_channel, bell_state_measurement, bloch_direction, bloch_projective, bloch_qubit, c, make_channel,
    qutrit_phase_fourier, qutrit_schmidt, schmidt_pair, ChannelKind, Povm, QuantumState,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpace {
    /// cosθ|00⟩ + sinθ|11⟩ with projective qubit measurements, outcomes
    /// padded with zero effects up to `n_a`, `n_b`.
    /// Params: θ, then (polar, azimuth) per Alice setting, then per Bob setting.
    BellQubits { n_a: usize, n_b: usize, n_x: usize, n_y: usize },
    /// Qutrit Schmidt state with phase-plus-Fourier measurements, two
    /// settings each. Params: θ₀, φ₀, then two free phases per setting
    /// (Alice x=0,1 then Bob y=0,1); the first phase of each triple is 0.
    BellQutritFourier,
    /// Instrumental DAG with a two-qubit source. Alice has `n_x` settings,
    /// Bob one measurement per Alice outcome. Params as for `BellQubits`
    /// with Bob's settings indexed by a.
    InstrumentalQubits { n_x: usize, n_a: usize, n_b: usize },
    /// Qubit prepare-and-measure. Params: (polar, azimuth) per preparation,
    /// then per measurement; with `mixed`, each preparation gains a Bloch
    /// radius. `channel` acts on every prepared state.
    Pam {
        n_x: usize,
        n_y: usize,
        n_b: usize,
        #[serde(default)]
        mixed: bool,
        #[serde(default)]
        channel: Option<ChannelKind>,
    },
    /// Two Schmidt angles, then (polar, azimuth) for A₀, A₁, C₀, C₁; the
    /// middle party performs the Bell-state measurement.
    Bilocal,
    /// cosθ|0…0⟩ + e^{iφ} sinθ|1…1⟩ with two projective settings per party.
    NParty { n: usize },
}

impl StrategySpace {
    /// Default space for a functional, given the loss model that will be
    /// applied. Under the extra-outcome model a functional with more than
    /// two outcomes already counts the no-click one, so the ideal table has
    /// one fewer; binary functionals are embedded with ∅ weighted zero.
    pub fn for_functional(f: &Functional, loss: Option<&LossSpec>) -> Result<Self> {
        let adds_outcome = loss.map(|l| l.model);
        let ideal = |n: usize| if adds_outcome == Some(LossModel::ExtraOutcome) && n > 2 { n - 1 } else { n };
        let space = match f.scenario {
            Scenario::Bell { n_a, n_b, n_x, n_y } => {
                if f.name == "cglmp3" {
                    StrategySpace::BellQutritFourier
                } else {
                    StrategySpace::BellQubits { n_a: ideal(n_a), n_b: ideal(n_b), n_x, n_y }
                }
            }
            Scenario::Instrumental { n_x, n_a, n_b } => match adds_outcome {
                Some(LossModel::Hybrid | LossModel::PerfectAlice) => StrategySpace::InstrumentalQubits { n_x, n_a, n_b: n_b - 1 },
                _ => StrategySpace::InstrumentalQubits { n_x, n_a, n_b },
            },
            Scenario::Pam { n_x, n_y, n_b } => {
                StrategySpace::Pam { n_x, n_y, n_b: ideal(n_b), mixed: false, channel: None }
            }
            Scenario::Bilocal { .. } => StrategySpace::Bilocal,
            Scenario::NParty { n } => StrategySpace::NParty { n },
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            StrategySpace::BellQubits { n_a, n_b, n_x, n_y } => {
                if n_a < 2 || n_b < 2 || n_x == 0 || n_y == 0 {
                    return bad(format!("qubit Bell space needs ≥2 outcomes and ≥1 setting, got {self:?}"));
                }
            }
            StrategySpace::InstrumentalQubits { n_x, n_a, n_b } => {
                if n_a < 2 || n_b < 2 || n_x == 0 {
                    return bad(format!("qubit instrumental space needs ≥2 outcomes, got {self:?}"));
                }
            }
            StrategySpace::Pam { n_x, n_y, n_b, channel, .. } => {
                if n_b < 2 || n_x == 0 || n_y == 0 {
                    return bad(format!("qubit PAM space needs ≥2 outcomes, got {self:?}"));
                }
                if let Some(ch) = channel {
                    make_channel(ch)?;
                    if matches!(ch, ChannelKind::Depolarizing { d, .. } if d != 2)
                        || matches!(ch, ChannelKind::AmplitudeDampingFock { .. })
                    {
                        return bad("PAM strategies are qubits; the channel must act on dimension 2".into());
                    }
                }
            }
            StrategySpace::NParty { n } => {
                if !(2..=6).contains(&n) {
                    return bad(format!("n-party space supports 2..=6 parties, got {n}"));
                }
            }
            StrategySpace::BellQutritFourier | StrategySpace::Bilocal => {}
        }
        Ok(())
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let angle_pairs = |k: usize| (0..k).flat_map(|_| [(0.0, PI), (-PI, PI)]);
        match *self {
            StrategySpace::BellQubits { n_x, n_y, .. } => {
                std::iter::once((0.0, FRAC_PI_2)).chain(angle_pairs(n_x + n_y)).collect()
            }
            StrategySpace::InstrumentalQubits { n_x, n_a, .. } => {
                std::iter::once((0.0, FRAC_PI_2)).chain(angle_pairs(n_x + n_a)).collect()
            }
            StrategySpace::BellQutritFourier => {
                let mut b = vec![(0.0, FRAC_PI_2), (0.0, FRAC_PI_2)];
                b.extend(std::iter::repeat((-PI, PI)).take(8));
                b
            }
            StrategySpace::Pam { n_x, n_y, mixed, .. } => {
                let mut b = Vec::new();
                for _ in 0..n_x {
                    b.extend([(0.0, PI), (-PI, PI)]);
                    if mixed {
                        b.push((0.0, 1.0));
                    }
                }
                b.extend(angle_pairs(n_y));
                b
            }
            StrategySpace::Bilocal => {
                let mut b = vec![(0.0, FRAC_PI_2), (0.0, FRAC_PI_2)];
                b.extend(angle_pairs(4));
                b
            }
            StrategySpace::NParty { n } => {
                let mut b = vec![(0.0, FRAC_PI_2), (-PI, PI)];
                b.extend(angle_pairs(2 * n));
                b
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds().len()
    }

    /// Same space with the prepared-state channel replaced.
    pub fn with_channel(&self, ch: Option<ChannelKind>) -> Result<Self> {
        match self {
            StrategySpace::Pam { n_x, n_y, n_b, mixed, .. } => {
                let s = StrategySpace::Pam { n_x: *n_x, n_y: *n_y, n_b: *n_b, mixed: *mixed, channel: ch };
                s.validate()?;
                Ok(s)
            }
            _ => Err(Error::InvalidParameter("only prepare-and-measure spaces carry a state channel".into())),
        }
    }

    /// Ideal (lossless) behavior of a parameter vector.
    ///
    /// Bipartite spaces use pure-state amplitudes directly; [`decode_general`]
    /// is the density-matrix route and agrees to rounding.
    ///
    /// [`decode_general`]: StrategySpace::decode_general
    pub fn decode(&self, params: &[f64]) -> Result<Behavior> {
        self.check_params(params)?;
        match *self {
            StrategySpace::BellQubits { n_a, n_b, n_x, n_y } => {
                let g = [params[0].cos(), params[0].sin()];
                let a: Vec<_> = (0..n_x).map(|x| qubit_bras(params[1 + 2 * x], params[2 + 2 * x])).collect();
                let b: Vec<_> = (0..n_y).map(|y| qubit_bras(params[1 + 2 * (n_x + y)], params[2 + 2 * (n_x + y)])).collect();
                pure_bell(&g, &a, &b, n_a, n_b)
            }
            StrategySpace::BellQutritFourier => {
                let t = params[0];
                let ph = params[1];
                let g = [ph.cos() * t.sin(), ph.sin() * t.sin(), t.cos()];
                let phases = |k: usize| [0.0, params[2 + 2 * k], params[3 + 2 * k]];
                let a = [fourier_bras(phases(0), false), fourier_bras(phases(1), false)];
                let b = [fourier_bras(phases(2), true), fourier_bras(phases(3), true)];
                pure_bell(&g, &a, &b, 3, 3)
            }
            StrategySpace::InstrumentalQubits { n_x, n_a, n_b } => {
                let g = [params[0].cos(), params[0].sin()];
                let a: Vec<_> = (0..n_x).map(|x| qubit_bras(params[1 + 2 * x], params[2 + 2 * x])).collect();
                let b: Vec<_> = (0..n_a).map(|k| qubit_bras(params[1 + 2 * (n_x + k)], params[2 + 2 * (n_x + k)])).collect();
                let sc = Scenario::instrumental(n_x, n_a, n_b);
                let mut p = vec![0.0; sc.len()];
                for (x, ax) in a.iter().enumerate() {
                    for (aa, ua) in ax.iter().enumerate() {
                        for (bb, vb) in b[aa].iter().enumerate() {
                            p[sc.ix_obs(aa, bb, x)] = amplitude(&g, ua, vb).norm_sqr();
                        }
                    }
                }
                for (aa, ba) in b.iter().enumerate() {
                    for (bb, vb) in ba.iter().enumerate() {
                        p[sc.ix_do(bb, aa)] = g.iter().zip(vb).map(|(gj, v)| gj * gj * v.norm_sqr()).sum();
                    }
                }
                Behavior::new(sc, p)
            }
            _ => self.decode_general(params),
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("space takes {} parameters, got {}", self.dim(), params.len())));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite strategy parameter".into()));
        }
        Ok(())
    }

    /// Density-matrix route through the Born rule for every space.
    pub fn decode_general(&self, params: &[f64]) -> Result<Behavior> {
        self.check_params(params)?;
        let qubit = |k: usize, n: usize| -> Result<Povm> {
            Ok(bloch_projective(bloch_direction(params[k], params[k + 1]))?.padded(n))
        };
        match *self {
            StrategySpace::BellQubits { n_a, n_b, n_x, n_y } => {
                let state = schmidt_pair(params[0])?;
                let a: Vec<Povm> = (0..n_x).map(|x| qubit(1 + 2 * x, n_a)).collect::<Result<_>>()?;
                let b: Vec<Povm> = (0..n_y).map(|y| qubit(1 + 2 * (n_x + y), n_b)).collect::<Result<_>>()?;
                bell_from_quantum(&state, &a, &b)
            }
            StrategySpace::InstrumentalQubits { n_x, n_a, n_b } => {
                let state = schmidt_pair(params[0])?;
                let a: Vec<Povm> = (0..n_x).map(|x| qubit(1 + 2 * x, n_a)).collect::<Result<_>>()?;
                let b: Vec<Povm> = (0..n_a).map(|k| qubit(1 + 2 * (n_x + k), n_b)).collect::<Result<_>>()?;
                instrumental_from_quantum(&state, &a, &b)
            }
            StrategySpace::BellQutritFourier => {
                let state = qutrit_schmidt(params[0], params[1])?;
                let phases = |k: usize| [0.0, params[2 + 2 * k], params[3 + 2 * k]];
                let a = [qutrit_phase_fourier(phases(0), false)?, qutrit_phase_fourier(phases(1), false)?];
                let b = [qutrit_phase_fourier(phases(2), true)?, qutrit_phase_fourier(phases(3), true)?];
                bell_from_quantum(&state, &a, &b)
            }
            StrategySpace::Pam { n_x, n_y, n_b, mixed, channel } => {
                let per = if mixed { 3 } else { 2 };
                let ch = channel.map(make_channel).transpose()?;
                let states: Vec<QuantumState> = (0..n_x)
                    .map(|x| {
                        let k = per * x;
                        let r = if mixed { params[k + 2] } else { 1.0 };
                        let dir = bloch_direction(params[k], params[k + 1]);
                        let s = bloch_qubit([r * dir[0], r * dir[1], r * dir[2]])?;
                        match &ch {
                            Some(ch) => apply_channel(ch, &s),
                            None => Ok(s),
                        }
                    })
                    .collect::<Result<_>>()?;
                let povms: Vec<Povm> = (0..n_y).map(|y| qubit(per * n_x + 2 * y, n_b)).collect::<Result<_>>()?;
                pam_from_quantum(&states, &povms)
            }
            StrategySpace::Bilocal => {
                let rho1 = schmidt_pair(params[0])?;
                let rho2 = schmidt_pair(params[1])?;
                let a = [qubit(2, 2)?, qubit(4, 2)?];
                let cc = [qubit(6, 2)?, qubit(8, 2)?];
                bilocal_from_quantum(&rho1, &rho2, &a, &bell_state_measurement(), &cc)
            }
            StrategySpace::NParty { n } => {
                let d = 1usize << n;
                let mut ket = vec![c(0.0, 0.0); d];
                ket[0] = c(params[0].cos(), 0.0);
                ket[d - 1] = num_complex::Complex::from_polar(params[0].sin(), params[1]);
                let state = QuantumState::pure(&ket)?;
                let povms: Vec<Vec<Povm>> = (0..n)
                    .map(|k| (0..2).map(|s| qubit(2 + 4 * k + 2 * s, 2)).collect::<Result<_>>())
                    .collect::<Result<_>>()?;
                nparty_from_quantum(&state, &povms)
            }
        }
    }
}

type C = num_complex::Complex<f64>;

/// Bras ⟨±m| of a projective qubit measurement along (polar, azimuth).
fn qubit_bras(polar: f64, azimuth: f64) -> Vec<Vec<C>> {
    let (c, s) = ((polar / 2.0).cos(), (polar / 2.0).sin());
    let e = C::from_polar(1.0, -azimuth);
    vec![vec![C::new(c, 0.0), e * s], vec![C::new(s, 0.0), -e * c]]
}

/// Bras of the phase-then-Fourier qutrit measurement: entry (k, j) is
/// ω^{±jk} e^{iφ_j}/√3.
fn fourier_bras(phases: [f64; 3], inverse: bool) -> [[C; 3]; 3] {
    let sign = if inverse { -1.0 } else { 1.0 };
    let norm = 1.0 / 3f64.sqrt();
    let roots = [C::new(1.0, 0.0), C::from_polar(1.0, sign * 2.0 * PI / 3.0), C::from_polar(1.0, sign * 4.0 * PI / 3.0)];
    let ph = phases.map(|t| C::from_polar(norm, t));
    std::array::from_fn(|k| std::array::from_fn(|j| roots[(j * k) % 3] * ph[j]))
}

/// (⟨u|⊗⟨v|) Σ_j g_j |jj⟩
fn amplitude(g: &[f64], u: &[C], v: &[C]) -> C {
    g.iter().zip(u).zip(v).map(|((gj, uj), vj)| uj * vj * *gj).sum()
}

fn pure_bell<R: AsRef<[C]>, M: AsRef<[R]>>(g: &[f64], a: &[M], b: &[M], n_a: usize, n_b: usize) -> Result<Behavior> {
    let sc = Scenario::bell(n_a, n_b, a.len(), b.len());
    let mut p = vec![0.0; sc.len()];
    for (x, ax) in a.iter().enumerate() {
        for (y, by) in b.iter().enumerate() {
            for (aa, u) in ax.as_ref().iter().enumerate() {
                for (bb, v) in by.as_ref().iter().enumerate() {
                    p[sc.ix_bell(aa, bb, x, y)] = amplitude(g, u.as_ref(), v.as_ref()).norm_sqr();
                }
            }
        }
    }
    Behavior::new(sc, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Simplex iterations per local search.
    pub max_iters: usize,
    /// Simplex diameter below which a local search stops.
    pub xtol: f64,
    /// Spread of simplex values below which a local search stops.
    pub ftol: f64,
    /// A margin must exceed this to count as a violation.
    pub violation_tol: f64,
    /// Extra local searches restarted from each restart's best point.
    pub polish: usize,
    /// Warm start used as the first restart's initial point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 64,
            seed: 0x5eed_1e55,
            max_iters: 4000,
            xtol: 1e-10,
            ftol: 1e-13,
            violation_tol: 1e-7,
            polish: 2,
            initial: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 || !(self.xtol >= 0.0) || !(self.ftol >= 0.0) || !(self.violation_tol >= 0.0) {
            return Err(Error::InvalidParameter("optimizer tolerances must be nonnegative and max_iters positive".into()));
        }
        Ok(())
    }

    pub fn with_restarts(&self, restarts: usize) -> Self {
        OptimizerConfig { restarts, ..self.clone() }
    }

    pub fn with_initial(&self, initial: Option<Vec<f64>>) -> Self {
        OptimizerConfig { initial, ..self.clone() }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn restart_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// A functional, a strategy space and an optional loss model bound
/// together. The functional is lifted to the loss output's scenario when
/// the loss adds outcomes.
#[derive(Clone, Debug)]
pub struct Problem {
    pub functional: Functional,
    pub space: StrategySpace,
    pub loss: Option<LossSpec>,
}

impl Problem {
    pub fn new(f: &Functional, space: &StrategySpace, loss: Option<&LossSpec>) -> Result<Self> {
        space.validate()?;
        let probe = Problem { functional: f.clone(), space: space.clone(), loss: loss.cloned() };
        let mid: Vec<f64> = space.bounds().iter().map(|(lo, hi)| 0.5 * (lo + hi) + 0.1 * (hi - lo)).collect();
        let out = probe.behavior(&mid)?;
        let functional = f.embed(out.scenario())?;
        if functional.kind == Kind::Linear && functional.scenario != out.scenario() {
            return Err(Error::ScenarioMismatch(format!(
                "{} on {} does not match {}",
                f.name,
                f.scenario.label(),
                out.scenario().label()
            )));
        }
        Ok(Problem { functional, ..probe })
    }

    pub fn with_loss(&self, loss: Option<LossSpec>) -> Self {
        Problem { loss, ..self.clone() }
    }

    pub fn with_space(&self, space: StrategySpace) -> Self {
        Problem { space, ..self.clone() }
    }

    pub fn behavior(&self, params: &[f64]) -> Result<Behavior> {
        let ideal = self.space.decode(params)?;
        match &self.loss {
            Some(l) => l.apply(&ideal),
            None => Ok(ideal),
        }
    }

    pub fn value(&self, params: &[f64]) -> Result<f64> {
        self.functional.evaluate(&self.behavior(params)?)
    }

    /// Margin, with failures mapped to −∞ so the search steers away.
    fn objective(&self, params: &[f64]) -> f64 {
        match self.value(params) {
            Ok(v) if v.is_finite() => self.functional.margin(v),
            _ => f64::NEG_INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxResult {
    pub value: f64,
    pub margin: f64,
    pub params: Vec<f64>,
    pub evaluations: usize,
    /// The best local search stopped on tolerance rather than budget.
    pub converged: bool,
    pub best_restart: usize,
}

fn fold_into(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    if (lo..=hi).contains(&x) {
        return x;
    }
    let period = 2.0 * w;
    let t = (x - lo).rem_euclid(period);
    lo + if t > w { period - t } else { t }
}

struct Local {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    converged: bool,
}

/// Nelder–Mead maximization with reflection into the box.
fn nelder_mead(obj: &dyn Fn(&[f64]) -> f64, x0: &[f64], bounds: &[(f64, f64)], cfg: &OptimizerConfig) -> Local {
    let n = x0.len();
    let clip = |v: &mut Vec<f64>| {
        for (x, (lo, hi)) in v.iter_mut().zip(bounds) {
            *x = fold_into(*x, *lo, *hi);
        }
    };
    let mut evals = 0usize;
    let mut eval = |v: &[f64]| {
        evals += 1;
        let f = obj(v);
        if f.is_nan() {
            f64::NEG_INFINITY
        } else {
            f
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let start = x0.to_vec();
    let f0 = eval(&start);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let mut v = start.clone();
        let step = 0.1 * (hi - lo);
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        let f = eval(&v);
        simplex.push((v, f));
    }
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        // descending by value: best first
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = if best.is_finite() && worst.is_finite() { best - worst } else { f64::INFINITY };
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= cfg.ftol && diameter <= cfg.xtol.max(1e-12) || diameter <= cfg.xtol {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (cj, vj) in centroid.iter_mut().zip(v) {
                *cj += vj / n as f64;
            }
        }
        let toward = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let mut xr = toward(1.0);
        clip(&mut xr);
        let fr = eval(&xr);
        if fr > simplex[0].1 {
            let mut xe = toward(2.0);
            clip(&mut xe);
            let fe = eval(&xe);
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (mut xc, outside) = if fr > simplex[n].1 { (toward(0.5), true) } else { (toward(-0.5), false) };
        clip(&mut xc);
        let fc = eval(&xc);
        if (outside && fc >= fr) || (!outside && fc > simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for (v, f) in simplex.iter_mut().skip(1) {
            for (vj, bj) in v.iter_mut().zip(&x_best) {
                *vj = bj + 0.5 * (*vj - bj);
            }
            *f = eval(v);
        }
    }
    simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, f) = simplex.swap_remove(0);
    Local { x, f, evals, converged }
}

fn local_with_polish(obj: &dyn Fn(&[f64]) -> f64, x0: &[f64], bounds: &[(f64, f64)], cfg: &OptimizerConfig) -> Local {
    let mut cur = nelder_mead(obj, x0, bounds, cfg);
    for _ in 0..cfg.polish {
        let next = nelder_mead(obj, &cur.x, bounds, cfg);
        let evals = cur.evals + next.evals;
        let improved = next.f > cur.f + cfg.ftol;
        if next.f >= cur.f {
            cur = Local { evals, ..next };
        } else {
            cur.evals = evals;
        }
        if !improved {
            break;
        }
    }
    cur
}

/// Multistart maximization of the problem's violation margin.
pub fn maximize_problem(problem: &Problem, cfg: &OptimizerConfig) -> Result<MaxResult> {
    cfg.validate()?;
    let bounds = problem.space.bounds();
    if let Some(init) = &cfg.initial {
        if init.len() != bounds.len() {
            return Err(Error::DimensionMismatch(format!("warm start has {} parameters, space {}", init.len(), bounds.len())));
        }
    }
    let obj = |x: &[f64]| problem.objective(x);
    let runs: Vec<Local> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            let x0: Vec<f64> = match (&cfg.initial, i) {
                (Some(init), 0) => init.iter().zip(&bounds).map(|(v, (lo, hi))| fold_into(*v, *lo, *hi)).collect(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.seed, i));
                    bounds.iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect()
                }
            };
            local_with_polish(&obj, &x0, &bounds, cfg)
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.evals).sum();
    let mut best: Option<(usize, &Local)> = None;
    for (i, r) in runs.iter().enumerate() {
        if r.f.is_finite() && best.map_or(true, |(_, b)| r.f > b.f) {
            best = Some((i, r));
        }
    }
    let (idx, b) = best.ok_or_else(|| Error::Numerical("no restart produced a finite value".into()))?;
    let value = problem.value(&b.x)?;
    Ok(MaxResult {
        value,
        margin: problem.functional.margin(value),
        params: b.x.clone(),
        evaluations,
        converged: b.converged,
        best_restart: idx,
    })
}

pub fn maximize(f: &Functional, space: &StrategySpace, loss: Option<&LossSpec>, cfg: &OptimizerConfig) -> Result<MaxResult> {
    maximize_problem(&Problem::new(f, space, loss)?, cfg)
}

/// How one free efficiency parametrizes the loss model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaFamily {
    /// η₁ = η₂ = η (or every setting of a PAM measurement).
    Symmetric,
    /// η₁ fixed, η₂ free.
    FixedEta1 { eta1: f64 },
    /// η₂ fixed, η₁ free.
    FixedEta2 { eta2: f64 },
}

impl EtaFamily {
    pub fn spec(&self, template: &LossSpec, eta: f64, space: &StrategySpace) -> Result<LossSpec> {
        if let StrategySpace::Pam { n_y, .. } = space {
            return match self {
                EtaFamily::Symmetric => Ok(template.with_settings(vec![eta; *n_y])),
                _ => Err(Error::InvalidParameter("prepare-and-measure loss has one party; use the symmetric family".into())),
            };
        }
        Ok(match *self {
            EtaFamily::Symmetric => template.with_parties(eta, eta),
            EtaFamily::FixedEta1 { eta1 } => template.with_parties(eta1, eta),
            EtaFamily::FixedEta2 { eta2 } => template.with_parties(eta, eta2),
        })
    }

    /// (η₁, η₂) for a value of the free efficiency.
    pub fn pair(&self, eta: f64) -> (f64, f64) {
        match *self {
            EtaFamily::Symmetric => (eta, eta),
            EtaFamily::FixedEta1 { eta1 } => (eta1, eta),
            EtaFamily::FixedEta2 { eta2 } => (eta, eta2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStatus {
    Crossing,
    /// The functional is not violated even at the clean end of the range.
    NoViolationBelowOne,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub status: ThresholdStatus,
    /// Crossing point of the free efficiency or noise parameter.
    pub eta_star: f64,
    /// Value on the violating side of the final bracket.
    pub value_at_star: f64,
    pub best_params: Vec<f64>,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub converged: bool,
    /// Every probe as (parameter, margin).
    pub probes: Vec<(f64, f64)>,
}

/// Locates the crossing of a margin that is positive on one side of [0,1].
/// `clean` is the end where violation is expected (1 for efficiencies, 0
/// for noise strengths).
fn bisect(
    probe: &dyn Fn(f64, Option<Vec<f64>>) -> Result<MaxResult>,
    clean: f64,
    tol: f64,
    bisect_tol: f64,
    initial: Option<Vec<f64>>,
) -> Result<ThresholdResult> {
    if !(bisect_tol > 0.0) {
        return Err(Error::InvalidParameter("bisection tolerance must be positive".into()));
    }
    let dirty = 1.0 - clean;
    let mut evaluations = 0;
    let mut probes = Vec::new();
    let top = probe(clean, initial)?;
    evaluations += top.evaluations;
    probes.push((clean, top.margin));
    if top.margin <= tol {
        return Ok(ThresholdResult {
            status: ThresholdStatus::NoViolationBelowOne,
            eta_star: clean,
            value_at_star: top.value,
            best_params: top.params,
            bracket: (clean, clean),
            evaluations,
            converged: top.converged,
            probes,
        });
    }
    let bottom = probe(dirty, Some(top.params.clone()))?;
    evaluations += bottom.evaluations;
    probes.push((dirty, bottom.margin));
    if bottom.margin > tol {
        return Err(Error::NoCrossing(format!("still violated at parameter {dirty} (margin {:.3e})", bottom.margin)));
    }
    // `good` is violated, `bad` is not
    let (mut good, mut bad) = (clean, dirty);
    let mut best = top;
    while (good - bad).abs() > bisect_tol {
        let mid = 0.5 * (good + bad);
        let r = probe(mid, Some(best.params.clone()))?;
        evaluations += r.evaluations;
        probes.push((mid, r.margin));
        if r.margin > tol {
            good = mid;
            best = r;
        } else {
            bad = mid;
        }
    }
    if !monotone(&probes, clean, tol) {
        log::warn!("margin is not monotone along the probes; refining with a scan");
        let (g, b, r, ev) = scan_refine(probe, clean, tol, bisect_tol, &best.params)?;
        evaluations += ev;
        good = g;
        bad = b;
        best = r;
    }
    let (lo, hi) = if good < bad { (good, bad) } else { (bad, good) };
    Ok(ThresholdResult {
        status: ThresholdStatus::Crossing,
        eta_star: 0.5 * (lo + hi),
        value_at_star: best.value,
        converged: best.converged,
        best_params: best.params,
        bracket: (lo, hi),
        evaluations,
        probes,
    })
}

/// Margins should grow toward the clean end.
fn monotone(probes: &[(f64, f64)], clean: f64, tol: f64) -> bool {
    let mut sorted = probes.to_vec();
    sorted.sort_by(|a, b| {
        let ka = (a.0 - clean).abs();
        let kb = (b.0 - clean).abs();
        ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted.windows(2).all(|w| w[1].1 <= w[0].1 + 10.0 * tol.max(1e-9))
}

type Refined = (f64, f64, MaxResult, usize);

/// Walks a grid from the clean end and bisects inside the first cell where
/// violation is lost.
fn scan_refine(
    probe: &dyn Fn(f64, Option<Vec<f64>>) -> Result<MaxResult>,
    clean: f64,
    tol: f64,
    bisect_tol: f64,
    warm: &[f64],
) -> Result<Refined> {
    let steps = 20;
    let mut evaluations = 0;
    let mut last_good: Option<(f64, MaxResult)> = None;
    let mut first_bad = None;
    for k in 0..=steps {
        let t = clean + (1.0 - 2.0 * clean) * k as f64 / steps as f64;
        let w = last_good.as_ref().map(|(_, r)| r.params.clone()).unwrap_or_else(|| warm.to_vec());
        let r = probe(t, Some(w))?;
        evaluations += r.evaluations;
        if r.margin > tol {
            last_good = Some((t, r));
        } else {
            first_bad = Some(t);
            break;
        }
    }
    let (mut good, mut best) = last_good.ok_or_else(|| Error::NoCrossing("no violation on the scan grid".into()))?;
    let mut bad = first_bad.ok_or_else(|| Error::NoCrossing("violation persists across the scan grid".into()))?;
    while (good - bad).abs() > bisect_tol {
        let mid = 0.5 * (good + bad);
        let r = probe(mid, Some(best.params.clone()))?;
        evaluations += r.evaluations;
        if r.margin > tol {
            good = mid;
            best = r;
        } else {
            bad = mid;
        }
    }
    Ok((good, bad, best, evaluations))
}

/// Efficiency at which the best quantum violation disappears.
pub fn critical_efficiency(
    f: &Functional,
    space: &StrategySpace,
    loss: &LossSpec,
    family: EtaFamily,
    cfg: &OptimizerConfig,
    bisect_tol: f64,
) -> Result<ThresholdResult> {
    let base = Problem::new(f, space, Some(&family.spec(loss, 1.0, space)?))?;
    let probe = |eta: f64, warm: Option<Vec<f64>>| -> Result<MaxResult> {
        let p = base.with_loss(Some(family.spec(loss, eta, space)?));
        let r = maximize_problem(&p, &cfg.with_initial(warm))?;
        log::debug!("{} eta={eta:.6} margin={:.3e}", f.name, r.margin);
        Ok(r)
    };
    bisect(&probe, 1.0, cfg.violation_tol, bisect_tol, cfg.initial.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StrategyMode {
    /// Keep one parameter vector for every probe.
    Fixed { params: Vec<f64> },
    /// Maximize again at every probe.
    Reoptimize,
}

/// Evaluation-only probe: the margin of a fixed strategy.
fn fixed_probe(p: &Problem, params: &[f64]) -> Result<MaxResult> {
    let value = p.value(params)?;
    Ok(MaxResult {
        value,
        margin: p.functional.margin(value),
        params: params.to_vec(),
        evaluations: 1,
        converged: true,
        best_restart: 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "eta2", rename_all = "snake_case")]
pub enum Crossing {
    At(f64),
    /// Violated even at η₂ = 0.
    AlwaysViolated,
    /// Not violated even at η₂ = 1.
    NeverViolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eta1: f64,
    pub crossing: Crossing,
}

/// For each η₁ on the grid, the η₂ where the violation disappears.
pub fn boundary_curve(
    f: &Functional,
    space: &StrategySpace,
    loss: &LossSpec,
    mode: &StrategyMode,
    grid: &[f64],
    cfg: &OptimizerConfig,
    bisect_tol: f64,
) -> Result<Vec<CurvePoint>> {
    if let Some(bad) = grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::InvalidParameter(format!("grid value {bad} outside [0,1]")));
    }
    let base = Problem::new(f, space, Some(&loss.with_parties(1.0, 1.0)))?;
    if let StrategyMode::Fixed { params } = mode {
        if params.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!("fixed strategy has {} parameters, space {}", params.len(), space.dim())));
        }
    }
    let mut out = Vec::with_capacity(grid.len());
    for &eta1 in grid {
        let probe = |eta2: f64, warm: Option<Vec<f64>>| -> Result<MaxResult> {
            let p = base.with_loss(Some(loss.with_parties(eta1, eta2)));
            match mode {
                StrategyMode::Fixed { params } => fixed_probe(&p, params),
                StrategyMode::Reoptimize => maximize_problem(&p, &cfg.with_initial(warm)),
            }
        };
        let tol = match mode {
            StrategyMode::Fixed { .. } => bisect_tol.min(1e-9),
            StrategyMode::Reoptimize => bisect_tol,
        };
        let crossing = match bisect(&probe, 1.0, cfg.violation_tol, tol, None) {
            Ok(r) if r.status == ThresholdStatus::NoViolationBelowOne => Crossing::NeverViolated,
            Ok(r) => Crossing::At(r.eta_star),
            Err(Error::NoCrossing(_)) => Crossing::AlwaysViolated,
            Err(e) => return Err(e),
        };
        out.push(CurvePoint { eta1, crossing });
    }
    if matches!(mode, StrategyMode::Fixed { .. }) {
        let etas: Vec<f64> = out.iter().filter_map(|p| if let Crossing::At(e) = p.crossing { Some(e) } else { None }).collect();
        let increasing_grid = grid.windows(2).all(|w| w[0] <= w[1]);
        if increasing_grid && etas.windows(2).any(|w| w[1] > w[0] + 1e-9) {
            log::warn!("fixed-strategy boundary curve is not monotone nonincreasing");
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    AmplitudeDamping,
    Depolarizing,
}

impl NoiseFamily {
    pub fn channel(&self, s: f64) -> ChannelKind {
        match self {
            NoiseFamily::AmplitudeDamping => ChannelKind::AmplitudeDamping { t: s },
            NoiseFamily::Depolarizing => ChannelKind::Depolarizing { q: s, d: 2 },
        }
    }
}

/// Noise strength at which a prepare-and-measure witness stops being
/// violated; the channel acts on each prepared state.
pub fn noise_threshold(
    witness: &Functional,
    space: &StrategySpace,
    family: NoiseFamily,
    mode: &StrategyMode,
    cfg: &OptimizerConfig,
    bisect_tol: f64,
) -> Result<ThresholdResult> {
    if !matches!(witness.scenario, Scenario::Pam { .. }) {
        return Err(Error::ScenarioMismatch(format!("{} is not a prepare-and-measure witness", witness.name)));
    }
    let base = Problem::new(witness, &space.with_channel(Some(family.channel(0.0)))?, None)?;
    let probe = |s: f64, warm: Option<Vec<f64>>| -> Result<MaxResult> {
        let p = base.with_space(space.with_channel(Some(family.channel(s)))?);
        match mode {
            StrategyMode::Fixed { params } => fixed_probe(&p, params),
            StrategyMode::Reoptimize => maximize_problem(&p, &cfg.with_initial(warm)),
        }
    };
    let tol = match mode {
        StrategyMode::Fixed { .. } => bisect_tol.min(1e-9),
        StrategyMode::Reoptimize => bisect_tol,
    };
    let mut r = bisect(&probe, 0.0, cfg.violation_tol, tol, cfg.initial.clone())?;
    if r.status == ThresholdStatus::NoViolationBelowOne {
        // for noise the clean end is 0
        r.eta_star = 0.0;
    }
    Ok(r)
}
