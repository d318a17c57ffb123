//! Small dense complex matrices, quantum states, POVMs and Kraus channels.
//!
//! Everything here is immutable once built. Matrices are stored row-major
//! and are expected to stay small (dimension 2 to 8, at most 64).

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used by every invariant check in this module.
pub const TOL: f64 = 1e-9;

const MAX_DIM: usize = 64;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({})[", self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        CMatrix { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = re(1.0);
        }
        m
    }

    /// Build from row-major entries. Fails unless `entries.len()` is a
    /// positive perfect square.
    pub fn from_entries(entries: Vec<C64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != entries.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Ok(CMatrix { dim, data: entries })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = re(*v);
        }
        m
    }

    /// |v⟩⟨v| for a (not necessarily normalized) ket.
    pub fn ket_bra(v: &[C64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(re(s))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Tr(self · other) without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                acc += self.data[i * d + k] * other.data[k * d + i];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        if self.dim != other.dim {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Eigenvalues (ascending) of a Hermitian matrix.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        let dev = self.hermitian_deviation();
        if dev > TOL {
            return Err(Error::NotHermitian(dev));
        }
        let m = DMatrix::from_fn(self.dim, self.dim, |i, j| {
            // symmetrize so round-off cannot leak into the solver
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        });
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        Ok(ev)
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let d = self.dim;
        (0..d).map(|i| (0..d).map(|j| self.data[i * d + j] * v[j]).sum()).collect()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let d = self.dim;
        let mut out = CMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix sum dimension mismatch");
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix difference dimension mismatch");
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

/// Kronecker product: entry (i⊗j, k⊗l) = a[i,k]·b[j,l].
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (da, db) = (a.dim, b.dim);
    let d = da * db;
    let mut out = CMatrix::zeros(d);
    for i in 0..da {
        for k in 0..da {
            let aik = a[(i, k)];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            for j in 0..db {
                for l in 0..db {
                    out.data[(i * db + j) * d + k * db + l] = aik * b[(j, l)];
                }
            }
        }
    }
    out
}

pub fn tensor_all(ms: &[&CMatrix]) -> CMatrix {
    let mut it = ms.iter();
    let first = (*it.next().expect("tensor_all needs at least one factor")).clone();
    it.fold(first, |acc, m| tensor(&acc, m))
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_fn(2, |i, j| if i != j { re(1.0) } else { re(0.0) })
}

pub fn sigma_y() -> CMatrix {
    let mut m = CMatrix::zeros(2);
    m[(0, 1)] = c(0.0, -1.0);
    m[(1, 0)] = c(0.0, 1.0);
    m
}

pub fn sigma_z() -> CMatrix {
    CMatrix::diag(&[1.0, -1.0])
}

/// m⃗·σ⃗
pub fn bloch_operator(m: [f64; 3]) -> CMatrix {
    let mut op = CMatrix::zeros(2);
    op[(0, 0)] = re(m[2]);
    op[(1, 1)] = re(-m[2]);
    op[(0, 1)] = c(m[0], -m[1]);
    op[(1, 0)] = c(m[0], m[1]);
    op
}

pub fn max_eigenvalue(op: &CMatrix) -> Result<f64> {
    Ok(*op.hermitian_eigenvalues()?.last().expect("nonempty spectrum"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    mat: CMatrix,
}

impl QuantumState {
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.dim > MAX_DIM {
            return Err(Error::InvalidState(format!("dimension {} exceeds {}", mat.dim, MAX_DIM)));
        }
        let dev = mat.hermitian_deviation();
        if dev > TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {dev:.3e})")));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > TOL || tr.im.abs() > TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let ev = mat.hermitian_eigenvalues()?;
        if ev[0] < -TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", ev[0])));
        }
        Ok(QuantumState { mat })
    }

    /// Pure state from a ket; the ket is normalized first.
    pub fn pure(ket: &[C64]) -> Result<Self> {
        let norm: f64 = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite ket".into()));
        }
        let v: Vec<C64> = ket.iter().map(|z| z / norm).collect();
        Self::new(CMatrix::ket_bra(&v))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        QuantumState { mat: CMatrix::identity(dim).scale_re(1.0 / dim as f64) }
    }

    /// Skips validation; only for matrices produced by trusted maps
    /// (Kraus action on an already valid state).
    fn trusted(mat: CMatrix) -> Self {
        QuantumState { mat }
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim
    }

    /// Bloch vector of a qubit state.
    pub fn bloch_vector(&self) -> Result<[f64; 3]> {
        if self.dim() != 2 {
            return Err(Error::DimensionMismatch(format!("Bloch vector needs a qubit, got dim {}", self.dim())));
        }
        let m = &self.mat;
        Ok([2.0 * m[(1, 0)].re, 2.0 * m[(1, 0)].im, (m[(0, 0)] - m[(1, 1)]).re])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    effects: Vec<CMatrix>,
}

impl Povm {
    pub fn new(effects: Vec<CMatrix>) -> Result<Self> {
        let first = effects.first().ok_or_else(|| Error::InvalidPovm("no effects".into()))?;
        let d = first.dim;
        let mut sum = CMatrix::zeros(d);
        for (k, e) in effects.iter().enumerate() {
            if e.dim != d {
                return Err(Error::InvalidPovm(format!("effect {k} has dim {} instead of {d}", e.dim)));
            }
            let ev = e
                .hermitian_eigenvalues()
                .map_err(|_| Error::InvalidPovm(format!("effect {k} is not Hermitian")))?;
            if ev[0] < -TOL || ev[ev.len() - 1] > 1.0 + TOL {
                return Err(Error::InvalidPovm(format!(
                    "effect {k} has spectrum outside [0,1]: [{:.3e}, {:.3e}]",
                    ev[0],
                    ev[ev.len() - 1]
                )));
            }
            sum = &sum + e;
        }
        let dev = sum.max_abs_diff(&CMatrix::identity(d));
        if dev > TOL {
            return Err(Error::InvalidPovm(format!("effects do not sum to identity (deviation {dev:.3e})")));
        }
        Ok(Povm { effects })
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim
    }

    /// Same measurement with `extra` always-zero effects appended, so that
    /// an ideal measurement can live in a scenario with more outcomes.
    pub fn padded(&self, outcomes: usize) -> Povm {
        let mut effects = self.effects.clone();
        while effects.len() < outcomes {
            effects.push(CMatrix::zeros(self.dim()));
        }
        Povm { effects }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    kraus: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::InvalidChannel("no Kraus operators".into()))?;
        let d = first.dim;
        let mut sum = CMatrix::zeros(d);
        for k in &kraus {
            if k.dim != d {
                return Err(Error::InvalidChannel("Kraus operators of different dimension".into()));
            }
            sum = &sum + &(&k.adjoint() * k);
        }
        let dev = sum.max_abs_diff(&CMatrix::identity(d));
        if dev > TOL {
            return Err(Error::InvalidChannel(format!("not trace preserving (deviation {dev:.3e})")));
        }
        Ok(KrausChannel { kraus })
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim
    }

    pub fn identity(dim: usize) -> Self {
        KrausChannel { kraus: vec![CMatrix::identity(dim)] }
    }

    /// Sequential composition: `self` after `first`.
    pub fn compose(&self, first: &KrausChannel) -> Result<KrausChannel> {
        if self.dim() != first.dim() {
            return Err(Error::DimensionMismatch("composing channels of different dimension".into()));
        }
        let mut ks = Vec::with_capacity(self.kraus.len() * first.kraus.len());
        for a in &self.kraus {
            for b in &first.kraus {
                ks.push(a * b);
            }
        }
        KrausChannel::new(ks)
    }
}

pub fn apply_channel(ch: &KrausChannel, s: &QuantumState) -> Result<QuantumState> {
    if ch.dim() != s.dim() {
        return Err(Error::DimensionMismatch(format!("channel dim {} vs state dim {}", ch.dim(), s.dim())));
    }
    let mut out = CMatrix::zeros(s.dim());
    for k in &ch.kraus {
        out = &out + &(&(k * &s.mat) * &k.adjoint());
    }
    Ok(QuantumState::trusted(out))
}

/// Heisenberg-picture action Σ K† M K.
pub fn dual_apply(ch: &KrausChannel, effect: &CMatrix) -> Result<CMatrix> {
    if ch.dim() != effect.dim {
        return Err(Error::DimensionMismatch(format!("channel dim {} vs effect dim {}", ch.dim(), effect.dim)));
    }
    let mut out = CMatrix::zeros(effect.dim);
    for k in &ch.kraus {
        out = &out + &(&(&k.adjoint() * effect) * k);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    /// Qubit amplitude damping with decay probability `t`.
    AmplitudeDamping { t: f64 },
    /// ρ ↦ (1−q)ρ + q·I/d
    Depolarizing { q: f64, d: usize },
    /// Photon loss on the Fock space truncated to `dim` levels, with
    /// survival probability `transmittance` per photon.
    AmplitudeDampingFock { transmittance: f64, dim: usize },
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("{name} = {v} outside [0,1]")));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn make_channel(kind: ChannelKind) -> Result<KrausChannel> {
    match kind {
        ChannelKind::AmplitudeDamping { t } => {
            check_unit("t", t)?;
            let k0 = CMatrix::diag(&[1.0, (1.0 - t).sqrt()]);
            let mut k1 = CMatrix::zeros(2);
            k1[(0, 1)] = re(t.sqrt());
            KrausChannel::new(vec![k0, k1])
        }
        ChannelKind::Depolarizing { q, d } => {
            check_unit("q", q)?;
            if d < 2 {
                return Err(Error::InvalidParameter(format!("depolarizing dimension {d} < 2")));
            }
            let omega = 2.0 * PI / d as f64;
            let shift = CMatrix::from_fn(d, |i, j| if i == (j + 1) % d { re(1.0) } else { re(0.0) });
            let clock = CMatrix::from_fn(d, |i, j| {
                if i == j {
                    C64::from_polar(1.0, omega * i as f64)
                } else {
                    re(0.0)
                }
            });
            let d2 = (d * d) as f64;
            let mut ks = Vec::with_capacity(d * d);
            let mut xa = CMatrix::identity(d);
            for a in 0..d {
                let mut w = xa.clone();
                for b in 0..d {
                    let weight = if a == 0 && b == 0 { 1.0 - q + q / d2 } else { q / d2 };
                    if weight > 0.0 {
                        ks.push(w.scale_re(weight.sqrt()));
                    }
                    w = &w * &clock;
                }
                xa = &xa * &shift;
            }
            KrausChannel::new(ks)
        }
        ChannelKind::AmplitudeDampingFock { transmittance, dim } => {
            check_unit("transmittance", transmittance)?;
            if dim < 2 || dim > MAX_DIM {
                return Err(Error::InvalidParameter(format!("Fock truncation {dim} outside [2,{MAX_DIM}]")));
            }
            let t = transmittance;
            let ks = (0..dim)
                .map(|k| {
                    let mut f = CMatrix::zeros(dim);
                    for n in k..dim {
                        let amp = binomial(n, k) * t.powi((n - k) as i32) * (1.0 - t).powi(k as i32);
                        f[(n - k, n)] = re(amp.sqrt());
                    }
                    f
                })
                .collect();
            KrausChannel::new(ks)
        }
    }
}

/// Tr[(E₁⊗…⊗E_n) ρ], clamped into [0,1] when within tolerance.
pub fn born_joint(state: &QuantumState, effects: &[&CMatrix]) -> Result<f64> {
    let prod: usize = effects.iter().map(|e| e.dim).product();
    if effects.is_empty() || prod != state.dim() {
        return Err(Error::DimensionMismatch(format!(
            "effects span dim {prod}, state has dim {}",
            state.dim()
        )));
    }
    let op = tensor_all(effects);
    let z = op.trace_product(&state.mat);
    if z.im.abs() >= TOL {
        return Err(Error::Numerical(format!("Born probability has imaginary part {:.3e}", z.im)));
    }
    clamp_probability(z.re)
}

pub(crate) fn clamp_probability(p: f64) -> Result<f64> {
    if !p.is_finite() || p < -TOL || p > 1.0 + TOL {
        return Err(Error::Numerical(format!("probability {p} outside [0,1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    Singlet,
    Bell { label: BellLabel },
    SchmidtPair { theta: f64 },
    Ghz { n: usize },
    QutritSchmidt { theta0: f64, phi0: f64 },
    BlochQubit { r: [f64; 3] },
}

pub fn make_state(kind: &StateKind) -> Result<QuantumState> {
    match kind {
        StateKind::Singlet => bell_state(BellLabel::PsiMinus),
        StateKind::Bell { label } => bell_state(*label),
        StateKind::SchmidtPair { theta } => schmidt_pair(*theta),
        StateKind::Ghz { n } => ghz(*n),
        StateKind::QutritSchmidt { theta0, phi0 } => qutrit_schmidt(*theta0, *phi0),
        StateKind::BlochQubit { r } => bloch_qubit(*r),
    }
}

fn bell_ket(label: BellLabel) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = match label {
        BellLabel::PhiPlus => [s, 0.0, 0.0, s],
        BellLabel::PhiMinus => [s, 0.0, 0.0, -s],
        BellLabel::PsiPlus => [0.0, s, s, 0.0],
        BellLabel::PsiMinus => [0.0, s, -s, 0.0],
    };
    v.iter().map(|&x| re(x)).collect()
}

pub fn bell_state(label: BellLabel) -> Result<QuantumState> {
    QuantumState::pure(&bell_ket(label))
}

/// The singlet (|01⟩ − |10⟩)/√2.
pub fn singlet() -> QuantumState {
    bell_state(BellLabel::PsiMinus).expect("singlet is a valid state")
}

/// cosθ|00⟩ + sinθ|11⟩
pub fn schmidt_pair(theta: f64) -> Result<QuantumState> {
    QuantumState::pure(&[re(theta.cos()), re(0.0), re(0.0), re(theta.sin())])
}

pub fn ghz(n: usize) -> Result<QuantumState> {
    if !(2..=6).contains(&n) {
        return Err(Error::InvalidParameter(format!("GHZ party count {n} outside [2,6]")));
    }
    let d = 1usize << n;
    let mut v = vec![re(0.0); d];
    v[0] = re(1.0);
    v[d - 1] = re(1.0);
    QuantumState::pure(&v)
}

/// Amplitudes (cosφ₀ sinθ₀, sinφ₀ sinθ₀, cosθ₀) on |00⟩, |11⟩, |22⟩.
pub fn qutrit_schmidt(theta0: f64, phi0: f64) -> Result<QuantumState> {
    let g = [phi0.cos() * theta0.sin(), phi0.sin() * theta0.sin(), theta0.cos()];
    let mut v = vec![re(0.0); 9];
    for (j, gj) in g.iter().enumerate() {
        v[j * 3 + j] = re(*gj);
    }
    QuantumState::pure(&v)
}

fn check_bloch(r: [f64; 3]) -> Result<()> {
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if !(n <= 1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("Bloch vector norm {n} exceeds 1")));
    }
    Ok(())
}

/// ½(I + r⃗·σ⃗)
pub fn bloch_qubit(r: [f64; 3]) -> Result<QuantumState> {
    check_bloch(r)?;
    let m = (&CMatrix::identity(2) + &bloch_operator(r)).scale_re(0.5);
    QuantumState::new(m)
}

/// Unit Bloch vector from polar and azimuthal angles.
pub fn bloch_direction(polar: f64, azimuth: f64) -> [f64; 3] {
    [polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementKind {
    BlochProjective { m: [f64; 3] },
    QutritPhaseFourier { phases: [f64; 3], inverse: bool },
    BellStateMeasurement,
}

pub fn make_measurement(kind: &MeasurementKind) -> Result<Povm> {
    match kind {
        MeasurementKind::BlochProjective { m } => bloch_projective(*m),
        MeasurementKind::QutritPhaseFourier { phases, inverse } => qutrit_phase_fourier(*phases, *inverse),
        MeasurementKind::BellStateMeasurement => Ok(bell_state_measurement()),
    }
}

/// {½(I + m⃗·σ⃗), ½(I − m⃗·σ⃗)}; projective when |m⃗| = 1.
pub fn bloch_projective(m: [f64; 3]) -> Result<Povm> {
    check_bloch(m)?;
    let s = bloch_operator(m);
    let id = CMatrix::identity(2);
    Povm::new(vec![(&id + &s).scale_re(0.5), (&id - &s).scale_re(0.5)])
}

/// Phase gate diag(e^{iφ_j}) followed by the discrete Fourier transform,
/// then a computational-basis readout. `inverse` uses the conjugate
/// transform, which is what the second party applies in the CGLMP setup.
pub fn qutrit_phase_fourier(phases: [f64; 3], inverse: bool) -> Result<Povm> {
    let sign = if inverse { -1.0 } else { 1.0 };
    let norm = 1.0 / 3f64.sqrt();
    // row k of U = F·P is the bra ⟨k|U
    let effects = (0..3)
        .map(|k| {
            let bra: Vec<C64> = (0..3)
                .map(|j| {
                    C64::from_polar(norm, sign * 2.0 * PI * (j * k) as f64 / 3.0 + phases[j])
                })
                .collect();
            let ket: Vec<C64> = bra.iter().map(|z| z.conj()).collect();
            CMatrix::ket_bra(&ket)
        })
        .collect();
    Povm::new(effects)
}

/// Projectors onto Φ⁺, Φ⁻, Ψ⁺, Ψ⁻, in that order.
pub fn bell_state_measurement() -> Povm {
    let effects = [BellLabel::PhiPlus, BellLabel::PhiMinus, BellLabel::PsiPlus, BellLabel::PsiMinus]
        .iter()
        .map(|l| CMatrix::ket_bra(&bell_ket(*l)))
        .collect();
    Povm::new(effects).expect("Bell projectors are complete")
}

/// (1/2i)(Π(σx + iσy) − Π(σx − iσy)) on n qubits.
pub fn mermin_operator(n: usize) -> CMatrix {
    assert!(n >= 2, "Mermin operator needs at least two parties");
    let plus = &sigma_x() + &sigma_y().scale(c(0.0, 1.0));
    let minus = &sigma_x() - &sigma_y().scale(c(0.0, 1.0));
    let pp = tensor_all(&vec![&plus; n]);
    let mm = tensor_all(&vec![&minus; n]);
    (&pp - &mm).scale(c(0.0, -0.5))
}

/// Lossy on/off detector no-click effect Σ (1−η)ⁿ |n⟩⟨n| on `dim` Fock levels.
pub fn no_click_effect(eta_tot: f64, dim: usize) -> Result<CMatrix> {
    check_unit("eta_tot", eta_tot)?;
    Ok(CMatrix::diag(&(0..dim).map(|n| (1.0 - eta_tot).powi(n as i32)).collect::<Vec<_>>()))
}

/// H(η) = Σ pₙ (1−η)ⁿ: no-click probability for a photon-number
/// distribution supplied by the caller.
pub fn no_click_probability(photon_distribution: &[f64], eta_tot: f64) -> Result<f64> {
    check_unit("eta_tot", eta_tot)?;
    let total: f64 = photon_distribution.iter().sum();
    if photon_distribution.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > TOL {
        return Err(Error::InvalidParameter("photon-number distribution is not normalized".into()));
    }
    Ok(photon_distribution
        .iter()
        .enumerate()
        .map(|(n, p)| p * (1.0 - eta_tot).powi(n as i32))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proj(v: &[f64]) -> CMatrix {
        CMatrix::ket_bra(&v.iter().map(|x| re(*x)).collect::<Vec<_>>())
    }

    #[test]
    fn tensor_identity_and_projectors() {
        let i2 = CMatrix::identity(2);
        assert_eq!(tensor(&i2, &i2), CMatrix::identity(4));
        let p = tensor(&proj(&[1.0, 0.0]), &proj(&[0.0, 1.0]));
        assert_eq!(p, proj(&[0.0, 1.0, 0.0, 0.0]));
        let zz = tensor(&sigma_z(), &sigma_z());
        let v = zz.apply(&[re(0.0), re(1.0), re(0.0), re(0.0)]);
        assert!((v[1] + re(1.0)).norm() < 1e-15);
    }

    #[test]
    fn born_rule_examples() {
        let s = singlet();
        let p0 = proj(&[1.0, 0.0]);
        let p1 = proj(&[0.0, 1.0]);
        assert!(born_joint(&s, &[&p0, &p0]).unwrap().abs() < 1e-12);
        assert!((born_joint(&s, &[&p0, &p1]).unwrap() - 0.5).abs() < 1e-12);
        let mixed = QuantumState::maximally_mixed(4);
        let a = CMatrix::ket_bra(&[c(0.6, 0.0), c(0.0, 0.8)]);
        assert!((born_joint(&mixed, &[&a, &p1]).unwrap() - 0.25).abs() < 1e-12);
        assert!(born_joint(&mixed, &[&p0]).is_err());
    }

    #[test]
    fn channel_examples() {
        let one = bloch_qubit([0.0, 0.0, -1.0]).unwrap();
        let ad0 = make_channel(ChannelKind::AmplitudeDamping { t: 0.0 }).unwrap();
        assert!(apply_channel(&ad0, &one).unwrap().mat().max_abs_diff(one.mat()) < 1e-15);
        let ad1 = make_channel(ChannelKind::AmplitudeDamping { t: 1.0 }).unwrap();
        let out = apply_channel(&ad1, &one).unwrap();
        assert!(out.mat().max_abs_diff(&proj(&[1.0, 0.0])) < 1e-15);
        let half = make_channel(ChannelKind::AmplitudeDamping { t: 0.5 }).unwrap();
        let out = apply_channel(&half, &one).unwrap();
        assert!((out.mat().trace_product(&proj(&[0.0, 1.0])).re - 0.5).abs() < 1e-12);
        let dep = make_channel(ChannelKind::Depolarizing { q: 1.0, d: 2 }).unwrap();
        let zero = bloch_qubit([0.0, 0.0, 1.0]).unwrap();
        let out = apply_channel(&dep, &zero).unwrap();
        assert!(out.mat().max_abs_diff(&CMatrix::identity(2).scale_re(0.5)) < 1e-12);
        assert!(make_channel(ChannelKind::AmplitudeDamping { t: 1.1 }).is_err());
    }

    #[test]
    fn depolarizing_shrinks_bloch_vector() {
        let r = [0.3, -0.5, 0.6];
        let dep = make_channel(ChannelKind::Depolarizing { q: 0.216, d: 2 }).unwrap();
        let out = apply_channel(&dep, &bloch_qubit(r).unwrap()).unwrap().bloch_vector().unwrap();
        for i in 0..3 {
            assert!((out[i] - 0.784 * r[i]).abs() < 1e-12);
        }
        let id = make_channel(ChannelKind::Depolarizing { q: 0.0, d: 3 }).unwrap();
        let s = qutrit_schmidt(0.7, 0.4).unwrap();
        let rho = QuantumState::maximally_mixed(3);
        assert!(apply_channel(&id, &rho).unwrap().mat().max_abs_diff(rho.mat()) < 1e-12);
        assert_eq!(id.dim(), 3);
        assert_eq!(s.dim(), 9);
    }

    #[test]
    fn dual_of_fock_damping_on_vacuum_projector() {
        let eta = 0.37;
        let ch = make_channel(ChannelKind::AmplitudeDampingFock { transmittance: eta, dim: 2 }).unwrap();
        let m0 = proj(&[1.0, 0.0]);
        let d = dual_apply(&ch, &m0).unwrap();
        assert!(d.max_abs_diff(&no_click_effect(eta, 2).unwrap()) < 1e-12);
        assert!(d.max_abs_diff(&CMatrix::diag(&[1.0, 1.0 - eta])) < 1e-12);
        let ch4 = make_channel(ChannelKind::AmplitudeDampingFock { transmittance: eta, dim: 4 }).unwrap();
        let d4 = dual_apply(&ch4, &proj(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(d4.max_abs_diff(&no_click_effect(eta, 4).unwrap()) < 1e-12);
        assert!(dual_apply(&ch4, &CMatrix::identity(4)).unwrap().max_abs_diff(&CMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn no_click_probability_matches_effect() {
        let dist = [0.2, 0.5, 0.3];
        let h = no_click_probability(&dist, 0.4).unwrap();
        assert!((h - (0.2 + 0.5 * 0.6 + 0.3 * 0.36)).abs() < 1e-15);
        assert!(no_click_probability(&[0.5, 0.4], 0.4).is_err());
    }

    #[test]
    fn eigenvalue_examples() {
        assert!((max_eigenvalue(&sigma_z()).unwrap() - 1.0).abs() < 1e-12);
        // CHSH operator A0B0 + A0B1 + A1B0 − A1B1 with A = Z, X and B = (Z ± X)/√2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b0 = (&sigma_z() + &sigma_x()).scale_re(s);
        let b1 = (&sigma_z() - &sigma_x()).scale_re(s);
        let chsh = &(&(&tensor(&sigma_z(), &b0) + &tensor(&sigma_z(), &b1)) + &tensor(&sigma_x(), &b0))
            - &tensor(&sigma_x(), &b1);
        assert!((max_eigenvalue(&chsh).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!(max_eigenvalue(&sigma_y().scale(c(0.0, 1.0))).is_err());
    }

    #[test]
    fn mermin_operator_three_qubits() {
        // expanded form XXY + XYX + YXX − YYY
        let (x, y) = (sigma_x(), sigma_y());
        let expect = &(&(&tensor_all(&[&x, &x, &y]) + &tensor_all(&[&x, &y, &x])) + &tensor_all(&[&y, &x, &x]))
            - &tensor_all(&[&y, &y, &y]);
        let m = mermin_operator(3);
        assert!(m.max_abs_diff(&expect) < 1e-12);
        assert!((max_eigenvalue(&m).unwrap() - 4.0).abs() < 1e-9);
        assert!((max_eigenvalue(&mermin_operator(2)).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constructors() {
        let s = schmidt_pair(PI / 4.0).unwrap();
        let p0 = proj(&[1.0, 0.0]);
        let id = CMatrix::identity(2);
        assert!((born_joint(&s, &[&p0, &id]).unwrap() - 0.5).abs() < 1e-12);
        let bsm = bell_state_measurement();
        let sum = bsm.effects().iter().fold(CMatrix::zeros(4), |acc, e| &acc + e);
        assert!(sum.max_abs_diff(&CMatrix::identity(4)) < 1e-12);
        assert!(bloch_qubit([1.0, 0.1, 0.0]).is_err());
        assert!(bloch_projective([0.0, 0.0, 1.0 + 1e-6]).is_err());
        assert!(ghz(3).is_ok());
    }

    #[test]
    fn qutrit_fourier_against_closed_form() {
        // P(k,l) = 1/9 |Σ_j γ_j e^{2πi j (α+β+k−l)/3}|², phases φ(j) = 2π α j / 3
        let (theta0, phi0) = (0.9f64, 0.6f64);
        let g = [phi0.cos() * theta0.sin(), phi0.sin() * theta0.sin(), theta0.cos()];
        let state = qutrit_schmidt(theta0, phi0).unwrap();
        for (alpha, beta) in [(0.0, 0.0), (0.5, 0.25), (0.0, -0.25), (0.5, -0.25)] {
            let pa = [0.0, 1.0, 2.0].map(|j| 2.0 * PI * alpha * j / 3.0);
            let pb = [0.0, 1.0, 2.0].map(|j| 2.0 * PI * beta * j / 3.0);
            let ma = qutrit_phase_fourier(pa, false).unwrap();
            let mb = qutrit_phase_fourier(pb, true).unwrap();
            for k in 0..3 {
                for l in 0..3 {
                    let amp: C64 = (0..3)
                        .map(|j| {
                            let arg = 2.0 * PI * j as f64 / 3.0 * (alpha + beta + k as f64 - l as f64);
                            C64::from_polar(g[j], arg)
                        })
                        .sum();
                    let expect = amp.norm_sqr() / 9.0;
                    let got = born_joint(&state, &[&ma.effects()[k], &mb.effects()[l]]).unwrap();
                    assert!((got - expect).abs() < 1e-12, "alpha {alpha} beta {beta} k {k} l {l}");
                }
            }
        }
    }
}
