//! Classical polytopes: deterministic vertices, LP membership and facets.
//!
//! Facets are found by double description on the polar cone, in exact
//! integer arithmetic, after projecting the vertices onto a set of
//! coordinates that parametrizes their affine hull.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::Serialize;

use crate::behaviors::{Behavior, Scenario};
use crate::error::{Error, Result};
use crate::functionals::{render_terms, Functional, Kind, Sense};

pub const MAX_VERTICES: usize = 1_000_000;
pub const MAX_FACET_DIM: usize = 24;
pub const MAX_FACET_VERTICES: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexSet {
    pub scenario: Scenario,
    /// Flat indices (of `scenario`) that the vertex vectors cover.
    pub coords: Vec<usize>,
    pub vertices: Vec<Vec<i64>>,
    /// Deterministic strategies enumerated before deduplication.
    pub raw_count: usize,
    pub dedup: bool,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertex as a full flat vector of the scenario (zeros off `coords`).
    pub fn full_vertex(&self, k: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.scenario.len()];
        for (c, v) in self.coords.iter().zip(&self.vertices[k]) {
            p[*c] = *v as f64;
        }
        p
    }

    fn project(&self, full: &[f64]) -> Vec<f64> {
        self.coords.iter().map(|c| full[*c]).collect()
    }
}

fn count_guard(counts: &[usize]) -> Result<usize> {
    let mut total: usize = 1;
    for c in counts {
        total = total
            .checked_mul(*c)
            .filter(|t| *t <= MAX_VERTICES)
            .ok_or_else(|| Error::TooLarge(format!("more than {MAX_VERTICES} deterministic strategies")))?;
    }
    Ok(total)
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    count_guard(&vec![base; exp])
}

/// Digits of `k` in base `base`, least significant first.
fn digits(mut k: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(k % base);
        k /= base;
    }
    out
}

fn dedup_sorted(mut vs: Vec<Vec<i64>>) -> Vec<Vec<i64>> {
    vs.sort();
    vs.dedup();
    vs
}

/// Deterministic strategies of a scenario. For instrumental scenarios
/// `hybrid` appends the interventional coordinates; without it only the
/// observational table is kept. Prepare-and-measure uses two messages
/// (see [`enumerate_pam_vertices`] for other dimensions).
pub fn enumerate_vertices(scenario: Scenario, hybrid: bool) -> Result<VertexSet> {
    scenario.validate()?;
    match scenario {
        Scenario::Bell { n_a, n_b, n_x, n_y } => {
            let fa = checked_pow(n_a, n_x)?;
            let gb = checked_pow(n_b, n_y)?;
            let raw = count_guard(&[fa, gb])?;
            let coords: Vec<usize> = (0..scenario.len()).collect();
            let vs: Vec<Vec<i64>> = (0..raw)
                .into_par_iter()
                .map(|k| {
                    let f = digits(k % fa, n_a, n_x);
                    let g = digits(k / fa, n_b, n_y);
                    let mut v = vec![0i64; scenario.len()];
                    for x in 0..n_x {
                        for y in 0..n_y {
                            v[scenario.ix_bell(f[x], g[y], x, y)] = 1;
                        }
                    }
                    v
                })
                .collect();
            Ok(VertexSet { scenario, coords, vertices: dedup_sorted(vs), raw_count: raw, dedup: true })
        }
        Scenario::Instrumental { n_x, n_a, n_b } => {
            let fa = checked_pow(n_a, n_x)?;
            let gb = checked_pow(n_b, n_a)?;
            let raw = count_guard(&[fa, gb])?;
            let n_obs = n_x * n_a * n_b;
            let coords: Vec<usize> = if hybrid { (0..scenario.len()).collect() } else { (0..n_obs).collect() };
            let vs: Vec<Vec<i64>> = (0..raw)
                .into_par_iter()
                .map(|k| {
                    let f = digits(k % fa, n_a, n_x);
                    let g = digits(k / fa, n_b, n_a);
                    let mut v = vec![0i64; scenario.len()];
                    for x in 0..n_x {
                        v[scenario.ix_obs(f[x], g[f[x]], x)] = 1;
                    }
                    for a in 0..n_a {
                        v[scenario.ix_do(g[a], a)] = 1;
                    }
                    v.truncate(coords.len());
                    v
                })
                .collect();
            Ok(VertexSet { scenario, coords, vertices: dedup_sorted(vs), raw_count: raw, dedup: true })
        }
        Scenario::Pam { .. } => enumerate_pam_vertices(scenario, 2),
        Scenario::NParty { n } => {
            let raw = checked_pow(4, n)?;
            let coords: Vec<usize> = (0..scenario.len()).collect();
            let vs: Vec<Vec<i64>> = (0..raw)
                .into_par_iter()
                .map(|k| {
                    // party j answers bit (2j + s) of k for setting s
                    let mut v = vec![0i64; scenario.len()];
                    for sets in 0..1usize << n {
                        let outs = (0..n).fold(0, |acc, j| acc | (((k >> (2 * j + ((sets >> j) & 1))) & 1) << j));
                        v[scenario.ix_nparty(outs, sets)] = 1;
                    }
                    v
                })
                .collect();
            Ok(VertexSet { scenario, coords, vertices: dedup_sorted(vs), raw_count: raw, dedup: true })
        }
        Scenario::Bilocal { .. } => Err(Error::ScenarioMismatch(
            "the bilocal set is not a polytope; no vertex description".into(),
        )),
    }
}

/// Classical prepare-and-measure strategies with `d` messages: encodings
/// x → m and decodings (m, y) → b.
pub fn enumerate_pam_vertices(scenario: Scenario, d: usize) -> Result<VertexSet> {
    let Scenario::Pam { n_x, n_y, n_b } = scenario else {
        return Err(Error::ScenarioMismatch(format!("{} is not prepare-and-measure", scenario.label())));
    };
    if d == 0 {
        return Err(Error::InvalidParameter("message dimension must be positive".into()));
    }
    let enc = checked_pow(d, n_x)?;
    let dec = checked_pow(n_b, d * n_y)?;
    let raw = count_guard(&[enc, dec])?;
    let coords: Vec<usize> = (0..scenario.len()).collect();
    let vs: Vec<Vec<i64>> = (0..raw)
        .into_par_iter()
        .map(|k| {
            let e = digits(k % enc, d, n_x);
            let g = digits(k / enc, n_b, d * n_y);
            let mut v = vec![0i64; scenario.len()];
            for x in 0..n_x {
                for y in 0..n_y {
                    v[scenario.ix_pam(g[e[x] * n_y + y], x, y)] = 1;
                }
            }
            v
        })
        .collect();
    Ok(VertexSet { scenario, coords, vertices: dedup_sorted(vs), raw_count: raw, dedup: true })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// Normal over the vertex set's coordinates.
    pub normal: Vec<f64>,
    pub offset: f64,
    /// normal·point − offset (positive: separated).
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Membership {
    Inside { weights: Vec<f64>, reconstruction_error: f64 },
    Outside { certificate: Certificate },
}

fn lp_err(e: impl std::fmt::Display) -> Error {
    Error::Lp(e.to_string())
}

/// Separating margin above which a point counts as outside.
pub const SEPARATION_TOL: f64 = 1e-9;

/// Convex-hull membership. A separation LP (box-normalized normal) decides;
/// inside points get convex weights from a second LP.
pub fn membership(point: &[f64], vs: &VertexSet) -> Result<Membership> {
    let p: Vec<f64> = if point.len() == vs.scenario.len() {
        vs.project(point)
    } else if point.len() == vs.coords.len() {
        point.to_vec()
    } else {
        return Err(Error::DimensionMismatch(format!(
            "point has {} entries, vertex set covers {} of {}",
            point.len(),
            vs.coords.len(),
            vs.scenario.len()
        )));
    };
    if vs.is_empty() {
        return Err(Error::InvalidParameter("empty vertex set".into()));
    }
    let dim = p.len();
    // maximize n·p − c  s.t.  n·v ≤ c for every vertex, −1 ≤ n ≤ 1
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let n: Vec<_> = p.iter().map(|pi| lp.add_var(*pi, (-1.0, 1.0))).collect();
    let c = lp.add_var(-1.0, (-(dim as f64) - 1.0, dim as f64 + 1.0));
    for v in &vs.vertices {
        let mut terms: Vec<_> = n.iter().zip(v).filter(|(_, vi)| **vi != 0).map(|(var, vi)| (*var, *vi as f64)).collect();
        terms.push((c, -1.0));
        lp.add_constraint(terms.as_slice(), ComparisonOp::Le, 0.0);
    }
    let sol = lp.solve().map_err(lp_err)?.into_solution().map_err(|e| lp_err(format!("{e:?}")))?;
    let normal: Vec<f64> = n.iter().map(|v| sol.var_value(*v)).collect();
    let offset = sol.var_value(c);
    // recompute against the vertices exactly rather than trusting the LP
    let offset = vs
        .vertices
        .iter()
        .map(|v| normal.iter().zip(v).map(|(a, b)| a * *b as f64).sum::<f64>())
        .fold(offset.min(f64::MAX), f64::max);
    let margin = normal.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() - offset;
    if margin > SEPARATION_TOL {
        return Ok(Membership::Outside { certificate: Certificate { normal, offset, margin } });
    }
    // minimize Σ s⁺ + s⁻  s.t.  Σ w v + s⁺ − s⁻ = p, Σ w = 1, w ≥ 0
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = vs.vertices.iter().map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let sp: Vec<_> = (0..dim).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let sm: Vec<_> = (0..dim).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for j in 0..dim {
        let mut terms: Vec<_> =
            w.iter().zip(&vs.vertices).filter(|(_, v)| v[j] != 0).map(|(var, v)| (*var, v[j] as f64)).collect();
        terms.push((sp[j], 1.0));
        terms.push((sm[j], -1.0));
        lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, p[j]);
    }
    let all: Vec<_> = w.iter().map(|v| (*v, 1.0)).collect();
    lp.add_constraint(all.as_slice(), ComparisonOp::Eq, 1.0);
    let sol = lp.solve().map_err(lp_err)?.into_solution().map_err(|e| lp_err(format!("{e:?}")))?;
    let weights: Vec<f64> = w.iter().map(|v| sol.var_value(*v).max(0.0)).collect();
    let reconstruction_error = (0..dim)
        .map(|j| {
            let r: f64 = weights.iter().zip(&vs.vertices).map(|(wi, v)| wi * v[j] as f64).sum();
            (r - p[j]).abs()
        })
        .fold(0.0, f64::max);
    Ok(Membership::Inside { weights, reconstruction_error })
}

pub fn membership_of(b: &Behavior, vs: &VertexSet) -> Result<Membership> {
    if b.scenario() != vs.scenario {
        return Err(Error::ScenarioMismatch(format!("{} vs {}", b.scenario().label(), vs.scenario.label())));
    }
    membership(b.probs(), vs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub functional: String,
    /// Extreme value over the vertices in the violation direction.
    pub extreme: f64,
    pub classical_bound: f64,
    pub matches: bool,
    /// Indices of vertices attaining the extreme value.
    pub attaining: Vec<usize>,
}

/// Checks a linear functional's classical bound against the vertices.
pub fn validate_functional(f: &Functional, vs: &VertexSet) -> Result<ValidationReport> {
    if f.kind != Kind::Linear {
        return Err(Error::ScenarioMismatch(format!("{} is not linear", f.name)));
    }
    if f.scenario != vs.scenario {
        return Err(Error::ScenarioMismatch(format!("{} is on {}, vertices on {}", f.name, f.scenario.label(), vs.scenario.label())));
    }
    if let Some((k, _)) = f.terms().into_iter().find(|(k, _)| !vs.coords.contains(k)) {
        return Err(Error::ScenarioMismatch(format!(
            "{} uses coordinate {k}, which this vertex set does not cover",
            f.name
        )));
    }
    let score = |v: f64| match f.sense {
        Sense::Above => v,
        Sense::Below => -v,
        Sense::AbsAbove => v.abs(),
    };
    let values: Vec<f64> = (0..vs.len()).into_par_iter().map(|k| f.evaluate_flat(&vs.full_vertex(k))).collect();
    let best = values.iter().map(|v| score(*v)).fold(f64::NEG_INFINITY, f64::max);
    let attaining: Vec<usize> = (0..values.len()).filter(|k| score(values[*k]) == best).collect();
    let extreme = values[attaining[0]];
    let bound_score = match f.sense {
        Sense::Below => -f.classical_bound,
        _ => f.classical_bound,
    };
    Ok(ValidationReport {
        functional: f.name.clone(),
        extreme,
        classical_bound: f.classical_bound,
        matches: (best - bound_score).abs() <= 1e-12,
        attaining,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Facet {
    /// Integer normal over the scenario's flat coordinates.
    pub normal: Vec<i64>,
    pub offset: i64,
    /// Vertices with normal·v = offset.
    pub tight: Vec<usize>,
    /// Tight set equals {v : v_c = 0} for a single coordinate c.
    pub nonnegativity: bool,
}

impl Facet {
    pub fn render(&self, scenario: &Scenario) -> String {
        let coeffs: Vec<f64> = self.normal.iter().map(|c| *c as f64).collect();
        format!("{} <= {}", render_terms(scenario, &coeffs, 0.0), self.offset)
    }

    pub fn slack(&self, v: &[i64], coords: &[usize]) -> i64 {
        self.offset - coords.iter().zip(v).map(|(c, x)| self.normal[*c] * x).sum::<i64>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn and(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & b).collect())
    }
    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
    fn contains(&self, o: &Bits) -> bool {
        self.0.iter().zip(&o.0).all(|(a, b)| a & b == *b)
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn normalize(v: &mut [i128]) {
    let g = v.iter().fold(0, |g, x| gcd(g, *x));
    if g > 1 {
        v.iter_mut().for_each(|x| *x /= g);
    }
}

fn dot(a: &[i128], b: &[i128]) -> i128 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column pivots of the difference matrix: coordinates that parametrize
/// the affine hull of the points.
fn affine_pivots(points: &[Vec<i64>]) -> Vec<usize> {
    let base = &points[0];
    let mut rows: Vec<Vec<i128>> =
        points[1..].iter().map(|p| p.iter().zip(base).map(|(a, b)| (*a - *b) as i128).collect()).collect();
    let ncols = base.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(pr) = (r..rows.len()).find(|i| rows[*i][col] != 0) else {
            continue;
        };
        rows.swap(r, pr);
        let piv = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row[col] != 0 {
                let f = row[col];
                for (x, pv) in row.iter_mut().zip(&piv) {
                    *x = *x * piv[col] - f * pv;
                }
                normalize(row);
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    pivots
}

/// Indices of rows forming a basis of the row space.
fn independent_rows(rows: &[Vec<i128>]) -> Vec<usize> {
    let mut basis: Vec<(usize, Vec<i128>)> = Vec::new(); // (pivot column, reduced row)
    let mut chosen = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut v = r.clone();
        for (pc, b) in &basis {
            if v[*pc] != 0 {
                let f = v[*pc];
                for (x, bv) in v.iter_mut().zip(b) {
                    *x = *x * b[*pc] - f * bv;
                }
                normalize(&mut v);
            }
        }
        if let Some(pc) = v.iter().position(|x| *x != 0) {
            basis.push((pc, v));
            chosen.push(i);
        }
    }
    chosen
}

/// Columns of B⁻¹ scaled to primitive integer vectors.
fn inverse_columns(b: &[Vec<i128>]) -> Result<Vec<Vec<i128>>> {
    let n = b.len();
    let mut m: Vec<Vec<i128>> = b
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| i128::from(i == j)));
            r
        })
        .collect();
    for col in 0..n {
        let pr = (col..n).find(|i| m[*i][col] != 0).ok_or_else(|| Error::Numerical("singular initial basis".into()))?;
        m.swap(col, pr);
        let piv = m[col].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != col && row[col] != 0 {
                let f = row[col];
                for (x, pv) in row.iter_mut().zip(&piv) {
                    *x = x
                        .checked_mul(piv[col])
                        .and_then(|a| f.checked_mul(*pv).and_then(|b| a.checked_sub(b)))
                        .ok_or_else(|| Error::Numerical("integer overflow in basis inversion".into()))?;
                }
                normalize(row);
            }
        }
    }
    // row i now reads d_i·x_i = M_i, so B⁻¹[i][j] = M[i][j] / d_i
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut lcm: i128 = 1;
        let fracs: Vec<(i128, i128)> = (0..n)
            .map(|i| {
                let (mut num, mut den) = (m[i][n + j], m[i][i]);
                if den < 0 {
                    num = -num;
                    den = -den;
                }
                let g = gcd(num, den).max(1);
                (num / g, den / g)
            })
            .collect();
        for (_, den) in &fracs {
            lcm = lcm / gcd(lcm, *den) * den;
        }
        let mut col: Vec<i128> = fracs.iter().map(|(num, den)| num * (lcm / den)).collect();
        normalize(&mut col);
        cols.push(col);
    }
    Ok(cols)
}

/// Complete irredundant facet list of conv(vertices), with normals over the
/// scenario's flat coordinates. Nonnegativity facets are flagged, not
/// removed.
pub fn facet_enumeration(vs: &VertexSet) -> Result<Vec<Facet>> {
    if vs.len() > MAX_FACET_VERTICES {
        return Err(Error::TooLarge(format!("{} vertices exceed the facet guard {MAX_FACET_VERTICES}", vs.len())));
    }
    if vs.len() < 2 {
        return Err(Error::InvalidParameter("need at least two vertices".into()));
    }
    let pivots = affine_pivots(&vs.vertices);
    let k = pivots.len();
    if k > MAX_FACET_DIM {
        return Err(Error::TooLarge(format!("affine dimension {k} exceeds the facet guard {MAX_FACET_DIM}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("all vertices coincide".into()));
    }
    // rows (1, v_J): the cone {h : row·h ≥ 0} has one extreme ray per facet
    let rows: Vec<Vec<i128>> = vs
        .vertices
        .iter()
        .map(|v| std::iter::once(1i128).chain(pivots.iter().map(|j| v[*j] as i128)).collect())
        .collect();
    let m = rows.len();
    let init = independent_rows(&rows);
    debug_assert_eq!(init.len(), k + 1);
    let basis: Vec<Vec<i128>> = init.iter().map(|i| rows[*i].clone()).collect();
    let cols = inverse_columns(&basis)?;
    let mut rays: Vec<(Vec<i128>, Bits)> = cols
        .into_iter()
        .enumerate()
        .map(|(j, col)| {
            let mut z = Bits::new(m);
            for (t, i) in init.iter().enumerate() {
                if t != j {
                    z.set(*i);
                }
            }
            (col, z)
        })
        .collect();
    let need = (k as u32).saturating_sub(1);
    for i in (0..m).filter(|i| !init.contains(i)) {
        let s: Vec<i128> = rays.iter().map(|(r, _)| dot(&rows[i], r)).collect();
        let plus: Vec<usize> = (0..rays.len()).filter(|t| s[*t] > 0).collect();
        let minus: Vec<usize> = (0..rays.len()).filter(|t| s[*t] < 0).collect();
        if minus.is_empty() {
            for (t, (_, z)) in rays.iter_mut().enumerate() {
                if s[t] == 0 {
                    z.set(i);
                }
            }
            continue;
        }
        let mut new_rays: Vec<(Vec<i128>, Bits)> = Vec::new();
        for &p in &plus {
            for &q in &minus {
                let common = rays[p].1.and(&rays[q].1);
                if common.count() < need {
                    continue;
                }
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(t, (_, z))| t == p || t == q || !z.contains(&common));
                if !adjacent {
                    continue;
                }
                let (sp, sq) = (s[p], -s[q]);
                let mut r: Vec<i128> = rays[q].0.iter().zip(&rays[p].0).map(|(a, b)| sp * a + sq * b).collect();
                normalize(&mut r);
                let mut z = common;
                z.set(i);
                new_rays.push((r, z));
            }
        }
        let mut kept: Vec<(Vec<i128>, Bits)> = Vec::with_capacity(plus.len() + new_rays.len());
        for (t, (r, mut z)) in std::mem::take(&mut rays).into_iter().enumerate() {
            if s[t] >= 0 {
                if s[t] == 0 {
                    z.set(i);
                }
                kept.push((r, z));
            }
        }
        kept.extend(new_rays);
        rays = kept;
    }
    let zero_sets: Vec<Bits> = vs
        .coords
        .iter()
        .enumerate()
        .map(|(ci, _)| {
            let mut z = Bits::new(m);
            for (vi, v) in vs.vertices.iter().enumerate() {
                if v[ci] == 0 {
                    z.set(vi);
                }
            }
            z
        })
        .collect();
    let mut facets = Vec::with_capacity(rays.len());
    for (h, z) in rays {
        let mut normal = vec![0i64; vs.scenario.len()];
        for (t, j) in pivots.iter().enumerate() {
            normal[vs.coords[*j]] =
                i64::try_from(-h[t + 1]).map_err(|_| Error::Numerical("facet coefficient overflow".into()))?;
        }
        let offset = i64::try_from(h[0]).map_err(|_| Error::Numerical("facet offset overflow".into()))?;
        let tight: Vec<usize> = (0..m).filter(|v| z.get(*v)).collect();
        let nonnegativity = zero_sets.iter().any(|zs| *zs == z);
        facets.push(Facet { normal, offset, tight, nonnegativity });
    }
    facets.sort_by(|a, b| (a.nonnegativity, &a.normal, a.offset).cmp(&(b.nonnegativity, &b.normal, b.offset)));
    Ok(facets)
}

/// Facets as CSV: one column per flat coordinate, then the offset.
pub fn facets_to_csv(scenario: &Scenario, facets: &[Facet]) -> String {
    let header: Vec<String> =
        (0..scenario.len()).map(|k| format!("\"{}\"", crate::functionals::coordinate_name(scenario, k))).collect();
    let mut out = format!("{},offset,nonnegativity\n", header.join(","));
    for f in facets {
        let cells: Vec<String> = f.normal.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{},{},{}\n", cells.join(","), f.offset, f.nonnegativity));
    }
    out
}
