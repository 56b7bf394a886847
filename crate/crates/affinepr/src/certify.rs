//! Retrievability certification: exact subset-span decisions for the real
//! field, structured-pattern certificates, a numerical falsifier for the
//! complex field, and brute-force collision oracles.
//!
//! The central characterization: an ensemble fails to be retrievable exactly
//! when some pair (u, v) with u != 0 zeroes every product
//! `<a_k, u> (<a_k, v> + b_k)` (real) or its real part under the conjugated
//! pairing (complex). Witnesses are always returned as x = v + u, y = v - u
//! and re-verified against the measurement map before any verdict is emitted.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::{MeasurementEnsemble, ScalarField, Signal};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rational;

pub use crate::linalg::RankTolerance;

/// Hard cap on subset enumeration (2^m scaling).
pub const ENUMERATION_CAP: usize = 24;

/// Witness acceptance: max-norm measurement mismatch relative to the scale of
/// the measurements.
pub const WITNESS_MISMATCH_TOL: f64 = 1e-9;

/// Witness acceptance: minimum Euclidean separation of the two signals.
pub const WITNESS_SEPARATION_MIN: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Witness types and verdicts
// ---------------------------------------------------------------------------

/// Two distinct signals with identical magnitude vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub x: Signal,
    pub y: Signal,
}

impl WitnessPair {
    /// Max-norm difference of the two measurement vectors.
    pub fn measurement_mismatch(&self, e: &MeasurementEnsemble) -> Result<f64> {
        let mx = e.measure(&self.x)?;
        let my = e.measure(&self.y)?;
        Ok(mx.mismatch(&my))
    }

    /// Checks the witness invariants against the ensemble; failure is a hard
    /// internal error, never silently ignored by emitters.
    pub fn verify(&self, e: &MeasurementEnsemble) -> Result<()> {
        let mx = e.measure(&self.x)?;
        let my = e.measure(&self.y)?;
        let mismatch = mx.mismatch(&my);
        let scale = 1.0 + mx.max_abs();
        if mismatch > WITNESS_MISMATCH_TOL * scale {
            return Err(Error::WitnessSelfCheck(format!(
                "measurement mismatch {mismatch:.3e} exceeds {:.3e}",
                WITNESS_MISMATCH_TOL * scale
            )));
        }
        let sep = self.x.distance(&self.y);
        if sep < WITNESS_SEPARATION_MIN {
            return Err(Error::WitnessSelfCheck(format!(
                "signals are not separated: ||x - y|| = {sep:.3e}"
            )));
        }
        Ok(())
    }
}

/// The condition-(C) pair: u != 0 together with v such that every measurement
/// product vanishes. The equivalent collision is x = v + u, y = v - u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UVWitness {
    pub u: Signal,
    pub v: Signal,
}

impl UVWitness {
    /// Builds the witness with u scaled to unit norm and a canonical sign;
    /// x and y are derived afterwards. Only real scalings are applied: a
    /// phase rotation would not preserve the condition-(C) residuals.
    pub fn new_normalized(
        field: ScalarField,
        u: DVector<Complex64>,
        v: DVector<Complex64>,
    ) -> Result<Self> {
        let mut u = u;
        sign_canonicalize(&mut u);
        let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::WitnessSelfCheck("u must be nonzero".into()));
        }
        u /= Complex64::new(norm, 0.0);
        Ok(UVWitness {
            u: Signal::new(field, u)?,
            v: Signal::new(field, v)?,
        })
    }

    pub fn witness_pair(&self) -> WitnessPair {
        let x = self.v.entries() + self.u.entries();
        let y = self.v.entries() - self.u.entries();
        let field = self.u.field();
        WitnessPair {
            x: Signal::new(field, x).expect("witness signals inherit validity"),
            y: Signal::new(field, y).expect("witness signals inherit validity"),
        }
    }

    /// Largest condition-(C) residual over the measurements.
    pub fn max_residual(&self, e: &MeasurementEnsemble) -> Result<f64> {
        let res = violates_condition_c(e, &self.u, &self.v)?;
        Ok(res.iter().fold(0.0_f64, |a, &r| a.max(r.abs())))
    }

    pub fn verify(&self, e: &MeasurementEnsemble) -> Result<()> {
        if self.u.norm() < WITNESS_SEPARATION_MIN {
            return Err(Error::WitnessSelfCheck("u is numerically zero".into()));
        }
        let max_res = self.max_residual(e)?;
        let scale = 1.0 + e.rows_frobenius().powi(2)
            + e.shifts().iter().map(|z| z.norm_sqr()).sum::<f64>();
        if max_res > WITNESS_MISMATCH_TOL * scale {
            return Err(Error::WitnessSelfCheck(format!(
                "condition-(C) residual {max_res:.3e} exceeds {:.3e}",
                WITNESS_MISMATCH_TOL * scale
            )));
        }
        Ok(())
    }
}

/// Kind of certificate backing a Retrievable verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    ExactSubsetCheck,
    StructuredConstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InconclusiveReason {
    PatternNotMatched,
    NoWitnessFound,
}

/// Search statistics attached to an Inconclusive verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub reason: InconclusiveReason,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub best_residual: Option<f64>,
}

/// Outcome of certification.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Retrievable(Certificate),
    NotRetrievable { witness: WitnessPair, uv: UVWitness },
    Inconclusive(SearchStats),
}

impl Verdict {
    pub fn is_retrievable(&self) -> bool {
        matches!(self, Verdict::Retrievable(_))
    }

    pub fn is_not_retrievable(&self) -> bool {
        matches!(self, Verdict::NotRetrievable { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Verdict::Inconclusive(_))
    }
}

/// Flips the vector by -1 if needed so the largest-modulus entry (first among
/// ties) has positive real part (positive imaginary part on a tie at zero).
fn sign_canonicalize(v: &mut DVector<Complex64>) {
    let mut best = 0;
    let mut best_mod = 0.0_f64;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm_sqr();
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    if best_mod == 0.0 {
        return;
    }
    let z = v[best];
    if z.re < 0.0 || (z.re == 0.0 && z.im < 0.0) {
        for entry in v.iter_mut() {
            *entry = -*entry;
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WitnessRepr {
    x: Signal,
    y: Signal,
    u: Signal,
    v: Signal,
}

#[derive(Serialize, Deserialize)]
struct VerdictRepr {
    outcome: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    witness: Option<WitnessRepr>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    stats: Option<SearchStats>,
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            Verdict::Retrievable(c) => VerdictRepr {
                outcome: "retrievable".into(),
                certificate: Some(*c),
                witness: None,
                stats: None,
            },
            Verdict::NotRetrievable { witness, uv } => VerdictRepr {
                outcome: "not_retrievable".into(),
                certificate: None,
                witness: Some(WitnessRepr {
                    x: witness.x.clone(),
                    y: witness.y.clone(),
                    u: uv.u.clone(),
                    v: uv.v.clone(),
                }),
                stats: None,
            },
            Verdict::Inconclusive(stats) => VerdictRepr {
                outcome: "inconclusive".into(),
                certificate: None,
                witness: None,
                stats: Some(stats.clone()),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = VerdictRepr::deserialize(d)?;
        match repr.outcome.as_str() {
            "retrievable" => Ok(Verdict::Retrievable(
                repr.certificate
                    .ok_or_else(|| D::Error::custom("retrievable verdict requires a certificate"))?,
            )),
            "not_retrievable" => {
                let w = repr
                    .witness
                    .ok_or_else(|| D::Error::custom("not_retrievable verdict requires a witness"))?;
                Ok(Verdict::NotRetrievable {
                    witness: WitnessPair { x: w.x, y: w.y },
                    uv: UVWitness { u: w.u, v: w.v },
                })
            }
            "inconclusive" => Ok(Verdict::Inconclusive(repr.stats.ok_or_else(|| {
                D::Error::custom("inconclusive verdict requires search stats")
            })?)),
            other => Err(D::Error::custom(format!("unknown outcome {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Condition (C) machinery
// ---------------------------------------------------------------------------

fn linear_value(e: &MeasurementEnsemble, j: usize, x: &Signal) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..e.d() {
        acc += e.rows()[(j, i)] * x.entries()[i];
    }
    acc
}

/// Per-measurement condition-(C) residuals: entry k is
/// `<a_k, u> (<a_k, v> + b_k)` for the real field and
/// `Re(conj(<a_k, u>) (<a_k, v> + b_k))` for the complex field, where
/// `<a_k, .>` is the plain (non-conjugating) product of the stored row. The
/// pair (u, v) is a violation iff u != 0 and the vector is entrywise ~0.
pub fn violates_condition_c(
    e: &MeasurementEnsemble,
    u: &Signal,
    v: &Signal,
) -> Result<DVector<f64>> {
    for (s, name) in [(u, "u"), (v, "v")] {
        if s.field() != e.field() {
            return Err(Error::FieldMismatch(format!(
                "violates_condition_c: {name} has field {}",
                s.field()
            )));
        }
        if s.d() != e.d() {
            return Err(Error::DimensionMismatch(format!(
                "violates_condition_c: {name} has dimension {}, ensemble d = {}",
                s.d(),
                e.d()
            )));
        }
    }
    Ok(DVector::from_fn(e.m(), |k, _| {
        let p = linear_value(e, k, u);
        let q = linear_value(e, k, v) + e.shift(k);
        (p.conj() * q).re
    }))
}

/// Rows of the homogeneous linear system for u (with v fixed), restricted to
/// the given measurement indices: real field gives |idx| x d, complex gives
/// |idx| x 2d in the (u_R, u_I) parameterization.
pub(crate) fn condition_c_matrix(
    e: &MeasurementEnsemble,
    v: &Signal,
    indices: &[usize],
) -> DMatrix<f64> {
    let d = e.d();
    match e.field() {
        ScalarField::Real => DMatrix::from_fn(indices.len(), d, |r, i| {
            let j = indices[r];
            let q = (linear_value(e, j, v) + e.shift(j)).re;
            q * e.rows()[(j, i)].re
        }),
        ScalarField::Complex => DMatrix::from_fn(indices.len(), 2 * d, |r, col| {
            let j = indices[r];
            let q = linear_value(e, j, v) + e.shift(j);
            if col < d {
                let rk = e.rows()[(j, col)];
                q.re * rk.re + q.im * rk.im
            } else {
                let rk = e.rows()[(j, col - d)];
                -q.re * rk.im + q.im * rk.re
            }
        }),
    }
}

// ---------------------------------------------------------------------------
// Jacobian of the squared map
// ---------------------------------------------------------------------------

/// Jacobian of the squared magnitude map.
///
/// Real field: the d x m matrix whose column j is 2 (<a_j, x> + b_j) a_j.
/// Complex field: the m x 2d real Jacobian on (Re x, Im x), row k equal to
/// 2 [alpha a_R + beta a_I, -alpha a_I + beta a_R] where alpha + i beta is the
/// affine value of measurement k.
pub fn jacobian(e: &MeasurementEnsemble, x: &Signal) -> Result<DMatrix<f64>> {
    if x.field() != e.field() {
        return Err(Error::FieldMismatch("jacobian".into()));
    }
    if x.d() != e.d() {
        return Err(Error::DimensionMismatch(format!(
            "jacobian: signal d = {}, ensemble d = {}",
            x.d(),
            e.d()
        )));
    }
    let d = e.d();
    let m = e.m();
    match e.field() {
        ScalarField::Real => Ok(DMatrix::from_fn(d, m, |i, j| {
            let z = e.affine_value(j, x).re;
            2.0 * z * e.rows()[(j, i)].re
        })),
        ScalarField::Complex => Ok(DMatrix::from_fn(m, 2 * d, |k, col| {
            let z = e.affine_value(k, x);
            if col < d {
                let r = e.rows()[(k, col)];
                2.0 * (z.re * r.re + z.im * r.im)
            } else {
                let r = e.rows()[(k, col - d)];
                2.0 * (-z.re * r.im + z.im * r.re)
            }
        })),
    }
}

/// Target rank (d real / 2d complex) minus the numerical rank of the Jacobian
/// at x; zero means full rank.
pub fn jacobian_rank_deficit(
    e: &MeasurementEnsemble,
    x: &Signal,
    tol: RankTolerance,
) -> Result<usize> {
    let j = jacobian(e, x)?;
    let target = match e.field() {
        ScalarField::Real => e.d(),
        ScalarField::Complex => 2 * e.d(),
    };
    Ok(target - linalg::numerical_rank(&j, tol).min(target))
}

// ---------------------------------------------------------------------------
// Exact real certifier
// ---------------------------------------------------------------------------

/// How rank/span decisions are made in the exact real certifier.
#[derive(Debug, Clone, Copy)]
pub enum RankDecisions {
    /// Singular-value decisions at the given tolerance.
    Numeric(RankTolerance),
    /// Exact rational arithmetic (inputs are dyadic rationals, so conversion
    /// is lossless); no tolerance enters the verdict.
    ExactRational,
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k - 1;
    loop {
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
        if i == 0 {
            return false;
        }
        i -= 1;
    }
}

/// Visits every subset of {0..m-1} by increasing cardinality, lexicographic
/// within each cardinality, until the visitor returns Some.
fn visit_subsets<R>(m: usize, mut visit: impl FnMut(&[usize]) -> Result<Option<R>>) -> Result<Option<R>> {
    for k in 0..=m {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if let Some(r) = visit(&idx)? {
                return Ok(Some(r));
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    Ok(None)
}

fn complement(m: usize, s: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; m];
    for &j in s {
        inside[j] = true;
    }
    (0..m).filter(|&j| !inside[j]).collect()
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)])
}

fn select_entries(b: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |r, _| b[rows[r]])
}

/// Exact decision of real affine phase retrievability via the subset-span
/// criterion: retrievable iff for every S with b_S in span(A_S), the rows
/// indexed by the complement span R^d. On failure returns a verified witness
/// built from the least-squares common root v on S and a unit u orthogonal to
/// the complement rows.
pub fn certify_real_exact(e: &MeasurementEnsemble, tol: RankTolerance) -> Result<Verdict> {
    certify_real_exact_with(e, RankDecisions::Numeric(tol))
}

/// As [`certify_real_exact`], with the rank-decision mode explicit.
pub fn certify_real_exact_with(
    e: &MeasurementEnsemble,
    decisions: RankDecisions,
) -> Result<Verdict> {
    if e.field() != ScalarField::Real {
        return Err(Error::FieldMismatch(
            "certify_real_exact requires a real ensemble".into(),
        ));
    }
    let m = e.m();
    if m > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            m,
            cap: ENUMERATION_CAP,
        });
    }
    match decisions {
        RankDecisions::Numeric(tol) => certify_real_numeric(e, tol),
        RankDecisions::ExactRational => certify_real_rational(e),
    }
}

fn certify_real_numeric(e: &MeasurementEnsemble, tol: RankTolerance) -> Result<Verdict> {
    let a = e.real_rows();
    let b = e.real_shifts();
    let m = e.m();
    let d = e.d();

    let failing = visit_subsets(m, |s| {
        let sc = complement(m, s);
        // Cheapest test first: most subsets leave a spanning complement.
        let a_sc = select_rows(&a, &sc);
        if linalg::numerical_rank(&a_sc, tol) == d {
            return Ok(None);
        }
        let a_s = select_rows(&a, s);
        let b_s = select_entries(&b, s);
        if !linalg::in_column_span(&a_s, &b_s, tol) {
            return Ok(None);
        }
        debug_assert!(membership_is_hereditary(&a, &b, s, tol));
        let v = linalg::min_norm_solve(&a_s, &(-&b_s), tol)?;
        let u = linalg::smallest_right_singular_direction(&a_sc);
        Ok(Some((u, v)))
    })?;

    match failing {
        Some((u, v)) => {
            let uv = UVWitness::new_normalized(
                ScalarField::Real,
                u.map(|x| Complex64::new(x, 0.0)),
                v.map(|x| Complex64::new(x, 0.0)),
            )?;
            let witness = uv.witness_pair();
            witness.verify(e)?;
            uv.verify(e)?;
            Ok(Verdict::NotRetrievable { witness, uv })
        }
        None => Ok(Verdict::Retrievable(Certificate::ExactSubsetCheck)),
    }
}

// Membership is inherited by sub-subsets: the same v solves the restricted
// system.
fn membership_is_hereditary(a: &DMatrix<f64>, b: &DVector<f64>, s: &[usize], tol: RankTolerance) -> bool {
    (0..s.len()).all(|drop| {
        let sub: Vec<usize> = s
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != drop)
            .map(|(_, &j)| j)
            .collect();
        linalg::in_column_span(&select_rows(a, &sub), &select_entries(b, &sub), tol)
    })
}

fn certify_real_rational(e: &MeasurementEnsemble) -> Result<Verdict> {
    let a = e.real_rows();
    let b = e.real_shifts();
    let m = e.m();
    let d = e.d();

    let a_rows: Vec<Vec<f64>> = (0..m).map(|j| (0..d).map(|i| a[(j, i)]).collect()).collect();
    let b_rats: Vec<num_rational::BigRational> = (0..m)
        .map(|j| rational::rational_from_f64(b[j]).ok_or(Error::NonFinite("shifts".into())))
        .collect::<Result<_>>()?;

    let rat_rows = |rows: &[usize]| -> Result<rational::RatMatrix> {
        let selected: Vec<Vec<f64>> = rows.iter().map(|&j| a_rows[j].clone()).collect();
        if selected.is_empty() {
            return Ok(rational::RatMatrix::zeros(0, d));
        }
        rational::RatMatrix::from_f64_rows(&selected).ok_or(Error::NonFinite("rows".into()))
    };

    let failing = visit_subsets(m, |s| {
        let sc = complement(m, s);
        let a_sc = rat_rows(&sc)?;
        if a_sc.rank() == d {
            return Ok(None);
        }
        let a_s = rat_rows(s)?;
        let b_s: Vec<num_rational::BigRational> = s.iter().map(|&j| -b_rats[j].clone()).collect();
        if a_s.nrows() > 0 && !rational::in_column_span_exact(&a_s, &b_s) {
            return Ok(None);
        }
        let v = rational::solve_exact(&a_s, &b_s)
            .ok_or_else(|| Error::Internal("span test passed but solve failed".into()))?;
        let u = rational::null_vector_exact(&a_sc)
            .ok_or_else(|| Error::Internal("rank deficit certified but no null vector".into()))?;
        Ok(Some((u, v)))
    })?;

    match failing {
        Some((u, v)) => {
            let u_f: DVector<Complex64> =
                DVector::from_fn(d, |i, _| Complex64::new(rational::to_f64(&u[i]), 0.0));
            let v_f: DVector<Complex64> =
                DVector::from_fn(d, |i, _| Complex64::new(rational::to_f64(&v[i]), 0.0));
            let uv = UVWitness::new_normalized(ScalarField::Real, u_f, v_f)?;
            let witness = uv.witness_pair();
            witness.verify(e)?;
            uv.verify(e)?;
            Ok(Verdict::NotRetrievable { witness, uv })
        }
        None => Ok(Verdict::Retrievable(Certificate::ExactSubsetCheck)),
    }
}

// ---------------------------------------------------------------------------
// Structured-pattern certificates
// ---------------------------------------------------------------------------

/// Recognizes the minimal constructions: (B, B)^T real with per-coordinate
/// distinct shifts, or (B, B, B)^T complex with per-coordinate non-collinear
/// shift triples, B nonsingular in both cases. Anything else is Inconclusive
/// (pattern not matched) so the caller can fall through to other certifiers.
pub fn certify_structured(e: &MeasurementEnsemble, tol: RankTolerance) -> Verdict {
    let not_matched = Verdict::Inconclusive(SearchStats {
        reason: InconclusiveReason::PatternNotMatched,
        restarts: 0,
        best_residual: None,
    });
    let d = e.d();
    let copies = match e.field() {
        ScalarField::Real => 2,
        ScalarField::Complex => 3,
    };
    if e.m() != copies * d {
        return not_matched;
    }
    // Blocks must repeat exactly; perturbed ensembles must not match.
    for c in 1..copies {
        for j in 0..d {
            for i in 0..d {
                if e.rows()[(c * d + j, i)] != e.rows()[(j, i)] {
                    return not_matched;
                }
            }
        }
    }
    let block = DMatrix::from_fn(d, d, |j, i| e.rows()[(j, i)]);
    if linalg::numerical_rank(&block, tol) != d {
        return not_matched;
    }
    match e.field() {
        ScalarField::Real => {
            for j in 0..d {
                if e.shift(j).re == e.shift(d + j).re {
                    return not_matched;
                }
            }
        }
        ScalarField::Complex => {
            for j in 0..d {
                let margin = crate::core::collinearity_margin(
                    e.shift(j),
                    e.shift(d + j),
                    e.shift(2 * d + j),
                );
                if margin <= 0.0 {
                    return not_matched;
                }
            }
        }
    }
    Verdict::Retrievable(Certificate::StructuredConstruction)
}

// ---------------------------------------------------------------------------
// Alternating condition-(C) falsifier
// ---------------------------------------------------------------------------

/// Falsifier configuration: restarts, iteration budget, the scale-aware
/// residual acceptance factor, and the RNG seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FalsifyConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub residual_factor: f64,
    pub seed: u64,
}

impl FalsifyConfig {
    pub fn seeded(seed: u64) -> Self {
        FalsifyConfig {
            seed,
            ..Default::default()
        }
    }
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        FalsifyConfig {
            restarts: 32,
            max_iters: 500,
            residual_factor: 1e-10,
            seed: 0,
        }
    }
}

pub(crate) fn ensemble_scale(e: &MeasurementEnsemble) -> f64 {
    1.0 + e.rows_frobenius().powi(2) + e.shifts().iter().map(|z| z.norm_sqr()).sum::<f64>()
}

fn param_dim(e: &MeasurementEnsemble) -> usize {
    match e.field() {
        ScalarField::Real => e.d(),
        ScalarField::Complex => 2 * e.d(),
    }
}

fn signal_from_params(field: ScalarField, w: &DVector<f64>) -> Signal {
    Signal::from_real_parameters(field, w).expect("parameter vectors are finite")
}

/// Least-squares system for the v-step: residual_k as an affine function of
/// the real parameterization of v, with u fixed.
fn v_step_system(e: &MeasurementEnsemble, u: &Signal) -> (DMatrix<f64>, DVector<f64>) {
    let d = e.d();
    let m = e.m();
    let p: Vec<Complex64> = (0..m).map(|k| linear_value(e, k, u)).collect();
    match e.field() {
        ScalarField::Real => {
            let mat = DMatrix::from_fn(m, d, |k, i| p[k].re * e.rows()[(k, i)].re);
            let rhs = DVector::from_fn(m, |k, _| -(p[k].re * e.shift(k).re));
            (mat, rhs)
        }
        ScalarField::Complex => {
            let mat = DMatrix::from_fn(m, 2 * d, |k, col| {
                if col < d {
                    let c = p[k].conj() * e.rows()[(k, col)];
                    c.re
                } else {
                    let c = p[k].conj() * e.rows()[(k, col - d)];
                    -c.im
                }
            });
            let rhs = DVector::from_fn(m, |k, _| -((p[k].conj() * e.shift(k)).re));
            (mat, rhs)
        }
    }
}

struct AlternatingOutcome {
    best_residual: f64,
    witness: Option<UVWitness>,
}

/// Quadratic polish of a promising (u, v) pair: damped Gauss-Newton on the
/// condition-(C) residuals augmented with the unit-norm equation for u, which
/// rules out the trivial collapse u -> 0. Returns the refined pair and its F.
fn polish_candidate(
    e: &MeasurementEnsemble,
    u: &Signal,
    v: &Signal,
) -> (DVector<f64>, DVector<f64>, f64) {
    let n = param_dim(e);
    let m = e.m();
    let all_indices: Vec<usize> = (0..m).collect();
    let gamma = ensemble_scale(e).sqrt();
    let w0 = {
        let mut w = DVector::zeros(2 * n);
        w.rows_mut(0, n).copy_from(&u.to_real_parameters());
        w.rows_mut(n, n).copy_from(&v.to_real_parameters());
        w
    };
    let split = |w: &DVector<f64>| -> (Signal, Signal) {
        let uw = w.rows(0, n).into_owned();
        let vw = w.rows(n, n).into_owned();
        (
            signal_from_params(e.field(), &uw),
            signal_from_params(e.field(), &vw),
        )
    };
    let out = crate::optim::damped_gauss_newton(
        |w| {
            let (u, v) = split(w);
            let res = violates_condition_c(e, &u, &v).expect("dims fixed");
            let mut full = DVector::zeros(m + 1);
            full.rows_mut(0, m).copy_from(&res);
            full[m] = gamma * (w.rows(0, n).norm_squared() - 1.0);
            full
        },
        |w| {
            let (u, v) = split(w);
            let g = condition_c_matrix(e, &v, &all_indices);
            let (l, _) = v_step_system(e, &u);
            let mut jac = DMatrix::zeros(m + 1, 2 * n);
            jac.view_mut((0, 0), (m, n)).copy_from(&g);
            jac.view_mut((0, n), (m, n)).copy_from(&l);
            for i in 0..n {
                jac[(m, i)] = 2.0 * gamma * w[i];
            }
            jac
        },
        w0,
        &crate::optim::DampedConfig {
            max_iters: 60,
            damping_init: 1e-3,
            success_threshold: 0.0,
        },
    );
    let uw = out.params.rows(0, n).into_owned();
    let vw = out.params.rows(n, n).into_owned();
    let norm = uw.norm();
    let uw = if norm > 0.0 { uw / norm } else { uw };
    let g = condition_c_matrix(e, &signal_from_params(e.field(), &vw), &all_indices);
    let f = (&g * &uw).norm_squared();
    (uw, vw, f)
}

/// Alternating minimization of F(u, v) = sum_k residual_k^2 over ||u|| = 1:
/// the v-step is a linear least-squares solve with u fixed; the u-step takes
/// the unit eigenvector of the smallest eigenvalue of the induced quadratic
/// form with v fixed. Deterministic per seed; restarts run sequentially and
/// the first verified witness wins.
fn alternating_search(
    e: &MeasurementEnsemble,
    restarts: usize,
    max_iters: usize,
    threshold: f64,
    seed: u64,
    tol: RankTolerance,
) -> Result<AlternatingOutcome> {
    let n = param_dim(e);
    let all_indices: Vec<usize> = (0..e.m()).collect();
    let mut best = f64::INFINITY;

    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64 + 1);
        let mut uw = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = uw.norm();
        if norm == 0.0 {
            continue;
        }
        uw /= norm;
        let mut u = signal_from_params(e.field(), &uw);
        let mut v = Signal::zeros(e.field(), e.d());
        let mut f_prev = f64::INFINITY;
        let mut f_current = f64::INFINITY;
        let mut stalls = 0;

        for _ in 0..max_iters {
            let (mat, rhs) = v_step_system(e, &u);
            let vw = linalg::min_norm_solve(&mat, &rhs, tol)?;
            v = signal_from_params(e.field(), &vw);

            let g = condition_c_matrix(e, &v, &all_indices);
            let uw_new = linalg::smallest_right_singular_direction(&g);
            let f = (&g * &uw_new).norm_squared();
            u = signal_from_params(e.field(), &uw_new);
            f_current = f;

            if f < best {
                best = f;
            }
            if f <= threshold {
                break;
            }
            if (f_prev - f).abs() <= 1e-14 * (1.0 + f_prev) {
                stalls += 1;
                if stalls >= 3 {
                    break;
                }
            } else {
                stalls = 0;
            }
            f_prev = f;
        }

        // Quadratic polish: the alternating phase converges linearly near a
        // zero, which is rarely enough for the witness tolerance on its own.
        if f_current.is_finite() {
            let (uw, vw, f_polished) = polish_candidate(e, &u, &v);
            if f_polished < best {
                best = f_polished;
            }
            if f_polished <= threshold {
                let u = signal_from_params(e.field(), &uw);
                let v = signal_from_params(e.field(), &vw);
                let uv = UVWitness::new_normalized(
                    e.field(),
                    u.entries().clone(),
                    v.entries().clone(),
                )?;
                let pair = uv.witness_pair();
                if pair.verify(e).is_ok() && uv.verify(e).is_ok() {
                    return Ok(AlternatingOutcome {
                        best_residual: best,
                        witness: Some(uv),
                    });
                }
            }
        }
    }

    Ok(AlternatingOutcome {
        best_residual: best,
        witness: None,
    })
}

/// Semi-decision for complex ensembles: searches for a condition-(C) pair by
/// alternating minimization from seeded random starts. Returns NotRetrievable
/// with a verified witness when the search succeeds, otherwise Inconclusive
/// with the search statistics. Never returns Retrievable: no exact complex
/// certificate exists here.
pub fn falsify_complex(e: &MeasurementEnsemble, cfg: &FalsifyConfig) -> Result<Verdict> {
    if e.field() != ScalarField::Complex {
        return Err(Error::FieldMismatch(
            "falsify_complex requires a complex ensemble".into(),
        ));
    }
    let threshold = cfg.residual_factor * ensemble_scale(e);
    let outcome = alternating_search(
        e,
        cfg.restarts,
        cfg.max_iters,
        threshold,
        cfg.seed,
        RankTolerance::default(),
    )?;
    Ok(match outcome.witness {
        Some(uv) => {
            let witness = uv.witness_pair();
            Verdict::NotRetrievable { witness, uv }
        }
        None => Verdict::Inconclusive(SearchStats {
            reason: InconclusiveReason::NoWitnessFound,
            restarts: cfg.restarts,
            best_residual: Some(outcome.best_residual),
        }),
    })
}

// ---------------------------------------------------------------------------
// Brute-force collision oracle
// ---------------------------------------------------------------------------

/// Search strategy for the collision oracle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum CollisionSearchConfig {
    /// Exhaustive pairs over the lattice [-radius, radius]^D with the given
    /// step (D = d real, 2d complex). Requires d <= 4.
    Grid { radius: f64, step: f64 },
    /// Seeded random starts with local refinement of
    /// ||measure_sq(x) - measure_sq(y)||^2 in the (u, v) parameterization.
    Random { starts: usize, iters: usize, seed: u64 },
}

const GRID_POINT_BUDGET: usize = 250_000;

/// Searches for two signals with identical magnitudes. A returned pair is
/// verified; absence of a find proves nothing.
pub fn brute_force_collision_search(
    e: &MeasurementEnsemble,
    cfg: &CollisionSearchConfig,
) -> Result<Option<WitnessPair>> {
    match *cfg {
        CollisionSearchConfig::Grid { radius, step } => grid_search(e, radius, step),
        CollisionSearchConfig::Random { starts, iters, seed } => {
            let threshold = 1e-10 * ensemble_scale(e);
            let outcome =
                alternating_search(e, starts, iters, threshold, seed, RankTolerance::default())?;
            Ok(outcome.witness.map(|uv| uv.witness_pair()))
        }
    }
}

fn grid_search(e: &MeasurementEnsemble, radius: f64, step: f64) -> Result<Option<WitnessPair>> {
    if e.d() > 4 {
        return Err(Error::Precondition(
            "grid collision search requires d <= 4".into(),
        ));
    }
    if radius <= 0.0 || !radius.is_finite() || step <= 0.0 || !step.is_finite() {
        return Err(Error::InvalidConfig("radius and step must be positive".into()));
    }
    let dim = param_dim(e);
    let per_axis = (2.0 * radius / step).floor() as usize + 1;
    let total = per_axis.checked_pow(dim as u32).unwrap_or(usize::MAX);
    if total > GRID_POINT_BUDGET {
        return Err(Error::BudgetExceeded {
            estimate: total as u128,
            limit: GRID_POINT_BUDGET as u128,
        });
    }

    let mut signals = Vec::with_capacity(total);
    let mut mags = Vec::with_capacity(total);
    let mut counter = vec![0usize; dim];
    loop {
        let w = DVector::from_fn(dim, |i, _| -radius + counter[i] as f64 * step);
        let x = signal_from_params(e.field(), &w);
        let m = e.measure(&x)?;
        signals.push(x);
        mags.push(m);
        // odometer advance
        let mut pos = 0;
        loop {
            if pos == dim {
                break;
            }
            counter[pos] += 1;
            if counter[pos] < per_axis {
                break;
            }
            counter[pos] = 0;
            pos += 1;
        }
        if pos == dim {
            break;
        }
    }

    let n = signals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mags[a].values()[0].partial_cmp(&mags[b].values()[0]).unwrap());

    // Sorted sweep on the first magnitude entry: only nearby candidates can
    // match at the witness tolerance.
    let mut hit: Option<(usize, usize)> = None;
    for (pos, &i) in order.iter().enumerate() {
        let scale = 1.0 + mags[i].max_abs();
        for &j in order[pos + 1..].iter() {
            if mags[j].values()[0] - mags[i].values()[0] > WITNESS_MISMATCH_TOL * (scale + 1.0) {
                break;
            }
            if mags[i].mismatch(&mags[j]) <= WITNESS_MISMATCH_TOL * scale
                && signals[i].distance(&signals[j]) >= WITNESS_SEPARATION_MIN
            {
                let key = (i.min(j), i.max(j));
                if hit.is_none_or(|cur| key < cur) {
                    hit = Some(key);
                }
            }
        }
    }

    match hit {
        Some((i, j)) => {
            let pair = WitnessPair {
                x: signals[i].clone(),
                y: signals[j].clone(),
            };
            pair.verify(e)?;
            Ok(Some(pair))
        }
        None => Ok(None),
    }
}
