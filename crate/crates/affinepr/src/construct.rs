//! Ensemble constructions with proven properties: minimal retrievable
//! families, generic Gaussian sampling, subminimal ensembles with constructive
//! non-injectivity witnesses, and the perturbation counterexamples showing
//! that retrievability is not an open property.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::certify::{self, RankTolerance, UVWitness, WitnessPair};
use crate::core::{collinearity_margin, MeasurementEnsemble, ScalarField, Signal};
use crate::error::{Error, Result};
use crate::linalg;

// ---------------------------------------------------------------------------
// Shift specifications
// ---------------------------------------------------------------------------

/// d pairs of real shifts (b_j1, b_j2), strictly distinct per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftPairSpec {
    pairs: Vec<(f64, f64)>,
}

impl ShiftPairSpec {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        for (j, (a, b)) in pairs.iter().enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::NonFinite(format!("shift pair {j}")));
            }
            if a == b {
                return Err(Error::EqualShiftPair { index: j });
            }
        }
        Ok(ShiftPairSpec { pairs })
    }

    /// Pairs (j, 0) for j = 1..d: distinct, and with b_12 = 0 so the output
    /// is directly perturbable.
    pub fn default_for_dimension(d: usize) -> Self {
        ShiftPairSpec {
            pairs: (0..d).map(|j| (j as f64 + 1.0, 0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

impl<'de> Deserialize<'de> for ShiftPairSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        struct Raw {
            pairs: Vec<(f64, f64)>,
        }
        let raw = Raw::deserialize(d)?;
        ShiftPairSpec::new(raw.pairs).map_err(D::Error::custom)
    }
}

/// d triples of complex shifts, each strictly non-collinear. The margin is
/// twice the area of the triangle the triple spans.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTripleSpec {
    triples: Vec<[Complex64; 3]>,
}

impl ShiftTripleSpec {
    pub fn new(triples: Vec<[Complex64; 3]>) -> Result<Self> {
        for (j, t) in triples.iter().enumerate() {
            for z in t {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFinite(format!("shift triple {j}")));
                }
            }
            let margin = collinearity_margin(t[0], t[1], t[2]);
            if margin <= 0.0 {
                return Err(Error::CollinearTriple { index: j, margin });
            }
        }
        Ok(ShiftTripleSpec { triples })
    }

    /// Triples (i, 0, 1) for every coordinate: margin 1, and the grouped
    /// shifts match the perturbable pattern (i,...,i,0,...,0,1,...,1).
    pub fn default_for_dimension(d: usize) -> Self {
        let i = Complex64::new(0.0, 1.0);
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        ShiftTripleSpec {
            triples: (0..d).map(|_| [i, zero, one]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[[Complex64; 3]] {
        &self.triples
    }

    pub fn margin(&self, j: usize) -> f64 {
        let t = &self.triples[j];
        collinearity_margin(t[0], t[1], t[2])
    }
}

impl Serialize for ShiftTripleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Raw<'a> {
            triples: Vec<[[f64; 2]; 3]>,
            #[serde(skip)]
            _p: std::marker::PhantomData<&'a ()>,
        }
        let triples = self
            .triples
            .iter()
            .map(|t| [[t[0].re, t[0].im], [t[1].re, t[1].im], [t[2].re, t[2].im]])
            .collect();
        Raw {
            triples,
            _p: std::marker::PhantomData,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ShiftTripleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        struct Raw {
            triples: Vec<[[f64; 2]; 3]>,
        }
        let raw = Raw::deserialize(d)?;
        let triples = raw
            .triples
            .into_iter()
            .map(|t| {
                [
                    Complex64::new(t[0][0], t[0][1]),
                    Complex64::new(t[1][0], t[1][1]),
                    Complex64::new(t[2][0], t[2][1]),
                ]
            })
            .collect();
        ShiftTripleSpec::new(triples).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Minimal retrievable constructions
// ---------------------------------------------------------------------------

/// Two stacked d x d identities with per-coordinate distinct shift pairs:
/// the minimal real retrievable family (m = 2d).
pub fn build_real_minimal(d: usize, spec: &ShiftPairSpec) -> Result<MeasurementEnsemble> {
    if d == 0 {
        return Err(Error::DimensionMismatch("d must be >= 1".into()));
    }
    if spec.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "spec has {} pairs, expected d = {d}",
            spec.len()
        )));
    }
    let mut rows = DMatrix::<f64>::zeros(2 * d, d);
    for j in 0..d {
        rows[(j, j)] = 1.0;
        rows[(d + j, j)] = 1.0;
    }
    let mut shifts = DVector::<f64>::zeros(2 * d);
    for (j, &(b1, b2)) in spec.pairs().iter().enumerate() {
        shifts[j] = b1;
        shifts[d + j] = b2;
    }
    MeasurementEnsemble::from_real(rows, shifts)
}

/// Three stacked copies of a nonsingular B with per-coordinate non-collinear
/// shift triples: the minimal complex retrievable family (m = 3d). The stored
/// functional matrix stacks B transposed, so measurement j of block k applies
/// the j-th column of B.
pub fn build_complex_minimal(
    b: &DMatrix<Complex64>,
    spec: &ShiftTripleSpec,
) -> Result<MeasurementEnsemble> {
    let d = b.nrows();
    if d == 0 || b.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "B must be square and nonempty, got {} x {}",
            b.nrows(),
            b.ncols()
        )));
    }
    if spec.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "spec has {} triples, expected d = {d}",
            spec.len()
        )));
    }
    if linalg::numerical_rank(b, RankTolerance::default()) != d {
        return Err(Error::SingularBlock);
    }
    let bt = b.transpose();
    let mut rows = DMatrix::<Complex64>::zeros(3 * d, d);
    for c in 0..3 {
        rows.view_mut((c * d, 0), (d, d)).copy_from(&bt);
    }
    let mut shifts = DVector::<Complex64>::zeros(3 * d);
    for (j, t) in spec.triples().iter().enumerate() {
        shifts[j] = t[0];
        shifts[d + j] = t[1];
        shifts[2 * d + j] = t[2];
    }
    MeasurementEnsemble::new(ScalarField::Complex, rows, shifts)
}

/// Seeded Gaussian ensemble: independent standard normal entries (real and
/// imaginary parts independently for the complex field). Row j draws from
/// ChaCha8 stream j + 1 and the shifts from stream 0, so the output is
/// bit-reproducible per seed.
pub fn sample_generic(
    field: ScalarField,
    m: usize,
    d: usize,
    seed: u64,
) -> Result<MeasurementEnsemble> {
    if m == 0 || d == 0 {
        return Err(Error::DimensionMismatch("m and d must be >= 1".into()));
    }
    let draw = |stream: u64, count: usize| -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        (0..count)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                match field {
                    ScalarField::Real => Complex64::new(re, 0.0),
                    ScalarField::Complex => {
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(re, im)
                    }
                }
            })
            .collect()
    };
    let mut rows = DMatrix::<Complex64>::zeros(m, d);
    for j in 0..m {
        let vals = draw(j as u64 + 1, d);
        for i in 0..d {
            rows[(j, i)] = vals[i];
        }
    }
    let shift_vals = draw(0, m);
    let shifts = DVector::from_fn(m, |j, _| shift_vals[j]);
    MeasurementEnsemble::new(field, rows, shifts)
}

// ---------------------------------------------------------------------------
// Perturbation counterexamples
// ---------------------------------------------------------------------------

/// A minimal retrievable ensemble together with an arbitrarily close
/// non-retrievable perturbation and its verified witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub original: MeasurementEnsemble,
    pub perturbed: MeasurementEnsemble,
    pub delta: f64,
    pub frobenius_distance: f64,
    pub witness: WitnessPair,
}

fn frobenius_distance(a: &MeasurementEnsemble, b: &MeasurementEnsemble) -> f64 {
    (a.rows() - b.rows()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn check_identity_blocks(e: &MeasurementEnsemble, copies: usize) -> Result<()> {
    let d = e.d();
    if e.m() != copies * d {
        return Err(Error::PatternMismatch(format!(
            "expected m = {copies}d = {}, got {}",
            copies * d,
            e.m()
        )));
    }
    for c in 0..copies {
        for j in 0..d {
            for i in 0..d {
                let expected = if i == j { 1.0 } else { 0.0 };
                let z = e.rows()[(c * d + j, i)];
                if z.re != expected || z.im != 0.0 {
                    return Err(Error::PatternMismatch(format!(
                        "rows block {c} is not the identity at ({j}, {i})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Perturbs a (I, I)^T ensemble with b_12 = 0 by adding b_11 * delta at
/// stored-row position (0, 1): the stacking transpose turns E_21 into a
/// (1, 2) entry of the functional matrix. The witness x = (b_11, -1/delta,
/// 0, ...), y = (-b_11, -1/delta, 0, ...) has identical magnitudes under the
/// perturbed map, so retrievability is lost at Frobenius distance
/// |b_11| * delta.
pub fn perturb_real(e: &MeasurementEnsemble, delta: f64) -> Result<PerturbationReport> {
    if e.field() != ScalarField::Real {
        return Err(Error::FieldMismatch("perturb_real requires a real ensemble".into()));
    }
    let d = e.d();
    if d < 2 {
        return Err(Error::Precondition("perturb_real requires d >= 2".into()));
    }
    check_identity_blocks(e, 2)?;
    for j in 0..d {
        if e.shift(j).re == e.shift(d + j).re {
            return Err(Error::EqualShiftPair { index: j });
        }
    }
    let b11 = e.shift(0).re;
    let b12 = e.shift(d).re;
    if b12 != 0.0 {
        return Err(Error::Precondition(format!(
            "perturb_real requires b_12 = 0, got {b12}"
        )));
    }
    if b11 == 0.0 {
        return Err(Error::Precondition("perturb_real requires b_11 != 0".into()));
    }
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::Precondition(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }

    let mut rows = e.rows().clone();
    rows[(0, 1)] += Complex64::new(b11 * delta, 0.0);
    let perturbed = MeasurementEnsemble::new(ScalarField::Real, rows, e.shifts().clone())?;

    let mut x = DVector::<f64>::zeros(d);
    x[0] = b11;
    x[1] = -1.0 / delta;
    let mut y = x.clone();
    y[0] = -b11;
    let witness = WitnessPair {
        x: Signal::from_real(x)?,
        y: Signal::from_real(y)?,
    };
    witness.verify(&perturbed)?;

    Ok(PerturbationReport {
        original: e.clone(),
        perturbed: perturbed.clone(),
        delta,
        frobenius_distance: frobenius_distance(e, &perturbed),
        witness,
    })
}

/// Complex counterpart: requires B = identity and the grouped shift pattern
/// (i,...,i,0,...,0,1,...,1); adds i * delta at stored-row position (0, 1).
/// Witness x = (i, -1/delta, 0, ...), y = (-i, -1/delta, 0, ...).
pub fn perturb_complex(e: &MeasurementEnsemble, delta: f64) -> Result<PerturbationReport> {
    if e.field() != ScalarField::Complex {
        return Err(Error::FieldMismatch(
            "perturb_complex requires a complex ensemble".into(),
        ));
    }
    let d = e.d();
    if d < 2 {
        return Err(Error::Precondition("perturb_complex requires d >= 2".into()));
    }
    check_identity_blocks(e, 3)?;
    for j in 0..e.m() {
        let expected = if j < d {
            Complex64::new(0.0, 1.0)
        } else if j < 2 * d {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        };
        if e.shift(j) != expected {
            return Err(Error::PatternMismatch(format!(
                "shifts must follow (i,...,i,0,...,0,1,...,1); entry {j} is {}",
                e.shift(j)
            )));
        }
    }
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::Precondition(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }

    let mut rows = e.rows().clone();
    rows[(0, 1)] += Complex64::new(0.0, delta);
    let perturbed = MeasurementEnsemble::new(ScalarField::Complex, rows, e.shifts().clone())?;

    let mut x = DVector::<Complex64>::zeros(d);
    x[0] = Complex64::new(0.0, 1.0);
    x[1] = Complex64::new(-1.0 / delta, 0.0);
    let mut y = x.clone();
    y[0] = Complex64::new(0.0, -1.0);
    let witness = WitnessPair {
        x: Signal::new(ScalarField::Complex, x)?,
        y: Signal::new(ScalarField::Complex, y)?,
    };
    witness.verify(&perturbed)?;

    Ok(PerturbationReport {
        original: e.clone(),
        perturbed: perturbed.clone(),
        delta,
        frobenius_distance: frobenius_distance(e, &perturbed),
        witness,
    })
}

// ---------------------------------------------------------------------------
// Subminimal witnesses
// ---------------------------------------------------------------------------

fn select_complex_rows(a: &DMatrix<Complex64>, rows: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)])
}

/// Constructive witness for a real ensemble with too few measurements
/// (m <= 2d - 1): either a null direction of A, or a common root v on a
/// full-rank index set S_0 paired with u orthogonal to the remaining rows.
pub fn witness_subminimal_real(e: &MeasurementEnsemble) -> Result<WitnessPair> {
    if e.field() != ScalarField::Real {
        return Err(Error::FieldMismatch(
            "witness_subminimal_real requires a real ensemble".into(),
        ));
    }
    let d = e.d();
    let m = e.m();
    if m >= 2 * d {
        return Err(Error::Precondition(format!(
            "witness_subminimal_real requires m <= 2d - 1 (m = {m}, d = {d})"
        )));
    }
    let tol = RankTolerance::default();
    let a = e.real_rows();
    let rank = linalg::numerical_rank(&a, tol);
    if rank < d {
        let u = linalg::smallest_right_singular_direction(&a);
        let pair = WitnessPair {
            x: Signal::zeros(ScalarField::Real, d),
            y: Signal::from_real(u)?,
        };
        pair.verify(e)?;
        return Ok(pair);
    }

    let s0 = linalg::greedy_pivot_rows(e.rows(), d);
    let a_s0 = DMatrix::from_fn(d, d, |r, c| a[(s0[r], c)]);
    let b_s0 = DVector::from_fn(d, |r, _| -e.shift(s0[r]).re);
    let v = linalg::min_norm_solve(&a_s0, &b_s0, tol)?;

    let s0c: Vec<usize> = (0..m).filter(|j| !s0.contains(j)).collect();
    let a_s0c = DMatrix::from_fn(s0c.len(), d, |r, c| a[(s0c[r], c)]);
    let u = linalg::smallest_right_singular_direction(&a_s0c);

    let uv = UVWitness::new_normalized(
        ScalarField::Real,
        u.map(|x| Complex64::new(x, 0.0)),
        v.map(|x| Complex64::new(x, 0.0)),
    )?;
    let pair = uv.witness_pair();
    pair.verify(e)?;
    uv.verify(e)?;
    Ok(pair)
}

/// Constructive witness for a complex ensemble with m <= 3d - 1: a common
/// root v on a full-rank set T, then a nonzero u from the m - d < 2d real
/// homogeneous equations Re(<u, a_j>(<a_j, v> + b_j)) = 0 on the complement.
pub fn witness_subminimal_complex(e: &MeasurementEnsemble) -> Result<WitnessPair> {
    if e.field() != ScalarField::Complex {
        return Err(Error::FieldMismatch(
            "witness_subminimal_complex requires a complex ensemble".into(),
        ));
    }
    let d = e.d();
    let m = e.m();
    if m >= 3 * d {
        return Err(Error::Precondition(format!(
            "witness_subminimal_complex requires m <= 3d - 1 (m = {m}, d = {d})"
        )));
    }
    let tol = RankTolerance::default();
    let rank = linalg::numerical_rank(e.rows(), tol);
    if rank < d {
        let u = linalg::smallest_right_singular_direction(e.rows());
        let pair = WitnessPair {
            x: Signal::zeros(ScalarField::Complex, d),
            y: Signal::new(ScalarField::Complex, u)?,
        };
        pair.verify(e)?;
        return Ok(pair);
    }

    let t = linalg::greedy_pivot_rows(e.rows(), d);
    let a_t = select_complex_rows(e.rows(), &t);
    let b_t = DVector::from_fn(d, |r, _| -e.shift(t[r]));
    let v = linalg::min_norm_solve(&a_t, &b_t, tol)?;
    let v_signal = Signal::new(ScalarField::Complex, v.clone())?;

    let tc: Vec<usize> = (0..m).filter(|j| !t.contains(j)).collect();
    let g = certify::condition_c_matrix(e, &v_signal, &tc);
    let uw = linalg::smallest_right_singular_direction(&g);
    let u_signal = Signal::from_real_parameters(ScalarField::Complex, &uw)?;

    let uv = UVWitness::new_normalized(ScalarField::Complex, u_signal.entries().clone(), v)?;
    let pair = uv.witness_pair();
    pair.verify(e)?;
    uv.verify(e)?;
    Ok(pair)
}
