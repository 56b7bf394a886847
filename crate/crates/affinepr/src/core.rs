//! Ensemble representation, measurement maps, lifting, and validation.
//!
//! An ensemble is the pair (A, b): m measurement rows over a scalar field plus
//! m shifts. The magnitude map sends a signal x to the entrywise modulus of
//! A x + b, where the stored row *is* the linear functional: measurement j is
//! |sum_i rows[j][i] * x[i] + b[j]| with no conjugation anywhere. Real-tagged
//! data is stored in the same complex containers with imaginary parts exactly
//! zero, which keeps every arithmetic path identical across fields.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result, ViolationList};

/// Scalar field tag carried by every ensemble, signal, and witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    Real,
    Complex,
}

impl ScalarField {
    pub fn is_real(self) -> bool {
        matches!(self, ScalarField::Real)
    }
}

impl std::fmt::Display for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarField::Real => write!(f, "real"),
            ScalarField::Complex => write!(f, "complex"),
        }
    }
}

/// A single validation finding. `field` names the offending ensemble field.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Violation {
            field,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

// ---------------------------------------------------------------------------
// Measurement ensembles
// ---------------------------------------------------------------------------

/// The pair (A, b): m measurement functionals (rows) and m shifts.
///
/// Immutable after construction; all operations are pure, so values are safe
/// to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    field: ScalarField,
    rows: DMatrix<Complex64>,
    shifts: DVector<Complex64>,
}

impl MeasurementEnsemble {
    /// Builds an ensemble, rejecting any invariant violation.
    pub fn new(
        field: ScalarField,
        rows: DMatrix<Complex64>,
        shifts: DVector<Complex64>,
    ) -> Result<Self> {
        let candidate = MeasurementEnsemble {
            field,
            rows,
            shifts,
        };
        let violations = candidate.violations();
        if violations.is_empty() {
            Ok(candidate)
        } else {
            Err(Error::InvalidEnsemble(ViolationList(violations)))
        }
    }

    /// Real-field constructor from plain f64 data.
    pub fn from_real(rows: DMatrix<f64>, shifts: DVector<f64>) -> Result<Self> {
        let crows = rows.map(|x| Complex64::new(x, 0.0));
        let cshifts = shifts.map(|x| Complex64::new(x, 0.0));
        Self::new(ScalarField::Real, crows, cshifts)
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    /// Number of measurements m.
    pub fn m(&self) -> usize {
        self.rows.nrows()
    }

    /// Ambient dimension d.
    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<Complex64> {
        &self.rows
    }

    pub fn shifts(&self) -> &DVector<Complex64> {
        &self.shifts
    }

    pub fn shift(&self, j: usize) -> Complex64 {
        self.shifts[j]
    }

    /// The rows matrix with imaginary parts dropped. Only meaningful for
    /// real-tagged ensembles, where imaginary parts are exactly zero.
    pub fn real_rows(&self) -> DMatrix<f64> {
        self.rows.map(|z| z.re)
    }

    /// The shifts vector with imaginary parts dropped (real-tagged ensembles).
    pub fn real_shifts(&self) -> DVector<f64> {
        self.shifts.map(|z| z.re)
    }

    /// Affine form value row_j . x + b_j, accumulated left to right so the
    /// lifting identity holds bit for bit.
    pub(crate) fn affine_value(&self, j: usize, x: &Signal) -> Complex64 {
        let d = self.d();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..d {
            acc += self.rows[(j, i)] * x.entries()[i];
        }
        acc + self.shifts[j]
    }

    fn check_signal(&self, x: &Signal, op: &str) -> Result<()> {
        if x.field() != self.field {
            return Err(Error::FieldMismatch(format!(
                "{op}: ensemble is {}, signal is {}",
                self.field,
                x.field()
            )));
        }
        if x.d() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "{op}: ensemble d = {}, signal d = {}",
                self.d(),
                x.d()
            )));
        }
        Ok(())
    }

    /// The magnitude map: entry j is |row_j . x + b_j|.
    pub fn measure(&self, x: &Signal) -> Result<MagnitudeVector> {
        self.check_signal(x, "measure")?;
        let values = DVector::from_fn(self.m(), |j, _| modulus(self.affine_value(j, x)));
        Ok(MagnitudeVector { values })
    }

    /// The squared magnitude map, computed entrywise as re^2 + im^2 rather
    /// than by squaring `measure`, to control rounding.
    pub fn measure_sq(&self, x: &Signal) -> Result<DVector<f64>> {
        self.check_signal(x, "measure_sq")?;
        Ok(DVector::from_fn(self.m(), |j, _| {
            let z = self.affine_value(j, x);
            z.re * z.re + z.im * z.im
        }))
    }

    /// Embeds (A, b) as the m x (d+1) classical ensemble acting on (x, 1).
    pub fn lift(&self) -> LiftedEnsemble {
        let m = self.m();
        let d = self.d();
        let matrix = DMatrix::from_fn(m, d + 1, |j, i| {
            if i < d {
                self.rows[(j, i)]
            } else {
                self.shifts[j]
            }
        });
        LiftedEnsemble {
            field: self.field,
            matrix,
        }
    }

    /// Invariant findings for an already-constructed ensemble.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.m() == 0 {
            out.push(Violation::new("m", "must satisfy m >= 1"));
        }
        if self.d() == 0 {
            out.push(Violation::new("d", "must satisfy d >= 1"));
        }
        if self.shifts.len() != self.m() {
            out.push(Violation::new(
                "shifts",
                format!("length {} does not match m = {}", self.shifts.len(), self.m()),
            ));
        }
        for j in 0..self.rows.nrows() {
            for i in 0..self.rows.ncols() {
                let z = self.rows[(j, i)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    out.push(Violation::new("rows", format!("non-finite entry at ({j}, {i})")));
                }
                if self.field.is_real() && z.im != 0.0 {
                    out.push(Violation::new(
                        "field",
                        format!("real tag but rows[{j}][{i}] has imaginary part {}", z.im),
                    ));
                }
            }
        }
        for j in 0..self.shifts.len() {
            let z = self.shifts[j];
            if !z.re.is_finite() || !z.im.is_finite() {
                out.push(Violation::new("shifts", format!("non-finite entry at {j}")));
            }
            if self.field.is_real() && z.im != 0.0 {
                out.push(Violation::new(
                    "field",
                    format!("real tag but shifts[{j}] has imaginary part {}", z.im),
                ));
            }
        }
        out
    }

    /// Frobenius norm of the rows matrix.
    pub fn rows_frobenius(&self) -> f64 {
        self.rows.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Findings for the raw (pre-construction) form; this is where shape errors
/// such as a short shifts vector are representable at all.
pub fn validate_ensemble(raw: &RawEnsemble) -> Vec<Violation> {
    raw.violations()
}

// ---------------------------------------------------------------------------
// Signals and magnitudes
// ---------------------------------------------------------------------------

/// A signal x in H^d, tagged with its scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    field: ScalarField,
    entries: DVector<Complex64>,
}

impl Signal {
    pub fn new(field: ScalarField, entries: DVector<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSignal("d must be >= 1".into()));
        }
        for (i, z) in entries.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite(format!("signal entry {i}")));
            }
            if field.is_real() && z.im != 0.0 {
                return Err(Error::InvalidSignal(format!(
                    "real tag but entry {i} has imaginary part {}",
                    z.im
                )));
            }
        }
        Ok(Signal { field, entries })
    }

    pub fn from_real(entries: DVector<f64>) -> Result<Self> {
        Self::new(
            ScalarField::Real,
            entries.map(|x| Complex64::new(x, 0.0)),
        )
    }

    pub fn real(values: &[f64]) -> Result<Self> {
        Self::from_real(DVector::from_row_slice(values))
    }

    pub fn complex(values: &[Complex64]) -> Result<Self> {
        Self::new(ScalarField::Complex, DVector::from_row_slice(values))
    }

    pub fn zeros(field: ScalarField, d: usize) -> Self {
        Signal {
            field,
            entries: DVector::from_element(d, Complex64::new(0.0, 0.0)),
        }
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn d(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &DVector<Complex64> {
        &self.entries
    }

    pub fn real_entries(&self) -> DVector<f64> {
        self.entries.map(|z| z.re)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Euclidean distance to another signal of the same shape.
    pub fn distance(&self, other: &Signal) -> f64 {
        (&self.entries - &other.entries)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// View a complex signal as the real vector (Re x, Im x); real signals
    /// map to themselves.
    pub fn to_real_parameters(&self) -> DVector<f64> {
        match self.field {
            ScalarField::Real => self.real_entries(),
            ScalarField::Complex => {
                let d = self.d();
                DVector::from_fn(2 * d, |i, _| {
                    if i < d {
                        self.entries[i].re
                    } else {
                        self.entries[i - d].im
                    }
                })
            }
        }
    }

    /// Inverse of [`Signal::to_real_parameters`].
    pub fn from_real_parameters(field: ScalarField, w: &DVector<f64>) -> Result<Self> {
        match field {
            ScalarField::Real => Self::from_real(w.clone()),
            ScalarField::Complex => {
                if !w.len().is_multiple_of(2) {
                    return Err(Error::DimensionMismatch(
                        "complex parameter vector must have even length".into(),
                    ));
                }
                let d = w.len() / 2;
                Self::new(
                    ScalarField::Complex,
                    DVector::from_fn(d, |i, _| Complex64::new(w[i], w[d + i])),
                )
            }
        }
    }
}

/// Appends the homogenizing 1 entry: (x, 1) in H^{d+1}.
pub fn lift_signal(x: &Signal) -> Signal {
    let d = x.d();
    let entries = DVector::from_fn(d + 1, |i, _| {
        if i < d {
            x.entries()[i]
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    Signal {
        field: x.field(),
        entries,
    }
}

/// Observable data: m nonnegative measurement magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeVector {
    values: DVector<f64>,
}

impl Serialize for MagnitudeVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("MagnitudeVector", 1)?;
        s.serialize_field("values", &self.values.as_slice())?;
        s.end()
    }
}

impl MagnitudeVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        for (j, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("magnitude entry {j}")));
            }
            if *v < 0.0 {
                return Err(Error::InvalidSignal(format!(
                    "magnitude entry {j} is negative: {v}"
                )));
            }
        }
        Ok(MagnitudeVector { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_row_slice(values))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Entrywise square, used as the data side of the squared map.
    pub fn squared(&self) -> DVector<f64> {
        self.values.map(|v| v * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
    }

    /// Max-norm distance to another magnitude vector.
    pub fn mismatch(&self, other: &MagnitudeVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

impl<'de> Deserialize<'de> for MagnitudeVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            values: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        MagnitudeVector::from_slice(&raw.values).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Lifted ensembles
// ---------------------------------------------------------------------------

/// The m x (d+1) matrix whose row j is (a_j, b_j), plus the field tag.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedEnsemble {
    field: ScalarField,
    matrix: DMatrix<Complex64>,
}

impl LiftedEnsemble {
    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    /// Lifted dimension d + 1.
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Classical shift-free magnitudes |row_j . v| of a lifted signal,
    /// accumulated with the same arithmetic path as `measure`.
    pub fn classical_magnitudes(&self, v: &Signal) -> Result<MagnitudeVector> {
        if v.field() != self.field {
            return Err(Error::FieldMismatch("classical_magnitudes".into()));
        }
        if v.d() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "classical_magnitudes: lifted dim {} vs signal {}",
                self.dim(),
                v.d()
            )));
        }
        let values = DVector::from_fn(self.m(), |j, _| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..self.dim() {
                acc += self.matrix[(j, i)] * v.entries()[i];
            }
            modulus(acc)
        });
        Ok(MagnitudeVector { values })
    }
}

pub(crate) fn modulus(z: Complex64) -> f64 {
    z.re.hypot(z.im)
}

/// Twice the area of the triangle spanned by three points of the complex
/// plane; zero exactly at collinearity.
pub fn collinearity_margin(b1: Complex64, b2: Complex64, b3: Complex64) -> f64 {
    let u = b2 - b1;
    let v = b3 - b1;
    (u.re * v.im - u.im * v.re).abs()
}

// ---------------------------------------------------------------------------
// JSON forms
// ---------------------------------------------------------------------------

/// JSON scalar: a bare number for real data, a [re, im] pair for complex.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarRepr {
    Real(f64),
    Pair(f64, f64),
}

impl ScalarRepr {
    fn to_complex(self) -> Complex64 {
        match self {
            ScalarRepr::Real(x) => Complex64::new(x, 0.0),
            ScalarRepr::Pair(re, im) => Complex64::new(re, im),
        }
    }

    fn from_complex(field: ScalarField, z: Complex64) -> Self {
        match field {
            ScalarField::Real => ScalarRepr::Real(z.re),
            ScalarField::Complex => ScalarRepr::Pair(z.re, z.im),
        }
    }
}

/// The wire form of an ensemble, shared by all modules and the CLI.
///
/// Unlike [`MeasurementEnsemble`] this can represent malformed data, which is
/// what makes `validate_ensemble` able to report shape findings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEnsemble {
    pub field: ScalarField,
    pub m: usize,
    pub d: usize,
    pub rows: Vec<Vec<ScalarRepr>>,
    pub shifts: Vec<ScalarRepr>,
}

impl RawEnsemble {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.m == 0 {
            out.push(Violation::new("m", "must satisfy m >= 1"));
        }
        if self.d == 0 {
            out.push(Violation::new("d", "must satisfy d >= 1"));
        }
        if self.rows.len() != self.m {
            out.push(Violation::new(
                "rows",
                format!("has {} rows, expected m = {}", self.rows.len(), self.m),
            ));
        }
        for (j, row) in self.rows.iter().enumerate() {
            if row.len() != self.d {
                out.push(Violation::new(
                    "rows",
                    format!("row {j} has {} entries, expected d = {}", row.len(), self.d),
                ));
            }
        }
        if self.shifts.len() != self.m {
            out.push(Violation::new(
                "shifts",
                format!("length {} does not match m = {}", self.shifts.len(), self.m),
            ));
        }
        let mut check = |field: &'static str, loc: String, z: Complex64| {
            if !z.re.is_finite() || !z.im.is_finite() {
                out.push(Violation::new(field, format!("non-finite entry at {loc}")));
            }
            if self.field.is_real() && z.im != 0.0 {
                out.push(Violation::new(
                    "field",
                    format!("real tag but {field}[{loc}] has imaginary part {}", z.im),
                ));
            }
        };
        for (j, row) in self.rows.iter().enumerate() {
            for (i, s) in row.iter().enumerate() {
                check("rows", format!("{j}, {i}"), s.to_complex());
            }
        }
        for (j, s) in self.shifts.iter().enumerate() {
            check("shifts", format!("{j}"), s.to_complex());
        }
        out
    }

    pub fn build(&self) -> Result<MeasurementEnsemble> {
        let violations = self.violations();
        if !violations.is_empty() {
            return Err(Error::InvalidEnsemble(ViolationList(violations)));
        }
        let rows = DMatrix::from_fn(self.m, self.d, |j, i| self.rows[j][i].to_complex());
        let shifts = DVector::from_fn(self.m, |j, _| self.shifts[j].to_complex());
        MeasurementEnsemble::new(self.field, rows, shifts)
    }
}

impl MeasurementEnsemble {
    pub fn to_raw(&self) -> RawEnsemble {
        RawEnsemble {
            field: self.field,
            m: self.m(),
            d: self.d(),
            rows: (0..self.m())
                .map(|j| {
                    (0..self.d())
                        .map(|i| ScalarRepr::from_complex(self.field, self.rows[(j, i)]))
                        .collect()
                })
                .collect(),
            shifts: (0..self.m())
                .map(|j| ScalarRepr::from_complex(self.field, self.shifts[j]))
                .collect(),
        }
    }
}

impl Serialize for MeasurementEnsemble {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_raw().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MeasurementEnsemble {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawEnsemble::deserialize(deserializer)?;
        raw.build().map_err(D::Error::custom)
    }
}

/// The wire form of a signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSignal {
    pub field: ScalarField,
    pub d: usize,
    pub entries: Vec<ScalarRepr>,
}

impl RawSignal {
    pub fn build(&self) -> Result<Signal> {
        if self.entries.len() != self.d {
            return Err(Error::InvalidSignal(format!(
                "entries length {} does not match d = {}",
                self.entries.len(),
                self.d
            )));
        }
        Signal::new(
            self.field,
            DVector::from_fn(self.d, |i, _| self.entries[i].to_complex()),
        )
    }
}

impl Signal {
    pub fn to_raw(&self) -> RawSignal {
        RawSignal {
            field: self.field,
            d: self.d(),
            entries: self
                .entries
                .iter()
                .map(|z| ScalarRepr::from_complex(self.field, *z))
                .collect(),
        }
    }
}

impl Serialize for Signal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_raw().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Signal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSignal::deserialize(deserializer)?;
        raw.build().map_err(D::Error::custom)
    }
}
