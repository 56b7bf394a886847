//! Exact rational linear algebra for the opt-in certifier mode.
//!
//! Every finite f64 is a dyadic rational, so conversion is exact and rank /
//! span-membership / solve decisions over the rationals carry no tolerance at
//! all. Matrices here are tiny (m <= 24 rows), so plain Gauss-Jordan over
//! `BigRational` is plenty.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

#[derive(Debug, Clone)]
pub(crate) struct RatMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<BigRational>,
}

pub(crate) fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

impl RatMatrix {
    pub(crate) fn zeros(nrows: usize, ncols: usize) -> Self {
        RatMatrix {
            nrows,
            ncols,
            data: vec![BigRational::zero(); nrows * ncols],
        }
    }

    pub(crate) fn from_f64_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut m = RatMatrix::zeros(nrows, ncols);
        for (j, row) in rows.iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                *m.get_mut(j, i) = rational_from_f64(x)?;
            }
        }
        Some(m)
    }

    pub(crate) fn nrows(&self) -> usize {
        self.nrows
    }

    pub(crate) fn get(&self, r: usize, c: usize) -> &BigRational {
        &self.data[r * self.ncols + c]
    }

    fn get_mut(&mut self, r: usize, c: usize) -> &mut BigRational {
        &mut self.data[r * self.ncols + c]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.ncols {
            self.data.swap(a * self.ncols + c, b * self.ncols + c);
        }
    }

    /// In-place reduced row echelon form; returns the pivot column indices.
    pub(crate) fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.ncols {
            if row == self.nrows {
                break;
            }
            // Largest-magnitude pivot keeps the integers smaller; ties go to
            // the lowest row index for determinism.
            let mut pivot_row = None;
            let mut pivot_abs = BigRational::zero();
            for r in row..self.nrows {
                let v = self.get(r, col).abs();
                if v > pivot_abs {
                    pivot_abs = v;
                    pivot_row = Some(r);
                }
            }
            let Some(pr) = pivot_row else { continue };
            self.swap_rows(row, pr);
            let pivot = self.get(row, col).clone();
            for c in col..self.ncols {
                let v = self.get(row, c).clone() / pivot.clone();
                *self.get_mut(row, c) = v;
            }
            for r in 0..self.nrows {
                if r == row {
                    continue;
                }
                let factor = self.get(r, col).clone();
                if factor.is_zero() {
                    continue;
                }
                for c in col..self.ncols {
                    let v = self.get(r, c).clone() - factor.clone() * self.get(row, c).clone();
                    *self.get_mut(r, c) = v;
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub(crate) fn rank(&self) -> usize {
        let mut copy = self.clone();
        copy.rref().len()
    }
}

/// Exact column-span membership: rank([a | b]) == rank(a).
pub(crate) fn in_column_span_exact(a: &RatMatrix, b: &[BigRational]) -> bool {
    debug_assert_eq!(a.nrows, b.len());
    let mut aug = RatMatrix::zeros(a.nrows, a.ncols + 1);
    for (r, rhs) in b.iter().enumerate() {
        for c in 0..a.ncols {
            *aug.get_mut(r, c) = a.get(r, c).clone();
        }
        *aug.get_mut(r, a.ncols) = rhs.clone();
    }
    aug.rank() == a.rank()
}

/// Exact particular solution of a x = b (free variables set to zero), or
/// `None` when the system is inconsistent.
pub(crate) fn solve_exact(a: &RatMatrix, b: &[BigRational]) -> Option<Vec<BigRational>> {
    let n = a.ncols;
    if a.nrows == 0 {
        return Some(vec![BigRational::zero(); n]);
    }
    let mut aug = RatMatrix::zeros(a.nrows, n + 1);
    for (r, rhs) in b.iter().enumerate() {
        for c in 0..n {
            *aug.get_mut(r, c) = a.get(r, c).clone();
        }
        *aug.get_mut(r, n) = rhs.clone();
    }
    let pivots = aug.rref();
    if pivots.contains(&n) {
        return None;
    }
    let mut x = vec![BigRational::zero(); n];
    for (row, &col) in pivots.iter().enumerate() {
        x[col] = aug.get(row, n).clone();
    }
    Some(x)
}

/// An exact nonzero null-space vector of a, or `None` at full column rank.
pub(crate) fn null_vector_exact(a: &RatMatrix) -> Option<Vec<BigRational>> {
    let n = a.ncols;
    if a.nrows == 0 {
        let mut e = vec![BigRational::zero(); n];
        if n == 0 {
            return None;
        }
        e[0] = BigRational::one();
        return Some(e);
    }
    let mut r = a.clone();
    let pivots = r.rref();
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let &f = free.first()?;
    let mut v = vec![BigRational::zero(); n];
    v[f] = BigRational::one();
    for (row, &col) in pivots.iter().enumerate() {
        v[col] = -r.get(row, f).clone();
    }
    Some(v)
}

pub(crate) fn to_f64(x: &BigRational) -> f64 {
    // Exact for dyadic inputs of modest size; the generic path divides the
    // parts as floats, which is the standard rounding.
    let num = x.numer();
    let den = x.denom();
    big_to_f64(num) / big_to_f64(den)
}

fn big_to_f64(x: &BigInt) -> f64 {
    let s = x.to_string();
    s.parse::<f64>().unwrap_or(f64::NAN)
}
