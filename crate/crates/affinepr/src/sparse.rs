//! Sparse retrievability: exact certification over support pairs for the real
//! field, a restricted falsifier for the complex field, and the sparse-signal
//! sampler used by the phase-transition experiments.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::certify::{
    self, FalsifyConfig, InconclusiveReason, RankTolerance, SearchStats, WitnessPair,
    ENUMERATION_CAP, WITNESS_SEPARATION_MIN,
};
use crate::core::{MeasurementEnsemble, ScalarField, Signal};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{damped_gauss_newton, DampedConfig};

/// Candidate supports for the two signals of a collision (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPair {
    pub x_support: Vec<usize>,
    pub y_support: Vec<usize>,
}

/// Outcome of sparse certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SparseVerdict {
    Retrievable,
    NotRetrievable {
        support_pair: SupportPair,
        witness: WitnessPair,
    },
    Inconclusive {
        stats: SearchStats,
    },
}

impl SparseVerdict {
    pub fn is_retrievable(&self) -> bool {
        matches!(self, SparseVerdict::Retrievable)
    }

    pub fn is_not_retrievable(&self) -> bool {
        matches!(self, SparseVerdict::NotRetrievable { .. })
    }
}

/// Work limit for the exact sparse certifier.
pub const SPARSE_BUDGET_LIMIT: u128 = 1_000_000_000;

/// Published work estimate: (#support pairs) * 2^m * cost(solve), with
/// cost(solve) = m (2s)^2 + (2s)^3 scalar operations.
pub fn sparse_budget_estimate(d: usize, s: usize, m: usize) -> u128 {
    let pairs = binomial(d, s).saturating_mul(binomial(d, s));
    let solves = 1u128 << m.min(127);
    let n = 2 * s as u128;
    let cost = m as u128 * n * n + n * n * n;
    pairs.saturating_mul(solves).saturating_mul(cost.max(1))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    out
}

fn size_s_supports(d: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..s).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic combination
        let mut i = s;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < d - s + i {
                cur[i] += 1;
                for j in i + 1..s {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn embed(field: ScalarField, d: usize, support: &[usize], values: &[Complex64]) -> Result<Signal> {
    let mut entries = DVector::from_element(d, Complex64::new(0.0, 0.0));
    for (slot, &idx) in support.iter().enumerate() {
        entries[idx] = values[slot];
    }
    Signal::new(field, entries)
}

// ---------------------------------------------------------------------------
// Exact real certifier
// ---------------------------------------------------------------------------

/// Exact s-sparse certification for real ensembles.
///
/// For every pair of size-s supports (I, J) and every subset T of the
/// measurements, solves the linear system that forces factor one of the
/// collision identity to vanish on T and factor two on its complement, with x
/// supported on I and y on J. The ensemble is s-sparse retrievable iff no
/// consistent system admits a solution with x != y; the difference is tested
/// exactly on the affine solution set through the particular solution and the
/// homogeneous null-space basis.
pub fn certify_sparse_real_exact(
    e: &MeasurementEnsemble,
    s: usize,
    tol: RankTolerance,
) -> Result<SparseVerdict> {
    if e.field() != ScalarField::Real {
        return Err(Error::FieldMismatch(
            "certify_sparse_real_exact requires a real ensemble".into(),
        ));
    }
    let d = e.d();
    let m = e.m();
    if s == 0 || s >= d {
        return Err(Error::SparsityRange { s, d });
    }
    if m > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            m,
            cap: ENUMERATION_CAP,
        });
    }
    let estimate = sparse_budget_estimate(d, s, m);
    if estimate > SPARSE_BUDGET_LIMIT {
        return Err(Error::BudgetExceeded {
            estimate,
            limit: SPARSE_BUDGET_LIMIT,
        });
    }

    let a = e.real_rows();
    let b = e.real_shifts();
    let supports = size_s_supports(d, s);
    let n = 2 * s;

    for i_sup in &supports {
        for j_sup in &supports {
            for t_mask in 0u32..(1u32 << m) {
                let mut sys = DMatrix::<f64>::zeros(m, n);
                let mut rhs = DVector::<f64>::zeros(m);
                for j in 0..m {
                    let in_t = (t_mask >> j) & 1 == 1;
                    let sign = if in_t { -1.0 } else { 1.0 };
                    for (slot, &idx) in i_sup.iter().enumerate() {
                        sys[(j, slot)] = a[(j, idx)];
                    }
                    for (slot, &idx) in j_sup.iter().enumerate() {
                        sys[(j, s + slot)] = sign * a[(j, idx)];
                    }
                    rhs[j] = if in_t { 0.0 } else { -2.0 * b[j] };
                }
                if !linalg::in_column_span(&sys, &rhs, tol) {
                    continue;
                }
                let w_p = linalg::min_norm_solve(&sys, &rhs, tol)?;
                let rank = linalg::numerical_rank(&sys, tol);
                let basis = linalg::null_space_basis(&sys, rank);

                let diff_norm = |w: &DVector<f64>| -> f64 {
                    let mut diff = DVector::<f64>::zeros(d);
                    for (slot, &idx) in i_sup.iter().enumerate() {
                        diff[idx] += w[slot];
                    }
                    for (slot, &idx) in j_sup.iter().enumerate() {
                        diff[idx] -= w[s + slot];
                    }
                    diff.norm()
                };

                let tol_d = 1e-8 * (1.0 + w_p.norm());
                let candidate = if diff_norm(&w_p) > tol_d {
                    Some(w_p.clone())
                } else {
                    basis
                        .iter()
                        .find(|nvec| diff_norm(nvec) > 1e-8)
                        .map(|nvec| {
                            // Push far enough along the null direction that
                            // the two signals separate cleanly.
                            let c = 2.0 / diff_norm(nvec);
                            &w_p + &(nvec * c)
                        })
                };
                let Some(w) = candidate else { continue };

                let x_vals: Vec<Complex64> =
                    (0..s).map(|k| Complex64::new(w[k], 0.0)).collect();
                let y_vals: Vec<Complex64> =
                    (0..s).map(|k| Complex64::new(w[s + k], 0.0)).collect();
                let witness = WitnessPair {
                    x: embed(ScalarField::Real, d, i_sup, &x_vals)?,
                    y: embed(ScalarField::Real, d, j_sup, &y_vals)?,
                };
                if witness.verify(e).is_err() {
                    continue;
                }
                return Ok(SparseVerdict::NotRetrievable {
                    support_pair: SupportPair {
                        x_support: i_sup.clone(),
                        y_support: j_sup.clone(),
                    },
                    witness,
                });
            }
        }
    }
    Ok(SparseVerdict::Retrievable)
}

// ---------------------------------------------------------------------------
// Restricted complex falsifier
// ---------------------------------------------------------------------------

/// Searches for an s-sparse collision of a complex ensemble by optimizing
/// (x, y) directly on each support pair, minimizing
/// ||measure_sq(x) - measure_sq(y)||^2 with damped Gauss-Newton from seeded
/// random starts. NotRetrievable verdicts carry a verified sparse witness;
/// otherwise Inconclusive (the search proves nothing).
pub fn falsify_sparse_complex(
    e: &MeasurementEnsemble,
    s: usize,
    cfg: &FalsifyConfig,
) -> Result<SparseVerdict> {
    if e.field() != ScalarField::Complex {
        return Err(Error::FieldMismatch(
            "falsify_sparse_complex requires a complex ensemble".into(),
        ));
    }
    let d = e.d();
    if s == 0 || s > d {
        return Err(Error::SparsityRange { s, d });
    }
    let threshold = cfg.residual_factor * certify::ensemble_scale(e);
    let supports = size_s_supports(d, s);
    let mut best = f64::INFINITY;
    let mut restarts_run = 0;

    for (pi, i_sup) in supports.iter().enumerate() {
        for (pj, j_sup) in supports.iter().enumerate() {
            let pair_index = pi * supports.len() + pj;
            for restart in 0..cfg.restarts {
                restarts_run += 1;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((pair_index * cfg.restarts + restart) as u64 + 1);
                let start = DVector::from_fn(4 * s, |_, _| rng.sample::<f64, _>(StandardNormal));

                let to_signals = |w: &DVector<f64>| -> (Signal, Signal) {
                    let xv: Vec<Complex64> =
                        (0..s).map(|k| Complex64::new(w[k], w[s + k])).collect();
                    let yv: Vec<Complex64> = (0..s)
                        .map(|k| Complex64::new(w[2 * s + k], w[3 * s + k]))
                        .collect();
                    (
                        embed(ScalarField::Complex, d, i_sup, &xv).expect("finite"),
                        embed(ScalarField::Complex, d, j_sup, &yv).expect("finite"),
                    )
                };

                let out = damped_gauss_newton(
                    |w| {
                        let (x, y) = to_signals(w);
                        e.measure_sq(&x).expect("dims fixed") - e.measure_sq(&y).expect("dims fixed")
                    },
                    |w| {
                        let (x, y) = to_signals(w);
                        let jx = certify::jacobian(e, &x).expect("dims fixed");
                        let jy = certify::jacobian(e, &y).expect("dims fixed");
                        let m = e.m();
                        DMatrix::from_fn(m, 4 * s, |r, c| {
                            if c < s {
                                jx[(r, i_sup[c])]
                            } else if c < 2 * s {
                                jx[(r, d + i_sup[c - s])]
                            } else if c < 3 * s {
                                -jy[(r, j_sup[c - 2 * s])]
                            } else {
                                -jy[(r, d + j_sup[c - 3 * s])]
                            }
                        })
                    },
                    start,
                    &DampedConfig {
                        max_iters: cfg.max_iters,
                        damping_init: 1e-3,
                        success_threshold: threshold,
                    },
                );
                if out.residual_norm < best {
                    best = out.residual_norm;
                }
                if !out.converged {
                    continue;
                }
                let (x, y) = to_signals(&out.params);
                if x.distance(&y) < WITNESS_SEPARATION_MIN {
                    continue;
                }
                let witness = WitnessPair { x, y };
                if witness.verify(e).is_err() {
                    continue;
                }
                return Ok(SparseVerdict::NotRetrievable {
                    support_pair: SupportPair {
                        x_support: i_sup.clone(),
                        y_support: j_sup.clone(),
                    },
                    witness,
                });
            }
        }
    }

    Ok(SparseVerdict::Inconclusive {
        stats: SearchStats {
            reason: InconclusiveReason::NoWitnessFound,
            restarts: restarts_run,
            best_residual: if best.is_finite() { Some(best) } else { None },
        },
    })
}

// ---------------------------------------------------------------------------
// Sparse signal sampling
// ---------------------------------------------------------------------------

/// Uniformly random size-s support with standard Gaussian nonzeros,
/// deterministic per seed.
pub fn sample_sparse_signal(
    d: usize,
    s: usize,
    field: ScalarField,
    seed: u64,
) -> Result<Signal> {
    if d == 0 {
        return Err(Error::DimensionMismatch("d must be >= 1".into()));
    }
    if s > d {
        return Err(Error::SparsityRange { s, d });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support: Vec<usize> = rand::seq::index::sample(&mut rng, d, s).into_vec();
    support.sort_unstable();
    let values: Vec<Complex64> = (0..s)
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
        .collect();
    embed(field, d, &support, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::sample_generic;

    #[test]
    fn two_measurements_never_one_sparse_retrievable() {
        for seed in 0..5 {
            let e = sample_generic(ScalarField::Real, 2, 3, seed).unwrap();
            let v = certify_sparse_real_exact(&e, 1, RankTolerance::default()).unwrap();
            match v {
                SparseVerdict::NotRetrievable { support_pair, witness } => {
                    witness.verify(&e).unwrap();
                    assert!(support_pair.x_support.len() == 1);
                    assert!(support_pair.y_support.len() == 1);
                    // Supports are honored with hard zeros.
                    for (i, z) in witness.x.entries().iter().enumerate() {
                        if !support_pair.x_support.contains(&i) {
                            assert_eq!(z.norm(), 0.0);
                        }
                    }
                }
                other => panic!("expected NotRetrievable at m = 2s, got {other:?}"),
            }
        }
    }

    #[test]
    fn three_measurements_generically_one_sparse_retrievable() {
        for seed in 100..110 {
            let e = sample_generic(ScalarField::Real, 3, 3, seed).unwrap();
            let v = certify_sparse_real_exact(&e, 1, RankTolerance::default()).unwrap();
            assert!(v.is_retrievable(), "seed {seed}");
        }
    }

    #[test]
    fn zero_shifts_sparse_witness() {
        let e = MeasurementEnsemble::from_real(
            DMatrix::from_row_slice(3, 3, &[1.0, 0.5, -0.2, 0.3, 1.0, 0.7, -1.1, 0.4, 1.0]),
            DVector::zeros(3),
        )
        .unwrap();
        let v = certify_sparse_real_exact(&e, 1, RankTolerance::default()).unwrap();
        match v {
            SparseVerdict::NotRetrievable { witness, .. } => {
                // (x, -x) with a 1-sparse x.
                let sum = witness.x.entries() + witness.y.entries();
                assert!(sum.iter().map(|z| z.norm()).sum::<f64>() < 1e-9);
            }
            other => panic!("expected NotRetrievable for b = 0, got {other:?}"),
        }
    }

    #[test]
    fn sparsity_bounds_rejected() {
        let e = sample_generic(ScalarField::Real, 4, 3, 1).unwrap();
        assert!(matches!(
            certify_sparse_real_exact(&e, 0, RankTolerance::default()),
            Err(Error::SparsityRange { .. })
        ));
        assert!(matches!(
            certify_sparse_real_exact(&e, 3, RankTolerance::default()),
            Err(Error::SparsityRange { .. })
        ));
    }

    #[test]
    fn budget_guard_trips() {
        let e = sample_generic(ScalarField::Real, 20, 24, 1).unwrap();
        assert!(matches!(
            certify_sparse_real_exact(&e, 8, RankTolerance::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn monotone_in_sparsity() {
        // Retrievable at s implies retrievable at s' < s.
        for seed in 0..5 {
            let e = sample_generic(ScalarField::Real, 6, 4, seed).unwrap();
            let tol = RankTolerance::default();
            let at2 = certify_sparse_real_exact(&e, 2, tol).unwrap();
            if at2.is_retrievable() {
                assert!(certify_sparse_real_exact(&e, 1, tol).unwrap().is_retrievable());
            }
        }
    }

    #[test]
    fn falsifier_zero_shifts() {
        let e = MeasurementEnsemble::new(
            ScalarField::Complex,
            DMatrix::from_fn(2, 3, |j, i| Complex64::new((j + i) as f64 + 0.5, i as f64 - 1.0)),
            DVector::from_element(2, Complex64::new(0.0, 0.0)),
        )
        .unwrap();
        let cfg = FalsifyConfig {
            restarts: 4,
            ..FalsifyConfig::seeded(11)
        };
        let v = falsify_sparse_complex(&e, 1, &cfg).unwrap();
        assert!(v.is_not_retrievable());
    }

    #[test]
    fn restricted_search_finds_witness_below_the_bound() {
        // m = 2 measurements cannot pin down 1-sparse complex signals.
        let e = sample_generic(ScalarField::Complex, 2, 3, 77).unwrap();
        let cfg = FalsifyConfig {
            restarts: 8,
            ..FalsifyConfig::seeded(5)
        };
        let v = falsify_sparse_complex(&e, 1, &cfg).unwrap();
        match v {
            SparseVerdict::NotRetrievable { support_pair, witness } => {
                witness.verify(&e).unwrap();
                assert!(support_pair.x_support.len() == 1 && support_pair.y_support.len() == 1);
            }
            other => panic!("expected a sparse witness at m = 2, got {other:?}"),
        }
    }

    #[test]
    fn restricted_search_inconclusive_at_generic_sufficiency() {
        // m = 4s + 1 generic ensembles admit no s-sparse collision; fifty
        // restarts per support pair must come back empty-handed.
        let e = sample_generic(ScalarField::Complex, 5, 5, 78).unwrap();
        let cfg = FalsifyConfig {
            restarts: 50,
            ..FalsifyConfig::seeded(6)
        };
        let v = falsify_sparse_complex(&e, 1, &cfg).unwrap();
        match v {
            SparseVerdict::Inconclusive { stats } => {
                assert_eq!(stats.restarts, 25 * 50);
                assert!(stats.best_residual.is_some());
            }
            other => panic!("expected Inconclusive at m = 4s+1, got {other:?}"),
        }
    }

    #[test]
    fn sparse_sampler_properties() {
        let a = sample_sparse_signal(6, 2, ScalarField::Real, 9).unwrap();
        let b = sample_sparse_signal(6, 2, ScalarField::Real, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.entries().iter().filter(|z| z.norm() > 0.0).count(),
            2
        );
        let dense = sample_sparse_signal(4, 4, ScalarField::Complex, 3).unwrap();
        assert_eq!(dense.entries().iter().filter(|z| z.norm() > 0.0).count(), 4);
    }

    #[test]
    fn support_distribution_is_uniform() {
        // Chi-square over the C(5,2) = 10 supports, df = 9; the 0.99 quantile
        // is 21.666. Fixed seed makes the statistic reproducible.
        let d = 5;
        let s = 2;
        let draws = 10_000;
        let supports = size_s_supports(d, s);
        let mut counts = vec![0usize; supports.len()];
        for seed in 0..draws {
            let x = sample_sparse_signal(d, s, ScalarField::Real, 7_000_000 + seed).unwrap();
            let sup: Vec<usize> = (0..d).filter(|&i| x.entries()[i].norm() > 0.0).collect();
            let pos = supports.iter().position(|c| *c == sup).unwrap();
            counts[pos] += 1;
        }
        let expected = draws as f64 / supports.len() as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let diff = c as f64 - expected;
                diff * diff / expected
            })
            .sum();
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }
}
