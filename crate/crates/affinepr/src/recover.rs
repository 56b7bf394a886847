//! Signal recovery from magnitude data: closed-form coordinatewise solves for
//! the structured minimal ensembles, and lifted spectral initialization plus
//! damped Gauss-Newton for general ensembles.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::certify::{self, RankTolerance};
use crate::construct;
use crate::core::{MagnitudeVector, MeasurementEnsemble, ScalarField, Signal};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{damped_gauss_newton, DampedConfig};

/// Damped Gauss-Newton configuration. The success threshold is relative to
/// the scale of the squared data: a run converges when
/// ||measure_sq(x) - mags^2||_2 <= success_residual * (1 + ||mags^2||_2).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaussNewtonConfig {
    pub max_iters: usize,
    pub restarts: usize,
    pub damping_init: f64,
    pub success_residual: f64,
    pub seed: u64,
}

impl GaussNewtonConfig {
    pub fn seeded(seed: u64) -> Self {
        GaussNewtonConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig(
                "max_iters and restarts must be positive".into(),
            ));
        }
        if self.damping_init <= 0.0
            || self.success_residual <= 0.0
            || !self.damping_init.is_finite()
            || !self.success_residual.is_finite()
        {
            return Err(Error::InvalidConfig(
                "damping_init and success_residual must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for GaussNewtonConfig {
    fn default() -> Self {
        GaussNewtonConfig {
            max_iters: 120,
            restarts: 12,
            damping_init: 1e-3,
            success_residual: 1e-10,
            seed: 0,
        }
    }
}

/// Outcome of an iterative recovery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub x_hat: Signal,
    /// ||measure_sq(x_hat) - observed^2||_2.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Outcome of a closed-form coordinatewise recovery. Inconsistent magnitudes
/// (noisy or outside the range of the map) still produce the least-squares
/// coordinate solve, with the reproduction error attached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactRecovery {
    pub x_hat: Signal,
    /// ||measure(x_hat) - observed||_2.
    pub inconsistency: f64,
}

impl ExactRecovery {
    pub fn is_consistent(&self, mags: &MagnitudeVector) -> bool {
        self.inconsistency <= 1e-9 * (1.0 + mags.max_abs())
    }
}

fn check_mags(e: &MeasurementEnsemble, mags: &MagnitudeVector, op: &str) -> Result<()> {
    if mags.len() != e.m() {
        return Err(Error::DimensionMismatch(format!(
            "{op}: {} magnitudes for m = {}",
            mags.len(),
            e.m()
        )));
    }
    Ok(())
}

fn inconsistency(e: &MeasurementEnsemble, x: &Signal, mags: &MagnitudeVector) -> Result<f64> {
    let reproduced = e.measure(x)?;
    Ok((reproduced.values() - mags.values()).norm())
}

// ---------------------------------------------------------------------------
// Coordinatewise closed forms
// ---------------------------------------------------------------------------

/// Closed-form recovery for the stacked-identity real family: coordinate j is
/// determined by the two shifted magnitudes as
/// (m_j1^2 - m_j2^2 + b_j2^2 - b_j1^2) / (2 (b_j1 - b_j2)).
pub fn recover_coordinatewise_real(
    e: &MeasurementEnsemble,
    mags: &MagnitudeVector,
) -> Result<ExactRecovery> {
    if e.field() != ScalarField::Real {
        return Err(Error::FieldMismatch(
            "recover_coordinatewise_real requires a real ensemble".into(),
        ));
    }
    construct::check_identity_blocks(e, 2)?;
    let d = e.d();
    check_mags(e, mags, "recover_coordinatewise_real")?;
    let mut x = DVector::<f64>::zeros(d);
    for j in 0..d {
        let b1 = e.shift(j).re;
        let b2 = e.shift(d + j).re;
        if b1 == b2 {
            return Err(Error::EqualShiftPair { index: j });
        }
        let m1 = mags.values()[j];
        let m2 = mags.values()[d + j];
        x[j] = (m1 * m1 - m2 * m2 + b2 * b2 - b1 * b1) / (2.0 * (b1 - b2));
    }
    let x_hat = Signal::from_real(x)?;
    let inconsistency = inconsistency(e, &x_hat, mags)?;
    Ok(ExactRecovery { x_hat, inconsistency })
}

/// Threshold below which a triple's collinearity margin is considered too
/// degenerate to invert the 2x2 difference system.
fn margin_floor(triple: &[Complex64; 3]) -> f64 {
    let scale = triple.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    1e-12 * (1.0 + scale * scale)
}

/// Closed-form recovery for the (B, B, B)^T complex family. Per coordinate,
/// the two best-separated shift differences give a 2x2 real system for the
/// affine value z_j; the block solve then undoes the B mixing (for B = I the
/// coordinatewise values are the answer directly).
pub fn recover_coordinatewise_complex(
    e: &MeasurementEnsemble,
    mags: &MagnitudeVector,
) -> Result<ExactRecovery> {
    if e.field() != ScalarField::Complex {
        return Err(Error::FieldMismatch(
            "recover_coordinatewise_complex requires a complex ensemble".into(),
        ));
    }
    let d = e.d();
    if e.m() != 3 * d {
        return Err(Error::PatternMismatch(format!(
            "expected m = 3d = {}, got {}",
            3 * d,
            e.m()
        )));
    }
    for c in 1..3 {
        for j in 0..d {
            for i in 0..d {
                if e.rows()[(c * d + j, i)] != e.rows()[(j, i)] {
                    return Err(Error::PatternMismatch(format!(
                        "rows block {c} differs from block 0 at ({j}, {i})"
                    )));
                }
            }
        }
    }
    check_mags(e, mags, "recover_coordinatewise_complex")?;
    let block = DMatrix::from_fn(d, d, |j, i| e.rows()[(j, i)]);
    if linalg::numerical_rank(&block, RankTolerance::default()) != d {
        return Err(Error::SingularBlock);
    }

    let mut z = DVector::<Complex64>::zeros(d);
    for j in 0..d {
        let triple = [e.shift(j), e.shift(d + j), e.shift(2 * d + j)];
        let margin = crate::core::collinearity_margin(triple[0], triple[1], triple[2]);
        let floor = margin_floor(&triple);
        if margin <= floor {
            return Err(Error::Conditioning(format!(
                "collinearity margin {margin:.3e} at coordinate {j} is below {floor:.3e}"
            )));
        }
        let msq = [
            mags.values()[j] * mags.values()[j],
            mags.values()[d + j] * mags.values()[d + j],
            mags.values()[2 * d + j] * mags.values()[2 * d + j],
        ];
        // Two differences with the largest shift separation, ties broken by
        // pair order (1,2) < (1,3) < (2,3).
        let mut pairs = [(0usize, 1usize), (0, 2), (1, 2)];
        pairs.sort_by(|&(a1, b1), &(a2, b2)| {
            let s1 = (triple[a1] - triple[b1]).norm();
            let s2 = (triple[a2] - triple[b2]).norm();
            s2.partial_cmp(&s1).unwrap().then((a1, b1).cmp(&(a2, b2)))
        });
        let mut a = [[0.0_f64; 2]; 2];
        let mut rhs = [0.0_f64; 2];
        for (row, &(k, l)) in pairs[..2].iter().enumerate() {
            let diff = triple[k] - triple[l];
            a[row][0] = 2.0 * diff.re;
            a[row][1] = 2.0 * diff.im;
            rhs[row] = msq[k] - msq[l] - triple[k].norm_sqr() + triple[l].norm_sqr();
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 {
            return Err(Error::Conditioning(format!(
                "degenerate difference system at coordinate {j}"
            )));
        }
        let zr = (rhs[0] * a[1][1] - rhs[1] * a[0][1]) / det;
        let zi = (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det;
        z[j] = Complex64::new(zr, zi);
    }

    let x = block
        .lu()
        .solve(&z)
        .ok_or(Error::SingularBlock)?;
    let x_hat = Signal::new(ScalarField::Complex, x)?;
    let inconsistency = inconsistency(e, &x_hat, mags)?;
    Ok(ExactRecovery { x_hat, inconsistency })
}

// ---------------------------------------------------------------------------
// Spectral initialization
// ---------------------------------------------------------------------------

/// Spectral initializer output; `degenerate` flags the zero-signal fallback
/// used when the top eigenvector has no weight on the homogenizing entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralInit {
    pub signal: Signal,
    pub degenerate: bool,
}

/// Forms the lifted weighted covariance sum_j m_j^2 g_j g_j^* / m (with g_j
/// the conjugated lifted row, matching the measurement convention), takes the
/// top eigenvector, and rescales so the homogenizing entry equals one.
pub fn spectral_init(e: &MeasurementEnsemble, mags: &MagnitudeVector) -> Result<SpectralInit> {
    check_mags(e, mags, "spectral_init")?;
    let d = e.d();
    let m = e.m();
    let lifted = e.lift();
    let n = d + 1;
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..m {
        let w = mags.values()[j] * mags.values()[j] / m as f64;
        for p in 0..n {
            for q in 0..n {
                // g = conj(lifted row): g_p * conj(g_q) = conj(a_p) * a_q.
                h[(p, q)] += Complex64::new(w, 0.0)
                    * lifted.matrix()[(j, p)].conj()
                    * lifted.matrix()[(j, q)];
            }
        }
    }
    let (_, top) = linalg::top_hermitian_eigenpair(h);
    let last = top[d];
    if last.norm() < 1e-8 {
        return Ok(SpectralInit {
            signal: Signal::zeros(e.field(), d),
            degenerate: true,
        });
    }
    let entries = DVector::from_fn(d, |i, _| top[i] / last);
    let signal = match e.field() {
        ScalarField::Real => Signal::from_real(entries.map(|z| z.re))?,
        ScalarField::Complex => Signal::new(ScalarField::Complex, entries)?,
    };
    Ok(SpectralInit {
        signal,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Damped Gauss-Newton recovery
// ---------------------------------------------------------------------------

fn gn_single_run(
    e: &MeasurementEnsemble,
    target_sq: &DVector<f64>,
    start: DVector<f64>,
    cfg: &GaussNewtonConfig,
    threshold: f64,
) -> (DVector<f64>, f64, usize, bool) {
    let field = e.field();
    let out = damped_gauss_newton(
        |w| {
            let x = Signal::from_real_parameters(field, w).expect("finite parameters");
            e.measure_sq(&x).expect("dimensions fixed") - target_sq
        },
        |w| {
            let x = Signal::from_real_parameters(field, w).expect("finite parameters");
            let j = certify::jacobian(e, &x).expect("dimensions fixed");
            match field {
                ScalarField::Real => j.transpose(),
                ScalarField::Complex => j,
            }
        },
        start,
        &DampedConfig {
            max_iters: cfg.max_iters,
            damping_init: cfg.damping_init,
            success_threshold: threshold,
        },
    );
    (out.params, out.residual_norm, out.iterations, out.converged)
}

/// Damped Gauss-Newton on r(x) = measure_sq(x) - mags^2 from the given
/// initializer, restarting from seeded random perturbations of it on stall.
/// Returns the best run (lowest residual, then lowest restart index).
pub fn recover_gauss_newton(
    e: &MeasurementEnsemble,
    mags: &MagnitudeVector,
    init: &Signal,
    cfg: &GaussNewtonConfig,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    check_mags(e, mags, "recover_gauss_newton")?;
    if init.field() != e.field() || init.d() != e.d() {
        return Err(Error::DimensionMismatch(
            "initializer does not match the ensemble".into(),
        ));
    }
    let target_sq = mags.squared();
    let threshold = cfg.success_residual * (1.0 + target_sq.norm());
    let init_params = init.to_real_parameters();

    let (mut best_params, mut best_residual, mut best_iters, mut best_converged) =
        gn_single_run(e, &target_sq, init_params.clone(), cfg, threshold);
    let mut restarts_used = 0;

    if !best_converged {
        let spread = 0.5 * (1.0 + init.norm());
        for restart in 1..=cfg.restarts {
            restarts_used = restart;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(restart as u64);
            let start = DVector::from_fn(init_params.len(), |i, _| {
                init_params[i] + spread * rng.sample::<f64, _>(StandardNormal)
            });
            let (params, residual, iters, converged) =
                gn_single_run(e, &target_sq, start, cfg, threshold);
            if residual < best_residual {
                best_params = params;
                best_residual = residual;
                best_iters = iters;
                best_converged = converged;
            }
            if converged {
                break;
            }
        }
    }

    Ok(RecoveryResult {
        x_hat: Signal::from_real_parameters(e.field(), &best_params)?,
        residual: best_residual,
        iterations: best_iters,
        converged: best_converged,
        restarts_used,
    })
}

/// Dispatching recovery: coordinatewise closed form when the ensemble matches
/// a structured minimal pattern, otherwise spectral init + Gauss-Newton.
pub fn recover_auto(
    e: &MeasurementEnsemble,
    mags: &MagnitudeVector,
    cfg: &GaussNewtonConfig,
) -> Result<RecoveryResult> {
    let structured = certify::certify_structured(e, RankTolerance::default()).is_retrievable();
    if structured {
        let exact = match e.field() {
            ScalarField::Real => recover_coordinatewise_real(e, mags)?,
            ScalarField::Complex => recover_coordinatewise_complex(e, mags)?,
        };
        let residual = (e.measure_sq(&exact.x_hat)? - mags.squared()).norm();
        let threshold = cfg.success_residual * (1.0 + mags.squared().norm());
        return Ok(RecoveryResult {
            converged: residual <= threshold.max(1e-9 * (1.0 + mags.squared().norm())),
            x_hat: exact.x_hat,
            residual,
            iterations: 0,
            restarts_used: 0,
        });
    }
    let init = spectral_init(e, mags)?;
    recover_gauss_newton(e, mags, &init.signal, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build_complex_minimal, build_real_minimal, ShiftPairSpec, ShiftTripleSpec};

    #[test]
    fn coordinatewise_real_example() {
        let spec = ShiftPairSpec::new(vec![(1.0, 0.0)]).unwrap();
        let e = build_real_minimal(1, &spec).unwrap();
        let mags = MagnitudeVector::from_slice(&[4.0, 3.0]).unwrap();
        let rec = recover_coordinatewise_real(&e, &mags).unwrap();
        assert_eq!(rec.x_hat.real_entries()[0], 3.0);
        assert!(rec.is_consistent(&mags));

        // Magnitudes of the zero signal give back zero.
        let zero_mags = MagnitudeVector::from_slice(&[1.0, 0.0]).unwrap();
        let rec0 = recover_coordinatewise_real(&e, &zero_mags).unwrap();
        assert_eq!(rec0.x_hat.real_entries()[0], 0.0);
    }

    #[test]
    fn coordinatewise_real_roundtrip() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for d in 1..=8 {
            let pairs = (0..d)
                .map(|j| (j as f64 + 1.0, -(j as f64) - 0.5))
                .collect::<Vec<_>>();
            let e = build_real_minimal(d, &ShiftPairSpec::new(pairs).unwrap()).unwrap();
            for _ in 0..125 {
                let x = Signal::from_real(DVector::from_fn(d, |_, _| {
                    3.0 * rng.sample::<f64, _>(StandardNormal)
                }))
                .unwrap();
                let mags = e.measure(&x).unwrap();
                let rec = recover_coordinatewise_real(&e, &mags).unwrap();
                let err = rec.x_hat.distance(&x);
                let bound = 1e-10 * (1.0 + x.norm());
                assert!(err <= bound, "d={d}: error {err} > {bound}");
            }
        }
    }

    #[test]
    fn coordinatewise_complex_example() {
        let spec = ShiftTripleSpec::new(vec![[
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ]])
        .unwrap();
        let b = DMatrix::identity(1, 1);
        let e = build_complex_minimal(&b, &spec).unwrap();
        let mags =
            MagnitudeVector::from_slice(&[2.0_f64.sqrt(), 5.0_f64.sqrt(), 5.0_f64.sqrt()]).unwrap();
        let rec = recover_coordinatewise_complex(&e, &mags).unwrap();
        let z = rec.x_hat.entries()[0];
        assert!((z - Complex64::new(1.0, 1.0)).norm() < 1e-12);

        let zero_mags = MagnitudeVector::from_slice(&[0.0, 1.0, 1.0]).unwrap();
        let rec0 = recover_coordinatewise_complex(&e, &zero_mags).unwrap();
        assert!(rec0.x_hat.norm() < 1e-12);
    }

    #[test]
    fn coordinatewise_scale_equivariance() {
        // Scaling (b, x) by t scales the magnitudes by t and the recovery
        // must follow exactly.
        let t = 2.5;
        let pairs = vec![(1.0, 0.0), (2.0, 3.0)];
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (t * a, t * b)).collect();
        let e = build_real_minimal(2, &ShiftPairSpec::new(pairs).unwrap()).unwrap();
        let es = build_real_minimal(2, &ShiftPairSpec::new(scaled).unwrap()).unwrap();
        let x = Signal::real(&[0.7, -1.3]).unwrap();
        let xs = Signal::real(&[t * 0.7, t * -1.3]).unwrap();
        let mags = e.measure(&x).unwrap();
        let mags_s = es.measure(&xs).unwrap();
        let r = recover_coordinatewise_real(&e, &mags).unwrap();
        let rs = recover_coordinatewise_real(&es, &mags_s).unwrap();
        for i in 0..2 {
            assert!((rs.x_hat.real_entries()[i] - t * r.x_hat.real_entries()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_zero_mags_falls_back() {
        let spec = ShiftPairSpec::new(vec![(1.0, 0.0), (2.0, 3.0)]).unwrap();
        let e = build_real_minimal(2, &spec).unwrap();
        let mags = MagnitudeVector::from_slice(&[0.0; 4]).unwrap();
        let init = spectral_init(&e, &mags).unwrap();
        assert!(init.degenerate);
        assert_eq!(init.signal.norm(), 0.0);
    }

    #[test]
    fn gauss_newton_from_truth_converges_immediately() {
        let spec = ShiftPairSpec::new(vec![(1.0, 0.0), (2.0, 3.0)]).unwrap();
        let e = build_real_minimal(2, &spec).unwrap();
        let x = Signal::real(&[0.3, -0.9]).unwrap();
        let mags = e.measure(&x).unwrap();
        let out = recover_gauss_newton(&e, &mags, &x, &GaussNewtonConfig::seeded(1)).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 1);
        assert!(out.residual <= 1e-10 * (1.0 + mags.squared().norm()));
    }

    #[test]
    fn gauss_newton_matches_coordinatewise_on_real_minimal() {
        let spec = ShiftPairSpec::new(vec![(1.0, 0.0), (2.0, 3.0), (-1.0, 0.5)]).unwrap();
        let e = build_real_minimal(3, &spec).unwrap();
        let x = Signal::real(&[1.2, -0.4, 2.1]).unwrap();
        let mags = e.measure(&x).unwrap();
        let init = spectral_init(&e, &mags).unwrap();
        let gn = recover_gauss_newton(&e, &mags, &init.signal, &GaussNewtonConfig::seeded(3)).unwrap();
        assert!(gn.converged);
        let cw = recover_coordinatewise_real(&e, &mags).unwrap();
        assert!(gn.x_hat.distance(&cw.x_hat) < 1e-8);
    }

    #[test]
    fn recover_auto_uses_structured_path() {
        let spec = ShiftTripleSpec::default_for_dimension(2);
        let e = build_complex_minimal(&DMatrix::identity(2, 2), &spec).unwrap();
        let x = Signal::complex(&[Complex64::new(0.4, -1.0), Complex64::new(-0.2, 0.3)]).unwrap();
        let mags = e.measure(&x).unwrap();
        let out = recover_auto(&e, &mags, &GaussNewtonConfig::seeded(5)).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert!(out.x_hat.distance(&x) < 1e-9);
    }
}
