//! Reproducible experiment harness: seeded cell grids, deterministic derived
//! seeds, parallel trial execution with ordered output, and versioned CSV.
//!
//! Reruns of the same spec are byte-identical (including with jobs > 1): the
//! derived seed of a trial is a pure SHA-256 function of (master seed, cell,
//! trial), rows are buffered and emitted in (cell, trial) order, and wall
//! times never reach the CSV.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{self, FalsifyConfig, RankTolerance};
use crate::construct;
use crate::core::ScalarField;
use crate::error::{Error, Result};
use crate::sparse;
use crate::stability;

/// Inclusive integer range, written `lo..hi` (or a single value) on the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanSpec {
    pub lo: usize,
    pub hi: usize,
}

impl SpanSpec {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidConfig(format!("empty range {lo}..{hi}")));
        }
        Ok(SpanSpec { lo, hi })
    }

    pub fn single(v: usize) -> Self {
        SpanSpec { lo: v, hi: v }
    }

    pub fn values(&self) -> impl Iterator<Item = usize> {
        self.lo..=self.hi
    }
}

impl std::str::FromStr for SpanSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some((lo, hi)) = s.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
            let hi: usize = hi.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
            SpanSpec::new(lo, hi).map_err(|e| e.to_string())
        } else {
            let v: usize = s.trim().parse().map_err(|e| format!("bad value: {e}"))?;
            Ok(SpanSpec::single(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PhaseTransition,
    SparseTransition,
    StabilitySweep,
    CounterexampleDemo,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PhaseTransition => "phase-transition",
            ExperimentKind::SparseTransition => "sparse-transition",
            ExperimentKind::StabilitySweep => "stability-sweep",
            ExperimentKind::CounterexampleDemo => "counterexample-demo",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "phase-transition" => Ok(ExperimentKind::PhaseTransition),
            "sparse-transition" => Ok(ExperimentKind::SparseTransition),
            "stability-sweep" => Ok(ExperimentKind::StabilitySweep),
            "counterexample-demo" => Ok(ExperimentKind::CounterexampleDemo),
            other => Err(format!("unknown experiment kind {other:?}")),
        }
    }
}

/// Full experiment description; reruns with an equal spec are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub field: ScalarField,
    pub d: SpanSpec,
    pub m: SpanSpec,
    pub s: Option<SpanSpec>,
    pub trials: usize,
    pub seed: u64,
    pub jobs: usize,
    /// Restart budget for falsifier-backed cells.
    pub restarts: usize,
    /// Base radius of the stability sweep (doubled three times per cell).
    pub radius: f64,
    /// Sample pairs per stability estimate.
    pub pairs: usize,
    /// Perturbation size for the counterexample demo; None runs the default
    /// ladder 1e-1, 1e-2, 1e-3.
    pub delta: Option<f64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be >= 1".into()));
        }
        if matches!(self.kind, ExperimentKind::SparseTransition) && self.s.is_none() {
            return Err(Error::InvalidConfig(
                "sparse-transition requires an s range".into(),
            ));
        }
        if matches!(self.kind, ExperimentKind::StabilitySweep)
            && (self.radius <= 0.0 || !self.radius.is_finite() || self.pairs < 2)
        {
            return Err(Error::InvalidConfig(
                "stability-sweep requires radius > 0 and pairs >= 2".into(),
            ));
        }
        if matches!(self.kind, ExperimentKind::CounterexampleDemo) && self.d.lo < 2 {
            return Err(Error::InvalidConfig(
                "counterexample-demo requires d >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// One emitted row. Wall-clock time lives only here; the CSV forms exclude it
/// so reruns stay byte-identical.
#[derive(Debug, Clone, Serialize)]
pub enum ExperimentRecord {
    Transition {
        d: usize,
        m: usize,
        s: Option<usize>,
        trial: usize,
        seed: u64,
        outcome: String,
        wall_secs: f64,
    },
    Stability {
        d: usize,
        m: usize,
        trial: usize,
        seed: u64,
        radius: f64,
        pairs: usize,
        c1_hat: f64,
        big_c1_hat: f64,
        c2_hat: f64,
        big_c2_hat: f64,
        wall_secs: f64,
    },
    Counterexample {
        d: usize,
        delta: f64,
        seed: u64,
        original: String,
        frobenius_distance: f64,
        expected_distance: f64,
        witness_mismatch: f64,
        perturbed: String,
        wall_secs: f64,
    },
}

/// Derived per-trial seed: SHA-256 of (master, d, m, s, trial), truncated to
/// the generator's 64-bit state width.
pub fn derive_seed(master: u64, d: usize, m: usize, s: Option<usize>, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"affinepr-experiment-v1");
    h.update(master.to_le_bytes());
    h.update((d as u64).to_le_bytes());
    h.update((m as u64).to_le_bytes());
    h.update([u8::from(s.is_some())]);
    h.update((s.unwrap_or(0) as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, Copy)]
struct WorkItem {
    d: usize,
    m: usize,
    s: Option<usize>,
    trial: usize,
    radius_index: Option<usize>,
    delta: Option<f64>,
}

fn work_items(spec: &ExperimentSpec) -> Vec<WorkItem> {
    let mut items = Vec::new();
    match spec.kind {
        ExperimentKind::PhaseTransition => {
            for d in spec.d.values() {
                for m in spec.m.values() {
                    for trial in 0..spec.trials {
                        items.push(WorkItem {
                            d,
                            m,
                            s: None,
                            trial,
                            radius_index: None,
                            delta: None,
                        });
                    }
                }
            }
        }
        ExperimentKind::SparseTransition => {
            let s_span = spec.s.expect("validated");
            for d in spec.d.values() {
                for s in s_span.values() {
                    for m in spec.m.values() {
                        for trial in 0..spec.trials {
                            items.push(WorkItem {
                                d,
                                m,
                                s: Some(s),
                                trial,
                                radius_index: None,
                                delta: None,
                            });
                        }
                    }
                }
            }
        }
        ExperimentKind::StabilitySweep => {
            for d in spec.d.values() {
                for m in spec.m.values() {
                    for trial in 0..spec.trials {
                        for radius_index in 0..4 {
                            items.push(WorkItem {
                                d,
                                m,
                                s: None,
                                trial,
                                radius_index: Some(radius_index),
                                delta: None,
                            });
                        }
                    }
                }
            }
        }
        ExperimentKind::CounterexampleDemo => {
            let deltas: Vec<f64> = match spec.delta {
                Some(x) => vec![x],
                None => vec![1e-1, 1e-2, 1e-3],
            };
            for d in spec.d.values() {
                for &delta in &deltas {
                    items.push(WorkItem {
                        d,
                        m: 0,
                        s: None,
                        trial: 0,
                        radius_index: None,
                        delta: Some(delta),
                    });
                }
            }
        }
    }
    items
}

fn run_item(spec: &ExperimentSpec, item: &WorkItem) -> Result<ExperimentRecord> {
    let started = Instant::now();
    match spec.kind {
        ExperimentKind::PhaseTransition => {
            let seed = derive_seed(spec.seed, item.d, item.m, None, item.trial);
            let e = construct::sample_generic(spec.field, item.m, item.d, seed)?;
            let outcome = match spec.field {
                ScalarField::Real => {
                    match certify::certify_real_exact(&e, RankTolerance::default())? {
                        v if v.is_retrievable() => "retrievable",
                        _ => "not_retrievable",
                    }
                }
                ScalarField::Complex => {
                    if item.m < 3 * item.d {
                        match construct::witness_subminimal_complex(&e) {
                            Ok(_) => "witness_found",
                            Err(_) => "no_witness",
                        }
                    } else {
                        let cfg = FalsifyConfig {
                            restarts: spec.restarts,
                            seed,
                            ..FalsifyConfig::default()
                        };
                        match certify::falsify_complex(&e, &cfg)? {
                            v if v.is_not_retrievable() => "witness_found",
                            _ => "no_witness",
                        }
                    }
                }
            };
            Ok(ExperimentRecord::Transition {
                d: item.d,
                m: item.m,
                s: None,
                trial: item.trial,
                seed,
                outcome: outcome.to_string(),
                wall_secs: started.elapsed().as_secs_f64(),
            })
        }
        ExperimentKind::SparseTransition => {
            let s = item.s.expect("sparse cells carry s");
            let seed = derive_seed(spec.seed, item.d, item.m, Some(s), item.trial);
            let e = construct::sample_generic(spec.field, item.m, item.d, seed)?;
            let outcome = match spec.field {
                ScalarField::Real => {
                    match sparse::certify_sparse_real_exact(&e, s, RankTolerance::default())? {
                        v if v.is_retrievable() => "retrievable",
                        _ => "not_retrievable",
                    }
                }
                ScalarField::Complex => {
                    let cfg = FalsifyConfig {
                        restarts: spec.restarts,
                        seed,
                        ..FalsifyConfig::default()
                    };
                    match sparse::falsify_sparse_complex(&e, s, &cfg)? {
                        v if v.is_not_retrievable() => "witness_found",
                        _ => "no_witness",
                    }
                }
            };
            Ok(ExperimentRecord::Transition {
                d: item.d,
                m: item.m,
                s: Some(s),
                trial: item.trial,
                seed,
                outcome: outcome.to_string(),
                wall_secs: started.elapsed().as_secs_f64(),
            })
        }
        ExperimentKind::StabilitySweep => {
            let radius_index = item.radius_index.expect("sweep cells carry a radius");
            let seed = derive_seed(spec.seed, item.d, item.m, Some(radius_index), item.trial);
            let e = construct::sample_generic(spec.field, item.m, item.d, seed)?;
            let radius = spec.radius * (1 << radius_index) as f64;
            let est = stability::estimate_lipschitz(&e, radius, spec.pairs, seed)?;
            Ok(ExperimentRecord::Stability {
                d: item.d,
                m: item.m,
                trial: item.trial,
                seed,
                radius,
                pairs: spec.pairs,
                c1_hat: est.c1_hat,
                big_c1_hat: est.big_c1_hat,
                c2_hat: est.c2_hat,
                big_c2_hat: est.big_c2_hat,
                wall_secs: started.elapsed().as_secs_f64(),
            })
        }
        ExperimentKind::CounterexampleDemo => {
            let delta = item.delta.expect("demo cells carry delta");
            let seed = derive_seed(spec.seed, item.d, 0, None, item.trial);
            match spec.field {
                ScalarField::Real => {
                    let e = construct::build_real_minimal(
                        item.d,
                        &construct::ShiftPairSpec::default_for_dimension(item.d),
                    )?;
                    let original = certify::certify_real_exact(&e, RankTolerance::default())?;
                    let report = construct::perturb_real(&e, delta)?;
                    let mismatch = report.witness.measurement_mismatch(&report.perturbed)?;
                    let perturbed =
                        certify::certify_real_exact(&report.perturbed, RankTolerance::default())?;
                    Ok(ExperimentRecord::Counterexample {
                        d: item.d,
                        delta,
                        seed,
                        original: verdict_name(&original).to_string(),
                        frobenius_distance: report.frobenius_distance,
                        expected_distance: e.shifts()[0].re.abs() * delta,
                        witness_mismatch: mismatch,
                        perturbed: verdict_name(&perturbed).to_string(),
                        wall_secs: started.elapsed().as_secs_f64(),
                    })
                }
                ScalarField::Complex => {
                    let b = nalgebra::DMatrix::identity(item.d, item.d);
                    let e = construct::build_complex_minimal(
                        &b,
                        &construct::ShiftTripleSpec::default_for_dimension(item.d),
                    )?;
                    let original = certify::certify_structured(&e, RankTolerance::default());
                    let report = construct::perturb_complex(&e, delta)?;
                    let mismatch = report.witness.measurement_mismatch(&report.perturbed)?;
                    let cfg = FalsifyConfig {
                        restarts: spec.restarts,
                        seed,
                        ..FalsifyConfig::default()
                    };
                    let perturbed = certify::falsify_complex(&report.perturbed, &cfg)?;
                    Ok(ExperimentRecord::Counterexample {
                        d: item.d,
                        delta,
                        seed,
                        original: verdict_name(&original).to_string(),
                        frobenius_distance: report.frobenius_distance,
                        expected_distance: delta,
                        witness_mismatch: mismatch,
                        perturbed: verdict_name(&perturbed).to_string(),
                        wall_secs: started.elapsed().as_secs_f64(),
                    })
                }
            }
        }
    }
}

fn verdict_name(v: &certify::Verdict) -> &'static str {
    match v {
        certify::Verdict::Retrievable(_) => "retrievable",
        certify::Verdict::NotRetrievable { .. } => "not_retrievable",
        certify::Verdict::Inconclusive(_) => "inconclusive",
    }
}

/// Runs every cell x trial of the spec. Trials execute concurrently up to
/// `spec.jobs`; records come back in deterministic (cell, trial) order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let items = work_items(spec);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(|item| run_item(spec, item)).collect())
}

/// CSV column sets, fixed and versioned in the header comment line.
pub fn write_csv<W: Write>(
    out: &mut W,
    spec: &ExperimentSpec,
    records: &[ExperimentRecord],
) -> std::io::Result<()> {
    writeln!(
        out,
        "# affinepr-experiment v1 kind={} field={} seed={}",
        spec.kind.name(),
        spec.field,
        spec.seed
    )?;
    match spec.kind {
        ExperimentKind::PhaseTransition | ExperimentKind::SparseTransition => {
            writeln!(out, "d,m,s,trial,seed,outcome")?;
            for r in records {
                if let ExperimentRecord::Transition {
                    d,
                    m,
                    s,
                    trial,
                    seed,
                    outcome,
                    ..
                } = r
                {
                    let s_txt = s.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(out, "{d},{m},{s_txt},{trial},{seed},{outcome}")?;
                }
            }
        }
        ExperimentKind::StabilitySweep => {
            writeln!(out, "d,m,trial,seed,radius,pairs,c1_hat,C1_hat,c2_hat,C2_hat")?;
            for r in records {
                if let ExperimentRecord::Stability {
                    d,
                    m,
                    trial,
                    seed,
                    radius,
                    pairs,
                    c1_hat,
                    big_c1_hat,
                    c2_hat,
                    big_c2_hat,
                    ..
                } = r
                {
                    writeln!(
                        out,
                        "{d},{m},{trial},{seed},{radius},{pairs},{c1_hat},{big_c1_hat},{c2_hat},{big_c2_hat}"
                    )?;
                }
            }
        }
        ExperimentKind::CounterexampleDemo => {
            writeln!(
                out,
                "d,delta,seed,original,frobenius_distance,expected_distance,witness_mismatch,perturbed"
            )?;
            for r in records {
                if let ExperimentRecord::Counterexample {
                    d,
                    delta,
                    seed,
                    original,
                    frobenius_distance,
                    expected_distance,
                    witness_mismatch,
                    perturbed,
                    ..
                } = r
                {
                    writeln!(
                        out,
                        "{d},{delta},{seed},{original},{frobenius_distance},{expected_distance},{witness_mismatch},{perturbed}"
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Writes the CSV to a temporary file in the destination directory and
/// renames it into place.
pub fn write_csv_atomic(
    path: &Path,
    spec: &ExperimentSpec,
    records: &[ExperimentRecord],
) -> std::io::Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_csv(&mut file, spec, records)?;
        file.flush()?;
    }
    std::fs::rename(&tmp, path)
}
