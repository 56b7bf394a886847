//! affinepr: certify, construct, perturb, measure, recover, and stress
//! affine-measurement ensembles from the command line.
//!
//! Exit codes: 0 success, 1 domain error (machine-readable JSON on stderr),
//! 2 I/O or format error. Set AFFPR_LOG=debug for progress logging.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use affinepr::experiment::{run_experiment, write_csv_atomic, ExperimentKind, ExperimentSpec, SpanSpec};
use affinepr::*;
// The glob brings in affinepr's one-parameter Result alias; the std form is
// what the CLI signatures use.
use std::result::Result;

#[derive(Parser)]
#[command(
    name = "affinepr",
    version,
    about = "Affine phase retrieval: ensemble certification, construction, recovery, and stability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an ensemble JSON file against the representation invariants.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Decide retrievability: structured certificate first, then the exact
    /// subset-span certifier for real ensembles.
    Certify {
        #[arg(long = "in")]
        input: PathBuf,
        /// Relative singular-value tolerance for rank decisions.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Re-decide with exact rational arithmetic (real field only).
        #[arg(long)]
        rational: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a non-injectivity witness (semi-decision).
    Falsify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 32)]
        restarts: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an ensemble: real-minimal, complex-minimal, or generic.
    Construct {
        /// One of: real-minimal, complex-minimal, generic.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// real | complex (generic kind only).
        #[arg(long)]
        field: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Shift spec JSON ({"pairs": ...} or {"triples": ...}).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the magnitude map: reads {"ensemble": ..., "signal": ...}.
    Measure {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover a signal: reads {"ensemble": ..., "magnitudes": [...],
    /// "config": {...}?}; uses the coordinatewise closed form on structured
    /// ensembles and spectral init + Gauss-Newton otherwise.
    Recover {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the explicit perturbation counterexample for a minimal
    /// ensemble (the input must match the perturbable pattern).
    Perturb {
        /// real | complex.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        delta: f64,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify s-sparse retrievability (exact for real, search for complex).
    SparseCertify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 32)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the bi-Lipschitz constants on a compact ball.
    Stability {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional CSV of every sampled ratio for external plotting.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a reproducible experiment grid and write its CSV.
    Experiment {
        /// phase-transition | sparse-transition | stability-sweep |
        /// counterexample-demo.
        #[arg(long)]
        kind: ExperimentKind,
        #[arg(long)]
        field: String,
        #[arg(long)]
        d: SpanSpec,
        #[arg(long)]
        m: Option<SpanSpec>,
        #[arg(long)]
        s: Option<SpanSpec>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 32)]
        restarts: usize,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Domain(Error),
    Format(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Format(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(format!("json: {e}"))
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    kind: &'a str,
    message: String,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DimensionMismatch(_) => "dimension_mismatch",
        Error::FieldMismatch(_) => "field_mismatch",
        Error::InvalidEnsemble(_) => "invalid_ensemble",
        Error::InvalidSignal(_) => "invalid_signal",
        Error::InvalidConfig(_) => "invalid_config",
        Error::EnumerationCap { .. } => "enumeration_cap",
        Error::BudgetExceeded { .. } => "budget_exceeded",
        Error::EqualShiftPair { .. } => "equal_shift_pair",
        Error::CollinearTriple { .. } => "collinear_triple",
        Error::SingularBlock => "singular_block",
        Error::PatternMismatch(_) => "pattern_mismatch",
        Error::Precondition(_) => "precondition",
        Error::NonFinite(_) => "non_finite",
        Error::SparsityRange { .. } => "sparsity_range",
        Error::Conditioning(_) => "conditioning",
        Error::WitnessSelfCheck(_) => "witness_self_check",
        Error::Internal(_) => "internal",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("AFFPR_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage problems on exit code 2, --help/--version on 0.
            e.exit();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(CliError::Domain(e)) => {
            let payload = ErrorJson {
                error: "domain",
                kind: error_kind(&e),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&payload).expect("error json"));
            ExitCode::from(1)
        }
        Err(CliError::Format(message)) => {
            let payload = ErrorJson {
                error: "format",
                kind: "format",
                message,
            };
            eprintln!("{}", serde_json::to_string(&payload).expect("error json"));
            ExitCode::from(2)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn read_ensemble(path: &Path) -> Result<MeasurementEnsemble, CliError> {
    // Parse the raw shape first so malformed ensembles surface as domain
    // findings rather than opaque JSON errors.
    let raw: RawEnsemble = read_json(path)?;
    Ok(raw.build()?)
}

fn emit<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_field(name: &str) -> Result<ScalarField, CliError> {
    match name {
        "real" => Ok(ScalarField::Real),
        "complex" => Ok(ScalarField::Complex),
        other => Err(CliError::Format(format!(
            "unknown field {other:?}; expected real or complex"
        ))),
    }
}

#[derive(Deserialize)]
struct MeasureInput {
    ensemble: MeasurementEnsemble,
    signal: Signal,
}

#[derive(Deserialize)]
struct RecoverInput {
    ensemble: MeasurementEnsemble,
    magnitudes: Vec<f64>,
    #[serde(default)]
    config: Option<GaussNewtonConfig>,
}

#[derive(Serialize)]
struct ViolationsJson {
    violations: Vec<Violation>,
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Validate { input } => {
            let raw: RawEnsemble = read_json(&input)?;
            let violations = validate_ensemble(&raw);
            let clean = violations.is_empty();
            emit(&None, &ViolationsJson { violations })?;
            Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Certify {
            input,
            tol,
            rational,
            out,
        } => {
            let e = read_ensemble(&input)?;
            let tol = RankTolerance::new(tol)?;
            let structured = certify_structured(&e, tol);
            let verdict = if structured.is_retrievable() {
                structured
            } else {
                match e.field() {
                    ScalarField::Real => {
                        if rational {
                            certify_real_exact_with(&e, RankDecisions::ExactRational)?
                        } else {
                            certify_real_exact(&e, tol)?
                        }
                    }
                    // No exact complex certificate exists; the falsify
                    // subcommand is the complex search path.
                    ScalarField::Complex => structured,
                }
            };
            log::info!("certify: {verdict:?}");
            emit(&out, &verdict)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Falsify {
            input,
            restarts,
            iters,
            seed,
            out,
        } => {
            let e = read_ensemble(&input)?;
            let verdict = match e.field() {
                ScalarField::Complex => {
                    let cfg = FalsifyConfig {
                        restarts,
                        max_iters: iters,
                        seed,
                        ..FalsifyConfig::default()
                    };
                    falsify_complex(&e, &cfg)?
                }
                ScalarField::Real => {
                    let found = brute_force_collision_search(
                        &e,
                        &CollisionSearchConfig::Random {
                            starts: restarts,
                            iters,
                            seed,
                        },
                    )?;
                    match found {
                        Some(pair) => {
                            let half = num_complex::Complex64::new(2.0, 0.0);
                            let u = (pair.x.entries() - pair.y.entries()) / half;
                            let v = (pair.x.entries() + pair.y.entries()) / half;
                            let uv = UVWitness::new_normalized(ScalarField::Real, u, v)?;
                            let witness = uv.witness_pair();
                            witness.verify(&e)?;
                            Verdict::NotRetrievable { witness, uv }
                        }
                        None => Verdict::Inconclusive(SearchStats {
                            reason: InconclusiveReason::NoWitnessFound,
                            restarts,
                            best_residual: None,
                        }),
                    }
                }
            };
            emit(&out, &verdict)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Construct {
            kind,
            d,
            m,
            field,
            seed,
            input,
            out,
        } => {
            let ensemble = match kind.as_str() {
                "real-minimal" => {
                    // Parse the raw shape first so invariant violations (an
                    // equal shift pair) surface as domain errors.
                    let spec = match &input {
                        Some(path) => {
                            #[derive(Deserialize)]
                            struct Raw {
                                pairs: Vec<(f64, f64)>,
                            }
                            let raw: Raw = read_json(path)?;
                            ShiftPairSpec::new(raw.pairs)?
                        }
                        None => ShiftPairSpec::default_for_dimension(require(d, "--d")?),
                    };
                    build_real_minimal(spec.len(), &spec)?
                }
                "complex-minimal" => {
                    let spec = match &input {
                        Some(path) => {
                            #[derive(Deserialize)]
                            struct Raw {
                                triples: Vec<[[f64; 2]; 3]>,
                            }
                            let raw: Raw = read_json(path)?;
                            let triples = raw
                                .triples
                                .into_iter()
                                .map(|t| {
                                    [
                                        num_complex::Complex64::new(t[0][0], t[0][1]),
                                        num_complex::Complex64::new(t[1][0], t[1][1]),
                                        num_complex::Complex64::new(t[2][0], t[2][1]),
                                    ]
                                })
                                .collect();
                            ShiftTripleSpec::new(triples)?
                        }
                        None => ShiftTripleSpec::default_for_dimension(require(d, "--d")?),
                    };
                    let b = nalgebra::DMatrix::identity(spec.len(), spec.len());
                    build_complex_minimal(&b, &spec)?
                }
                "generic" => {
                    let field = parse_field(&field.unwrap_or_else(|| "real".into()))?;
                    sample_generic(field, require(m, "--m")?, require(d, "--d")?, seed)?
                }
                other => {
                    return Err(CliError::Format(format!(
                        "unknown construct kind {other:?}; expected real-minimal, complex-minimal, or generic"
                    )))
                }
            };
            emit(&out, &ensemble)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Measure { input, out } => {
            let payload: MeasureInput = read_json(&input)?;
            let mags = payload.ensemble.measure(&payload.signal)?;
            emit(&out, &mags)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Recover {
            input,
            restarts,
            seed,
            out,
        } => {
            let payload: RecoverInput = read_json(&input)?;
            let mags = MagnitudeVector::from_slice(&payload.magnitudes)?;
            let mut cfg = payload.config.unwrap_or_default();
            if let Some(r) = restarts {
                cfg.restarts = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = recover_auto(&payload.ensemble, &mags, &cfg)?;
            emit(&out, &result)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Perturb {
            kind,
            d,
            delta,
            input,
            out,
        } => {
            let report = match kind.as_str() {
                "real" => {
                    let e = match &input {
                        Some(path) => read_ensemble(path)?,
                        None => build_real_minimal(
                            require(d, "--d")?,
                            &ShiftPairSpec::default_for_dimension(require(d, "--d")?),
                        )?,
                    };
                    check_dim(&e, d)?;
                    perturb_real(&e, delta)?
                }
                "complex" => {
                    let e = match &input {
                        Some(path) => read_ensemble(path)?,
                        None => {
                            let dd = require(d, "--d")?;
                            build_complex_minimal(
                                &nalgebra::DMatrix::identity(dd, dd),
                                &ShiftTripleSpec::default_for_dimension(dd),
                            )?
                        }
                    };
                    check_dim(&e, d)?;
                    perturb_complex(&e, delta)?
                }
                other => {
                    return Err(CliError::Format(format!(
                        "unknown perturb kind {other:?}; expected real or complex"
                    )))
                }
            };
            emit(&out, &report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SparseCertify {
            input,
            s,
            tol,
            restarts,
            seed,
            out,
        } => {
            let e = read_ensemble(&input)?;
            let verdict = match e.field() {
                ScalarField::Real => certify_sparse_real_exact(&e, s, RankTolerance::new(tol)?)?,
                ScalarField::Complex => {
                    let cfg = FalsifyConfig {
                        restarts,
                        seed,
                        ..FalsifyConfig::default()
                    };
                    falsify_sparse_complex(&e, s, &cfg)?
                }
            };
            emit(&out, &verdict)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability {
            input,
            radius,
            pairs,
            seed,
            out,
            csv,
        } => {
            if let (Some(o), Some(c)) = (&out, &csv) {
                if o == c {
                    return Err(CliError::Format(
                        "--out and --csv must be distinct paths".into(),
                    ));
                }
            }
            let e = read_ensemble(&input)?;
            let est = estimate_lipschitz(&e, radius, pairs, seed)?;
            if let Some(csv_path) = csv {
                let sampled = sample_ball_pairs(e.field(), e.d(), radius, pairs, seed);
                let mut text = String::from("# affinepr-stability-ratios v1\n");
                text.push_str("pair,distance,c1_ratio,C1_ratio,c2_ratio,C2_ratio\n");
                for (i, (x, y)) in sampled.iter().enumerate() {
                    let r = lipschitz_ratios(&e, x, y)?;
                    text.push_str(&format!(
                        "{i},{},{},{},{},{}\n",
                        x.distance(y),
                        r.c1,
                        r.big_c1,
                        r.c2,
                        r.big_c2
                    ));
                }
                std::fs::write(csv_path, text)?;
            }
            emit(&out, &est)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment {
            kind,
            field,
            d,
            m,
            s,
            trials,
            seed,
            jobs,
            restarts,
            radius,
            pairs,
            delta,
            out,
        } => {
            let spec = ExperimentSpec {
                kind,
                field: parse_field(&field)?,
                d,
                m: m.unwrap_or(SpanSpec::single(0)),
                s,
                trials,
                seed,
                jobs,
                restarts,
                radius,
                pairs,
                delta,
            };
            let records = run_experiment(&spec)?;
            write_csv_atomic(&out, &spec, &records)?;
            log::info!("experiment: wrote {} rows to {}", records.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Format(format!("{flag} is required for this invocation")))
}

fn check_dim(e: &MeasurementEnsemble, d: Option<usize>) -> Result<(), CliError> {
    if let Some(d) = d {
        if e.d() != d {
            return Err(CliError::Domain(Error::DimensionMismatch(format!(
                "--d {d} does not match the ensemble dimension {}",
                e.d()
            ))));
        }
    }
    Ok(())
}
