//! `ancap`: analytic capacity of compact planar sets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use ancap::experiments::{
    self, LevelSetConfig, RandomDisksConfig, SolverKnobs, SweepConfig, SweepExperiment, TableId,
};
use ancap::fastsum::{FastSumMode, FastSumOptions};
use ancap::geometry::{cantor_slits, CompactSetSpec};
use ancap::krylov::GmresOptions;
use ancap::reference;
use ancap::slitmap::{self, SlitCapacityOptions};
use ancap::szego::{self, CapacityOptions};
use ancap::Error;

#[derive(Parser)]
#[command(name = "ancap", version, about = "Analytic capacity of compact planar sets")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct SolverArgs {
    /// Fast-sum backend.
    #[arg(long = "fast-sum", default_value = "auto")]
    fast_sum: FastSumMode,

    /// Fast-sum accuracy target.
    #[arg(long = "fmm-tol", default_value_t = 0.5e-15)]
    fmm_tol: f64,

    /// GMRES relative-residual tolerance.
    #[arg(long = "gmres-tol", default_value_t = 1e-14)]
    gmres_tol: f64,

    /// GMRES iteration cap (no restart).
    #[arg(long = "gmres-maxit", default_value_t = 100)]
    gmres_maxit: usize,
}

impl SolverArgs {
    fn knobs(&self) -> SolverKnobs {
        SolverKnobs {
            fastsum: FastSumOptions {
                mode: self.fast_sum,
                tol: self.fmm_tol,
            },
            gmres: GmresOptions {
                tol: self.gmres_tol,
                max_iters: self.gmres_maxit,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Capacity of a compact set bounded by Jordan curves.
    Capacity {
        /// Geometry JSON file.
        #[arg(long)]
        geometry: PathBuf,

        /// Nodes per boundary component (default: geometry-dependent).
        #[arg(long)]
        n: Option<usize>,

        /// Grading exponent for cornered components.
        #[arg(long = "grading-p", default_value_t = 3)]
        grading_p: u32,

        #[command(flatten)]
        solver: SolverArgs,

        /// Also write the result JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Capacity of a rectilinear slit set via the preimage iteration.
    SlitCapacity {
        /// Geometry JSON file containing only slit components.
        #[arg(long)]
        geometry: PathBuf,

        /// Nodes per boundary component.
        #[arg(long, default_value_t = 512)]
        n: usize,

        /// Ellipse axis ratio: a number in (0, 1] or `auto`.
        #[arg(long, default_value = "auto")]
        ratio: String,

        /// Stopping tolerance of the preimage iteration.
        #[arg(long, default_value_t = 1e-13)]
        eps: f64,

        /// Preimage iteration cap.
        #[arg(long = "max-iter", default_value_t = 100)]
        max_iter: usize,

        /// Write per-iteration defects as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,

        #[command(flatten)]
        solver: SolverArgs,

        /// Also write the result JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Closed-form reference capacities.
    Reference {
        /// One of: disk, square, segment, two-disks, cantor, real-union.
        #[arg(long = "case")]
        case: String,

        /// Disk radius or two-disk radius.
        #[arg(long)]
        r: Option<f64>,

        /// Two-disk half center distance.
        #[arg(long)]
        c: Option<f64>,

        /// Square side length.
        #[arg(long)]
        side: Option<f64>,

        /// Segment endpoints.
        #[arg(long)]
        ax: Option<f64>,
        #[arg(long)]
        ay: Option<f64>,
        #[arg(long)]
        bx: Option<f64>,
        #[arg(long)]
        by: Option<f64>,

        /// Cantor level.
        #[arg(long)]
        k: Option<u32>,

        /// Flat list `a1,b1,a2,b2,...` of real interval endpoints.
        #[arg(long)]
        intervals: Option<String>,
    },

    /// Reproduce a reference table with verdicts.
    Table {
        /// table1 | table2 | table5 | example36.
        #[arg(long)]
        id: TableId,

        /// Node-count override applied to every row.
        #[arg(long)]
        n: Option<usize>,

        #[command(flatten)]
        solver: SolverArgs,

        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Parameter sweeps of the example families.
    Sweep {
        /// squares-3cases | disks-3cases | two-slits | four-slits | ring-disks.
        #[arg(long)]
        experiment: SweepExperiment,

        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        step: Option<f64>,

        /// Nodes per boundary component.
        #[arg(long)]
        n: Option<usize>,

        /// Ring size (ring-disks only).
        #[arg(long)]
        m: Option<usize>,

        #[command(flatten)]
        solver: SolverArgs,

        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Random-disk subadditivity trials.
    RandomDisks {
        #[arg(long, default_value_t = 50)]
        trials: usize,

        #[arg(long, default_value_t = 1)]
        seed: u64,

        /// Disks per trial.
        #[arg(long, default_value_t = 100)]
        m: usize,

        /// Nodes per boundary component.
        #[arg(long, default_value_t = 512)]
        n: usize,

        #[command(flatten)]
        solver: SolverArgs,

        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Masked grid of gamma(E_m U F) for a moving unit disk F.
    LevelSet {
        /// Number of fixed ring disks (1..=4).
        #[arg(long, default_value_t = 1)]
        m: usize,

        #[arg(long, default_value_t = -10.0)]
        xmin: f64,
        #[arg(long, default_value_t = 10.0)]
        xmax: f64,
        #[arg(long, default_value_t = -10.0)]
        ymin: f64,
        #[arg(long, default_value_t = 10.0)]
        ymax: f64,

        /// Grid points per axis.
        #[arg(long, default_value_t = 11)]
        resolution: usize,

        /// Nodes per boundary component.
        #[arg(long, default_value_t = 1024)]
        n: usize,

        #[command(flatten)]
        solver: SolverArgs,

        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("ancap: could not configure {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ancap: {e}");
            let code = match e {
                Error::InvalidParameter(_)
                | Error::InvalidGeometry(_)
                | Error::ResourceLimit(_)
                | Error::Json(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn emit_csv(csv: &experiments::CsvDocument, out: Option<PathBuf>) -> ancap::Result<()> {
    let text = csv.render();
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(command: Command) -> ancap::Result<()> {
    match command {
        Command::Capacity {
            geometry,
            n,
            grading_p,
            solver,
            out,
        } => {
            let spec = CompactSetSpec::from_json_file(&geometry)?;
            if spec.is_slit_set() {
                return Err(Error::InvalidParameter(
                    "geometry contains slits; use the slit-capacity subcommand".into(),
                ));
            }
            let knobs = solver.knobs();
            let opts = CapacityOptions {
                n,
                grading: ancap::discretize::GradingOptions { p: grading_p },
                fastsum: knobs.fastsum,
                gmres: knobs.gmres,
            };
            let result = szego::compute_capacity(&spec, &opts)?;
            let json = serde_json::to_string_pretty(&result)?;
            println!("{json}");
            if let Some(path) = out {
                std::fs::write(path, json)?;
            }
            Ok(())
        }

        Command::SlitCapacity {
            geometry,
            n,
            ratio,
            eps,
            max_iter,
            trace,
            solver,
            out,
        } => {
            let spec = CompactSetSpec::from_json_file(&geometry)?;
            let slits = spec.slits()?;
            let ratio = match ratio.as_str() {
                "auto" => None,
                other => Some(other.parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("ratio must be `auto` or a number, got {other:?}"))
                })?),
            };
            let knobs = solver.knobs();
            let opts = SlitCapacityOptions {
                n,
                ratio,
                eps,
                max_iters: max_iter,
                fastsum: knobs.fastsum,
                gmres: knobs.gmres,
            };
            let output = slitmap::capacity_of_slits(slits, &opts)?;
            if let Some(path) = trace {
                let mut csv = experiments::CsvDocument::new(
                    format!(
                        "ancap {} experiment=slit-trace seed=none flags=n={n},ratio={},eps={eps}",
                        ancap::VERSION,
                        output.ratio_used
                    ),
                    &["iteration", "defect"],
                );
                for rec in &output.trace {
                    csv.push_row(vec![rec.iteration.to_string(), format!("{:.16e}", rec.defect)]);
                }
                std::fs::write(path, csv.render())?;
            }
            let json = serde_json::to_string_pretty(&output.result)?;
            println!("{json}");
            if let Some(path) = out {
                std::fs::write(path, json)?;
            }
            Ok(())
        }

        Command::Reference {
            case,
            r,
            c,
            side,
            ax,
            ay,
            bx,
            by,
            k,
            intervals,
        } => {
            let missing = |what: &str| Error::InvalidParameter(format!("missing --{what}"));
            let value = match case.as_str() {
                "disk" => reference::exact_disk(r.ok_or_else(|| missing("r"))?)?,
                "square" => reference::exact_square(side.ok_or_else(|| missing("side"))?)?,
                "segment" => reference::exact_segment(
                    Complex64::new(ax.ok_or_else(|| missing("ax"))?, ay.unwrap_or(0.0)),
                    Complex64::new(bx.ok_or_else(|| missing("bx"))?, by.unwrap_or(0.0)),
                )?,
                "two-disks" => reference::exact_two_disks(
                    c.ok_or_else(|| missing("c"))?,
                    r.ok_or_else(|| missing("r"))?,
                )?,
                "cantor" => {
                    let k = k.ok_or_else(|| missing("k"))?;
                    let slits = cantor_slits(k)?;
                    let intervals: Vec<(f64, f64)> = slits
                        .slits()
                        .iter()
                        .map(|s| (s.a.re, s.b.re))
                        .collect();
                    reference::exact_real_union(&intervals)?
                }
                "real-union" => {
                    let text = intervals.ok_or_else(|| missing("intervals"))?;
                    let nums: Vec<f64> = text
                        .split(',')
                        .map(|t| {
                            t.trim().parse::<f64>().map_err(|_| {
                                Error::InvalidParameter(format!("bad interval endpoint {t:?}"))
                            })
                        })
                        .collect::<ancap::Result<_>>()?;
                    if nums.len() % 2 != 0 {
                        return Err(Error::InvalidParameter(
                            "intervals need an even number of endpoints".into(),
                        ));
                    }
                    let pairs: Vec<(f64, f64)> =
                        nums.chunks(2).map(|ab| (ab[0], ab[1])).collect();
                    reference::exact_real_union(&pairs)?
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown reference case {other:?}"
                    )))
                }
            };
            println!(
                "{}",
                serde_json::json!({
                    "value": value.value,
                    "formula": value.formula,
                    "inputs": value.inputs,
                })
            );
            Ok(())
        }

        Command::Table { id, n, solver, out } => {
            let report = experiments::run_table(id, &solver.knobs(), n)?;
            emit_csv(&report.csv, out)?;
            let failures = report.rows.iter().filter(|r| !r.pass).count();
            if failures > 0 {
                eprintln!(
                    "ancap: {} of {} table rows outside tolerance",
                    failures,
                    report.rows.len()
                );
            }
            Ok(())
        }

        Command::Sweep {
            experiment,
            from,
            to,
            step,
            n,
            m,
            solver,
            out,
        } => {
            let mut config = SweepConfig::defaults(experiment);
            if let Some(v) = from {
                config.from = v;
            }
            if let Some(v) = to {
                config.to = v;
            }
            if let Some(v) = step {
                if v <= 0.0 {
                    return Err(Error::InvalidParameter("step must be positive".into()));
                }
                config.step = v;
            }
            if let Some(v) = n {
                config.n = v;
            }
            if let Some(v) = m {
                config.m = v;
            }
            config.knobs = solver.knobs();
            let (_, csv) = experiments::run_sweep(experiment, &config)?;
            emit_csv(&csv, out)
        }

        Command::RandomDisks {
            trials,
            seed,
            m,
            n,
            solver,
            out,
        } => {
            let config = RandomDisksConfig {
                trials,
                seed,
                m,
                n,
                knobs: solver.knobs(),
            };
            let (_, csv) = experiments::run_random_disks(&config)?;
            emit_csv(&csv, out)
        }

        Command::LevelSet {
            m,
            xmin,
            xmax,
            ymin,
            ymax,
            resolution,
            n,
            solver,
            out,
        } => {
            if !(1..=4).contains(&m) {
                return Err(Error::InvalidParameter(
                    "level-set supports m in 1..=4".into(),
                ));
            }
            let config = LevelSetConfig {
                m,
                x_min: xmin,
                x_max: xmax,
                y_min: ymin,
                y_max: ymax,
                resolution,
                n,
                knobs: solver.knobs(),
            };
            let (_, csv) = experiments::run_level_set(&config)?;
            emit_csv(&csv, out)
        }
    }
}
