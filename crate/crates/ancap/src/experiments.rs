//! Reproducible experiment harness behind the `ancap` CLI.
//!
//! Every runner returns plain row structs plus a rendered CSV document with
//! a metadata comment line (version, seed, flags), a header row, and one
//! data row per case. Capacities are printed with 17 significant digits.
//! Given the same seed and flags the output is byte-identical.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastsum::FastSumOptions;
use crate::geometry::{cantor_slits, BoundaryCurve, CompactSetSpec, SlitSet};
use crate::krylov::GmresOptions;
use crate::reference;
use crate::slitmap::{self, SlitCapacityOptions};
use crate::szego::{self, CapacityOptions};

/// A rendered CSV document.
#[derive(Debug, Clone)]
pub struct CsvDocument {
    /// Comment line with version, seed and flags.
    pub meta: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvDocument {
    pub fn new(meta: impl Into<String>, header: &[&str]) -> Self {
        CsvDocument {
            meta: meta.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.meta);
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// 17 significant digits, '.' decimal separator.
pub fn fmt_cap(x: f64) -> String {
    format!("{x:.16e}")
}

fn meta_line(detail: &str) -> String {
    format!("ancap {} {detail}", crate::VERSION)
}

/// Shared solver knobs for the experiment runners.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolverKnobs {
    pub fastsum: FastSumOptions,
    pub gmres: GmresOptions,
}

impl SolverKnobs {
    fn capacity_options(&self, n: usize) -> CapacityOptions {
        CapacityOptions {
            n: Some(n),
            fastsum: self.fastsum,
            gmres: self.gmres,
            ..Default::default()
        }
    }

    fn slit_options(&self, n: usize) -> SlitCapacityOptions {
        SlitCapacityOptions {
            n,
            fastsum: self.fastsum,
            gmres: self.gmres,
            ..Default::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Geometry builders shared by tables and sweeps.
// ---------------------------------------------------------------------------

/// Two disks `|z - c| <= r` and `|z + c| <= r`.
pub fn two_disks_spec(c: f64, r: f64) -> Result<CompactSetSpec> {
    CompactSetSpec::from_curves(vec![
        BoundaryCurve::circle(Complex64::new(-c, 0.0), r)?,
        BoundaryCurve::circle(Complex64::new(c, 0.0), r)?,
    ])
}

/// The square with corners `1, -i, -1, i`.
pub fn tilted_square_spec() -> Result<CompactSetSpec> {
    CompactSetSpec::from_curves(vec![BoundaryCurve::polygon(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, -1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
    ])?])
}

/// `m` unit disks with centers `radius * e^{2 pi i k / m}`; a single unit
/// disk at the origin for `m = 1`.
pub fn ring_disks_spec(m: usize, radius: f64) -> Result<CompactSetSpec> {
    if m == 1 {
        return CompactSetSpec::from_curves(vec![BoundaryCurve::circle(
            Complex64::new(0.0, 0.0),
            1.0,
        )?]);
    }
    let curves = (1..=m)
        .map(|k| {
            let center = Complex64::from_polar(radius, 2.0 * PI * k as f64 / m as f64);
            BoundaryCurve::circle(center, 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    CompactSetSpec::from_curves(curves)
}

fn square_curve(center: Complex64, side: f64) -> Result<BoundaryCurve> {
    let h = side / 2.0;
    BoundaryCurve::polygon(vec![
        center + Complex64::new(h, h),
        center + Complex64::new(h, -h),
        center + Complex64::new(-h, -h),
        center + Complex64::new(-h, h),
    ])
}

/// Case index of the separating-squares and separating-disks families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCase {
    /// All four parts move apart.
    All,
    /// The lower half stays, the two upper parts move.
    Upper,
    /// Three parts stay, one corner part moves.
    One,
}

impl SplitCase {
    pub const ALL: [SplitCase; 3] = [SplitCase::All, SplitCase::Upper, SplitCase::One];

    pub fn label(&self) -> &'static str {
        match self {
            SplitCase::All => "i",
            SplitCase::Upper => "ii",
            SplitCase::One => "iii",
        }
    }
}

/// Sub-squares of `[-2,2]^2` (side 2, centers `+-1 +- i`) separated by
/// `eps`: moving squares go to `(1+eps)(+-1 +- i)`; squares that stay
/// adjacent are merged into a single polygon.
pub fn squares_case_spec(case: SplitCase, eps: f64) -> Result<CompactSetSpec> {
    if eps <= 0.0 {
        return Err(Error::InvalidParameter(
            "separation parameter must be positive".into(),
        ));
    }
    let moved = |x: f64, y: f64| square_curve(Complex64::new(x, y) * (1.0 + eps), 2.0);
    let curves = match case {
        SplitCase::All => vec![
            moved(1.0, 1.0)?,
            moved(-1.0, 1.0)?,
            moved(-1.0, -1.0)?,
            moved(1.0, -1.0)?,
        ],
        SplitCase::Upper => vec![
            // The two lower sub-squares form the rectangle [-2,2] x [-2,0].
            BoundaryCurve::polygon(vec![
                Complex64::new(2.0, 0.0),
                Complex64::new(2.0, -2.0),
                Complex64::new(-2.0, -2.0),
                Complex64::new(-2.0, 0.0),
            ])?,
            moved(1.0, 1.0)?,
            moved(-1.0, 1.0)?,
        ],
        SplitCase::One => vec![
            // Three fixed sub-squares form an L-shaped hexagon.
            BoundaryCurve::polygon(vec![
                Complex64::new(-2.0, 2.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(2.0, -2.0),
                Complex64::new(-2.0, -2.0),
            ])?,
            moved(1.0, 1.0)?,
        ],
    };
    CompactSetSpec::from_curves(curves)
}

/// Inset applied to the radius of disks that stay mutually tangent in the
/// separating-disks family, so the components are honestly disjoint.
pub const DISK_CASE_INSET: f64 = 0.01;

/// Unit disks at `+-1 +- i` separated by `eps`, in the same three cases.
///
/// Disks that stay fixed in cases `Upper`/`One` are tangent to each other
/// in the source configuration; their radii are inset by
/// [`DISK_CASE_INSET`] to keep the components disjoint.
pub fn disks_case_spec(case: SplitCase, eps: f64) -> Result<(CompactSetSpec, f64)> {
    if eps <= 0.0 {
        return Err(Error::InvalidParameter(
            "separation parameter must be positive".into(),
        ));
    }
    let moved = |x: f64, y: f64| {
        BoundaryCurve::circle(Complex64::new(x, y) * (1.0 + eps), 1.0)
    };
    let fixed = |x: f64, y: f64| {
        BoundaryCurve::circle(Complex64::new(x, y), 1.0 - DISK_CASE_INSET)
    };
    let (curves, radius_sum) = match case {
        SplitCase::All => (
            vec![
                moved(1.0, 1.0)?,
                moved(-1.0, 1.0)?,
                moved(-1.0, -1.0)?,
                moved(1.0, -1.0)?,
            ],
            4.0,
        ),
        SplitCase::Upper => (
            vec![
                fixed(1.0, -1.0)?,
                fixed(-1.0, -1.0)?,
                moved(1.0, 1.0)?,
                moved(-1.0, 1.0)?,
            ],
            2.0 + 2.0 * (1.0 - DISK_CASE_INSET),
        ),
        SplitCase::One => (
            vec![
                fixed(-1.0, 1.0)?,
                fixed(-1.0, -1.0)?,
                fixed(1.0, -1.0)?,
                moved(1.0, 1.0)?,
            ],
            1.0 + 3.0 * (1.0 - DISK_CASE_INSET),
        ),
    };
    Ok((CompactSetSpec::from_curves(curves)?, radius_sum))
}

/// Two unit-length slits: `[0.1, 1.1]` fixed and a copy rotated by
/// `eps * pi`.
pub fn two_slit_set(eps: f64) -> Result<SlitSet> {
    let dir = Complex64::from_polar(1.0, eps * PI);
    SlitSet::new(vec![
        (Complex64::new(0.1, 0.0), Complex64::new(1.1, 0.0)),
        (0.1 * dir, 1.1 * dir),
    ])
}

/// Four slits of length `2 - 2 eps` along the sides of `[-1,1]^2`.
pub fn four_slit_set(eps: f64) -> Result<SlitSet> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "four-slit parameter must lie in (0, 1), got {eps}"
        )));
    }
    let a = 1.0 - eps;
    SlitSet::new(vec![
        (Complex64::new(-a, -1.0), Complex64::new(a, -1.0)),
        (Complex64::new(1.0, -a), Complex64::new(1.0, a)),
        (Complex64::new(a, 1.0), Complex64::new(-a, 1.0)),
        (Complex64::new(-1.0, a), Complex64::new(-1.0, -a)),
    ])
}

// ---------------------------------------------------------------------------
// Tables.
// ---------------------------------------------------------------------------

/// Identifiers of the built-in reference tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    Table1,
    Table2,
    Table5,
    Example36,
}

impl std::str::FromStr for TableId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table1" => Ok(TableId::Table1),
            "table2" => Ok(TableId::Table2),
            "table5" => Ok(TableId::Table5),
            "example36" => Ok(TableId::Example36),
            other => Err(format!(
                "unknown table {other:?} (table1|table2|table5|example36)"
            )),
        }
    }
}

/// One table cell: computed vs reference.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub case_id: String,
    pub n: usize,
    pub computed: Option<f64>,
    pub reference: f64,
    pub rel_error: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub seconds: f64,
    pub message: String,
}

/// A completed table run.
#[derive(Debug, Clone)]
pub struct TableReport {
    pub rows: Vec<TableRow>,
    pub csv: CsvDocument,
}

impl TableReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Nodes per component used for the Cantor table at level `k`.
pub fn table5_node_count(k: u32) -> usize {
    match k {
        0..=4 => 128,
        5..=6 => 64,
        7..=8 => 32,
        _ => 16,
    }
}

/// Verdict tolerance for the Cantor table at level `k`.
pub fn table5_tolerance(k: u32) -> f64 {
    if k <= 8 {
        1e-9
    } else {
        1e-7
    }
}

/// The populated `(r, c)` cells of the two-disk error table.
pub const TABLE1_CELLS: [(f64, f64); 10] = [
    (0.1, 0.5),
    (0.1, 1.0),
    (0.1, 2.0),
    (0.1, 3.0),
    (0.5, 1.0),
    (0.5, 2.0),
    (0.5, 3.0),
    (1.0, 2.0),
    (1.0, 3.0),
    (2.0, 3.0),
];

/// Square-table verdict tolerances for `n = 2^8 .. 2^15`.
pub const TABLE2_TOLERANCES: [f64; 8] = [1e-6, 1e-7, 5e-9, 5e-10, 5e-11, 1e-11, 5e-12, 1e-12];

/// Reference capacities of the ring-disk configurations `m = 1..4`.
pub const EXAMPLE36_VALUES: [f64; 4] = [
    1.0,
    1.980_002_061_428_44,
    2.884_204_043_088_15,
    3.670_129_556_444_39,
];

fn run_case(
    case_id: String,
    n: usize,
    reference: f64,
    tolerance: f64,
    compute: impl Fn() -> Result<f64>,
) -> TableRow {
    let start = std::time::Instant::now();
    match compute() {
        Ok(gamma) => {
            let rel = (gamma - reference).abs() / reference.abs().max(f64::MIN_POSITIVE);
            TableRow {
                case_id,
                n,
                computed: Some(gamma),
                reference,
                rel_error: Some(rel),
                tolerance,
                pass: rel <= tolerance,
                seconds: start.elapsed().as_secs_f64(),
                message: String::new(),
            }
        }
        Err(e) => TableRow {
            case_id,
            n,
            computed: None,
            reference,
            rel_error: None,
            tolerance,
            pass: false,
            seconds: start.elapsed().as_secs_f64(),
            message: e.to_string(),
        },
    }
}

/// Runs one of the built-in tables.
pub fn run_table(id: TableId, knobs: &SolverKnobs, n_override: Option<usize>) -> Result<TableReport> {
    let rows: Vec<TableRow> = match id {
        TableId::Table1 => {
            let n = n_override.unwrap_or(1 << 9);
            TABLE1_CELLS
                .par_iter()
                .map(|&(r, c)| {
                    let exact = reference::exact_two_disks(c, r)
                        .map(|v| v.value)
                        .unwrap_or(f64::NAN);
                    run_case(format!("r={r},c={c}"), n, exact, 1e-12, || {
                        Ok(szego::compute_capacity(
                            &two_disks_spec(c, r)?,
                            &knobs.capacity_options(n),
                        )?
                        .gamma)
                    })
                })
                .collect()
        }
        TableId::Table2 => {
            let exact = reference::exact_square(2.0_f64.sqrt())?.value;
            (8..=15u32)
                .zip(TABLE2_TOLERANCES)
                .map(|(k, tol)| {
                    let n = n_override.unwrap_or(1 << k);
                    run_case(format!("n=2^{k}"), n, exact, tol, || {
                        Ok(szego::compute_capacity(
                            &tilted_square_spec()?,
                            &knobs.capacity_options(n),
                        )?
                        .gamma)
                    })
                })
                .collect()
        }
        TableId::Table5 => (1..=10u32)
            .map(|k| {
                let n = n_override.unwrap_or_else(|| table5_node_count(k));
                let exact = 0.5 * (2.0f64 / 3.0).powi(k as i32);
                run_case(format!("k={k}"), n, exact, table5_tolerance(k), || {
                    let slits = cantor_slits(k)?;
                    Ok(slitmap::capacity_of_slits(&slits, &knobs.slit_options(n))?
                        .result
                        .gamma)
                })
            })
            .collect(),
        TableId::Example36 => (1..=4usize)
            .map(|m| {
                let n = n_override.unwrap_or(1 << 10);
                let exact = EXAMPLE36_VALUES[m - 1];
                // Absolute 1e-10 tolerance; values are O(1), so express it as
                // a relative tolerance against the reference.
                let tol = 1e-10 / exact;
                run_case(format!("m={m}"), n, exact, tol, || {
                    Ok(szego::compute_capacity(
                        &ring_disks_spec(m, 5.0)?,
                        &knobs.capacity_options(n),
                    )?
                    .gamma)
                })
            })
            .collect(),
    };

    let name = match id {
        TableId::Table1 => "table1",
        TableId::Table2 => "table2",
        TableId::Table5 => "table5",
        TableId::Example36 => "example36",
    };
    let mut csv = CsvDocument::new(
        meta_line(&format!("table={name} seed=none flags=default")),
        &[
            "case", "n", "computed", "reference", "rel_error", "tolerance", "pass", "message",
        ],
    );
    for row in &rows {
        csv.push_row(vec![
            row.case_id.clone(),
            row.n.to_string(),
            row.computed.map(fmt_cap).unwrap_or_default(),
            fmt_cap(row.reference),
            row.rel_error.map(|e| format!("{e:.3e}")).unwrap_or_default(),
            format!("{:.1e}", row.tolerance),
            row.pass.to_string(),
            row.message.clone(),
        ]);
    }
    Ok(TableReport { rows, csv })
}

// ---------------------------------------------------------------------------
// Sweeps.
// ---------------------------------------------------------------------------

/// The parametrized experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepExperiment {
    Squares3Cases,
    Disks3Cases,
    TwoSlits,
    FourSlits,
    RingDisks,
}

impl std::str::FromStr for SweepExperiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "squares-3cases" => Ok(SweepExperiment::Squares3Cases),
            "disks-3cases" => Ok(SweepExperiment::Disks3Cases),
            "two-slits" => Ok(SweepExperiment::TwoSlits),
            "four-slits" => Ok(SweepExperiment::FourSlits),
            "ring-disks" => Ok(SweepExperiment::RingDisks),
            other => Err(format!(
                "unknown experiment {other:?} (squares-3cases|disks-3cases|two-slits|four-slits|ring-disks)"
            )),
        }
    }
}

/// One sweep sample.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub case_label: String,
    pub parameter: f64,
    pub gamma: Option<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub seconds: f64,
    pub message: String,
}

/// Sweep controls: the grid plus solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub from: f64,
    pub to: f64,
    pub step: f64,
    pub n: usize,
    /// Ring size for the ring-disk sweep.
    pub m: usize,
    pub knobs: SolverKnobs,
}

impl SweepConfig {
    /// Default grid for an experiment.
    pub fn defaults(exp: SweepExperiment) -> Self {
        let (from, to, step, n, m) = match exp {
            SweepExperiment::Squares3Cases => (0.05, 1.0, 0.05, 384, 0),
            SweepExperiment::Disks3Cases => (0.05, 1.0, 0.05, 512, 0),
            SweepExperiment::TwoSlits => (0.05, 1.0, 0.05, 512, 0),
            SweepExperiment::FourSlits => (0.01, 0.99, 0.07, 512, 0),
            SweepExperiment::RingDisks => (1.5, 20.0, 0.5, 512, 4),
        };
        SweepConfig {
            from,
            to,
            step,
            n,
            m,
            knobs: SolverKnobs::default(),
        }
    }

    fn grid(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        let mut x = self.from;
        while x <= self.to + 1e-12 {
            pts.push(x.min(self.to));
            x += self.step;
        }
        pts
    }
}

fn sweep_point(
    label: &str,
    parameter: f64,
    lower: Option<f64>,
    upper: Option<f64>,
    compute: impl Fn() -> Result<f64>,
) -> SweepRecord {
    let start = std::time::Instant::now();
    match compute() {
        Ok(gamma) => SweepRecord {
            case_label: label.to_string(),
            parameter,
            gamma: Some(gamma),
            lower_bound: lower,
            upper_bound: upper,
            seconds: start.elapsed().as_secs_f64(),
            message: String::new(),
        },
        Err(e) => SweepRecord {
            case_label: label.to_string(),
            parameter,
            gamma: None,
            lower_bound: lower,
            upper_bound: upper,
            seconds: start.elapsed().as_secs_f64(),
            message: e.to_string(),
        },
    }
}

/// Runs a sweep and renders its CSV.
pub fn run_sweep(exp: SweepExperiment, config: &SweepConfig) -> Result<(Vec<SweepRecord>, CsvDocument)> {
    let grid = config.grid();
    let knobs = config.knobs;
    let records: Vec<SweepRecord> = match exp {
        SweepExperiment::Squares3Cases => {
            let gamma_e0 = reference::exact_square(4.0)?.value;
            SplitCase::ALL
                .par_iter()
                .flat_map(|&case| {
                    grid.par_iter().map(move |&eps| (case, eps)).collect::<Vec<_>>()
                })
                .map(|(case, eps)| {
                    sweep_point(case.label(), eps, Some(gamma_e0), Some(2.0 * gamma_e0), || {
                        Ok(szego::compute_capacity(
                            &squares_case_spec(case, eps)?,
                            &knobs.capacity_options(config.n),
                        )?
                        .gamma)
                    })
                })
                .collect()
        }
        SweepExperiment::Disks3Cases => SplitCase::ALL
            .par_iter()
            .flat_map(|&case| grid.par_iter().map(move |&eps| (case, eps)).collect::<Vec<_>>())
            .map(|(case, eps)| {
                sweep_point(case.label(), eps, None, Some(4.0), || {
                    let (spec, radius_sum) = disks_case_spec(case, eps)?;
                    let gamma = szego::compute_capacity(&spec, &knobs.capacity_options(config.n))?
                        .gamma;
                    debug_assert!(radius_sum <= 4.0);
                    Ok(gamma)
                })
            })
            .collect(),
        SweepExperiment::TwoSlits => grid
            .par_iter()
            .map(|&eps| {
                sweep_point("two-slits", eps, Some(0.25), Some(0.5), || {
                    Ok(
                        slitmap::capacity_of_slits(&two_slit_set(eps)?, &knobs.slit_options(config.n))?
                            .result
                            .gamma,
                    )
                })
            })
            .collect(),
        SweepExperiment::FourSlits => grid
            .par_iter()
            .map(|&eps| {
                sweep_point("four-slits", eps, None, Some(2.0 - 2.0 * eps), || {
                    Ok(
                        slitmap::capacity_of_slits(&four_slit_set(eps)?, &knobs.slit_options(config.n))?
                            .result
                            .gamma,
                    )
                })
            })
            .collect(),
        SweepExperiment::RingDisks => grid
            .par_iter()
            .map(|&r| {
                let m = config.m;
                sweep_point(&format!("m={m}"), r, None, Some(m as f64), || {
                    Ok(szego::compute_capacity(
                        &ring_disks_spec(m, r)?,
                        &knobs.capacity_options(config.n),
                    )?
                    .gamma)
                })
            })
            .collect(),
    };

    let name = match exp {
        SweepExperiment::Squares3Cases => "squares-3cases",
        SweepExperiment::Disks3Cases => "disks-3cases",
        SweepExperiment::TwoSlits => "two-slits",
        SweepExperiment::FourSlits => "four-slits",
        SweepExperiment::RingDisks => "ring-disks",
    };
    let mut csv = CsvDocument::new(
        meta_line(&format!(
            "sweep={name} seed=none flags=n={},from={},to={},step={}",
            config.n, config.from, config.to, config.step
        )),
        &["case", "parameter", "gamma", "lower_bound", "upper_bound", "message"],
    );
    for r in &records {
        csv.push_row(vec![
            r.case_label.clone(),
            format!("{}", r.parameter),
            r.gamma.map(fmt_cap).unwrap_or_default(),
            r.lower_bound.map(fmt_cap).unwrap_or_default(),
            r.upper_bound.map(fmt_cap).unwrap_or_default(),
            r.message.clone(),
        ]);
    }
    Ok((records, csv))
}

// ---------------------------------------------------------------------------
// Random-disk subadditivity trials.
// ---------------------------------------------------------------------------

/// Configuration of the random-disk study.
#[derive(Debug, Clone, Copy)]
pub struct RandomDisksConfig {
    pub trials: usize,
    pub seed: u64,
    /// Number of disks per trial.
    pub m: usize,
    /// Nodes per boundary component.
    pub n: usize,
    pub knobs: SolverKnobs,
}

impl Default for RandomDisksConfig {
    fn default() -> Self {
        RandomDisksConfig {
            trials: 50,
            seed: 1,
            m: 100,
            n: 1 << 9,
            knobs: SolverKnobs::default(),
        }
    }
}

/// Outcome of one random-disk trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub split: usize,
    pub gamma_e: Option<f64>,
    pub gamma_f: Option<f64>,
    pub gamma_union: Option<f64>,
    pub ratio: Option<f64>,
    pub seconds: f64,
    pub message: String,
}

/// Draws `m` non-overlapping disks with radii in `(0.2, 0.8)` and centers
/// in `[-10, 10]^2` (0.02 safety gap, up to 10^4 attempts per disk).
pub fn place_random_disks(rng: &mut ChaCha8Rng, m: usize) -> Result<Vec<(Complex64, f64)>> {
    let mut disks: Vec<(Complex64, f64)> = Vec::with_capacity(m);
    for k in 0..m {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::ResourceLimit(format!(
                    "could not place disk {k} after 10000 attempts"
                )));
            }
            let r = rng.gen_range(0.2..0.8);
            let c = Complex64::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            if disks
                .iter()
                .all(|&(cj, rj)| (c - cj).norm() >= r + rj + 0.02)
            {
                disks.push((c, r));
                break;
            }
        }
    }
    Ok(disks)
}

/// Runs the subadditivity trials; each trial draws its own RNG stream so
/// results are independent of execution order.
pub fn run_random_disks(config: &RandomDisksConfig) -> Result<(Vec<TrialRecord>, CsvDocument)> {
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_one_trial(config, trial))
        .collect();

    let mut csv = CsvDocument::new(
        meta_line(&format!(
            "experiment=random-disks seed={} flags=trials={},m={},n={}",
            config.seed, config.trials, config.m, config.n
        )),
        &[
            "trial", "split", "gamma_e", "gamma_f", "gamma_union", "ratio", "message",
        ],
    );
    for r in &records {
        csv.push_row(vec![
            r.trial.to_string(),
            r.split.to_string(),
            r.gamma_e.map(fmt_cap).unwrap_or_default(),
            r.gamma_f.map(fmt_cap).unwrap_or_default(),
            r.gamma_union.map(fmt_cap).unwrap_or_default(),
            r.ratio.map(fmt_cap).unwrap_or_default(),
            r.message.clone(),
        ]);
    }
    Ok((records, csv))
}

fn run_one_trial(config: &RandomDisksConfig, trial: usize) -> TrialRecord {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64 + 1);

    let failed = |split: usize, msg: String, start: std::time::Instant| TrialRecord {
        trial,
        split,
        gamma_e: None,
        gamma_f: None,
        gamma_union: None,
        ratio: None,
        seconds: start.elapsed().as_secs_f64(),
        message: msg,
    };

    let disks = match place_random_disks(&mut rng, config.m) {
        Ok(d) => d,
        Err(e) => return failed(0, format!("skipped: {e}"), start),
    };
    let split = rng.gen_range(1..config.m); // E gets disks 0..split
    let spec_of = |range: std::ops::Range<usize>| -> Result<CompactSetSpec> {
        CompactSetSpec::from_curves(
            disks[range]
                .iter()
                .map(|&(c, r)| BoundaryCurve::circle(c, r))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let opts = config.knobs.capacity_options(config.n);
    let compute = |range: std::ops::Range<usize>| -> Result<f64> {
        Ok(szego::compute_capacity(&spec_of(range)?, &opts)?.gamma)
    };
    match (|| -> Result<(f64, f64, f64)> {
        let ge = compute(0..split)?;
        let gf = compute(split..config.m)?;
        let gu = compute(0..config.m)?;
        Ok((ge, gf, gu))
    })() {
        Ok((ge, gf, gu)) => TrialRecord {
            trial,
            split,
            gamma_e: Some(ge),
            gamma_f: Some(gf),
            gamma_union: Some(gu),
            ratio: Some(gu / (ge + gf)),
            seconds: start.elapsed().as_secs_f64(),
            message: String::new(),
        },
        Err(e) => failed(split, e.to_string(), start),
    }
}

// ---------------------------------------------------------------------------
// Level sets of gamma(E_m U F).
// ---------------------------------------------------------------------------

/// Level-set grid configuration.
#[derive(Debug, Clone, Copy)]
pub struct LevelSetConfig {
    pub m: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Grid points per axis.
    pub resolution: usize,
    pub n: usize,
    pub knobs: SolverKnobs,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        LevelSetConfig {
            m: 1,
            x_min: -10.0,
            x_max: 10.0,
            y_min: -10.0,
            y_max: 10.0,
            resolution: 11,
            n: 1 << 10,
            knobs: SolverKnobs::default(),
        }
    }
}

/// One grid cell of the level-set study.
#[derive(Debug, Clone)]
pub struct LevelSetCell {
    pub x: f64,
    pub y: f64,
    pub gamma: Option<f64>,
    pub masked: bool,
    pub message: String,
}

/// Capacity of `E_m` together with a unit disk at `x + i y`; `None` when
/// the probe disk violates the 0.02 clearance.
pub fn level_set_value(
    m: usize,
    x: f64,
    y: f64,
    n: usize,
    knobs: &SolverKnobs,
) -> Result<Option<f64>> {
    let probe = Complex64::new(x, y);
    let centers: Vec<Complex64> = if m == 1 {
        vec![Complex64::new(0.0, 0.0)]
    } else {
        (1..=m)
            .map(|k| Complex64::from_polar(5.0, 2.0 * PI * k as f64 / m as f64))
            .collect()
    };
    if centers.iter().any(|c| (c - probe).norm() < 2.0 + 0.02) {
        return Ok(None);
    }
    let mut curves = ring_disks_spec(m, 5.0)?.curves()?.to_vec();
    curves.push(BoundaryCurve::circle(probe, 1.0)?);
    let spec = CompactSetSpec::from_curves(curves)?;
    Ok(Some(
        szego::compute_capacity(&spec, &knobs.capacity_options(n))?.gamma,
    ))
}

/// Computes the masked grid of `u(x, y) = gamma(E_m U F)`.
pub fn run_level_set(config: &LevelSetConfig) -> Result<(Vec<LevelSetCell>, CsvDocument)> {
    if config.resolution < 2 {
        return Err(Error::InvalidParameter(
            "level-set resolution must be at least 2".into(),
        ));
    }
    let nx = config.resolution;
    let coords: Vec<(f64, f64)> = (0..nx * nx)
        .map(|idx| {
            let i = idx % nx;
            let j = idx / nx;
            (
                config.x_min + (config.x_max - config.x_min) * i as f64 / (nx - 1) as f64,
                config.y_min + (config.y_max - config.y_min) * j as f64 / (nx - 1) as f64,
            )
        })
        .collect();
    let cells: Vec<LevelSetCell> = coords
        .par_iter()
        .map(|&(x, y)| match level_set_value(config.m, x, y, config.n, &config.knobs) {
            Ok(Some(gamma)) => LevelSetCell {
                x,
                y,
                gamma: Some(gamma),
                masked: false,
                message: String::new(),
            },
            Ok(None) => LevelSetCell {
                x,
                y,
                gamma: None,
                masked: true,
                message: String::new(),
            },
            Err(e) => LevelSetCell {
                x,
                y,
                gamma: None,
                masked: true,
                message: e.to_string(),
            },
        })
        .collect();

    let mut csv = CsvDocument::new(
        meta_line(&format!(
            "experiment=level-set seed=none flags=m={},resolution={},n={}",
            config.m, config.resolution, config.n
        )),
        &["x", "y", "gamma", "masked", "message"],
    );
    for c in &cells {
        csv.push_row(vec![
            format!("{}", c.x),
            format!("{}", c.y),
            c.gamma.map(fmt_cap).unwrap_or_default(),
            c.masked.to_string(),
            c.message.clone(),
        ]);
    }
    Ok((cells, csv))
}
