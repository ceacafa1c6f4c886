//! Parameter-grid sweeps over energy and one model parameter.
//!
//! Grid points are evaluated independently on a work pool and merged in
//! grid order, so tables do not depend on the number of workers. CSV bodies
//! contain no timing information and are byte-identical between reruns;
//! timing goes to the JSON sidecar only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::error::{Error, Result};
use crate::heff::{assemble, phase_rigidity_state, solve_poles_for};
use crate::models::{ModelSpec, OpenSystem, Side, THRESHOLD_NUDGE};
use crate::scattering::{solve_scattering, transmission_spectral_matrix};
use crate::spectral::eig_complex_symmetric;

/// Largest accepted `|t_spectral - t_direct|` in the cross-check.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

/// Fewest valid rows a slice needs for a correlation coefficient.
pub const MIN_CORRELATION_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        Self { min, max, n }
    }

    /// `n` equally spaced points including both ends; a single point sits
    /// at `min`.
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.n - 1) as f64;
        (0..self.n)
            .map(|k| if k + 1 == self.n { self.max } else { self.min + step * k as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ParamAxis {
    None,
    CouplingV(Grid),
    DiskRadius(Grid),
}

impl ParamAxis {
    pub fn name(&self) -> &'static str {
        match self {
            ParamAxis::None => "param",
            ParamAxis::CouplingV(_) => "v",
            ParamAxis::DiskRadius(_) => "r",
        }
    }

    fn grid(&self) -> Option<&Grid> {
        match self {
            ParamAxis::None => None,
            ParamAxis::CouplingV(g) | ParamAxis::DiskRadius(g) => Some(g),
        }
    }

    /// Parameter values; the fixed axis reports one slice at `0`.
    pub fn values(&self) -> Vec<f64> {
        self.grid().map_or_else(|| vec![0.0], Grid::points)
    }

    pub fn apply(&self, spec: &ModelSpec, value: f64) -> ModelSpec {
        let mut spec = spec.clone();
        match self {
            ParamAxis::None => {}
            ParamAxis::CouplingV(_) => spec.coupling_v = value,
            ParamAxis::DiskRadius(_) => spec.disk_radius = value,
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outputs {
    /// `Re t`, `Im t` of the lowest channel and the aggregate `|t|`.
    pub t: bool,
    /// `|ρ|` and `arg ρ` of the interior wavefunction.
    pub rho: bool,
    /// Fixed-point `E_λ`, `Γ_λ`, `r_λ`, solved once per parameter value.
    pub poles: bool,
    /// `r_λ` of every eigenvector of `H_eff` at the row energy.
    pub r_lambda: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            t: true,
            rho: true,
            poles: false,
            r_lambda: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub spec: ModelSpec,
    pub energy: Grid,
    pub axis: ParamAxis,
    pub outputs: Outputs,
    /// Worker count; `None` uses every available core.
    pub threads: Option<usize>,
    /// One grid point in `check_stride` is also evaluated through the
    /// resonant sum; `0` disables the check.
    pub check_stride: usize,
}

impl SweepPlan {
    pub fn new(spec: ModelSpec, energy: Grid) -> Self {
        Self {
            spec,
            energy,
            axis: ParamAxis::None,
            outputs: Outputs::default(),
            threads: None,
            check_stride: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.into()));
        let finite = |g: &Grid| g.min.is_finite() && g.max.is_finite();
        if self.energy.n < 2 || !finite(&self.energy) || self.energy.max <= self.energy.min {
            return bad("energy grid needs n >= 2 and min < max");
        }
        if let Some(g) = self.axis.grid() {
            if g.n == 0 || !finite(g) || g.max < g.min || (g.n > 1 && g.max == g.min) {
                return bad("parameter grid needs n >= 1 and min < max (or min = max for n = 1)");
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        if !(self.outputs.t || self.outputs.rho || self.outputs.poles || self.outputs.r_lambda) {
            return bad("no outputs requested");
        }
        for value in self.axis.values() {
            self.axis.apply(&self.spec, value).validate()?;
        }
        Ok(())
    }
}

/// Why a table cell carries no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullReason {
    Threshold,
    NoChannel,
    Singular,
    Defective,
    ZeroWave,
    NoConvergence,
    Numerical,
    Invalid,
}

impl NullReason {
    pub fn code(self) -> &'static str {
        match self {
            NullReason::Threshold => "threshold",
            NullReason::NoChannel => "no_channel",
            NullReason::Singular => "singular",
            NullReason::Defective => "defective",
            NullReason::ZeroWave => "zero_wave",
            NullReason::NoConvergence => "no_convergence",
            NullReason::Numerical => "numerical",
            NullReason::Invalid => "invalid",
        }
    }
}

impl From<&Error> for NullReason {
    fn from(e: &Error) -> Self {
        match e {
            Error::LeadThreshold { .. } => NullReason::Threshold,
            Error::NoChannel { .. } => NullReason::NoChannel,
            Error::Singular { .. } => NullReason::Singular,
            Error::Defective { .. } => NullReason::Defective,
            Error::NumericalFailure { .. } => NullReason::Numerical,
            Error::InvalidInput(_) => NullReason::Invalid,
            Error::NotFound { .. } | Error::InsufficientData { .. } => NullReason::Numerical,
        }
    }
}

pub type Cell = std::result::Result<f64, NullReason>;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub energy: f64,
    /// Aligned with [`SweepTable::columns`] after the two leading ones.
    pub cells: Vec<Cell>,
}

impl SweepRow {
    pub fn is_null(&self) -> bool {
        self.cells.iter().any(|c| c.is_err())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub checked: usize,
    /// Points where the resonant sum was not applicable (coalescence, no
    /// channel, threshold).
    pub skipped: usize,
    /// Skip counts per null reason code.
    pub skipped_by: BTreeMap<String, usize>,
    pub failures: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub version: String,
    pub plan: SweepPlan,
    pub decisions: Vec<String>,
    pub wall_seconds: f64,
    pub point_seconds_mean: f64,
    pub threads: usize,
    pub rows: usize,
    pub null_rows: usize,
    pub cross_check: CrossCheck,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    /// Column names, starting with the parameter and `E`.
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

impl SweepTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().skip(2).position(|c| c == name)
    }

    /// Values of column `name` for every row, `None` where null.
    pub fn values(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.column(name)?;
        Some(self.rows.iter().map(|r| r.cells[k].ok()).collect())
    }

    /// Rows grouped by parameter value, in table order.
    pub fn slices(&self) -> Vec<(f64, &[SweepRow])> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.rows.len() {
            if k == self.rows.len() || self.rows[k].param.to_bits() != self.rows[start].param.to_bits() {
                out.push((self.rows[start].param, &self.rows[start..k]));
                start = k;
            }
        }
        out
    }

    /// Copy restricted to the named value columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<SweepTable> {
        let keep = names
            .iter()
            .map(|n| self.column(n).ok_or_else(|| Error::InvalidInput(format!("no column {n}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut columns = self.columns[..2].to_vec();
        columns.extend(names.iter().map(|n| n.to_string()));
        let rows = self
            .rows
            .iter()
            .map(|r| SweepRow {
                param: r.param,
                energy: r.energy,
                cells: keep.iter().map(|&k| r.cells[k]).collect(),
            })
            .collect();
        Ok(SweepTable {
            columns,
            rows,
            metadata: self.metadata.clone(),
        })
    }

    pub fn null_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_null()).count()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            let mut record = vec![format_float(row.param), format_float(row.energy)];
            record.extend(row.cells.iter().map(|c| match c {
                Ok(x) => format_float(*x),
                Err(reason) => format!("NA:{}", reason.code()),
            }));
            w.write_record(&record)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.metadata).expect("metadata serializes")
    }
}

/// 17 significant digits, the shortest width that round-trips every `f64`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        // fold -0 into 0 so equal values print identically
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}

fn decisions(spec: &ModelSpec) -> Vec<String> {
    let mut d = vec![
        "transmission: Fisher-Lee linear solve of (E - H_eff) with banded LU".to_string(),
        "|t|: root-sum-square over all open channel pairs; Re t, Im t: lowest channel".to_string(),
        "psi: interior response to the lowest channel of the left lead".to_string(),
        "coupling vectors: +v sqrt(sin k / pi) chi on the left lead, minus sign on the right".to_string(),
        format!("energies within 1e-12 of a lead threshold are shifted up by {THRESHOLD_NUDGE:e}"),
        "eigenvalues sorted by Re z, then Im z; eigenvectors c-normalized".to_string(),
    ];
    match spec.kind {
        crate::models::ModelKind::Chain => d.push("chain: hopping -1, leads on sites 1 and N".into()),
        crate::models::ModelKind::DoubleDot => {
            d.push("double dot: wide-band leads with self-energy -i v^2 on the outer sites".into())
        }
        crate::models::ModelKind::Billiard2d => {
            let (cx, cy) = spec.disk_center();
            d.push(format!(
                "billiard: onsite 4, hopping -1, {}x{} sites, leads of width {} on columns x=0 and x={}, disk center ({cx}, {cy}), sites with (x-cx)^2+(y-cy)^2 < r^2 removed",
                spec.nx,
                spec.ny,
                spec.lead_width,
                spec.nx - 1
            ));
        }
    }
    d
}

#[derive(Debug, Clone)]
struct PointResult {
    cells: Vec<Cell>,
    check: Option<std::result::Result<f64, NullReason>>,
    seconds: f64,
}

struct Slice {
    system: std::result::Result<OpenSystem, NullReason>,
    pole_cells: Vec<Cell>,
}

fn pole_cells(system: &std::result::Result<OpenSystem, NullReason>, states: usize) -> Vec<Cell> {
    let system = match system {
        Ok(s) => s,
        Err(reason) => return vec![Err(*reason); 3 * states],
    };
    match solve_poles_for(system) {
        Ok(poles) => poles
            .iter()
            .flat_map(|p| {
                let ok = |x: f64| if p.converged { Ok(x) } else { Err(NullReason::NoConvergence) };
                [ok(p.energy), ok(p.width), ok(p.rigidity)]
            })
            .collect(),
        Err(e) => vec![Err(NullReason::from(&e)); 3 * states],
    }
}

fn evaluate_point(plan: &SweepPlan, slice: &Slice, grid_energy: f64, states: usize, check: bool) -> PointResult {
    let started = Instant::now();
    let out = plan.outputs;
    let mut cells: Vec<Cell> = Vec::new();
    let n_t = if out.t { 3 } else { 0 };
    let n_rho = if out.rho { 2 } else { 0 };
    let n_r = if out.r_lambda { states } else { 0 };

    let system = match &slice.system {
        Ok(s) => s,
        Err(reason) => {
            cells.extend(std::iter::repeat_n(Err(*reason), n_t + n_rho));
            cells.extend(slice.pole_cells.iter().cloned());
            cells.extend(std::iter::repeat_n(Err(*reason), n_r));
            return PointResult {
                cells,
                check: None,
                seconds: started.elapsed().as_secs_f64(),
            };
        }
    };

    let energy = if system.check_threshold(grid_energy).is_err() {
        grid_energy + THRESHOLD_NUDGE
    } else {
        grid_energy
    };

    let solution = solve_scattering(system, energy, Side::Left);
    if out.t {
        match &solution {
            Ok(s) => cells.extend([Ok(s.t.re), Ok(s.t.im), Ok(s.t_aggregate())]),
            Err(e) => cells.extend([Err(NullReason::from(e)); 3]),
        }
    }
    if out.rho {
        match &solution {
            Ok(s) => match &s.rigidity {
                Some(w) => cells.extend([Ok(w.rho.norm()), Ok(w.rho.arg())]),
                None => cells.extend([Err(NullReason::ZeroWave); 2]),
            },
            Err(e) => cells.extend([Err(NullReason::from(e)); 2]),
        }
    }
    cells.extend(slice.pole_cells.iter().cloned());
    if out.r_lambda {
        let r = assemble(system, energy)
            .and_then(|h| eig_complex_symmetric(&h.matrix))
            .and_then(|eig| {
                (0..eig.dim())
                    .map(|k| phase_rigidity_state(eig.vector(k).as_slice()).map(|s| s.r))
                    .collect::<Result<Vec<_>>>()
            });
        match r {
            Ok(r) => cells.extend(r.into_iter().map(Ok)),
            Err(e) => cells.extend(std::iter::repeat_n(Err(NullReason::from(&e)), n_r)),
        }
    }

    let check = if check {
        solution.as_ref().ok().map(|direct| {
            transmission_spectral_matrix(system, energy)
                .map(|spectral| {
                    spectral
                        .iter()
                        .zip(direct.t_matrix.iter())
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max)
                })
                .map_err(|e| NullReason::from(&e))
        })
    } else {
        None
    };

    PointResult {
        cells,
        check,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn state_count(plan: &SweepPlan) -> Result<usize> {
    let values = plan.axis.values();
    let dims = values
        .iter()
        .map(|v| OpenSystem::new(&plan.axis.apply(&plan.spec, *v)).map(|s| s.dim()))
        .collect::<Result<Vec<_>>>()?;
    if (plan.outputs.poles || plan.outputs.r_lambda) && dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidInput(
            "per-state columns need the same number of states on every slice".into(),
        ));
    }
    Ok(dims[0])
}

/// Whether the flattened grid index is in the cross-check subsample. The
/// offset shifts by one every `stride` points so that successive blocks
/// sample different energies.
fn in_subsample(index: usize, stride: usize) -> bool {
    stride > 0 && index % stride == (index / stride) % stride
}

/// Evaluates every grid point of `plan`. Point failures become null cells;
/// only an invalid plan is an error.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepTable> {
    plan.validate()?;
    let started = Instant::now();
    let states = state_count(plan)?;
    let energies = plan.energy.points();
    let params = plan.axis.values();

    let mut columns = vec![plan.axis.name().to_string(), "E".to_string()];
    if plan.outputs.t {
        columns.extend(["re_t", "im_t", "abs_t"].map(String::from));
    }
    if plan.outputs.rho {
        columns.extend(["abs_rho", "arg_rho"].map(String::from));
    }
    if plan.outputs.poles {
        for k in 1..=states {
            columns.extend([format!("pole_E_{k}"), format!("pole_Gamma_{k}"), format!("pole_r_{k}")]);
        }
    }
    if plan.outputs.r_lambda {
        columns.extend((1..=states).map(|k| format!("r_{k}")));
    }

    let threads = plan.threads.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;

    let (slices, points) = pool.install(|| {
        let slices: Vec<Slice> = params
            .par_iter()
            .map(|&p| {
                let system = OpenSystem::new(&plan.axis.apply(&plan.spec, p)).map_err(|e| NullReason::from(&e));
                let pole_cells = if plan.outputs.poles { pole_cells(&system, states) } else { Vec::new() };
                Slice { system, pole_cells }
            })
            .collect();
        let points: Vec<PointResult> = (0..params.len() * energies.len())
            .into_par_iter()
            .map(|index| {
                let (p, e) = (index / energies.len(), index % energies.len());
                evaluate_point(plan, &slices[p], energies[e], states, in_subsample(index, plan.check_stride))
            })
            .collect();
        (slices, points)
    });
    drop(slices);

    let mut check = CrossCheck::default();
    for result in points.iter().filter_map(|p| p.check) {
        match result {
            Ok(dev) => {
                check.checked += 1;
                check.max_deviation = check.max_deviation.max(dev);
                if !(dev < CROSS_CHECK_TOL) {
                    check.failures += 1;
                }
            }
            Err(reason) => {
                check.skipped += 1;
                *check.skipped_by.entry(reason.code().to_string()).or_default() += 1;
            }
        }
    }
    let point_seconds_mean = points.iter().map(|p| p.seconds).sum::<f64>() / points.len() as f64;
    let rows: Vec<SweepRow> = points
        .into_iter()
        .enumerate()
        .map(|(index, p)| SweepRow {
            param: params[index / energies.len()],
            energy: energies[index % energies.len()],
            cells: p.cells,
        })
        .collect();
    let null_rows = rows.iter().filter(|r| r.is_null()).count();

    Ok(SweepTable {
        columns,
        metadata: SweepMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            plan: plan.clone(),
            decisions: decisions(&plan.spec),
            wall_seconds: started.elapsed().as_secs_f64(),
            point_seconds_mean,
            threads,
            rows: rows.len(),
            null_rows,
            cross_check: check,
        },
        rows,
    })
}

/// Which rigidity function is correlated with `|t|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationTarget {
    /// `1 - |ρ|`.
    OneMinusRho,
    /// `|ρ|` itself.
    Rho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceCorrelation {
    pub param: f64,
    pub valid_rows: usize,
    /// `NaN` when undefined; see `reason`.
    pub pearson: f64,
    pub reason: Option<String>,
}

/// Pearson correlation of `|t|` and `1 - |ρ|` over energy within each
/// parameter slice, null rows excluded.
pub fn correlate(table: &SweepTable) -> Result<Vec<SliceCorrelation>> {
    correlate_with(table, CorrelationTarget::OneMinusRho)
}

pub fn correlate_with(table: &SweepTable, target: CorrelationTarget) -> Result<Vec<SliceCorrelation>> {
    let (kt, kr) = match (table.column("abs_t"), table.column("abs_rho")) {
        (Some(t), Some(r)) => (t, r),
        _ => return Err(Error::InvalidInput("correlation needs abs_t and abs_rho columns".into())),
    };
    Ok(table
        .slices()
        .into_iter()
        .map(|(param, rows)| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| match (r.cells[kt], r.cells[kr]) {
                    (Ok(t), Ok(rho)) => Some((
                        t,
                        match target {
                            CorrelationTarget::OneMinusRho => 1.0 - rho,
                            CorrelationTarget::Rho => rho,
                        },
                    )),
                    _ => None,
                })
                .unzip();
            let (pearson, reason) = pearson(&x, &y);
            SliceCorrelation {
                param,
                valid_rows: x.len(),
                pearson,
                reason,
            }
        })
        .collect())
}

fn pearson(x: &[f64], y: &[f64]) -> (f64, Option<String>) {
    if x.len() < MIN_CORRELATION_ROWS {
        let e = Error::InsufficientData {
            valid: x.len(),
            required: MIN_CORRELATION_ROWS,
        };
        return (f64::NAN, Some(e.to_string()));
    }
    let sx = x.std_dev();
    let sy = y.std_dev();
    if !(sx > 0.0 && sy > 0.0) {
        return (f64::NAN, Some("constant column, correlation undefined".into()));
    }
    let c = x.covariance(y) / (sx * sy);
    (c.clamp(-1.0, 1.0), None)
}

/// Human-readable per-slice correlation summary.
pub fn correlation_report(axis: &str, slices: &[SliceCorrelation]) -> String {
    let mut s = format!("{axis},valid_rows,pearson,reason\n");
    for c in slices {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            format_float(c.param),
            c.valid_rows,
            if c.pearson.is_nan() { "NaN".to_string() } else { format_float(c.pearson) },
            c.reason.as_deref().unwrap_or("")
        );
    }
    s
}

/// Number of strict local maxima of `values` above `floor`, nulls breaking
/// the sequence.
pub fn count_peaks(values: &[Option<f64>], floor: f64) -> usize {
    (1..values.len().saturating_sub(1))
        .filter(|&k| match (values[k - 1], values[k], values[k + 1]) {
            (Some(a), Some(b), Some(c)) => b > floor && b > a && b >= c,
            _ => false,
        })
        .count()
}
