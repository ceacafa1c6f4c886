//! The subcommands. Each one resolves its settings against its own
//! defaults, writes data files plus a JSON sidecar and a `run.conf` echo,
//! and reports failed consistency checks to the caller.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rigidity_core::heff::{find_branch_point, BranchPoint};
use rigidity_core::sweep::{
    correlate, correlation_report, count_peaks, format_float, Grid, Outputs, ParamAxis,
    SweepPlan, SweepTable,
};
use rigidity_core::{
    build_heff, eig_complex_symmetric, run_sweep, solve_poles, Error, ModelKind, ModelSpec,
};
use serde_json::{json, Value};

use crate::config::Settings;
use crate::plots;

/// Default double-dot internal coupling.
pub const U_DEFAULT: f64 = std::f64::consts::SQRT_2 / 16.0;

/// Slices of the billiard run whose correlation must exceed this.
pub const BILLIARD_CORRELATION_FLOOR: f64 = 0.3;

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Consistency checks that did not pass.
    pub failed: Vec<String>,
}

impl Outcome {
    fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }

    fn write_table(&mut self, dir: &Path, name: &str, table: &SweepTable) -> Result<()> {
        self.write(dir, name, &table.to_csv_string())
    }

    fn write_json(&mut self, dir: &Path, name: &str, value: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("json value serializes");
        self.write(dir, name, &(text + "\n"))
    }

    fn check_table(&mut self, label: &str, table: &SweepTable) {
        let c = &table.metadata.cross_check;
        println!(
            "{label}: {} rows, {} null, resonant-sum check {} points (max deviation {:.2e}, {} skipped, {} failed), {:.1} s",
            table.rows.len(),
            table.metadata.null_rows,
            c.checked,
            c.max_deviation,
            c.skipped,
            c.failures,
            table.metadata.wall_seconds
        );
        if c.failures > 0 {
            self.failed.push(format!("{label}: {} resonant-sum cross-check failures", c.failures));
        }
    }
}

fn fill<T: Clone>(slot: &mut Option<T>, value: T) -> T {
    slot.get_or_insert(value).clone()
}

fn prepare(settings: &Settings) -> Result<PathBuf> {
    let dir = settings.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Fills every model field the kind needs and returns the spec.
fn resolve_spec(s: &mut Settings, default_kind: ModelKind, default_v: f64) -> Result<ModelSpec> {
    let kind = fill(&mut s.model, default_kind);
    let v = fill(&mut s.v, default_v);
    let spec = match kind {
        ModelKind::Chain => ModelSpec::chain(fill(&mut s.n_sites, 6), v),
        ModelKind::DoubleDot => ModelSpec::double_dot(fill(&mut s.u, U_DEFAULT), v),
        ModelKind::Billiard2d => {
            let w = fill(&mut s.lead_width, 8);
            let mut spec = ModelSpec::billiard(w, v, fill(&mut s.disk_radius, 0.0));
            spec.nx = fill(&mut s.nx, spec.nx);
            spec.ny = fill(&mut s.ny, spec.ny);
            spec
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn threads(s: &Settings) -> Option<usize> {
    s.threads
}

fn sidecar(command: &str, settings: &Settings, extra: Value) -> Value {
    json!({
        "command": command,
        "config": settings.entries(),
        "result": extra,
    })
}

fn echo_config(out: &mut Outcome, dir: &Path, settings: &Settings) -> Result<()> {
    out.write(dir, "run.conf", &settings.to_text())
}

/// `-0.000000` reads badly next to a value that is zero to the shown digits.
fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn branch_json(result: &Result<BranchPoint, Error>) -> Value {
    match result {
        Ok(b) => json!({
            "found": true,
            "v_c": b.v_c,
            "E_c": b.e_c,
            "gap": b.gap,
            "chirality_error": b.chirality_error,
            "r_lambda": [b.rigidities.0, b.rigidities.1],
            "z_c": [b.z_c.re, b.z_c.im],
        }),
        Err(Error::NotFound { min_gap }) => json!({ "found": false, "min_gap": min_gap }),
        Err(e) => json!({ "found": false, "error": e.to_string() }),
    }
}

fn print_branch(result: &Result<BranchPoint, Error>) -> Result<()> {
    match result {
        Ok(b) => {
            println!("v_c={}, E_c={}", fixed6(b.v_c), fixed6(b.e_c));
            println!(
                "  gap {:.2e}, r_lambda ({:.2e}, {:.2e}), chirality error {:.2e}",
                b.gap, b.rigidities.0, b.rigidities.1, b.chirality_error
            );
            Ok(())
        }
        Err(Error::NotFound { min_gap }) => {
            println!("branch point: not-found (smallest gap {min_gap:.3e})");
            Ok(())
        }
        Err(e) => bail!("branch-point search failed: {e}"),
    }
}

pub fn fig1(mut s: Settings) -> Result<Outcome> {
    let dir = prepare(&s)?;
    let given_v = s.v;
    let n_sites = fill(&mut s.n_sites, 6);
    let energy = Grid::new(fill(&mut s.e_min, -2.0), fill(&mut s.e_max, 2.0), fill(&mut s.n_e, 2000));
    let stride = fill(&mut s.check_stride, 16);
    if s.model.is_some_and(|m| m != ModelKind::Chain) {
        bail!("fig1 is defined for the chain model");
    }
    let vs = given_v.map_or_else(|| vec![0.5, 0.7], |v| vec![v]);

    let mut out = Outcome::default();
    let mut files = Vec::new();
    for v in vs {
        let spec = ModelSpec::chain(n_sites, v);
        let plan = SweepPlan {
            threads: threads(&s),
            check_stride: stride,
            ..SweepPlan::new(spec, energy)
        };
        let table = run_sweep(&plan)?;
        let peaks = count_peaks(&table.values("abs_t").expect("t column"), 0.5);
        let corr = correlate(&table)?.remove(0);
        let name = format!("fig1_v{v}");
        out.check_table(&name, &table);
        println!("  v={v}: {peaks} peaks of |t| above 0.5, pearson(|t|, 1-|rho|) = {:.4}", corr.pearson);
        out.write_table(&dir, &format!("{name}.csv"), &table)?;
        let extra = json!({
            "v": v,
            "peaks_above_half": peaks,
            "correlation": corr,
            "metadata": table.metadata_json(),
        });
        out.write_json(&dir, &format!("{name}.json"), &sidecar("fig1", &s, extra))?;
        files.push((v, format!("{name}.csv")));
    }
    out.write(&dir, "fig1_plot.py", &plots::fig1(&files))?;
    echo_config(&mut out, &dir, &s)?;
    Ok(out)
}

/// `Re z` and `Im z` of every eigenvalue of `H_eff(E = 0)` along `v`.
fn re_z_curves(spec: &ModelSpec, vs: &[f64]) -> Result<String> {
    let mut rows = Vec::with_capacity(vs.len());
    let mut n = 0;
    for &v in vs {
        let h = build_heff(&spec.with_coupling(v), 0.0)?;
        let z = eig_complex_symmetric(&h.matrix)?.eigenvalues;
        n = z.len();
        let mut fields = vec![format_float(v)];
        fields.extend(z.iter().map(|z| format_float(z.re)));
        fields.extend(z.iter().map(|z| format_float(z.im)));
        rows.push(fields.join(","));
    }
    let mut header = vec!["v".to_string()];
    header.extend((1..=n).map(|k| format!("re_z_{k}")));
    header.extend((1..=n).map(|k| format!("im_z_{k}")));
    Ok(format!("{}\n{}\n", header.join(","), rows.join("\n")))
}

pub fn fig2(mut s: Settings) -> Result<Outcome> {
    let dir = prepare(&s)?;
    let spec = resolve_spec(&mut s, ModelKind::DoubleDot, 0.5)?;
    let energy = Grid::new(fill(&mut s.e_min, -0.5), fill(&mut s.e_max, 0.5), fill(&mut s.n_e, 201));
    let vgrid = Grid::new(fill(&mut s.v_min, 0.05), fill(&mut s.v_max, 0.8), fill(&mut s.n_v, 151));
    let plan = SweepPlan {
        axis: ParamAxis::CouplingV(vgrid),
        threads: threads(&s),
        check_stride: fill(&mut s.check_stride, 16),
        ..SweepPlan::new(spec.clone(), energy)
    };
    let mut out = Outcome::default();
    let table = run_sweep(&plan)?;
    out.check_table("fig2_landscape", &table);

    let k = table.column("abs_rho").expect("rho column");
    if let Some((rho, row)) = table
        .rows
        .iter()
        .filter_map(|r| r.cells[k].ok().map(|x| (x, r)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
    {
        println!("  min |rho| = {rho:.3e} at v={:.4}, E={:.4}", row.param, row.energy);
    }

    let branch = find_branch_point(&spec, (vgrid.min, vgrid.max), (energy.min, energy.max));
    print_branch(&branch)?;

    out.write_table(&dir, "fig2_landscape.csv", &table)?;
    out.write(&dir, "fig2_re_z.csv", &re_z_curves(&spec, &vgrid.points())?)?;
    let extra = json!({ "branch_point": branch_json(&branch), "metadata": table.metadata_json() });
    out.write_json(&dir, "fig2_landscape.json", &sidecar("fig2", &s, extra))?;
    out.write_json(&dir, "fig2_branch_point.json", &sidecar("fig2", &s, branch_json(&branch)))?;
    let marker = branch.as_ref().ok().map(|b| (b.v_c, b.e_c));
    out.write(&dir, "fig2_plot.py", &plots::fig2("fig2_landscape.csv", "fig2_re_z.csv", marker))?;
    echo_config(&mut out, &dir, &s)?;
    Ok(out)
}

pub fn fig3(mut s: Settings) -> Result<Outcome> {
    let dir = prepare(&s)?;
    let n_r = fill(&mut s.disk_radius_n, 16);
    let radii = if n_r == 1 {
        let r = s.disk_radius.or(s.disk_radius_min).unwrap_or(0.0);
        s.disk_radius = Some(r);
        Grid::new(r, r, 1)
    } else {
        Grid::new(fill(&mut s.disk_radius_min, 0.0), fill(&mut s.disk_radius_max, 13.0), n_r)
    };
    let spec = resolve_spec(&mut s, ModelKind::Billiard2d, 1.0)?;
    if spec.kind != ModelKind::Billiard2d {
        bail!("fig3 is defined for the billiard model");
    }
    let energy = Grid::new(fill(&mut s.e_min, 0.13), fill(&mut s.e_max, 1.5), fill(&mut s.n_e, 64));
    let plan = SweepPlan {
        axis: ParamAxis::DiskRadius(radii),
        threads: threads(&s),
        check_stride: fill(&mut s.check_stride, 64),
        ..SweepPlan::new(spec, energy)
    };
    let mut out = Outcome::default();
    let table = run_sweep(&plan)?;
    out.check_table("fig3", &table);
    let corr = correlate(&table)?;
    let above = corr.iter().filter(|c| c.pearson > BILLIARD_CORRELATION_FLOOR).count();
    println!(
        "  pearson(|t|, 1-|rho|) > {BILLIARD_CORRELATION_FLOOR} on {above} of {} r-slices",
        corr.len()
    );

    out.write_table(&dir, "fig3_t.csv", &table.select(&["re_t", "im_t", "abs_t"])?)?;
    out.write_table(&dir, "fig3_rho.csv", &table.select(&["abs_rho", "arg_rho"])?)?;
    out.write(&dir, "fig3_correlation.csv", &correlation_report("r", &corr))?;
    let extra = json!({
        "correlation": corr,
        "slices_above_floor": above,
        "metadata": table.metadata_json(),
    });
    out.write_json(&dir, "fig3.json", &sidecar("fig3", &s, extra))?;
    out.write(&dir, "fig3_plot.py", &plots::fig3("fig3_t.csv", "fig3_rho.csv"))?;
    echo_config(&mut out, &dir, &s)?;
    Ok(out)
}

pub fn poles(mut s: Settings) -> Result<Outcome> {
    let dir = prepare(&s)?;
    let spec = resolve_spec(&mut s, ModelKind::Chain, 0.5)?;
    if let Some(n) = s.threads {
        println!("  (pole solves use the global pool of {n} threads)");
    }
    let poles = solve_poles(&spec)?;
    let mut out = Outcome::default();
    let mut csv = String::from("index,E,Gamma,re_z,im_z,r,A,converged,iterations\n");
    println!("{:>3} {:>20} {:>20} {:>12} {:>5} {:>4}", "#", "E", "Gamma", "r", "conv", "it");
    for (k, p) in poles.iter().enumerate() {
        println!(
            "{:>3} {:>20.12} {:>20.12e} {:>12.6} {:>5} {:>4}",
            k + 1,
            p.energy,
            p.width,
            p.rigidity,
            p.converged,
            p.iterations
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            k + 1,
            format_float(p.energy),
            format_float(p.width),
            format_float(p.z.re),
            format_float(p.z.im),
            format_float(p.rigidity),
            p.a_norm.map_or("NA:defective".to_string(), format_float),
            p.converged,
            p.iterations
        ));
        if !p.converged {
            out.failed.push(format!("pole {} did not converge", k + 1));
        }
    }
    out.write(&dir, "poles.csv", &csv)?;
    let extra = json!({
        "spec": spec,
        "poles": poles.iter().map(|p| json!({
            "E": p.energy, "Gamma": p.width, "r": p.rigidity,
            "converged": p.converged, "iterations": p.iterations,
        })).collect::<Vec<_>>(),
    });
    out.write_json(&dir, "poles.json", &sidecar("poles", &s, extra))?;
    echo_config(&mut out, &dir, &s)?;
    Ok(out)
}

pub fn ep_locate(mut s: Settings) -> Result<Outcome> {
    let dir = prepare(&s)?;
    let spec = resolve_spec(&mut s, ModelKind::DoubleDot, 0.5)?;
    let v_range = (fill(&mut s.v_min, 0.05), fill(&mut s.v_max, 0.8));
    let e_range = (fill(&mut s.e_min, -0.5), fill(&mut s.e_max, 0.5));
    let branch = find_branch_point(&spec, v_range, e_range);
    print_branch(&branch)?;
    let mut out = Outcome::default();
    out.write_json(&dir, "ep.json", &sidecar("ep-locate", &s, branch_json(&branch)))?;
    echo_config(&mut out, &dir, &s)?;
    Ok(out)
}

fn parse_outputs(text: &str) -> Result<Outputs> {
    let mut o = Outputs {
        t: false,
        rho: false,
        poles: false,
        r_lambda: false,
    };
    for item in text.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        match item {
            "t" => o.t = true,
            "rho" => o.rho = true,
            "poles" => o.poles = true,
            "r_lambda" | "r-lambda" => o.r_lambda = true,
            other => bail!("unknown output `{other}` (expected t, rho, poles, r_lambda)"),
        }
    }
    Ok(o)
}

pub fn sweep(mut s: Settings) -> Result<Outcome> {
    let dir = prepare(&s)?;
    let param = fill(&mut s.param, "none".to_string());
    let axis = match param.as_str() {
        "none" => ParamAxis::None,
        "v" => ParamAxis::CouplingV(Grid::new(
            fill(&mut s.v_min, 0.05),
            fill(&mut s.v_max, 0.8),
            fill(&mut s.n_v, 16),
        )),
        "r" => ParamAxis::DiskRadius(Grid::new(
            fill(&mut s.disk_radius_min, 0.0),
            fill(&mut s.disk_radius_max, 13.0),
            fill(&mut s.disk_radius_n, 16),
        )),
        other => bail!("unknown param `{other}` (expected none, v or r)"),
    };
    let spec = resolve_spec(&mut s, ModelKind::Chain, 0.5)?;
    let energy = Grid::new(fill(&mut s.e_min, -2.0), fill(&mut s.e_max, 2.0), fill(&mut s.n_e, 200));
    let outputs = parse_outputs(&fill(&mut s.outputs, "t,rho".to_string()))?;
    let plan = SweepPlan {
        axis,
        outputs,
        threads: threads(&s),
        check_stride: fill(&mut s.check_stride, 16),
        ..SweepPlan::new(spec, energy)
    };
    let mut out = Outcome::default();
    let table = run_sweep(&plan)?;
    out.check_table("sweep", &table);
    out.write_table(&dir, "sweep.csv", &table)?;
    let mut extra = json!({ "metadata": table.metadata_json() });
    if outputs.t && outputs.rho {
        let corr = correlate(&table)?;
        out.write(&dir, "sweep_correlation.csv", &correlation_report(plan.axis.name(), &corr))?;
        extra["correlation"] = json!(corr);
    }
    out.write_json(&dir, "sweep.json", &sidecar("sweep", &s, extra))?;
    echo_config(&mut out, &dir, &s)?;
    Ok(out)
}
