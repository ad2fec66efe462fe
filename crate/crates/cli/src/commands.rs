use std::fs;
use std::io::{self, Write};
use std::path::Path;

use kpzlab::hyp::{full_report, HypOptions, StationarityParams, Status, Tolerances};
use kpzlab::numerics::{parse_geom_schedule, parse_linear_grid};
use kpzlab::profiles::Profile;
use kpzlab::rates::{cramer_toy_validate, lyapunov, rate_curve, rate_function, GSource};
use kpzlab::report::{merge, Table, TableHeader};
use kpzlab::sim::{
    estimate_moment, first_moment_oracle, lyapunov_slope_fit, second_moment_oracle,
    second_moment_series, simulate, write_ensemble, Boundary, Ensemble, Initial, LatticeConfig,
};
use kpzlab::variational::g_estimate;
use kpzlab::Error;
use serde_json::{json, Value};

use crate::args::*;
use crate::CliError;

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Failed,
    Inconclusive,
}

impl From<Status> for Outcome {
    fn from(s: Status) -> Self {
        match s {
            Status::Pass => Outcome::Done,
            Status::Fail => Outcome::Failed,
            Status::Inconclusive => Outcome::Inconclusive,
        }
    }
}

pub struct Ctx {
    pub json: bool,
    pub run: Value,
}

type Res = Result<Outcome, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn linear_grid(spec: &str, what: &str) -> Result<Vec<f64>, CliError> {
    parse_linear_grid(spec)
        .ok_or_else(|| usage(format!("bad {what} grid {spec:?}; expected lo:hi:step")))
}

fn geom_schedule(spec: &str) -> Result<Vec<f64>, CliError> {
    parse_geom_schedule(spec)
        .ok_or_else(|| usage(format!("bad t schedule {spec:?}; expected geom:lo:hi:n")))
}

fn window(spec: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()
        .ok_or_else(|| usage(format!("bad window {spec:?}")))?;
    match parts.as_slice() {
        [lo, hi] if hi > lo => Ok((*lo, *hi)),
        _ => Err(usage(format!(
            "bad window {spec:?}; expected lo:hi with lo < hi"
        ))),
    }
}

/// Reads a profile descriptor from inline JSON or a file.
pub fn load_profile(spec: &str) -> Result<Profile, CliError> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        fs::read_to_string(spec)?
    };
    Ok(Profile::from_json(&text)?)
}

fn g_source(f: &FamilySel) -> Result<GSource, CliError> {
    Ok(match f.family {
        FamilyArg::Deterministic => GSource::ClosedFormZero,
        FamilyArg::Brownian => GSource::brownian(f.a),
        FamilyArg::Table => {
            let path = f
                .g_table
                .as_ref()
                .ok_or_else(|| usage("--family table needs --g-table"))?;
            let table = Table::parse(&fs::read_to_string(path)?)?;
            let p = table
                .column("p")
                .ok_or_else(|| usage("g table has no column p"))?;
            let g = table
                .column("g")
                .ok_or_else(|| usage("g table has no column g"))?;
            GSource::table(p, g)?
        }
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    Ok(())
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() && v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e7) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Writes the table to `out` when given, then prints it.
fn emit(ctx: &Ctx, table: &Table, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = out {
        write_text(path, &table.to_string())?;
    }
    let stdout = io::stdout();
    let mut w = stdout.lock();
    if ctx.json {
        let rows: Vec<Value> = table
            .rows
            .iter()
            .map(|r| {
                let obj: serde_json::Map<String, Value> = table
                    .header
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), json!(v)))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let doc = json!({"header": table.header, "rows": rows});
        writeln!(w, "{}", serde_json::to_string_pretty(&doc)?)?;
        return Ok(());
    }
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| r.iter().map(|&v| fmt_cell(v)).collect())
        .collect();
    let widths: Vec<usize> = table
        .header
        .columns
        .iter()
        .enumerate()
        .map(|(k, c)| {
            cells
                .iter()
                .map(|r| r[k].len())
                .chain([c.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |items: &[String]| -> String {
        items
            .iter()
            .zip(&widths)
            .map(|(s, &n)| format!("{s:>n$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(w, "{}", line(&table.header.columns))?;
    for r in &cells {
        writeln!(w, "{}", line(r))?;
    }
    if !table.header.summary.is_null() {
        writeln!(w, "summary: {}", table.header.summary)?;
    }
    if let Some(path) = out {
        writeln!(w, "wrote {}", path.display())?;
    }
    Ok(())
}

pub fn rate(ctx: &Ctx, a: &RateArgs) -> Res {
    let g = g_source(&a.family)?;
    let zeta = g.zeta();
    let entries = match (&a.s, &a.s_grid) {
        (Some(s), _) => vec![rate_function(*s, &g, zeta)?],
        (None, Some(spec)) => rate_curve(&linear_grid(spec, "s")?, &g)?.entries,
        (None, None) => return Err(usage("give --s or --s-grid")),
    };
    let header = TableHeader::new("rate_curve", &["s", "rate", "p_star"], ctx.run.clone())
        .with_summary(
            json!({"zeta": zeta, "sign": "positive: rate(s) = -lim (1/t) log P(H > s t)"}),
        );
    let mut table = Table::new(header);
    for e in &entries {
        table.push(vec![e.s, e.rate, e.p_star]);
    }
    emit(ctx, &table, a.out.as_deref())?;
    Ok(Outcome::Done)
}

pub fn lyapunov_cmd(ctx: &Ctx, a: &LyapunovArgs) -> Res {
    let g = g_source(&a.family)?;
    let ps = match (&a.p, &a.p_grid) {
        (Some(p), _) => vec![*p],
        (None, Some(spec)) => linear_grid(spec, "p")?,
        (None, None) => return Err(usage("give --p or --p-grid")),
    };
    let mut table = Table::new(TableHeader::new(
        "lyapunov_curve",
        &["p", "lya", "g"],
        ctx.run.clone(),
    ));
    for p in ps {
        table.push(vec![p, lyapunov(p, &g)?, g.value(p)]);
    }
    emit(ctx, &table, a.out.as_deref())?;
    Ok(Outcome::Done)
}

pub fn g_estimate_cmd(ctx: &Ctx, a: &GEstimateArgs) -> Res {
    let profile = load_profile(&a.profile)?;
    let ps = linear_grid(&a.p_grid, "p")?;
    let sched = geom_schedule(&a.t_schedule)?;
    let mut cols: Vec<String> = vec!["p".into(), "g".into(), "converged".into(), "exact".into()];
    cols.extend(sched.iter().map(|t| format!("t={t}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut rows = Vec::with_capacity(ps.len());
    let mut all_converged = true;
    for &p in &ps {
        let e = g_estimate(&profile, p, &sched, a.tol)?;
        all_converged &= e.converged;
        let mut row = vec![p, e.g, e.converged as u8 as f64, e.exact as u8 as f64];
        row.extend(e.trace.iter().map(|v| v.1));
        rows.push(row);
    }
    let header = TableHeader::new("g_curve", &col_refs, ctx.run.clone())
        .with_summary(json!({"all_converged": all_converged, "trace": "sup_x phi_t(x) / t"}));
    let mut table = Table::new(header);
    table.rows = rows;
    emit(ctx, &table, a.out.as_deref())?;
    Ok(Outcome::Done)
}

pub fn verify_hyp(ctx: &Ctx, a: &VerifyHypArgs) -> Res {
    let profile = load_profile(&a.profile)?;
    let opts = HypOptions {
        t_schedule: geom_schedule(&a.t_schedule)?,
        g_claimed: a.g_claimed,
        stationarity: StationarityParams {
            n_samples: a.samples,
            seed: a.seed,
            ..StationarityParams::default()
        },
        tolerances: Tolerances {
            limit: a.tol,
            k_sigma: a.k_sigma,
        },
        ..HypOptions::default()
    };
    let report = full_report(&profile, a.p, &opts)?;
    let mut doc = serde_json::to_value(&report)?;
    doc["run"] = ctx.run.clone();
    let text = serde_json::to_string_pretty(&doc)?;
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    let mut w = io::stdout().lock();
    if ctx.json {
        writeln!(w, "{text}")?;
    } else {
        writeln!(
            w,
            "profile {}  p = {}  g claimed = {}",
            report.profile, report.p, report.g_claimed
        )?;
        for e in &report.entries {
            let name = serde_json::to_value(e.condition)?;
            let status = serde_json::to_value(e.status)?;
            writeln!(
                w,
                "  {:<20} {}",
                name.as_str().unwrap_or_default(),
                status.as_str().unwrap_or_default()
            )?;
        }
        writeln!(
            w,
            "overall: {}",
            serde_json::to_value(report.status)?
                .as_str()
                .unwrap_or_default()
        )?;
        if let Some(path) = &a.out {
            writeln!(w, "wrote {}", path.display())?;
        }
    }
    Ok(report.status.into())
}

struct Lattice {
    initial: Initial,
    cfg: LatticeConfig,
    times: Vec<f64>,
    sites: Vec<usize>,
}

fn lattice(a: &LatticeArgs) -> Result<Lattice, CliError> {
    let initial = match &a.profile {
        Some(spec) => Initial::Profile(load_profile(spec)?),
        None => Initial::NarrowWedge,
    };
    let drift = match &initial {
        Initial::Profile(p) => p.drift().unwrap_or(0.0).max(0.0),
        Initial::NarrowWedge => 0.0,
    };
    let mut cfg = LatticeConfig::with_drift(a.dx, a.t, drift)?;
    if let Some(dt) = a.dt {
        cfg = cfg.dt(dt)?;
    }
    if let Some(w) = a.half_width {
        cfg = cfg.half_width(w)?;
    }
    if a.periodic {
        cfg = cfg.boundary(Boundary::Periodic);
    }
    cfg.validate()?;
    let times = match &a.times {
        Some(spec) => linear_grid(spec, "time")?,
        None => vec![a.t],
    };
    if times.iter().any(|&t| t < 0.0 || t > a.t * (1.0 + 1e-12)) {
        return Err(usage(format!("observation times must lie in [0, {}]", a.t)));
    }
    let sites =
        a.x.iter()
            .map(|&x| {
                cfg.site(x)
                    .ok_or_else(|| usage(format!("x = {x} is not a lattice site")))
            })
            .collect::<Result<_, _>>()?;
    Ok(Lattice {
        initial,
        cfg,
        times,
        sites,
    })
}

pub fn simulate_cmd(ctx: &Ctx, a: &SimulateArgs) -> Res {
    let lat = lattice(&a.lattice)?;
    let cfg = lat.cfg;
    let keep_fields = a.ensemble.is_some();
    let last = lat.times.len().saturating_sub(1);
    let sites = lat.sites.clone();
    let out = simulate(
        &lat.initial,
        &cfg,
        a.replicas,
        a.seed,
        &lat.times,
        |_, k, f| {
            let at: Vec<f64> = sites.iter().map(|&i| f[i]).collect();
            let full = (keep_fields && k == last).then(|| f.to_vec());
            (at, full)
        },
    )?;

    let first = if a.moments.contains(&1.0) {
        Some(first_moment_oracle(&lat.initial, &cfg, &lat.times)?)
    } else {
        None
    };
    let second = if a.moments.contains(&2.0) {
        match second_moment_oracle(&lat.initial, &cfg, &lat.times) {
            Ok(t) => Some(t),
            Err(Error::MemoryGuard { .. }) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let cols = [
        "t",
        "x",
        "p",
        "mean",
        "stderr",
        "n_zero",
        "log_rate",
        "log_rate_stderr",
        "oracle",
        "z",
    ];
    let mut rows = Vec::new();
    let mut worst_z: f64 = 0.0;
    let mut compared = 0usize;
    for (k, &t) in lat.times.iter().enumerate() {
        for (j, &site) in lat.sites.iter().enumerate() {
            let values: Vec<f64> = out.observations.iter().map(|r| r[k].0[j]).collect();
            let x = cfg.x(site);
            for &p in &a.moments {
                let oracle = if p == 1.0 {
                    first.as_ref().map(|m| m[k][site])
                } else if p == 2.0 {
                    second.as_ref().map(|s| s.get(k, site, site))
                } else {
                    None
                };
                let row = match estimate_moment(&values, p, t, x, a.seed) {
                    Ok(m) => {
                        let z = match oracle {
                            Some(o) if m.stderr > 0.0 => (m.mean - o) / m.stderr,
                            Some(o) if m.mean == o => 0.0,
                            _ => f64::NAN,
                        };
                        if z.is_finite() {
                            worst_z = worst_z.max(z.abs());
                            compared += 1;
                        }
                        vec![
                            t,
                            x,
                            p,
                            m.mean,
                            m.stderr,
                            m.n_zero as f64,
                            m.log_rate,
                            m.log_rate_stderr,
                            oracle.unwrap_or(f64::NAN),
                            z,
                        ]
                    }
                    Err(Error::Degenerate(_)) => {
                        vec![
                            t,
                            x,
                            p,
                            0.0,
                            0.0,
                            values.len() as f64,
                            f64::NAN,
                            f64::NAN,
                            oracle.unwrap_or(f64::NAN),
                            f64::NAN,
                        ]
                    }
                    Err(e) => return Err(e.into()),
                };
                rows.push(row);
            }
        }
    }
    let status = if compared == 0 {
        Value::Null
    } else if worst_z <= a.k_sigma {
        json!("pass")
    } else {
        json!("fail")
    };
    let summary = json!({
        "config": cfg,
        "clamp_rate": out.clamp_rate(),
        "site_updates": out.site_updates,
        "max_abs_z": worst_z,
        "k_sigma": a.k_sigma,
        "status": status,
    });
    let mut table =
        Table::new(TableHeader::new("moments", &cols, ctx.run.clone()).with_summary(summary));
    table.rows = rows;

    if let Some(path) = &a.ensemble {
        let n = cfg.n_sites();
        let mut fields = Vec::with_capacity(a.replicas * n);
        for r in &out.observations {
            match r.last().and_then(|o| o.1.as_ref()) {
                Some(f) => fields.extend_from_slice(f),
                None => return Err(usage("--ensemble needs at least one observation time")),
            }
        }
        let e = Ensemble {
            config: cfg,
            initial: lat.initial.descriptor(),
            seed: a.seed,
            n_replicas: a.replicas,
            n_sites: n,
            fields,
            clamps: out.clamps,
            site_updates: out.site_updates,
        };
        write_ensemble(io::BufWriter::new(fs::File::create(path)?), &e)?;
    }
    emit(ctx, &table, a.out.as_deref())?;
    Ok(Outcome::Done)
}

pub fn oracle_cmd(ctx: &Ctx, a: &OracleArgs) -> Res {
    let lat = lattice(&a.lattice)?;
    let cfg = lat.cfg;
    let origin_only = lat.sites.iter().all(|&i| i == cfg.origin());
    let values: Vec<Vec<f64>> = match a.mode {
        OracleMode::FirstMoment => {
            let m = first_moment_oracle(&lat.initial, &cfg, &lat.times)?;
            m.iter()
                .map(|row| lat.sites.iter().map(|&i| row[i]).collect())
                .collect()
        }
        OracleMode::SecondMoment if origin_only => {
            second_moment_series(&lat.initial, &cfg, &lat.times)?
                .into_iter()
                .map(|v| vec![v; lat.sites.len()])
                .collect()
        }
        OracleMode::SecondMoment => {
            let tab = second_moment_oracle(&lat.initial, &cfg, &lat.times)?;
            (0..lat.times.len())
                .map(|k| lat.sites.iter().map(|&i| tab.get(k, i, i)).collect())
                .collect()
        }
    };
    let mut table_rows = Vec::new();
    for (k, &t) in lat.times.iter().enumerate() {
        for (j, &i) in lat.sites.iter().enumerate() {
            table_rows.push(vec![t, cfg.x(i), values[k][j]]);
        }
    }
    let mut summary = json!({"config": cfg});
    if let Some(spec) = &a.fit_window {
        let w = window(spec)?;
        let j = lat
            .sites
            .iter()
            .position(|&i| i == cfg.origin())
            .ok_or_else(|| usage("--fit-window needs x = 0 among the sites"))?;
        let logs: Vec<f64> = values.iter().map(|v| v[j].ln()).collect();
        let fit = lyapunov_slope_fit(&lat.times, &logs, &vec![0.0; logs.len()], w, None)?;
        summary["slope"] = serde_json::to_value(fit)?;
    }
    let kind = match a.mode {
        OracleMode::FirstMoment => "first_moment_oracle",
        OracleMode::SecondMoment => "second_moment_oracle",
    };
    let mut table = Table::new(
        TableHeader::new(kind, &["t", "x", "value"], ctx.run.clone()).with_summary(summary),
    );
    table.rows = table_rows;
    emit(ctx, &table, a.out.as_deref())?;
    Ok(Outcome::Done)
}

pub fn ldp_toy(ctx: &Ctx, a: &LdpToyArgs) -> Res {
    let report = cramer_toy_validate(&a.s, a.t, a.replicas, a.seed)?;
    let cols = [
        "s",
        "tilt",
        "hits",
        "tilted_rate",
        "tilted_rate_stderr",
        "tilted_slope_rate",
        "oracle_rate",
        "oracle_slope_rate",
        "ldp_rate",
        "oracle_z",
    ];
    let mut pass = true;
    let mut rows = Vec::new();
    for pt in &report.points {
        let target = pt.s * pt.s / 2.0;
        pass &= (pt.tilted_slope_rate - target).abs() <= a.rel_tol * target
            && pt.oracle_z.abs() <= a.k_sigma;
        rows.push(vec![
            pt.s,
            pt.tilt,
            pt.hits as f64,
            pt.tilted_rate,
            pt.tilted_rate_stderr,
            pt.tilted_slope_rate,
            pt.oracle_rate,
            pt.oracle_slope_rate,
            pt.ldp_rate.unwrap_or(f64::NAN),
            pt.oracle_z,
        ]);
    }
    let summary = json!({
        "window": report.window,
        "rel_tol": a.rel_tol,
        "k_sigma": a.k_sigma,
        "status": if pass { "pass" } else { "fail" },
    });
    let mut table =
        Table::new(TableHeader::new("cramer_toy", &cols, ctx.run.clone()).with_summary(summary));
    table.rows = rows;
    emit(ctx, &table, a.out.as_deref())?;
    Ok(if pass { Outcome::Done } else { Outcome::Failed })
}

pub fn report(ctx: &Ctx, a: &ReportArgs) -> Res {
    let mut inputs = Vec::with_capacity(a.inputs.len());
    for path in &a.inputs {
        inputs.push((path.display().to_string(), fs::read_to_string(path)?));
    }
    let bundle = merge(&inputs)?;
    let text = serde_json::to_string_pretty(&bundle)?;
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    if let Some(path) = &a.summary_csv {
        let mut csv = String::from("source,kind,status\n");
        for r in &bundle.summary {
            csv.push_str(&format!("{},{},{}\n", r.source, r.kind, r.status));
        }
        write_text(path, &csv)?;
    }
    let mut w = io::stdout().lock();
    if ctx.json {
        writeln!(w, "{text}")?;
    } else {
        let width = bundle
            .summary
            .iter()
            .map(|r| r.source.len())
            .max()
            .unwrap_or(6)
            .max(6);
        writeln!(w, "{:<width$}  {:<22}  status", "source", "kind")?;
        for r in &bundle.summary {
            writeln!(w, "{:<width$}  {:<22}  {}", r.source, r.kind, r.status)?;
        }
        writeln!(
            w,
            "overall: {}",
            bundle.overall.as_deref().unwrap_or("empty")
        )?;
    }
    Ok(Outcome::Done)
}
