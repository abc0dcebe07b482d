//! One function per command. Each writes its artifacts and returns whether
//! every asserted check passed.

use std::path::Path;

use heisenkern::ccdist::{self, OptimizerConfig};
use heisenkern::group::GroupElement;
use heisenkern::heatkernel::{self, Axis, KernelQuery};
use heisenkern::io::{self, CheckReport};
use heisenkern::lsi::{self, ScanConfig};
use heisenkern::sampler::{self, BrownianConfig, Lift};
use heisenkern::{calculus, symplectic};
use serde_json::json;

use crate::config::{err, Command, Config, ConfigError, MapKind, DEFAULT_FIELDS};
use crate::output::Outputs;
use crate::plot;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(heisenkern::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<heisenkern::Error> for RunError {
    fn from(e: heisenkern::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    /// Bad inputs are usage errors (1); numerical failures count as a
    /// failed check (2).
    pub fn exit_code(&self) -> i32 {
        use heisenkern::Error as E;
        match self {
            RunError::Config(_) | RunError::Io(_) => 1,
            RunError::Core(E::Input(_) | E::Parse(_) | E::Structural(_) | E::Io(_) | E::Json(_)) => 1,
            RunError::Core(_) => 2,
        }
    }
}

pub type RunResult = Result<bool, RunError>;

pub fn run(command: Command, cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    match command {
        Command::Normalize => normalize(cfg, base, out),
        Command::Kernel => kernel(cfg, base, out),
        Command::Sample => sample(cfg, base, out),
        Command::LsiScan => lsi_scan(cfg, base, out),
        Command::TensorCheck => tensor_check(cfg, out),
        Command::Distance => distance(cfg, base, out),
        Command::Cascade => cascade(cfg, out),
        Command::Pushforward => pushforward(cfg, base, out),
        Command::Plot => plot_artifact(cfg, base, out),
    }
}

fn emit_plot(out: &mut Outputs, stem: &str, p: &plot::Plot) -> std::io::Result<()> {
    out.text(&format!("{stem}.dat"), &plot::to_dat(p))?;
    out.text(&format!("{stem}.svg"), &plot::to_svg(p))
}

fn normalize(cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    let file = cfg.matrix.as_ref().ok_or_else(|| err("matrix", "required"))?;
    let nf = cfg.normal_form(base, file)?;
    let basis: Vec<Vec<f64>> = (0..nf.basis.nrows()).map(|i| nf.basis.row(i).iter().copied().collect()).collect();
    let pass = nf.residual <= symplectic::RESIDUAL_TOL;
    out.json("normal_form.json", &json!({ "alphas": nf.alphas, "residual": nf.residual, "basis": basis, "pass": pass }))?;
    out.text("basis.csv", &io::matrix_to_csv(&nf.basis))?;
    Ok(pass)
}

fn parse_axis(name: &str, n: usize) -> Result<Axis, ConfigError> {
    if name == "z" {
        return Ok(Axis::Vertical);
    }
    let bad = || err("profile", format!("unknown axis {name:?}; use z, x1, y1, …"));
    let (head, idx) = name.split_at(1.min(name.len()));
    let i: usize = idx.parse().map_err(|_| bad())?;
    if i == 0 || i > n {
        return Err(bad());
    }
    match head {
        "x" => Ok(Axis::Horizontal(2 * (i - 1))),
        "y" => Ok(Axis::Horizontal(2 * (i - 1) + 1)),
        _ => Err(bad()),
    }
}

fn kernel(cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    let ctx = cfg.context(base)?;
    let ts = cfg.times()?;
    let tol = cfg.tol.unwrap_or(1e-8);
    let mut pass = true;
    let mut did_something = false;

    if let Some(coords) = &cfg.g {
        did_something = true;
        let g = GroupElement::from_coords(coords).map_err(|e| err("g", e.to_string()))?;
        if g.v.len() != 2 * ctx.n() {
            return Err(err("g", format!("needs {} coordinates", ctx.dim())).into());
        }
        let mut rows = Vec::new();
        for &t in &ts {
            let kv = heatkernel::density_detailed(&KernelQuery::with_default_tol(ctx.clone(), t, g.clone())?)?;
            let reference = match cfg.expect {
                Some(e) => Some(e),
                None if ctx.n() == 1 && g.v.iter().all(|c| *c == 0.0) => {
                    Some(heatkernel::vertical_closed_form(ctx.alpha(0), t, g.z))
                }
                None => None,
            };
            let check = reference.map(|r| CheckReport::absolute(kv.value, r, tol));
            pass &= check.as_ref().is_none_or(|c| c.pass);
            rows.push(json!({ "t": t, "g": coords, "density": kv.value, "error": kv.error, "check": check }));
        }
        out.json("kernel.json", &json!({ "alphas": ctx.alphas(), "points": rows, "pass": pass }))?;
    }

    if let Some(axis_name) = &cfg.profile {
        did_something = true;
        let axis = parse_axis(axis_name, ctx.n())?;
        let [lo, hi] = cfg.range.unwrap_or([-2.0, 2.0]);
        if !(lo < hi) {
            return Err(err("range", "needs lo < hi").into());
        }
        let count = cfg.points.unwrap_or(101);
        for &t in &ts {
            let rows = heatkernel::density_profile(&ctx, t, axis, (lo, hi), count)?;
            let stem = format!("profile_{axis_name}_t{}", io::fmt(t));
            out.text(&format!("{stem}.csv"), &io::profile_to_csv(&rows))?;
            let mut p = plot::from_artifact(&io::profile_to_csv(&rows)).map_err(|e| err("profile", e))?;
            if axis == Axis::Vertical && ctx.n() == 1 {
                p.series.push(plot::Series {
                    name: "closed form".into(),
                    points: rows.iter().map(|&(z, _)| (z, heatkernel::vertical_closed_form(ctx.alpha(0), t, z))).collect(),
                    reference: true,
                });
            }
            emit_plot(out, &stem, &p)?;
        }
    }

    if cfg.normalization == Some(true) {
        did_something = true;
        let ntol = cfg.tol.unwrap_or(1e-6);
        let mut reports = Vec::new();
        for &t in &ts {
            let r = heatkernel::normalization_check(&ctx, t, ntol)?;
            pass &= r.pass;
            reports.push(json!({ "t": t, "report": r }));
        }
        out.json("normalization.json", &reports)?;
    }

    if let Some(s) = cfg.semigroup_s {
        did_something = true;
        let coords = cfg.g.clone().unwrap_or_else(|| vec![0.0; ctx.dim()]);
        let g = GroupElement::from_coords(&coords).map_err(|e| err("g", e.to_string()))?;
        let mut reports = Vec::new();
        for &t in &ts {
            let r = heatkernel::semigroup_check(&ctx, t, s, &g, cfg.samples()?, cfg.steps()?, cfg.seed()?)?;
            pass &= r.pass;
            reports.push(json!({ "t": t, "s": s, "report": r }));
        }
        out.json("semigroup.json", &reports)?;
    }

    if !did_something {
        return Err(err("g", "nothing to do: set g, profile, normalization or semigroup_s").into());
    }
    Ok(pass)
}

fn sample(cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    let ctx = cfg.context(base)?;
    let bc = BrownianConfig::new(ctx.clone(), cfg.time()?, cfg.steps()?, cfg.samples()?, cfg.seed()?)?;
    let batch = sampler::sample_measure(&bc);
    out.text("samples.csv", &batch.to_csv())?;
    let moments = sampler::moment_report(&bc, &batch);
    let mut pass = moments.pass;
    out.json("moments.json", &moments)?;
    if ctx.n() == 1 {
        let ks = sampler::mc_vs_quadrature(&bc, 256)?;
        pass &= ks.pass;
        out.json("ks.json", &ks.tests)?;
    }
    Ok(pass)
}

fn lsi_scan(cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    let ctxs = cfg.contexts(base)?;
    let fields: Vec<String> =
        cfg.fields.clone().unwrap_or_else(|| DEFAULT_FIELDS.iter().map(|s| s.to_string()).collect());
    for f in &fields {
        calculus::catalog::<f64>(f, 1).map_err(|e| err("fields", e.to_string()))?;
    }
    let sc = ScanConfig { samples: cfg.samples()?, m: cfg.steps()?, seed: cfg.seed()? };
    let scan = lsi::lsi_scan(&fields, &ctxs, &cfg.times()?, sc)?;
    let csv = scan.to_csv();
    out.text("lsi_scan.csv", &csv)?;
    let pass = scan.pass();
    out.json(
        "lsi_summary.json",
        &json!({
            "config": scan.config,
            "sups": scan.sups,
            "assertions": {
                "time_scaling": scan.time_scaling,
                "dimension_free": scan.dimension_free,
                "exponential_law": scan.exponential_law,
                "t_linearity": scan.t_linearity,
            },
            "failures": scan.failures,
            "pass": pass,
        }),
    )?;
    if !scan.records.is_empty() {
        emit_plot(out, "lsi_scan", &plot::from_artifact(&csv).map_err(|e| err("fields", e))?)?;
    }
    Ok(pass)
}

fn tensor_check(cfg: &Config, out: &mut Outputs) -> RunResult {
    let [a, b] = cfg.factors.ok_or_else(|| err("factors", "required, e.g. [1.0, 3.0]"))?;
    let first = heisenkern::group::GroupContext::new(vec![a]).map_err(|e| err("factors", e.to_string()))?;
    let second = heisenkern::group::GroupContext::new(vec![b]).map_err(|e| err("factors", e.to_string()))?;
    let f = calculus::catalog(cfg.f.as_deref().unwrap_or("exp_x1:1"), 1).map_err(|e| err("f", e.to_string()))?;
    let h = calculus::catalog(cfg.h.as_deref().unwrap_or("exp_x1:1"), 1).map_err(|e| err("h", e.to_string()))?;
    let rep = lsi::tensorization_check(&first, &second, cfg.time()?, &f, &h, cfg.samples()?, cfg.steps()?, cfg.seed()?)?;
    out.json("tensor.json", &json!({ "f": f.name(), "h": h.name(), "factors": [a, b], "report": rep }))?;
    Ok(rep.pass)
}

fn distance(cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    let ctx = cfg.context(base)?;
    let coords = cfg.g.as_ref().ok_or_else(|| err("g", "required target (x1, y1, …, z)"))?;
    let g = GroupElement::from_coords(coords).map_err(|e| err("g", e.to_string()))?;
    if g.v.len() != 2 * ctx.n() {
        return Err(err("g", format!("needs {} coordinates", ctx.dim())).into());
    }
    let k = cfg.segments.unwrap_or(64);
    let opt = OptimizerConfig { starts: cfg.starts.unwrap_or(8), ..OptimizerConfig::default() };
    let seed = cfg.seed.unwrap_or(0);
    let est = ccdist::estimate_distance(&ctx, &g, k, &opt, seed)?;
    let mut report = est.to_json();
    report["target"] = json!(coords);
    report["seed"] = json!(seed);
    out.json("distance.json", &report)?;
    let path_csv = est.path.to_csv();
    out.text("path.csv", &path_csv)?;
    emit_plot(out, "path", &plot::from_artifact(&path_csv).map_err(|e| err("g", e))?)?;
    let mut pass = true;
    if let Some(lambdas) = &cfg.lambdas {
        let hom = ccdist::homogeneity_check(&ctx, &g, lambdas, k, &opt, seed)?;
        pass &= hom.pass;
        out.json("homogeneity.json", &hom)?;
    }
    Ok(pass)
}

fn cascade(cfg: &Config, out: &mut Outputs) -> RunResult {
    let alphas = sampler::dyadic_alphas(cfg.n_max.unwrap_or(12));
    let table = sampler::projection_cascade(&alphas, cfg.time()?, cfg.samples()?, cfg.steps()?, cfg.seed()?)?;
    let csv = table.to_csv();
    out.text("cascade.csv", &csv)?;
    out.json("cascade.json", &table)?;
    emit_plot(out, "cascade", &plot::from_artifact(&csv).map_err(|e| err("n_max", e))?)?;
    Ok(table.monotone)
}

fn pushforward(cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    let map = cfg.map.ok_or_else(|| err("map", "required: f, pi or pi_omega"))?;
    let (t, samples, steps, seed) = (cfg.time()?, cfg.samples()?, cfg.steps()?, cfg.seed()?);
    let ctx = cfg.context(base)?;
    let (report, control) = match map {
        MapKind::F => {
            if ctx.n() != 1 {
                return Err(err("alphas", "map f acts on H¹: give a single alpha").into());
            }
            let alpha = ctx.alpha(0);
            let report = sampler::pushforward_f_check(alpha, t, samples, steps, seed)?;
            let control = match cfg.control_alpha {
                Some(c) => Some(sampler::pushforward_f_compare(alpha, c, t, samples, steps, seed)?),
                None => None,
            };
            (report, control)
        }
        MapKind::Pi | MapKind::PiOmega => {
            if cfg.control_alpha.is_some() {
                return Err(err("control_alpha", "only used with map = \"f\"").into());
            }
            let lift = if map == MapKind::Pi { Lift::Pi } else { Lift::PiOmega };
            (sampler::pushforward_pi_check(&ctx, lift, t, samples, steps, seed)?, None)
        }
    };
    // The negative control must be detected by at least one test.
    let control_separated = control.as_ref().map(|c| c.tests.iter().any(|r| !r.pass));
    let pass = report.pass && control_separated.unwrap_or(true);
    out.json(
        "pushforward.json",
        &json!({
            "map": map,
            "tests": report.tests,
            "control": control.as_ref().map(|c| &c.tests),
            "control_separated": control_separated,
            "pass": pass,
        }),
    )?;
    Ok(pass)
}

fn plot_artifact(cfg: &Config, base: &Path, out: &mut Outputs) -> RunResult {
    let file = cfg.artifact.as_ref().ok_or_else(|| err("artifact", "required"))?;
    let path = base.join(file);
    let text =
        std::fs::read_to_string(&path).map_err(|e| err("artifact", format!("cannot read {}: {e}", path.display())))?;
    let p = plot::from_artifact(&text).map_err(|e| err("artifact", e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
    emit_plot(out, &stem, &p)?;
    Ok(true)
}
