use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};
use sut_core::density::SutDensity;
use sut_core::moments::{mardia, mardia_from_report, moments_up_to, moments_via_mixture, sample_moments, MomentReport};
use sut_core::presets::{directional, Fig1Panel};
use sut_core::quadform::{default_grid, invariance_check, quadform_pdf, QuadFormConfig};
use sut_core::sampling::Sampler;
use sut_core::transforms::{self, PartitionSpec};
use sut_core::{Block, Method, MomentSet, QmcConfig, SutParams};

use crate::args;
use crate::output::{self, emit, Format, Table};
use crate::{BlockArg, CliError, Command, Global, PointArgs, Route, TransformOp};

/// Validated global settings.
struct RunConfig {
    qmc: QmcConfig,
    /// Sampling seed (0 when not given).
    seed: u64,
    explicit_seed: Option<u64>,
    tol: f64,
    format: Option<Format>,
    out: Option<PathBuf>,
    params: Option<PathBuf>,
}

impl RunConfig {
    fn new(g: &Global) -> Result<Self, CliError> {
        if !g.qmc_points.is_power_of_two() {
            return Err(CliError::Input(format!("--qmc-points {} is not a power of two", g.qmc_points)));
        }
        if g.qmc_rand < 2 {
            return Err(CliError::Input("--qmc-rand must be at least 2 for an error estimate".into()));
        }
        if !(g.tol > 0.0 && g.tol.is_finite()) {
            return Err(CliError::Input(format!("--tol {} must be positive", g.tol)));
        }
        let mut qmc = QmcConfig::default();
        qmc.points = g.qmc_points;
        qmc.randomizations = g.qmc_rand;
        if let Some(s) = g.seed {
            qmc.seed = s;
        }
        Ok(Self {
            qmc,
            seed: g.seed.unwrap_or(0),
            explicit_seed: g.seed,
            tol: g.tol,
            format: g.format,
            out: g.out.clone(),
            params: g.params.clone(),
        })
    }

    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn params_text(&self) -> Result<String, CliError> {
        let path = self
            .params
            .as_deref()
            .ok_or_else(|| CliError::Input("--params file.json is required".into()))?;
        std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
    }

    fn params(&self) -> Result<SutParams, CliError> {
        Ok(SutParams::from_json(&self.params_text()?)?)
    }

    fn write(&self, text: &str) -> Result<(), CliError> {
        emit(text, self.out.as_deref())
    }
}

pub fn run(g: &Global, cmd: &Command) -> Result<(), CliError> {
    let rc = RunConfig::new(g)?;
    match cmd {
        Command::Pdf { points, log } => pdf(&rc, points, *log),
        Command::Cdf { points } => cdf(&rc, points),
        Command::Sample { n, method } => sample(&rc, *n, method),
        Command::Moments { route, n } => moments(&rc, *route, *n),
        Command::MardiaSweep {
            m_min,
            m_max,
            direction,
            nu,
            fraction,
        } => mardia_sweep(&rc, *m_min, *m_max, direction, nu, *fraction),
        Command::Transform { op } => transform(&rc, op),
        Command::Check => check(&rc),
        Command::Contour { preset, range, steps } => contour(&rc, preset.as_deref(), *range, *steps),
        Command::Quadform { grid, directions } => quadform(&rc, grid.as_ref(), *directions),
    }
}

fn describe(p: &SutParams) -> String {
    format!("d={} m={} nu={}", p.d(), p.m(), p.nu)
}

fn axis_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("y{j}")).collect()
}

fn evaluation_points(p: &SutParams, spec: &PointArgs) -> Result<Vec<DVector<f64>>, CliError> {
    let d = p.d();
    let mut pts = Vec::new();
    for s in &spec.point {
        let y = args::vector(s)?;
        if y.len() != d {
            return Err(CliError::Input(format!("point '{s}' has {} entries, expected {d}", y.len())));
        }
        pts.push(y);
    }
    if !spec.grid.is_empty() {
        let axes: Vec<Vec<f64>> = match spec.grid.len() {
            1 => vec![spec.grid[0].values(); d],
            k if k == d => spec.grid.iter().map(|g| g.values()).collect(),
            k => return Err(CliError::Input(format!("{k} grid specs for {d} axes"))),
        };
        let total: usize = axes.iter().map(Vec::len).product();
        for mut idx in 0..total {
            let mut y = DVector::zeros(d);
            for j in (0..d).rev() {
                let len = axes[j].len();
                y[j] = axes[j][idx % len];
                idx /= len;
            }
            pts.push(y);
        }
    }
    if pts.is_empty() {
        return Err(CliError::Input("give --grid lo:hi:steps or --point y1,..,yd".into()));
    }
    Ok(pts)
}

fn pdf(rc: &RunConfig, spec: &PointArgs, log: bool) -> Result<(), CliError> {
    let p = rc.params()?;
    let pts = evaluation_points(&p, spec)?;
    let dens = SutDensity::new(&p, &rc.qmc)?;
    let values = dens.pdf_many(&pts)?;
    let mut t = Table::new(axis_header(p.d()).into_iter().chain(["value".into(), "se".into()]));
    t.comment(format!("{} of SUT {}", if log { "log density" } else { "density" }, describe(&p)));
    t.comment("se is one standard error of the randomized-QMC estimate");
    for (y, v) in pts.iter().zip(values) {
        let (value, se) = if log {
            (v.log_value, if v.value > 0.0 { v.error_estimate / (3.0 * v.value) } else { f64::NAN })
        } else {
            (v.value, v.error_estimate / 3.0)
        };
        t.rows.push(y.iter().copied().chain([value, se]).collect());
    }
    rc.write(&t.render(rc.format(Format::Csv)))
}

fn cdf(rc: &RunConfig, spec: &PointArgs) -> Result<(), CliError> {
    let p = rc.params()?;
    let pts = evaluation_points(&p, spec)?;
    let dens = SutDensity::new(&p, &rc.qmc)?;
    let mut t = Table::new(axis_header(p.d()).into_iter().chain(["value".into(), "se".into()]));
    t.comment(format!("distribution function of SUT {}", describe(&p)));
    t.comment("se is one standard error of the randomized-QMC estimate");
    for y in &pts {
        let c = dens.cdf(y)?;
        t.rows.push(y.iter().copied().chain([c.value, c.error_estimate / 3.0]).collect());
    }
    rc.write(&t.render(rc.format(Format::Csv)))
}

fn sample(rc: &RunConfig, n: usize, method: &str) -> Result<(), CliError> {
    let p = rc.params()?;
    let method = Method::from_str(method)?;
    let batch = Sampler::new(&p)?.sample(method, n, rc.seed)?;
    let mut t = Table::new(axis_header(p.d()));
    t.comment(format!("method={method}, seed={}, n={n}", rc.seed));
    if let Some(a) = batch.acceptance {
        t.comment(format!("acceptance={a}"));
    }
    t.rows = batch.draws.row_iter().map(|r| r.iter().copied().collect()).collect();
    rc.write(&t.render(rc.format(Format::Csv)))
}

fn moment_json(set: &MomentSet) -> Value {
    let col = |v: &Option<DVector<f64>>| v.as_ref().map_or(Value::Null, |v| Value::Array(v.iter().map(|x| output::number(*x)).collect()));
    let mat = |m: &Option<DMatrix<f64>>| m.as_ref().map_or(Value::Null, output::matrix);
    json!({
        "mu1": col(&set.mu1),
        "mu2": mat(&set.mu2),
        "mu3": mat(&set.mu3),
        "mu4": mat(&set.mu4),
    })
}

fn moments(rc: &RunConfig, route: Route, n: usize) -> Result<(), CliError> {
    let p = rc.params()?;
    let (name, report): (&str, MomentReport) = match route {
        Route::Convolution => ("convolution", moments_up_to(&p, 4, &rc.qmc)?),
        Route::Mixture => ("mixture", moments_via_mixture(&p, &rc.qmc)?),
        Route::Mc => {
            let batch = Sampler::new(&p)?.sample(Method::Convolution, n, rc.seed)?;
            ("mc", sample_moments(&batch.draws, 50)?)
        }
    };
    let mardia_json = match (report.order() >= 4).then(|| mardia_from_report(&report)) {
        Some(Ok(m)) => json!({ "value": m.value, "se": m.se }),
        Some(Err(e)) => return Err(e.into()),
        None => Value::Null,
    };
    let doc = json!({
        "route": name,
        "d": p.d(),
        "m": p.m(),
        "nu": p.nu,
        "layout": "mu2 = E(YY'), mu3 = E{(Y⊗Y)Y'}, mu4 = E{(Y⊗Y)(Y⊗Y)'}; null when the order does not exist",
        "raw": { "value": moment_json(&report.raw.value), "se": moment_json(&report.raw.se) },
        "central": { "value": moment_json(&report.central.value), "se": moment_json(&report.central.se) },
        "mardia": mardia_json,
    });
    rc.write(&(serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n"))
}

fn mardia_sweep(rc: &RunConfig, m_min: usize, m_max: usize, direction: &str, nu: &str, fraction: f64) -> Result<(), CliError> {
    let dir = args::vector(direction)?;
    if dir.len() != 2 || dir.norm() == 0.0 {
        return Err(CliError::Input("--direction needs two entries, not both zero".into()));
    }
    if m_min == 0 || m_max < m_min {
        return Err(CliError::Input(format!("latent range {m_min}..{m_max} is empty or starts at 0")));
    }
    let nu = args::dof(nu)?;
    let mut t = Table::new(["m", "gamma1", "gamma2", "gamma1_se", "gamma2_se"]);
    t.comment(format!("Mardia measures, direction ({}, {}), nu={nu}, boundary fraction {fraction}", dir[0], dir[1]));
    for m in m_min..=m_max {
        let p = directional(&vec![[dir[0], dir[1]]; m], fraction, nu)?;
        let e = mardia(&p, &rc.qmc)?;
        t.rows.push(vec![m as f64, e.value.gamma1, e.value.gamma2, e.se.gamma1, e.se.gamma2]);
    }
    rc.write(&t.render(rc.format(Format::Csv)))
}

fn transform(rc: &RunConfig, op: &TransformOp) -> Result<(), CliError> {
    let p = rc.params()?;
    let leading = |d1: usize| PartitionSpec::leading(&p, d1);
    let out = match op {
        TransformOp::Linear { a, b } => {
            let a = args::matrix(a)?;
            let b = match b {
                Some(b) => args::vector(b)?,
                None => DVector::zeros(a.nrows()),
            };
            transforms::linear(&p, &a, &b)?.to_json()
        }
        TransformOp::Marginal { d1, block } => {
            let which = match block {
                BlockArg::First => Block::First,
                BlockArg::Second => Block::Second,
            };
            transforms::marginal(&p, leading(*d1)?, which)?.to_json()
        }
        TransformOp::AddMarginals => transforms::add_marginals(&p)?.to_json(),
        TransformOp::Conditional { d1, y1 } => transforms::conditional(&p, leading(*d1)?, &args::vector(y1)?)?.params.to_json(),
        TransformOp::ConditionPositive { d1 } => transforms::condition_positive(&p, leading(*d1)?)?.to_json(),
        TransformOp::ReduceLatent { m1 } => transforms::reduce_latent(&p, *m1)?.to_json(),
        TransformOp::Canonical => {
            let c = transforms::canonical(&p)?;
            let params: Value = serde_json::from_str(&c.params.to_json()).unwrap_or(Value::Null);
            serde_json::to_string_pretty(&json!({ "c": output::matrix(&c.c), "params": params })).unwrap_or_default()
        }
        TransformOp::Permute { perm } => p.permute_latent(&args::permutation(perm)?)?.to_json(),
    };
    rc.write(&(out + "\n"))
}

fn sub_model(p: &SutParams, tol: f64) -> &'static str {
    let normal = !p.nu.is_finite();
    let skew_free = p.delta.amax() <= tol && p.tau.amax() <= tol;
    match (p.m(), skew_free, normal) {
        (0, _, true) | (_, true, true) => "normal",
        (0, _, false) | (_, true, false) => "t",
        (1, _, _) if p.tau[0].abs() <= tol => if normal { "skew-normal" } else { "skew-t" },
        (1, _, _) => if normal { "extended skew-normal" } else { "extended skew-t" },
        _ => if normal { "unified skew-normal" } else { "unified skew-t" },
    }
}

/// Common off-diagonal latent correlation, when there is one.
fn equicorrelation(p: &SutParams, tol: f64) -> Option<f64> {
    let m = p.m();
    if m < 2 {
        return None;
    }
    let rho = p.gamma_bar[(0, 1)];
    let all = (0..m).all(|i| (0..m).all(|j| i == j || (p.gamma_bar[(i, j)] - rho).abs() <= tol));
    all.then_some(rho)
}

fn check(rc: &RunConfig) -> Result<(), CliError> {
    let text = rc.params_text()?;
    let p: SutParams = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("parse error: {e}")))?;
    let violations: Vec<String> = p.validate().iter().map(ToString::to_string).collect();
    let valid = violations.is_empty();
    let mut doc = json!({ "valid": valid, "violations": violations, "d": p.d(), "m": p.m(), "nu": p.nu });
    if valid {
        let canonical = match transforms::canonical(&p) {
            Ok(c) => json!({ "exists": true, "coordinates": c.params.d() }),
            Err(e) => json!({ "exists": false, "reason": e.to_string() }),
        };
        let equi = equicorrelation(&p, rc.tol).map_or(Value::Null, |rho| {
            json!({ "rho": rho, "st_limit_advisory": rho > sut_core::params::ST_LIMIT_RHO })
        });
        let inv = invariance_check(&p)?;
        doc["sub_model"] = json!(sub_model(&p, rc.tol));
        doc["equicorrelation"] = equi;
        doc["canonical_form"] = canonical;
        doc["redundant_latent"] = json!(transforms::redundant_latent(&p));
        doc["quadratic_form_invariant"] = json!(inv.invariant);
        doc["identifiable_up_to_permutation"] = json!(p.m() <= 1);
    }
    rc.write(&(serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n"))?;
    if valid {
        Ok(())
    } else {
        Err(CliError::Input("parameters are invalid".into()))
    }
}

fn contour(rc: &RunConfig, preset: Option<&str>, range: args::RangeSpec, steps: usize) -> Result<(), CliError> {
    let (label, p) = match preset {
        Some(name) => {
            let panel = Fig1Panel::from_name(name).ok_or_else(|| {
                let names: Vec<String> = Fig1Panel::all().iter().map(Fig1Panel::name).collect();
                CliError::Input(format!("unknown preset '{name}' (known: {})", names.join(", ")))
            })?;
            (panel.name(), panel.params()?)
        }
        None => ("params".to_string(), rc.params()?),
    };
    if p.d() != 2 {
        return Err(CliError::Input(format!("contour needs d = 2, got {}", p.d())));
    }
    if steps < 2 {
        return Err(CliError::Input("--steps must be at least 2".into()));
    }
    let axis = args::GridSpec {
        lo: range.lo,
        hi: range.hi,
        steps,
    }
    .values();
    let pts: Vec<DVector<f64>> = axis
        .iter()
        .flat_map(|&a| axis.iter().map(move |&b| DVector::from_vec(vec![a, b])))
        .collect();
    let values = SutDensity::new(&p, &rc.qmc)?.pdf_many(&pts)?;
    let mut t = Table::new(["y1", "y2", "value", "se"]);
    t.comment(format!("contour {label}: {}", describe(&p)));
    t.comment(format!("params {}", serde_json::to_string(&p).unwrap_or_default()));
    for (y, v) in pts.iter().zip(values) {
        t.rows.push(vec![y[0], y[1], v.value, v.error_estimate / 3.0]);
    }
    rc.write(&t.render(rc.format(Format::Csv)))
}

fn quadform(rc: &RunConfig, grid: Option<&args::GridSpec>, directions: usize) -> Result<(), CliError> {
    let p = rc.params()?;
    let values = match grid {
        Some(g) if g.lo < 0.0 => return Err(CliError::Input("quadratic-form grid must be non-negative".into())),
        Some(g) => g.values(),
        None => default_grid(&p)?,
    };
    let mut cfg = QuadFormConfig {
        directions,
        qmc: rc.qmc,
        ..QuadFormConfig::default()
    };
    if let Some(s) = rc.explicit_seed {
        cfg.seed = s;
    }
    let est = quadform_pdf(&p, &values, &cfg)?;
    let inv = invariance_check(&p)?;
    let mut t = Table::new(["v", "density", "se"]);
    t.comment(format!("density of (Y-xi)' Omega^-1 (Y-xi) for SUT {}", describe(&p)));
    t.comment(format!("invariant (symmetric law): {}", inv.invariant));
    t.rows = est
        .grid
        .iter()
        .zip(&est.density)
        .zip(&est.se)
        .map(|((v, f), s)| vec![*v, *f, *s])
        .collect();
    rc.write(&t.render(rc.format(Format::Csv)))
}
