//! Subcommand implementations.

use std::path::PathBuf;

use she_moments::asymptotics::{growth_indices, phase_classify, theta_white_noise_alt, upper_index};
use she_moments::moments::{two_point_bounds, BoundOptions};
use she_moments::sim::{simulate, validate_moments, SimConfig, SimError, SimResult};
use she_moments::spectral::{default_beta_grid, equivalence_report_on, upsilon_closed_form, Limit};

use crate::config::RunConfig;
use crate::output::{svg_chart, Cell, Format, Series, Table};
use crate::CliError;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub format: Format,
}

impl Context {
    fn write(&self, table: &Table, stem: &str) -> Result<PathBuf, CliError> {
        table.write(&self.out, stem, self.format)
    }

    fn write_svg(&self, stem: &str, svg: String) -> Result<PathBuf, CliError> {
        let path = self.out.join(format!("{stem}.svg"));
        std::fs::write(&path, svg).map_err(crate::output::io_err)?;
        Ok(path)
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .or(self.cfg.seed)
            .ok_or_else(|| CliError::Config("no seed: pass --seed or set `seed`".into()))
    }
}

fn num(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::InvalidConfig(_) | SimError::StabilityViolated { .. } => CliError::Config(e.to_string()),
        other => CliError::Numeric(other.to_string()),
    }
}

fn limit_cell(l: Limit) -> Cell {
    match l {
        Limit::Finite(v) => Cell::Num(v),
        Limit::Divergent => Cell::Text("DIVERGENT".into()),
    }
}

pub fn cmd_kernel(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let kernel = ctx.cfg.kernel()?;
    let p = ctx.cfg.heat()?;
    let g = ctx.cfg.section(&ctx.cfg.grid, "grid")?;
    if !(g.t_min > 0.0 && g.t_max > g.t_min && g.points >= 2) {
        return Err(CliError::Config("grid needs 0 < t_min < t_max and points >= 2".into()));
    }
    let times: Vec<f64> = (0..g.points)
        .map(|i| {
            let s = i as f64 / (g.points - 1) as f64;
            if g.log {
                g.t_min * (g.t_max / g.t_min).powf(s)
            } else {
                g.t_min + (g.t_max - g.t_min) * s
            }
        })
        .collect();
    let mut table = Table::new(&["t [time]", "k [f]", "h1 [f*time]"]);
    let mut ks = Vec::new();
    let mut hs = Vec::new();
    for &t in &times {
        let k = kernel.k_of_t(&p, t).map_err(num)?;
        let h = kernel.h1(&p, t).map_err(num)?;
        table.push(vec![t.into(), k.into(), h.into()]);
        ks.push((t, k));
        hs.push((t, h));
    }
    let svg = svg_chart(
        &format!("{} kernel, nu = {}", kernel.name(), p.nu()),
        "t",
        "value",
        &[
            Series {
                label: "k(t)",
                points: ks,
            },
            Series {
                label: "h_1(t)",
                points: hs,
            },
        ],
        g.log,
        true,
    );
    Ok(vec![ctx.write(&table, "kernel")?, ctx.write_svg("kernel", svg)?])
}

pub fn cmd_upsilon(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let kernel = ctx.cfg.kernel()?;
    let p = ctx.cfg.heat()?;
    let betas = ctx
        .cfg
        .upsilon
        .as_ref()
        .map_or_else(default_beta_grid, |u| u.betas.clone());
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0)) {
        return Err(CliError::Config("upsilon betas must be positive".into()));
    }
    let report = equivalence_report_on(&kernel, &p, &betas).map_err(num)?;
    let mut table = Table::new(&[
        "beta [1/length^2]",
        "upsilon [f*length^2]",
        "upsilon_closed_form [f*length^2]",
    ]);
    for (b, v) in &report.upsilon_at {
        table.push(vec![
            (*b).into(),
            limit_cell(*v),
            upsilon_closed_form(&kernel, *b).into(),
        ]);
    }
    let summary = Table::key_value(vec![
        ("kernel", report.kernel.clone().into()),
        ("dim", report.dim.into()),
        ("nu", report.nu.into()),
        ("upsilon_zero", limit_cell(report.upsilon_zero)),
        ("iff2_integral", limit_cell(report.iff2_value)),
        ("h1_limit", limit_cell(report.h1_limit)),
        ("h1_limit_via_upsilon", limit_cell(report.h1_limit_via_upsilon)),
        ("dalang_ok", report.dalang_ok.into()),
        ("monotone", report.monotone.into()),
        ("consistent", report.consistent.into()),
    ]);
    Ok(vec![
        ctx.write(&table, "upsilon")?,
        ctx.write(&summary, "upsilon_summary")?,
    ])
}

pub fn cmd_phase(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let kernel = ctx.cfg.kernel()?;
    let p = ctx.cfg.heat()?;
    let s = ctx.cfg.section(&ctx.cfg.phase, "phase")?;
    let r = phase_classify(&kernel, &p, s.lip, s.lip_upper).map_err(|e| match e {
        she_moments::asymptotics::AsymptoticsError::InvalidInput(m) => CliError::Config(m),
        other => num(other),
    })?;
    let mut pairs: Vec<(&str, Cell)> = vec![
        ("kernel", r.kernel.clone().into()),
        ("dim", r.dim.into()),
        ("nu", r.nu.into()),
        ("lip", r.lip.into()),
        ("Lip", r.lip_upper.into()),
        ("upsilon_zero", limit_cell(r.upsilon_zero)),
        ("verdict", r.verdict.label().into()),
        ("lambda_c_lower", r.lambda_c_lower.into()),
        ("lambda_c_lower_alt", r.lambda_c_lower_alt.into()),
        ("lambda_c_upper_estimate", r.lambda_c_upper_estimate.into()),
        ("theta_subcritical_bound", r.theta_subcritical_bound.into()),
        ("theta_subcritical_alt", r.theta_subcritical_alt.into()),
        ("bounded_regime", r.bounded_regime.into()),
    ];
    for n in &r.notes {
        pairs.push(("note", n.clone().into()));
    }
    Ok(vec![ctx.write(&Table::key_value(pairs), "phase")?])
}

pub fn cmd_fronts(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let kernel = ctx.cfg.kernel()?;
    let p = ctx.cfg.heat()?;
    let s = ctx.cfg.section(&ctx.cfg.fronts, "fronts")?;
    if s.lambdas.is_empty() || s.lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(CliError::Config("fronts lambdas must be nonnegative".into()));
    }
    let mut table = Table::new(&[
        "lambda [1]",
        "nu [length^2/time]",
        "beta [1/length]",
        "theta [1/time]",
        "theta_alt [1/time]",
        "theta_star_numeric [1/time]",
        "theta_star_analytic [1/time]",
        "lower_index [length/time]",
        "lower_index_numeric [length/time]",
        "upper_index [length/time]",
        "upper_index_alt_theta [length/time]",
        "optimized_upper [length/time]",
        "lower_le_upper [bool]",
    ]);
    for &lam in &s.lambdas {
        let beta = s.beta.unwrap_or(lam * lam / p.nu());
        if !(beta > 0.0) {
            return Err(CliError::Config(
                "beta must be positive (set beta when lambda = 0)".into(),
            ));
        }
        let r = growth_indices(&kernel, &p, lam, lam, beta, s.all_exp_moments).map_err(num)?;
        let alt = kernel
            .is_white_noise()
            .then(|| theta_white_noise_alt(lam * lam, p.nu()));
        table.push(vec![
            lam.into(),
            p.nu().into(),
            beta.into(),
            r.theta.into(),
            alt.into(),
            r.theta_star.numeric_limit.into(),
            r.theta_star.analytic_lower_bound.into(),
            r.lower_index.into(),
            r.lower_index_numeric.into(),
            r.upper_index.into(),
            alt.map(|th| upper_index(kernel.dim(), p.nu(), beta, th)).into(),
            r.optimized_upper.into(),
            (r.lower_index <= r.upper_index && r.lower_index_numeric.is_none_or(|v| v <= r.upper_index)).into(),
        ]);
    }
    Ok(vec![ctx.write(&table, "fronts")?])
}

pub fn cmd_moments(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let kernel = ctx.cfg.kernel()?;
    let p = ctx.cfg.heat()?;
    let mu = ctx.cfg.measure()?;
    let s = ctx.cfg.section(&ctx.cfg.moments, "moments")?;
    let d = kernel.dim();
    let mut opts = BoundOptions::default();
    if let Some(n) = s.n_steps {
        opts.n_steps = n;
    }
    let mut headers = vec!["t [time]".to_string()];
    headers.extend((1..=d).map(|i| format!("x_{i} [length]")));
    headers.extend((1..=d).map(|i| format!("xp_{i} [length]")));
    headers.extend(["lower [u^2]".to_string(), "upper [u^2]".to_string(), "mode".to_string()]);
    let mut table = Table {
        headers,
        rows: Vec::new(),
    };
    for pt in &s.points {
        if pt.x.len() != d || pt.xp.len() != d {
            return Err(CliError::Config(format!("moment point needs {d}-dimensional x and xp")));
        }
        let b = two_point_bounds(&mu, &kernel, &p, s.lip, s.lip_upper, pt.t, &pt.x, &pt.xp, &opts).map_err(
            |e| match e {
                she_moments::moments::MomentError::InvalidInput(m) => CliError::Config(m),
                other => num(other),
            },
        )?;
        let mut row: Vec<Cell> = vec![pt.t.into()];
        row.extend(pt.x.iter().map(|v| Cell::from(*v)));
        row.extend(pt.xp.iter().map(|v| Cell::from(*v)));
        row.extend([b.lower.into(), b.upper.into(), b.mode.as_str().into()]);
        table.push(row);
    }
    Ok(vec![ctx.write(&table, "moments")?])
}

fn sim_config(ctx: &Context) -> Result<SimConfig, CliError> {
    let s = ctx.cfg.section(&ctx.cfg.simulate, "simulate")?;
    Ok(SimConfig {
        kernel: ctx.cfg.kernel()?,
        p: ctx.cfg.heat()?,
        rho: s.rho.build()?,
        mu: ctx.cfg.measure()?,
        half_width: s.half_width,
        n_x: s.n_x,
        t_max: s.t_max,
        n_t: s.n_t,
        n_paths: s.n_paths,
        seed: ctx.seed()?,
        antithetic: s.antithetic,
        targets: s.targets.iter().map(|t| t.target()).collect(),
    })
}

fn target_table(r: &SimResult) -> Table {
    let mut t = Table::new(&[
        "t [time]",
        "x [length]",
        "x_prime [length]",
        "estimate [u^2]",
        "stderr [u^2]",
    ]);
    for e in &r.targets {
        t.push(vec![
            e.target.t.into(),
            e.target.x.into(),
            e.target.xp.into(),
            e.estimate.into(),
            e.stderr.into(),
        ]);
    }
    t
}

pub fn cmd_simulate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let cfg = sim_config(ctx)?;
    let r = simulate(&cfg).map_err(sim_err)?;
    let mut field = Table::new(&["x [length]", "mean_u [u]", "stderr [u]", "j0 [u]"]);
    let mut mc = Vec::new();
    let mut exact = Vec::new();
    for i in 0..r.grid.n {
        let x = r.grid.node(i);
        let j0 = cfg.mu.j0(&cfg.p, cfg.t_max, &[x]).map_err(num)?;
        field.push(vec![
            x.into(),
            r.first_moment[i].into(),
            r.first_moment_stderr[i].into(),
            j0.into(),
        ]);
        mc.push((x, r.first_moment[i]));
        exact.push((x, j0));
    }
    let meta = Table::key_value(vec![
        ("n_paths", r.n_paths.into()),
        ("n_batches", r.n_batches.into()),
        ("seed", Cell::Text(r.seed.to_string())),
        ("dx", r.grid.dx.into()),
        ("dt", r.dt.into()),
        ("n_t", r.n_t.into()),
        ("sampler", r.sampler.into()),
        ("clamped_fraction", r.clamped_fraction.into()),
        ("positivity_flags", r.positivity_flags.into()),
        ("min_value", r.min_value.into()),
    ]);
    let svg = svg_chart(
        &format!("mean u at t = {}", cfg.t_max),
        "x",
        "u",
        &[
            Series {
                label: "Monte Carlo",
                points: mc,
            },
            Series {
                label: "J_0",
                points: exact,
            },
        ],
        false,
        false,
    );
    Ok(vec![
        ctx.write(&target_table(&r), "sim_targets")?,
        ctx.write(&field, "sim_first_moment")?,
        ctx.write(&meta, "sim_meta")?,
        ctx.write_svg("sim_first_moment", svg)?,
    ])
}

pub fn cmd_validate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let cfg = sim_config(ctx)?;
    if cfg.targets.is_empty() {
        return Err(CliError::Config("validate needs [[simulate.targets]]".into()));
    }
    let report = validate_moments(&cfg, &cfg.targets, &BoundOptions::default()).map_err(sim_err)?;
    let mut t = Table::new(&[
        "t [time]",
        "x [length]",
        "x_prime [length]",
        "estimate [u^2]",
        "stderr [u^2]",
        "bias_allowance [u^2]",
        "bound_lower [u^2]",
        "bound_upper [u^2]",
        "pass [bool]",
    ]);
    for r in &report.rows {
        t.push(vec![
            r.target.t.into(),
            r.target.x.into(),
            r.target.xp.into(),
            r.estimate.into(),
            r.stderr.into(),
            r.bias_allowance.into(),
            r.lower.into(),
            r.upper.into(),
            r.pass.into(),
        ]);
    }
    let path = ctx.write(&t, "validation")?;
    if !report.all_pass() {
        let failed = report.rows.iter().filter(|r| !r.pass).count();
        return Err(CliError::Validation(format!(
            "{failed} of {} targets outside the envelope (see {})",
            report.rows.len(),
            path.display()
        )));
    }
    Ok(vec![path])
}
