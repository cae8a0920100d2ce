//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use csrg::governor::{stability_diagnostics, Algorithm, GovernorConfig};
use csrg::model::ClosedLoopModel;
use csrg::oinf::{
    build_oinf, gamma_compare, project_with, JointMode, OinfOptions, OinfResult, Recommendation,
};
use csrg::prob::Probability;
use csrg::sim::{monte_carlo, run_closed_loop, McOptions, RngStream, SimSetup};

use crate::config::{CompareConfig, GovernorChoice, Resolved};
use crate::modelfile;
use crate::output::{fmt_f64, write_atomic, Header};
use crate::setfile::{self, SET_KIND};
use crate::trace::{TraceFile, TRACE_KIND};

pub const REPORT_KIND: &str = "montecarlo/1";
pub const FREQUENCY_KIND: &str = "frequency/1";
pub const POINTS_KIND_2D: &str = "projection-2d/1";
pub const POINTS_KIND_3D: &str = "projection-3d/1";
pub const GAMMA_KIND: &str = "gamma/1";

/// Files written by one command.
#[derive(Debug, Default)]
pub struct Written(pub Vec<PathBuf>);

impl Written {
    fn put(&mut self, path: PathBuf, contents: &[u8]) -> anyhow::Result<()> {
        write_atomic(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.0.push(path);
        Ok(())
    }
}

fn header(run: &Resolved, kind: &str) -> Header {
    Header::new(kind, &run.config.hash(), run.config.seed, &run.model.name)
}

fn options(run: &Resolved) -> OinfOptions {
    let mut o = OinfOptions::new(run.model.v_box.clone());
    o.eps_rel = run.config.eps_rel;
    o.t_max = run.config.tmax;
    o
}

/// The closed loop and the admissible set, read from `--set` when given.
fn model_and_set(run: &Resolved) -> anyhow::Result<(ClosedLoopModel, OinfResult)> {
    let m = run.model.assemble(run.settings.clone())?;
    let res = match &run.config.set {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let (_, res) = setfile::from_toml(&text)
                .with_context(|| format!("in set file {}", p.display()))?;
            let d = m.dims();
            if (res.set.n_xp, res.set.n_xu, res.set.n_v) != (d.n_xp, d.n_xu, d.n_v) {
                bail!(
                    "set file {} does not match the model dimensions",
                    p.display()
                );
            }
            res
        }
        None => build_oinf(&m, &run.model.spec, &options(run))?,
    };
    Ok((m, res))
}

fn governor(
    run: &Resolved,
    m: &ClosedLoopModel,
    res: OinfResult,
) -> anyhow::Result<Option<GovernorConfig>> {
    let alg = match run.config.governor {
        GovernorChoice::Off => return Ok(None),
        GovernorChoice::Alg1 => Algorithm::Alg1,
        GovernorChoice::Alg2 => Algorithm::Alg2,
    };
    let lm = &run.model;
    Ok(Some(GovernorConfig::new(
        m,
        lm.q.clone(),
        lm.r.clone(),
        lm.delta,
        alg,
        res,
    )?))
}

fn joint_gamma(run: &Resolved) -> Option<(Probability, f64, Recommendation)> {
    let spec = &run.model.spec;
    match spec.mode {
        JointMode::Individual => None,
        JointMode::RiskAllocation(b) | JointMode::ConfidenceEllipsoid(b) => {
            gamma_compare(spec.n_y(), spec.n_g(), b)
                .ok()
                .map(|(g, r)| (b, g, r))
        }
    }
}

pub fn build_set(run: &Resolved) -> anyhow::Result<Written> {
    let t0 = Instant::now();
    let m = run.model.assemble(run.settings.clone())?;
    let res = build_oinf(&m, &run.model.spec, &options(run))?;
    let mut out = Written::default();
    let dir = &run.config.out;
    out.put(
        dir.join("set.toml"),
        setfile::to_toml(header(run, SET_KIND), &res)?.as_bytes(),
    )?;

    let mut rep = String::new();
    let h = header(run, "build-report/1");
    writeln!(rep, "{} {} set construction report", h.tool, h.version)?;
    writeln!(rep, "config hash: {}", h.config_hash)?;
    writeln!(rep, "model: {}", run.model.name)?;
    writeln!(rep, "mode: {}", run.config.mode.as_str())?;
    writeln!(rep, "t*: {}", res.t_star)?;
    writeln!(rep, "rows: {}", res.set.len())?;
    writeln!(
        rep,
        "steady-state reference rows: {}",
        res.tilde_omega.len()
    )?;
    writeln!(rep, "reference center: {:?}", res.reference_center)?;
    if let Some((b, g, rec)) = joint_gamma(run) {
        writeln!(
            rep,
            "Gamma({}, {}, {}) = {:.6} ({:?} is less conservative)",
            run.model.spec.n_y(),
            run.model.spec.n_g(),
            b.value(),
            g,
            rec
        )?;
    }
    writeln!(rep, "elapsed: {:.3} s", t0.elapsed().as_secs_f64())?;
    writeln!(rep, "\n[effective configuration]\n{}", run.config.to_toml())?;
    out.put(dir.join("build-report.txt"), rep.as_bytes())?;
    println!("t* = {}, {} rows", res.t_star, res.set.len());
    Ok(out)
}

pub fn simulate(run: &Resolved) -> anyhow::Result<Written> {
    let (m, res) = model_and_set(run)?;
    let cfg = governor(run, &m, res)?;
    let d = m.dims();
    let (xp0, xu0) = (vec![0.0; d.n_xp], vec![0.0; d.n_xu]);
    let setup = SimSetup {
        model: &m,
        governor: cfg.as_ref(),
        constraints: &run.model.spec,
        profile: &run.model.profile,
        x0: (&xp0, &xu0),
        steps: run.config.steps,
    };
    let sim = run_closed_loop(&setup, run.model.dt, &mut RngStream::new(run.config.seed))?;
    let hard = sim
        .steps
        .iter()
        .filter_map(|s| s.diag.as_ref())
        .filter(|d| d.branch != csrg::governor::Branch::Fallback && d.violation > 1e-8)
        .count();
    let violated = sim
        .steps
        .iter()
        .filter(|s| s.violations.iter().any(|&b| b))
        .count();
    let file = TraceFile::from_sim(
        header(run, TRACE_KIND),
        &sim,
        &run.model.state_names,
        &run.model.output_names,
    );
    let mut out = Written::default();
    out.put(run.config.out.join("trace.csv"), file.to_csv()?.as_bytes())?;
    println!("steps: {}", sim.len());
    println!("hard failures: {hard}");
    println!("steps with a constraint violation: {violated}");
    Ok(out)
}

pub fn montecarlo(run: &Resolved) -> anyhow::Result<Written> {
    let (m, res) = model_and_set(run)?;
    let cfg = governor(run, &m, res)?;
    let d = m.dims();
    let (xp0, xu0) = (vec![0.0; d.n_xp], vec![0.0; d.n_xu]);
    let setup = SimSetup {
        model: &m,
        governor: cfg.as_ref(),
        constraints: &run.model.spec,
        profile: &run.model.profile,
        x0: (&xp0, &xu0),
        steps: run.config.steps,
    };
    let opts = McOptions {
        n_runs: run.config.runs,
        base_seed: run.config.seed,
        burn_in: run.config.burn_in,
        threads: run.threads,
    };
    let rep = monte_carlo(&setup, &opts)?;
    let (fmax, t_at, i_at) = rep.max_frequency();
    let limit = run
        .model
        .spec
        .betas
        .get(i_at)
        .map_or(f64::NAN, |b| 1.0 - b.value());

    let mut s = String::new();
    let h = header(run, REPORT_KIND);
    s.push_str(&toml::to_string(&toml::Table::from_iter([(
        "header".to_string(),
        toml::Value::try_from(&h)?,
    )]))?);
    writeln!(s, "\n[summary]")?;
    writeln!(s, "n_runs = {}", rep.n_runs)?;
    writeln!(s, "steps = {}", rep.steps)?;
    writeln!(s, "max_frequency = {}", fmt_f64(fmax))?;
    writeln!(s, "max_frequency_step = {t_at}")?;
    writeln!(s, "max_frequency_row = {i_at}")?;
    writeln!(s, "row_limit = {}", fmt_f64(limit))?;
    writeln!(s, "converged_runs = {}", rep.converged_runs())?;
    for (name, q) in [("t_f_median", 0.5), ("t_f_q99", 0.99), ("t_f_max", 1.0)] {
        if let Some(t) = rep.t_f_quantile(q) {
            writeln!(s, "{name} = {t}")?;
        }
    }
    if let Some((mean, se)) = rep.deviation_stats() {
        writeln!(s, "deviation_mean = {}", fmt_f64(mean))?;
        writeln!(s, "deviation_se = {}", fmt_f64(se))?;
    }
    if let Some(cfg) = &cfg {
        let sd = stability_diagnostics(&m, cfg);
        writeln!(s, "mu = {}", fmt_f64(sd.mu))?;
        writeln!(s, "alpha = {}", fmt_f64(sd.alpha))?;
        writeln!(s, "deviation_bound = {}", fmt_f64(sd.floor()))?;
    }
    let sum = |f: fn(&csrg::sim::RunSummary) -> usize| rep.runs.iter().map(f).sum::<usize>();
    writeln!(
        s,
        "contraction_failures = {}",
        sum(|r| r.contraction_failures)
    )?;
    writeln!(
        s,
        "admissibility_failures = {}",
        sum(|r| r.admissibility_failures)
    )?;
    writeln!(
        s,
        "fallback_mismatches = {}",
        sum(|r| r.fallback_mismatches)
    )?;
    let branches: [usize; 3] = [0, 1, 2].map(|k| rep.runs.iter().map(|r| r.branch_counts[k]).sum());
    writeln!(s, "branch_optimized = {}", branches[0])?;
    writeln!(s, "branch_command = {}", branches[1])?;
    writeln!(s, "branch_fallback = {}", branches[2])?;
    writeln!(s, "\n[config]\n{}", run.config.to_toml())?;

    let mut f = header(run, FREQUENCY_KIND).comment_lines();
    let mut w = csv::Writer::from_writer(Vec::new());
    let n_g = run.model.spec.n_g();
    w.write_record(
        std::iter::once("step".to_string()).chain((0..n_g).map(|i| format!("row_{i}"))),
    )?;
    for t in 0..rep.steps {
        w.write_record(
            std::iter::once(t.to_string()).chain((0..n_g).map(|i| fmt_f64(rep.frequency(t, i)))),
        )?;
    }
    f.push_str(std::str::from_utf8(&w.into_inner()?)?);

    let mut out = Written::default();
    out.put(run.config.out.join("montecarlo.toml"), s.as_bytes())?;
    out.put(run.config.out.join("frequency.csv"), f.as_bytes())?;
    println!(
        "max violation frequency {fmax:.4} (step {t_at}, row {i_at}), limit {limit:.4}; {}/{} runs converged",
        rep.converged_runs(),
        rep.n_runs
    );
    Ok(out)
}

pub fn project(run: &Resolved) -> anyhow::Result<Written> {
    let (_, res) = model_and_set(run)?;
    let coords: Vec<usize> = run
        .config
        .coords
        .iter()
        .map(|c| run.model.z_index(c))
        .collect::<anyhow::Result<_>>()?;
    let p = project_with(&res.set, &coords, run.config.dirs, &run.settings)?;
    let kind = if coords.len() == 2 {
        POINTS_KIND_2D
    } else {
        POINTS_KIND_3D
    };
    let mut s = header(run, kind).comment_lines();
    writeln!(s, "# mode: {}", run.config.mode.as_str())?;
    writeln!(s, "# directions: {}", run.config.dirs)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&run.config.coords)?;
    for pt in &p.hull {
        w.write_record(pt.iter().map(|&x| fmt_f64(x)))?;
    }
    s.push_str(std::str::from_utf8(&w.into_inner()?)?);
    let mut out = Written::default();
    out.put(run.config.out.join("projection.csv"), s.as_bytes())?;
    println!(
        "{} hull points from {} directions",
        p.hull.len(),
        run.config.dirs
    );
    Ok(out)
}

pub fn compare_joint(cfg: &CompareConfig) -> anyhow::Result<Written> {
    let beta = Probability::new(cfg.beta)?;
    let h = Header::new(
        GAMMA_KIND,
        &cfg.hash(),
        cfg.seed,
        cfg.model.as_deref().unwrap_or("none"),
    );
    let mut s = h.comment_lines();
    writeln!(s, "# beta: {}", fmt_f64(beta.value()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n_y", "n_g", "gamma", "less_conservative"])?;
    let mut positive = 0;
    let mut total = 0;
    for n_y in cfg.ny[0]..=cfg.ny[1] {
        for n_g in cfg.ng[0]..=cfg.ng[1] {
            let (g, rec) = gamma_compare(n_y, n_g, beta)?;
            let tag = match rec {
                Recommendation::RiskAllocation => "ra",
                Recommendation::Equal => "equal",
                Recommendation::ConfidenceEllipsoid => "ce",
            };
            positive += (g > 0.0) as usize;
            total += 1;
            w.write_record([
                n_y.to_string(),
                n_g.to_string(),
                fmt_f64(g),
                tag.to_string(),
            ])?;
        }
    }
    s.push_str(std::str::from_utf8(&w.into_inner()?)?);
    let mut out = Written::default();
    out.put(cfg.out.join("gamma.csv"), s.as_bytes())?;
    println!("{positive}/{total} grid points favour the confidence ellipsoid");
    Ok(out)
}

pub fn export_model(run: &Resolved) -> anyhow::Result<Written> {
    let mut out = Written::default();
    let text = format!(
        "# {} {} model export, config hash {}\n{}",
        crate::output::TOOL,
        crate::output::VERSION,
        run.config.hash(),
        modelfile::to_toml(&run.model)?
    );
    out.put(
        run.config.out.join(format!("{}.toml", run.model.name)),
        text.as_bytes(),
    )?;
    Ok(out)
}
