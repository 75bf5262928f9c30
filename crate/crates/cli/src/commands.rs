use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bteb_core::bayes_rule::{build_bayes_table, BayesTable};
use bteb_core::bt_dist::{cdf, log_pmf, BtParams};
use bteb_core::eb_estimator::{eb_table, EbHistory};
use bteb_core::monotonizer::{monotonize, ActionGrid, Side};
use bteb_core::numerics::CompensatedSum;
use bteb_core::risk_engine::{
    draw_history, mle_table, mean_gap, regret_exact, replication_rng, run_experiment_with_table,
    run_replication, ExperimentReport,
};

use crate::config::{RawConfig, Settings};
use crate::output::{metadata, real, OutDir};
use crate::{Cli, CliError, Command, HistoryArgs, OUT_DIR_ENV};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    raw.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        raw.set("seed", &seed.to_string())?;
    }
    if let Command::Dist { r: Some(r), .. } | Command::Figure1 { r: Some(r), .. } = &cli.command {
        raw.set("r", &r.to_string())?;
    }
    let settings = Settings::resolve(&raw)?;

    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    }
    let out_root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    match &cli.command {
        Command::Dist { theta, x_from, x_to, .. } => dist(&settings, *theta, *x_from, *x_to, &out_root),
        Command::BayesTable => bayes_table(&settings, &out_root),
        Command::Eb(h) => eb(&settings, h, &out_root),
        Command::Monotonize { history, dump } => monotone(&settings, history, dump, &out_root),
        Command::ReproduceStudy => reproduce_study(&settings, &out_root),
        Command::Figure1 { n, rep, .. } => figure1(&settings, *n, *rep, &out_root),
    }
}

fn dist(s: &Settings, theta: f64, from: Option<u64>, to: u64, root: &Path) -> Result<(), CliError> {
    let p = BtParams::new(s.r, theta).map_err(|e| CliError::Usage(e.to_string()))?;
    let from = from.unwrap_or(s.r);
    if from < s.r {
        return Err(CliError::Usage(format!("x range starts at {from}, below r={}", s.r)));
    }
    if to < from {
        return Err(CliError::Usage(format!("empty x range {from}..={to}")));
    }
    let mut acc = CompensatedSum::new();
    acc.add(if from > s.r { cdf(&p, from - 1) } else { 0.0 });
    let mut rows = Vec::new();
    for x in from..=to {
        let pmf = log_pmf(&p, x)?.exp();
        acc.add(pmf);
        rows.push(vec![x.to_string(), real(pmf), real(acc.value().min(1.0))]);
    }
    let meta = metadata(&format!("dist theta={theta:?} x_from={from} x_to={to}"), &s.render());
    let out = OutDir::create(root)?;
    let path = out.write_csv("dist.csv", &meta, &["x", "pmf", "cdf"], rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn bayes(s: &Settings) -> Result<BayesTable, CliError> {
    let cfg = s.experiment(s.n[0]);
    Ok(build_bayes_table(&cfg.prior, cfg.r, cfg.support_cap()?)?)
}

fn bayes_table(s: &Settings, root: &Path) -> Result<(), CliError> {
    let t = bayes(s)?;
    let rows = t.xs().enumerate().map(|(i, x)| {
        vec![
            x.to_string(),
            real(t.theta()[i]),
            real(t.second_moment()[i]),
            real(t.marginal()[i]),
        ]
    });
    let meta = metadata("bayes-table", &s.render());
    let out = OutDir::create(root)?;
    let path = out.write_csv(
        "bayes_table.csv",
        &meta,
        &["x", "theta_bayes", "posterior_second_moment", "marginal"],
        rows.collect::<Vec<_>>(),
    )?;
    println!("prior {}  r={}  cap={}  omitted mass {:e}", t.prior(), t.r(), t.cap(), t.omitted_mass());
    println!("wrote {}", path.display());
    Ok(())
}

/// The history named by `args` plus a description for the metadata line.
fn history(s: &Settings, args: &HistoryArgs) -> Result<(EbHistory, String), CliError> {
    match &args.history {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read history {}: {e}", path.display())))?;
            let obs = text
                .split_whitespace()
                .map(|t| t.parse::<u64>().map_err(|_| CliError::Usage(format!("bad observation '{t}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            let h = EbHistory::new(s.r, obs).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok((h, format!("history={}", path.display())))
        }
        None => {
            let n = args.n.unwrap_or(s.n[0]);
            if n == 0 {
                return Err(CliError::Usage("n must be at least 1".into()));
            }
            let mut rng = replication_rng(s.seed, args.rep);
            let (h, _) = draw_history(s.r, &s.prior, n, &mut rng)?;
            Ok((h, format!("n={n} rep={}", args.rep)))
        }
    }
}

fn table_cap(s: &Settings, h: &EbHistory) -> Result<u64, CliError> {
    let cap = s.experiment(h.n()).support_cap()?.cap;
    if h.max_observation() > cap {
        return Err(CliError::Usage(format!(
            "largest observation {} exceeds the support cap {cap}; set cap",
            h.max_observation()
        )));
    }
    Ok(cap)
}

fn eb(s: &Settings, args: &HistoryArgs, root: &Path) -> Result<(), CliError> {
    let (h, desc) = history(s, args)?;
    let cap = table_cap(s, &h)?;
    let t = eb_table(&h, cap, s.qzero)?;
    let rows = t
        .iter()
        .map(|(x, v)| {
            Ok(vec![
                x.to_string(),
                h.count(x).to_string(),
                real(h.psi(x)?),
                real(h.q(x)?),
                real(v),
            ])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let out = OutDir::create(root)?;
    let path = out.write_csv(
        "eb_table.csv",
        &metadata(&format!("eb {desc}"), &s.render()),
        &["x", "count", "psi", "q", "theta_eb"],
        rows,
    )?;
    println!("descents in theta_eb: {}", t.descents(0.0).len());
    println!("wrote {}", path.display());
    Ok(())
}

fn monotone(s: &Settings, args: &HistoryArgs, dump: &[u64], root: &Path) -> Result<(), CliError> {
    let (h, desc) = history(s, args)?;
    let cap = table_cap(s, &h)?;
    let src = eb_table(&h, cap, s.qzero)?;
    let rule = monotonize(&src, &ActionGrid::uniform(s.grid_m)?)?;
    let meta = metadata(&format!("monotonize {desc}"), &s.render());
    let out = OutDir::create(root)?;
    let rows = src
        .iter()
        .zip(rule.result().values())
        .map(|((x, e), &m)| vec![x.to_string(), h.count(x).to_string(), real(e), real(m)]);
    let path = out.write_csv(
        "monotone.csv",
        &meta,
        &["x", "count", "theta_eb", "theta_monotone"],
        rows.collect::<Vec<_>>(),
    )?;
    println!("max cdf adjustment {:e}", rule.max_adjustment());
    println!("wrote {}", path.display());

    if !dump.is_empty() {
        let mut slices = Vec::with_capacity(dump.len());
        for &x in dump {
            slices.push(rule.dstar(x).ok_or_else(|| {
                CliError::Usage(format!("dump x={x} outside {}..={cap}", s.r))
            })?);
        }
        let mut header = vec!["a".to_string(), "left_limit".into(), "alpha".into()];
        header.extend(dump.iter().map(|x| format!("dstar_{x}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = rule.nodes().iter().enumerate().map(|(j, node)| {
            let mut row = vec![
                real(node.a),
                u8::from(node.side == Side::Left).to_string(),
                real(rule.alpha()[j]),
            ];
            row.extend(slices.iter().map(|d| real(d[j])));
            row
        });
        let path = out.write_csv("dstar.csv", &meta, &header, rows.collect::<Vec<_>>())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// The human-readable block written to `study_summary.txt`.
pub fn summary(bayes: &BayesTable, reports: &[ExperimentReport]) -> Result<String, CliError> {
    let mle = mle_table(bayes.r(), bayes.cap())?;
    let mut out = String::new();
    let _ = writeln!(out, "prior = {}", bayes.prior());
    let _ = writeln!(out, "r = {}", bayes.r());
    let _ = writeln!(out, "support_cap = {}", bayes.cap());
    let _ = writeln!(out, "omitted_marginal_mass = {}", real(bayes.omitted_mass()));
    let _ = writeln!(out, "bayes_risk = {}", real(bteb_core::risk_engine::bayes_risk(bayes)));
    let _ = writeln!(out, "s_mle_squared = {}", real(regret_exact(&mle, bayes)?));
    let _ = writeln!(out, "s_mle_unsquared = {}", real(mean_gap(&mle, bayes)?));
    for rep in reports {
        let n = rep.config.n;
        let _ = writeln!(out, "n{n}.s_eb_mean = {}", real(rep.s_eb_mean));
        let _ = writeln!(out, "n{n}.s_eb_se = {}", real(rep.s_eb_se));
        let _ = writeln!(out, "n{n}.s_mono_mean = {}", real(rep.s_mono_mean));
        let _ = writeln!(out, "n{n}.s_mono_se = {}", real(rep.s_mono_se));
        let _ = writeln!(out, "n{n}.truncated_draws = {}", rep.diagnostics.truncated_draws);
        let _ = writeln!(out, "n{n}.max_cdf_adjustment = {}", real(rep.diagnostics.max_adjustment));
    }
    Ok(out)
}

fn reproduce_study(s: &Settings, root: &Path) -> Result<(), CliError> {
    let bayes = bayes(s)?;
    let reports = s
        .n
        .iter()
        .map(|&n| run_experiment_with_table(&s.experiment(n), &bayes))
        .collect::<Result<Vec<_>, _>>()?;
    let meta = metadata("reproduce-study", &s.render());
    let out = OutDir::create(root)?;

    let text = summary(&bayes, &reports)?;
    out.write_text("study_summary.txt", &meta, &text)?;

    let table = reports.iter().map(|rep| {
        vec![
            rep.config.r.to_string(),
            rep.config.n.to_string(),
            rep.config.reps.to_string(),
            real(rep.s_eb_mean),
            real(rep.s_eb_se),
            real(rep.s_mono_mean),
            real(rep.s_mono_se),
            real(rep.s_mle),
        ]
    });
    out.write_csv(
        "table1.csv",
        &meta,
        &["r", "n", "reps", "S_eb_mean", "S_eb_se", "S_mono_mean", "S_mono_se", "S_mle"],
        table.collect::<Vec<_>>(),
    )?;

    let mut rows = Vec::new();
    for rep in &reports {
        let n = rep.config.n.to_string();
        for r in &rep.replications {
            rows.push(vec![
                n.clone(),
                r.index.to_string(),
                real(r.regret_eb),
                real(r.regret_mono),
                r.truncated_draws.to_string(),
                real(r.max_adjustment),
            ]);
        }
        rows.push(vec![
            n,
            "mean".into(),
            real(rep.s_eb_mean),
            real(rep.s_mono_mean),
            rep.diagnostics.truncated_draws.to_string(),
            real(rep.diagnostics.max_adjustment),
        ]);
    }
    out.write_csv(
        "replications.csv",
        &meta,
        &["n", "rep", "regret_eb", "regret_mono", "truncated_draws", "max_cdf_adjustment"],
        rows,
    )?;

    print!("{text}");
    println!("wrote study_summary.txt, table1.csv, replications.csv to {}", root.display());
    Ok(())
}

fn figure1(s: &Settings, n: usize, rep: u64, root: &Path) -> Result<(), CliError> {
    let cfg = s.experiment(n);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let bayes = cfg.bayes_table()?;
    let run = run_replication(&cfg, rep, &bayes)?;
    let last = bayes.cap().min(run.history.max_observation() + 10);
    let rows = (cfg.r..=last).map(|x| {
        vec![
            x.to_string(),
            run.history.count(x).to_string(),
            real(run.eb.get(x).unwrap_or(f64::NAN)),
            real(run.monotone.get(x).unwrap_or(f64::NAN)),
            real(bayes.theta_at(x).unwrap_or(f64::NAN)),
        ]
    });
    let meta = metadata(&format!("figure1 n={n} rep={rep}"), &s.render());
    let out = OutDir::create(root)?;
    let path = out.write_csv(
        "estimates.csv",
        &meta,
        &["x", "count", "theta_eb", "theta_monotone", "theta_bayes"],
        rows.collect::<Vec<_>>(),
    )?;
    println!(
        "regret: eb {}  monotone {}  descents in theta_eb: {}",
        real(run.regret_eb),
        real(run.regret_mono),
        run.eb.descents(0.0).len()
    );
    println!("wrote {}", path.display());
    Ok(())
}
