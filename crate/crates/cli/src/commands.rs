//! The four subcommands.

use std::path::{Path, PathBuf};

use latmod_core::mcmc::{run_chain, ViewModel};
use latmod_core::model::Hyperparams;
use latmod_core::numerics::Streams;
use latmod_core::partition::{mc_equal_partition_prob, mc_prior_curves, Estimate, Partition, PriorStudy};
use latmod_core::summaries::{
    accumulate_cocluster, adjusted_rand_index, binder_estimate, cocluster_error, cocluster_error_indicator, mode,
    rand_index, vi_estimate, CoClusterMatrix, PartitionEstimate,
};
use latmod_views::gaussian::{simulate_scenarios, simulate_sensitivity, NigPrior, Scenario};
use latmod_views::gusto::{simulate_gusto_like, GustoSpec};
use latmod_views::{Covariates, CtmcView, GaussianView, Series, ZbmiView, ZipView};

use crate::config::{RunConfig, SimulateKind, ViewConfig};
use crate::data::{
    read_covariates, read_label_trace, write_covariates, write_label_trace, write_long, write_rows, write_text,
    LabelTable, LongTable, Subjects,
};
use crate::error::{CliError, Result};

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn fmt(x: f64) -> String {
    x.to_string()
}

/// Write a simulated dataset, its truth file and a ready-to-run `fit.toml`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = &cfg.simulate;
    let mut rng = Streams::new(cfg.seed).rng(&[0]);
    let subjects = Subjects::numbered(sim.n);
    let mut fit = RunConfig {
        seed: cfg.seed,
        model: cfg.model.clone(),
        mcmc: cfg.mcmc.clone(),
        simulate: cfg.simulate.clone(),
        truth: Some("truth.csv".into()),
        ..RunConfig::default()
    };
    let mut truth = LabelTable {
        names: Vec::new(),
        columns: Vec::new(),
    };
    create_dir(out)?;
    match sim.kind {
        SimulateKind::Scenario | SimulateKind::Sensitivity => {
            let data = if sim.kind == SimulateKind::Scenario {
                let scenario: Scenario = sim.scenario.parse().map_err(CliError::config)?;
                simulate_scenarios(scenario, sim.n, &mut rng)
            } else {
                simulate_sensitivity(sim.n, sim.alpha, &mut rng)
            }
            .map_err(CliError::config)?;
            if let Some(c0) = data.c0 {
                truth.names.push("c0".into());
                truth.columns.push(c0);
            }
            for (j, (y, c)) in data.y.iter().zip(data.c).enumerate() {
                let name = format!("y{}", j + 1);
                let file = format!("{name}.csv");
                let series = y
                    .iter()
                    .map(|&v| Series::new(vec![0.0], vec![v]))
                    .collect::<latmod_core::Result<Vec<_>>>()
                    .map_err(CliError::numeric)?;
                write_long(&out.join(&file), &subjects, &series)?;
                truth.names.push(name.clone());
                truth.columns.push(c);
                fit.views.push(ViewConfig::Gaussian {
                    name,
                    data: file.into(),
                    prior: NigPrior::default(),
                });
            }
        }
        SimulateKind::GustoLike => {
            let spec = GustoSpec {
                alpha_sim: sim.alpha,
                missing: sim.missing,
                ..GustoSpec::default()
            };
            let data = simulate_gusto_like(sim.n, &spec, &mut rng).map_err(CliError::config)?;
            write_long(&out.join("zbmi.csv"), &subjects, &data.zbmi)?;
            write_long(&out.join("hypertension.csv"), &subjects, &data.hypertension)?;
            write_long(&out.join("wheeze.csv"), &subjects, &data.wheeze)?;
            write_covariates(&out.join("covariates.csv"), &subjects, &data.x)?;
            fit.covariates = Some("covariates.csv".into());
            fit.views = vec![
                ViewConfig::Zbmi {
                    name: "zbmi".into(),
                    data: "zbmi.csv".into(),
                    grid: spec.zbmi_grid.clone(),
                    degree: spec.zbmi_degree,
                    knots: spec.zbmi_knots.clone(),
                    prior: Default::default(),
                },
                ViewConfig::Ctmc {
                    name: "hypertension".into(),
                    data: "hypertension.csv".into(),
                    prior: Default::default(),
                },
                ViewConfig::Zip {
                    name: "wheeze".into(),
                    data: "wheeze.csv".into(),
                    window: [spec.zip_window.0, spec.zip_window.1],
                    degree: spec.zip_degree,
                    knots: spec.zip_knots.clone(),
                    prior: Default::default(),
                },
            ];
            truth.names = ["c0", "zbmi", "hypertension", "wheeze"].map(String::from).to_vec();
            truth.columns = std::iter::once(data.c0).chain(data.c).collect();
        }
    }
    truth.write(&out.join("truth.csv"), &subjects)?;
    write_text(&out.join("fit.toml"), &fit.to_toml()?)
}

fn estimate_cells(e: &Estimate) -> [String; 2] {
    [fmt(e.value), fmt(e.se)]
}

/// Write the prior co-clustering curves (`fig1.csv`) and the equal-partition
/// table (`fig2.csv`).
pub fn prior_study(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ps = &cfg.prior_study;
    let alphas = ps.alpha_grid()?;
    if ps.samples == 0 || ps.m == 0 {
        return Err(CliError::Config("prior_study: samples and m must be at least 1".into()));
    }
    let streams = Streams::new(cfg.seed);
    let study = PriorStudy {
        n: ps.n,
        n_views: ps.views,
        m: ps.m,
        alpha0: ps.alpha0,
        samples: ps.samples,
    };
    let points = mc_prior_curves(&study, &alphas, &streams.child(1)).map_err(CliError::config)?;
    create_dir(out)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut r = vec![fmt(p.alpha)];
            for e in [&p.baseline_agreement, &p.cocluster_given_equal, &p.cocluster_given_unequal, &p.ari] {
                r.extend(estimate_cells(e));
            }
            r.push(ps.samples.to_string());
            r
        })
        .collect();
    write_rows(
        &out.join("fig1.csv"),
        &[
            "alpha",
            "agree",
            "agree_se",
            "cocluster_equal",
            "cocluster_equal_se",
            "cocluster_unequal",
            "cocluster_unequal_se",
            "ari",
            "ari_se",
            "samples",
        ],
        &rows,
    )?;

    let mut rows = Vec::new();
    let fig2 = streams.child(2);
    for &k in &ps.equal_blocks {
        for &n in &ps.equal_n {
            let rho0 = Partition::equal_blocks(n, k).map_err(CliError::config)?;
            for (a_idx, &alpha) in alphas.iter().enumerate() {
                let hyper = Hyperparams::fixed(ps.alpha0, alpha, ps.m).map_err(CliError::config)?;
                let s = fig2.child(k as u64).child(n as u64).child(a_idx as u64);
                let e = mc_equal_partition_prob(&rho0, &hyper, ps.views, ps.samples, &s).map_err(CliError::config)?;
                let mut r = vec![k.to_string(), n.to_string(), fmt(alpha)];
                r.extend(estimate_cells(&e));
                r.push(ps.samples.to_string());
                rows.push(r);
            }
        }
    }
    write_rows(
        &out.join("fig2.csv"),
        &["blocks", "n", "alpha", "estimate", "se", "samples"],
        &rows,
    )
}

/// Read every configured view, with subjects ordered as in the first view file.
pub fn load_views(cfg: &RunConfig) -> Result<(Subjects, Vec<Box<dyn ViewModel>>)> {
    let first = cfg
        .views
        .first()
        .ok_or_else(|| CliError::Config("no [[views]] configured".into()))?;
    let subjects = LongTable::<String>::read(first.data())?.subjects()?;
    let x = match &cfg.covariates {
        Some(p) => read_covariates(p, &subjects)?,
        None => Covariates::empty(subjects.len()),
    };
    let warmup = cfg.mcmc.adapt_start as u64;
    let views = cfg
        .views
        .iter()
        .map(|v| -> Result<Box<dyn ViewModel>> {
            let path = v.data();
            let wrap = |e: latmod_core::Error| match e {
                latmod_core::Error::Config(m) => CliError::Config(format!("view {}: {m}", v.name())),
                other => CliError::Data(format!("view {} ({}): {other}", v.name(), path.display())),
            };
            Ok(match v {
                ViewConfig::Gaussian { name, prior, .. } => {
                    let y = LongTable::<f64>::read(path)?.single(&subjects, path)?;
                    Box::new(GaussianView::new(name.clone(), y, *prior).map_err(wrap)?)
                }
                ViewConfig::Zbmi { name, grid, prior, .. } => {
                    let s = LongTable::<f64>::read(path)?.series(&subjects, path)?;
                    let spline = v.spline()?.expect("spline view");
                    Box::new(ZbmiView::new(name.clone(), grid.clone(), &spline, &s, x.clone(), *prior).map_err(wrap)?)
                }
                ViewConfig::Ctmc { name, prior, .. } => {
                    let s = LongTable::<u8>::read(path)?.series(&subjects, path)?;
                    Box::new(CtmcView::new(name.clone(), s, x.clone(), *prior, warmup).map_err(wrap)?)
                }
                ViewConfig::Zip { name, prior, .. } => {
                    let s = LongTable::<u64>::read(path)?.series(&subjects, path)?;
                    let spline = v.spline()?.expect("spline view");
                    Box::new(ZipView::new(name.clone(), &spline, &s, x.clone(), *prior, warmup).map_err(wrap)?)
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((subjects, views))
}

/// Run the chain and write label traces, `m.csv`, optional parameter traces
/// and `manifest.toml`.
pub fn fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate_for_fit()?;
    let hyper = cfg.model.hyperparams()?;
    let mcmc = cfg.mcmc.to_config(cfg.seed)?;
    let (subjects, views) = load_views(cfg)?;
    let trace = run_chain(views, &hyper, &mcmc).map_err(CliError::numeric)?;
    create_dir(out)?;
    write_label_trace(&out.join("c0.csv"), &subjects, &trace.iterations, &trace.c0)?;
    for (v, labels) in cfg.views.iter().zip(&trace.c) {
        write_label_trace(&out.join(format!("c_{}.csv", v.name())), &subjects, &trace.iterations, labels)?;
    }
    let rows: Vec<Vec<String>> = trace
        .iterations
        .iter()
        .zip(trace.m.iter().zip(&trace.kn))
        .map(|(it, (m, k))| vec![it.to_string(), m.to_string(), k.to_string()])
        .collect();
    write_rows(&out.join("m.csv"), &["iteration", "m", "kn"], &rows)?;
    if mcmc.store_params {
        for (j, v) in cfg.views.iter().enumerate() {
            let width = trace.params.iter().flat_map(|s| s[j].iter().map(Vec::len)).max().unwrap_or(0);
            let header: Vec<String> = ["iteration", "component"]
                .iter()
                .map(|s| s.to_string())
                .chain((1..=width).map(|k| format!("p{k}")))
                .collect();
            let mut rows = Vec::new();
            for (it, s) in trace.iterations.iter().zip(&trace.params) {
                for (k, p) in s[j].iter().enumerate() {
                    let mut r = vec![it.to_string(), (k + 1).to_string()];
                    r.extend(p.iter().copied().map(fmt));
                    rows.push(r);
                }
            }
            write_rows(&out.join(format!("params_{}.csv", v.name())), &header, &rows)?;
        }
    }
    let mut manifest = cfg.resolved();
    let mut run = toml::Table::new();
    run.insert("subjects".into(), (subjects.len() as i64).into());
    run.insert("views".into(), (cfg.views.len() as i64).into());
    run.insert("samples".into(), (trace.len() as i64).into());
    run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    manifest.run = Some(run);
    write_text(&out.join("manifest.toml"), &manifest.to_toml()?)
}

struct Summary {
    name: String,
    cc: CoClusterMatrix,
    binder: PartitionEstimate,
    vi: PartitionEstimate,
}

fn read_m_trace(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    if !path.is_file() {
        return Err(CliError::Data(format!("{}: trace file not found", path.display())));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (mut m, mut kn) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let get = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| CliError::Data(format!("{}: malformed row", path.display())))
        };
        m.push(get(1)?);
        kn.push(get(2)?);
    }
    Ok((m, kn))
}

/// Co-clustering matrices, Binder and VI estimates, metrics against the
/// truth when available, and posterior modes of `M` and `K_n`.
pub fn summarize(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir: PathBuf = cfg.summarize.traces.clone().unwrap_or_else(|| out.to_path_buf());
    let manifest_path = dir.join("manifest.toml");
    if !manifest_path.is_file() {
        return Err(CliError::Data(format!(
            "no traces in {}: manifest.toml not found (run `fit` first)",
            dir.display()
        )));
    }
    let manifest = RunConfig::load(&manifest_path)?;
    let names: Vec<String> = std::iter::once("c0".to_string())
        .chain(manifest.views.iter().map(|v| v.name().to_string()))
        .collect();
    let mut subjects: Option<Subjects> = None;
    let mut summaries = Vec::with_capacity(names.len());
    for name in &names {
        let file = if name == "c0" { "c0.csv".to_string() } else { format!("c_{name}.csv") };
        let (ids, _, labels) = read_label_trace(&dir.join(&file))?;
        match &subjects {
            None => subjects = Some(Subjects::new(ids)?),
            Some(s) if s.ids() != ids.as_slice() => {
                return Err(CliError::Data(format!("{file}: subjects differ from c0.csv")));
            }
            Some(_) => {}
        }
        let cc = accumulate_cocluster(&labels).map_err(CliError::numeric)?;
        let binder = binder_estimate(&labels, &cc).map_err(CliError::numeric)?;
        let vi = vi_estimate(&labels).map_err(CliError::numeric)?;
        summaries.push(Summary {
            name: name.clone(),
            cc,
            binder,
            vi,
        });
    }
    let subjects = subjects.expect("c0 trace read");
    let (m_trace, kn_trace) = read_m_trace(&dir.join("m.csv"))?;

    let truth_path = cfg.truth.clone().or(manifest.truth.clone());
    let truth = match truth_path {
        Some(p) if p.is_file() => Some(LabelTable::read(&p, &subjects)?),
        Some(p) => return Err(CliError::Data(format!("truth file {} not found", p.display()))),
        None => None,
    };

    create_dir(out)?;
    let base = &summaries[0].binder.partition;
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    order.sort_by_key(|&i| base.labels()[i]);
    for s in &summaries {
        let sorted = s.cc.permuted(&order);
        let header: Vec<&str> = std::iter::once("subject")
            .chain(order.iter().map(|&i| subjects.ids()[i].as_str()))
            .collect();
        let rows: Vec<Vec<String>> = order
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                std::iter::once(subjects.ids()[i].clone())
                    .chain(sorted.row(r).iter().copied().map(fmt))
                    .collect()
            })
            .collect();
        write_rows(&out.join(format!("cocluster_{}.csv", s.name)), &header, &rows)?;
    }

    let estimates = LabelTable {
        names: summaries
            .iter()
            .flat_map(|s| [format!("{}_binder", s.name), format!("{}_vi", s.name)])
            .collect(),
        columns: summaries
            .iter()
            .flat_map(|s| [s.binder.partition.labels().to_vec(), s.vi.partition.labels().to_vec()])
            .collect(),
    };
    estimates.write(&out.join("estimates.csv"), &subjects)?;

    let mut rows = Vec::new();
    for s in &summaries {
        let truth_p = truth
            .as_ref()
            .and_then(|t| t.column(&s.name))
            .map(Partition::from_labels);
        let cc_err = match &truth_p {
            Some(t) => fmt(cocluster_error(&s.cc, t).map_err(CliError::numeric)?),
            None => String::new(),
        };
        for e in [&s.binder, &s.vi] {
            let mut r = vec![
                s.name.clone(),
                format!("{:?}", e.loss_kind).to_lowercase(),
                e.partition.k().to_string(),
                fmt(e.loss_value),
            ];
            match &truth_p {
                Some(t) => {
                    let p = &e.partition;
                    r.push(fmt(rand_index(p, t).map_err(CliError::numeric)?));
                    r.push(fmt(adjusted_rand_index(p, t).map_err(CliError::numeric)?));
                    r.push(fmt(cocluster_error_indicator(p, t).map_err(CliError::numeric)?));
                }
                None => r.extend([String::new(), String::new(), String::new()]),
            }
            r.push(cc_err.clone());
            rows.push(r);
        }
    }
    write_rows(
        &out.join("metrics.csv"),
        &["partition", "estimator", "k", "loss", "ri", "ari", "error", "cc_error"],
        &rows,
    )?;
    let mode_m = mode(&m_trace).map_err(|e| CliError::Data(format!("m.csv: {e}")))?;
    let mode_kn = mode(&kn_trace).map_err(|e| CliError::Data(format!("m.csv: {e}")))?;
    write_rows(
        &out.join("modes.csv"),
        &["quantity", "mode"],
        &[
            vec!["m".into(), mode_m.to_string()],
            vec!["kn".into(), mode_kn.to_string()],
        ],
    )
}
