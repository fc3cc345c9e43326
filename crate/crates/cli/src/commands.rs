use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use actsearch::activation::{ActivationFn, GraphActivation};
use actsearch::analysis::{
    baseline, build_indicator, compare_arrangements, compile_piecewise, count_space, enumerate_shapes, wrap_scaled,
    ArrangementRow, Baseline, BinomialSum, CensusError, CensusOptions, Construction, IndicatorKind, PiecewiseSpec,
    DEFAULT_ARRANGEMENTS,
};
use actsearch::distrib::{
    spec_fingerprint, work, Coordinator, CoordinatorOptions, DistribError, WorkerError, WorkerOptions,
};
use actsearch::evolve::{
    evolve_with, non_dominated, rerank, top_candidates, Candidate, ConfigError, SearchHistory, SearchMode,
};
use actsearch::trainer::{
    cross_evaluate, train_activation, write_curves_csv, write_trajectory_csv, CompressedFitness, FullFitness,
    Granularity,
};
use actsearch::{ActivationGraph, ParamValues, Status};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{emit, in_dir, num, outln, write_commented, write_json, write_jsonl, Provenance};
use crate::{
    BaselinesArgs, Cli, CliError, Command, CrossEvalArgs, EvalFnArgs, GranularityArg, IndicatorArgs, Mode,
    PiecewiseArgs, SearchArgs, SpaceCountArgs, TrainFnArgs, WorkArgs,
};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Search(a) => search(a, quiet, "search"),
        Command::Serve(mut a) => {
            a.mode = Some(Mode::Asynchronous);
            search(a, quiet, "serve")
        }
        Command::Work(a) => worker(a, quiet),
        Command::EvalFn(a) => eval_fn(a),
        Command::TrainFn(a) => train_fn(a, quiet),
        Command::CrossEval(a) => cross_eval(a),
        Command::SpaceCount(a) => space_count(a),
        Command::Baselines(a) => baselines(a),
        Command::CompilePiecewise(a) => piecewise(a),
        Command::Indicator(a) => indicator(a),
    }
}

fn parse_genotype(s: &str) -> Result<ActivationGraph, CliError> {
    ActivationGraph::parse(s).map_err(|e| CliError::Parse(format!("{s:?}: {e}")))
}

fn config_err(e: ConfigError) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn progress(c: &Candidate, budget: usize, quiet: bool) {
    if !quiet {
        eprintln!(
            "[{}/{}] {:.4} {}{} {}",
            c.seq + 1,
            budget,
            c.fitness,
            c.status.as_str(),
            if c.accepted { " accepted" } else { "" },
            c.graph.to_text()
        );
    }
}

#[derive(Serialize)]
struct ReportEntry {
    rank: usize,
    seq: u64,
    expr: String,
    k: usize,
    search_fitness: f64,
    adjusted_fitness: Option<f64>,
    run_fitness: Vec<f64>,
}

fn search(a: SearchArgs, quiet: bool, command: &str) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.apply_seed(a.seed);
    if let Some(b) = a.budget {
        cfg.evolution.budget = b;
    }
    if a.no_params {
        cfg.evolution.parameterize = false;
    }
    if let Some(b) = a.bind {
        cfg.distrib.bind = b;
    }
    if let Some(n) = a.local_workers {
        cfg.distrib.local_workers = n;
    }
    let mode = a.mode.unwrap_or(match cfg.evolution.mode {
        SearchMode::Sequential => Mode::Sequential,
        SearchMode::Asynchronous => Mode::Asynchronous,
    });
    match mode {
        Mode::Sequential => cfg.evolution.mode = SearchMode::Sequential,
        Mode::Asynchronous => cfg.evolution.mode = SearchMode::Asynchronous,
        Mode::RandomSearch => {
            cfg.evolution = cfg.evolution.clone().random_search();
            cfg.evolution.mode = SearchMode::Sequential;
        }
    }
    cfg.validate()?;
    let out = cfg.output_dir(a.out.as_deref());
    let mut header = cfg.to_json();
    header["search"] = json!(match mode {
        Mode::Sequential => "sequential",
        Mode::Asynchronous => "asynchronous",
        Mode::RandomSearch => "random_search",
    });
    header["rerank"]["enabled"] = json!(!a.no_rerank);
    let prov = Provenance::new(command, header);

    let budget = cfg.evolution.budget;
    let history = match mode {
        Mode::Asynchronous => run_async(&cfg, quiet)?,
        _ => evolve_with(&cfg.evolution, &CompressedFitness(cfg.train.clone()), |c| {
            progress(c, budget, quiet)
        })
        .map_err(config_err)?,
    };

    let mut jsonl = Vec::new();
    history
        .write_jsonl(&mut jsonl)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_jsonl(&in_dir(&out, "history.jsonl"), &prov, &jsonl)?;
    let mut csv = Vec::new();
    history
        .write_progress_csv(&mut csv)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_commented(&in_dir(&out, "progress.csv"), &prov, &csv)?;

    let entries: Vec<ReportEntry> = if a.no_rerank {
        top_candidates(&history, cfg.rerank.keep)
            .into_iter()
            .enumerate()
            .map(|(i, c)| ReportEntry {
                rank: i + 1,
                seq: c.seq,
                expr: c.graph.to_text(),
                k: c.k(),
                search_fitness: c.fitness,
                adjusted_fitness: None,
                run_fitness: Vec::new(),
            })
            .collect()
    } else {
        if !quiet {
            eprintln!("reranking the top {} on the full schedule", cfg.rerank.top_n);
        }
        rerank(&history, &FullFitness(cfg.train.clone()), &cfg.rerank)
            .into_iter()
            .enumerate()
            .map(|(i, r)| ReportEntry {
                rank: i + 1,
                seq: r.seq,
                expr: r.graph.to_text(),
                k: r.graph.param_count(),
                search_fitness: r.search_fitness,
                adjusted_fitness: Some(r.adjusted),
                run_fitness: r.run_fitness,
            })
            .collect()
    };
    let unstable = history.candidates.iter().filter(|c| c.status != Status::Ok).count();
    let summary = json!({
        "evaluated": history.len(),
        "accepted": history.accepted(),
        "unstable": unstable,
        "best": entries,
    });
    write_json(&in_dir(&out, "report.json"), &prov, summary)?;
    let text = report_text(&history, &entries, unstable);
    write_commented(&in_dir(&out, "report.txt"), &prov, text.as_bytes())?;
    emit(&text);
    Ok(())
}

fn report_text(history: &SearchHistory, entries: &[ReportEntry], unstable: usize) -> String {
    let mut s = format!(
        "evaluated {} accepted {} unstable {}\nrank seq search_fitness adjusted_fitness expr\n",
        history.len(),
        history.accepted(),
        unstable
    );
    for e in entries {
        let adj = e.adjusted_fitness.map_or("-".to_string(), |v| format!("{v:.4}"));
        s += &format!("{} {} {:.4} {} {}\n", e.rank, e.seq, e.search_fitness, adj, e.expr);
    }
    s
}

fn distrib_err(e: DistribError) -> CliError {
    match e {
        DistribError::Config(c) => config_err(c),
        other => CliError::Run(other.to_string()),
    }
}

fn run_async(cfg: &RunConfig, quiet: bool) -> Result<SearchHistory, CliError> {
    let fingerprint = spec_fingerprint(&cfg.train);
    let opts = CoordinatorOptions {
        task_timeout: Duration::from_secs_f64(cfg.distrib.task_timeout_secs),
        idle_limit: None,
        spec: Some(fingerprint.clone()),
    };
    let coord = Coordinator::bind(cfg.evolution.clone(), cfg.distrib.bind.as_str(), opts).map_err(|e| match e {
        DistribError::Io(io) => CliError::Run(format!("cannot listen on {}: {io}", cfg.distrib.bind)),
        other => distrib_err(other),
    })?;
    let addr = coord.local_addr();
    eprintln!("listening on {addr} (training setup {fingerprint})");
    let eval = CompressedFitness(cfg.train.clone());
    let budget = cfg.evolution.budget;
    thread::scope(|s| {
        for i in 0..cfg.distrib.local_workers {
            let eval = &eval;
            let wopts = WorkerOptions {
                worker_id: format!("local-{i}"),
                heartbeat_interval: Duration::from_secs_f64(cfg.distrib.heartbeat_secs),
                max_retries: cfg.distrib.max_retries,
                spec: Some(fingerprint.clone()),
                ..WorkerOptions::default()
            };
            s.spawn(move || {
                let _ = work(addr, eval, &wopts);
            });
        }
        let (history, stats) = coord.run_with(|c| progress(c, budget, quiet)).map_err(distrib_err)?;
        if !quiet {
            eprintln!(
                "connections {} rejected {} reassigned {} discarded results {}",
                stats.connections, stats.rejected, stats.reassigned, stats.discarded_results
            );
        }
        Ok(history)
    })
}

fn worker(a: WorkArgs, quiet: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    cfg.train
        .validate()
        .map_err(|e| CliError::Config(format!("train: {e}")))?;
    let addr = a.coordinator.unwrap_or(cfg.distrib.coordinator.clone());
    let mut opts = WorkerOptions {
        heartbeat_interval: Duration::from_secs_f64(cfg.distrib.heartbeat_secs),
        max_retries: cfg.distrib.max_retries,
        spec: Some(spec_fingerprint(&cfg.train)),
        ..WorkerOptions::default()
    };
    if let Some(id) = a.id {
        opts.worker_id = id;
    }
    let report = work(addr.as_str(), &CompressedFitness(cfg.train.clone()), &opts).map_err(|e| match e {
        WorkerError::SpecMismatch { .. } => CliError::Config(e.to_string()),
        other => CliError::Run(other.to_string()),
    })?;
    if !quiet {
        eprintln!(
            "{}: {} tasks, {} heartbeats, stopped by {:?}",
            opts.worker_id, report.tasks, report.heartbeats, report.reason
        );
    }
    Ok(())
}

fn eval_fn(a: EvalFnArgs) -> Result<(), CliError> {
    let g = ActivationGraph::parse_unbounded(&a.expr).map_err(|e| CliError::Parse(format!("{:?}: {e}", a.expr)))?;
    let k = g.param_count();
    let params = if a.params.is_empty() {
        ParamValues::ones(k)
    } else if a.params.len() == k {
        ParamValues::from_vec(a.params)
    } else {
        return Err(CliError::Usage(format!(
            "{k} parameter values needed, got {}",
            a.params.len()
        )));
    };
    let mut head = vec!["x".to_string(), "f".into(), "df_dx".into()];
    head.extend((0..k).map(|i| format!("df_dp{i}")));
    outln!("{}", head.join(" "));
    for x in a.at {
        let (v, dx, dp) = g.eval_grad(&params, x);
        let mut row = vec![num(x), num(v), num(dx)];
        row.extend(dp.into_iter().map(num));
        outln!("{}", row.join(" "));
    }
    Ok(())
}

fn granularity(g: GranularityArg) -> Granularity {
    match g {
        GranularityArg::PerLayer => Granularity::PerLayer,
        GranularityArg::PerChannel => Granularity::PerChannel,
        GranularityArg::PerNeuron => Granularity::PerNeuron,
    }
}

fn train_fn(a: TrainFnArgs, quiet: bool) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.apply_seed(a.seed);
    let (act, label): (Arc<dyn ActivationFn>, String) = match (&a.expr, &a.baseline) {
        (Some(e), None) => (Arc::new(GraphActivation::new(parse_genotype(e)?)), e.clone()),
        (None, Some(name)) => {
            let b = baseline(name).map_err(|e| CliError::Usage(e.to_string()))?;
            if a.granularity.is_none() {
                cfg.train.granularity = b.default_granularity();
            }
            (b.activation(), b.name().to_string())
        }
        _ => return Err(CliError::Usage("give a function or --baseline".into())),
    };
    if let Some(g) = a.granularity {
        cfg.train.granularity = granularity(g);
    }
    let act: Arc<dyn ActivationFn> = if a.scaled { Arc::new(wrap_scaled(act)) } else { act };
    cfg.train
        .validate()
        .map_err(|e| CliError::Config(format!("train: {e}")))?;
    let schedule = if a.compressed {
        cfg.train
            .schedule
            .compress(2)
            .map_err(|e| CliError::Config(format!("train.schedule: {e}")))?
    } else {
        cfg.train.schedule.clone()
    };
    let run_seed = cfg.seed.unwrap_or(0);
    if !quiet {
        eprintln!("training {label} for {} epochs", schedule.total_epochs);
    }
    let rec = train_activation(act, &cfg.train, &schedule, run_seed).map_err(|e| CliError::Run(e.to_string()))?;
    let out = cfg.output_dir(a.out.as_deref());
    let mut header = cfg.to_json();
    header["function"] = json!(label);
    header["scaled"] = json!(a.scaled);
    header["compressed"] = json!(a.compressed);
    let prov = Provenance::new("train-fn", header);
    let mut curves = Vec::new();
    write_curves_csv(&rec, &mut curves).map_err(|e| CliError::Io(e.to_string()))?;
    write_commented(&in_dir(&out, "curves.csv"), &prov, &curves)?;
    let mut traj = Vec::new();
    write_trajectory_csv(&rec, &mut traj).map_err(|e| CliError::Io(e.to_string()))?;
    write_commented(&in_dir(&out, "trajectory.csv"), &prov, &traj)?;
    let summary = json!({
        "function": label,
        "fitness": rec.fitness,
        "status": rec.status,
        "test_acc": rec.test_acc,
        "runtime_seconds": rec.runtime_seconds,
        "epochs": rec.curves.len(),
    });
    write_json(&in_dir(&out, "summary.json"), &prov, summary)?;
    let test = rec.test_acc.map_or("-".into(), |t| format!("{t:.4}"));
    outln!(
        "fitness {:.4} status {} test_acc {} runtime {}",
        rec.fitness,
        rec.status.as_str(),
        test,
        num(rec.runtime_seconds)
    );
    Ok(())
}

fn cross_eval(a: CrossEvalArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.apply_seed(a.seed);
    if let Some(r) = a.runs {
        cfg.cross.runs = r;
    }
    let mut exprs = cfg.cross.exprs.clone();
    exprs.extend(a.exprs.iter().cloned());
    if let Some(p) = &a.from_report {
        let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        let best = v["best"]
            .as_array()
            .ok_or_else(|| CliError::Config(format!("{}: no \"best\" list", p.display())))?;
        exprs.extend(best.iter().filter_map(|b| b["expr"].as_str().map(String::from)));
    }
    if exprs.is_empty() {
        return Err(CliError::Usage("no functions to evaluate".into()));
    }
    if cfg.cross.runs == 0 {
        return Err(CliError::Config("cross.runs must be positive".into()));
    }
    let graphs = exprs.iter().map(|e| parse_genotype(e)).collect::<Result<Vec<_>, _>>()?;
    let specs: Vec<(String, _)> = if cfg.cross.specs.is_empty() {
        vec![("train".to_string(), cfg.train.clone())]
    } else {
        cfg.cross.specs.iter().map(|(n, s)| (n.clone(), s.clone())).collect()
    };
    let matrix = cross_evaluate(&graphs, &specs, cfg.cross.runs, cfg.seed.unwrap_or(0))
        .map_err(|e| CliError::Run(e.to_string()))?;
    let out = cfg.output_dir(a.out.as_deref());
    let mut header = cfg.to_json();
    header["cross"]["exprs"] = json!(exprs);
    let prov = Provenance::new("cross-eval", header);
    let mut csv = Vec::new();
    matrix.write_csv(&mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    write_commented(&in_dir(&out, "cross_eval.csv"), &prov, &csv)?;

    let vectors: Vec<Vec<f64>> = matrix
        .cells
        .iter()
        .map(|row| row.iter().map(|c| c.mean_fitness).collect())
        .collect();
    let front = non_dominated(&vectors);
    outln!("expr {}", matrix.columns.join(" "));
    for (i, row) in vectors.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        outln!("{} {}", matrix.rows[i], cells.join(" "));
    }
    for i in front {
        outln!("pareto {}", matrix.rows[i]);
    }
    Ok(())
}

fn load_arrangements(path: Option<&Path>) -> Result<Vec<ArrangementRow>, CliError> {
    let Some(p) = path else {
        return Ok(DEFAULT_ARRANGEMENTS.to_vec());
    };
    let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn space_count(a: SpaceCountArgs) -> Result<(), CliError> {
    if let Some(bu) = &a.shapes {
        for s in enumerate_shapes(bu[0], bu[1]) {
            outln!("{s}");
        }
        return Ok(());
    }
    let table = load_arrangements(a.arrangements.as_deref())?;
    let defaults = CensusOptions::default();
    let opts = CensusOptions {
        max_nodes: a.max_nodes,
        unary_ops: a.unary_ops.unwrap_or(defaults.unary_ops),
        binary_ops: a.binary_ops.unwrap_or(defaults.binary_ops),
        max_params: a.max_params.unwrap_or(defaults.max_params),
        binomial_sum: if a.uncapped {
            BinomialSum::Uncapped
        } else {
            BinomialSum::Capped
        },
    };
    let census = count_space(&opts, &table).map_err(|e| match e {
        CensusError::MissingRow { .. } => CliError::Config(e.to_string()),
        CensusError::Overflow => CliError::Run(e.to_string()),
    })?;
    let shapes = compare_arrangements(a.max_nodes, &table);
    let mut text = census.to_text();
    text += "\narrangement check\n    b   u enumerated table status\n";
    for r in &shapes {
        let table = r.table.map_or("-".into(), |t| t.to_string());
        let status = match (r.table, r.agrees) {
            (None, _) => "missing",
            (_, true) => "agree",
            (_, false) => "disagree",
        };
        text += &format!("{:>5} {:>3} {:>10} {:>5} {status}\n", r.b, r.u, r.enumerated, table);
    }
    let body = json!({ "census": census, "arrangement_check": shapes });
    if let Some(dir) = &a.out {
        let prov = Provenance::new(
            "space-count",
            json!({
                "max_nodes": opts.max_nodes,
                "unary_ops": opts.unary_ops,
                "binary_ops": opts.binary_ops,
                "max_params": opts.max_params,
                "binomial_sum": opts.binomial_sum,
                "arrangements": table,
            }),
        );
        write_commented(&in_dir(dir, "census.txt"), &prov, text.as_bytes())?;
        write_json(&in_dir(dir, "census.json"), &prov, body.clone())?;
    }
    if a.json {
        outln!("{}", serde_json::to_string_pretty(&body).expect("census serializes"));
    } else {
        emit(&text);
    }
    Ok(())
}

fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::PerLayer => "per_layer",
        Granularity::PerChannel => "per_channel",
        Granularity::PerNeuron => "per_neuron",
    }
}

fn baselines(a: BaselinesArgs) -> Result<(), CliError> {
    let chosen: Vec<Baseline> = if a.names.is_empty() {
        Baseline::ALL.to_vec()
    } else {
        a.names
            .iter()
            .map(|n| baseline(n).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    if a.at.is_empty() {
        outln!("name learnable params granularity graph formula");
        for b in chosen {
            let act = b.activation();
            let graph = b.graph().map_or("-".into(), |g| g.to_text());
            outln!(
                "{} {} {} {} {} {}",
                b.name(),
                if b.is_learnable() { "yes" } else { "no" },
                act.num_params(),
                granularity_name(b.default_granularity()),
                graph.replace(' ', ""),
                b.formula()
            );
        }
    } else {
        let head: Vec<String> = a.at.iter().map(|&x| num(x)).collect();
        outln!("name {}", head.join(" "));
        for b in chosen {
            let act = b.activation();
            let p = act.initial_params();
            let vals: Vec<String> = a.at.iter().map(|&x| num(act.forward(x, &p))).collect();
            outln!("{} {}", b.name(), vals.join(" "));
        }
    }
    Ok(())
}

fn print_construction(c: &Construction, at: &[f64]) {
    if at.is_empty() {
        outln!("graph: {}", c.graph.to_text());
        let p: Vec<String> = c.params.as_slice().iter().map(|&v| num(v)).collect();
        outln!("params: {}", p.join(" "));
    } else {
        let v: Vec<String> = at.iter().map(|&x| num(c.eval(x))).collect();
        outln!("{}", v.join(" "));
    }
}

fn piecewise(a: PiecewiseArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| io_err(&a.spec, e))?;
    let is_toml = a.spec.extension().is_some_and(|e| e == "toml");
    let spec: PiecewiseSpec = if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", a.spec.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", a.spec.display())))?
    };
    let c = compile_piecewise(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    print_construction(&c, &a.at);
    Ok(())
}

fn indicator(a: IndicatorArgs) -> Result<(), CliError> {
    let kind: IndicatorKind = a.kind.parse().map_err(CliError::Usage)?;
    let need =
        |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Usage(format!("{} needs --{name}", kind.as_str())));
    let (lo, hi) = match kind {
        IndicatorKind::Left => (0.0, need(a.b, "b")?),
        IndicatorKind::Right | IndicatorKind::Point => (need(a.a, "a")?, 0.0),
        IndicatorKind::OpenInterval => (need(a.a, "a")?, need(a.b, "b")?),
    };
    let c = build_indicator(kind, lo, hi).map_err(|e| CliError::Usage(e.to_string()))?;
    print_construction(&c, &a.at);
    Ok(())
}
