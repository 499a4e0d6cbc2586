use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use prefadapt::dataio::{load_embeddings, load_pairs, save_embeddings, save_pairs};
use prefadapt::eval::{emit_report, write_report};
use prefadapt::gradcheck::{run_gradcheck, GradcheckReport, MAX_RELATIVE_ERROR};
use prefadapt::simulator::{oracle_accuracy, scenario, ScenarioSpec};
use prefadapt::{
    adapt, positive_adapt, run_protocol, AdaptConfig, AdaptTrace, Embedding, EmbeddingTable, EvalReport, Execution,
    ProtocolOptions, ReportFormat,
};
use prefadapt_service::{ProfileStore, ServiceConfig, StoreOptions};
use serde::Serialize;

use crate::error::{CliError, CliResult, Exit};
use crate::{
    AdaptArgs, AdaptVariant, Cli, Command, CorpusArgs, CurveArgs, EvalArgs, FormatArg, GradcheckArgs,
    PairsFromScoresArgs, ProtocolArgs, ServeArgs, SimulateArgs,
};

pub const QUERY_ROW_ID: &str = "query";

pub fn run(cli: Cli) -> CliResult<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Gradcheck(a) => gradcheck(a, quiet),
        Command::Adapt(a) => adapt_cmd(a, quiet),
        Command::Eval(a) => eval(a, quiet),
        Command::Curve(a) => curve(a, quiet),
        Command::Simulate(a) => simulate(a, quiet),
        Command::PairsFromScores(a) => pairs_from_scores(a, quiet),
        Command::Serve(a) => serve(a, quiet),
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| CliError::new(Exit::Io, e))?;
    writeln!(out)?;
    Ok(())
}

fn emit<T: Serialize>(quiet: bool, value: &T, human: impl FnOnce() -> String) -> CliResult<()> {
    if quiet {
        print_json(value)
    } else {
        let mut out = std::io::stdout().lock();
        out.write_all(human().as_bytes())?;
        Ok(())
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn load_corpus(args: &CorpusArgs) -> CliResult<Arc<EmbeddingTable>> {
    let meta = args.meta_path();
    let table = load_embeddings(&args.embeddings, &meta)
        .map_err(|e| CliError::from(e).context(format!("loading {}", args.embeddings.display())))?;
    Ok(Arc::new(table))
}

fn query(table: &EmbeddingTable, id: &str) -> CliResult<Embedding> {
    table
        .get(id)
        .cloned()
        .ok_or_else(|| CliError::validation(format!("query id '{id}' is not in the corpus")))
}

fn validated(cfg: AdaptConfig) -> CliResult<AdaptConfig> {
    cfg.validate()?;
    Ok(cfg)
}

fn gradcheck(args: GradcheckArgs, quiet: bool) -> CliResult<()> {
    if args.trials == 0 {
        return Err(CliError::validation("--trials must be at least 1"));
    }
    if args.dims.is_empty() || args.dims.contains(&0) {
        return Err(CliError::validation("--dim values must be at least 1"));
    }
    let cfg = validated(AdaptConfig {
        temperature: args.temperature,
        ..AdaptConfig::default()
    })?;
    let reports = args
        .dims
        .iter()
        .map(|&d| run_gradcheck(d, args.trials, args.seed, &cfg, execution(args.sequential)))
        .collect::<prefadapt::Result<Vec<GradcheckReport>>>()?;
    emit(quiet, &reports, || {
        let mut s = String::new();
        for r in &reports {
            let verdict = if r.passed { "pass" } else { "FAIL" };
            let _ = writeln!(
                s,
                "d={:<5} trials={:<4} max relative error {:.3e} (trial {})  {verdict}",
                r.dim, r.trials, r.max_relative_error, r.worst_trial
            );
        }
        s
    })?;
    match reports.iter().find(|r| !r.passed) {
        Some(r) => Err(CliError::invariant(format!(
            "gradient check failed at d={}: relative error {:.3e} >= {MAX_RELATIVE_ERROR:e}",
            r.dim, r.max_relative_error
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize)]
struct AdaptOutput<'a> {
    query_id: &'a str,
    variant: &'static str,
    config: AdaptConfig,
    n_pairs: usize,
    original: &'a [f64],
    adapted: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a AdaptTrace>,
}

fn adapt_cmd(args: AdaptArgs, quiet: bool) -> CliResult<()> {
    let cfg = validated(args.adapt.apply(AdaptConfig::default()))?;
    let table = load_corpus(&args.corpus)?;
    let x = query(&table, &args.query_id)?;
    let dataset = load_pairs(&args.pairs, Arc::clone(&table))?;
    let (adapted, trace, variant) = match args.variant {
        AdaptVariant::Bt => {
            let (e, t) = adapt(&x, &dataset.preference_pairs(), &cfg)?;
            (e, Some(t), "bt")
        }
        AdaptVariant::Positive => (positive_adapt(&x, &dataset.winners(), &cfg)?, None, "positive"),
    };
    let output = AdaptOutput {
        query_id: &args.query_id,
        variant,
        config: cfg,
        n_pairs: dataset.len(),
        original: x.as_slice(),
        adapted: adapted.as_slice(),
        trace: trace.as_ref(),
    };
    let mut json = serde_json::to_vec_pretty(&output).map_err(|e| CliError::new(Exit::Io, e))?;
    json.push(b'\n');
    match &args.out {
        Some(path) => fs::write(path, &json).map_err(|e| CliError::from(e).context(path.display().to_string()))?,
        None => {
            std::io::stdout().lock().write_all(&json)?;
            return Ok(());
        }
    }
    emit(quiet, &output, || {
        let mut s = format!(
            "adapted '{}' with {} on {} pairs ({} step(s))\n",
            args.query_id,
            variant,
            dataset.len(),
            cfg.steps
        );
        if let Some(t) = &trace {
            for (i, step) in t.steps.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "  step {:<3} loss {:.6}  |grad| {:.6}  |x| {:.6}",
                    i + 1,
                    step.loss_before,
                    step.gradient_norm,
                    step.norm_after
                );
            }
        }
        let cos = x.cosine(&adapted).unwrap_or(f64::NAN);
        let _ = writeln!(s, "cosine(original, adapted) = {cos:.6}");
        s
    })
}

fn protocol(args: &ProtocolArgs, sizes: &[usize]) -> CliResult<EvalReport> {
    let cfg = validated(args.adapt.apply(AdaptConfig::default()))?;
    if args.repeats == 0 {
        return Err(CliError::validation("--repeats must be at least 1"));
    }
    if sizes.is_empty() {
        return Err(CliError::validation("--sizes must list at least one size"));
    }
    if args.eval_size == Some(0) {
        return Err(CliError::validation("--eval-size must be at least 1"));
    }
    let table = load_corpus(&args.corpus)?;
    let base = query(&table, &args.query_id)?;
    let pool = load_pairs(&args.pairs, Arc::clone(&table))?;
    let options = ProtocolOptions {
        eval_reserve: args.eval_size,
        execution: execution(args.sequential),
    };
    Ok(run_protocol(
        &base,
        &pool,
        sizes,
        args.repeats,
        &cfg,
        args.seed,
        options,
    )?)
}

fn report_table(report: &EvalReport) -> String {
    let mut s = format!(
        "eval pairs {}, repeats {}, seed {}\n{:<10} {:>7} {:>8} {:>8}\n",
        report.eval_size, report.n_repeats, report.master_seed, "variant", "n_train", "mean", "std"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>8.4} {:>8.4}",
            r.variant.as_str(),
            r.n_train,
            r.mean,
            r.std
        );
    }
    s
}

fn eval(args: EvalArgs, quiet: bool) -> CliResult<()> {
    let format = match args.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let report = protocol(&args.protocol, &args.sizes)?;
    match &args.out {
        None => {
            write_report(std::io::stdout().lock(), &report, format)?;
            Ok(())
        }
        Some(path) => {
            emit_report(&report, path, format)?;
            emit(quiet, &report, || report_table(&report))
        }
    }
}

fn curve(args: CurveArgs, quiet: bool) -> CliResult<()> {
    let report = protocol(&args.protocol, &args.sizes)?;
    fs::create_dir_all(&args.out_dir)?;
    emit_report(&report, args.out_dir.join("curve.json"), ReportFormat::Json)?;
    emit_report(&report, args.out_dir.join("curve.csv"), ReportFormat::Csv)?;
    emit(quiet, &report, || report_table(&report))
}

#[derive(Debug, Serialize)]
struct TruthFile<'a> {
    spec: &'a ScenarioSpec,
    u: &'a [f64],
    query_id: &'a str,
    query_alignment: f64,
    /// Accuracy of the hidden direction on the written pairs.
    oracle_accuracy: f64,
}

fn simulate(args: SimulateArgs, quiet: bool) -> CliResult<()> {
    if args.n < 2 {
        return Err(CliError::validation("--n must be at least 2"));
    }
    if args.dim < 2 {
        return Err(CliError::validation("--dim must be at least 2"));
    }
    let spec = ScenarioSpec {
        dim: args.dim,
        n_items: args.n,
        n_pairs: args.n_pairs,
        temperature_gen: args.gen_temperature,
        alignment: args.alignment,
        seed: args.seed,
    };
    let sc = scenario(&spec)?;

    let mut ids = sc.table.ids().to_vec();
    ids.push(QUERY_ROW_ID.to_string());
    let mut rows = sc.table.rows().to_vec();
    rows.push(sc.query.clone());
    let corpus = EmbeddingTable::new(spec.dim, ids, rows)?;

    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;
    save_embeddings(&corpus, dir.join("corpus.pemb"), dir.join("corpus.jsonl"))?;
    save_pairs(dir.join("pairs.jsonl"), &sc.pool)?;
    let oracle = if sc.pool.is_empty() {
        f64::NAN
    } else {
        oracle_accuracy(&sc.truth, &sc.pool)?
    };
    let truth = TruthFile {
        spec: &spec,
        u: sc.truth.u.as_slice(),
        query_id: QUERY_ROW_ID,
        query_alignment: sc.query.dot(&sc.truth.u)?,
        oracle_accuracy: oracle,
    };
    write_json_file(&dir.join("truth.json"), &truth)?;

    emit(quiet, &truth, || {
        format!(
            "wrote {} items + query (d={}) and {} pairs to {}\noracle accuracy {:.4}, query alignment {:.4}\n",
            spec.n_items,
            spec.dim,
            sc.pool.len(),
            dir.display(),
            oracle,
            truth.query_alignment
        )
    })
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::new(Exit::Io, e))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::from(e).context(path.display().to_string()))
}

#[derive(Debug, Serialize)]
struct PairsSummary {
    n_pairs: usize,
    seed: u64,
}

fn pairs_from_scores(args: PairsFromScoresArgs, quiet: bool) -> CliResult<()> {
    let valid = |q: f64| q > 0.0 && q < 1.0;
    if !valid(args.high) || !valid(args.low) || args.high + args.low > 1.0 {
        return Err(CliError::validation(
            "--high and --low must lie in (0, 1) and sum to at most 1",
        ));
    }
    if args.n == 0 {
        return Err(CliError::validation("--n must be at least 1"));
    }
    let table = load_corpus(&args.corpus)?;
    let dataset = prefadapt::dataio::pairs_from_scores(table, args.high, args.low, args.n, args.seed)?;
    save_pairs(&args.out, &dataset)?;
    let summary = PairsSummary {
        n_pairs: dataset.len(),
        seed: args.seed,
    };
    emit(quiet, &summary, || {
        format!("wrote {} pairs to {}\n", dataset.len(), args.out.display())
    })
}

fn service_config(args: &ServeArgs) -> CliResult<ServiceConfig> {
    let mut cfg = ServiceConfig::load(args.config.as_deref())?;
    if let Some(v) = args.listen {
        cfg.listen = v;
    }
    if let Some(v) = &args.corpus_matrix {
        cfg.corpus_matrix = Some(v.clone());
    }
    if let Some(v) = &args.corpus_meta {
        cfg.corpus_meta = Some(v.clone());
    }
    if cfg.corpus_meta.is_none() {
        cfg.corpus_meta = cfg.corpus_matrix.as_ref().map(|m| m.with_extension("jsonl"));
    }
    if let Some(v) = &args.data_dir {
        cfg.data_dir = Some(v.clone());
    }
    if let Some(v) = args.compact_every {
        cfg.compact_every = v;
    }
    cfg.adapt = args.adapt.apply(cfg.adapt);
    cfg.validate()?;
    Ok(cfg)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

fn serve(args: ServeArgs, quiet: bool) -> CliResult<()> {
    let cfg = service_config(&args)?;
    let (matrix, meta) = (
        cfg.corpus_matrix.as_ref().expect("validated"),
        cfg.corpus_meta.as_ref().expect("validated"),
    );
    let corpus = Arc::new(
        load_embeddings(matrix, meta)
            .map_err(|e| CliError::from(e).context(format!("loading {}", matrix.display())))?,
    );
    let store = match &cfg.data_dir {
        Some(dir) => ProfileStore::open(
            corpus,
            dir,
            cfg.adapt,
            StoreOptions {
                compact_every: cfg.compact_every,
            },
        )?,
        None => ProfileStore::in_memory(corpus, cfg.adapt)?,
    };
    let store = Arc::new(store);

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen)
            .await
            .map_err(|e| CliError::from(e).context(format!("binding {}", cfg.listen)))?;
        let addr = listener.local_addr()?;
        if quiet {
            print_json(&serde_json::json!({ "listen": addr.to_string() }))?;
        } else {
            println!("listening on {addr}");
        }
        std::io::stdout().flush()?;
        prefadapt_service::serve(listener, store, shutdown_signal()).await?;
        Ok(())
    })
}
