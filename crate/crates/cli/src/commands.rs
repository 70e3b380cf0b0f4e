use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use idxsel_core::agent::{
    evaluate_detailed, run_training, run_training_from, AgentBundle, EvalRollout,
};
use idxsel_core::baselines::{
    exhaustive_best, greedy_select, random_select, td3_nomask, Method, DEFAULT_MAX_POOL,
};
use idxsel_core::candidates::candidate_storage;
use idxsel_core::costmodel::external::serve;
use idxsel_core::costmodel::{AnalyticCostSource, CostReport, IndexConfiguration};
use idxsel_core::nn::gradcheck::{gradcheck as check_net, GradcheckOptions, DEFAULT_TOLERANCE};
use idxsel_core::nn::Activation;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Instance, RunConfig};
use crate::{CliError, CorruptActivation, Fault};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failed(format!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Usage("an output directory is required (--out or output_dir)".into()))?;
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

pub fn gen(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = output_dir(cfg)?;
    let schema = cfg.schema()?;
    let workload = cfg.workload(&schema)?;
    let schema_path = dir.join("schema.json");
    let workload_path = dir.join("workload.json");
    schema.save(&schema_path).map_err(CliError::Runtime)?;
    workload.save(&workload_path).map_err(CliError::Runtime)?;
    emit(out, schema_path.display())?;
    emit(out, workload_path.display())
}

#[derive(Serialize)]
struct CandidateLine<'a> {
    table: &'a str,
    columns: &'a [String],
    storage_units: f64,
}

pub fn enumerate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    // workload files may be empty here, so only structure is checked
    let schema = cfg.schema()?;
    let workload = match &cfg.workload_path {
        Some(p) => idxsel_core::workload::load_workload_lenient(p).map_err(CliError::Input)?,
        None => cfg.workload(&schema)?,
    };
    let pool = idxsel_core::candidates::enumerate_candidates(&schema, &workload, cfg.w_max);
    for c in pool.candidates() {
        let line = CandidateLine {
            table: &c.table,
            columns: &c.columns,
            storage_units: candidate_storage(c, &schema).map_err(CliError::Input)?,
        };
        emit(out, serde_json::to_string(&line).expect("serializes"))?;
    }
    emit(out, json!({ "count": pool.len() }))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seed: u64,
    version: &'a str,
    pool_fingerprint: String,
    pool_size: usize,
    state_dim: usize,
    episodes: usize,
    trace_sha256: String,
    eval_value: f64,
    eval_storage_units: f64,
}

pub fn train(cfg: &RunConfig, init_from: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = output_dir(cfg)?;
    let inst = cfg.instance()?;
    let env = cfg.env(&inst, cfg.budget_units)?;
    let (bundle, trace) = match init_from {
        None => run_training(&env, &cfg.hyperparams(), cfg.episodes, cfg.seed),
        Some(p) => {
            let (bundle, _) = AgentBundle::load(p).map_err(CliError::Input)?;
            run_training_from(&env, bundle, cfg.episodes, cfg.seed)
        }
    }
    .map_err(|e| match e {
        idxsel_core::Error::Dimension { .. } => CliError::Input(e),
        other => CliError::Runtime(other),
    })?;
    let checkpoint = dir.join("checkpoint");
    bundle
        .save(&checkpoint, &inst.pool.fingerprint())
        .map_err(CliError::Runtime)?;
    let trace_path = dir.join("trace.csv");
    trace
        .write_csv(&trace_path, cfg.trace_wall_clock)
        .map_err(CliError::Runtime)?;
    let rollout = evaluate_detailed(&bundle, &env).map_err(CliError::Runtime)?;
    let manifest = RunManifest {
        command: "train",
        config_sha256: cfg.hash(),
        config: cfg,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        pool_fingerprint: inst.pool.fingerprint(),
        pool_size: inst.pool.len(),
        state_dim: env.state_dim(),
        episodes: cfg.episodes,
        trace_sha256: trace.fingerprint(),
        eval_value: rollout.value,
        eval_storage_units: rollout.config.total_storage_units(),
    };
    let manifest_path = dir.join("run.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("serializes"),
    )
    .map_err(|e| io_err(&manifest_path, e))?;
    emit(
        out,
        json!({
            "checkpoint": checkpoint,
            "trace": trace_path,
            "manifest": manifest_path,
            "episodes": trace.rows.len(),
            "eval_value": rollout.value,
        }),
    )
}

#[derive(Serialize)]
struct ChosenIndex {
    table: String,
    columns: Vec<String>,
    storage_units: f64,
}

#[derive(Serialize)]
struct EvaluateOutput {
    config: Vec<ChosenIndex>,
    value: f64,
    storage_units: f64,
    budget_units: f64,
    report: CostReport,
}

fn describe(inst: &Instance, config: &IndexConfiguration) -> Vec<ChosenIndex> {
    config
        .indexes()
        .map(|i| ChosenIndex {
            table: i.table.clone(),
            columns: i.columns.clone(),
            storage_units: candidate_storage(i, &inst.schema).unwrap_or(f64::NAN),
        })
        .collect()
}

pub fn evaluate(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    budget: Option<f64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let checkpoint = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => cfg
            .output_dir
            .as_ref()
            .map(|d| d.join("checkpoint"))
            .ok_or_else(|| CliError::Usage("pass --checkpoint or --out".into()))?,
    };
    let (bundle, manifest) = AgentBundle::load(&checkpoint).map_err(CliError::Input)?;
    let inst = cfg.instance()?;
    if manifest.pool_fingerprint != inst.pool.fingerprint() {
        eprintln!("warning: checkpoint was trained on a different candidate pool");
    }
    let budget = budget.unwrap_or(cfg.budget_units);
    let env = cfg.env(&inst, budget)?;
    let rollout: EvalRollout = evaluate_detailed(&bundle, &env).map_err(|e| match e {
        idxsel_core::Error::Dimension { .. } => CliError::Input(e),
        other => CliError::Runtime(other),
    })?;
    let output = EvaluateOutput {
        config: describe(&inst, &rollout.config),
        value: rollout.value,
        storage_units: rollout.config.total_storage_units(),
        budget_units: budget,
        report: rollout.report,
    };
    emit(out, serde_json::to_string_pretty(&output).expect("serializes"))
}

/// One comparison CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub workload: String,
    pub budget: f64,
    pub episodes: Option<usize>,
    pub value: Option<f64>,
    pub storage: Option<f64>,
    pub seconds: f64,
    pub note: String,
}

enum Point {
    Static(Method),
    Learned { masked: bool, episodes: usize },
}

pub fn compare_rows(cfg: &RunConfig) -> Result<Vec<CompareRow>, CliError> {
    let seeds = if cfg.compare_instance_seeds.is_empty() {
        vec![cfg.instance_seed()]
    } else {
        cfg.compare_instance_seeds.clone()
    };
    let mut instances = Vec::new();
    for s in &seeds {
        let c = RunConfig {
            instance_seed: Some(*s),
            ..cfg.clone()
        };
        instances.push((c.clone(), c.instance()?));
    }
    let mut grid = Vec::new();
    for (i, _) in instances.iter().enumerate() {
        for &budget in &cfg.compare_budgets {
            for m in &cfg.compare_methods {
                match m.as_str() {
                    "agent" | "td3_nomask" => {
                        for &episodes in &cfg.compare_episodes {
                            let masked = m == "agent";
                            grid.push((i, budget, Point::Learned { masked, episodes }));
                        }
                    }
                    other => {
                        let method = other.parse().map_err(|e: idxsel_core::Error| CliError::Usage(e.to_string()))?;
                        grid.push((i, budget, Point::Static(method)));
                    }
                }
            }
        }
    }
    grid.par_iter()
        .map(|(i, budget, point)| {
            let (c, inst) = &instances[*i];
            let env = c.env(inst, *budget)?;
            let started = Instant::now();
            let mut row = CompareRow {
                method: String::new(),
                workload: inst.workload.name.clone(),
                budget: *budget,
                episodes: None,
                value: None,
                storage: None,
                seconds: 0.0,
                note: String::new(),
            };
            let result = match point {
                Point::Static(Method::Exhaustive) if env.action_dim() > DEFAULT_MAX_POOL => {
                    row.method = Method::Exhaustive.to_string();
                    row.note = format!(
                        "skipped: pool of {} exceeds {}",
                        env.action_dim(),
                        DEFAULT_MAX_POOL
                    );
                    return Ok(row);
                }
                Point::Static(m) => {
                    row.method = m.to_string();
                    match m {
                        Method::Exhaustive => exhaustive_best(&env, DEFAULT_MAX_POOL),
                        Method::Greedy => greedy_select(&env),
                        Method::Random => random_select(&env, c.seed),
                        Method::Td3Nomask => unreachable!("learned methods are grid points"),
                    }
                    .map(|r| (r.value, r.config.total_storage_units()))
                }
                Point::Learned { masked, episodes } => {
                    row.episodes = Some(*episodes);
                    if *masked {
                        row.method = "agent".into();
                        run_training(&env, &c.hyperparams(), *episodes, c.seed).and_then(|(b, _)| {
                            evaluate_detailed(&b, &env).map(|r| (r.value, r.config.total_storage_units()))
                        })
                    } else {
                        row.method = Method::Td3Nomask.to_string();
                        td3_nomask(&env, &c.hyperparams(), *episodes, c.seed)
                            .map(|(r, _)| (r.value, r.config.total_storage_units()))
                    }
                }
            };
            let (value, storage) = result.map_err(CliError::Runtime)?;
            row.value = Some(value);
            row.storage = Some(storage);
            row.seconds = started.elapsed().as_secs_f64();
            Ok(row)
        })
        .collect()
}

pub fn compare(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = compare_rows(cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("compare.csv");
        fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
    }
    out.write_all(&bytes).map_err(|e| io_err(Path::new("<stdout>"), e))
}

pub fn gradcheck(
    cfg: &RunConfig,
    seeds: u64,
    corrupt: Option<CorruptActivation>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let inst = cfg.instance()?;
    let env = cfg.env(&inst, cfg.budget_units)?;
    let options = GradcheckOptions {
        corrupt: corrupt.map(|c| match c {
            CorruptActivation::Relu => Activation::Relu,
            CorruptActivation::Tanh => Activation::Tanh,
            CorruptActivation::Sigmoid => Activation::Sigmoid,
        }),
        ..GradcheckOptions::default()
    };
    let mut worst: Vec<(&'static str, f64, usize, usize)> = Vec::new();
    for seed in 0..seeds {
        let bundle = AgentBundle::new(env.state_dim(), env.action_dim(), cfg.hyperparams(), seed)
            .map_err(CliError::Runtime)?;
        for (i, (name, net)) in bundle.networks().into_iter().enumerate() {
            let r = check_net(net, seed, &options);
            if worst.len() <= i {
                worst.push((name, 0.0, 0, 0));
            }
            let w = &mut worst[i];
            w.1 = w.1.max(if r.checked == 0 { f64::INFINITY } else { r.max_rel_error });
            w.2 += r.checked;
            w.3 += r.skipped;
        }
    }
    let mut failed = Vec::new();
    for (name, err, checked, skipped) in worst {
        let passed = err <= DEFAULT_TOLERANCE;
        if !passed {
            failed.push(name);
        }
        emit(
            out,
            json!({
                "network": name,
                "max_rel_error": err,
                "checked": checked,
                "skipped": skipped,
                "passed": passed,
            }),
        )?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn cost_server<R: BufRead>(
    cfg: &RunConfig,
    fault: Option<Fault>,
    fault_after: usize,
    input: R,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let schema = cfg.schema()?;
    let source = AnalyticCostSource::new(schema.clone());
    let mut answered = 0;
    for line in input.lines() {
        let line = line.map_err(|e| io_err(Path::new("<stdin>"), e))?;
        let is_eval = line.contains("\"evaluate\"");
        if is_eval && answered >= fault_after {
            match fault {
                Some(Fault::Malformed) => {
                    emit(out, "{\"total_cost\": oops")?;
                    out.flush().ok();
                    continue;
                }
                Some(Fault::Invariant) => {
                    let mut reply = Vec::new();
                    serve(&source, &schema, line.as_bytes(), &mut reply).map_err(CliError::Runtime)?;
                    let mut report: serde_json::Value =
                        serde_json::from_slice(&reply).map_err(|e| CliError::Failed(e.to_string()))?;
                    if let Some(t) = report.get_mut("total_cost") {
                        *t = json!(t.as_f64().unwrap_or(0.0) * 2.0 + 1.0);
                    }
                    emit(out, report)?;
                    out.flush().ok();
                    continue;
                }
                Some(Fault::Hang) => loop {
                    std::thread::park();
                },
                None => {}
            }
        }
        if is_eval {
            answered += 1;
        }
        serve(&source, &schema, line.as_bytes(), &mut *out).map_err(CliError::Runtime)?;
    }
    Ok(())
}
