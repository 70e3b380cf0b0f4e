//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line on
//! stderr (written directly, so it shows without `--nocapture`); the test
//! fails if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use idxsel_core::agent::{evaluate_detailed, run_training, AgentBundle, Hyperparams, TrainingTrace};
use idxsel_core::baselines::{exhaustive_best, greedy_select, td3_nomask, DEFAULT_MAX_POOL};
use idxsel_core::candidates::{enumerate_candidates, IndexDef};
use idxsel_core::costmodel::{
    query_cost, workload_cost, CostParams, CostSource, ExternalCostSource, IndexConfiguration,
};
use idxsel_core::env::{EnvOptions, IndexEnv};
use idxsel_core::error::Error;
use idxsel_core::nn::gradcheck::{gradcheck, GradcheckOptions, DEFAULT_TOLERANCE};
use idxsel_core::schema::{generate_schema, SchemaProfile};
use idxsel_core::workload::generate_workload;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_idxsel");

fn hyper() -> Hyperparams {
    Hyperparams {
        hidden: vec![64, 64],
        ..Hyperparams::default()
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Everything emitted by the training-based criteria, audited by criterion 8.
#[derive(Default)]
struct Audit {
    /// (label, storage, budget) of every emitted configuration.
    configs: Vec<(String, f64, f64)>,
    /// (label, first hash, repeat hash).
    repeats: Vec<(String, String, String)>,
}

impl Audit {
    fn trace(&mut self, label: &str, trace: &TrainingTrace, budget: f64) {
        for r in &trace.rows {
            self.configs
                .push((format!("{label} ep {}", r.episode), r.storage_units, budget));
        }
    }

    fn config(&mut self, label: &str, c: &IndexConfiguration, budget: f64) {
        self.configs.push((label.to_string(), c.total_storage_units(), budget));
    }
}

fn c1_gradients() -> Outcome {
    let started = Instant::now();
    let env = common::env(SchemaProfile::Small, 3, 10, 0, 2.0, None);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut all_checked = true;
    for arch in [vec![64, 64], Hyperparams::default().hidden] {
        let hp = Hyperparams {
            hidden: arch,
            ..Hyperparams::default()
        };
        for seed in 0..10 {
            let bundle = AgentBundle::new(env.state_dim(), env.action_dim(), hp.clone(), seed).unwrap();
            for (i, (name, net)) in bundle.networks().into_iter().enumerate() {
                let r = gradcheck(net, seed, &GradcheckOptions::default());
                all_checked &= r.checked > 0;
                if worst.len() <= i {
                    worst.push((name, 0.0));
                }
                worst[i].1 = worst[i].1.max(r.max_rel_error);
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let per: Vec<String> = worst.iter().map(|(n, e)| format!("{n}={e:.1e}")).collect();
    outcome(
        all_checked && max <= DEFAULT_TOLERANCE && secs < 30.0,
        format!("max rel err {max:.2e} ({}), {secs:.1}s", per.join(" ")),
    )
}

fn c2_reward_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    while checked < 1000 {
        let budget = [0.05, 0.2, 1.0, 3.0][seed as usize % 4];
        let env = common::env(SchemaProfile::Small, 4, 12, seed, budget, None);
        seed += 1;
        let mut s = env.reset(0).unwrap();
        while !s.done && checked < 1000 {
            let feasible: Vec<usize> = (0..env.action_dim()).filter(|&k| s.feasible[k]).collect();
            let k = feasible[rng.random_range(0..feasible.len())];
            let out = env.step(&s, k).unwrap();
            let i = &out.info;
            let expected = if i.cost_before == i.cost_after {
                0.0
            } else {
                ((i.cost_before - i.cost_after) / i.cost_empty)
                    / ((i.storage_after - i.storage_before) / i.storage_before.max(1.0))
            };
            // the info must describe the transition that happened
            assert_eq!(i.cost_before, s.report.total_cost);
            assert_eq!(i.cost_after, out.next_state.report.total_cost);
            worst = worst.max((out.reward - expected).abs());
            checked += 1;
            s = out.next_state;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 60.0,
        format!("{checked} transitions, max |diff| {worst:.1e}, {secs:.1}s"),
    )
}

fn c3_enumerator() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut compared = 0;
    for _ in 0..50 {
        let schema = common::random_schema(&mut rng, 3, 5);
        let nq = rng.random_range(1..8);
        let workload = common::random_workload(&mut rng, &schema, nq);
        for w_max in 1..=3 {
            let pool = enumerate_candidates(&schema, &workload, w_max);
            if pool.candidates() != common::brute_force_pool(&schema, &workload, w_max).as_slice() {
                mismatches += 1;
            }
            compared += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 60.0,
        format!("{compared} pools compared, {mismatches} mismatches, {secs:.1}s"),
    )
}

fn c4_cost_properties() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = CostParams::default();
    let mut triples = 0;
    let mut raised = 0;
    let mut worst_linear: f64 = 0.0;
    let mut seed = 0;
    while triples < 10_000 {
        let schema = generate_schema(SchemaProfile::Small, seed);
        let mut workload = generate_workload(&schema, 5, 15, seed).unwrap();
        seed += 1;
        let pool = enumerate_candidates(&schema, &workload, 3);
        for _ in 0..100 {
            let density = rng.random_range(0.0..0.5);
            let base: Vec<IndexDef> = pool
                .candidates()
                .iter()
                .filter(|_| rng.random_bool(density))
                .cloned()
                .collect();
            let mut grown = base.clone();
            grown.push(pool.candidates()[rng.random_range(0..pool.len())].clone());
            let base = IndexConfiguration::from_schema(base, &schema).unwrap();
            let grown = IndexConfiguration::from_schema(grown, &schema).unwrap();
            let q = &workload.queries[rng.random_range(0..workload.len())];
            if query_cost(q, &grown, &schema, &p).unwrap() > query_cost(q, &base, &schema, &p).unwrap() {
                raised += 1;
            }
            triples += 1;

            let before = workload_cost(&workload, &base, &schema, &p).unwrap();
            let qi = rng.random_range(0..workload.len());
            let f = workload.queries[qi].frequency;
            let factor = rng.random_range(0.0..10.0);
            workload.queries[qi].frequency = f * factor;
            let after = workload_cost(&workload, &base, &schema, &p).unwrap();
            workload.queries[qi].frequency = f;
            let expected = before.total_cost + (factor - 1.0) * f * before.per_query[qi].cost;
            worst_linear = worst_linear.max((after.total_cost - expected).abs() / expected.abs().max(1.0));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        raised == 0 && worst_linear <= 1e-9 && secs < 60.0,
        format!(
            "{triples} triples, {raised} cost increases, frequency linearity rel err {worst_linear:.1e}, {secs:.1}s"
        ),
    )
}

fn c5_tiny_optimality(audit: &mut Audit) -> Outcome {
    let started = Instant::now();
    let mut seeds = Vec::new();
    let mut s = 0;
    while seeds.len() < 10 {
        let (_, _, pool) = common::instance(SchemaProfile::Tiny, 3, 10, s);
        if (1..=12).contains(&pool.len()) {
            seeds.push(s);
        }
        s += 1;
    }
    let budget = 2.0;
    let mut agent_ok = 0;
    let mut greedy_ok = 0;
    let mut gaps = Vec::new();
    for &seed in &seeds {
        let env = common::env(SchemaProfile::Tiny, 3, 10, seed, budget, None);
        let best = exhaustive_best(&env, DEFAULT_MAX_POOL).unwrap();
        let greedy = greedy_select(&env).unwrap();
        let (bundle, trace) = run_training(&env, &hyper(), 300, seed).unwrap();
        let eval = evaluate_detailed(&bundle, &env).unwrap();
        let (_, again) = run_training(&env, &hyper(), 300, seed).unwrap();
        audit.repeats.push((format!("tiny seed {seed}"), trace.fingerprint(), again.fingerprint()));
        audit.trace(&format!("tiny seed {seed}"), &trace, budget);
        audit.config(&format!("tiny seed {seed} eval"), &eval.config, budget);
        audit.config(&format!("tiny seed {seed} greedy"), &greedy.config, budget);
        audit.config(&format!("tiny seed {seed} exhaustive"), &best.config, budget);
        if best.value - eval.value <= 0.05 {
            agent_ok += 1;
        }
        if best.value - greedy.value <= 0.10 {
            greedy_ok += 1;
        }
        gaps.push(format!("{:.3}", best.value - eval.value));
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        agent_ok >= 7 && greedy_ok == seeds.len() && secs < 1200.0,
        format!(
            "agent within 0.05 on {agent_ok}/10, greedy within 0.10 on {greedy_ok}/10, gaps [{}], seeds {seeds:?}, {secs:.0}s",
            gaps.join(" ")
        ),
    )
}

fn c6_masking(audit: &mut Audit) -> Outcome {
    let started = Instant::now();
    let (schema, workload, base) = common::instance(SchemaProfile::Small, 3, 10, 0);
    let predicate_cols: BTreeSet<(&str, &str)> = workload
        .queries
        .iter()
        .flat_map(|q| q.tables.iter())
        .flat_map(|t| t.predicates.iter().map(move |p| (t.table.as_str(), p.column.as_str())))
        .collect();
    let decoys: Vec<IndexDef> = schema
        .tables
        .iter()
        .flat_map(|t| t.columns.iter().map(move |c| (t, c)))
        .filter(|(t, c)| !predicate_cols.contains(&(t.name.as_str(), c.name.as_str())))
        .map(|(t, c)| IndexDef::new(t.name.clone(), [c.name.clone()]))
        .collect();
    let pool = Arc::new(base.extended(decoys.clone()));
    let is_decoy: Vec<bool> = pool.candidates().iter().map(|c| decoys.contains(c)).collect();
    let budget = 2.0;
    let env = common::env_for(schema, workload, pool.clone(), budget, Some(3));
    let (bundle, trace) = run_training(&env, &hyper(), 200, 6).unwrap();
    let (_, again) = run_training(&env, &hyper(), 200, 6).unwrap();
    audit.repeats.push(("decoy".into(), trace.fingerprint(), again.fingerprint()));
    audit.trace("decoy", &trace, budget);
    let eval = evaluate_detailed(&bundle, &env).unwrap();
    audit.config("decoy eval", &eval.config, budget);

    let k = pool.len();
    let mut mean_p = vec![0.0; k];
    for s in &eval.steps {
        for (m, p) in mean_p.iter_mut().zip(&s.probs) {
            *m += p / eval.steps.len() as f64;
        }
    }
    let low = (0..k).filter(|&i| is_decoy[i] && mean_p[i] < 0.1).count();
    let real_mean = (0..k).filter(|&i| !is_decoy[i]).map(|i| mean_p[i]).sum::<f64>()
        / (k - decoys.len()) as f64;
    let decoy_picks = eval.steps.iter().filter(|s| is_decoy[s.chosen]).count();
    let frac = low as f64 / decoys.len() as f64;
    let secs = started.elapsed().as_secs_f64();
    outcome(
        !decoys.is_empty() && frac >= 0.9 && decoy_picks == 0 && secs < 900.0,
        format!(
            "{low}/{} decoys with mean p < 0.1 ({:.0}%), mean p real {real_mean:.3}, decoys chosen in eval {decoy_picks}/{}, eval value {:.3}, {secs:.0}s",
            decoys.len(),
            100.0 * frac,
            eval.steps.len(),
            eval.value
        ),
    )
}

fn c7_ablation(audit: &mut Audit) -> Outcome {
    let started = Instant::now();
    let budget = 2.0;
    let (mut auc_a, mut auc_b, mut eff_a, mut eff_b) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..5 {
        let env = common::env(SchemaProfile::Small, 4, 12, seed, budget, None);
        let (bundle, trace) = run_training(&env, &hyper(), 400, seed).unwrap();
        let eval = evaluate_detailed(&bundle, &env).unwrap();
        let (ablation, atrace) = td3_nomask(&env, &hyper(), 400, seed).unwrap();
        audit.trace(&format!("ablation-study agent seed {seed}"), &trace, budget);
        audit.trace(&format!("ablation-study no-mask seed {seed}"), &atrace, budget);
        audit.config(&format!("agent seed {seed} eval"), &eval.config, budget);
        audit.config(&format!("no-mask seed {seed} eval"), &ablation.config, budget);
        auc_a += trace.rollout_auc() / 5.0;
        auc_b += atrace.rollout_auc() / 5.0;
        eff_a += trace.rows[200].eff_action_space / 5.0;
        eff_b += atrace.rows[200].eff_action_space / 5.0;
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        auc_a >= auc_b && eff_a <= 0.6 * eff_b && secs < 2400.0,
        format!(
            "mean AUC agent {auc_a:.3} vs no-mask {auc_b:.3}; eff. action space at ep 200 agent {eff_a:.2} vs no-mask {eff_b:.2} (ratio {:.2}), {secs:.0}s",
            eff_a / eff_b
        ),
    )
}

fn c9_improvement(audit: &mut Audit) -> Outcome {
    let started = Instant::now();
    let budget = 6.0;
    let env = common::env(SchemaProfile::Small, 4, 12, 0, budget, None);
    let greedy = greedy_select(&env).unwrap();
    let (bundle, trace) = run_training(&env, &hyper(), 300, 9).unwrap();
    let eval = evaluate_detailed(&bundle, &env).unwrap();
    audit.trace("budget-6", &trace, budget);
    audit.config("budget-6 eval", &eval.config, budget);
    audit.config("budget-6 greedy", &greedy.config, budget);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        eval.value >= 0.30 && eval.value >= 0.9 * greedy.value && secs < 1200.0,
        format!(
            "agent value {:.3}, greedy {:.3} (ratio {:.3}), pool {}, storage {:.3}/{budget}, {secs:.0}s",
            eval.value,
            greedy.value,
            eval.value / greedy.value,
            env.action_dim(),
            eval.config.total_storage_units()
        ),
    )
}

fn external_env(args: &[&str], timeout: Duration) -> Result<IndexEnv, Error> {
    let (schema, workload, pool) = common::instance(SchemaProfile::Tiny, 3, 10, 1);
    let source: Arc<dyn CostSource> = Arc::new(ExternalCostSource::spawn(BIN, args, timeout)?);
    IndexEnv::new(schema, workload, pool, 2.0, source, EnvOptions::default())
}

fn c10_external(audit: &mut Audit) -> Outcome {
    let started = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    let env = external_env(&["--seed", "1", "cost-server"], Duration::from_secs(10)).unwrap();
    let (_, trace) = run_training(&env, &hyper(), 10, 10).unwrap();
    let local = common::env(SchemaProfile::Tiny, 3, 10, 1, 2.0, None);
    let (_, local_trace) = run_training(&local, &hyper(), 10, 10).unwrap();
    audit.trace("external", &trace, 2.0);
    audit.repeats.push(("external vs in-process".into(), trace.fingerprint(), local_trace.fingerprint()));
    ok &= trace.rows.len() == 10;
    notes.push(format!("10-episode run completed ({} rows)", trace.rows.len()));

    let faults: [(&str, &[&str], Duration, fn(&Error) -> bool); 3] = [
        ("malformed", &["--seed", "1", "cost-server", "--fault", "malformed", "--fault-after", "20"], Duration::from_secs(10), |e| {
            matches!(e, Error::Protocol(_))
        }),
        ("invariant", &["--seed", "1", "cost-server", "--fault", "invariant", "--fault-after", "20"], Duration::from_secs(10), |e| {
            matches!(e, Error::Invariant { .. })
        }),
        ("hang", &["--seed", "1", "cost-server", "--fault", "hang", "--fault-after", "20"], Duration::from_secs(1), |e| {
            matches!(e, Error::Timeout(_))
        }),
    ];
    for (name, args, timeout, expected) in faults {
        let result = external_env(args, timeout).and_then(|env| run_training(&env, &hyper(), 10, 10));
        match result {
            Err(e) if expected(&e) => notes.push(format!("{name} -> {e}")),
            Err(e) => {
                ok = false;
                notes.push(format!("{name} -> unexpected error {e}"));
            }
            Ok(_) => {
                ok = false;
                notes.push(format!("{name} -> no error"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(ok && secs < 300.0, format!("{}; {secs:.0}s", notes.join("; ")))
}

fn c8_safety(audit: &Audit) -> Outcome {
    let violations: Vec<&(String, f64, f64)> =
        audit.configs.iter().filter(|(_, s, b)| s > b).collect();
    let differing: Vec<&str> = audit
        .repeats
        .iter()
        .filter(|(_, a, b)| a != b)
        .map(|(l, _, _)| l.as_str())
        .collect();
    outcome(
        violations.is_empty() && differing.is_empty(),
        format!(
            "{} configurations audited, {} budget violations; {} repeated runs, {} hash mismatches {:?}",
            audit.configs.len(),
            violations.len(),
            audit.repeats.len(),
            differing.len(),
            differing
        ),
    )
}

fn report(n: usize, o: &Outcome) {
    let verdict = if o.passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "criterion {n:>2}: {verdict}  {}", o.detail).unwrap();
}

/// `IDXSEL_ACCEPTANCE_ONLY=5,6` restricts the run to the listed criteria.
fn selected(n: usize) -> bool {
    match std::env::var("IDXSEL_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|x| x.trim() == n.to_string()),
        Err(_) => true,
    }
}

#[test]
fn acceptance_criteria() {
    let mut audit = Audit::default();
    let criteria: [(usize, &dyn Fn(&mut Audit) -> Outcome); 9] = [
        (1, &|_| c1_gradients()),
        (2, &|_| c2_reward_oracle()),
        (3, &|_| c3_enumerator()),
        (4, &|_| c4_cost_properties()),
        (5, &c5_tiny_optimality),
        (6, &c6_masking),
        (7, &c7_ablation),
        (9, &c9_improvement),
        (10, &c10_external),
    ];
    let mut results = Vec::new();
    for (n, check) in criteria {
        if selected(n) {
            let o = check(&mut audit);
            report(n, &o);
            results.push((n, o));
        }
    }
    if selected(8) {
        let o = c8_safety(&audit);
        report(8, &o);
        results.push((8, o));
    }
    results.sort_by_key(|r| r.0);
    let mut err = std::io::stderr().lock();
    writeln!(err, "summary:").unwrap();
    drop(err);
    for (n, o) in &results {
        report(*n, o);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.passed).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
