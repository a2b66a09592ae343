//! The `cmrr` subcommands: data generation, splitting, training, index
//! build/query, retrieval, evaluation, benchmarking, gradient checking, and
//! the one-shot reproduction suite.
//!
//! Every subcommand is deterministic under fixed seeds (timings aside),
//! logs its fully resolved configuration, and exits 0 on success, 1 on
//! validation errors, and 2 on I/O errors.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cmrr_core::corpus::{generate_planted, split, Corpus, Modality};
use cmrr_core::eval::{
    augment_with_distractors, evaluate, Clock, Direction, EvalReport, EvalTask, Strategy,
};
use cmrr_core::index::{build_index, topk};
use cmrr_core::model::{init_params, ModelParams};
use cmrr_core::pipeline::{retrieve_be, retrieve_ce, retrieve_coop, Ranking};
use cmrr_core::rng::Rng;
use cmrr_core::train::{
    be_probe_grads, be_probe_loss, ce_probe_grads, ce_probe_loss, grad_check, joint_probe_grads,
    joint_probe_loss, pick_coords, sample_probe, train_be, train_ce, train_joint, TrainMode,
    TrainOutcome,
};

use crate::args::Flags;
use crate::bench::{bench_latency, BenchConfig, BenchStrategy};
use crate::files;
use crate::json::{arr, num, Obj};
use crate::reproduce::{reproduce_suite, SuiteOptions};
use crate::runcfg::{parse_fusion, RunConfig};
use crate::{CliError, Result};

pub const USAGE: &str = "usage: cmrr <command> [flags]

commands:
  gen        generate a planted-alignment corpus        (--pairs --tokens --dim --sigma --cpi --seed -o)
  split      split a corpus at the image level          (--input --train --dev --seed --out-prefix)
  train      train be|ce|joint and write a run dir      (--mode --corpus [--dev] --run-dir [hyperparams])
  index      build or query an embedding index          (build|query ...)
  retrieve   rank targets for queries, JSONL output     (--mode --checkpoint --corpus --direction [--k --fusion --topm])
  eval       recall/mR evaluation, JSON report          (--mode --checkpoint --corpus [--k --fusion --distractors])
  bench      single-query latency across sizes          (--sizes --strategies --repeats --seed)
  gradcheck  finite-difference gradient validation      (--seed [--probes])
  reproduce  run the full verification pipeline         (--out [--seed])
";

struct StdClock {
    origin: Instant,
}

impl StdClock {
    fn new() -> Self {
        StdClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for StdClock {
    fn now_nanos(&mut self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn log_config(config: &RunConfig) {
    for line in config.snapshot().lines() {
        eprintln!("config: {line}");
    }
}

fn write_or_print(out: Option<&str>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

/// Entry point: returns the process exit code.
pub fn cmd_dispatch(args: &[String]) -> i32 {
    match run(args) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, CliError::Validation(_)) {
                eprintln!("{USAGE}");
            }
            err.exit_code()
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    let command = args
        .first()
        .ok_or_else(|| CliError::Validation("missing command".into()))?;
    let rest = &args[1..];
    match command.as_str() {
        "gen" => cmd_gen(rest),
        "split" => cmd_split(rest),
        "train" => cmd_train(rest),
        "index" => cmd_index(rest),
        "retrieve" => cmd_retrieve(rest),
        "eval" => cmd_eval(rest),
        "bench" => cmd_bench(rest),
        "gradcheck" => cmd_gradcheck(rest),
        "reproduce" => cmd_reproduce(rest),
        other => Err(CliError::Validation(format!("unknown command '{other}'"))),
    }
}

fn config_path(flags: &Flags) -> Option<PathBuf> {
    flags.get("config").map(PathBuf::from)
}

fn cmd_gen(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &["pairs", "tokens", "dim", "sigma", "cpi", "seed", "out", "config"],
    )?;
    let config = RunConfig::resolve(config_path(&flags).as_deref(), &flags)?;
    log_config(&config);
    let spec = config.planted_spec()?;
    let corpus = generate_planted(&spec)?;
    let out = flags.require("out")?;
    files::save_corpus(Path::new(out), &corpus)?;
    eprintln!(
        "generated {} items ({} gold pairs) -> {out}",
        corpus.len(),
        corpus.gold().len()
    );
    Ok(())
}

fn cmd_split(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["input", "train", "dev", "seed", "out-prefix"])?;
    let input = flags.require("input")?;
    let train_frac: f64 = flags
        .parse_num("train")?
        .ok_or_else(|| CliError::Validation("missing --train fraction".into()))?;
    let dev_frac: f64 = flags
        .parse_num("dev")?
        .ok_or_else(|| CliError::Validation("missing --dev fraction".into()))?;
    let seed: u64 = flags.parse_num("seed")?.unwrap_or(0);
    let prefix = flags.require("out-prefix")?;
    let corpus = files::load_corpus(Path::new(input))?;
    let (train, dev, test) = split(&corpus, train_frac, dev_frac, seed)?;
    for (part, name) in [(&train, "train"), (&dev, "dev"), (&test, "test")] {
        let path = format!("{prefix}.{name}.cmrr");
        files::save_corpus(Path::new(&path), part)?;
        eprintln!(
            "split {name}: {} items ({} gold) -> {path}",
            part.len(),
            part.gold().len()
        );
    }
    Ok(())
}

fn train_log_line(step: u64, loss: f64, lr: f64, dev_mr: Option<f64>) -> String {
    Obj::new()
        .u64("step", step)
        .f64("loss", loss)
        .f64("lr", lr)
        .opt_f64("dev_mr", dev_mr)
        .finish()
}

fn cmd_train(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &[
            "mode",
            "corpus",
            "dev",
            "run-dir",
            "lr",
            "steps",
            "batch-pairs",
            "margin",
            "weight-decay",
            "checkpoint-every",
            "seed",
            "embed-dim",
            "layers",
            "layer-skip",
            "config",
        ],
    )?;
    let config = RunConfig::resolve(config_path(&flags).as_deref(), &flags)?;
    log_config(&config);
    let corpus = files::load_corpus(Path::new(flags.require("corpus")?))?;
    let dev = flags
        .get("dev")
        .map(|p| files::load_corpus(Path::new(p)))
        .transpose()?;
    let run_dir = PathBuf::from(flags.require("run-dir")?);
    std::fs::create_dir_all(&run_dir)?;

    let model_config = config.model_config(corpus.feature_dim())?;
    let train_config = config.train_config()?;
    std::fs::write(run_dir.join("config.txt"), config.snapshot())?;

    let outcome: TrainOutcome = match train_config.mode {
        TrainMode::Be => train_be(&corpus, dev.as_ref(), &model_config, &train_config)?,
        TrainMode::Ce => train_ce(&corpus, dev.as_ref(), &model_config, &train_config)?,
        TrainMode::Joint => train_joint(&corpus, dev.as_ref(), &model_config, &train_config)?,
    };

    let mut log = String::new();
    let mut checkpoint_iter = outcome.checkpoints.iter().peekable();
    for step_log in &outcome.step_logs {
        let dev_mr = match checkpoint_iter.peek() {
            Some(ck) if ck.step == step_log.step + 1 => {
                Some(checkpoint_iter.next().unwrap().dev_mean_recall)
            }
            _ => None,
        };
        log.push_str(&train_log_line(step_log.step, step_log.loss, step_log.lr, dev_mr));
        log.push('\n');
    }
    std::fs::write(run_dir.join("train_log.jsonl"), log)?;

    for checkpoint in &outcome.checkpoints {
        let path = run_dir.join(format!("checkpoint_{:06}.cmrm", checkpoint.step));
        files::save_params(&path, &checkpoint.params)?;
    }
    let best_path = run_dir.join("best.cmrm");
    files::save_params(&best_path, &outcome.params)?;
    match (outcome.best_step, outcome.best_dev_mean_recall) {
        (Some(step), Some(mr)) => {
            eprintln!("best checkpoint: step {step} (dev mR {mr:.4}) -> {}", best_path.display())
        }
        _ => eprintln!("final parameters -> {}", best_path.display()),
    }
    Ok(())
}

fn cmd_index(args: &[String]) -> Result<()> {
    let sub = args
        .first()
        .ok_or_else(|| CliError::Validation("index needs build|query".into()))?;
    match sub.as_str() {
        "build" => {
            let flags = Flags::parse(&args[1..], &["checkpoint", "corpus", "modality", "out"])?;
            let params = files::load_params(Path::new(flags.require("checkpoint")?))?;
            let corpus = files::load_corpus(Path::new(flags.require("corpus")?))?;
            let modality = match flags.require("modality")? {
                "image" => Modality::Image,
                "caption" => Modality::Caption,
                other => {
                    return Err(CliError::Validation(format!(
                        "modality must be image|caption, got '{other}'"
                    )))
                }
            };
            let items: Vec<_> = corpus
                .items()
                .iter()
                .filter(|it| it.modality == modality)
                .collect();
            let index = build_index(&params, &items)?;
            let out = flags.require("out")?;
            files::save_index(Path::new(out), &index)?;
            let memory = index.memory();
            eprintln!(
                "indexed {} vectors of dim {} ({} vector bytes + {} id bytes) -> {out}",
                index.len(),
                index.dim(),
                memory.vector_bytes,
                memory.id_bytes
            );
            Ok(())
        }
        "query" => {
            let flags = Flags::parse(
                &args[1..],
                &["index", "checkpoint", "corpus", "query-id", "k", "out"],
            )?;
            let index = files::load_index(Path::new(flags.require("index")?))?;
            let params = files::load_params(Path::new(flags.require("checkpoint")?))?;
            let corpus = files::load_corpus(Path::new(flags.require("corpus")?))?;
            let query_id: u32 = flags
                .parse_num("query-id")?
                .ok_or_else(|| CliError::Validation("missing --query-id".into()))?;
            let k: usize = flags.parse_num("k")?.unwrap_or(10);
            let query = corpus
                .item(query_id)
                .ok_or_else(|| CliError::Validation(format!("no item with id {query_id}")))?;
            let embedding = cmrr_core::model::encode(&params, query)?;
            let hits = topk(&index, &embedding, k)?;
            let line = Obj::new()
                .u64("query_id", query_id as u64)
                .u64("k", k as u64)
                .raw(
                    "hits",
                    &arr(hits.iter().map(|&(id, cosine)| {
                        Obj::new()
                            .u64("id", id as u64)
                            .f64("cosine", cosine as f64)
                            .finish()
                    })),
                )
                .finish();
            write_or_print(flags.get("out"), &line)
        }
        other => Err(CliError::Validation(format!(
            "index subcommand must be build|query, got '{other}'"
        ))),
    }
}

pub fn ranking_json(ranking: &Ranking, direction: &str) -> String {
    Obj::new()
        .u64("query_id", ranking.query_id as u64)
        .str("direction", direction)
        .raw(
            "entries",
            &arr(ranking.entries.iter().map(|e| {
                Obj::new()
                    .u64("id", e.item_id as u64)
                    .opt_f64("be_score", e.be_score)
                    .opt_f64("ce_score", e.ce_score)
                    .f64("final_score", e.final_score)
                    .finish()
            })),
        )
        .u64("encode_calls", ranking.counters.encode_calls)
        .u64("cross_score_calls", ranking.counters.cross_score_calls)
        .finish()
}

fn parse_direction(raw: &str) -> Result<Direction> {
    match raw {
        "image-retrieval" => Ok(Direction::ImageRetrieval),
        "text-retrieval" => Ok(Direction::TextRetrieval),
        other => Err(CliError::Validation(format!(
            "direction must be image-retrieval|text-retrieval, got '{other}'"
        ))),
    }
}

fn strategy_from_flags(mode: &str, flags: &Flags) -> Result<Strategy> {
    match mode {
        "be" => Ok(Strategy::Be),
        "ce" => Ok(Strategy::Ce),
        "coop" => {
            let k: usize = flags.parse_num("k")?.unwrap_or(20);
            let fusion = match flags.get("fusion") {
                Some(raw) => parse_fusion(raw)?,
                None => cmrr_core::pipeline::Fusion::CeOnly,
            };
            Ok(Strategy::Coop(cmrr_core::pipeline::CoopConfig { k, fusion }))
        }
        other => Err(CliError::Validation(format!(
            "mode must be be|ce|coop, got '{other}'"
        ))),
    }
}

/// Produces rankings for every query of a directional task.
pub fn rank_task(
    params: &ModelParams,
    corpus: &Corpus,
    task: &EvalTask,
    strategy: &Strategy,
    top_m: usize,
) -> Result<Vec<Ranking>> {
    let targets: Vec<_> = task
        .targets
        .iter()
        .map(|&id| {
            corpus
                .item(id)
                .ok_or_else(|| CliError::Validation(format!("no item with id {id}")))
        })
        .collect::<Result<_>>()?;
    let index = match strategy {
        Strategy::Be | Strategy::Coop(_) => Some(build_index(params, &targets)?),
        Strategy::Ce => None,
    };
    let mut rankings = Vec::with_capacity(task.queries.len());
    for &query_id in &task.queries {
        let query = corpus
            .item(query_id)
            .ok_or_else(|| CliError::Validation(format!("no item with id {query_id}")))?;
        let ranking = match strategy {
            Strategy::Be => retrieve_be(query, index.as_ref().unwrap(), params, top_m)?,
            Strategy::Ce => retrieve_ce(query, &targets, params, top_m)?,
            Strategy::Coop(c) => {
                retrieve_coop(query, index.as_ref().unwrap(), corpus, params, c, top_m)?
            }
        };
        rankings.push(ranking);
    }
    Ok(rankings)
}

fn cmd_retrieve(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &[
            "mode",
            "checkpoint",
            "corpus",
            "direction",
            "k",
            "fusion",
            "topm",
            "query-id",
            "out",
        ],
    )?;
    let params = files::load_params(Path::new(flags.require("checkpoint")?))?;
    let corpus = files::load_corpus(Path::new(flags.require("corpus")?))?;
    let direction = parse_direction(flags.require("direction")?)?;
    let strategy = strategy_from_flags(flags.require("mode")?, &flags)?;
    let top_m: usize = flags.parse_num("topm")?.unwrap_or(10);
    let mut task = EvalTask::from_corpus(&corpus, direction)?;
    if let Some(query_id) = flags.parse_num::<u32>("query-id")? {
        let position = task
            .queries
            .iter()
            .position(|&q| q == query_id)
            .ok_or_else(|| CliError::Validation(format!("query id {query_id} not in task")))?;
        task.queries = vec![query_id];
        task.gold = vec![task.gold[position].clone()];
    }
    let rankings = rank_task(&params, &corpus, &task, &strategy, top_m)?;
    let direction_name = match direction {
        Direction::ImageRetrieval => "image-retrieval",
        Direction::TextRetrieval => "text-retrieval",
    };
    let mut out = String::new();
    for ranking in &rankings {
        out.push_str(&ranking_json(ranking, direction_name));
        out.push('\n');
    }
    match flags.get("out") {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn direction_json(scores: &cmrr_core::eval::DirectionScores) -> String {
    Obj::new()
        .f64("r1", scores.r1)
        .f64("r5", scores.r5)
        .f64("r10", scores.r10)
        .u64("queries", scores.ranks.len() as u64)
        .raw(
            "ranks",
            &arr(scores.ranks.iter().map(|r| match r {
                Some(rank) => rank.to_string(),
                None => "null".into(),
            })),
        )
        .finish()
}

/// Full eval report JSON: recalls, mR, counters, timings, config echo, and
/// corpus fingerprint.
pub fn report_json(
    report: &EvalReport,
    strategy_echo: &str,
    corpus_fingerprint: u64,
    config_echo: &str,
) -> String {
    let mr = cmrr_core::eval::mean_recall(report).ok();
    let mut obj = Obj::new().str("strategy", strategy_echo);
    obj = match &report.image_retrieval {
        Some(s) => obj.raw("image_retrieval", &direction_json(s)),
        None => obj.raw("image_retrieval", "null"),
    };
    obj = match &report.text_retrieval {
        Some(s) => obj.raw("text_retrieval", &direction_json(s)),
        None => obj.raw("text_retrieval", "null"),
    };
    obj.opt_f64("mean_recall", mr)
        .raw(
            "counters",
            &Obj::new()
                .u64("encode_calls", report.counters.encode_calls)
                .u64("cross_score_calls", report.counters.cross_score_calls)
                .finish(),
        )
        .u64("elapsed_nanos", report.elapsed_nanos)
        .str("corpus_fingerprint", &format!("{corpus_fingerprint:016x}"))
        .str("config", config_echo)
        .finish()
}

fn cmd_eval(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &[
            "mode",
            "checkpoint",
            "corpus",
            "k",
            "fusion",
            "distractors",
            "out",
        ],
    )?;
    let checkpoint = flags.require("checkpoint")?;
    let corpus_path = flags.require("corpus")?;
    let params = files::load_params(Path::new(checkpoint))?;
    let corpus_bytes = std::fs::read(corpus_path)
        .map_err(|e| CliError::Io(format!("{corpus_path}: {e}")))?;
    let fingerprint = fnv1a64(&corpus_bytes);
    let mut corpus = files::decode_corpus(&corpus_bytes)?;
    let mode = flags.require("mode")?;
    let strategy = strategy_from_flags(mode, &flags)?;

    let distractor_corpus = flags
        .get("distractors")
        .map(|p| files::load_corpus(Path::new(p)))
        .transpose()?;

    let mut clock = StdClock::new();
    let mut report = EvalReport::empty();
    for direction in [Direction::ImageRetrieval, Direction::TextRetrieval] {
        let mut task = EvalTask::from_corpus(&corpus, direction)?;
        if let Some(foreign) = &distractor_corpus {
            let wanted = match direction {
                Direction::ImageRetrieval => Modality::Image,
                Direction::TextRetrieval => Modality::Caption,
            };
            let items: Vec<_> = foreign
                .items()
                .iter()
                .filter(|it| it.modality == wanted)
                .cloned()
                .collect();
            let new_ids = corpus.absorb_items(&items)?;
            task = augment_with_distractors(&task, &new_ids)?;
        }
        let partial = evaluate(&params, &corpus, &task, &strategy, &mut clock)?;
        match direction {
            Direction::ImageRetrieval => report.image_retrieval = partial.image_retrieval,
            Direction::TextRetrieval => report.text_retrieval = partial.text_retrieval,
        }
        report.counters.add(partial.counters);
        report.elapsed_nanos += partial.elapsed_nanos;
    }
    let config_echo = format!(
        "mode={mode} k={} fusion={} checkpoint={checkpoint}",
        flags.get("k").unwrap_or("-"),
        flags.get("fusion").unwrap_or("-"),
    );
    let json = report_json(&report, mode, fingerprint, &config_echo);
    write_or_print(flags.get("out"), &json)
}

fn cmd_bench(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &["sizes", "strategies", "repeats", "seed", "k", "out"],
    )?;
    let mut config = BenchConfig::default();
    if let Some(raw) = flags.get("sizes") {
        config.sizes = raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Validation(format!("bad size '{s}'")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(raw) = flags.get("strategies") {
        config.strategies = raw
            .split(',')
            .map(|s| BenchStrategy::parse(s.trim()))
            .collect::<Result<_>>()?;
    }
    if let Some(repeats) = flags.parse_num("repeats")? {
        config.repeats = repeats;
    }
    if let Some(seed) = flags.parse_num("seed")? {
        config.seed = seed;
    }
    if let Some(k) = flags.parse_num("k")? {
        config.coop_k = k;
    }
    let report = bench_latency(&config)?;
    let rows = arr(report.rows.iter().map(|r| {
        Obj::new()
            .str("strategy", r.strategy.name())
            .u64("collection_size", r.collection_size as u64)
            .u64("median_nanos", r.median_nanos)
            .u64("mean_nanos", r.mean_nanos)
            .u64("encode_calls", r.encode_calls)
            .u64("cross_score_calls", r.cross_score_calls)
            .finish()
    }));
    let json = Obj::new()
        .raw("rows", &rows)
        .opt_f64("slope_be_ns_per_item", report.slope_be)
        .opt_f64("slope_coop_ns_per_item", report.slope_coop)
        .opt_f64("slope_ce_ns_per_item", report.slope_ce)
        .opt_f64("ce_over_coop_slope_ratio", report.ce_over_coop_slope_ratio())
        .finish();
    write_or_print(flags.get("out"), &json)
}

/// Gradient check budget shared by the CLI and the verification suite.
pub fn run_gradcheck(seed: u64, probes: usize) -> Result<f64> {
    let corpus = generate_planted(&cmrr_core::corpus::PlantedSpec {
        n_pairs: 12,
        tokens_per_item: 3,
        feature_dim: 8,
        noise_sigma: 0.6,
        captions_per_image: 1,
        seed: seed ^ 0xda7a,
    })?;
    let mut max_rel: f64 = 0.0;
    let mut rng = Rng::new(seed);
    for probe_idx in 0..probes {
        let mut params = init_params(&cmrr_core::model::ModelConfig {
            feature_dim: 8,
            embed_dim: 16,
            trunk_layers: 2,
            layer_skip: cmrr_core::model::LayerSkip::Full,
            seed: seed.wrapping_add(probe_idx as u64),
        })?;
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.uniform(-0.2, 0.2);
            }
        }
        let probe = sample_probe(&params, &corpus, &mut rng, 5, 0.1)?;
        let coords = pick_coords(&params, &mut rng, 200);
        let (_, ce_grads) = ce_probe_grads(&params, &corpus, &probe.pairs)?;
        let ce_err = grad_check(
            &params,
            &ce_grads,
            &mut |p| ce_probe_loss(p, &corpus, &probe.pairs),
            &coords,
            1e-5,
        )?;
        let (_, be_grads) = be_probe_grads(&params, &corpus, &probe.triplets, probe.margin_alpha)?;
        let be_err = grad_check(
            &params,
            &be_grads,
            &mut |p| be_probe_loss(p, &corpus, &probe.triplets, probe.margin_alpha),
            &coords,
            1e-5,
        )?;
        let (_, joint_grads) = joint_probe_grads(&params, &corpus, &probe)?;
        let joint_err = grad_check(
            &params,
            &joint_grads,
            &mut |p| joint_probe_loss(p, &corpus, &probe),
            &coords,
            1e-5,
        )?;
        max_rel = max_rel.max(ce_err).max(be_err).max(joint_err);
    }
    Ok(max_rel)
}

fn cmd_gradcheck(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["seed", "probes"])?;
    let seed: u64 = flags.parse_num("seed")?.unwrap_or(0);
    let probes: usize = flags.parse_num("probes")?.unwrap_or(5);
    let max_rel = run_gradcheck(seed, probes)?;
    println!("max_rel_err={}", num(max_rel));
    if max_rel <= 1e-4 {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "gradient check failed: max relative error {max_rel} exceeds 1e-4"
        )))
    }
}

fn cmd_reproduce(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["out", "seed"])?;
    let out = PathBuf::from(flags.get("out").unwrap_or("reproduce-out"));
    let seed: u64 = flags.parse_num("seed")?.unwrap_or(0);
    let options = SuiteOptions {
        seed,
        ..SuiteOptions::default()
    };
    let results = reproduce_suite(&out, &options)?;
    let mut failures = 0;
    for r in &results {
        println!(
            "{}  {:2}  {:<28} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.number,
            r.name,
            r.details
        );
        if !r.passed {
            failures += 1;
        }
    }
    if failures == 0 {
        println!("all {} criteria passed", results.len());
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{failures} of {} criteria failed",
            results.len()
        )))
    }
}
