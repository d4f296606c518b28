//! Command implementations. Every command writes its artifacts into the
//! output directory together with a `run-<command>.json` manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sirl_core::env::{EnvKind, FeatureVector, Scene, TrajectorySet};
use sirl_core::eval::{self, Method, SweepConfig, SweepRow};
use sirl_core::manifest::sha256_hex;
use sirl_core::oracle::{
    equal_weight_reward, preference_labels, read_records, similarity_answers, simulate_preferences,
    PreferenceOracle, Record,
};
use sirl_core::representation::{train_sirl, train_vae, EmbeddingModel, Pretrain, Provenance};
use sirl_core::reward::train_reward;
use sirl_core::tensor::Matrix;
use sirl_core::train::derive_seed;
use sirl_service::{AnswerLog, AppState};

use crate::config::{ExperimentConfig, OUTPUT_ENV, PORT_ENV};
use crate::exit::Failure;
use crate::{Cli, Command, EmbeddingArg};

pub const POOL_FILE: &str = "pool.manifest";
pub const EMBEDDING_FILE: &str = "embedding.ckpt";
pub const REWARD_FILE: &str = "reward.ckpt";

struct Context {
    config: ExperimentConfig,
    out: PathBuf,
    data: PathBuf,
    command: &'static str,
    started: Instant,
    started_unix: u64,
    artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    env: EnvKind,
    config_sha256: String,
    started_unix: u64,
    wall_clock_secs: f64,
    artifacts: Vec<Artifact>,
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

/// Pool loaded for a command: trajectories, network inputs, and normalized
/// ground-truth features.
struct Pool {
    set: TrajectorySet,
    inputs: Matrix,
    features: Vec<FeatureVector>,
}

impl Context {
    fn artifact(&mut self, name: &str) -> PathBuf {
        let path = self.out.join(name);
        self.artifacts.push(path.clone());
        path
    }

    fn load_pool(&self) -> Result<Pool, Failure> {
        if !self.data.exists() {
            return Err(Failure::data(format!(
                "dataset {} not found; run `sirl gen-data` first",
                self.data.display()
            )));
        }
        let set = TrajectorySet::load(&self.data)
            .map_err(|e| Failure::data(format!("cannot load {}: {e}", self.data.display())))?;
        if set.env() != self.config.env {
            return Err(Failure::config(format!(
                "dataset {} is {}, but the configuration selects {}",
                self.data.display(),
                set.env(),
                self.config.env
            )));
        }
        let inputs = set.inputs()?;
        let features = set.features()?;
        Ok(Pool { set, inputs, features })
    }

    fn load_embedding(&self, arg: &EmbeddingArg, pool: &Pool) -> Result<EmbeddingModel, Failure> {
        let path = arg.embedding.clone().unwrap_or_else(|| self.out.join(EMBEDDING_FILE));
        if !path.exists() {
            return Err(Failure::data(format!("checkpoint {} not found", path.display())));
        }
        let model = EmbeddingModel::load(&path)
            .map_err(|e| Failure::data(format!("cannot load {}: {e}", path.display())))?;
        check_compatible(&model, pool)?;
        Ok(model)
    }

    fn finish(self) -> Result<(), Failure> {
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for path in &self.artifacts {
            artifacts.push(Artifact {
                path: path.display().to_string(),
                sha256: sha256_hex(&fs::read(path)?),
            });
        }
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.config.seed,
            env: self.config.env,
            config_sha256: sha256_hex(self.config.to_toml().as_bytes()),
            started_unix: self.started_unix,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            artifacts,
        };
        let path = self.out.join(format!("run-{}.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n")?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn check_compatible(model: &EmbeddingModel, pool: &Pool) -> Result<(), Failure> {
    let env = pool.set.env();
    if let Some(trained) = model.env {
        if trained != env {
            return Err(Failure::config(format!("checkpoint was trained on {trained}, dataset is {env}")));
        }
    }
    if model.input_width() != pool.inputs.cols() {
        return Err(Failure::config(format!(
            "checkpoint expects inputs of width {}, dataset has {}",
            model.input_width(),
            pool.inputs.cols()
        )));
    }
    Ok(())
}

fn parse_method(s: &str) -> Result<Method, Failure> {
    s.parse().map_err(|e| Failure::usage(format!("{e}")))
}

fn read_record_file(path: &Path) -> Result<Vec<Record>, Failure> {
    let file = File::open(path).map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))?;
    read_records(BufReader::new(file)).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    eval::sweep::write_csv(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let env = cli
        .env
        .as_deref()
        .map(|s| s.parse::<EnvKind>().map_err(|e| Failure::usage(e.to_string())))
        .transpose()?;
    let mut config = ExperimentConfig::resolve(cli.config.as_deref(), env)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Config = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let out = match (cli.out, std::env::var_os(OUTPUT_ENV)) {
        (Some(p), _) => p,
        (None, Some(root)) => PathBuf::from(root),
        (None, None) => config.output.clone(),
    };
    fs::create_dir_all(&out).map_err(|e| Failure::config(format!("cannot create {}: {e}", out.display())))?;
    let data = cli.data.unwrap_or_else(|| out.join(POOL_FILE));
    let command = match &cli.command {
        Command::GenData { .. } => "gen-data",
        Command::TrainRep(_) => "train-rep",
        Command::TrainReward(_) => "train-reward",
        Command::EvalFpe(_) => "eval-fpe",
        Command::EvalTpa(_) => "eval-tpa",
        Command::Sweep => "sweep",
        Command::Retrieve(_) => "retrieve",
        Command::Serve(_) => "serve",
        Command::Config => unreachable!(),
    };
    let mut ctx = Context {
        config,
        out,
        data,
        command,
        started: Instant::now(),
        started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        artifacts: Vec::new(),
    };
    match cli.command {
        Command::GenData { count } => gen_data(&mut ctx, count)?,
        Command::TrainRep(args) => train_rep(&mut ctx, args)?,
        Command::TrainReward(args) => train_reward_cmd(&mut ctx, args)?,
        Command::EvalFpe(args) => eval_fpe(&mut ctx, args)?,
        Command::EvalTpa(args) => eval_tpa(&mut ctx, args)?,
        Command::Sweep => sweep(&mut ctx)?,
        Command::Retrieve(args) => retrieve(&mut ctx, args)?,
        Command::Serve(args) => return serve(ctx, args),
        Command::Config => unreachable!(),
    }
    ctx.finish()
}

fn gen_data(ctx: &mut Context, count: Option<usize>) -> Result<(), Failure> {
    let c = &ctx.config;
    let scene = match &c.scene {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read scene {}: {e}", path.display())))?;
            let scene = Scene::from_toml(&text).map_err(|e| Failure::config(e.to_string()))?;
            if scene.env() != c.env {
                return Err(Failure::config(format!("scene describes {}, config selects {}", scene.env(), c.env)));
            }
            scene
        }
        None => Scene::default_for(c.env),
    };
    let set = TrajectorySet::generate(scene, count.unwrap_or(c.pool_size), c.pool_seed)?;
    let path = ctx.artifact(POOL_FILE);
    set.save(&path)?;
    ctx.artifacts.push(sirl_core::manifest::payload_path(&path));
    println!("{} trajectories -> {}", set.len(), path.display());
    Ok(())
}

fn train_rep(ctx: &mut Context, args: crate::TrainRep) -> Result<(), Failure> {
    let c = &ctx.config;
    let mut method = parse_method(args.method.as_deref().unwrap_or(&c.method))?;
    if args.pretrain {
        if method.kind != Provenance::Sirl && method.kind != Provenance::SirlVae {
            return Err(Failure::usage("--pretrain applies to sirl only"));
        }
        method.kind = Provenance::SirlVae;
    }
    let mut hp = c.hyper;
    if let Some(a) = args.alpha {
        hp.sirl.alpha = a;
    }
    let n = args.n.unwrap_or(c.n);
    let pool = ctx.load_pool()?;
    let c = &ctx.config;
    let env = pool.set.env();
    let model = match args.answers {
        Some(path) => {
            if !matches!(method.kind, Provenance::Sirl | Provenance::SirlVae) {
                return Err(Failure::usage("--answers trains SIRL embeddings only"));
            }
            let answers = similarity_answers(&read_record_file(&path)?);
            let triplets: Vec<[usize; 3]> = answers.iter().map(|a| a.triplet()).collect();
            if triplets.iter().flatten().any(|&i| i >= pool.set.len()) {
                return Err(Failure::data("recorded answers point outside the pool"));
            }
            let pretrain = if method.kind == Provenance::SirlVae {
                let seed = derive_seed(c.seed, "vae");
                Pretrain::Vae(train_vae(env, &pool.inputs, hp.hidden, hp.embedding_dim, &hp.vae, seed)?.0)
            } else {
                Pretrain::None
            };
            train_sirl(env, &pool.inputs, &triplets, hp.hidden, hp.embedding_dim, &hp.sirl, pretrain, c.seed)?.0
        }
        None => eval::build_embedding(method.kind, env, &pool.inputs, &pool.features, n, &hp, c.seed)?,
    };
    let path = ctx.artifact(EMBEDDING_FILE);
    model.save(&path)?;
    ctx.artifacts.push(sirl_core::manifest::payload_path(&path));
    println!("{} embedding ({} queries) -> {}", model.provenance, model.budget, path.display());
    Ok(())
}

#[derive(Serialize)]
struct RewardSummary {
    method: String,
    m: usize,
    frozen: bool,
    initial_loss: f64,
    final_loss: f64,
    train_accuracy: f64,
}

fn train_reward_cmd(ctx: &mut Context, args: crate::TrainReward) -> Result<(), Failure> {
    let pool = ctx.load_pool()?;
    let embedding = ctx.load_embedding(&args.embedding, &pool)?;
    let c = &ctx.config;
    let frozen = args
        .freezing
        .choice()
        .or(c.frozen)
        .unwrap_or_else(|| Method::with_default_freezing(embedding.provenance).frozen);
    let labels = match args.labels {
        Some(path) => {
            let labels = preference_labels(&read_record_file(&path)?);
            if labels.iter().any(|p| p.a >= pool.set.len() || p.b >= pool.set.len()) {
                return Err(Failure::data("recorded labels point outside the pool"));
            }
            labels
        }
        None => {
            let oracle = PreferenceOracle::deterministic(equal_weight_reward());
            let m = args.m.unwrap_or(c.m);
            simulate_preferences(&pool.features, &oracle, m, derive_seed(c.seed, "preferences"), "oracle")?
        }
    };
    let (model, log) = train_reward(&embedding, &pool.inputs, &labels, &c.hyper.reward, frozen, c.seed)?;
    let summary = RewardSummary {
        method: embedding.provenance.to_string(),
        m: labels.len(),
        frozen,
        initial_loss: log.initial_loss,
        final_loss: log.epoch_losses.last().copied().unwrap_or(log.initial_loss),
        train_accuracy: model.accuracy(&pool.inputs, &labels)?,
    };
    let path = ctx.artifact(REWARD_FILE);
    model.save(&path)?;
    ctx.artifacts.push(sirl_core::manifest::payload_path(&path));
    let report = ctx.artifact("reward.json");
    write_json(&report, &summary)?;
    println!(
        "reward model on {} labels: train accuracy {:.4} -> {}",
        summary.m,
        summary.train_accuracy,
        path.display()
    );
    Ok(())
}

fn eval_fpe(ctx: &mut Context, args: EmbeddingArg) -> Result<(), Failure> {
    let pool = ctx.load_pool()?;
    let embedding = ctx.load_embedding(&args, &pool)?;
    let split = derive_seed(ctx.config.seed, "fpe-split");
    let report = eval::fpe(&embedding, &pool.inputs, &pool.features, split)?;
    let row = SweepRow {
        method: embedding.provenance.to_string(),
        env: pool.set.env().to_string(),
        n: embedding.budget,
        m: None,
        seed: ctx.config.seed,
        metric: "fpe".into(),
        value: report.mse,
    };
    let csv = ctx.artifact("fpe.csv");
    write_rows(&csv, &[row])?;
    let json = ctx.artifact("fpe.json");
    write_json(&json, &report)?;
    println!("FPE {:.6}", report.mse);
    Ok(())
}

fn eval_tpa(ctx: &mut Context, args: crate::EvalTpa) -> Result<(), Failure> {
    let pool = ctx.load_pool()?;
    let embedding = ctx.load_embedding(&args.embedding, &pool)?;
    let c = &ctx.config;
    let frozen = args
        .freezing
        .choice()
        .or(c.frozen)
        .unwrap_or_else(|| Method::with_default_freezing(embedding.provenance).frozen);
    let m = args.m.unwrap_or(c.m);
    let report = eval::tpa(&embedding, &pool.inputs, &pool.features, m, &c.tpa_config(), frozen, c.seed)?;
    let method = Method { kind: embedding.provenance, frozen };
    let row = SweepRow {
        method: method.to_string(),
        env: pool.set.env().to_string(),
        n: embedding.budget,
        m: Some(m),
        seed: c.seed,
        metric: "tpa".into(),
        value: report.mean,
    };
    let csv = ctx.artifact("tpa.csv");
    write_rows(&csv, &[row])?;
    let json = ctx.artifact("tpa.json");
    write_json(&json, &report)?;
    println!("TPA {:.4} ({method}, M={m})", report.mean);
    Ok(())
}

fn sweep(ctx: &mut Context) -> Result<(), Failure> {
    let pool = ctx.load_pool()?;
    let c = &ctx.config;
    let methods = c
        .sweep
        .methods
        .iter()
        .map(|s| s.parse::<Method>().map_err(|e| Failure::config(format!("sweep.methods: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let config = SweepConfig {
        env: c.env,
        methods,
        n: c.sweep.n.clone(),
        m: c.sweep.m.clone(),
        seeds: c.sweep.seeds.clone(),
        fpe: c.sweep.fpe,
        hp: c.hyper,
        tpa: c.tpa_config(),
    };
    config.validate().map_err(|e| Failure::config(e.to_string()))?;
    let cache = ctx.out.join("cache");
    let outcome = eval::run_sweep(&config, &pool.inputs, &pool.features, Some(&cache))?;
    let csv = ctx.artifact("sweep.csv");
    write_rows(&csv, &outcome.rows)?;
    println!(
        "{} rows ({} computed, {} from cache) -> {}",
        outcome.rows.len(),
        outcome.computed,
        outcome.cache_hits,
        csv.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Neighbor {
    index: usize,
    distance: f64,
}

#[derive(Serialize)]
struct Retrieval {
    query: usize,
    nearest: Vec<Neighbor>,
    farthest: Vec<Neighbor>,
}

fn retrieve(ctx: &mut Context, args: crate::Retrieve) -> Result<(), Failure> {
    let pool = ctx.load_pool()?;
    let embedding = ctx.load_embedding(&args.embedding, &pool)?;
    let query = args.query.unwrap_or(ctx.config.retrieve.query);
    let k = args.k.unwrap_or(ctx.config.retrieve.k);
    if query >= pool.set.len() {
        return Err(Failure::usage(format!("query {query} is outside the pool of {}", pool.set.len())));
    }
    let (nearest, farthest) = eval::retrieve_extremes(&embedding, pool.inputs.row(query), &pool.inputs, k)?;
    let convert = |r: Vec<(usize, f64)>| r.into_iter().map(|(index, distance)| Neighbor { index, distance }).collect();
    let result = Retrieval {
        query,
        nearest: convert(nearest),
        farthest: convert(farthest),
    };
    let path = ctx.artifact("retrieve.json");
    write_json(&path, &result)?;
    println!("{}", serde_json::to_string(&result).expect("serializes"));
    Ok(())
}

fn serve(mut ctx: Context, args: crate::Serve) -> Result<(), Failure> {
    let pool = ctx.load_pool()?;
    let port = match (args.port, std::env::var(PORT_ENV)) {
        (Some(p), _) => p,
        (None, Ok(v)) => v
            .parse()
            .map_err(|_| Failure::config(format!("{PORT_ENV}={v} is not a port number")))?,
        (None, Err(_)) => ctx.config.port,
    };
    let log_path = ctx.artifact("answers.jsonl");
    let log = AnswerLog::open(&log_path).map_err(|e| Failure::data(format!("{}: {e}", log_path.display())))?;
    let state = Arc::new(AppState::new(&pool.set, ctx.config.service.clone(), log)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), port))
            .await
            .map_err(|e| Failure::config(format!("cannot bind {}:{port}: {e}", args.host)))?;
        log::info!("listening on {}", listener.local_addr()?);
        // serving only ends on a signal, so the manifest is written up front
        ctx.finish()?;
        sirl_service::serve(listener, state).await?;
        Ok(())
    })
}
