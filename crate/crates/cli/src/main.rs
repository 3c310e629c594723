use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hima_core::advisors::client_from_env;
use hima_core::clustering::{assign_strategic_objectives, cluster_replays, ClusterModel};
use hima_core::demos::{attach_rationale, emit_dataset, extract_samples, DemoError, PipelineConfig, RationaleMode, ReplayLog};
use hima_core::harness::{
    ablate, build_stack, compute_metrics, generate_corpus, metrics_from_trace, read_trace, run_match, win_rate,
    write_table, AblationAxis, AblationSpec, CorpusSpec, HimaSpec, MatchConfig, MetricReport, SideConfig, SideKind,
};
use hima_core::opponents::Persona;
use hima_core::world::{ActionCatalog, Race};
use hima_core::HimaConfig;

#[derive(Parser)]
#[command(name = "hima", version, about = "Text RTS macro simulator and hierarchical imitation agents")]
struct Cli {
    /// Config file; shipped defaults when omitted.
    #[arg(long, global = true, env = "HIMA_CONFIG")]
    config: Option<PathBuf>,
    /// External agent endpoint (`http://...` or `pipe:<command>`).
    #[arg(long, global = true, env = "HIMA_AGENT_ENDPOINT")]
    agent_endpoint: Option<String>,
    /// External agent timeout in seconds.
    #[arg(long, global = true, env = "HIMA_AGENT_TIMEOUT")]
    agent_timeout: Option<u64>,
    /// Worker threads for tournaments (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play one match and print the result.
    Simulate(SimulateArgs),
    /// Win rate of one side against a builtin level.
    Ladder(LadderArgs),
    /// HIMA against another HIMA stack or the external agent.
    Arena(ArenaArgs),
    /// Generate demonstrations and emit the instruction dataset.
    Dataset(DatasetArgs),
    /// Cluster replays by final unit composition.
    Cluster(ClusterArgs),
    /// Sweep one configuration axis and write a win-rate table.
    Ablate(AblateArgs),
    /// Recompute macro metrics from a trace file.
    Metrics(MetricsArgs),
}

/// `builtin:<1-10>`, `expert:<persona>`, `hima`, `hima-direct`, `external` or `passive`.
#[derive(Debug, Clone, PartialEq)]
enum SideSpec {
    Builtin(u8),
    Expert(Persona),
    Hima { direct: bool },
    External,
    Passive,
}

impl FromStr for SideSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        match head.to_ascii_lowercase().as_str() {
            "builtin" => arg.parse().map(SideSpec::Builtin).map_err(|_| format!("bad builtin level `{arg}`")),
            "expert" => arg.parse().map(SideSpec::Expert),
            "hima" => Ok(SideSpec::Hima { direct: false }),
            "hima-direct" => Ok(SideSpec::Hima { direct: true }),
            "external" => Ok(SideSpec::External),
            "passive" => Ok(SideSpec::Passive),
            _ => Err(format!("unknown side `{s}`")),
        }
    }
}

#[derive(Args)]
struct StackArgs {
    /// Advisors (clusters) in the HIMA stack.
    #[arg(long)]
    k: Option<usize>,
    /// Race the demonstrations are played against.
    #[arg(long, default_value = "zerg")]
    corpus_opponent: Race,
    #[arg(long, default_value_t = 7)]
    cluster_seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "protoss")]
    race: Race,
    #[arg(long, default_value = "zerg")]
    opponent_race: Race,
    #[arg(long, default_value = "hima")]
    a: SideSpec,
    #[arg(long, default_value = "builtin:4")]
    b: SideSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sim-second cap; config value when omitted.
    #[arg(long)]
    time_cap: Option<u32>,
    /// Write the JSON-lines trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the replay log here.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[command(flatten)]
    stack: StackArgs,
}

#[derive(Args)]
struct LadderArgs {
    #[arg(long, default_value = "protoss")]
    race: Race,
    #[arg(long, default_value = "zerg")]
    opponent_race: Race,
    #[arg(long, default_value = "hima")]
    agent: SideSpec,
    #[arg(long)]
    level: u8,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[command(flatten)]
    stack: StackArgs,
}

#[derive(Args)]
struct ArenaArgs {
    #[arg(long, default_value = "protoss")]
    race: Race,
    #[arg(long, default_value = "zerg")]
    opponent_race: Race,
    /// `hima`, `hima-direct` or `external`.
    #[arg(long, default_value = "hima")]
    opponent: SideSpec,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[command(flatten)]
    stack: StackArgs,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long, default_value = "protoss")]
    race: Race,
    #[arg(long, default_value = "zerg")]
    opponent_race: Race,
    /// Read replay logs from this directory instead of generating them.
    #[arg(long)]
    replays: Option<PathBuf>,
    /// Save generated replay logs here.
    #[arg(long)]
    save_replays: Option<PathBuf>,
    #[arg(long)]
    window_seconds: Option<u32>,
    #[arg(long)]
    winners_only: Option<bool>,
    #[arg(long, default_value = "template")]
    rationale_mode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, default_value = "protoss")]
    race: Race,
    #[arg(long, default_value = "zerg")]
    opponent_race: Race,
    #[arg(long)]
    replays: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    winners_only: Option<bool>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// `agent_count`, `aggregation`, `tcot` or `delta`.
    #[arg(long)]
    axis: String,
    #[arg(long, default_value = "protoss")]
    race: Race,
    #[arg(long, default_value = "zerg")]
    opponent_race: Race,
    #[arg(long, default_value_t = 5)]
    level: u8,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    trace: PathBuf,
    #[arg(long, default_value_t = 0)]
    side: usize,
}

struct Ctx {
    cfg: HimaConfig,
    workers: usize,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => HimaConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => HimaConfig::default(),
    };
    if let Some(e) = cli.agent_endpoint.filter(|e| !e.trim().is_empty()) {
        cfg.agent.endpoint = Some(e);
    }
    if let Some(t) = cli.agent_timeout {
        cfg.agent.timeout_secs = t;
    }
    let ctx = Ctx { workers: cli.workers.unwrap_or(cfg.harness.workers), cfg };
    match cli.cmd {
        Cmd::Simulate(a) => simulate(&ctx, a),
        Cmd::Ladder(a) => ladder(&ctx, a),
        Cmd::Arena(a) => arena(&ctx, a),
        Cmd::Dataset(a) => dataset(&ctx, a),
        Cmd::Cluster(a) => cluster(&ctx, a),
        Cmd::Ablate(a) => ablate_cmd(&ctx, a),
        Cmd::Metrics(a) => metrics(&ctx, a),
    }
}

fn corpus(ctx: &Ctx, race: Race, opponent: Race) -> Result<Vec<ReplayLog>> {
    eprintln!("generating {race} demonstrations against {opponent}...");
    Ok(generate_corpus(&CorpusSpec::standard(race, opponent), &ctx.cfg.world, ctx.workers)?)
}

fn load_replays(dir: &Path) -> Result<Vec<ReplayLog>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| ReplayLog::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn hima_spec(ctx: &Ctx, race: Race, stack: &StackArgs, direct: bool) -> Result<HimaSpec> {
    let logs = corpus(ctx, race, stack.corpus_opponent)?;
    let k = if direct { 1 } else { stack.k.unwrap_or(ctx.cfg.clustering.k) };
    let built = build_stack(&logs, race, k, stack.cluster_seed, &ctx.cfg)?;
    let mut pool = built.pool;
    let mut spec_agent = None;
    if let Some(client) = client_from_env(&ctx.cfg.agent)? {
        let Ok(owned) = Arc::try_unwrap(pool) else { bail!("advisor pool is shared") };
        pool = Arc::new(owned.with_external(Arc::clone(&client)));
        spec_agent = Some(client);
    }
    let mut spec = HimaSpec::new(pool, &ctx.cfg);
    spec.planner_agent = spec_agent;
    spec.direct = direct;
    Ok(spec)
}

fn side(ctx: &Ctx, race: Race, spec: &SideSpec, stack: &StackArgs) -> Result<SideConfig> {
    let kind = match spec {
        SideSpec::Builtin(l) => SideKind::Builtin(*l),
        SideSpec::Expert(p) => SideKind::Expert(*p),
        SideSpec::Passive => SideKind::Passive,
        SideSpec::Hima { direct } => SideKind::Hima(hima_spec(ctx, race, stack, *direct)?),
        SideSpec::External => match client_from_env(&ctx.cfg.agent)? {
            Some(c) => SideKind::External(c),
            None => bail!("external side needs HIMA_AGENT_ENDPOINT or agent.endpoint"),
        },
    };
    Ok(SideConfig { race, kind })
}

fn match_config(ctx: &Ctx, a: SideConfig, b: SideConfig, seed: u64) -> MatchConfig {
    let mut m = MatchConfig::new(a, b, seed);
    m.rules = ctx.cfg.world.clone();
    m.cheats = ctx.cfg.cheats.clone();
    m
}

fn print_metrics(label: &str, m: &MetricReport) {
    println!(
        "{label}\tpbr={:.4}\trur={}{}\tapu={:.4}\ttr={:.4}",
        m.pbr,
        m.rur,
        if m.max_supply_reached { "" } else { " (never maxed)" },
        m.apu,
        m.tr
    );
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let sa = side(ctx, a.race, &a.a, &a.stack)?;
    let sb = side(ctx, a.opponent_race, &a.b, &a.stack)?;
    let mut m = match_config(ctx, sa, sb, a.seed);
    if let Some(cap) = a.time_cap {
        m.rules.time_cap = cap;
    }
    m.trace_path = a.trace.clone();
    m.record_replay = a.replay.is_some();
    let r = run_match(&m)?;
    println!("{} vs {}: {:?} after {} s", r.labels[0], r.labels[1], r.outcome, r.duration);
    println!("trace hash {}", r.trace_hash);
    for s in 0..2 {
        if let Some(st) = r.stats[s] {
            println!(
                "side {s} planner_calls={} threats={} exhaustions={} executed={} failures={}",
                st.planner_calls, st.threat_events, st.exhaustion_events, st.executed, st.failures
            );
        }
        print_metrics(&format!("side {s}"), &compute_metrics(&r, s, &m.rules)?);
    }
    if let (Some(path), Some(log)) = (&a.replay, &r.replay) {
        log.save(path)?;
        println!("replay written to {}", path.display());
    }
    Ok(())
}

fn ladder(ctx: &Ctx, a: LadderArgs) -> Result<()> {
    let agent = side(ctx, a.race, &a.agent, &a.stack)?;
    let builtin = SideConfig { race: a.opponent_race, kind: SideKind::Builtin(a.level) };
    let m = match_config(ctx, agent, builtin, 0);
    let n = a.seeds.unwrap_or(ctx.cfg.harness.win_rate_seeds);
    let wr = win_rate(&m, 0, n, a.seed_base, ctx.workers)?;
    println!(
        "{} vs builtin-{}: {}/{} = {:.3} (mean planner calls {:.2})",
        m.sides[0].kind.label(),
        a.level,
        wr.wins,
        wr.n,
        wr.fraction,
        wr.mean_planner_calls()
    );
    Ok(())
}

fn arena(ctx: &Ctx, a: ArenaArgs) -> Result<()> {
    if !matches!(a.opponent, SideSpec::Hima { .. } | SideSpec::External) {
        bail!("arena opponents are hima, hima-direct or external");
    }
    let ours = side(ctx, a.race, &SideSpec::Hima { direct: false }, &a.stack)?;
    let theirs = side(ctx, a.opponent_race, &a.opponent, &a.stack)?;
    let m = match_config(ctx, ours, theirs, 0);
    let n = a.seeds.unwrap_or(ctx.cfg.harness.win_rate_seeds);
    let wr = win_rate(&m, 0, n, a.seed_base, ctx.workers)?;
    let draws = wr.results.iter().filter(|r| r.winner.is_none()).count();
    println!("{} vs {}: wins {} draws {} of {}", m.sides[0].kind.label(), m.sides[1].kind.label(), wr.wins, draws, n);
    Ok(())
}

fn dataset(ctx: &Ctx, a: DatasetArgs) -> Result<()> {
    let rationale_mode = match a.rationale_mode.as_str() {
        "template" => RationaleMode::Template,
        "external" => RationaleMode::External,
        other => bail!("unknown rationale mode `{other}`"),
    };
    let pipeline = PipelineConfig {
        window_seconds: a.window_seconds.unwrap_or(ctx.cfg.pipeline.window_seconds),
        rationale_mode,
        winners_only: a.winners_only.unwrap_or(ctx.cfg.pipeline.winners_only),
    };
    let logs = match &a.replays {
        Some(dir) => load_replays(dir)?,
        None => corpus(ctx, a.race, a.opponent_race)?,
    };
    if let Some(dir) = &a.save_replays {
        std::fs::create_dir_all(dir)?;
        for (i, log) in logs.iter().enumerate() {
            log.save(dir.join(format!("{i:04}.replay")))?;
        }
    }
    let catalog = ActionCatalog::builtin(a.race);
    let client = match rationale_mode {
        RationaleMode::External => client_from_env(&ctx.cfg.agent)?,
        RationaleMode::Template => None,
    };
    let mut samples = Vec::new();
    for log in &logs {
        for player in 0..2 {
            if log.meta.races[player] != a.race || !log.meta.demonstrators[player] {
                continue;
            }
            if pipeline.winners_only && log.meta.winner != Some(player) {
                continue;
            }
            let extracted = match extract_samples(log, &pipeline, player) {
                Ok(s) => s,
                Err(DemoError::EmptyReplay(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            for s in extracted {
                samples.push(attach_rationale(s, &pipeline, &catalog, client.as_deref())?);
            }
        }
    }
    let n = emit_dataset(&samples, &a.out)?;
    println!("{n} records from {} replays written to {}", logs.len(), a.out.display());
    Ok(())
}

fn cluster(ctx: &Ctx, a: ClusterArgs) -> Result<()> {
    let logs = match &a.replays {
        Some(dir) => load_replays(dir)?,
        None => corpus(ctx, a.race, a.opponent_race)?,
    };
    let catalog = ActionCatalog::builtin(a.race);
    let k = a.k.unwrap_or(ctx.cfg.clustering.k);
    let winners_only = a.winners_only.unwrap_or(ctx.cfg.pipeline.winners_only);
    let model: ClusterModel = cluster_replays(&logs, &catalog, k, a.seed, winners_only, ctx.cfg.clustering.max_iterations)?;
    for o in assign_strategic_objectives(&model, &catalog, ctx.cfg.clustering.dominance_threshold) {
        let members = model.assignments.iter().filter(|m| m.cluster == o.cluster).count();
        println!("cluster {}\t{}\t{members} members", o.cluster, o.label.as_str());
    }
    model.save(&a.out)?;
    println!("model written to {}", a.out.display());
    Ok(())
}

fn ablate_cmd(ctx: &Ctx, a: AblateArgs) -> Result<()> {
    let axis = AblationAxis::parse(&a.axis)?;
    let logs = corpus(ctx, a.race, a.opponent_race)?;
    let spec = AblationSpec {
        axis,
        race: a.race,
        opponent: a.opponent_race,
        level: a.level,
        seeds: a.seeds.unwrap_or(ctx.cfg.harness.ablation_seeds),
        seed_base: a.seed_base,
        workers: ctx.workers,
    };
    let rows = ablate(&spec, &logs, &ctx.cfg)?;
    for r in &rows {
        println!("{}={}\t{:.3}\t({}/{})\tcalls {:.2}", r.axis, r.value, r.win_rate, r.wins, r.n, r.mean_planner_calls);
    }
    write_table(&rows, &a.out)?;
    Ok(())
}

fn metrics(ctx: &Ctx, a: MetricsArgs) -> Result<()> {
    if a.side > 1 {
        bail!("side must be 0 or 1");
    }
    let trace = read_trace(&a.trace)?;
    let m = metrics_from_trace(&trace, a.side, ctx.cfg.world.max_supply)?;
    print_metrics(&format!("side {}", a.side), &m);
    Ok(())
}
