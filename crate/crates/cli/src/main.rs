//! `wfgraph`: validate, mutate, evolve, emit and export workflow graphs.
//!
//! Exit codes: 0 success, 1 domain failure, 2 input or configuration failure,
//! 3 no applicable rewrite.

mod config;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use wfgraph_core::codegen::{generate, structural_diff, CodegenError, Templates};
use wfgraph_core::dot::to_dot;
use wfgraph_core::evolve::{round_rng, run_evolution, RoundStatus};
use wfgraph_core::mermaid::{read_graph, serialize_workflow};
use wfgraph_core::ops::{apply_kind, apply_random, OperatorError, OperatorKind};
use wfgraph_core::{validate_graph, validate_text, Diagnostic, Domain, Registry, WorkflowGraph};

use config::{ConfigOverrides, RunFile};

#[derive(Debug, Parser)]
#[command(name = "wfgraph", version, about = "Typed agent-workflow graphs in a Mermaid flowchart dialect")]
struct Cli {
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Node-type registry (TOML); the built-in registry when omitted.
    #[arg(long, global = true, env = "WFGRAPH_REGISTRY")]
    registry: Option<PathBuf>,
    /// Task domain (math or code); inferred from the graph when omitted.
    #[arg(long, global = true)]
    domain: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a workflow; exit 0 iff it validates.
    Validate {
        /// Workflow file, or `-` / nothing for stdin.
        path: Option<PathBuf>,
    },
    /// Apply one rewrite operator and print the result.
    Mutate(MutateArgs),
    /// Run the evolutionary loop described by a config file.
    Evolve(EvolveArgs),
    /// Generate a program and its prompt module from a workflow.
    Emit {
        path: PathBuf,
        /// Template file, or a directory holding `templates.toml`.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print a workflow as Graphviz DOT.
    ExportDot {
        /// Workflow file, or `-` / nothing for stdin.
        path: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct MutateArgs {
    /// One workflow, or two for crossover and subgraph mutation.
    #[arg(required = true, num_args = 1..=2)]
    paths: Vec<PathBuf>,
    /// Operator to apply; drawn from the default weights when omitted.
    #[arg(long)]
    op: Option<OperatorKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output files, one per offspring; stdout when omitted.
    #[arg(long = "out")]
    outs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct EvolveArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replays the config and seeds recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    replay: Option<PathBuf>,
    /// Output directory for `history.jsonl` and `manifest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }

    fn domain(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            if cli.json {
                println!("{}", json!({"error": format!("{:#}", f.error), "exit": f.code}));
            } else {
                eprintln!("error: {:#}", f.error);
            }
            ExitCode::from(f.code)
        }
    }
}

struct Ctx {
    json: bool,
    registry_path: Option<PathBuf>,
    registry: Arc<Registry>,
    domain: Option<Domain>,
}

fn run(cli: &Cli) -> Outcome {
    let registry = match &cli.registry {
        Some(p) => Arc::new(Registry::from_path(p).map_err(|e| Failure::input(anyhow!("{}: {e}", p.display())))?),
        None => Registry::shared_default(),
    };
    let domain = match &cli.domain {
        Some(d) => Some(d.parse::<Domain>().map_err(|e| Failure::input(anyhow!("--domain: {e}")))?),
        None => None,
    };
    let ctx = Ctx { json: cli.json, registry_path: cli.registry.clone(), registry, domain };
    match &cli.command {
        Command::Validate { path } => cmd_validate(&ctx, path.as_deref()),
        Command::Mutate(args) => cmd_mutate(&ctx, args),
        Command::Evolve(args) => cmd_evolve(&ctx, args),
        Command::Emit { path, templates, out } => cmd_emit(&ctx, path, templates.as_deref(), out),
        Command::ExportDot { path } => cmd_export_dot(&ctx, path.as_deref()),
    }
}

fn read_input(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        None => read_stdin(),
        Some(p) if p.as_os_str() == "-" => read_stdin(),
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())).map_err(Failure::input),
    }
}

fn read_stdin() -> Result<String, Failure> {
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s).context("cannot read stdin").map_err(Failure::input)?;
    Ok(s)
}

fn print_diagnostics(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{d}");
    }
}

/// Parses a workflow; syntax failures are input failures.
fn load_graph(ctx: &Ctx, path: Option<&Path>) -> Result<(WorkflowGraph, Vec<Diagnostic>), Failure> {
    let text = read_input(path)?;
    let name = path.map(|p| p.display().to_string()).unwrap_or_else(|| "stdin".into());
    if text.trim().is_empty() {
        return Err(Failure::input(anyhow!("{name}: empty input")));
    }
    match read_graph(&text, ctx.registry.clone(), ctx.domain) {
        Ok(l) => Ok((l.graph, l.diagnostics)),
        Err(diags) => {
            if !ctx.json {
                print_diagnostics(&diags);
            }
            Err(Failure::input(anyhow!("{name}: does not parse ({} finding(s))", diags.len())))
        }
    }
}

/// Parses a workflow and requires it to validate.
fn load_valid(ctx: &Ctx, path: &Path) -> Result<WorkflowGraph, Failure> {
    let (g, _) = load_graph(ctx, Some(path))?;
    let v = validate_graph(&g);
    if !v.passed() {
        if !ctx.json {
            print_diagnostics(&v.diagnostics);
        }
        return Err(Failure::domain(anyhow!("{} does not validate", path.display())));
    }
    Ok(g)
}

fn cmd_validate(ctx: &Ctx, path: Option<&Path>) -> Outcome {
    let text = read_input(path)?;
    let v = validate_text(&text, ctx.registry.clone(), ctx.domain);
    if ctx.json {
        println!("{}", serde_json::to_string(&v).expect("verdicts serialize"));
    } else {
        print_diagnostics(&v.diagnostics);
    }
    Ok(if v.passed() { 0 } else { 1 })
}

fn cmd_mutate(ctx: &Ctx, args: &MutateArgs) -> Outcome {
    let graphs: Vec<WorkflowGraph> = args.paths.iter().map(|p| load_valid(ctx, p)).collect::<Result<_, _>>()?;
    let mut rng = round_rng(args.seed, 0);
    let partner = graphs.get(1);
    let budget = wfgraph_core::ops::DEFAULT_SITE_BUDGET;
    let result = match args.op {
        Some(kind) => apply_kind(kind, &graphs[0], partner, &mut rng, budget),
        None => apply_random(&graphs[0], partner, &Default::default(), &mut rng, budget),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e @ (OperatorError::NoApplicableRewrite { .. } | OperatorError::NoCrossoverPoint)) => {
            if ctx.json {
                println!("{}", json!({"error": e.to_string(), "exit": 3}));
            } else {
                eprintln!("{e}");
            }
            return Ok(3);
        }
        Err(e) => return Err(Failure::domain(e)),
    };
    let texts: Vec<String> = outcome.graphs.iter().map(serialize_workflow).collect();
    if !args.outs.is_empty() {
        if args.outs.len() != texts.len() {
            return Err(Failure::input(anyhow!("{} produced {} workflow(s) but {} --out path(s) were given", outcome.applied, texts.len(), args.outs.len())));
        }
        for (p, t) in args.outs.iter().zip(&texts) {
            std::fs::write(p, t).with_context(|| format!("cannot write {}", p.display())).map_err(Failure::input)?;
        }
    }
    if ctx.json {
        println!("{}", json!({"operator": outcome.applied, "modification": outcome.description, "workflows": texts}));
    } else {
        if args.outs.is_empty() {
            for (i, t) in texts.iter().enumerate() {
                if i > 0 {
                    println!("%% ---");
                }
                print!("{t}");
            }
        }
        eprintln!("{}", outcome.modification_record());
    }
    Ok(0)
}

fn cmd_evolve(ctx: &Ctx, args: &EvolveArgs) -> Outcome {
    let mut run = match (&args.config, &args.replay) {
        (Some(p), None) => RunFile::load(p),
        (None, Some(p)) => RunFile::from_manifest(p),
        (None, None) => Err(anyhow!("evolve needs --config or --replay")),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    }
    .map_err(Failure::input)?;
    args.overrides.apply(&mut run.config).map_err(Failure::input)?;
    run.config.validate().map_err(Failure::input)?;
    if let Some(out) = &args.out {
        run.out = out.clone();
    }

    let started = config::started();
    let seeds = run.seed_graphs(ctx.registry.clone(), ctx.domain).map_err(Failure::input)?;
    let parts = run.parts().map_err(Failure::input)?;
    let evo = run_evolution(&seeds, &run.config, parts.proposer.as_ref(), parts.judge.as_ref(), parts.evaluator.as_ref())
        .map_err(|e| match e {
            wfgraph_core::evolve::EvolveError::InvalidSeed { .. } | wfgraph_core::evolve::EvolveError::InvalidConfig(_) => Failure::input(e),
            other => Failure::domain(other),
        })?;

    std::fs::create_dir_all(&run.out).with_context(|| format!("cannot create {}", run.out.display())).map_err(Failure::input)?;
    let history_path = run.out.join("history.jsonl");
    let manifest_path = run.out.join("manifest.json");
    std::fs::write(&history_path, evo.history.to_jsonl()).with_context(|| format!("cannot write {}", history_path.display())).map_err(Failure::input)?;
    let manifest = run.manifest(&evo, ctx.registry_path.as_ref().map(|p| p.display().to_string()), started);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifests serialize") + "\n")
        .with_context(|| format!("cannot write {}", manifest_path.display()))
        .map_err(Failure::input)?;

    for r in &evo.rounds {
        let total = r.winner.and_then(|w| r.judge.get(w)).map(|s| s.total());
        if ctx.json {
            println!("{}", serde_json::to_string(r).expect("reports serialize"));
            continue;
        }
        match &r.status {
            RoundStatus::Accepted { score, .. } => println!(
                "round {:>2}  {:<17}  judge {:>2}  score {:.4}  best {:.4}",
                r.round,
                r.operator.map(|o| o.as_str()).unwrap_or("-"),
                total.unwrap_or(0),
                score,
                r.best_score
            ),
            RoundStatus::Skipped { reason } => println!("round {:>2}  skipped: {reason}", r.round),
        }
    }
    let seed_best = evo.history.entries().iter().filter(|e| e.round == 0).map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
    let best = evo.history.best_score().unwrap_or(f64::NAN);
    if !ctx.json {
        println!("seed best {seed_best:.4}  final best {best:.4}  history {}", history_path.display());
    }
    let accepted = evo.rounds.iter().filter(|r| matches!(r.status, RoundStatus::Accepted { .. })).count();
    if !evo.rounds.is_empty() && accepted == 0 {
        return Err(Failure::domain(anyhow!("all {} round(s) failed", evo.rounds.len())));
    }
    Ok(0)
}

fn load_templates(path: Option<&Path>) -> Result<Templates, Failure> {
    let Some(p) = path else { return Ok(Templates::default_set()) };
    let file = if p.is_dir() { p.join("templates.toml") } else { p.to_path_buf() };
    Templates::from_path(&file).map_err(Failure::input)
}

fn cmd_emit(ctx: &Ctx, path: &Path, templates: Option<&Path>, out: &Path) -> Outcome {
    let templates = load_templates(templates)?;
    let g = load_valid(ctx, path)?;
    let emitted = generate(&g, &templates).map_err(|e| match e {
        CodegenError::MissingTemplate(_) | CodegenError::MissingHole { .. } | CodegenError::Template(_) => Failure::input(e),
        other => Failure::domain(other),
    })?;
    let report = structural_diff(&emitted.program, &g, &templates);
    if !report.is_empty() {
        if ctx.json {
            println!("{}", json!({"diff": report}));
        }
        return Err(Failure::domain(anyhow!("emitted program disagrees with the graph: {}", serde_json::to_string(&report).expect("reports serialize"))));
    }
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display())).map_err(Failure::input)?;
    let program_path = out.join("graph.py");
    let prompt_path = out.join("prompt.py");
    std::fs::write(&program_path, &emitted.program).with_context(|| format!("cannot write {}", program_path.display())).map_err(Failure::input)?;
    std::fs::write(&prompt_path, &emitted.prompts).with_context(|| format!("cannot write {}", prompt_path.display())).map_err(Failure::input)?;
    if ctx.json {
        println!("{}", json!({"program": program_path, "prompts": prompt_path, "diff": report}));
    } else {
        println!("{}\n{}", program_path.display(), prompt_path.display());
    }
    Ok(0)
}

fn cmd_export_dot(ctx: &Ctx, path: Option<&Path>) -> Outcome {
    let (g, lowering) = load_graph(ctx, path)?;
    let mut diags = lowering;
    diags.extend(validate_graph(&g).diagnostics);
    diags.dedup();
    let dot = to_dot(&g, &diags);
    if ctx.json {
        println!("{}", json!({"dot": dot, "diagnostics": diags}));
    } else {
        print!("{dot}");
    }
    Ok(0)
}
