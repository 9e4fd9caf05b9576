//! Run configuration for `wfgraph evolve`.
//!
//! The file is TOML. Top-level keys map one-to-one onto `EvolutionConfig`;
//! an optional `[run]` table names the seed workflows, the output directory
//! and the proposer, judge and evaluator to use. Scalar hyperparameters can be
//! overridden by flags or `WFGRAPH_*` environment variables, with precedence
//! flag > environment > file > default.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};
use wfgraph_core::evolve::{
    AdapterEvaluator, AdapterJudge, AdapterProposer, ConstantEvaluator, Evaluator, Evolution, EvolutionConfig, Judge, Manifest, OperatorProposer,
    ProcessAdapter, Proposer, StructuralJudge, SyntheticTaskEvaluator, TargetProfile,
};
use wfgraph_core::mermaid::read_graph;
use wfgraph_core::{Domain, Registry, WorkflowGraph};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    /// Structural similarity to a target profile.
    #[default]
    Synthetic,
    /// The same score for every workflow.
    Constant,
    /// An external process.
    Command,
}

/// The `[run]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Seed workflow files, relative to the config file.
    pub seeds: Vec<PathBuf>,
    /// Output directory, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub evaluator: EvaluatorKind,
    /// Target for the synthetic evaluator; a GSM8K-like profile when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetProfile>,
    /// Score for the constant evaluator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluator_command: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposer_command: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_command: Option<Vec<String>>,
}

/// Hyperparameter overrides from flags or the environment.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    #[arg(long, env = "WFGRAPH_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "WFGRAPH_ALPHA")]
    pub alpha: Option<f64>,
    /// Candidates per round.
    #[arg(long, env = "WFGRAPH_CANDIDATE_POOL")]
    pub candidate_pool: Option<usize>,
    #[arg(long, env = "WFGRAPH_MAX_ROUNDS")]
    pub max_rounds: Option<usize>,
    #[arg(long, env = "WFGRAPH_NUM_TRIES")]
    pub num_tries: Option<usize>,
    #[arg(long, env = "WFGRAPH_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "WFGRAPH_CROSSOVER_RATE")]
    pub crossover_rate: Option<f64>,
    #[arg(long, env = "WFGRAPH_SITE_BUDGET")]
    pub site_budget: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, c: &mut EvolutionConfig) -> anyhow::Result<()> {
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.candidate_pool {
            c.candidate_pool = v;
        }
        if let Some(v) = self.max_rounds {
            c.max_rounds = v;
        }
        if let Some(v) = self.num_tries {
            c.num_tries = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.crossover_rate {
            if c.operator_weights.is_some() {
                bail!("crossover_rate cannot be overridden when operator_weights are set in the config file");
            }
            c.crossover_rate = v;
        }
        if let Some(v) = self.site_budget {
            c.site_budget = v;
        }
        Ok(())
    }
}

/// Where the seeds come from: files, or canonical texts recorded in a manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedSource {
    Files(Vec<PathBuf>),
    Texts(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFile {
    pub config: EvolutionConfig,
    pub run: RunSection,
    pub seeds: SeedSource,
    pub out: PathBuf,
}

/// The manifest written next to the history file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<String>,
    pub seed_paths: Vec<String>,
    pub run: RunSection,
    pub started_unix: u64,
    pub finished_unix: u64,
    #[serde(flatten)]
    pub replay: Manifest,
}

pub struct Parts {
    pub proposer: Box<dyn Proposer>,
    pub judge: Box<dyn Judge>,
    pub evaluator: Box<dyn Evaluator>,
}

fn adapter(cmd: &[String], what: &str) -> anyhow::Result<ProcessAdapter> {
    let (program, args) = cmd.split_first().ok_or_else(|| anyhow!("{what}_command is empty"))?;
    Ok(ProcessAdapter::new(program.clone(), args.to_vec(), false))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunFile {
    pub fn parse(text: &str, base: &Path) -> anyhow::Result<RunFile> {
        let mut table: toml::Table = toml::from_str(text)?;
        let run: RunSection = match table.remove("run") {
            Some(v) => v.try_into().context("[run]")?,
            None => RunSection::default(),
        };
        let config: EvolutionConfig = toml::Value::Table(table).try_into()?;
        let seeds = SeedSource::Files(run.seeds.iter().map(|p| base.join(p)).collect());
        let out = base.join(run.out.clone().unwrap_or_else(|| PathBuf::from("run")));
        Ok(RunFile { config, run, seeds, out })
    }

    pub fn load(path: &Path) -> anyhow::Result<RunFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunFile::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn from_manifest(path: &Path) -> anyhow::Result<RunFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        let out = path.parent().unwrap_or(Path::new(".")).join("replay");
        Ok(RunFile { config: m.replay.config, run: m.run, seeds: SeedSource::Texts(m.replay.seeds), out })
    }

    pub fn seed_graphs(&self, registry: Arc<Registry>, domain: Option<Domain>) -> anyhow::Result<Vec<WorkflowGraph>> {
        let texts: Vec<(String, String)> = match &self.seeds {
            SeedSource::Files(paths) => paths
                .iter()
                .map(|p| Ok((p.display().to_string(), std::fs::read_to_string(p).with_context(|| format!("cannot read seed {}", p.display()))?)))
                .collect::<anyhow::Result<_>>()?,
            SeedSource::Texts(t) => t.iter().enumerate().map(|(i, t)| (format!("manifest seed {i}"), t.clone())).collect(),
        };
        if texts.is_empty() {
            bail!("no seed workflows; list them under [run] seeds");
        }
        texts
            .iter()
            .map(|(name, text)| {
                read_graph(text, registry.clone(), domain).map(|l| l.graph).map_err(|d| {
                    anyhow!("{name} does not parse: {}", d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
                })
            })
            .collect()
    }

    pub fn parts(&self) -> anyhow::Result<Parts> {
        let c = &self.config;
        let proposer: Box<dyn Proposer> = match &self.run.proposer_command {
            Some(cmd) => Box::new(AdapterProposer(adapter(cmd, "proposer")?)),
            None => Box::new(OperatorProposer::new(c.weights(), c.site_budget)),
        };
        let judge: Box<dyn Judge> = match &self.run.judge_command {
            Some(cmd) => Box::new(AdapterJudge(adapter(cmd, "judge")?)),
            None => Box::new(StructuralJudge::default()),
        };
        let evaluator: Box<dyn Evaluator> = match self.run.evaluator {
            EvaluatorKind::Synthetic => Box::new(match self.run.target {
                Some(t) => SyntheticTaskEvaluator::new(t),
                None => SyntheticTaskEvaluator::gsm8k_like(),
            }),
            EvaluatorKind::Constant => {
                let v = self.run.constant.ok_or_else(|| anyhow!("evaluator = \"constant\" needs `constant`"))?;
                if !(0.0..=1.0).contains(&v) {
                    bail!("constant must lie in [0, 1], got {v}");
                }
                Box::new(ConstantEvaluator(v))
            }
            EvaluatorKind::Command => {
                let cmd = self.run.evaluator_command.as_ref().ok_or_else(|| anyhow!("evaluator = \"command\" needs `evaluator_command`"))?;
                Box::new(AdapterEvaluator(adapter(cmd, "evaluator")?))
            }
        };
        Ok(Parts { proposer, judge, evaluator })
    }

    pub fn manifest(&self, evo: &Evolution, registry: Option<String>, started_unix: u64) -> RunManifest {
        let seed_paths = match &self.seeds {
            SeedSource::Files(p) => p.iter().map(|p| p.display().to_string()).collect(),
            SeedSource::Texts(_) => Vec::new(),
        };
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            registry,
            seed_paths,
            run: self.run.clone(),
            started_unix,
            finished_unix: now(),
            replay: evo.manifest(&self.config),
        }
    }
}

pub fn started() -> u64 {
    now()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_and_run_table() {
        let text = "lambda = 0.5\nseed = 9\n[run]\nseeds = [\"a.mmd\"]\nevaluator = \"constant\"\nconstant = 0.5\n";
        let r = RunFile::parse(text, Path::new("/x")).unwrap();
        assert_eq!((r.config.lambda, r.config.seed, r.config.max_rounds), (0.5, 9, 20));
        assert_eq!(r.seeds, SeedSource::Files(vec![PathBuf::from("/x/a.mmd")]));
        assert_eq!(r.out, PathBuf::from("/x/run"));
        assert_eq!(r.run.evaluator, EvaluatorKind::Constant);
        assert!(r.parts().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunFile::parse("lamda = 0.5\n", Path::new(".")).is_err());
        assert!(RunFile::parse("[run]\nseed = []\n", Path::new(".")).is_err());
    }

    #[test]
    fn overrides_win_over_the_file() {
        let mut r = RunFile::parse("lambda = 0.5\nmax_rounds = 7\n", Path::new(".")).unwrap();
        ConfigOverrides { lambda: Some(0.1), ..Default::default() }.apply(&mut r.config).unwrap();
        assert_eq!((r.config.lambda, r.config.max_rounds), (0.1, 7));
    }

    #[test]
    fn constant_evaluator_needs_a_value() {
        let r = RunFile::parse("[run]\nevaluator = \"constant\"\n", Path::new(".")).unwrap();
        assert!(r.parts().is_err());
    }
}
