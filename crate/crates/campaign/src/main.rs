use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sdnfuzz::{compare_modes, generate_corpus, run_campaign, run_corpus, write_corpus, CampaignConfig, Mode};
use sdnfuzz_core::codec::load_schemas;
use sdnfuzz_core::{Label, RuleSet, SchemaRegistry};
use sdnfuzz_harness::{OracleConfig, SutServer};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "sdnfuzz", version, about = "Learning-guided fuzzing of SDN control messages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one fuzzing campaign against the simulated controller.
    Campaign(CampaignArgs),
    /// Run the same campaign in several modes and compare them.
    Compare {
        #[command(flatten)]
        args: CampaignArgs,
        #[arg(long, value_delimiter = ',', default_value = "guided,random,schema_random")]
        modes: Vec<Mode>,
    },
    /// Generate messages that satisfy learned failure rules.
    Replay(ReplayArgs),
    /// Schema file utilities.
    Schemas {
        #[command(subcommand)]
        command: SchemaCommand,
    },
}

#[derive(Subcommand)]
enum SchemaCommand {
    /// Check a schema document, or the built-in one.
    Validate { file: Option<PathBuf> },
}

#[derive(Args, Clone)]
struct CampaignArgs {
    #[arg(long, value_enum, default_value_t = Mode::Guided)]
    mode: Mode,
    #[arg(long, default_value = "packet_in")]
    message_type: String,
    /// Messages per iteration.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Per-field mutation probability, or `auto` for 1/|fields|.
    #[arg(long, default_value = "auto")]
    mutation_rate: String,
    #[arg(long, default_value_t = 20)]
    iterations: u32,
    #[arg(long)]
    budget_seconds: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Oracle TOML; defaults to the planted packet_in oracle.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long, env = "SDNFUZZ_OUT")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long)]
    stop_on_plateau: bool,
    /// Held-out evaluation size; 0 disables it.
    #[arg(long, default_value_t = 5000)]
    heldout: usize,
}

impl CampaignArgs {
    fn config(&self) -> Result<CampaignConfig> {
        let oracle = match &self.oracle {
            Some(p) => OracleConfig::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => OracleConfig::default_planted(),
        };
        let mutation_rate = match self.mutation_rate.as_str() {
            "auto" => None,
            s => Some(s.parse::<f64>().with_context(|| format!("bad mutation rate `{s}`"))?),
        };
        let mut cfg = CampaignConfig {
            mode: self.mode,
            message_type: self.message_type.clone(),
            n_per_iteration: self.n,
            mutation_rate,
            max_iterations: self.iterations,
            budget_seconds: self.budget_seconds,
            seed: self.seed,
            oracle,
            output_dir: self.out.clone(),
            workers: self.workers,
            heldout_size: self.heldout,
            ..CampaignConfig::default()
        };
        cfg.stop.plateau = self.stop_on_plateau;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ReplayArgs {
    /// Rule set text as written by a campaign.
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, default_value = "packet_in")]
    message_type: String,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also send the corpus to a simulated controller using this oracle.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let registry = Arc::new(SchemaRegistry::shipped());
    let schema = registry
        .get(&args.message_type)
        .with_context(|| format!("unknown message type `{}`", args.message_type))?;
    let text = fs::read_to_string(&args.rules).with_context(|| format!("reading {}", args.rules.display()))?;
    let rules: RuleSet = text.parse()?;
    let cases = generate_corpus(&rules, schema, args.count, args.seed);
    write_corpus(&args.out, &cases)?;
    println!("wrote {} messages to {}", cases.len(), args.out.display());
    if let Some(p) = &args.oracle {
        let oracle = OracleConfig::from_toml(&fs::read_to_string(p)?)?.build(&registry)?;
        if oracle.schema.type_name != args.message_type {
            bail!("oracle judges `{}`, corpus holds `{}`", oracle.schema.type_name, args.message_type);
        }
        let sut = SutServer::start(Arc::clone(&registry), oracle)?;
        let labels = run_corpus(&registry, &sut, &cases, args.seed)?;
        let hits = labels.iter().filter(|&&l| l == Label::Presence).count();
        println!("{hits}/{} replayed messages triggered a failure", labels.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Campaign(args) => {
            let out = run_campaign(&args.config()?)?;
            println!("{}", serde_json::to_string_pretty(&out.report.summary)?);
        }
        Command::Compare { args, modes } => {
            let base = args.config()?;
            let report = compare_modes(&base, &modes)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = &base.output_dir {
                fs::write(dir.join("comparison.json"), format!("{text}\n"))?;
            }
            println!("{text}");
        }
        Command::Replay(args) => replay(&args)?,
        Command::Schemas {
            command: SchemaCommand::Validate { file },
        } => {
            let registry = match file {
                Some(p) => load_schemas(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => SchemaRegistry::shipped(),
            };
            for s in registry.iter() {
                println!("{}: type {} {} bytes {} fields", s.type_name, s.header_type_code, s.total_bytes(), s.field_count());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
