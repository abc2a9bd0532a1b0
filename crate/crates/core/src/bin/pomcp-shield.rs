use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pomcp_shield::agent::InterventionCount;
use pomcp_shield::domains::DomainKind;
use pomcp_shield::experiment::{
    default_template, emit_table, evaluate, generate_trace, shield_config, ExperimentConfig,
};
use pomcp_shield::rulelang::{parse_template, Rule};
use pomcp_shield::rulelearn::{self, EnumerativeBackend, MaxSmtBackend, SmtLibBackend, TightenMode};
use pomcp_shield::shield::Shield;
use pomcp_shield::stats::{mean, std_dev};
use pomcp_shield::tracelog::{read_xes, write_xes};
use pomcp_shield::Error;

#[derive(Parser)]
#[command(name = "pomcp-shield", version, about = "POMCP with rule-based shields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the unshielded planner and write the trace as XES.
    Run(RunArgs),
    /// Learn rule thresholds from an XES trace.
    Learn(LearnArgs),
    /// Build a shield file from a learned rule.
    Mkshield(MkshieldArgs),
    /// Compare unshielded and shielded planning over a sweep of c.
    Eval(EvalArgs),
}

/// Settings shared by `run` and `eval`; each overrides the config file.
#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<DomainKind>,
    #[arg(long)]
    particles: Option<usize>,
    /// Simulations per search (defaults to the particle count).
    #[arg(long)]
    simulations: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Velocity Regulation map (JSON).
    #[arg(long)]
    map: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.config, self.domain) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, d) => ExperimentConfig::for_domain(d.unwrap_or(DomainKind::Tiger)),
        };
        if let Some(d) = self.domain {
            if d != cfg.domain {
                let keep = cfg.clone();
                cfg = ExperimentConfig {
                    domain: d,
                    ..ExperimentConfig::for_domain(d)
                };
                cfg.seed = keep.seed;
            }
        }
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            };
        }
        set!(particles);
        set!(runs);
        set!(gamma);
        set!(seed);
        if self.simulations.is_some() {
            cfg.simulations = self.simulations;
        }
        if self.max_steps.is_some() {
            cfg.max_steps = self.max_steps;
        }
        if self.map.is_some() {
            cfg.map = self.map.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Exploration constant (defaults to the first configured c).
    #[arg(long)]
    c: Option<f64>,
    /// Also log raw particles as state codes.
    #[arg(long)]
    log_particles: bool,
    /// Destination XES file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Enumerative,
    Smtlib,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Rule template (defaults to the domain's built-in template).
    #[arg(long)]
    template: Option<PathBuf>,
    /// Domain of the trace (read from the trace when omitted).
    #[arg(long)]
    domain: Option<DomainKind>,
    #[arg(long, value_enum, default_value = "enumerative")]
    backend: Backend,
    /// Solver executable for the smtlib backend.
    #[arg(long, default_value = "z3")]
    solver: String,
    #[arg(long, default_value_t = 300)]
    timeout_secs: u64,
    /// Move thresholds towards the permissive end instead.
    #[arg(long)]
    permissive: bool,
    /// Destination rule file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MkshieldArgs {
    #[arg(long)]
    rule: PathBuf,
    #[arg(long, default_value = "tiger")]
    domain: DomainKind,
    #[arg(long, default_value_t = 0.10)]
    tau: f64,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long)]
    safe_action: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Exploration constants to sweep.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    #[arg(long)]
    template: Option<PathBuf>,
    /// Use this shield for every c instead of learning one per trace.
    #[arg(long)]
    shield: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    safe_action: Option<String>,
    /// Count every pruning step as an intervention.
    #[arg(long)]
    proxy_interventions: bool,
    #[arg(long)]
    permissive: bool,
    /// Destination CSV file; the text table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = args.common.config()?;
    cfg.log_particles = args.log_particles;
    let c = args
        .c
        .or_else(|| cfg.c_values.first().copied())
        .ok_or_else(|| Error::Config("no c given".into()))?;
    let (trace, batch) = generate_trace(&cfg, c)?;
    let file = fs::File::create(&args.out)?;
    write_xes(&trace, std::io::BufWriter::new(file))?;
    let returns = batch.returns();
    eprintln!(
        "{} runs, {} steps, mean return {:.3} (± {:.3}), {} failed; trace written to {}",
        batch.runs.len(),
        batch.total_steps(),
        mean(&returns),
        std_dev(&returns),
        batch.failures(),
        args.out.display()
    );
    Ok(())
}

fn learn(args: LearnArgs) -> Result<(), Error> {
    let trace = read_xes(fs::File::open(&args.trace)?)?;
    let domain = match args.domain {
        Some(d) => d,
        None => trace.meta.domain.parse().map_err(Error::Config)?,
    };
    let text = match &args.template {
        Some(p) => fs::read_to_string(p)?,
        None => default_template(domain).to_string(),
    };
    let template = parse_template(&text, &domain.vocabulary())?;
    let backend: Box<dyn MaxSmtBackend> = match args.backend {
        Backend::Enumerative => Box::new(EnumerativeBackend),
        Backend::Smtlib => Box::new(SmtLibBackend {
            program: args.solver.clone(),
            timeout: Duration::from_secs(args.timeout_secs),
            ..SmtLibBackend::default()
        }),
    };
    let mode = if args.permissive {
        TightenMode::Permissive
    } else {
        TightenMode::Restrictive
    };
    let learned = rulelearn::learn(&trace, &template, backend.as_ref(), mode)?;
    eprintln!(
        "{} of {} clauses unexplained",
        learned.objective_value,
        trace.num_steps() * template.rules.len()
    );
    let mut out = learned.rule.to_string();
    if !out.ends_with('\n') {
        out.push('\n');
    }
    write_or_print(args.out.as_deref(), &out)
}

fn mkshield(args: MkshieldArgs) -> Result<(), Error> {
    let rule = Rule::parse(&fs::read_to_string(&args.rule)?, &args.domain.vocabulary())?;
    let cfg = ExperimentConfig {
        tau: args.tau,
        representatives: args.reps,
        seed: args.seed,
        safe_action: args.safe_action.clone(),
        ..ExperimentConfig::for_domain(args.domain)
    };
    let shield = Shield::build(args.domain, rule, &shield_config(&cfg)?)?;
    shield.save(&args.out)?;
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let mut cfg = args.common.config()?;
    if let Some(c) = args.c {
        cfg.c_values = c;
    }
    if args.template.is_some() {
        cfg.template = args.template;
    }
    if args.shield.is_some() {
        cfg.shield = args.shield;
    }
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    if let Some(d) = args.reps {
        cfg.representatives = d;
    }
    if args.safe_action.is_some() {
        cfg.safe_action = args.safe_action;
    }
    if args.proxy_interventions {
        cfg.intervention_count = InterventionCount::Pruned;
    }
    cfg.permissive |= args.permissive;
    cfg.validate()?;

    let rows = evaluate(&cfg)?;
    let (text, csv) = emit_table(&rows);
    print!("{text}");
    for r in &rows {
        if let Some(rule) = &r.rule {
            println!("\nc = {}:\n{}", r.c, rule.trim_end());
        }
    }
    match &args.out {
        Some(p) => fs::write(p, csv)?,
        None => print!("\n{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Learn(a) => learn(a),
        Command::Mkshield(a) => mkshield(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
