use std::path::PathBuf;
use std::process::ExitCode;

use cellfree::campaign::{run_campaign, run_macro_diversity, CampaignSpec};
use cellfree::pilots::PilotStrategy;
use cellfree::power::Policy;
use cellfree::scenario::ScenarioConfig;
use cellfree::{stripe, sync};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free Massive MIMO simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo DL campaign over UE drops.
    Run(RunArgs),
    /// Cell-free vs cellular channel gain and orthogonality on a 50x50 AP lattice.
    Fig3 {
        #[arg(long)]
        isd: f64,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clock-bias calibration.
    Sync {
        #[command(subcommand)]
        command: SyncCommand,
    },
    /// Radio-stripe pipeline.
    Stripe {
        #[command(subcommand)]
        command: StripeCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Shipped preset: indoor or piazza.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated policies (cdfpt, mmf, mmf-rpb, mmf-cqb).
    #[arg(long, value_delimiter = ',', default_value = "cdfpt,mmf,mmf-rpb,mmf-cqb")]
    power_control: Vec<Policy>,
    #[arg(long, default_value = "orthogonal")]
    pilots: PilotStrategy,
    #[arg(long, default_value_t = 95.0)]
    alpha: f64,
    /// Defaults to 50 when a max-min policy is requested, 200 otherwise.
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Zero coefficients outside the selected subsets without re-solving.
    #[arg(long)]
    no_reoptimize: bool,
}

#[derive(Subcommand)]
enum SyncCommand {
    Demo {
        #[arg(long, default_value_t = 10)]
        groups: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma_ns: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum StripeCommand {
    Verify {
        #[arg(long, default_value_t = 50)]
        aps: usize,
        #[arg(long, default_value_t = 8)]
        streams: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> cellfree::Result<()> {
    match cli.command {
        Command::Run(args) => campaign(args),
        Command::Fig3 { isd, draws, seed, out } => {
            let s = run_macro_diversity(isd, draws, seed, out.as_deref())?;
            println!("percentile  cellfree_db  cellular_db  gap_db");
            for (p, cf, cl, gap) in &s.gains {
                println!("{p:>10}  {cf:>11.2}  {cl:>11.2}  {gap:>6.2}");
            }
            println!("median orthogonality {:.3e}", s.median_orthogonality);
            Ok(())
        }
        Command::Sync { command: SyncCommand::Demo { groups, sigma_ns, seed } } => {
            println!("group,ap,true_offset,recovered_offset,error");
            for r in sync::sync_demo(groups, sigma_ns, seed)? {
                println!("{},{},{:e},{:e},{:e}", r.group, r.ap, r.true_offset, r.recovered_offset, r.error);
            }
            Ok(())
        }
        Command::Stripe { command: StripeCommand::Verify { aps, streams, frames, seed } } => {
            let residual = stripe::verify_against_centralized(aps, streams, frames, seed)?;
            println!("max relative residual {residual:.3e} over {frames} frames (L={aps}, K={streams})");
            Ok(())
        }
    }
}

fn campaign(args: RunArgs) -> cellfree::Result<()> {
    let (name, scenario) = match (&args.scenario, &args.config) {
        (_, Some(path)) => (path.display().to_string(), ScenarioConfig::from_json(&std::fs::read_to_string(path)?)?),
        (Some(name), None) => (name.clone(), ScenarioConfig::preset(name)?),
        (None, None) => ("indoor".to_string(), ScenarioConfig::preset("indoor")?),
    };
    let mut spec = CampaignSpec::new(&name, scenario, args.power_control);
    let needs_maxmin = spec.policies.iter().any(|p| p.uses_maxmin());
    spec.pilots = args.pilots;
    spec.alpha_pct = args.alpha;
    spec.drops = args.drops.unwrap_or(if needs_maxmin { 50 } else { 200 });
    spec.seed = args.seed;
    spec.reoptimize = !args.no_reoptimize;
    let report = run_campaign(&spec, args.out.as_deref(), Some(args.threads))?;
    println!("policy    likely95  median  subset_fraction");
    for p in &report.policies {
        let l95 = p.likely95.map_or("-".to_string(), |v| format!("{v:.3}"));
        let frac = p.avg_subset_fraction.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{:<8}  {l95:>8}  {:>6.3}  {frac:>15}", p.policy.name(), p.median);
    }
    println!("{} drops in {:.1} s", spec.drops, report.runtime_s);
    Ok(())
}
