use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use rmux::delay_network::DelayNetwork;
use rmux::experiments::{
    default_config_text, parse_assignment, read_config, render_summary, run_experiment, Experiment, ExperimentConfig,
};
use rmux::matching::{matching_metrics, write_matching_csv};
use rmux::mux_analytics::{ghz_report, unused_potential, SearchGrid, GHZ_GATE_PROB, GHZ_PHOTONS};
use rmux::mux_sim::{simulate_bell, BudgetPolicy, Scheme, Strategy};
use rmux::percolation::{
    loss_threshold, percolation_probability, AncillaLoss, DiamondLattice, OutcomeSemantics, ThresholdMethod,
    ThresholdParams,
};
use rmux::rng::derive_seed;
use rmux::streams::PhotonStream;

#[derive(Parser)]
#[command(name = "rmux", version, about = "Relative multiplexing simulations and figure reproduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clocked multiplexing resources for one 3-GHZ state.
    Analytics(AnalyticsArgs),
    /// Match two photon streams and print the matching as CSV.
    Match(MatchArgs),
    /// Bell states per bin for both schemes at one switch budget.
    Bell(BellArgs),
    /// Spanning probability or loss threshold of the diamond lattice.
    Percolate(PercolateArgs),
    /// Run a reproduction recipe; exits nonzero when a reference check fails.
    Reproduce(ReproduceArgs),
    /// Print the default config file of a recipe.
    Config { experiment: String },
}

#[derive(Args)]
struct AnalyticsArgs {
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0.99)]
    p1: f64,
    #[arg(long, default_value_t = 0.99)]
    p2: f64,
    /// Also search the cheapest (p1, p2) reaching this GHZ probability.
    #[arg(long)]
    target: Option<f64>,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 4)]
    switches: u32,
    #[arg(long, default_value_t = 1000)]
    bins: usize,
    #[arg(long, default_value = "hungarian_with_clash")]
    strategy: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Stream files in the text format written by `--save-streams`.
    #[arg(long, requires = "stream2")]
    stream1: Option<PathBuf>,
    #[arg(long, requires = "stream1")]
    stream2: Option<PathBuf>,
    /// Directory to save the two generated streams to.
    #[arg(long)]
    save_streams: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BellArgs {
    #[arg(long, default_value_t = 0.1)]
    p1: f64,
    #[arg(long, default_value_t = 22)]
    budget: u32,
    #[arg(long, default_value_t = 10_000)]
    bins: usize,
    /// Repetitions.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// `exact` or `at_most`.
    #[arg(long, default_value = "exact")]
    policy: String,
}

#[derive(Args)]
struct PercolateArgs {
    #[arg(long, default_value = "rmux")]
    scheme: String,
    #[arg(long, default_value_t = 10)]
    l: usize,
    #[arg(long, default_value_t = 0.05)]
    p_l: f64,
    /// Ancilla loss rate, or `p_l` to tie it to the photon loss.
    #[arg(long, default_value = "0")]
    a_l: String,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// `default` or `calibrated`.
    #[arg(long, default_value = "calibrated")]
    semantics: String,
    /// Search the loss threshold for this spanning probability instead.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0.002)]
    tolerance: f64,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Recipe name, or `all`.
    figure: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Repetitions or trials per probe, depending on the recipe.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Parameter override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Flat key=value config file; `--set` takes precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn analytics(a: &AnalyticsArgs) -> anyhow::Result<()> {
    let r = ghz_report(a.eta, a.p1, a.p2, GHZ_PHOTONS, GHZ_GATE_PROB)?;
    println!("stage,input_prob,target_prob,k,k_up,depth,potential_mean");
    for (name, st) in ["photon", "ghz"].iter().zip(&r.stages) {
        println!("{name},{},{},{},{},{},{}", st.input_prob, st.target_prob, st.k, st.k_up, st.depth, st.potential_mean);
    }
    println!("combined_prob={:.6}", r.combined_prob);
    println!("combined_depth={}", r.combined_depth);
    println!("total_bins={}", r.total_bins);
    println!("potential_photons={:.1}", r.potential_photons_mean);
    println!("potential_ghz={:.1}", r.potential_ghz_mean);
    if let Some(target) = a.target {
        let u = unused_potential(a.eta, target, &SearchGrid::default())?;
        println!(
            "cheapest for p_s={target}: p1={} p2={} wasted_ghz={:.2} total_bins={}",
            u.p1,
            u.p2,
            u.wasted_ghz_mean,
            u.total_bins()
        );
    }
    Ok(())
}

fn read_stream(path: &PathBuf) -> anyhow::Result<PhotonStream> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.parse()?)
}

fn run_match(a: &MatchArgs) -> anyhow::Result<()> {
    let strategy: Strategy = a.strategy.parse()?;
    let (s1, s2) = match (&a.stream1, &a.stream2) {
        (Some(p1), Some(p2)) => (read_stream(p1)?, read_stream(p2)?),
        _ => (
            PhotonStream::generate(a.p, a.bins, derive_seed(a.seed, &[0, 0]))?,
            PhotonStream::generate(a.p, a.bins, derive_seed(a.seed, &[0, 1]))?,
        ),
    };
    if let Some(dir) = &a.save_streams {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("stream1.txt"), s1.to_string())?;
        fs::write(dir.join("stream2.txt"), s2.to_string())?;
    }
    let net = DelayNetwork::new(a.switches)?;
    let m = rmux::mux_sim::match_streams(strategy, &s1, &s2, &net)?;
    match &a.out {
        Some(path) => write_matching_csv(fs::File::create(path)?, &m)?,
        None => write_matching_csv(io::stdout().lock(), &m)?,
    }
    let metrics = matching_metrics(&m, &s1, &s2);
    eprintln!(
        "pairs={} matched_fraction={:.4} clash_rate={:.4} out_of_range={:.4} mean_delay={:.3}",
        m.len(),
        metrics.matched_fraction,
        metrics.clash_rate,
        metrics.out_of_range_fraction,
        metrics.mean_delay
    );
    Ok(())
}

fn bell(a: &BellArgs) -> anyhow::Result<()> {
    let policy: BudgetPolicy = a.policy.parse()?;
    println!("scheme,s_total,bells_per_bin,stderr,first_stage,second_stage");
    for scheme in [Scheme::Standard, Scheme::Rmux] {
        let st = simulate_bell(scheme, a.p1, a.budget, a.bins, a.trials, a.seed, policy)?;
        let (f, s) = st.split.map_or((String::new(), String::new()), |x| (x.first.to_string(), x.second.to_string()));
        println!("{scheme},{},{},{},{f},{s}", a.budget, st.bells_per_bin.mean, st.bells_per_bin.stderr);
    }
    Ok(())
}

fn percolate(a: &PercolateArgs) -> anyhow::Result<()> {
    let scheme: Scheme = a.scheme.parse()?;
    let semantics = OutcomeSemantics::named(&a.semantics)?;
    let ancilla = if a.a_l == "p_l" {
        AncillaLoss::EqualToPhoton
    } else {
        AncillaLoss::Fixed(a.a_l.parse().context("--a-l must be a number or `p_l`")?)
    };
    match a.threshold {
        Some(target) => {
            let params = ThresholdParams {
                scheme,
                target,
                ancilla,
                l: a.l,
                trials: a.trials,
                tolerance: a.tolerance,
                semantics,
                seed: a.seed,
                method: ThresholdMethod::Bisection,
            };
            let r = loss_threshold(&params)?;
            println!("p_l_threshold={:.4} bracket=[{:.4}, {:.4}] probes={}", r.p_star, r.lo, r.hi, r.probes.len());
        }
        None => {
            let lattice = DiamondLattice::new(a.l)?;
            let e = percolation_probability(&lattice, scheme, a.p_l, ancilla, &semantics, a.trials, a.seed)?;
            println!("perc_prob={:.4} stderr={:.4}", e.mean, e.stderr);
        }
    }
    Ok(())
}

fn reproduce(a: &ReproduceArgs) -> anyhow::Result<bool> {
    let experiments: Vec<Experiment> =
        if a.figure == "all" { Experiment::ALL.to_vec() } else { vec![a.figure.parse()?] };
    let mut base = match &a.config {
        Some(path) => read_config(path)?,
        None => Default::default(),
    };
    for s in &a.set {
        let (k, v) = parse_assignment(s)?;
        base.insert(k, v);
    }
    let mut all_passed = true;
    for experiment in experiments {
        let mut params = base.clone();
        if a.figure == "all" {
            // Shared overrides only apply where the recipe knows the key.
            let known = rmux::experiments::known_keys(experiment);
            params.retain(|k, _| known.contains(k.as_str()));
        }
        if let (Some(t), Some(key)) = (a.trials, experiment.trials_key()) {
            params.insert(key.to_string(), t.to_string());
        }
        let config = ExperimentConfig { experiment, params, seed: a.seed, output_dir: a.out.clone() };
        let report = run_experiment(&config)?;
        print!("{}", render_summary(&report));
        io::stdout().flush()?;
        all_passed &= report.passed();
    }
    Ok(all_passed)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Analytics(a) => analytics(&a)?,
        Command::Match(a) => run_match(&a)?,
        Command::Bell(a) => bell(&a)?,
        Command::Percolate(a) => percolate(&a)?,
        Command::Reproduce(a) => return reproduce(&a),
        Command::Config { experiment } => {
            let e: Experiment = experiment.parse()?;
            print!("{}", default_config_text(e));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one reference check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
