use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use embprop::diagnostics::{batch_projections, interpolation_curve, sample_pairs, two_moons};
use embprop::episodes::{episode_rng, evaluate, sample_episode, threads_from_env};
use embprop::io::{load_embeddings, save_embeddings, write_report, EmbeddingFormat};
use embprop::propagation::propagate_embeddings;
use embprop::{Classifier, Error, EvalConfig, GraphConfig, PropagationMode, Split, SslMode};

const USAGE_EXIT: u8 = 1;
const DATA_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "embprop", version, about = "Embedding propagation for few-shot classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Episodic evaluation; writes a JSON report.
    Evaluate(EvaluateArgs),
    /// Semi-supervised evaluation with pseudo-labels.
    Ssl(SslArgs),
    /// Propagates a whole embedding file as one batch.
    Propagate(PropagateArgs),
    /// Generates the two-moons set.
    Moons(MoonsArgs),
    /// Interpolation probability curves on one episode; writes CSV.
    Interp(InterpArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "auto")]
    format: EmbeddingFormat,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 5)]
    n_way: usize,
    #[arg(long, default_value_t = 1)]
    k_shot: usize,
    #[arg(long, default_value_t = 15)]
    q_queries: usize,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = embprop::DEFAULT_ALPHA)]
    alpha: f64,
    /// α of the label-propagation graph (defaults to --alpha).
    #[arg(long)]
    lp_alpha: Option<f64>,
    #[arg(long, default_value = "full")]
    mode: PropagationMode,
    #[arg(long, default_value = "lp")]
    classifier: Classifier,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Only sample rows tagged with this split.
    #[arg(long)]
    split: Option<Split>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SslArgs {
    #[command(flatten)]
    eval: EvaluateArgs,
    #[arg(long, default_value_t = 0)]
    unlabeled: usize,
    #[arg(long, default_value_t = 1.0)]
    labeled_fraction: f64,
}

#[derive(Args)]
struct PropagateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = embprop::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value = "full")]
    mode: PropagationMode,
    /// Output file; `.epb`/`.bin` writes binary, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MoonsArgs {
    /// Points per moon.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-(point, batch) propagated projections as CSV.
    #[arg(long)]
    projections: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, default_value_t = embprop::DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Args)]
struct InterpArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2)]
    n_way: usize,
    #[arg(long, default_value_t = 1)]
    k_shot: usize,
    #[arg(long, default_value_t = 15)]
    q_queries: usize,
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    #[arg(long, default_value_t = 21)]
    grid: usize,
    #[arg(long, default_value_t = embprop::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value = "full")]
    mode: PropagationMode,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    split: Option<Split>,
    #[arg(long)]
    out: PathBuf,
}

impl EvaluateArgs {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            n_way: self.n_way,
            k_shot: self.k_shot,
            q_queries: self.q_queries,
            episodes: self.episodes,
            graph: GraphConfig::with_alpha(self.alpha),
            lp_alpha: self.lp_alpha,
            mode: self.mode,
            classifier: self.classifier,
            seed: self.seed,
            split: self.split,
            ..EvalConfig::default()
        }
    }
}

fn run_evaluate(args: &EvaluateArgs, cfg: &EvalConfig) -> Result<(), Error> {
    // surface a bad EP_THREADS before loading anything
    threads_from_env()?;
    cfg.validate()?;
    let data = load_embeddings(&args.data.data, args.data.format)?;
    let report = evaluate(&data, cfg)?;
    write_report(&report, &args.out)?;
    println!(
        "{} episodes: mean {:.4} ± {:.4}",
        report.episodes, report.mean, report.ci95
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Evaluate(args) => run_evaluate(&args, &args.config()),
        Command::Ssl(args) => {
            let cfg = EvalConfig {
                u_unlabeled: args.unlabeled,
                labeled_fraction: args.labeled_fraction,
                ssl: SslMode::PseudoLabel,
                ..args.eval.config()
            };
            run_evaluate(&args.eval, &cfg)
        }
        Command::Propagate(args) => {
            let cfg = GraphConfig::with_alpha(args.alpha);
            cfg.validate()?;
            let data = load_embeddings(&args.data.data, args.data.format)?;
            let (zt, _) = propagate_embeddings(data.embeddings(), &cfg, args.mode)?;
            save_embeddings(&data.with_embeddings(zt)?, &args.out, EmbeddingFormat::Auto)
        }
        Command::Moons(args) => {
            let set = two_moons(args.n, args.noise, args.seed)?;
            save_embeddings(&set, &args.out, EmbeddingFormat::Auto)?;
            if let Some(path) = &args.projections {
                let cfg = EvalConfig {
                    graph: GraphConfig::with_alpha(args.alpha),
                    ..EvalConfig::default()
                };
                cfg.graph.validate()?;
                let rows = batch_projections(&set, args.batch_size, args.batches, &cfg, args.seed)?;
                let mut out = String::from("point,batch,label,x,y,px,py\n");
                for r in rows {
                    out.push_str(&format!(
                        "{},{},{},{:?},{:?},{:?},{:?}\n",
                        r.point,
                        r.batch,
                        set.labels()[r.point],
                        r.original[0],
                        r.original[1],
                        r.propagated[0],
                        r.propagated[1]
                    ));
                }
                fs::write(path, out)?;
            }
            Ok(())
        }
        Command::Interp(args) => {
            let cfg = EvalConfig {
                n_way: args.n_way,
                k_shot: args.k_shot,
                q_queries: args.q_queries,
                episodes: 1,
                graph: GraphConfig::with_alpha(args.alpha),
                mode: args.mode,
                seed: args.seed,
                split: args.split,
                ..EvalConfig::default()
            };
            cfg.validate()?;
            let data = load_embeddings(&args.data.data, args.data.format)?;
            let ep = sample_episode(&data, &cfg, 0)?;
            // pairs use a stream distinct from episode sampling
            let mut rng = episode_rng(args.seed, usize::MAX);
            let pairs = sample_pairs(&ep, args.pairs, &mut rng)?;
            let mut w = std::io::BufWriter::new(fs::File::create(&args.out)?);
            writeln!(w, "pair,i,j,weight,probability,max_jump")?;
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let curve = interpolation_curve(&data, &ep, i, j, args.grid, &cfg)?;
                for (wt, prob) in curve.weights.iter().zip(&curve.probabilities) {
                    writeln!(w, "{p},{i},{j},{wt:?},{prob:?},{:?}", curve.max_jump)?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => ExitCode::from(USAGE_EXIT),
                _ => ExitCode::from(DATA_EXIT),
            }
        }
    }
}
