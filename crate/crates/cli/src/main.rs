use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use copaint_cli::{run, CliError, Settings};

/// Diffusion inpainting by posterior optimization, at desk scale.
///
/// Settings come from `--config` (flat `key = value` lines, keys named like
/// the flags with `_` for `-`) and are overridden by flags. Every run writes
/// `manifest.txt`; passing it back as `--config` reproduces the run bitwise.
///
/// Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
#[derive(Parser)]
#[command(name = "copaint", version)]
struct Cli {
    /// Settings file; a previous run's manifest.txt works too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream of the run [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Do not print the summary.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an epsilon-prediction MLP on a toy dataset.
    ///
    /// Writes the checkpoint, losses.csv (epoch,loss) and manifest.txt, and
    /// prints the held-out loss next to that of the all-zero model.
    TrainToy(TrainArgs),
    /// Inpaint one vector (`vec N` file) or PGM image.
    ///
    /// Writes output.vec or output.pgm, record.csv
    /// (visit_index,t,loss_pre,loss_post,residual; one row per visit, losses
    /// empty for baselines), metrics.csv
    /// (method,constraint_mean_abs,constraint_max_abs,coherence_error;
    /// coherence only for even-length vectors) and manifest.txt.
    Inpaint(InpaintArgs),
    /// Compare methods on paired seeds over one or more masks.
    ///
    /// Writes runs.csv
    /// (method,mask,seed_index,constraint_mean_abs,constraint_max_abs,coherence_error),
    /// summary.csv (method,mask,runs and the median of each metric),
    /// wins.csv (mask,method_a,method_b,metric,win_rate; ties count 1/2)
    /// and manifest.txt.
    Compare(CompareArgs),
    /// Average one-step gap between f(X_t) and the final sample along
    /// unconditional trajectories.
    ///
    /// Writes gap.csv (t,gap; t from T down to 1), a gap.pgm line plot and
    /// manifest.txt.
    GapPlot(GapArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// mirror, gaussian-sample or image-dir [default: mirror].
    #[arg(long)]
    dataset: Option<String>,
    /// Gaussian spec (file or mirror:N:rho) or image directory.
    #[arg(long)]
    data: Option<String>,
    /// Vector length for mirror data [default: 16].
    #[arg(long)]
    dim: Option<usize>,
    /// Number of training vectors [default: 4096].
    #[arg(long)]
    samples: Option<usize>,
    /// [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated hidden widths [default: 64,64].
    #[arg(long)]
    hidden: Option<String>,
    /// Time-embedding width [default: 16].
    #[arg(long)]
    embed_dim: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam step size [default: 0.003].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Checkpoint file name inside the output directory [default: model.cpmlp].
    #[arg(long)]
    output: Option<String>,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Length of the training schedule [default: the model's].
    #[arg(long)]
    train_steps: Option<usize>,
    /// [default: 0.0001]
    #[arg(long)]
    beta_start: Option<f64>,
    /// [default: 0.02]
    #[arg(long)]
    beta_end: Option<f64>,
}

#[derive(Args)]
struct SamplerArgs {
    /// Reverse steps T [default: per method].
    #[arg(long)]
    steps: Option<usize>,
    /// Gradient steps per visit G.
    #[arg(long)]
    grad_steps: Option<usize>,
    /// Base step size; the step at t is this times sqrt(alpha_bar_t).
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Constraint variance at t is xi_decay^-(T-t).
    #[arg(long)]
    xi_decay: Option<f64>,
    /// Time-travel interval.
    #[arg(long)]
    tau: Option<usize>,
    /// Rewinds per window; 0 disables time travel.
    #[arg(long)]
    travel_count: Option<usize>,
    /// Substeps for the estimate of X_0.
    #[arg(long)]
    substeps: Option<usize>,
    /// DDIM variance knob.
    #[arg(long)]
    sigma_eta: Option<f64>,
    /// auto, true or false.
    #[arg(long)]
    final_projection: Option<String>,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args)]
struct InpaintArgs {
    /// Checkpoint path, gaussian:<spec file> or gaussian:mirror:<N>:<rho>.
    #[arg(long)]
    model: Option<String>,
    /// copaint, copaint-tt, copaint-fast, blended, ddnm or repaint-lite [default: copaint-tt].
    #[arg(long)]
    method: Option<String>,
    /// Mask name (expand, half, altern, sr, narrow, wide, text, none, full),
    /// pool:<factor>, or a mask file.
    #[arg(long)]
    mask: Option<String>,
    /// Reference to inpaint: a `vec N` file or a P5 PGM.
    #[arg(long)]
    input: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Checkpoint path, gaussian:<spec file> or gaussian:mirror:<N>:<rho>.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated methods.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated masks [default: half].
    #[arg(long)]
    masks: Option<String>,
    /// Number of paired seeds [default: 32].
    #[arg(long)]
    seeds: Option<usize>,
    /// world (samples of a Gaussian model) or mirror (mirror training data).
    #[arg(long)]
    reference: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct GapArgs {
    /// Checkpoint path, gaussian:<spec file> or gaussian:mirror:<N>:<rho>.
    #[arg(long)]
    model: Option<String>,
    /// Number of trajectories [default: 32].
    #[arg(long)]
    runs: Option<usize>,
    /// Reverse steps T [default: 250].
    #[arg(long)]
    steps: Option<usize>,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

impl ScheduleArgs {
    fn apply(&self, s: &mut Settings) {
        s.set_opt("train_steps", self.train_steps);
        s.set_opt("beta_start", self.beta_start);
        s.set_opt("beta_end", self.beta_end);
    }
}

impl SamplerArgs {
    fn apply(&self, s: &mut Settings) {
        s.set_opt("steps", self.steps);
        s.set_opt("grad_steps", self.grad_steps);
        s.set_opt("learning_rate", self.learning_rate);
        s.set_opt("xi_decay", self.xi_decay);
        s.set_opt("tau", self.tau);
        s.set_opt("travel_count", self.travel_count);
        s.set_opt("substeps", self.substeps);
        s.set_opt("sigma_eta", self.sigma_eta);
        s.set_opt("final_projection", self.final_projection.as_ref());
        self.schedule.apply(s);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainToy(_) => "train-toy",
            Command::Inpaint(_) => "inpaint",
            Command::Compare(_) => "compare",
            Command::GapPlot(_) => "gap-plot",
        }
    }

    fn apply(&self, s: &mut Settings) {
        match self {
            Command::TrainToy(a) => {
                s.set_opt("dataset", a.dataset.as_ref());
                s.set_opt("data", a.data.as_ref());
                s.set_opt("dim", a.dim);
                s.set_opt("samples", a.samples);
                s.set_opt("epochs", a.epochs);
                s.set_opt("hidden", a.hidden.as_ref());
                s.set_opt("embed_dim", a.embed_dim);
                s.set_opt("batch_size", a.batch_size);
                s.set_opt("learning_rate", a.learning_rate);
                s.set_opt("output", a.output.as_ref());
                a.schedule.apply(s);
            }
            Command::Inpaint(a) => {
                s.set_opt("model", a.model.as_ref());
                s.set_opt("method", a.method.as_ref());
                s.set_opt("mask", a.mask.as_ref());
                s.set_opt("input", a.input.as_ref());
                a.sampler.apply(s);
            }
            Command::Compare(a) => {
                s.set_opt("model", a.model.as_ref());
                s.set_opt("methods", a.methods.as_ref());
                s.set_opt("masks", a.masks.as_ref());
                s.set_opt("seeds", a.seeds);
                s.set_opt("reference", a.reference.as_ref());
                a.sampler.apply(s);
            }
            Command::GapPlot(a) => {
                s.set_opt("model", a.model.as_ref());
                s.set_opt("runs", a.runs);
                s.set_opt("steps", a.steps);
                a.schedule.apply(s);
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::new(),
    };
    settings.set_opt("seed", cli.seed);
    cli.command.apply(&mut settings);
    run(cli.command.name(), &settings, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("copaint: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
