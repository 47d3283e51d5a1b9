use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rwkv_asr::encoder::Mode;
use rwkv_asr::frontend::load_input;
use rwkv_asr::runtime::{
    compute_latency, decode_features, load_checkpoint, report_left_context, save_checkpoint, train_synthetic,
    DecodeSession, EncoderKind, LossKind, Model, RunConfig,
};
use rwkv_asr::verify::{run_suite, Suite};
use rwkv_asr::Tensor;

#[derive(Parser)]
#[command(name = "rwkv-asr", version, about = "Streaming RWKV transducer speech recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Full,
    Bat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Parallel,
    Stream,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Equivalence,
    Gradients,
    Oracle,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the synthetic task and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Decode a WAV or FEAT file and print the label sequence.
    Decode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "parallel")]
        mode: ModeArg,
    },
    /// Decode frame by frame, printing each label as soon as it is final.
    Stream {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the built-in property checks; exits non-zero if any fails.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time streaming steps and report state size, latency and left context.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 1000)]
        frames: usize,
    },
}

fn load_model(path: &Path) -> Result<Model<f32>> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_features(path: &Path) -> Result<Tensor<f32>> {
    Ok(load_input(path)
        .with_context(|| format!("reading input {}", path.display()))?
        .frames)
}

fn join(tokens: &[usize]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

fn train(config: PathBuf, out: PathBuf, seed: u64, loss: Option<LossArg>, epochs: Option<usize>) -> Result<()> {
    let mut run = RunConfig::load(&config).with_context(|| format!("reading config {}", config.display()))?;
    if let Some(l) = loss {
        run.train.loss = match l {
            LossArg::Full => LossKind::Full,
            LossArg::Bat => LossKind::Bat,
        };
    }
    if let Some(e) = epochs {
        run.train.epochs = e;
    }
    let (model, report) = train_synthetic::<f32>(&run, seed, |e| {
        println!(
            "epoch {} train_nll {:.4} held_out_nll {:.4} accuracy {:.4} joint_evals {} full_joint_evals {} seconds {:.1}",
            e.epoch, e.train_nll, e.held_out_nll, e.held_out_accuracy, e.joint_evals, e.full_joint_evals, e.seconds
        );
    })?;
    println!("initial held_out_nll {:.4}", report.initial_held_out_nll);
    save_checkpoint(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    println!("saved {}", out.display());
    Ok(())
}

fn stream(ckpt: PathBuf, input: PathBuf) -> Result<()> {
    let model = load_model(&ckpt)?;
    let feats = load_features(&input)?;
    let mut session = DecodeSession::new(&model)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for t in 0..feats.rows() {
        for tok in session.feed_frame(feats.row(t))? {
            writeln!(lock, "{tok}")?;
            lock.flush()?;
        }
    }
    for tok in session.finish() {
        writeln!(lock, "{tok}")?;
    }
    Ok(())
}

fn bench(ckpt: PathBuf, frames: usize) -> Result<()> {
    if frames == 0 {
        bail!("--frames must be positive");
    }
    let model = load_model(&ckpt)?;
    let dim = model.config.feat_dim;
    let mut session = DecodeSession::new(&model)?;
    let frame = |i: usize| -> Vec<f32> { (0..dim).map(|j| ((i * 31 + j * 7) as f32 * 0.013).sin()).collect() };
    let start = Instant::now();
    for i in 0..frames {
        session.feed_frame(&frame(i))?;
    }
    let per_frame_us = start.elapsed().as_secs_f64() * 1e6 / frames as f64;
    println!("frames {frames}");
    println!("state_bytes {}", session.state_bytes());
    println!("step_us_per_frame {per_frame_us:.2}");
    println!("latency_ms {}", compute_latency(EncoderKind::Rwkv, 0, 4, 10)?);
    println!("left_context {}", report_left_context(EncoderKind::Rwkv));
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            loss,
            epochs,
        } => train(config, out, seed, loss, epochs)?,
        Command::Decode { ckpt, input, mode } => {
            let model = load_model(&ckpt)?;
            let feats = load_features(&input)?;
            let mode = match mode {
                ModeArg::Parallel => Mode::Parallel,
                ModeArg::Stream => Mode::Recurrent,
            };
            println!("{}", join(&decode_features(&model, &feats, mode)?));
        }
        Command::Stream { ckpt, input } => stream(ckpt, input)?,
        Command::Verify { suite, seed } => {
            let suite = match suite {
                SuiteArg::Equivalence => Suite::Equivalence,
                SuiteArg::Gradients => Suite::Gradients,
                SuiteArg::Oracle => Suite::Oracle,
                SuiteArg::All => Suite::All,
            };
            let checks = run_suite(suite, seed)?;
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench { ckpt, frames } => bench(ckpt, frames)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
