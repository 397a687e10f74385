//! Command-line front end: dataset synthesis, training, enhancement,
//! evaluation and derivation checks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
//! error, 3 verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use resnoise::corpus::{build_dataset, load_dataset, Manifest};
use resnoise::estimators::GainParams;
use resnoise::model::{load_checkpoint, save_checkpoint};
use resnoise::oracle::{run_suite, suite_failed, CheckStatus, SuiteConfig};
use resnoise::pipeline::{
    enhance, evaluate_dataset, run_sweep, run_training, supervision_set, write_loss_log,
    write_sweep_csv, write_verify_report, EnhanceMode, Oracle, RunConfig,
};
use resnoise::signal::{read_wav, write_wav, StftConfig};

const DATA_ENV: &str = "RESNOISE_DATA";

#[derive(Parser)]
#[command(name = "resnoise", version, about = "Speech enhancement with residual-noise control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a manifest.
    Synth {
        /// Manifest TOML; the built-in desk manifest when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory.
        #[arg(long, env = DATA_ENV)]
        out: PathBuf,
    },
    /// Train a mask estimator; writes checkpoint.bin and loss.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory; overrides `data_dir` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enhance one WAV file.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        /// Oracle clean signal (wiener and parametric modes).
        #[arg(long)]
        clean: Option<PathBuf>,
        /// Oracle noise signal (wiener and parametric modes).
        #[arg(long)]
        noise: Option<PathBuf>,
    },
    /// Score a dataset split, or run a generalized-loss sweep.
    Eval {
        #[arg(long, env = DATA_ENV)]
        data: PathBuf,
        /// CSV report path.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        mode: ModeArgs,
        /// Run config whose [sweep] grid is trained on its train split and
        /// scored on `--split`; `--mode` is ignored.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Run the numerical derivation checks and write a CSV report.
    Verify {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long, default_value_t = 2020)]
        seed: u64,
        /// Extra error exponents compared against the closed form.
        #[arg(long = "gamma", value_delimiter = ',', default_values_t = [1.5, 3.0])]
        gammas: Vec<f64>,
    },
}

#[derive(Args)]
struct ModeArgs {
    /// `wiener`, `parametric`, `identity` or `model:<checkpoint>`.
    #[arg(long, default_value = "wiener")]
    mode: String,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

/// Error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<resnoise::Error>() {
            Some(
                resnoise::Error::Config(_)
                | resnoise::Error::InvalidParameter(_)
                | resnoise::Error::SingularParameter(_),
            ) => 1,
            Some(_) => 2,
            None => 1,
        };
        Failure { code, error }
    }
}

impl From<resnoise::Error> for Failure {
    fn from(error: resnoise::Error) -> Self {
        anyhow::Error::new(error).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { manifest, out } => synth(manifest.as_deref(), &out),
        Command::Train { config, data, out } => train(&config, data, out),
        Command::Enhance {
            input,
            output,
            mode,
            clean,
            noise,
        } => enhance_file(&input, &output, &mode, clean.as_deref(), noise.as_deref()),
        Command::Eval {
            data,
            report,
            split,
            mode,
            sweep,
        } => match sweep {
            Some(config) => sweep_eval(&data, &report, &split, &config),
            None => eval(&data, &report, &split, &mode),
        },
        Command::Verify {
            report,
            samples,
            grid,
            seed,
            gammas,
        } => verify(&report, samples, grid, seed, gammas),
    }
}

fn synth(manifest: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let manifest = match manifest {
        Some(path) => Manifest::from_path(path)?,
        None => Manifest::desk_default(),
    };
    let count = build_dataset(&manifest, out)?;
    println!("wrote {count} utterances to {}", out.display());
    Ok(())
}

fn parse_mode(args: &ModeArgs) -> Result<EnhanceMode, Failure> {
    let mode = match args.mode.as_str() {
        "wiener" => EnhanceMode::Wiener { mu: args.mu },
        "parametric" => EnhanceMode::Parametric(GainParams::new(args.mu, args.gamma, args.alpha)?),
        "identity" => EnhanceMode::Identity,
        other => match other.strip_prefix("model:") {
            Some(path) => EnhanceMode::Model(Box::new(load_checkpoint(path)?)),
            None => {
                return Err(anyhow!(
                    "unknown mode `{other}` (expected wiener, parametric, identity or model:<checkpoint>)"
                )
                .into())
            }
        },
    };
    if let EnhanceMode::Wiener { mu } = mode {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(resnoise::Error::InvalidParameter(format!("mu must be >= 0, got {mu}")).into());
        }
    }
    Ok(mode)
}

fn data_dir(explicit: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, Failure> {
    explicit
        .or_else(|| config.data_dir.clone())
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .ok_or_else(|| anyhow!("no dataset directory: pass --data, set data_dir or {DATA_ENV}").into())
}

fn train(config_path: &Path, data: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), Failure> {
    let config = RunConfig::from_path(config_path)?;
    let data = data_dir(data, &config)?;
    let out = out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output_dir"))?;
    let utts = load_dataset(&data, Some(&config.train_split))?;
    let experiment = config.experiment(utts[0].noisy.sample_rate())?;
    let supervision = supervision_set(&utts, &experiment.stft)?;
    let (checkpoint, history) = run_training(&supervision, &experiment, |epoch, loss| {
        eprintln!("epoch {:>4}  loss {loss:.6}", epoch + 1);
    })?;
    std::fs::create_dir_all(&out).map_err(|e| Failure {
        code: 2,
        error: anyhow!("creating {}: {e}", out.display()),
    })?;
    save_checkpoint(out.join("checkpoint.bin"), &checkpoint)?;
    write_loss_log(out.join("loss.csv"), &history)?;
    println!("wrote {}", out.join("checkpoint.bin").display());
    Ok(())
}

fn enhance_file(
    input: &Path,
    output: &Path,
    mode: &ModeArgs,
    clean: Option<&Path>,
    noise: Option<&Path>,
) -> Result<(), Failure> {
    let mode = parse_mode(mode)?;
    let noisy = read_wav(input)?;
    let companions = match (clean, noise) {
        (Some(c), Some(n)) => Some((read_wav(c)?, read_wav(n)?)),
        _ if mode.needs_oracle() => {
            return Err(anyhow!("mode {} needs --clean and --noise", mode.label()).into());
        }
        _ => None,
    };
    let oracle = companions.as_ref().map(|(clean, noise)| Oracle { clean, noise });
    let fallback = StftConfig::for_sample_rate(noisy.sample_rate());
    let enhanced = enhance(&noisy, &mode, oracle, &fallback)?;
    write_wav(output, &enhanced.wave)?;
    Ok(())
}

fn eval(data: &Path, report: &Path, split: &str, mode: &ModeArgs) -> Result<(), Failure> {
    let mode = parse_mode(mode)?;
    let utts = load_dataset(data, Some(split))?;
    let fallback = StftConfig::for_sample_rate(utts[0].noisy.sample_rate());
    let result = evaluate_dataset(&utts, &mode, &fallback)?;
    result.write_csv(report)?;
    let mean = result.aggregate();
    println!(
        "{}: {} utterances, NA {:.2} dB, SA {:.2} dB, SDR {:.2} dB (input {:.2} dB), SI-SDR {:.2} dB",
        mode.label(),
        result.rows.len(),
        mean.na_db,
        mean.sa_db,
        mean.sdr_db,
        mean.input_sdr_db,
        mean.si_sdr_db
    );
    Ok(())
}

fn sweep_eval(data: &Path, report: &Path, split: &str, config_path: &Path) -> Result<(), Failure> {
    let config = RunConfig::from_path(config_path)?;
    let train_utts = load_dataset(data, Some(&config.train_split))?;
    let test_utts = load_dataset(data, Some(split))?;
    let base = config.experiment(train_utts[0].noisy.sample_rate())?;
    let supervision = supervision_set(&train_utts, &base.stft)?;
    let rows = run_sweep(&supervision, &test_utts, &base, &config.sweep_grid(), |row| {
        eprintln!(
            "gamma {} alpha {} mu {} beta0 {} dB: NA {:.2} dB, SA {:.2} dB, SDR {:.2} dB",
            row.gamma, row.alpha, row.mu, row.beta0_db, row.na_db, row.sa_db, row.sdr_db
        );
    })?;
    write_sweep_csv(report, &rows)?;
    Ok(())
}

fn verify(report: &Path, samples: usize, grid: usize, seed: u64, gammas: Vec<f64>) -> Result<(), Failure> {
    if samples == 0 || grid < 100 {
        return Err(anyhow!("--samples must be positive and --grid at least 100").into());
    }
    let rows = run_suite(&SuiteConfig {
        n_samples: samples,
        grid_size: grid,
        seed,
        extra_gammas: gammas,
    })?;
    write_verify_report(report, &rows)?;
    let failed = rows.iter().filter(|r| r.status == CheckStatus::Fail).count();
    println!("{} checks, {failed} failed; report in {}", rows.len(), report.display());
    if suite_failed(&rows) {
        return Err(Failure {
            code: 3,
            error: anyhow!("{failed} verification checks failed"),
        });
    }
    Ok(())
}
