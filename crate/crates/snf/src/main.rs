use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snf::core::codec::Precision;
use snf::core::metrics;
use snf::run;
use snf::{RunConfig, SnfError};

#[derive(Parser)]
#[command(name = "snf", version, about = "Train, inspect and stream width-growing sine MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per a run config and write model.snf, metrics and reconstructions.
    Fit {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report metrics of a model on the config's signal.
    Eval {
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stage: Option<usize>,
    },
    /// Write the output contribution of one stage.
    Residual {
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stage: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-encode a stream.
    Pack {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Store weights as f32 (lossy, half the size).
        #[arg(long)]
        f32: bool,
    },
    /// Decode the first k stages of a stream.
    Decode {
        stream: PathBuf,
        #[arg(long)]
        stages: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send a stream to one client, chunk by chunk.
    Serve {
        stream: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: u16,
    },
    /// Receive a stream, writing a reconstruction after every chunk.
    Fetch {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: u16,
        #[arg(long)]
        k_max: Option<usize>,
        /// Config describing the signal to reconstruct and score against.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "fetched")]
        out: PathBuf,
    },
    /// Magnitude spectrum of a stage output or residual, as CSV.
    Spectrum {
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stage: usize,
        #[arg(long)]
        residual: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cmd: Command) -> snf::Result<()> {
    match cmd {
        Command::Fit { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output = out;
            }
            let outcome = run::fit_to_dir(&cfg)?;
            print!("{}", run::stages_csv(&outcome.report.stages));
            eprintln!("wrote {}", cfg.output.display());
        }
        Command::Eval { model, config, stage } => {
            let net = run::load_model(&model)?;
            let cfg = RunConfig::load(&config)?;
            print!("{}", run::stages_csv(&run::eval(&net, &cfg, stage)?));
        }
        Command::Residual { model, config, stage, out } => {
            let net = run::load_model(&model)?;
            run::residual(&net, &RunConfig::load(&config)?, stage, &out)?;
        }
        Command::Pack { model, out, f32 } => {
            let precision = if f32 { Precision::F32 } else { Precision::F64 };
            let n = run::repack(&model, &out, precision)?;
            println!("{n} bytes");
        }
        Command::Decode { stream, stages, out } => {
            let net = run::decode(&stream, stages, out.as_ref())?;
            println!(
                "decoded {} stages, widths {:?}, {} parameters",
                net.num_stages(),
                net.stage_widths(),
                net.total_params()
            );
        }
        Command::Serve { stream, host, port } => {
            let bytes = run::read_stream(&stream)?;
            snf::transport::serve((host.as_str(), port), &bytes)?;
        }
        Command::Fetch { host, port, k_max, config, out } => {
            let cfg = config.map(|c| RunConfig::load(&c)).transpose()?;
            let signal = cfg.as_ref().map(run::build_signal).transpose()?;
            let outcome = snf::transport::fetch((host.as_str(), port), k_max, |k, net| {
                let Some(signal) = &signal else {
                    println!("stage {k}: {} parameters", net.param_count(k)?);
                    return Ok(());
                };
                let pred = net.forward(&signal.coords, k)?;
                let psnr = metrics::unit_psnr(&pred, &signal.values, None)?;
                println!("stage {k}: {} parameters, psnr {:.3} dB", net.param_count(k)?, metrics::capped(psnr));
                run::write_reconstruction(&out.join(format!("stage_{k}")), &pred, signal)
            })?;
            std::fs::create_dir_all(&out).map_err(|e| SnfError::io(&out, e))?;
            let path = out.join("received.snf");
            std::fs::write(&path, &outcome.bytes).map_err(|e| SnfError::io(&path, e))?;
            if let Some(t) = outcome.truncated {
                eprintln!("stream truncated: {t}");
            }
        }
        Command::Spectrum { model, config, stage, residual, out } => {
            let net = run::load_model(&model)?;
            let centroid = run::spectrum(&net, &RunConfig::load(&config)?, stage, residual, &out)?;
            println!("spectral centroid {centroid:.4}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SNF_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
