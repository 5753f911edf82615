use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use laprep_bench::config::{SweepConfig, DEFAULT_BETA, DEFAULT_ITERATIONS, DEFAULT_STEP};
use laprep_bench::record::{errors_path, fmt_float, write_csv, write_errors};
use laprep_bench::sweep::{run_comments, run_k_sweep, run_wall_sweep, SweepOutcome};
use laprep_bench::verify::{run_all, VerifyOptions};
use laprep_bench::{plot, BenchError};
use laprep_core::gdo::{learn_representation, GdoConfig, GdoMode};
use laprep_core::gridworld::{build_grid, carve_walls, to_chain, GridEnv, Policy};
use laprep_core::spectral::{build_laplacian, spectrum};

#[derive(Parser)]
#[command(name = "laprep", version, about = "Laplacian representations of average-reward gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Carve a random maze and write the environment JSON.
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 0)]
        walls: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the Laplacian spectrum of an environment's uniform policy.
    Spectrum {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn GDO features for an environment.
    Gdo {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        /// Minibatch size; full gradients when omitted.
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-iteration loss.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Wall sweep: every (w, seed) cell at each configured k.
    Sweep(SweepArgs),
    /// k sweep over the configured cells (default k = 1..60).
    #[command(alias = "kswep")]
    Ksweep(SweepArgs),
    /// Render the standard SVG figures from a results CSV.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the property suite; exits nonzero if any property fails.
    Verify {
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_path` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn core_err(e: impl std::fmt::Display) -> BenchError {
    BenchError::Core(e.to_string())
}

fn load_env(path: &Path) -> Result<GridEnv, BenchError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn grid(rows: usize, cols: usize, walls: usize, seed: u64, out: &Path) -> Result<(), BenchError> {
    let env = carve_walls(&build_grid(rows, cols).map_err(core_err)?, walls, seed).map_err(core_err)?;
    std::fs::write(out, serde_json::to_string_pretty(&env)? + "\n")?;
    Ok(())
}

fn write_spectrum(env: &Path, out: &Path) -> Result<(), BenchError> {
    let chain = to_chain(&load_env(env)?, &Policy::Uniform).map_err(core_err)?;
    let l = build_laplacian(chain.kernel(), chain.stationary()).map_err(core_err)?;
    let bundle = spectrum(&l, chain.stationary()).map_err(core_err)?;
    let mut text = String::from("# format_version=1\nindex,lambda\n");
    for (i, lambda) in bundle.lambdas.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, fmt_float(*lambda)));
    }
    std::fs::write(out, text)?;
    Ok(())
}

fn gdo(
    env: &Path,
    config: GdoConfig,
    out: &Path,
    trace: Option<&Path>,
) -> Result<(), BenchError> {
    let chain = to_chain(&load_env(env)?, &Policy::Uniform).map_err(core_err)?;
    let l = build_laplacian(chain.kernel(), chain.stationary()).map_err(core_err)?;
    let bundle = spectrum(&l, chain.stationary()).map_err(core_err)?;
    let rep = learn_representation(&chain, &l, &bundle, &config).map_err(core_err)?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(file, "# format_version=1")?;
    writeln!(
        file,
        "# k={} beta={} step_size={} iterations={} seed={} epsilon={}",
        config.k,
        config.beta,
        config.step_size,
        config.iterations,
        config.seed,
        fmt_float(rep.epsilon)
    )?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header = vec!["state".to_string(), "row".into(), "col".into()];
    header.extend((1..=config.k).map(|j| format!("psi_{j}")));
    writer.write_record(&header)?;
    for (s, &(r, c)) in chain.state_labels().iter().enumerate() {
        let mut row = vec![s.to_string(), r.to_string(), c.to_string()];
        row.extend(rep.psi_hat.row(s).iter().map(|x| fmt_float(*x)));
        writer.write_record(&row)?;
    }
    writer.flush()?;

    if let Some(path) = trace {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["iteration", "loss"])?;
        for (it, loss) in &rep.optimizer_trace {
            writer.write_record([it.to_string(), fmt_float(*loss)])?;
        }
        writer.flush()?;
    }
    eprintln!("epsilon = {:e}", rep.epsilon);
    Ok(())
}

fn sweep(args: &SweepArgs, run: fn(&SweepConfig) -> SweepOutcome) -> Result<(), BenchError> {
    let mut config = SweepConfig::load(&args.config)?;
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    config.validate()?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output_path.clone())
        .ok_or_else(|| BenchError::Config("no output path: pass --out or set output_path".into()))?;
    let outcome = run(&config);
    let errors = errors_path(&out);
    if !outcome.errors.is_empty() {
        write_errors(&errors, &outcome.errors)?;
        eprintln!("{} cells failed; see {}", outcome.errors.len(), errors.display());
    } else if errors.exists() {
        std::fs::remove_file(&errors)?;
    }
    write_csv(&out, &outcome.records, &run_comments(&config))?;
    eprintln!("wrote {} records to {}", outcome.records.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Grid {
            rows,
            cols,
            walls,
            seed,
            out,
        } => grid(rows, cols, walls, seed, &out),
        Command::Spectrum { env, out } => write_spectrum(&env, &out),
        Command::Gdo {
            env,
            k,
            beta,
            iters,
            seed,
            step,
            batch,
            out,
            trace,
        } => {
            let config = GdoConfig {
                k,
                beta,
                step_size: step,
                iterations: iters,
                seed,
                mode: batch.map_or(GdoMode::FullGradient, |batch| GdoMode::Stochastic { batch }),
            };
            gdo(&env, config, &out, trace.as_deref())
        }
        Command::Sweep(args) => sweep(&args, run_wall_sweep),
        Command::Ksweep(args) => sweep(&args, run_k_sweep),
        Command::Plot { input, out_dir } => plot::render_plots(&input, &out_dir).map(|files| {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }),
        Command::Verify { fast, seed } => {
            let results = run_all(&VerifyOptions {
                fast,
                seed,
                ..VerifyOptions::default()
            });
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} properties, {failed} failed", results.len());
            return if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
