//! Command-line runner for the phonon-laser simulation recipes.

mod config;
mod output;
mod recipes;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::ConfigFile;
use recipes::{default_out_dir, manifest, run_plan_file, run_recipe, CliError, RecipeName};

#[derive(Parser)]
#[command(name = "phonlase", version, about = "Phonon-laser array simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment recipe.
    Run {
        /// Recipe name (fig2-dynamics, fig2-omega-scan, fig2-threshold,
        /// fig2-spectrum, fig2-wigner, figS1-phaselocked, fig3-array,
        /// figS2-array, figS3-localdrive).
        recipe: String,
        /// TOML config with chain/integration/recipe overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default out/<recipe>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cap on sweep worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Validate the configuration and exit without simulating.
        #[arg(long)]
        check_only: bool,
    },
    /// Run a sweep described by a TOML plan file.
    Sweep {
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Print the version.
    Version,
}

fn install_thread_cap(threads: usize) {
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { recipe, config, out, threads, check_only } => {
            let name: RecipeName =
                recipe.parse().map_err(CliError::validation)?;
            let file = match &config {
                Some(path) => ConfigFile::load(path).map_err(CliError::validation)?,
                None => ConfigFile::default(),
            };
            if file.has_chain() {
                file.chain_config()?;
            }
            if check_only {
                println!("configuration valid for recipe {name}");
                return Ok(());
            }
            install_thread_cap(threads);
            let out_dir = out.unwrap_or_else(|| default_out_dir(name));
            let start = Instant::now();
            let report = run_recipe(name, &file, &out_dir)?;
            let m = manifest(name.name(), &report, &out_dir, start.elapsed().as_secs_f64());
            output::write_manifest(&out_dir.join("manifest.json"), &m)?;
            for f in &report.files {
                println!("wrote {}", out_dir.join(f).display());
            }
            println!("wrote {}", out_dir.join("manifest.json").display());
            Ok(())
        }
        Command::Sweep { plan, out, threads } => {
            install_thread_cap(threads);
            let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join("sweep"));
            let start = Instant::now();
            let report = run_plan_file(&plan, &out_dir)?;
            let m = manifest("sweep", &report, &out_dir, start.elapsed().as_secs_f64());
            output::write_manifest(&out_dir.join("manifest.json"), &m)?;
            for f in &report.files {
                println!("wrote {}", out_dir.join(f).display());
            }
            Ok(())
        }
        Command::Version => {
            println!("phonlase {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit_code as u8)
        }
    }
}
