use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lesion_core::cohort::validate_cohort;
use lesion_core::synth::synth_cohort;
use lesion_tools::config::RunConfig;
use lesion_tools::manifest::{load_cohort_unchecked, write_cohort};
use lesion_tools::pipeline::{self, read_stage_profiles, read_stage_scores, write_run_manifest};
use lesion_tools::runner::Parallel;
use lesion_tools::tables::write_json;

#[derive(Parser)]
#[command(name = "lesion", version, about = "Longitudinal lesion profile analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort with known effects.
    Synth(Common),
    /// Check the cohort manifest and report every problem.
    Validate(Common),
    /// Extract events and voxel profiles.
    Profiles(Common),
    /// Fit principal components and score every voxel.
    Pca(Common),
    /// Fit the mixed models on the first-component scores.
    Lmm(Common),
    /// Function-on-scalar regression per sequence.
    Fosr(Common),
    /// Render review panels for every scored lesion.
    Panels(Common),
    /// Serve the rater trial over HTTP.
    Serve(Common),
    /// Kappa statistics from the rating ledger.
    Agreement(Common),
    /// Write the Markdown report from existing artifacts.
    Report(Common),
    /// Every analysis stage followed by the report.
    Run(Common),
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn execute(command: Command) -> anyhow::Result<()> {
    let runner = Parallel;
    match command {
        Command::Synth(c) => {
            let config = load(&c)?;
            let (cohort, truth) = synth_cohort(&config.synth.cohort, config.seed)?;
            let manifest = write_cohort(&cohort, &config.synth.output_dir)?;
            write_json(&config.synth.output_dir.join("truth.json"), &truth)?;
            println!("wrote {} subjects to {}", cohort.subjects.len(), manifest.display());
        }
        Command::Validate(c) => {
            let config = load(&c)?;
            let path = config.input.manifest.context("input.manifest is not set")?;
            let report = validate_cohort(&load_cohort_unchecked(&path)?);
            for issue in &report.issues {
                println!("{issue}");
            }
            if !report.is_valid() {
                bail!("{} problem(s) in {}", report.issues.len(), path.display());
            }
            println!("{}: valid", path.display());
        }
        Command::Profiles(c) => {
            let config = load(&c)?;
            let stage = pipeline::stage_profiles(&config, &config.output_dir)?;
            write_run_manifest(&config, &config.output_dir, &["profiles"])?;
            println!(
                "{} profiles from {} lesions",
                stage.summary.n_profiles, stage.summary.n_lesions
            );
        }
        Command::Pca(c) => {
            let config = load(&c)?;
            let profiles = read_stage_profiles(&config, &config.output_dir)?;
            let stage = pipeline::stage_pca(&config, &profiles, &config.output_dir, &runner)?;
            write_run_manifest(&config, &config.output_dir, &["pca"])?;
            println!("first component explains {:.1}%", 100.0 * stage.model.variance_explained[0]);
        }
        Command::Lmm(c) => {
            let config = load(&c)?;
            let profiles = read_stage_profiles(&config, &config.output_dir)?;
            let scores = read_stage_scores(&profiles, &config.output_dir)?;
            let stage = pipeline::stage_lmm(&config, &profiles, &scores, &config.output_dir, &runner)?;
            write_run_manifest(&config, &config.output_dir, &["lmm"])?;
            for row in &stage.table.rows {
                println!("{:>10} {:>10.3} (p = {:.3e})", row.name, row.estimate, row.p_value);
            }
        }
        Command::Fosr(c) => {
            let config = load(&c)?;
            let profiles = read_stage_profiles(&config, &config.output_dir)?;
            pipeline::stage_fosr(&config, &profiles, &config.output_dir, &runner)?;
            write_run_manifest(&config, &config.output_dir, &["fosr"])?;
        }
        Command::Panels(c) => {
            let config = load(&c)?;
            let index = pipeline::stage_panels(&config, &config.output_dir)?;
            write_run_manifest(&config, &config.output_dir, &["panels"])?;
            println!("rendered panels for {} lesions", index.lesions.len());
        }
        Command::Serve(c) => {
            let config = load(&c)?;
            let rt = tokio::runtime::Runtime::new()?;
            println!("serving rater trial on {}", config.trial.bind);
            rt.block_on(lesion_tools::server::serve(&config))?;
        }
        Command::Agreement(c) => {
            let config = load(&c)?;
            match pipeline::stage_agreement(&config, &config.output_dir, &runner)? {
                Some(report) => {
                    write_run_manifest(&config, &config.output_dir, &["agreement"])?;
                    println!("{} statistics from {} subjects", report.statistics.len(), report.n_subjects);
                }
                None => bail!("no rating ledger at {}", config.ledger_path().display()),
            }
        }
        Command::Report(c) => {
            let config = load(&c)?;
            lesion_tools::report::write_report(&config.output_dir)?;
        }
        Command::Run(c) => {
            let config = load(&c)?;
            pipeline::run_pipeline(&config, &runner)?;
            println!("artifacts in {}", config.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
