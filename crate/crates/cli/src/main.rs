use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coevo_core::experiment::{run_experiment, stage_summary, GraphSource};
use coevo_core::io::{self, ExperimentPlan, Manifest};
use coevo_core::rng::{stream_rng, streams};
use coevo_core::synthesis::{er_probability_for_degree, gen_ba, gen_er, gen_sbm};
use coevo_core::theory::{certify, CertifyConfig};
use coevo_core::{presets, Error};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "coevo",
    version,
    about = "Opinion and network coevolution simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a built-in preset.
    Run(RunArgs),
    /// Numerically certify the single-edge and swap update formulas.
    Verify(VerifyArgs),
    /// Read an edge list and report its size before and after preprocessing.
    Ingest(IngestArgs),
    /// Generate a synthetic graph as an edge list.
    Gen(GenArgs),
    /// List built-in experiment presets.
    Presets(PresetsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file (same as --config).
    config_file: Option<PathBuf>,
    #[arg(long, conflicts_with = "config_file")]
    config: Option<PathBuf>,
    /// Built-in preset name instead of a config file.
    #[arg(long, conflicts_with_all = ["config", "config_file"])]
    preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials run concurrently (default: all cores).
    #[arg(long)]
    parallel_trials: Option<usize>,
    /// Reduce each graph to the largest component of its 2-core.
    #[arg(long)]
    preprocess: bool,
    /// Record every node's expressed opinion at every step.
    #[arg(long)]
    trajectories: bool,
    /// Override iterations (snapshot times beyond it are dropped).
    #[arg(long)]
    iterations: Option<usize>,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    p: f64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 10_000)]
    swaps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Additions and deletions checked per instance.
    #[arg(long, default_value_t = 10)]
    edges_per_instance: usize,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    file: PathBuf,
    /// Skip the 2-core / largest-component reduction.
    #[arg(long)]
    no_preprocess: bool,
    /// Write the processed edge list, node relabeling and descriptor here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Er,
    Ba,
    Sbm,
}

#[derive(Args)]
struct GenArgs {
    model: Model,
    #[arg(long)]
    n: usize,
    /// ER edge probability.
    #[arg(long, conflicts_with = "degree")]
    p: Option<f64>,
    /// ER expected degree.
    #[arg(long)]
    degree: Option<f64>,
    /// BA edges per new node.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge-list destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PresetsArgs {
    /// Print this preset's TOML.
    #[arg(long)]
    show: Option<String>,
}

enum Failure {
    Core(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Verify(a) => verify(a),
        Command::Ingest(a) => ingest(a),
        Command::Gen(a) => gen(a),
        Command::Presets(a) => list_presets(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFICATION)
        }
    }
}

fn load_plan(a: &RunArgs) -> Result<ExperimentPlan, Error> {
    let mut plan = match (&a.preset, a.config.as_ref().or(a.config_file.as_ref())) {
        (Some(name), _) => presets::load(name)?,
        (None, Some(path)) => io::load_config(path)?,
        (None, None) => return Err(Error::Config("run needs a config file or --preset".into())),
    };
    let base = &mut plan.base;
    if let Some(seed) = a.seed {
        base.dynamics.base_seed = seed;
    }
    if let Some(iterations) = a.iterations {
        base.dynamics.iterations = iterations;
        base.snapshot_times.retain(|&t| t <= iterations);
    }
    if let Some(trials) = a.trials {
        base.trials = trials;
    }
    base.preprocess |= a.preprocess;
    base.trajectory_capture |= a.trajectories;
    base.validate()?;
    Ok(plan)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let plan = load_plan(&a)?;
    let runs = plan.runs()?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| io::default_output_dir(&plan.base.name));
    let mut manifest = Manifest::default();
    let mut violations = 0;
    for (i, planned) in runs.iter().enumerate() {
        let dir = if planned.label.is_empty() {
            out.clone()
        } else {
            out.join(&planned.label)
        };
        let cfg = &planned.config;
        println!(
            "[{}/{}] {}: {} trials x {} steps",
            i + 1,
            runs.len(),
            cfg.name,
            cfg.trials,
            cfg.dynamics.iterations
        );
        let start = Instant::now();
        let result = run_experiment(cfg, a.parallel_trials)?;
        let written = io::write_outputs(&result, &dir)?;
        let last = result.series.final_row();
        let stage = stage_summary(&result.series);
        println!(
            "      done in {:.1}s: final P/n {:.4}, D/e {:.3e}, peak D/e at t={}, bound violations {}",
            start.elapsed().as_secs_f64(),
            last.polarization_per_node.mean,
            last.disagreement_per_edge.mean,
            stage.peak_t,
            result.audit.violations()
        );
        violations += result.audit.violations();
        if !planned.label.is_empty() {
            manifest.extend_prefixed(&planned.label, &written);
        }
    }
    if runs.len() > 1 || !runs[0].label.is_empty() {
        io::save_config(&plan, out.join("plan.toml"))?;
        manifest.write(&out)?;
    }
    println!("outputs in {}", out.display());
    if violations > 0 {
        return Err(Failure::Verification(format!(
            "{violations} bound violations, see bound_audit.json"
        )));
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let cfg = CertifyConfig {
        n: a.n,
        p: a.p,
        instances: a.instances,
        swaps: a.swaps,
        edges_per_instance: a.edges_per_instance,
        seed: a.seed,
        ..CertifyConfig::default()
    };
    let report = certify(&cfg)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = &a.out {
        write_text(path, &(json + "\n"))?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification(
            "update-formula or bound violations in the report".into(),
        ))
    }
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let (g, mut descriptor) = io::ingest(&a.file, !a.no_preprocess)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let relabel = dir.join(format!("{}_nodes.csv", descriptor.name));
        io::write_edge_list(&g, dir.join(format!("{}_processed.txt", descriptor.name)))?;
        io::write_relabeling(&g, &relabel)?;
        descriptor.relabeling = Some(relabel);
        let json = serde_json::to_string_pretty(&descriptor).expect("descriptor serializes");
        write_text(
            &dir.join(format!("{}_descriptor.json", descriptor.name)),
            &(json + "\n"),
        )?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&descriptor).expect("descriptor serializes")
    );
    Ok(())
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let missing = |flag: &str| Error::Config(format!("--{flag} is required for this model"));
    let source = match a.model {
        Model::Er => GraphSource::Er {
            n: a.n,
            p: a.p,
            degree: a.degree,
        },
        Model::Ba => GraphSource::Ba {
            n: a.n,
            m: a.m.ok_or_else(|| missing("m"))?,
        },
        Model::Sbm => GraphSource::Sbm {
            n: a.n,
            blocks: a.blocks.ok_or_else(|| missing("blocks"))?,
            p_in: a.p_in.ok_or_else(|| missing("p-in"))?,
            p_out: a.p_out.ok_or_else(|| missing("p-out"))?,
        },
    };
    source.validate()?;
    let mut rng = stream_rng(a.seed, streams::GRAPH);
    let g = match source {
        GraphSource::Er { n, p, degree } => {
            let p = p.unwrap_or_else(|| er_probability_for_degree(n, degree.unwrap_or_default()));
            gen_er(n, p, &mut rng)?
        }
        GraphSource::Ba { n, m } => gen_ba(n, m, &mut rng)?,
        GraphSource::Sbm {
            n,
            blocks,
            p_in,
            p_out,
        } => gen_sbm(n, blocks, p_in, p_out, &mut rng)?.0,
        GraphSource::File { .. } => unreachable!("gen only builds synthetic graphs"),
    };
    io::write_edge_list(&g, &a.out)?;
    println!(
        "wrote {} nodes, {} edges to {}",
        g.node_count(),
        g.edge_count(),
        a.out.display()
    );
    Ok(())
}

fn list_presets(a: PresetsArgs) -> Result<(), Failure> {
    if let Some(name) = a.show {
        let preset = presets::find(&name)
            .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        print!("{}", preset.toml);
        return Ok(());
    }
    for p in presets::PRESETS {
        let runs = p.plan()?.runs()?.len();
        println!("{:<24} {:>3} run(s)  {}", p.name, runs, p.summary);
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
