use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use uwofdm::channel::{ChannelCorpus, MultipathSpec};
use uwofdm::codegen::{
    certify_optimality, check_symmetry, load_generator, polish, save_generator, steepest_descent, CostSpec,
    DescentOptions, DescentOutcome, Estimator, Init,
};
use uwofdm::sim::{
    export_results, plot_data, run_ber, run_psd, ChannelSource, Detector, PsdOptions, Scenario, ScenarioFile,
    SystemId,
};
use uwofdm::{Layout, SystemConfig};

const TRACE_HEADER: &str = "# uwofdm-jtrace v1";

#[derive(Parser)]
#[command(name = "uwofdm", version, about = "Unique-word OFDM code generators, BER and spectrum tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a corpus of multipath channel realizations.
    GenChannels {
        #[arg(long, default_value_t = 5000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// RMS delay spread of the exponential power delay profile.
        #[arg(long, default_value_t = 100.0)]
        delay_spread_ns: f64,
        #[arg(long, default_value_t = 16)]
        max_taps: usize,
        #[arg(long, default_value_t = 20e6)]
        fs: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Optimize a non-systematic generator matrix by steepest descent.
    OptimizeMatrix {
        #[arg(long, default_value = "lmmse")]
        estimator: Estimator,
        /// `identity` or `random:<seed>`.
        #[arg(long, default_value = "identity")]
        init: InitArg,
        /// Ratio E_s / sigma_n^2 of the cost function.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Stop once the relative gap to the closed-form minimum is below this.
        #[arg(long)]
        gap: Option<f64>,
        #[arg(long, default_value_t = 50_000)]
        max_iters: usize,
        /// Project the result onto the exact optimum before saving.
        #[arg(long)]
        polish: bool,
        /// Layout description (TOML); defaults to the 64-point reference layout.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Cost trace file; defaults to `<output>.trace`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Report whether a generator matrix is an optimum.
    Certify {
        generator: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Exit with status 1 unless the matrix is certified optimal.
        #[arg(long)]
        require: bool,
    },
    /// Run a BER scenario and append the results.
    SimulateBer {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write one plot data file per label into this directory.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Estimate the power spectral density of a burst.
    Psd {
        #[arg(long)]
        system: SystemId,
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n_symbols: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// UW energy relative to the data; 0 gives the zero UW.
        #[arg(long, default_value_t = 0.0)]
        uw_ratio: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, Debug)]
struct InitArg(Init);

impl FromStr for InitArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "identity" => Ok(InitArg(Init::Identity)),
            Some(("random", seed)) => seed
                .parse()
                .map(|s| InitArg(Init::RandomGaussian(s)))
                .map_err(|e| format!("bad seed {seed:?}: {e}")),
            _ => Err(format!("expected `identity` or `random:<seed>`, got {s:?}")),
        }
    }
}

fn init_name(init: Init) -> String {
    match init {
        Init::Identity => "identity".into(),
        Init::RandomGaussian(s) => format!("random:{s}"),
    }
}

fn write_trace(path: &Path, out: &DescentOutcome, spec: &CostSpec, init: Init, n_d: usize) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{TRACE_HEADER}")?;
    writeln!(f, "# estimator {}", spec.estimator)?;
    writeln!(f, "# c {}", spec.c)?;
    writeln!(f, "# init {}", init_name(init))?;
    writeln!(f, "# minimum {}", spec.minimum(n_d))?;
    writeln!(f, "# status {:?}", out.status)?;
    writeln!(f, "# iteration evaluations cost")?;
    for p in &out.trace {
        writeln!(f, "{} {} {}", p.iteration, p.evaluations, p.cost)?;
    }
    f.flush()?;
    Ok(())
}

fn parent(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenChannels {
            count,
            seed,
            delay_spread_ns,
            max_taps,
            fs,
            output,
        } => {
            let spec = MultipathSpec {
                delay_spread_ns,
                fs,
                max_taps,
            };
            let corpus = ChannelCorpus::generate(count, spec, seed)?;
            corpus.save(&output).with_context(|| format!("writing {}", output.display()))?;
            println!("{count} channels, id {:016x}, written to {}", corpus.id(), output.display());
        }
        Command::OptimizeMatrix {
            estimator,
            init,
            c,
            gap,
            max_iters,
            polish: do_polish,
            config,
            output,
            trace,
        } => {
            let cfg = match config {
                Some(p) => SystemConfig::load(&p).with_context(|| format!("reading {}", p.display()))?,
                None => SystemConfig::default(),
            };
            let layout = Layout::new(&cfg)?;
            let spec = CostSpec::new(estimator, c, cfg.sigma_d2)?;
            let opts = DescentOptions {
                max_iters,
                gap_tol: gap,
                ..DescentOptions::default()
            };
            info!("optimizing {estimator} generator from {}", init_name(init.0));
            let out = steepest_descent(&layout, &spec, init.0, &opts)?;
            let minimum = spec.minimum(layout.n_d());
            let g = if do_polish { polish(&out.generator)? } else { out.generator.clone() };
            save_generator(&g, &output).with_context(|| format!("writing {}", output.display()))?;
            let trace = trace.unwrap_or_else(|| {
                let mut p = output.clone().into_os_string();
                p.push(".trace");
                p.into()
            });
            write_trace(&trace, &out, &spec, init.0, layout.n_d())?;
            println!(
                "J = {:.9} (minimum {minimum:.9}, gap {:.3e}) after {} iterations, {} evaluations: {:?}",
                out.cost,
                (out.cost - minimum) / minimum,
                out.iterations(),
                out.evaluations,
                out.status
            );
            println!("generator {}, trace {}", output.display(), trace.display());
        }
        Command::Certify { generator, tol, require } => {
            let g = load_generator(&generator).with_context(|| format!("reading {}", generator.display()))?;
            let r = certify_optimality(&g, tol)?;
            let s = check_symmetry(&g, None, tol);
            println!("kind                  {}", g.kind());
            println!("s2                    {:.12}", r.s2);
            println!("ortho_residual        {:.3e}", r.ortho_residual);
            println!("constraint_residual   {:.3e}", r.constraint_residual);
            println!("singular_value_spread {:.3e}", r.singular_value_spread);
            println!("conj_symmetric        {} ({:.3e})", s.g_conj_symmetric, s.g_residual);
            println!("optimal               {}", r.is_optimal);
            if require && !r.is_optimal {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::SimulateBer {
            scenario,
            output,
            plot_dir,
        } => {
            let file = ScenarioFile::load(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let sc = file.resolve(parent(&scenario))?;
            if sc.es_n0_db.is_empty() {
                bail!("scenario {} has an empty es_n0_db grid", scenario.display());
            }
            let records = run_ber(&sc)?;
            for r in &records {
                println!(
                    "{} {:>6.2} dB  BER {:.3e}  ({} / {} bits, {} frames, {})",
                    r.label,
                    r.es_n0_db,
                    r.ber(),
                    r.bit_errors,
                    r.bits_sent,
                    r.frames,
                    r.stop
                );
            }
            export_results(&output, &records).with_context(|| format!("writing {}", output.display()))?;
            if let Some(dir) = plot_dir {
                let all = uwofdm::sim::load_results(&output)?;
                for p in plot_data(&all, &dir)? {
                    info!("wrote {}", p.display());
                }
            }
        }
        Command::Psd {
            system,
            generator,
            n_symbols,
            seed,
            uw_ratio,
            output,
        } => {
            let g = generator.as_ref().map(load_generator).transpose()?;
            let sc = Scenario::with_uw_ratio("psd", system, g.as_ref(), Detector::Lmmse, ChannelSource::Awgn, uw_ratio)?;
            let curve = run_psd(
                sc.link(),
                &PsdOptions {
                    n_symbols,
                    seed,
                    ..PsdOptions::default()
                },
            )?;
            curve.save(&output).with_context(|| format!("writing {}", output.display()))?;
            println!(
                "out-of-band {:.2} dB, in-band ripple {:.2} dB, written to {}",
                curve.out_of_band_db(10e6),
                curve.in_band_ripple_db(),
                output.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
