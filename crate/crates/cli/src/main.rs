//! `persec`: generate streams, run selectors, tune λ, compare algorithms and
//! evaluate the performance bounds.
//!
//! Every subcommand reads an optional TOML config (`--config`); flags
//! override config keys. The fully resolved config is written to
//! `manifest.toml` in the output directory and can be passed back with
//! `--config` to replay the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use periodic_secretary::bounds::{BoundInputs, BoundReport, QConvention};
use periodic_secretary::harness::{self, AlgorithmSpec, ExperimentConfig, StreamSource};
use periodic_secretary::stream::{self, CsvSchema};
use periodic_secretary::{
    Error, GpHyperparams, ObservationStream, PeriodicStreamSpec, StreamView, UtilityFunction, Waveform,
};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "persec", version, about = "Periodic secretary sample selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic periodic stream as CSV.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        gp: GpArgs,
    },
    /// Run one selector on a stream.
    Select {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        gp: GpArgs,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
        lambda: Option<f64>,
    },
    /// Sweep λ over simulated streams.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        gp: GpArgs,
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated λ grid.
        #[arg(long, value_delimiter = ',', value_parser = non_negative, allow_negative_numbers = true)]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_parser = positive_usize)]
        runs: Option<usize>,
        /// `entropy` or `modular` (first feature as weight).
        #[arg(long)]
        utility: Option<String>,
    },
    /// Compare selectors over repeated trials.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        gp: GpArgs,
        /// Comma-separated, e.g. `periodic:0.5,submodular,scheduled,random,greedy`.
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<String>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = positive_usize)]
        runs: Option<usize>,
        /// Held-out fraction for prediction error; 0 disables it.
        #[arg(long)]
        test_fraction: Option<f64>,
        /// Reorder whole periods of a recorded stream between runs.
        #[arg(long)]
        permute: Option<bool>,
        #[arg(long)]
        center_qoi: Option<bool>,
    },
    /// Evaluate the success-count and utility lower bounds.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
        lambda: Option<f64>,
        /// Utility noise standard deviation.
        #[arg(long, value_parser = non_negative, allow_negative_numbers = true, conflicts_with = "sigma_u2")]
        sigma_u: Option<f64>,
        /// Utility noise variance.
        #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
        sigma_u2: Option<f64>,
        /// Stream length.
        #[arg(long = "N")]
        n: Option<usize>,
        /// Period.
        #[arg(long = "T")]
        t: Option<usize>,
        #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
        f_opt: Option<f64>,
        /// `variance` or `std_dev`.
        #[arg(long)]
        convention: Option<String>,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StreamArgs {
    /// Stream CSV; when absent a synthetic stream is used.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_parser = positive_usize)]
    period: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    periods: Option<usize>,
    /// Per-feature noise variance.
    #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
    noise: Option<f64>,
    /// `sine_mix` or `seasonal`.
    #[arg(long)]
    waveform: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    offset: Option<f64>,
    /// Attach ground truth drawn from the GP prior.
    #[arg(long)]
    qoi: Option<bool>,
}

#[derive(Args, Debug)]
struct GpArgs {
    #[arg(long, value_parser = positive_f64)]
    lengthscale: Option<f64>,
    #[arg(long, value_parser = positive_f64)]
    signal_variance: Option<f64>,
    #[arg(long, value_parser = positive_f64)]
    noise_variance: Option<f64>,
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a finite non-negative number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a finite positive number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    stream: StreamConfig,
    gp: GpConfig,
    select: SelectConfig,
    tune: TuneConfig,
    evaluate: EvaluateConfig,
    bounds: BoundsConfig,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StreamConfig {
    input: Option<PathBuf>,
    period: Option<usize>,
    periods: Option<usize>,
    noise: Option<f64>,
    waveform: Option<String>,
    offset: Option<f64>,
    qoi: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GpConfig {
    lengthscale: Option<f64>,
    signal_variance: Option<f64>,
    noise_variance: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SelectConfig {
    algo: Option<String>,
    k: Option<usize>,
    lambda: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TuneConfig {
    k: Option<usize>,
    lambdas: Option<Vec<f64>>,
    runs: Option<usize>,
    utility: Option<String>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateConfig {
    algorithms: Option<Vec<String>>,
    k: Option<usize>,
    runs: Option<usize>,
    test_fraction: Option<f64>,
    permute: Option<bool>,
    center_qoi: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BoundsConfig {
    k: Option<usize>,
    lambda: Option<f64>,
    sigma_u2: Option<f64>,
    n: Option<usize>,
    t: Option<usize>,
    f_opt: Option<f64>,
    convention: Option<String>,
}

/// Usage problems exit with 2, everything else with 1.
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) | Error::InvalidSpec(m) | Error::Config(m) => Failure::Usage(m),
            other => Failure::Run(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {}: {}", path.display(), one_line(&e.to_string()))))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Config {
    fn apply_common(&mut self, c: CommonArgs) {
        set(&mut self.seed, c.seed);
        set(&mut self.output_dir, c.output_dir);
    }

    fn apply_stream(&mut self, s: StreamArgs) {
        let t = &mut self.stream;
        set(&mut t.input, s.input);
        set(&mut t.period, s.period);
        set(&mut t.periods, s.periods);
        set(&mut t.noise, s.noise);
        set(&mut t.waveform, s.waveform);
        set(&mut t.offset, s.offset);
        set(&mut t.qoi, s.qoi);
    }

    fn apply_gp(&mut self, g: GpArgs) {
        set(&mut self.gp.lengthscale, g.lengthscale);
        set(&mut self.gp.signal_variance, g.signal_variance);
        set(&mut self.gp.noise_variance, g.noise_variance);
    }

    fn seed(&mut self) -> u64 {
        *self.seed.get_or_insert(0)
    }

    fn output_dir(&mut self) -> PathBuf {
        self.output_dir
            .get_or_insert_with(|| PathBuf::from("persec-out"))
            .clone()
    }

    /// Synthetic stream description with defaults filled into the config.
    fn stream_spec(&mut self) -> CliResult<PeriodicStreamSpec> {
        let s = &mut self.stream;
        let period = *s.period.get_or_insert(100);
        let periods = *s.periods.get_or_insert(10);
        let noise = *s.noise.get_or_insert(0.35);
        let offset = *s.offset.get_or_insert(0.0);
        let waveform = match s.waveform.get_or_insert_with(|| "sine_mix".into()).as_str() {
            "sine_mix" => Waveform::SineMix { offset },
            "seasonal" => Waveform::Seasonal { offset },
            other => return usage(format!("unknown waveform `{other}` (expected sine_mix or seasonal)")),
        };
        if period == 0 || periods == 0 {
            return usage("period and periods must be at least 1");
        }
        if noise.is_nan() || noise < 0.0 {
            return usage("noise must be non-negative");
        }
        let spec = PeriodicStreamSpec::isotropic(period, periods, noise, waveform);
        spec.validate()?;
        Ok(spec)
    }

    fn hyper(&mut self, dim: usize) -> CliResult<GpHyperparams> {
        let g = &mut self.gp;
        let l = *g.lengthscale.get_or_insert(1.0);
        let sf = *g.signal_variance.get_or_insert(1.0);
        let sn = *g.noise_variance.get_or_insert(0.1);
        Ok(GpHyperparams::isotropic(dim, l, sf, sn)?)
    }

    /// The input CSV if given, else a synthetic stream. Returns the stream
    /// and its period.
    fn load_stream(&mut self, seed: u64) -> CliResult<(ObservationStream, usize)> {
        if let Some(path) = self.stream.input.clone() {
            let Some(period) = self.stream.period else {
                return usage("--period is required with --input");
            };
            let schema = CsvSchema::infer(&path)?;
            Ok((stream::ingest_csv(&path, &schema)?, period))
        } else {
            let spec = self.stream_spec()?;
            let s = stream::generate_periodic_stream(&spec, seed)?;
            let s = if *self.stream.qoi.get_or_insert(false) {
                let h = self.hyper(spec.dim())?;
                harness::attach_gp_qoi(s, &h, periodic_secretary::seed::derive(seed, 7))?
            } else {
                s
            };
            Ok((s, spec.period))
        }
    }
}

fn write_manifest(dir: &Path, command: &str, cfg: &Config) -> CliResult<()> {
    let body = toml::to_string(cfg).map_err(|e| Failure::Run(Error::Config(e.to_string())))?;
    fs::write(
        dir.join("manifest.toml"),
        format!(
            "# persec {} {command}\n# replay: persec {command} --config manifest.toml\n{body}",
            env!("CARGO_PKG_VERSION")
        ),
    )?;
    Ok(())
}

fn prepare_output(cfg: &mut Config) -> CliResult<PathBuf> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| {
        Failure::Run(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.display()),
        )))
    })?;
    Ok(dir)
}

fn cmd_generate(mut cfg: Config) -> CliResult<()> {
    let seed = cfg.seed();
    cfg.stream.input = None;
    let (s, _) = cfg.load_stream(seed)?;
    let dir = prepare_output(&mut cfg)?;
    stream::write_csv(&s, &dir.join("stream.csv"))?;
    write_manifest(&dir, "generate", &cfg)?;
    println!("wrote {} rows to {}", s.len(), dir.join("stream.csv").display());
    Ok(())
}

fn cmd_select(mut cfg: Config) -> CliResult<()> {
    let seed = cfg.seed();
    let (s, period) = cfg.load_stream(seed)?;
    let k = cfg.select.k.ok_or(Failure::Usage("--k is required".into()))?;
    let name = cfg.select.algo.get_or_insert_with(|| "periodic".into()).clone();
    let algo = match name.as_str() {
        "periodic" => AlgorithmSpec::Periodic {
            lambda: *cfg.select.lambda.get_or_insert(0.5),
        },
        other => AlgorithmSpec::parse(other)?,
    };
    if k == 0 || k > s.len() {
        return usage(format!("k = {k} must lie in 1..={}", s.len()));
    }
    let f = UtilityFunction::entropy(cfg.hyper(s.dim())?);
    let view = StreamView::from(&s);
    let sel = algo.run(view, &f, k, period, seed)?;
    let dir = prepare_output(&mut cfg)?;
    sel.write_csv(&dir.join("selection.csv"))?;
    let summary = format!(
        "algorithm = {algo}\nselected = {}\nfinal_utility = {}\ntermination = {}\n",
        sel.len(),
        periodic_secretary::format::sig12(sel.final_utility()),
        sel.terminated
    );
    fs::write(dir.join("summary.txt"), &summary)?;
    write_manifest(&dir, "select", &cfg)?;
    print!("{summary}");
    Ok(())
}

fn cmd_tune(mut cfg: Config) -> CliResult<()> {
    let seed = cfg.seed();
    let spec = cfg.stream_spec()?;
    let k = *cfg.tune.k.get_or_insert(75);
    let grid = cfg
        .tune
        .lambdas
        .get_or_insert_with(|| vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0])
        .clone();
    let runs = *cfg.tune.runs.get_or_insert(50);
    let f: UtilityFunction = match cfg.tune.utility.get_or_insert_with(|| "entropy".into()).as_str() {
        "entropy" => UtilityFunction::entropy(cfg.hyper(spec.dim())?),
        "modular" => UtilityFunction::modular_feature(0),
        other => return usage(format!("unknown utility `{other}` (expected entropy or modular)")),
    };
    let report = harness::tune_lambda(&spec, &f, k, &grid, runs, seed)?;
    let dir = prepare_output(&mut cfg)?;
    fs::write(dir.join("tune.csv"), report.to_csv())?;
    let summary = format!(
        "best_lambda = {}\n",
        periodic_secretary::format::sig12(report.best_lambda)
    );
    fs::write(dir.join("summary.txt"), &summary)?;
    write_manifest(&dir, "tune", &cfg)?;
    print!("{}{summary}", report.to_csv());
    Ok(())
}

fn cmd_evaluate(mut cfg: Config) -> CliResult<()> {
    let seed = cfg.seed();
    let names = cfg
        .evaluate
        .algorithms
        .get_or_insert_with(|| {
            ["periodic:0.5", "submodular", "scheduled", "random", "greedy"]
                .map(String::from)
                .to_vec()
        })
        .clone();
    let algorithms = names
        .iter()
        .map(|n| AlgorithmSpec::parse(n))
        .collect::<Result<Vec<_>, _>>()?;
    let test_fraction = *cfg.evaluate.test_fraction.get_or_insert(0.2);
    let (source, dim) = match cfg.stream.input.clone() {
        Some(_) => {
            let (s, period) = cfg.load_stream(seed)?;
            let dim = s.dim();
            (StreamSource::Recorded { stream: s, period }, dim)
        }
        None => {
            let spec = cfg.stream_spec()?;
            let dim = spec.dim();
            let qoi = if *cfg.stream.qoi.get_or_insert(true) {
                Some(cfg.hyper(dim)?)
            } else {
                None
            };
            (StreamSource::Synthetic { spec, qoi }, dim)
        }
    };
    let hyper = cfg.hyper(dim)?;
    let exp = ExperimentConfig {
        algorithms,
        k: cfg.evaluate.k.ok_or(Failure::Usage("--k is required".into()))?,
        runs: *cfg.evaluate.runs.get_or_insert(50),
        seed,
        test_fraction,
        permute: *cfg.evaluate.permute.get_or_insert(true),
        center_qoi: *cfg.evaluate.center_qoi.get_or_insert(false),
    };
    let report = harness::run_comparison(&source, &exp, &hyper)?;
    let dir = prepare_output(&mut cfg)?;
    report.write(&dir)?;
    write_manifest(&dir, "evaluate", &cfg)?;
    print!("{}", report.summary());
    Ok(())
}

fn cmd_bounds(mut cfg: Config) -> CliResult<()> {
    let b = &mut cfg.bounds;
    let convention = match b.convention.get_or_insert_with(|| "variance".into()).as_str() {
        "variance" => QConvention::Variance,
        "std_dev" => QConvention::StdDev,
        other => return usage(format!("unknown convention `{other}` (expected variance or std_dev)")),
    };
    let inputs = BoundInputs {
        k: b.k.ok_or(Failure::Usage("--k is required".into()))?,
        lambda: b.lambda.ok_or(Failure::Usage("--lambda is required".into()))?,
        utility_noise: b
            .sigma_u2
            .ok_or(Failure::Usage("--sigma-u or --sigma-u2 is required".into()))?,
        stream_len: b.n.ok_or(Failure::Usage("--N is required".into()))?,
        period: b.t.ok_or(Failure::Usage("--T is required".into()))?,
        f_opt: b.f_opt.ok_or(Failure::Usage("--f-opt is required".into()))?,
        convention,
    };
    let report = BoundReport::compute(&inputs)?;
    let dir = prepare_output(&mut cfg)?;
    fs::write(dir.join("bounds.txt"), report.to_kv_string())?;
    write_manifest(&dir, "bounds", &cfg)?;
    print!("{}", report.to_kv_string());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { common, stream, gp } => {
            let mut cfg = load_config(common.config.as_deref())?;
            cfg.apply_common(common);
            cfg.apply_stream(stream);
            cfg.apply_gp(gp);
            cmd_generate(cfg)
        }
        Command::Select {
            common,
            stream,
            gp,
            algo,
            k,
            lambda,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            cfg.apply_common(common);
            cfg.apply_stream(stream);
            cfg.apply_gp(gp);
            set(&mut cfg.select.algo, algo);
            set(&mut cfg.select.k, k);
            set(&mut cfg.select.lambda, lambda);
            cmd_select(cfg)
        }
        Command::Tune {
            common,
            stream,
            gp,
            k,
            lambdas,
            runs,
            utility,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            cfg.apply_common(common);
            cfg.apply_stream(stream);
            cfg.apply_gp(gp);
            set(&mut cfg.tune.k, k);
            set(&mut cfg.tune.lambdas, lambdas);
            set(&mut cfg.tune.runs, runs);
            set(&mut cfg.tune.utility, utility);
            cmd_tune(cfg)
        }
        Command::Evaluate {
            common,
            stream,
            gp,
            algorithms,
            k,
            runs,
            test_fraction,
            permute,
            center_qoi,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            cfg.apply_common(common);
            cfg.apply_stream(stream);
            cfg.apply_gp(gp);
            set(&mut cfg.evaluate.algorithms, algorithms);
            set(&mut cfg.evaluate.k, k);
            set(&mut cfg.evaluate.runs, runs);
            set(&mut cfg.evaluate.test_fraction, test_fraction);
            set(&mut cfg.evaluate.permute, permute);
            set(&mut cfg.evaluate.center_qoi, center_qoi);
            cmd_evaluate(cfg)
        }
        Command::Bounds {
            common,
            k,
            lambda,
            sigma_u,
            sigma_u2,
            n,
            t,
            f_opt,
            convention,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            cfg.apply_common(common);
            let b = &mut cfg.bounds;
            set(&mut b.k, k);
            set(&mut b.lambda, lambda);
            set(&mut b.sigma_u2, sigma_u.map(|s| s * s));
            set(&mut b.sigma_u2, sigma_u2);
            set(&mut b.n, n);
            set(&mut b.t, t);
            set(&mut b.f_opt, f_opt);
            set(&mut b.convention, convention);
            cmd_bounds(cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: usage: {}", one_line(&m));
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}
