use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use stationfill::eval::{run_benchmark, synth_with, EvalConfig, Pattern, SynthConfig};
use stationfill::geo::Ranking;
use stationfill::ingest::{
    detect_gaps, format_timestamp, parse_observations, parse_station_meta, validate, write_observations,
    write_station_meta, Bounds,
};
use stationfill::pipeline::{check_stations, run_pipeline, FillOptions, PipelineConfig};
use stationfill::plot::{cells_from_json, render_svg};
use stationfill::{Cadence, MethodTag, Variable, WeatherData};

const EXIT_RESIDUAL: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "stationfill", version, about = "Fill missing weather-station observations from neighbouring stations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count expected, present and missing records; prints JSON.
    Validate {
        observations: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, default_value = "15m")]
        cadence: Cadence,
        /// Override a plausibility range, e.g. temperature=-35.2:60.0 (repeatable).
        #[arg(long)]
        bounds: Vec<String>,
    },
    /// List gaps as CSV.
    Gaps {
        observations: PathBuf,
        #[arg(long)]
        station: Option<String>,
        #[arg(long)]
        variable: Option<Variable>,
        #[arg(long, default_value = "15m")]
        cadence: Cadence,
    },
    /// Fill gaps and write the filled dataset plus a provenance sidecar.
    Fill {
        observations: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        /// nr, gc, nrgc, nn or auto.
        #[arg(long, default_value = "auto")]
        method: String,
        #[arg(long, default_value_t = 2)]
        neighbours: usize,
        #[arg(long, default_value = "geometric")]
        rank: Ranking,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        provenance: PathBuf,
        /// Where to write the run report; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "15m")]
        cadence: Cadence,
        #[arg(long)]
        bounds: Vec<String>,
        /// Treat out-of-bounds values as missing and fill them.
        #[arg(long)]
        drop_out_of_bounds: bool,
        /// Seed of the benchmark behind `--method auto`.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Mask known values and score each method's RMSE.
    Bench {
        observations: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.10,0.15,0.20,0.25")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "nr,gc,nrgc,nn")]
        methods: Vec<MethodTag>,
        #[arg(long, default_value = "point")]
        pattern: Pattern,
        #[arg(long, default_value_t = 2)]
        neighbours: usize,
        #[arg(long, default_value = "geometric")]
        rank: Ranking,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Worker threads; the output does not depend on this.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "15m")]
        cadence: Cadence,
    },
    /// Generate a synthetic network of complete series.
    Synth {
        #[arg(long, default_value_t = 12)]
        stations: usize,
        #[arg(long, default_value_t = 365)]
        days: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// First day, YYYY-MM-DD.
        #[arg(long, default_value = "2014-01-01")]
        start: NaiveDate,
        #[arg(long, default_value = "15m")]
        cadence: Cadence,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        meta_out: PathBuf,
    },
    /// Draw a benchmark report as SVG bar charts.
    Plot {
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which here means residual gaps.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate {
            observations,
            meta,
            cadence,
            bounds,
        } => {
            let bounds = parse_bounds(&bounds)?;
            let data = load(&observations, &meta, cadence)?;
            emit(&validate(&data.series, &bounds).to_json())?;
        }
        Command::Gaps {
            observations,
            station,
            variable,
            cadence,
        } => {
            let series = parse_observations::<f64>(&observations, cadence)?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(io::stdout().lock());
            w.write_record(["station_id", "variable", "first_slot", "start", "end", "length", "class"])?;
            for s in &series {
                if station.as_deref().is_some_and(|id| id != s.station_id())
                    || variable.is_some_and(|v| v != s.variable())
                {
                    continue;
                }
                for g in detect_gaps(s) {
                    w.write_record([
                        s.station_id().to_string(),
                        s.variable().to_string(),
                        g.first_slot.to_string(),
                        format_timestamp(s.timestamp(g.first_slot)),
                        format_timestamp(s.timestamp(g.first_slot + g.length - 1)),
                        g.length.to_string(),
                        g.class.as_str().to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
        Command::Fill {
            observations,
            meta,
            method,
            neighbours,
            rank,
            out,
            provenance,
            report,
            cadence,
            bounds,
            drop_out_of_bounds,
            seed,
        } => {
            let long_gap_method = match method.as_str() {
                "auto" => None,
                m => Some(m.parse::<MethodTag>()?),
            };
            let config = PipelineConfig {
                observations,
                stations: meta,
                cadence,
                fill: FillOptions {
                    neighbour_k: neighbours,
                    long_gap_method,
                    ranking: rank,
                    bounds: parse_bounds(&bounds)?,
                    treat_out_of_bounds_as_missing: drop_out_of_bounds,
                    seed,
                    ..FillOptions::default()
                },
                output: out,
                provenance,
            };
            let result = run_pipeline(&config)?;
            let json = result.to_json();
            match report {
                Some(path) => write_file(&path, |w| Ok(writeln!(w, "{json}")?))?,
                None => emit(&json)?,
            }
            if !result.clean {
                eprintln!("{} gap(s) could not be filled", result.residual_gaps.len());
                return Ok(ExitCode::from(EXIT_RESIDUAL));
            }
        }
        Command::Bench {
            observations,
            meta,
            levels,
            seed,
            methods,
            pattern,
            neighbours,
            rank,
            out,
            csv,
            threads,
            cadence,
        } => {
            let config = EvalConfig {
                levels,
                seed,
                methods,
                pattern,
                neighbour_k: neighbours,
                ranking: rank,
                ..EvalConfig::default()
            };
            config.validate()?;
            let data = load(&observations, &meta, cadence)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .context("building thread pool")?;
            let report = pool.install(|| run_benchmark(&data, &config))?;
            let json = report.to_json();
            write_file(&out, |w| Ok(writeln!(w, "{json}")?))?;
            if let Some(path) = csv {
                write_file(&path, |w| Ok(report.write_csv(w)?))?;
            }
        }
        Command::Synth {
            stations,
            days,
            seed,
            start,
            cadence,
            noise,
            out,
            meta_out,
        } => {
            if days == 0 {
                bail!("--days must be at least 1");
            }
            let data: WeatherData = synth_with(&SynthConfig {
                n_stations: stations,
                days,
                seed,
                start,
                cadence,
                noise_amplitude: noise,
                ..SynthConfig::default()
            })?;
            write_file(&out, |w| Ok(write_observations(&data.series, w)?))?;
            write_file(&meta_out, |w| Ok(write_station_meta(&data.stations, w)?))?;
        }
        Command::Plot { report, out } => {
            let json = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let svg = render_svg(&cells_from_json(&json)?)?;
            write_file(&out, |w| Ok(w.write_all(svg.as_bytes())?))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Prints to stdout; a closed pipe downstream is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn parse_bounds(overrides: &[String]) -> Result<Bounds> {
    let mut bounds = Bounds::default();
    for o in overrides {
        let (variable, lo, hi) = Bounds::parse_override(o)?;
        bounds.set(variable, lo, hi)?;
    }
    Ok(bounds)
}

fn load(observations: &Path, meta: &Path, cadence: Cadence) -> Result<WeatherData> {
    let stations = parse_station_meta(meta)?;
    let series = parse_observations(observations, cadence)?;
    let data = WeatherData { stations, series };
    check_stations(&data)?;
    Ok(data)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
