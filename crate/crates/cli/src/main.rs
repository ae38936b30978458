mod scene_spec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use efie_core::datagen::{self, DatasetConfig, Recipe};
use efie_core::em::{assemble, render_field_grid, solve_currents, BasisLayout, PhysicsConstants, TransmitterConfig};
use efie_core::geometry::{DoiConfig, ImageRaster};
use efie_core::{validate, Error, Result};
use serde_json::{json, Value};

use crate::scene_spec::SceneSpec;

/// Exit status for a validation suite that ran but did not pass.
const EXIT_VALIDATION_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "efie", version, about = "2D method-of-moments scattering simulator and dataset factory")]
struct Cli {
    /// Print a single-line JSON summary on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RecipeArg {
    Mnist,
    Shapes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Cylinder,
    Residual,
    Noise,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset container.
    Generate {
        #[arg(long, value_enum)]
        recipe: RecipeArg,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        /// Number of receivers.
        #[arg(long, default_value_t = 64)]
        nr: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// MNIST IDX image file (falls back to $MNIST_IDX_PATH).
        #[arg(long)]
        mnist_path: Option<PathBuf>,
        /// Meters.
        #[arg(long, default_value_t = 0.125)]
        wavelength: f64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 256)]
        chunk_records: usize,
    },
    /// Render |E| over the domain for a scene.
    RenderField {
        /// JSON scene file, or `fig2` / `empty` for the built-in scenes.
        #[arg(long)]
        scene_spec: String,
        /// Grid nodes per side.
        #[arg(long, default_value_t = 201)]
        grid_res: usize,
        /// Side of the rendered square in wavelengths.
        #[arg(long, default_value_t = 10.0)]
        extent_wavelengths: f64,
        /// Meters.
        #[arg(long, default_value_t = 0.125)]
        wavelength: f64,
        /// Output prefix; writes `<out>.pgm` and `<out>.f64`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a container, optionally one record.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
        /// Record index.
        #[arg(long)]
        index: Option<u64>,
        /// With --index: write `<dump>-target.pgm` and `<dump>-e.pgm`.
        #[arg(long, requires = "index")]
        dump: Option<PathBuf>,
    },
    /// Check the solver against reference solutions.
    Validate {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Meters.
        #[arg(long, default_value_t = 0.125)]
        wavelength: f64,
    },
}

/// Result of a subcommand: text lines, a JSON summary, and whether the
/// command's own checks passed.
struct Outcome {
    text: Vec<String>,
    summary: Value,
    passed: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    log::info!("invocation: {cli:?}");
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let command = command_name(&cli.command);
    match run(cli.command) {
        Ok(outcome) => {
            if cli.json {
                let mut summary = outcome.summary;
                summary["command"] = json!(command);
                summary["ok"] = json!(outcome.passed);
                println!("{summary}");
            } else {
                for line in outcome.text {
                    println!("{line}");
                }
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION_FAILED)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            let code = if err.is_config() { EXIT_CONFIG } else { EXIT_IO };
            if cli.json {
                println!("{}", json!({"command": command, "ok": false, "error": err.to_string()}));
            }
            ExitCode::from(code)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate { .. } => "generate",
        Command::RenderField { .. } => "render-field",
        Command::Inspect { .. } => "inspect",
        Command::Validate { .. } => "validate",
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Generate { recipe, count, nr, seed, out, mnist_path, wavelength, test_fraction, chunk_records } => {
            let recipe = match recipe {
                RecipeArg::Mnist => Recipe::Mnist,
                RecipeArg::Shapes => Recipe::Shapes,
            };
            let mut config =
                DatasetConfig::new(recipe, wavelength).with_count(count).with_seed(seed).with_receivers(nr);
            config.test_fraction = test_fraction;
            config.chunk_records = chunk_records;
            let mnist = match recipe {
                Recipe::Mnist => Some(datagen::resolve_mnist_path(mnist_path.as_deref()).ok_or_else(|| {
                    Error::Config(format!("the mnist recipe needs --mnist-path or {}", datagen::MNIST_PATH_ENV))
                })?),
                Recipe::Shapes => mnist_path,
            };
            generate(&config, mnist.as_deref(), &out)
        }
        Command::RenderField { scene_spec, grid_res, extent_wavelengths, wavelength, out } => {
            render(&scene_spec, grid_res, extent_wavelengths, wavelength, &out)
        }
        Command::Inspect { input, index, dump } => inspect(&input, index, dump.as_deref()),
        Command::Validate { suite, wavelength } => run_suite(suite, wavelength),
    }
}

fn generate(config: &DatasetConfig, mnist: Option<&Path>, out: &Path) -> Result<Outcome> {
    log::info!("dataset config: {}", serde_json::to_string(config)?);
    if let Some(p) = mnist {
        log::info!("mnist source: {}", p.display());
    }
    let started = Instant::now();
    let summary = datagen::generate(config, mnist, out)?;
    let seconds = started.elapsed().as_secs_f64();
    Ok(Outcome {
        text: vec![
            format!("wrote {} records to {}", summary.records, out.display()),
            format!("skipped: {}", summary.skipped.len()),
            format!("test records: {}", summary.test_records),
            format!("mean point count: {:.1}", summary.mean_point_count),
            format!("elapsed: {seconds:.2} s"),
        ],
        summary: json!({
            "out": out,
            "records": summary.records,
            "skipped": summary.skipped,
            "test_records": summary.test_records,
            "mean_point_count": summary.mean_point_count,
            "seconds": seconds,
        }),
        passed: true,
    })
}

fn render(spec: &str, grid_res: usize, extent: f64, wavelength: f64, out: &Path) -> Result<Outcome> {
    if grid_res < 2 {
        return Err(Error::Config(format!("--grid-res must be at least 2, got {grid_res}")));
    }
    let scene_spec = match spec {
        "fig2" | "empty" => SceneSpec::builtin(spec)?,
        path => SceneSpec::load(Path::new(path))?,
    };
    let doi = DoiConfig::new(wavelength);
    doi.validate()?;
    log::info!(
        "render config: {}",
        json!({"scene": scene_spec, "grid_res": grid_res, "extent_wavelengths": extent, "doi": doi})
    );
    let scene = scene_spec.to_scene(doi)?;
    let tx = TransmitterConfig::standard(wavelength);
    let started = Instant::now();
    let op = assemble(BasisLayout::from_scene(&scene)?, PhysicsConstants::new(wavelength))?;
    let sol = solve_currents(&op, &tx)?;
    let field = render_field_grid(&op, &sol, &tx, grid_res, extent * wavelength)?;
    let seconds = started.elapsed().as_secs_f64();
    let pgm = with_suffix(out, "pgm");
    let raw = with_suffix(out, "f64");
    write(&pgm, &field.to_pgm())?;
    write(&raw, &field.to_raw_f64())?;
    let max = field.values.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        text: vec![
            format!("unknowns: {}", scene.len()),
            format!("grid: {grid_res}x{grid_res} over {extent} wavelengths"),
            format!("max |E|: {max:.6e}"),
            format!("wrote {} and {}", pgm.display(), raw.display()),
            format!("elapsed: {seconds:.2} s"),
        ],
        summary: json!({
            "unknowns": scene.len(),
            "grid_res": grid_res,
            "extent_wavelengths": extent,
            "max_field": max,
            "pgm": pgm,
            "raw": raw,
            "seconds": seconds,
        }),
        passed: true,
    })
}

fn inspect(input: &Path, index: Option<u64>, dump: Option<&Path>) -> Result<Outcome> {
    let dataset = datagen::read_dataset(input)?;
    let m = dataset.manifest();
    let mut text = vec![
        format!("count={}", m.record_count),
        format!("recipe={}", m.config.recipe),
        format!("nr={}", m.receivers.len()),
        format!("wavelength={}", m.wavelength),
        format!("image={}x{}", m.config.image_height, m.config.image_width),
        format!("test={}", m.test_count),
        format!("skipped={}", m.skipped.len()),
        format!("chunks={}", m.chunks.len()),
    ];
    let mut summary = json!({
        "count": m.record_count,
        "recipe": m.config.recipe,
        "nr": m.receivers.len(),
        "wavelength": m.wavelength,
        "image_height": m.config.image_height,
        "image_width": m.config.image_width,
        "test_count": m.test_count,
        "skipped": m.skipped.len(),
        "chunks": m.chunks.len(),
    });
    if let Some(t) = index {
        let record = dataset
            .get(t)?
            .ok_or_else(|| Error::Config(format!("record {t} is not in the container ({} records)", m.record_count)))?;
        let mags: Vec<f64> = record.e.iter().map(|v| v.norm()).collect();
        let mean = mags.iter().sum::<f64>() / mags.len().max(1) as f64;
        text.extend([
            format!("index={}", record.index),
            format!("split={:?}", record.split),
            format!("points={}", record.point_count),
            format!("target_pixels={}", record.target.count_set()),
            format!("mean_abs_e={mean:.6e}"),
        ]);
        summary["record"] = json!({
            "index": record.index,
            "seed": record.seed,
            "source_index": record.source_index,
            "split": record.split,
            "point_count": record.point_count,
            "shapes": record.shapes,
            "target_pixels": record.target.count_set(),
            "mean_abs_e": mean,
        });
        if let Some(prefix) = dump {
            let target = with_tag(prefix, "target");
            let field = with_tag(prefix, "e");
            write(&target, &record.target.to_pgm())?;
            let row = ImageRaster { height: 1, width: mags.len(), side: 1.0, values: mags };
            write(&field, &row.to_pgm())?;
            text.push(format!("wrote {} and {}", target.display(), field.display()));
            summary["dump"] = json!([target, field]);
        }
    }
    Ok(Outcome { text, summary, passed: true })
}

fn run_suite(suite: Suite, wavelength: f64) -> Result<Outcome> {
    let started = Instant::now();
    let (text, summary, passed) = match suite {
        Suite::Cylinder => {
            let r = validate::cylinder(wavelength, TransmitterConfig::standard(wavelength))?;
            let mut text: Vec<String> = r
                .cases
                .iter()
                .map(|c| {
                    format!(
                        "pitch=lambda/{:.0} unknowns={} relative_l2_error={:.4} scattered_error={:.4}",
                        wavelength / c.pitch,
                        c.unknowns,
                        c.total_error,
                        c.scattered_error
                    )
                })
                .collect();
            text.push(format!("tolerance={}", validate::CYLINDER_TOLERANCE));
            let passed = r.passed;
            (text, serde_json::to_value(&r)?, passed)
        }
        Suite::Residual => {
            let r = validate::residual(wavelength, 20, 0)?;
            let text = vec![
                format!("scenes={}", r.scenes.len()),
                format!("max_boundary_residual={:.3e}", r.max_collocation_residual),
                format!("max_midpoint_ratio={:.4}", r.max_midpoint_ratio),
            ];
            let passed = r.passed;
            (text, serde_json::to_value(&r)?, passed)
        }
        Suite::Noise => {
            let r = validate::noise(wavelength, 100_000, 1)?;
            let text = r
                .levels
                .iter()
                .map(|l| format!("target={} dB measured={:.4} dB", l.target_db, l.measured_db))
                .collect();
            let passed = r.passed;
            (text, serde_json::to_value(&r)?, passed)
        }
    };
    let mut text = text;
    text.push(format!("result={}", if passed { "pass" } else { "fail" }));
    text.push(format!("elapsed: {:.2} s", started.elapsed().as_secs_f64()));
    Ok(Outcome { text, summary: json!({"suite": format!("{suite:?}").to_lowercase(), "report": summary}), passed })
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn with_tag(prefix: &Path, tag: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!("-{tag}.pgm"));
    PathBuf::from(s)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io { path: path.into(), source: e })
}
