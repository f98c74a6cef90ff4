//! The `exal` command-line driver: `run-game`, `bench` and `export-images`.

pub mod config;

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use exal::data_io::{self, RawLabeledImages, SyntheticSpec};
use exal::game;
use exal::swarm::{self, benchmarks::TestFunction, Bounds, SwarmConfig, Variant};
use serde::Serialize;

use crate::config::{Config, Source};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<exal::Error> for CliError {
    fn from(e: exal::Error) -> Self {
        use exal::Error as E;
        match e {
            E::Config(msg) => CliError::Config(msg),
            E::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            E::Data(_) | E::Format { .. } => CliError::Data(e.to_string()),
            E::Io { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(write_err(path))
}

/// Keeps file names portable whatever the class names look like.
fn file_token(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn class_dirs(root: &Path) -> Result<Vec<String>, CliError> {
    let entries = fs::read_dir(root)
        .map_err(|e| CliError::Data(format!("cannot read image directory {}: {e}", root.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Data(format!("{}: {e}", root.display())))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(CliError::Data(format!("{} has no class subdirectories", root.display())));
    }
    Ok(names)
}

/// Loads the configured dataset as 8-bit images.
pub fn load_raw(cfg: &Config) -> Result<RawLabeledImages, CliError> {
    let d = &cfg.data;
    match d.source {
        Source::Synthetic => {
            let data = data_io::make_synthetic(&SyntheticSpec {
                per_class: d.synthetic_per_class,
                shape: (d.synthetic_height, d.synthetic_width),
                separation: d.synthetic_separation,
                noise: d.synthetic_noise,
                seed: cfg.seed,
            })?;
            Ok(RawLabeledImages::from_dataset(&data)?)
        }
        Source::Idx => Ok(data_io::load_idx(&d.images, &d.labels)?),
        Source::ImageDir => {
            let classes = if d.classes.is_empty() {
                class_dirs(&d.root)?
            } else {
                d.classes.clone()
            };
            Ok(data_io::load_image_dir(&d.root, &classes, d.image_size)?)
        }
    }
}

/// Triptychs for the first `k` images of `label`, under `dir`.
fn export_class(
    raw: &RawLabeledImages,
    label: u8,
    k: usize,
    a_star: &[f64],
    scale: f64,
    dir: &Path,
) -> Result<(), CliError> {
    let name = file_token(&raw.label_name(label));
    for (i, x) in data_io::first_of_class(raw, label, k).iter().enumerate() {
        let stem = dir.join(format!("{name}_{i}"));
        data_io::export_triptych(x, a_star, scale, raw.shape(), &stem)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct RunGameArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub pairs: Option<String>,
    pub scale: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Artifacts {
    pub results: PathBuf,
    pub perturbations: Vec<PathBuf>,
    pub images: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config: Config,
    pub seed: u64,
    pub artifacts: Artifacts,
    pub runtime_seconds: f64,
}

/// Applies command-line overrides on top of the config file.
fn resolve(args: &RunGameArgs) -> Result<Config, CliError> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(pairs) = &args.pairs {
        cfg.data.pairs = pairs.split(',').map(str::to_string).collect();
    }
    if let Some(scale) = args.scale {
        cfg.game.scale = scale;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

pub fn run_game(args: &RunGameArgs) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = resolve(args)?;
    let game_cfg = cfg.game()?;
    let pairs = cfg.pairs()?;
    let raw = load_raw(&cfg)?;
    let rows = game::run_experiment(&pairs, &raw, &cfg.pair_template(), &game_cfg)?;

    let out = &cfg.output.dir;
    let pert_dir = out.join("perturbations");
    let image_dir = out.join("images");
    create_dir(&pert_dir)?;
    create_dir(&image_dir)?;

    let results = out.join("results.csv");
    let file = fs::File::create(&results).map_err(write_err(&results))?;
    game::write_results_csv(&rows, cfg.output.record_runtime, io::BufWriter::new(file))?;

    let mut perturbations = Vec::with_capacity(rows.len());
    for row in &rows {
        let tag = format!("{}_{}", file_token(&row.positive), file_token(&row.negative));
        let path = pert_dir.join(format!("{tag}.exalp"));
        game::save_perturbation(&path, &row.result.a_star)?;
        perturbations.push(path);

        let dir = image_dir.join(&tag);
        create_dir(&dir)?;
        for name in [&row.positive, &row.negative] {
            let label = raw.resolve_label(name)?;
            export_class(&raw, label, cfg.output.images_per_class, &row.result.a_star, row.result.scale, &dir)?;
        }
    }

    let manifest = RunManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        artifacts: Artifacts {
            results,
            perturbations,
            images: image_dir,
        },
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(format!("cannot serialize manifest: {e}")))?;
    fs::write(&path, json + "\n").map_err(write_err(&path))?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct BenchArgs {
    pub function: String,
    pub dims: usize,
    pub seed: u64,
    pub particles: usize,
    pub iterations: usize,
}

impl Default for BenchArgs {
    fn default() -> Self {
        Self {
            function: "sphere".into(),
            dims: 2,
            seed: 0,
            particles: 30,
            iterations: 100,
        }
    }
}

/// Runs all three variants with the same seed and writes
/// `iteration,variant,fitness` rows of the global best.
pub fn bench(args: &BenchArgs, out: impl Write) -> Result<(), CliError> {
    let function: TestFunction = args.function.parse()?;
    if args.dims == 0 {
        return Err(CliError::Config("--dims must be at least 1".into()));
    }
    let bounds: Bounds = function.bounds(args.dims)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("cannot write benchmark table: {e}"));
    w.write_record(["iteration", "variant", "fitness"]).map_err(csv_err)?;
    for variant in Variant::ALL {
        let cfg = SwarmConfig {
            particles: args.particles,
            max_iterations: args.iterations,
            variant,
            seed: args.seed,
            ..SwarmConfig::default()
        };
        let optimum = swarm::optimize(|x: &[f64]| function.eval(x), &bounds, &cfg)?;
        for (t, f) in optimum.trace.iter().enumerate() {
            w.write_record([(t + 1).to_string(), variant.name().to_string(), f.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("cannot write benchmark table: {e}")))
}

#[derive(Clone, Debug)]
pub struct ExportArgs {
    pub perturbation: PathBuf,
    pub config: PathBuf,
    pub scale: f64,
    pub out: PathBuf,
    pub per_class: usize,
}

/// Writes triptychs for the first `per_class` images of every class.
pub fn export_images(args: &ExportArgs) -> Result<Vec<u8>, CliError> {
    if !(args.scale.is_finite() && args.scale >= 0.0) {
        return Err(CliError::Config(format!(
            "--scale must be finite and non-negative, got {}",
            args.scale
        )));
    }
    let cfg = Config::load(&args.config)?;
    let raw = load_raw(&cfg)?;
    let a_star = game::load_perturbation(&args.perturbation).map_err(|e| match e {
        exal::Error::Io { .. } => CliError::Data(e.to_string()),
        other => other.into(),
    })?;
    let (h, w) = raw.shape();
    if a_star.len() != h * w {
        return Err(CliError::Config(format!(
            "perturbation {} has {} values but the images have {} pixels ({h}x{w})",
            args.perturbation.display(),
            a_star.len(),
            h * w
        )));
    }
    create_dir(&args.out)?;
    let labels: BTreeSet<u8> = raw.labels().iter().copied().collect();
    for &label in &labels {
        export_class(&raw, label, args.per_class, &a_star, args.scale, &args.out)?;
    }
    Ok(labels.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(exal::Error::Config("x".into())).exit_code(), 2);
        let dim = exal::Error::DimensionMismatch {
            what: "w",
            expected: 1,
            found: 2,
        };
        assert_eq!(CliError::from(dim).exit_code(), 2);
        let data = exal::Error::Data(exal::DataError::CountMismatch { images: 1, labels: 2 });
        assert_eq!(CliError::from(data).exit_code(), 3);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 1);
    }

    #[test]
    fn tokens_are_path_safe() {
        assert_eq!(file_token("VBA"), "VBA");
        assert_eq!(file_token("a/b c"), "a_b_c");
    }

    #[test]
    fn bench_rows_per_variant() {
        let args = BenchArgs {
            function: "rastrigin".into(),
            iterations: 7,
            particles: 5,
            ..BenchArgs::default()
        };
        let mut out = Vec::new();
        bench(&args, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,variant,fitness");
        assert_eq!(lines.len(), 1 + 3 * 7);
        for v in ["pso", "mpso", "empso"] {
            assert_eq!(lines.iter().filter(|l| l.split(',').nth(1) == Some(v)).count(), 7);
        }
    }

    #[test]
    fn bench_unknown_function_is_config_error() {
        let args = BenchArgs {
            function: "ackley".into(),
            ..BenchArgs::default()
        };
        assert_eq!(bench(&args, io::sink()).unwrap_err().exit_code(), 2);
    }

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("c.toml");
        fs::write(&path, body).unwrap();
        path
    }

    const TINY: &str = "seed = 42\n[data]\nsource = \"synthetic\"\nsamples_per_class = 40\n\
        synthetic_per_class = 40\n[swarm]\nparticles = 3\niterations = 2\n[train]\nepochs = 1\n";

    #[test]
    fn missing_dataset_is_a_data_error_naming_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), "[data]\nsource = \"idx\"\nimages = \"nowhere/img.gz\"\n");
        let err = run_game(&RunGameArgs {
            config,
            ..RunGameArgs::default()
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("nowhere/img.gz"), "{err}");
    }

    #[test]
    fn unknown_key_and_missing_config_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), "[swarm]\nparticels = 3\n");
        let err = run_game(&RunGameArgs {
            config,
            ..RunGameArgs::default()
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("particels"));
        let missing = RunGameArgs {
            config: dir.path().join("absent.toml"),
            ..RunGameArgs::default()
        };
        assert_eq!(run_game(&missing).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn run_then_export() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), TINY);
        let manifest = run_game(&RunGameArgs {
            config: config.clone(),
            seed: Some(7),
            ..RunGameArgs::default()
        })
        .unwrap();
        assert_eq!(manifest.seed, 7);
        assert!(manifest.artifacts.results.exists());
        assert!(manifest.artifacts.images.is_dir());
        let table = fs::read_to_string(&manifest.artifacts.results).unwrap();
        assert_eq!(table.lines().count(), 2);
        assert!(table.lines().nth(1).unwrap().starts_with("1,0,1.0,"));
        let snapshot = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
        assert!(!snapshot.contains("null"));

        let pert = manifest.artifacts.perturbations[0].clone();
        let export = |scale: f64, out: &str| {
            export_images(&ExportArgs {
                perturbation: pert.clone(),
                config: config.clone(),
                scale,
                out: dir.path().join(out),
                per_class: 1,
            })
        };
        assert_eq!(export(0.0, "zero").unwrap(), vec![0, 1]);
        for label in ["0", "1"] {
            let read = |suffix: &str| fs::read(dir.path().join(format!("zero/{label}_0_{suffix}.pgm"))).unwrap();
            assert_eq!(read("original"), read("perturbed"));
        }

        let mut other = TINY.replace("[data]", "[data]\nsynthetic_height = 12");
        other.push('\n');
        let small = dir.path().join("small.toml");
        fs::write(&small, other).unwrap();
        let err = export_images(&ExportArgs {
            perturbation: pert,
            config: small,
            scale: 1.0,
            out: dir.path().join("bad"),
            per_class: 1,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("256") && msg.contains("192"), "{msg}");
    }
}
