//! Command-line front end: synthetic scene generation, training,
//! evaluation, parameter sweeps, and cross-validation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hsi_elm::data_model::{
    load_cube, load_labels, minmax_scale, split_per_class, write_cube,
    write_labels, HsiCube, SampleSet, SplitSpec,
};
use hsi_elm::metrics::{aa, confusion, kappa, oa, per_class_accuracy, ConfusionMatrix};
use hsi_elm::model_io::{load_model, save_model};
use hsi_elm::pipeline::{cross_validate, predict, train, ClassifierSpec, TrainedModel, Variant};
use hsi_elm::solver::SolverConfig;
use hsi_elm::synth::{generate_scene, SynthConfig};
use hsi_elm::wcf::WcfConfig;
use hsi_elm::{Error, Result};

#[derive(Parser)]
#[command(name = "hsi-elm", about = "Spectral-spatial hyperspectral classification with sparse logistic ELMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum VariantArg {
    AsmlBelm,
    AsmlNlelm,
    AsmlKelm,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::AsmlBelm => Variant::AsmlBelm,
            VariantArg::AsmlNlelm => Variant::AsmlNlelm,
            VariantArg::AsmlKelm => Variant::AsmlKelm,
        }
    }
}

/// Overrides shared by the compute subcommands.
#[derive(Debug, clap::Args)]
struct Overrides {
    /// Run configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Root random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Classifier variant.
    #[arg(long)]
    variant: Option<VariantArg>,
    /// Prior exponent: lambda = 2^a.
    #[arg(long)]
    a: Option<f64>,
    /// Hidden neurons.
    #[arg(long = "L")]
    neurons: Option<usize>,
    /// Spatial window width (odd).
    #[arg(long)]
    window: Option<usize>,
    /// Spectral/spatial balance.
    #[arg(long)]
    mu: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled scene.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        rows: usize,
        #[arg(long, default_value_t = 16)]
        cols: usize,
        #[arg(long, default_value_t = 8)]
        bands: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0.25)]
        separation: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a classifier and write model, trace, and manifest.
    Train(Overrides),
    /// Score the held-out split of a dataset with a saved model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train/evaluate across one parameter axis.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Parameter to vary.
        #[arg(long, value_parser = ["a", "L", "window"])]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// 3-fold cross-validation over the C / sigma grids.
    Crossval(Overrides),
}

/// Structured run configuration; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    cube: PathBuf,
    labels: PathBuf,
    variant: Variant,
    #[serde(default)]
    wcf: bool,
    /// lambda = 2^a; defaulted per variant when absent.
    a: Option<f64>,
    neurons: Option<usize>,
    c: Option<f64>,
    sigma_w: Option<f64>,
    sigma_s: Option<f64>,
    window: Option<usize>,
    mu: Option<f64>,
    z: Option<f64>,
    split: SplitSpec,
    #[serde(default)]
    seed: u64,
    out_dir: Option<PathBuf>,
    max_iters: Option<usize>,
    c_grid: Option<Vec<f64>>,
    sigma_grid: Option<Vec<f64>>,
    folds: Option<usize>,
}

/// Fully resolved parameters recorded in the manifest.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    spec: &'a ClassifierSpec,
    split: SplitSpec,
    seed: u64,
    lambda: f64,
    wall_seconds: f64,
}

fn default_a(variant: Variant, wcf: bool) -> f64 {
    if wcf {
        -20.0
    } else {
        match variant {
            Variant::AsmlBelm | Variant::AsmlNlelm => -10.0,
            Variant::AsmlKelm => -17.0,
        }
    }
}

fn default_neurons(variant: Variant) -> usize {
    match variant {
        Variant::AsmlBelm => 450,
        Variant::AsmlNlelm | Variant::AsmlKelm => 1000,
    }
}

struct Resolved {
    config: RunConfig,
    spec: ClassifierSpec,
    out_dir: PathBuf,
}

fn resolve(ov: &Overrides) -> Result<Resolved> {
    let text = fs::read_to_string(&ov.config)
        .map_err(|e| Error::Config(format!("{}: {e}", ov.config.display())))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(seed) = ov.seed {
        config.seed = seed;
    }
    if let Some(v) = ov.variant {
        config.variant = v.into();
    }
    if let Some(a) = ov.a {
        config.a = Some(a);
    }
    if let Some(l) = ov.neurons {
        config.neurons = Some(l);
    }
    if let Some(w) = ov.window {
        config.window = Some(w);
    }
    if let Some(mu) = ov.mu {
        config.mu = Some(mu);
    }
    let out_dir = ov
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory (set out_dir or --out)".into()))?;

    let a = config.a.unwrap_or_else(|| default_a(config.variant, config.wcf));
    let lambda = 2f64.powf(a);
    let mut solver = SolverConfig::new(lambda);
    if let Some(iters) = config.max_iters {
        solver.max_iters = iters;
    }
    let wcf_cfg = WcfConfig {
        window: config.window.unwrap_or(13),
        z: config.z.unwrap_or(0.2),
        mu: config.mu.unwrap_or(0.1),
        combine_rule: config.variant.combine_rule(),
    };
    let spec = ClassifierSpec {
        variant: config.variant,
        wcf: config.wcf,
        neurons: config.neurons.unwrap_or_else(|| default_neurons(config.variant)),
        c: config.c.unwrap_or(16.0),
        sigma_w: config.sigma_w.unwrap_or(1.0),
        sigma_s: config.sigma_s.unwrap_or(1.0),
        solver,
        wcf_cfg,
        seed: config.seed,
    };
    Ok(Resolved { config, spec, out_dir })
}

fn load_dataset(config: &RunConfig) -> Result<(HsiCube, hsi_elm::data_model::LabelGrid)> {
    let cube = load_cube(&config.cube)?;
    let labels = load_labels(&config.labels)?;
    Ok((cube, labels))
}

fn cmd_synth(out: &Path, cfg: &SynthConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    let (cube, grid) = generate_scene(cfg)?;
    write_cube(&cube, &out.join("cube.raw"))?;
    write_labels(&grid, &out.join("labels.raw"))?;
    fs::write(out.join("synth.json"), serde_json::to_string_pretty(cfg)?)?;
    println!(
        "wrote {}x{}x{} scene with {} classes to {}",
        cfg.rows,
        cfg.cols,
        cfg.bands,
        cfg.classes,
        out.display()
    );
    Ok(())
}

fn cmd_train(ov: &Overrides) -> Result<()> {
    let started = Instant::now();
    let r = resolve(ov)?;
    let (cube, grid) = load_dataset(&r.config)?;
    let (scaled, scale) = minmax_scale(&cube);
    let (train_set, _) = split_per_class(&grid, &scaled, r.config.split, r.config.seed)?;
    let (model, trace) = train(&r.spec, &train_set, Some(&scaled), scale)?;
    fs::create_dir_all(&r.out_dir)?;
    save_model(&model, &r.out_dir.join("model.bin"))?;
    fs::write(r.out_dir.join("trace.csv"), trace.to_csv())?;
    let manifest = Manifest {
        command: "train",
        spec: &r.spec,
        split: r.config.split,
        seed: r.config.seed,
        lambda: r.spec.solver.lambda,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    fs::write(
        r.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("model written to {}", r.out_dir.join("model.bin").display());
    Ok(())
}

/// Fixed 17-color palette for class maps; index 0 (unlabeled) is black.
const PALETTE: [[u8; 3]; 17] = [
    [0, 0, 0],
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [128, 0, 0],
    [0, 128, 0],
    [0, 0, 128],
    [128, 128, 0],
    [128, 0, 128],
    [0, 128, 128],
    [255, 128, 0],
    [128, 255, 0],
    [0, 128, 255],
    [192, 192, 192],
];

fn write_class_map(path: &Path, rows: usize, cols: usize, labels: &[usize]) -> Result<()> {
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    for &l in labels {
        let color = PALETTE[l % PALETTE.len()];
        out.extend_from_slice(&color);
    }
    fs::write(path, out)?;
    Ok(())
}

fn metrics_csv(cm: &ConfusionMatrix) -> Result<String> {
    let mut out = String::new();
    for (i, acc) in per_class_accuracy(cm)?.iter().enumerate() {
        out.push_str(&format!("{},{:.2}\n", i + 1, 100.0 * acc));
    }
    out.push_str(&format!("OA,{:.2}\n", 100.0 * oa(cm)?));
    out.push_str(&format!("AA,{:.2}\n", 100.0 * aa(cm)?));
    out.push_str(&format!("k,{:.4}\n", kappa(cm)?));
    Ok(out)
}

fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::new();
    for t in 0..cm.num_classes {
        let row: Vec<String> = (0..cm.num_classes).map(|p| cm.count(t, p).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn evaluate_model(
    model: &TrainedModel,
    r: &Resolved,
    cube: &HsiCube,
    grid: &hsi_elm::data_model::LabelGrid,
) -> Result<(ConfusionMatrix, Vec<usize>)> {
    let scaled = rescale_with(cube, model.scale);
    let (_, test_set) = split_per_class(grid, &scaled, r.config.split, r.config.seed)?;
    let (pred, _) = predict(model, &test_set, Some(&scaled))?;
    let cm = confusion(&test_set.labels, &pred, model.num_classes)?;

    // Full-scene class map.
    let all = all_pixels(&scaled);
    let (map_pred, _) = predict(model, &all, Some(&scaled))?;
    Ok((cm, map_pred))
}

fn rescale_with(cube: &HsiCube, scale: hsi_elm::data_model::ScaleParams) -> HsiCube {
    let data = cube.data().iter().map(|&v| scale.apply(v)).collect();
    HsiCube::new(cube.rows, cube.cols, cube.bands, data).expect("shape preserved")
}

fn all_pixels(cube: &HsiCube) -> SampleSet {
    let mut coords = Vec::with_capacity(cube.rows * cube.cols);
    for r in 0..cube.rows {
        for c in 0..cube.cols {
            coords.push((r, c));
        }
    }
    let mut features = nalgebra::DMatrix::zeros(cube.bands, coords.len());
    for (i, &(r, c)) in coords.iter().enumerate() {
        cube.spectrum_into(r, c, features.column_mut(i).as_mut_slice());
    }
    SampleSet {
        features,
        labels: vec![1; coords.len()],
        coords,
    }
}

fn cmd_evaluate(model_path: &Path, ov: &Overrides) -> Result<()> {
    let r = resolve(ov)?;
    let model = load_model(model_path)?;
    let (cube, grid) = load_dataset(&r.config)?;
    let (cm, map_pred) = evaluate_model(&model, &r, &cube, &grid)?;
    fs::create_dir_all(&r.out_dir)?;
    fs::write(r.out_dir.join("metrics.csv"), metrics_csv(&cm)?)?;
    fs::write(r.out_dir.join("confusion.csv"), confusion_csv(&cm))?;
    write_class_map(&r.out_dir.join("map.ppm"), cube.rows, cube.cols, &map_pred)?;
    println!("OA {:.2}", 100.0 * oa(&cm)?);
    Ok(())
}

fn cmd_sweep(ov: &Overrides, axis: &str, values: &[f64]) -> Result<()> {
    let base = resolve(ov)?;
    let (cube, grid) = load_dataset(&base.config)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut rows = Vec::new();
    for &value in &sorted {
        let mut spec = base.spec.clone();
        match axis {
            "a" => spec.solver = SolverConfig::new(2f64.powf(value)),
            "L" => spec.neurons = value as usize,
            "window" => spec.wcf_cfg.window = value as usize,
            other => return Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
        if let Some(iters) = base.config.max_iters {
            spec.solver.max_iters = iters;
        }
        let (scaled, scale) = minmax_scale(&cube);
        let (train_set, test_set) =
            split_per_class(&grid, &scaled, base.config.split, base.config.seed)?;
        let (model, _) = train(&spec, &train_set, Some(&scaled), scale)?;
        let (pred, _) = predict(&model, &test_set, Some(&scaled))?;
        let cm = confusion(&test_set.labels, &pred, model.num_classes)?;
        rows.push(format!("{},{:.4}\n", value, 100.0 * oa(&cm)?));
    }
    fs::create_dir_all(&base.out_dir)?;
    let mut csv = String::from("value,oa\n");
    for row in rows {
        csv.push_str(&row);
    }
    fs::write(base.out_dir.join("sweep.csv"), csv)?;
    println!("sweep over {axis} written to {}", base.out_dir.join("sweep.csv").display());
    Ok(())
}

fn default_c_grid() -> Vec<f64> {
    (1..=15).map(|p| 2f64.powi(p)).collect()
}

fn default_sigma_grid() -> Vec<f64> {
    (-6..=1).map(|q| 2f64.powi(q)).collect()
}

fn cmd_crossval(ov: &Overrides) -> Result<()> {
    let r = resolve(ov)?;
    let (cube, grid) = load_dataset(&r.config)?;
    let (scaled, scale) = minmax_scale(&cube);
    let (train_set, _) = split_per_class(&grid, &scaled, r.config.split, r.config.seed)?;
    let c_grid = r.config.c_grid.clone().unwrap_or_else(default_c_grid);
    let sigma_grid = r.config.sigma_grid.clone().unwrap_or_else(default_sigma_grid);
    let folds = r.config.folds.unwrap_or(3);
    let cv = cross_validate(&r.spec, &train_set, Some(&scaled), scale, &c_grid, &sigma_grid, folds)?;
    fs::create_dir_all(&r.out_dir)?;
    let mut csv = String::from("c,sigma,mean_oa\n");
    for p in &cv.points {
        csv.push_str(&format!("{},{},{:.6}\n", p.c, p.sigma, p.mean_oa));
    }
    fs::write(r.out_dir.join("cv.csv"), csv)?;
    println!("best C = {}, sigma = {}", cv.best_c, cv.best_sigma);
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth {
            out,
            rows,
            cols,
            bands,
            classes,
            separation,
            noise,
            seed,
        } => cmd_synth(
            out,
            &SynthConfig {
                rows: *rows,
                cols: *cols,
                bands: *bands,
                classes: *classes,
                separation: *separation,
                noise: *noise,
                seed: *seed,
            },
        ),
        Command::Train(ov) => cmd_train(ov),
        Command::Evaluate { model, overrides } => cmd_evaluate(model, overrides),
        Command::Sweep { overrides, axis, values } => cmd_sweep(overrides, axis, values),
        Command::Crossval(ov) => cmd_crossval(ov),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
