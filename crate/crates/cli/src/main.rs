use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use sedge_core::arch::load_checkpoint;
use sedge_core::bench::{pr_csv, thin};
use sedge_core::labels::{
    seg_to_eval_boundaries, Background, DatasetManifest, LabelSpace, ProbMaps, SegMap, SyntheticConfig,
};
use sedge_core::pnm::{read_pgm, read_ppm, write_ppm};
use sedge_core::run::{
    evaluate_predictions, gen_data, load_training_set, make_labels, predict_image, predict_manifest,
    read_prediction, train, write_prediction, RunConfig,
};
use sedge_core::viz::{cityscapes_hue_table, encode_hsv, per_class_gray, tp_fp_overlay, HueTable};
use sedge_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sedge", version, about = "Category-aware semantic edge detection")]
struct Cli {
    /// Worker threads. Computation is single-threaded; values above 1 are accepted and ignored.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic overlapping-shapes dataset.
    GenData(GenDataArgs),
    /// Export training and evaluation edge labels for a dataset.
    MakeLabels(MakeLabelsArgs),
    /// Train a network and write checkpoints and a training log.
    Train(TrainArgs),
    /// Write edge probability files for a set of images.
    Predict(PredictArgs),
    /// Score predictions: MF at the optimal dataset scale and AP per class.
    Eval(EvalArgs),
    /// Render predictions or ground truth as images.
    Viz(VizArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 50)]
    test: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    shapes: usize,
    #[arg(long, default_value_t = 12.0)]
    noise: f64,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackgroundArg {
    Excluded,
    AsClass,
}

impl From<BackgroundArg> for Background {
    fn from(b: BackgroundArg) -> Self {
        match b {
            BackgroundArg::Excluded => Background::Excluded,
            BackgroundArg::AsClass => Background::AsClass,
        }
    }
}

#[derive(Args)]
struct MakeLabelsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    radius: usize,
    #[arg(long, value_enum, default_value = "excluded")]
    background: BackgroundArg,
}

/// Flags that override fields of the run configuration.
#[derive(Args, Default)]
struct ConfigFlags {
    /// JSON run configuration; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    head: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    background: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    iter_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    step_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Crop as HEIGHTxWIDTH.
    #[arg(long)]
    crop: Option<String>,
    #[arg(long)]
    no_mirror: bool,
    #[arg(long)]
    label_radius: Option<usize>,
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    /// Matching tolerance as a fraction of the image diagonal.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Evaluate at half resolution.
    #[arg(long)]
    halve: bool,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dataset whose images are predicted.
    #[arg(long, conflicts_with = "images")]
    manifest: Option<PathBuf>,
    /// Individual PPM images.
    #[arg(long, num_args = 1..)]
    images: Vec<PathBuf>,
    /// Expected number of classes; must match the checkpoint.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of `<stem>.sedp` files.
    #[arg(long)]
    predictions: PathBuf,
    /// Ground-truth dataset.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for report.json, report.txt and optionally pr.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the raw PR points as CSV.
    #[arg(long)]
    csv: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VizMode {
    Hsv,
    Overlay,
    PerClassGray,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HueChoice {
    /// The 19-class Cityscapes table when K = 19, evenly spaced hues otherwise.
    Auto,
    Cityscapes,
    Even,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long, value_enum)]
    mode: VizMode,
    /// Prediction file to render.
    #[arg(long)]
    prediction: Option<PathBuf>,
    /// Segmentation (PGM) whose evaluation boundaries serve as ground truth.
    #[arg(long)]
    seg: Option<PathBuf>,
    /// Number of classes when only a segmentation is given.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "excluded")]
    background: BackgroundArg,
    #[arg(long, value_enum, default_value = "auto")]
    hues: HueChoice,
    /// Keep only the two strongest responses at or above 0.5 per pixel.
    #[arg(long)]
    top2: bool,
    /// Binarization threshold of predictions in overlay mode.
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sedge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::config("--threads must be at least 1"));
    }
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::MakeLabels(a) => cmd_make_labels(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Viz(a) => cmd_viz(a),
    }
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        seed: a.seed,
        height: a.height,
        width: a.width,
        k: a.k,
        shapes_per_image: a.shapes,
        noise_sigma: a.noise,
    };
    let (train, test) = gen_data(&a.out, &cfg, a.train, a.test, a.force)?;
    println!(
        "wrote {} training and {} test images to {}",
        train.pairs.len(),
        test.pairs.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_make_labels(a: MakeLabelsArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let space = LabelSpace::new(manifest.k, a.background.into());
    let files = make_labels(&manifest, &a.out, a.radius, space)?;
    println!("wrote {} label files to {}", files.len(), a.out.display());
    Ok(())
}

fn parse_crop(s: &str) -> Result<[usize; 2]> {
    let bad = || Error::config(format!("crop '{s}' is not HEIGHTxWIDTH"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    Ok([h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?])
}

/// Config file (if any) overlaid with explicit flags.
fn resolve_config(flags: &ConfigFlags, seed: u64) -> Result<RunConfig> {
    let mut obj = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Error::config(format!("{}: expected a JSON object", path.display()))),
                Err(e) => return Err(Error::config(format!("{}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    let mut set = |key: &str, v: Value| {
        obj.insert(key.to_string(), v);
    };
    set("seed", json!(seed));
    let f = flags;
    if let Some(v) = &f.variant {
        set("variant", json!(v));
    }
    if let Some(v) = &f.head {
        set("head", json!(v));
    }
    if let Some(v) = f.k {
        set("k", json!(v));
    }
    if let Some(v) = &f.background {
        set("background", json!(v));
    }
    if let Some(v) = f.lr {
        set("lr", json!(v));
    }
    if let Some(v) = f.momentum {
        set("momentum", json!(v));
    }
    if let Some(v) = f.weight_decay {
        set("weight_decay", json!(v));
    }
    if let Some(v) = f.iter_size {
        set("iter_size", json!(v));
    }
    if let Some(v) = f.max_steps {
        set("max_steps", json!(v));
    }
    if let Some(v) = f.step_size {
        set("step_size", json!(v));
    }
    if let Some(v) = f.gamma {
        set("gamma", json!(v));
    }
    if let Some(v) = &f.crop {
        set("crop", json!(parse_crop(v)?));
    }
    if f.no_mirror {
        set("mirror", json!(false));
    }
    if let Some(v) = f.label_radius {
        set("label_radius", json!(v));
    }
    if let Some(v) = &f.train_manifest {
        set("train_manifest", json!(v));
    }
    if let Some(v) = &f.test_manifest {
        set("test_manifest", json!(v));
    }
    if let Some(v) = f.tolerance {
        set("tolerance", json!(v));
    }
    if f.halve {
        set("halve", json!(true));
    }
    if let Some(v) = f.checkpoint_every {
        set("checkpoint_every", json!(v));
    }
    let cfg: RunConfig =
        serde_json::from_value(Value::Object(obj)).map_err(|e| Error::config(format!("run configuration: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a.flags, a.seed)?;
    let manifest = DatasetManifest::load(cfg.train_manifest()?)?;
    if let Some(test) = &cfg.test_manifest {
        if !test.exists() {
            return Err(Error::config(format!("test manifest {} does not exist", test.display())));
        }
    }
    let data = load_training_set(&manifest, &cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let cfg_path = a.out.join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(|e| Error::io(&cfg_path, e))?;
    let outcome = train(&cfg, &data, Some(&a.out))?;
    if let Some(last) = outcome.log.last() {
        println!("step {}: loss {:.3}", last.step, last.total);
    }
    println!("checkpoint written to {}", a.out.join("model.sedw").display());
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let net = load_checkpoint(&a.checkpoint)?;
    if let Some(k) = a.k {
        if k != net.k {
            return Err(Error::config(format!("checkpoint has k = {} but k = {k} was requested", net.k)));
        }
    }
    let written = match &a.manifest {
        Some(m) => predict_manifest(&net, &DatasetManifest::load(m)?, &a.out)?,
        None => {
            if a.images.is_empty() {
                return Err(Error::config("give --manifest or --images"));
            }
            std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            a.images
                .iter()
                .map(|p| {
                    let maps = predict_image(&net, &read_ppm(p)?)?;
                    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    let path = a.out.join(format!("{stem}.sedp"));
                    write_prediction(&path, &maps)?;
                    Ok(path)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    println!("wrote {} prediction files to {}", written.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mut flags = a.flags;
    if flags.k.is_none() && flags.config.is_none() {
        flags.k = Some(manifest.k);
    }
    let cfg = resolve_config(&flags, a.seed)?;
    let echo = serde_json::to_value(&cfg).expect("config serializes");
    let (report, table) = evaluate_predictions(&a.predictions, &manifest, cfg.label_space(), &cfg.bench(), echo)?;
    print!("{}", report.to_text());
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_text(&out.join("report.json"), &report.to_json())?;
        write_text(&out.join("report.txt"), &report.to_text())?;
        if a.csv {
            write_text(&out.join("pr.csv"), &pr_csv(&table, &manifest.classes))?;
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn seg_boundaries(a: &VizArgs, k: usize) -> Result<Option<sedge_core::labels::EdgeLabelStack>> {
    let Some(path) = &a.seg else {
        return Ok(None);
    };
    let seg = SegMap::from_gray(read_pgm(path)?);
    Ok(Some(seg_to_eval_boundaries(&seg, LabelSpace::new(k, a.background.into()))))
}

fn cmd_viz(a: VizArgs) -> Result<()> {
    let pred = a.prediction.as_ref().map(read_prediction).transpose()?;
    let k = match (&pred, a.k) {
        (Some(p), Some(k)) if p.k != k => {
            return Err(Error::config(format!("prediction has {} classes but --k is {k}", p.k)));
        }
        (Some(p), _) => p.k,
        (None, Some(k)) => k,
        (None, None) => return Err(Error::config("give --prediction, or --seg with --k")),
    };
    let gt = seg_boundaries(&a, k)?;
    if let (Some(p), Some(g)) = (&pred, &gt) {
        if (p.height, p.width) != (g.height(), g.width()) {
            return Err(Error::data("prediction and segmentation sizes differ"));
        }
    }
    let maps = match (&pred, &gt) {
        (Some(p), _) => p.clone(),
        (None, Some(g)) => ProbMaps::new(k, g.height(), g.width(), g.data().iter().map(|&v| v as f32).collect())?,
        (None, None) => return Err(Error::config("give --prediction or --seg")),
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut written = 0;
    match a.mode {
        VizMode::Hsv => {
            let hues = match a.hues {
                HueChoice::Cityscapes => cityscapes_hue_table(),
                HueChoice::Auto if k == 19 => cityscapes_hue_table(),
                _ => HueTable::evenly_spaced(k),
            };
            write_ppm(a.out.join("hsv.ppm"), &encode_hsv(&maps, &hues, a.top2)?)?;
            written += 1;
        }
        VizMode::Overlay => {
            let (Some(p), Some(g)) = (&pred, &gt) else {
                return Err(Error::config("overlay mode needs both --prediction and --seg"));
            };
            for c in 0..k {
                let bin: Vec<u8> = p.plane(c).iter().map(|&v| (v >= a.threshold) as u8).collect();
                let thinned = thin(&bin, p.height, p.width);
                let img = tp_fp_overlay(&thinned, g.plane(c), p.height, p.width)?;
                write_ppm(a.out.join(format!("overlay_{}.ppm", c + 1)), &img)?;
                written += 1;
            }
        }
        VizMode::PerClassGray => {
            for (c, img) in per_class_gray(&maps).iter().enumerate() {
                write_ppm(a.out.join(format!("class_{}.ppm", c + 1)), img)?;
                written += 1;
            }
        }
    }
    println!("wrote {written} image(s) to {}", a.out.display());
    Ok(())
}
