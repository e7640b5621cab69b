//! `dtfusion` command-line interface.
//!
//! Every command writes a JSON run manifest next to its main output, with the
//! resolved parameters and SHA-256 digests of inputs and outputs. Only
//! `duration_ms` varies between identical runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{self, PredictionDump};
use crate::error::{Error, ErrorKind, Result};
use crate::fusion::{fit_templates, DecisionTemplateSet, RowSumPolicy};
use crate::inference::{base_model_label, predict_groups, CropGroup, CropSelection, Prediction};
use crate::metrics::{self, CropMode, EvaluationReport, FusionCrossTab};
use crate::similarity::MeasureKind;
use crate::synth::{self, SynthConfig};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;
pub const EXIT_FIT: u8 = 5;

/// Environment variable overriding the number of prediction worker threads.
pub const WORKERS_ENV: &str = "DTFUSION_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "dtfusion", version, about = "Decision-template fusion of classifier outputs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit decision templates from a training dump and its labels.
    Fit(FitArgs),
    /// Predict a class for every sample of a dump.
    Predict(PredictArgs),
    /// Evaluate fused predictions against labels.
    Evaluate(EvaluateArgs),
    /// Cross-tabulate fused correctness against two base models.
    Crosstab(CrosstabArgs),
    /// Generate synthetic train/test dumps and labels.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Prediction dump.
    #[arg(long)]
    pub preds: PathBuf,
    /// Divide rows whose sum is off by more than 1e-6 by their sum instead of rejecting them.
    #[arg(long)]
    pub renormalize: bool,
}

impl IngestArgs {
    fn policy(&self) -> RowSumPolicy {
        if self.renormalize {
            RowSumPolicy::Renormalize
        } else {
            RowSumPolicy::Strict
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: IngestArgs,
    #[arg(long)]
    pub labels: PathBuf,
    /// Template file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CropsArg {
    Vote,
    First,
}

impl From<CropsArg> for CropSelection {
    fn from(c: CropsArg) -> Self {
        match c {
            CropsArg::Vote => CropSelection::Vote,
            CropsArg::First => CropSelection::First,
        }
    }
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    #[arg(long)]
    pub templates: PathBuf,
    /// Similarity measure: S1, S2, I1, I2, C or N (case-insensitive).
    #[arg(long)]
    pub measure: String,
    /// `vote`: majority vote over crops; `first`: crop 0 only.
    #[arg(long, value_enum, default_value = "vote")]
    pub crops: CropsArg,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: IngestArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: IngestArgs,
    #[arg(long)]
    pub labels: PathBuf,
    /// `--measure all` writes one report per measure.
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrosstabArgs {
    #[command(flatten)]
    pub input: IngestArgs,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON config file; inline flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    /// Comma-separated per-model accuracies; sets the model count.
    #[arg(long, value_delimiter = ',')]
    pub accuracy: Option<Vec<f64>>,
    #[arg(long)]
    pub concentration: Option<f64>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub crops: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// File names written by `simulate`.
pub const SIM_TRAIN_PREDS: &str = "train_preds.csv";
pub const SIM_TRAIN_LABELS: &str = "train_labels.csv";
pub const SIM_TEST_PREDS: &str = "test_preds.csv";
pub const SIM_TEST_LABELS: &str = "test_labels.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Wall-clock time; excluded from reproducibility comparisons.
    pub duration_ms: u64,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let hash = Sha256::digest(&bytes);
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Path of the manifest written alongside `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

struct Run {
    command: &'static str,
    started: Instant,
    parameters: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            parameters: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_owned(), value.to_string());
        self
    }

    fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_owned());
        self
    }

    fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_owned());
        self
    }

    fn finish(&self, manifest: &Path) -> Result<()> {
        let m = RunManifest {
            command: self.command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            parameters: self.parameters.clone(),
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            duration_ms: self.started.elapsed().as_millis() as u64,
        };
        dataio::write_json(manifest, &m)
    }
}

fn parse_measures(arg: &str) -> Result<Vec<MeasureKind>> {
    if arg.trim().eq_ignore_ascii_case("all") {
        Ok(MeasureKind::ALL.to_vec())
    } else {
        Ok(vec![arg.parse()?])
    }
}

fn check_compatible(dump: &PredictionDump, templates: &DecisionTemplateSet) -> Result<()> {
    if dump.ensemble.model_count() != templates.model_count() {
        return Err(Error::shape(format!(
            "dump has {} models but templates were fitted on {}",
            dump.ensemble.model_count(),
            templates.model_count()
        )));
    }
    if dump.label_space != *templates.label_space() {
        return Err(Error::shape(format!(
            "dump classes [{}] differ from template classes [{}]",
            dump.label_space,
            templates.label_space()
        )));
    }
    Ok(())
}

fn crop_mode(dump: &PredictionDump, selection: CropSelection) -> CropMode {
    match (selection, dump.max_crops()) {
        (CropSelection::Vote, n) if n > 1 => CropMode::Multi(n),
        _ => CropMode::Single,
    }
}

fn fit(args: &FitArgs) -> Result<()> {
    let mut run = Run::new("fit");
    run.param("renormalize", args.input.renormalize);
    let dump = dataio::read_dump(&args.input.preds, args.input.policy())?;
    let labels = dataio::read_labels(&args.labels, &dump.label_space)?;
    let (groups, truth) = dataio::align(&dump, &labels)?;
    // every crop is a training profile for its sample's class
    let mut profiles = Vec::new();
    let mut profile_labels = Vec::new();
    for (group, &label) in groups.iter().zip(&truth) {
        for p in group.profiles() {
            profiles.push(p.clone());
            profile_labels.push(label);
        }
    }
    let dt = fit_templates(&profiles, &profile_labels, &dump.label_space, &dump.ensemble)?;
    dataio::write_templates(&dt, &args.out)?;
    println!(
        "fitted {} templates ({} models) from {} profiles of {} samples -> {}",
        dt.class_count(),
        dt.model_count(),
        profiles.len(),
        groups.len(),
        args.out.display()
    );
    run.input(&args.input.preds).input(&args.labels).output(&args.out);
    run.finish(&manifest_path(&args.out))
}

struct Loaded {
    dump: PredictionDump,
    templates: DecisionTemplateSet,
    selection: CropSelection,
}

fn load(input: &IngestArgs, fusion: &FusionArgs) -> Result<Loaded> {
    let dump = dataio::read_dump(&input.preds, input.policy())?;
    let templates = dataio::read_templates(&fusion.templates)?;
    check_compatible(&dump, &templates)?;
    Ok(Loaded { dump, templates, selection: fusion.crops.into() })
}

fn predict(args: &PredictArgs) -> Result<()> {
    let mut run = Run::new("predict");
    let measure: MeasureKind = args.fusion.measure.parse()?;
    run.param("measure", measure)
        .param("crops", format!("{:?}", args.fusion.crops).to_lowercase())
        .param("renormalize", args.input.renormalize);
    let loaded = load(&args.input, &args.fusion)?;
    let groups: Vec<&CropGroup> = loaded.dump.samples.values().collect();
    let preds = predict_groups(&groups, &loaded.templates, measure, loaded.selection)?;
    let rows: Vec<(&str, &Prediction)> = groups.iter().map(|g| g.sample_id()).zip(&preds).collect();
    dataio::write_predictions(&args.out, &loaded.dump.label_space, &rows)?;
    println!("{} predictions ({measure}) -> {}", preds.len(), args.out.display());
    run.input(&args.input.preds).input(&args.fusion.templates).output(&args.out);
    run.finish(&manifest_path(&args.out))
}

/// Fused evaluation of an aligned dump; shared by `evaluate` and tests.
pub fn evaluate_dump(
    dump: &PredictionDump,
    labels: &BTreeMap<String, crate::fusion::CrispLabel>,
    templates: &DecisionTemplateSet,
    measure: MeasureKind,
    selection: CropSelection,
) -> Result<EvaluationReport> {
    check_compatible(dump, templates)?;
    if dump.is_empty() {
        return Err(Error::validation("dump contains no samples"));
    }
    let (groups, truth) = dataio::align(dump, labels)?;
    let preds = predict_groups(&groups, templates, measure, selection)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.class_index).collect();
    let cm = metrics::confusion(&predicted, &truth, dump.label_space.class_count())?;
    metrics::report(&cm, &dump.label_space, measure, crop_mode(dump, selection))
}

/// `report.json` + `S2` -> `report.S2.json`.
pub fn per_measure_path(report: &Path, measure: MeasureKind) -> PathBuf {
    let stem = report.file_stem().unwrap_or_default().to_string_lossy();
    let name = match report.extension() {
        Some(ext) => format!("{stem}.{}.{}", measure.tag(), ext.to_string_lossy()),
        None => format!("{stem}.{}", measure.tag()),
    };
    report.with_file_name(name)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut run = Run::new("evaluate");
    let measures = parse_measures(&args.fusion.measure)?;
    run.param("measure", &args.fusion.measure)
        .param("crops", format!("{:?}", args.fusion.crops).to_lowercase())
        .param("renormalize", args.input.renormalize);
    let loaded = load(&args.input, &args.fusion)?;
    if loaded.dump.is_empty() {
        return Err(Error::validation(format!(
            "{}: dump contains no samples",
            args.input.preds.display()
        )));
    }
    let labels = dataio::read_labels(&args.labels, &loaded.dump.label_space)?;
    let reports = measures
        .iter()
        .map(|&m| evaluate_dump(&loaded.dump, &labels, &loaded.templates, m, loaded.selection))
        .collect::<Result<Vec<_>>>()?;

    run.input(&args.input.preds).input(&args.labels).input(&args.fusion.templates);
    if let [report] = reports.as_slice() {
        dataio::write_json(&args.report, report)?;
        print!("{}", metrics::render_class_table(report));
        run.output(&args.report);
    } else {
        for report in &reports {
            let path = per_measure_path(&args.report, report.measure);
            dataio::write_json(&path, report)?;
            run.output(&path);
        }
        print!("{}", metrics::render_measure_summary(&reports));
    }
    run.finish(&manifest_path(&args.report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstabReport {
    pub measure: MeasureKind,
    pub crop_mode: CropMode,
    pub base_accuracy: [f64; 2],
    pub fused_accuracy: f64,
    pub crosstab: FusionCrossTab,
}

pub fn crosstab_dump(
    dump: &PredictionDump,
    labels: &BTreeMap<String, crate::fusion::CrispLabel>,
    templates: &DecisionTemplateSet,
    measure: MeasureKind,
    selection: CropSelection,
) -> Result<CrosstabReport> {
    let k = dump.ensemble.model_count();
    if k != 2 {
        return Err(Error::UnsupportedArity(k));
    }
    check_compatible(dump, templates)?;
    if dump.is_empty() {
        return Err(Error::validation("dump contains no samples"));
    }
    let (groups, truth) = dataio::align(dump, labels)?;
    let fused: Vec<usize> = predict_groups(&groups, templates, measure, selection)?
        .iter()
        .map(|p| p.class_index)
        .collect();
    let base = (0..k)
        .map(|m| groups.iter().map(|g| base_model_label(g, m, selection)).collect())
        .collect::<Result<Vec<Vec<usize>>>>()?;
    let mut crosstab = metrics::crosstab(&fused, &base, &truth)?;
    crosstab.model_names = [dump.ensemble.names()[0].clone(), dump.ensemble.names()[1].clone()];
    let accuracy = |preds: &[usize]| {
        preds.iter().zip(&truth).filter(|(p, t)| **p == t.index()).count() as f64 / truth.len() as f64
    };
    Ok(CrosstabReport {
        measure,
        crop_mode: crop_mode(dump, selection),
        base_accuracy: [accuracy(&base[0]), accuracy(&base[1])],
        fused_accuracy: accuracy(&fused),
        crosstab,
    })
}

fn crosstab(args: &CrosstabArgs) -> Result<()> {
    let mut run = Run::new("crosstab");
    let measure: MeasureKind = args.fusion.measure.parse()?;
    run.param("measure", measure)
        .param("crops", format!("{:?}", args.fusion.crops).to_lowercase())
        .param("renormalize", args.input.renormalize);
    let loaded = load(&args.input, &args.fusion)?;
    let labels = dataio::read_labels(&args.labels, &loaded.dump.label_space)?;
    let report = crosstab_dump(&loaded.dump, &labels, &loaded.templates, measure, loaded.selection)?;
    dataio::write_json(&args.out, &report)?;
    print!("{}", metrics::render_crosstab(&report.crosstab));
    println!(
        "accuracy: {} {:.2}%, {} {:.2}%, fused ({measure}) {:.2}%",
        report.crosstab.model_names[0],
        100.0 * report.base_accuracy[0],
        report.crosstab.model_names[1],
        100.0 * report.base_accuracy[1],
        100.0 * report.fused_accuracy
    );
    run.input(&args.input.preds)
        .input(&args.labels)
        .input(&args.fusion.templates)
        .output(&args.out);
    run.finish(&manifest_path(&args.out))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut run = Run::new("simulate");
    let mut cfg: SynthConfig = match &args.config {
        Some(path) => {
            run.input(path);
            dataio::read_json(path)?
        }
        None => SynthConfig::default(),
    };
    if let Some(c) = args.classes {
        cfg.class_count = c;
    }
    if let Some(n) = args.samples_per_class {
        cfg.samples_per_class = n;
    }
    if let Some(acc) = &args.accuracy {
        cfg.model_count = acc.len();
        cfg.per_model_accuracy = acc.clone();
    }
    if let Some(a) = args.concentration {
        cfg.confusion_concentration = a;
    }
    if let Some(r) = args.overlap {
        cfg.error_overlap = r;
    }
    if let Some(n) = args.crops {
        cfg.crops = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let data = synth::generate(&cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let dir = &args.out_dir;
    let files = [
        (dir.join(SIM_TRAIN_PREDS), dir.join(SIM_TRAIN_LABELS), &data.train),
        (dir.join(SIM_TEST_PREDS), dir.join(SIM_TEST_LABELS), &data.test),
    ];
    for (preds, labels, split) in &files {
        dataio::write_dump(&split.dump, preds)?;
        dataio::write_labels(labels, &split.labels, &split.dump.label_space)?;
        run.output(preds).output(labels);
    }
    run.param(
        "config",
        serde_json::to_string(&cfg).map_err(|e| Error::validation(e.to_string()))?,
    );
    println!(
        "wrote {} train and {} test samples ({} classes, {} models) to {}",
        data.train.dump.len(),
        data.test.dump.len(),
        cfg.class_count,
        cfg.model_count,
        dir.display()
    );
    run.finish(&dir.join("manifest.json"))
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::validation(format!("{WORKERS_ENV}={v:?} is not a thread count")))?;
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Parse => EXIT_PARSE,
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Fit => EXIT_FIT,
        ErrorKind::Io => EXIT_INTERNAL,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    configure_workers()?;
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Crosstab(a) => crosstab(a),
        Command::Simulate(a) => simulate(a),
    }
}

/// Parse `args` (including the program name) and run.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
