use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use xfactor_core::dataset::{build_dataset, PipelineConfig};
use xfactor_core::eval::{
    csv_bytes, fall_injection_curve, generate_synthetic, label_counts, loocv, outlier_vs_fall_diagnostic, train_detector,
    EvalReport, InjectionCurve, OutlierDiagnostic, TrainingData,
};
use xfactor_core::ingest::{load_dataset, Schema};
use xfactor_core::models::DetectorFile;
use xfactor_core::{tuning, FeatureDataset, Variant, WindowRecord};

use crate::config::{Common, DatasetKind, FileConfig, Input, Model, Pipeline};
use crate::output::Artifacts;
use crate::{CliError, Command};

const TUNED: [Variant; 3] = [Variant::Xhmm1, Variant::Xhmm2, Variant::Xhmm3];
const UNSUPERVISED: [Variant; 6] = [
    Variant::Hmm1,
    Variant::Hmm2,
    Variant::Xhmm1,
    Variant::Xhmm2,
    Variant::Xhmm3,
    Variant::HmmNormOut,
];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialise");
    s.push('\n');
    s.into_bytes()
}

fn to_value<T: serde::Serialize>(x: &T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| CliError::Compute(e.into()))
}

/// Effective settings, echoed into every report. The output directory and
/// thread count are left out since they do not affect results.
#[derive(Debug, Default)]
struct Echo(Map<String, Value>);

impl Echo {
    fn new(command: &str, seed: u64) -> Echo {
        let mut m = Map::new();
        m.insert("command".into(), command.into());
        m.insert("seed".into(), seed.into());
        Echo(m)
    }

    fn set<T: serde::Serialize>(&mut self, key: &str, v: &T) -> Result<(), CliError> {
        self.0.insert(key.into(), to_value(v)?);
        Ok(())
    }

    fn report(&self, mut body: Map<String, Value>) -> Vec<u8> {
        body.insert("run".into(), Value::Object(self.0.clone()));
        pretty(&Value::Object(body))
    }
}

struct Prepared {
    common: Common,
    seed: u64,
}

fn prepare(mut common: Common, file: &FileConfig) -> Result<Prepared, CliError> {
    common.merge(&file.common);
    let seed = common.seed()?;
    if let Some(j) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| usage(format!("cannot start {j} worker threads: {e}")))?;
    }
    Ok(Prepared { common, seed })
}

fn file_config(common: &Common) -> Result<FileConfig, CliError> {
    match &common.config {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn finish(arts: Artifacts, common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let dir = common.out_dir();
    log::info!("writing {} to {}", arts.names().collect::<Vec<_>>().join(", "), dir.display());
    arts.commit(&dir)
}

/// Validated inputs shared by the commands that consume features.
struct Analysis {
    path: PathBuf,
    kind: DatasetKind,
    pipeline: Option<PipelineConfig>,
}

impl Analysis {
    fn resolve(input: &Input, pipeline: &Pipeline) -> Result<Analysis, CliError> {
        let (path, kind) = input.resolve(DatasetKind::Features)?;
        let pipeline = match kind {
            DatasetKind::Features => None,
            DatasetKind::Raw(_) => Some(pipeline.resolve()?),
        };
        Ok(Analysis { path, kind, pipeline })
    }

    fn echo(&self, echo: &mut Echo) -> Result<(), CliError> {
        echo.set("dataset", &self.path.display().to_string())?;
        echo.set("schema", &self.kind.to_string())?;
        if let Some(p) = &self.pipeline {
            echo.set("pipeline", p)?;
        }
        Ok(())
    }

    fn load(&self) -> Result<FeatureDataset, CliError> {
        match self.kind {
            DatasetKind::Features => Ok(FeatureDataset::read_csv(&self.path)?),
            DatasetKind::Raw(schema) => {
                let cfg = self.pipeline.as_ref().expect("raw input carries a pipeline");
                Ok(extract_features(&self.path, schema, cfg)?.0)
            }
        }
    }
}

fn extract_features(
    path: &Path,
    schema: Schema,
    cfg: &PipelineConfig,
) -> xfactor_core::Result<(FeatureDataset, Value)> {
    let loaded = load_dataset(path, schema)?;
    let (ds, stats) = build_dataset(loaded.usable_streams(), cfg)?;
    ds.validate()?;
    let info = json!({
        "windows": stats.windows,
        "dropped_mixed": stats.dropped_mixed,
        "subjects": ds.subjects(),
        "excluded_subjects": loaded.exclusions,
        "label_counts": label_counts(&ds),
    });
    Ok((ds, info))
}

fn merge_analysis(common: Common, mut input: Input, mut pipeline: Pipeline, mut model: Model) -> Result<(Prepared, Input, Pipeline, Model), CliError> {
    let file = file_config(&common)?;
    let prep = prepare(common, &file)?;
    input.merge(&file.input);
    pipeline.merge(&file.pipeline);
    model.merge(&file.model);
    Ok((prep, input, pipeline, model))
}

pub fn run(command: Command) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Synth { common, mut synth } => {
            let file = file_config(&common)?;
            let prep = prepare(common, &file)?;
            synth.merge(&file.synth);
            let cfg = synth.resolve(prep.seed)?;
            let mut echo = Echo::new("synth", prep.seed);
            echo.set("synthetic", &cfg)?;
            let ds = generate_synthetic(&cfg, prep.seed)?;
            let mut arts = Artifacts::default();
            arts.add("synth.csv", ds.to_csv_bytes()?);
            let mut body = Map::new();
            body.insert("windows".into(), ds.len().into());
            body.insert("subjects".into(), to_value(&ds.subjects())?);
            body.insert("label_counts".into(), to_value(&label_counts(&ds))?);
            arts.add("synth.json", echo.report(body));
            finish(arts, &prep.common)
        }
        Command::Extract {
            common,
            mut input,
            mut pipeline,
        } => {
            let file = file_config(&common)?;
            let prep = prepare(common, &file)?;
            input.merge(&file.input);
            pipeline.merge(&file.pipeline);
            let (path, kind) = input.resolve(DatasetKind::Raw(Schema::GenericCsv))?;
            let DatasetKind::Raw(schema) = kind else {
                return Err(usage("extract reads raw sensor streams; choose generic-csv, dlr or mobifall"));
            };
            let cfg = pipeline.resolve()?;
            let mut echo = Echo::new("extract", prep.seed);
            echo.set("dataset", &path.display().to_string())?;
            echo.set("schema", &schema.to_string())?;
            echo.set("pipeline", &cfg)?;
            let (ds, info) = extract_features(&path, schema, &cfg)?;
            let mut arts = Artifacts::default();
            arts.add("features.csv", ds.to_csv_bytes()?);
            arts.add("window_features.csv", ds.feature_matrix_csv(false)?);
            let Value::Object(body) = info else { unreachable!() };
            arts.add("extract.json", echo.report(body));
            finish(arts, &prep.common)
        }
        Command::Tune {
            common,
            input,
            pipeline,
            model,
        } => {
            let (prep, input, pipeline, model) = merge_analysis(common, input, pipeline, model)?;
            let analysis = Analysis::resolve(&input, &pipeline)?;
            let variants = model.variants(&TUNED)?;
            if let Some(v) = variants.iter().find(|v| !v.uses_xi()) {
                return Err(usage(format!("{v} has no inflation factor to tune; use xhmm1, xhmm2 or xhmm3")));
            }
            let cfg = model.resolve(prep.seed)?;
            let mut echo = Echo::new("tune", prep.seed);
            analysis.echo(&mut echo)?;
            echo.set("variants", &variants)?;
            echo.set("eval", &cfg)?;
            let ds = analysis.load()?;
            let all: Vec<&WindowRecord> = ds.windows.iter().collect();
            let data = TrainingData::prepare(&all, false, &cfg, &[])?;
            let mut trace = Vec::new();
            let mut selections = Vec::new();
            for &v in &variants {
                let trained = train_detector(v, &data, &cfg, &[])?;
                let sel = trained.selection.expect("tuned variants report a selection");
                log::info!("{v}: chose xi = {}", sel.chosen_xi);
                trace.extend(sel.trace.iter().cloned());
                selections.push(json!({
                    "variant": v,
                    "chosen_xi": sel.chosen_xi,
                    "grid": sel.grid,
                    "mean_gmean": to_value(&sel.mean_gmean)?,
                    "outliers_excluded": trained.split.as_ref().map_or(0, |s| s.n_outliers()),
                }));
            }
            let mut arts = Artifacts::default();
            arts.add("tune_trace.csv", tuning::trace_csv(&trace)?);
            let mut body = Map::new();
            body.insert("selections".into(), Value::Array(selections));
            arts.add("tune.json", echo.report(body));
            finish(arts, &prep.common)
        }
        Command::Train {
            common,
            input,
            pipeline,
            model,
        } => {
            let (prep, input, pipeline, model) = merge_analysis(common, input, pipeline, model)?;
            let analysis = Analysis::resolve(&input, &pipeline)?;
            let variants = model.variants(&TUNED)?;
            let cfg = model.resolve(prep.seed)?;
            let mut echo = Echo::new("train", prep.seed);
            analysis.echo(&mut echo)?;
            echo.set("variants", &variants)?;
            echo.set("eval", &cfg)?;
            let ds = analysis.load()?;
            let all: Vec<&WindowRecord> = ds.windows.iter().collect();
            let keep_falls = variants.iter().any(|v| v.is_supervised());
            let data = TrainingData::prepare(&all, keep_falls, &cfg, &[])?;
            let mut arts = Artifacts::default();
            let mut detectors = Vec::new();
            for &v in &variants {
                let trained = train_detector(v, &data, &cfg, &[])?;
                let name = format!("detector_{v}.json");
                let file = DetectorFile {
                    preprocessing: Some(data.preprocessing.clone()),
                    ..DetectorFile::new(trained.detector.clone())
                };
                let mut text = file.to_json()?;
                text.push('\n');
                arts.add(name.clone(), text);
                detectors.push(json!({
                    "variant": v,
                    "file": name,
                    "chosen_xi": trained.selection.as_ref().map(|s| s.chosen_xi),
                    "outliers_excluded": trained.outliers_excluded(),
                    "fall_windows_used": trained.fall_windows_used,
                }));
            }
            let mut body = Map::new();
            body.insert("detectors".into(), Value::Array(detectors));
            arts.add("train.json", echo.report(body));
            finish(arts, &prep.common)
        }
        Command::Evaluate {
            common,
            input,
            pipeline,
            model,
        } => {
            let (prep, input, pipeline, model) = merge_analysis(common, input, pipeline, model)?;
            let analysis = Analysis::resolve(&input, &pipeline)?;
            let variants = model.variants(&UNSUPERVISED)?;
            let cfg = model.resolve(prep.seed)?;
            let mut echo = Echo::new("evaluate", prep.seed);
            analysis.echo(&mut echo)?;
            echo.set("variants", &variants)?;
            echo.set("eval", &cfg)?;
            let ds = analysis.load()?;
            let mut reports: Vec<EvalReport> = Vec::new();
            for &v in &variants {
                let r = loocv(&ds, v, &cfg)?;
                log::info!("{v}: gmean {:.4}", r.summary.gmean);
                reports.push(r);
            }
            let fold_rows: Vec<Vec<String>> = reports.iter().flat_map(EvalReport::csv_rows).collect();
            let num = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
            let summary_rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        r.variant.to_string(),
                        num(r.summary.gmean),
                        num(r.summary.fdr),
                        num(r.summary.far),
                        r.summary.folds_in_gmean.to_string(),
                    ]
                })
                .collect();
            let mut arts = Artifacts::default();
            arts.add("evaluate_folds.csv", csv_bytes(&EvalReport::CSV_HEADER, &fold_rows)?);
            arts.add(
                "evaluate_summary.csv",
                csv_bytes(&["variant", "gmean", "fdr", "far", "folds_in_gmean"], &summary_rows)?,
            );
            let mut body = Map::new();
            body.insert("reports".into(), to_value(&reports)?);
            arts.add("evaluate.json", echo.report(body));
            finish(arts, &prep.common)
        }
        Command::Inject {
            common,
            input,
            pipeline,
            model,
            mut inject,
        } => {
            let file = file_config(&common)?;
            inject.merge(&file.inject);
            let (prep, input, pipeline, model) = merge_analysis(common, input, pipeline, model)?;
            let analysis = Analysis::resolve(&input, &pipeline)?;
            let variants = model.variants(&[Variant::Hmm3Sup])?;
            if let Some(v) = variants.iter().find(|v| !v.is_supervised()) {
                return Err(usage(format!("{v} does not train on falls; use hmm1_sup, hmm2_sup or hmm3_sup")));
            }
            let (counts, repeats) = inject.resolve()?;
            let cfg = model.resolve(prep.seed)?;
            let mut echo = Echo::new("inject", prep.seed);
            analysis.echo(&mut echo)?;
            echo.set("variants", &variants)?;
            echo.set("eval", &cfg)?;
            echo.set("counts", &counts)?;
            echo.set("repeats", &repeats)?;
            let ds = analysis.load()?;
            let mut curves: Vec<InjectionCurve> = Vec::new();
            for &v in &variants {
                curves.push(fall_injection_curve(&ds, v, &counts, repeats, &cfg)?);
            }
            let rows: Vec<Vec<String>> = curves.iter().flat_map(InjectionCurve::csv_rows).collect();
            let mut arts = Artifacts::default();
            arts.add("inject.csv", csv_bytes(&InjectionCurve::CSV_HEADER, &rows)?);
            let mut body = Map::new();
            body.insert("curves".into(), to_value(&curves)?);
            arts.add("inject.json", echo.report(body));
            finish(arts, &prep.common)
        }
        Command::Diagnose {
            common,
            input,
            pipeline,
            model,
        } => {
            let (prep, input, pipeline, model) = merge_analysis(common, input, pipeline, model)?;
            let analysis = Analysis::resolve(&input, &pipeline)?;
            let variants = model.variants(&[Variant::Hmm1Sup, Variant::Hmm2Sup])?;
            if let Some(v) = variants.iter().find(|v| !matches!(v, Variant::Hmm1Sup | Variant::Hmm2Sup)) {
                return Err(usage(format!("the diagnostic takes hmm1_sup or hmm2_sup, not {v}")));
            }
            let cfg = model.resolve(prep.seed)?;
            let mut echo = Echo::new("diagnose", prep.seed);
            analysis.echo(&mut echo)?;
            echo.set("variants", &variants)?;
            echo.set("eval", &cfg)?;
            let ds = analysis.load()?;
            let mut diags: Vec<OutlierDiagnostic> = Vec::new();
            for &v in &variants {
                diags.push(outlier_vs_fall_diagnostic(&ds, v, &cfg)?);
            }
            let rows: Vec<Vec<String>> = diags.iter().flat_map(OutlierDiagnostic::csv_rows).collect();
            let mut arts = Artifacts::default();
            arts.add("diagnose.csv", csv_bytes(&OutlierDiagnostic::CSV_HEADER, &rows)?);
            let mut body = Map::new();
            body.insert("diagnostics".into(), to_value(&diags)?);
            arts.add("diagnose.json", echo.report(body));
            finish(arts, &prep.common)
        }
    }
}
