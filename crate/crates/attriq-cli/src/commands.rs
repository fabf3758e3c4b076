//! One function per subcommand. Each writes its outputs under `--out` and
//! finishes with `manifest.json`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use attriq::attribution::{attribute_all, step_reports, AttributionReport, IGConfig, Quadrature};
use attriq::datasets::{
    generate_classifier, generate_synthetic, load_dataset, load_jsonl, save_json, save_jsonl, ClassifierGenConfig,
    Dataset, Format, GenConfig, TokenPolicy,
};
use attriq::fixtures;
use attriq::models::{load_model, save_model, train, ClassifierModel, Instance, Model, TableQaModel, TrainConfig};
use attriq::report::{render_alignment, render_text, TextMode};
use attriq::robustness::{
    attack_efficacy_split, concat_attack, default_program_analysis, load_list, operator_trigger_table,
    overstability_curve, row_reorder_attack, stopword_deletion_attack, subject_ablation_attack, summary_csv,
    top_attributed_vocab, union_accuracy, full_ranking, AttackResult, EfficacyRecord, Position, ReorderMode,
    RobustnessError, ThresholdPolicy, WordLists,
};

use crate::config::{ModeArg, PositionArg, QuadratureArg, RenderFormat, RunConfig};
use crate::{CliError, Command};

pub fn run(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out()?;
    let outputs = match command {
        Command::Gen => gen(cfg, out)?,
        Command::Train => train_cmd(cfg, out)?,
        Command::Eval => eval(cfg, out)?,
        Command::Attribute => attribute(cfg, out)?,
        Command::Overstability => overstability(cfg, out)?,
        Command::Attack => attack(cfg, out)?,
        Command::DefaultPrograms => default_programs(cfg, out)?,
        Command::Triggers => triggers(cfg, out)?,
        Command::Efficacy => efficacy(cfg, out)?,
        Command::Render => render(cfg, out)?,
    };
    let mut config = serde_json::to_value(cfg).map_err(CliError::data)?;
    if let Some(map) = config.as_object_mut() {
        map.retain(|_, v| !v.is_null());
    }
    let manifest = json!({
        "tool": "attriq",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "seed": cfg.seed(),
        "config": config,
        "outputs": outputs,
    });
    save_json(&manifest, &out.join("manifest.json")).map_err(CliError::data)
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<String, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let path = out.join(name);
    fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(name.to_string())
}

fn write_json<T: Serialize + ?Sized>(out: &Path, name: &str, value: &T) -> Result<String, CliError> {
    save_json(value, &out.join(name)).map_err(CliError::data)?;
    Ok(name.to_string())
}

fn write_jsonl<T: Serialize>(out: &Path, name: &str, items: &[T]) -> Result<String, CliError> {
    save_jsonl(items, &out.join(name)).map_err(CliError::data)?;
    Ok(name.to_string())
}

fn format_of(path: &Path) -> Format {
    if path.extension().is_some_and(|e| e == "csv") {
        Format::CsvTables
    } else {
        Format::Jsonl
    }
}

fn ig_config(cfg: &RunConfig) -> Result<IGConfig, CliError> {
    let steps = cfg.steps.unwrap_or(64);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()));
    }
    Ok(IGConfig {
        steps,
        quadrature: match cfg.quadrature {
            Some(QuadratureArg::LeftRiemann) => Quadrature::LeftRiemann,
            _ => Quadrature::Trapezoid,
        },
        target: None,
    })
}

fn word_lists(cfg: &RunConfig) -> Result<WordLists, CliError> {
    let mut w = WordLists::shipped();
    let load = |p: &Path| load_list(p).map_err(|e| CliError::Usage(e.to_string()));
    if let Some(p) = &cfg.stopwords {
        w.stopwords = load(p)?;
    }
    if let Some(p) = &cfg.nouns {
        w.subject_nouns = load(p)?;
    }
    if let Some(p) = &cfg.order_words {
        w.order_words = load(p)?;
    }
    Ok(w)
}

/// The model and the dataset, with the dataset mapped onto the model's
/// vocabulary. Fixture models are built over the dataset's own vocabulary
/// plus every attack phrase token.
fn model_and_data(cfg: &RunConfig) -> Result<(Model, Dataset), CliError> {
    let data = RunConfig::required(&cfg.data, "data")?;
    let spec = RunConfig::required(&cfg.model, "model")?;
    if let Some(name) = spec.strip_prefix("fixture:") {
        let mut d = load_dataset(data, format_of(data), TokenPolicy::Extend, None).map_err(CliError::data)?;
        let w = WordLists::shipped();
        let phrases = w
            .attack_phrases
            .iter()
            .chain(&w.vqa_prefixes)
            .chain(cfg.phrase.iter().flatten());
        for p in phrases {
            for t in Instance::tokenize(p) {
                d.vocab.insert(&t);
            }
        }
        let model = match name {
            "planted" => Model::TableQa(fixtures::planted_table_model(&d.vocab)),
            "medal-prev" => Model::TableQa(fixtures::medal_prev_model(&d.vocab)),
            "color" => Model::Classifier(fixtures::color_only_classifier(&d.vocab)),
            other => return Err(CliError::Usage(format!("unknown fixture model {other:?}"))),
        };
        return Ok((model, d));
    }
    let model = load_model(Path::new(spec)).map_err(CliError::data)?;
    let d = load_dataset(data, format_of(data), TokenPolicy::MapToUnk, Some(model.vocab())).map_err(CliError::data)?;
    Ok((model, d))
}

fn table_model(model: &Model) -> Result<&TableQaModel, CliError> {
    match model {
        Model::TableQa(m) => Ok(m),
        Model::Classifier(_) => Err(CliError::Usage("this command needs a table model".into())),
    }
}

fn gen(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let seed = cfg.seed();
    let d = match cfg.kind.as_deref().unwrap_or("table") {
        "table" => {
            let g = GenConfig {
                seed,
                ..cfg.generator.clone().unwrap_or_default()
            };
            generate_synthetic(&g).map_err(|e| CliError::Usage(e.to_string()))?
        }
        "classifier" => generate_classifier(&ClassifierGenConfig {
            seed,
            size: cfg.size.unwrap_or(ClassifierGenConfig::default().size),
        }),
        other => return Err(CliError::Usage(format!("gen --kind must be table or classifier, got {other:?}"))),
    };
    Ok(vec![
        write_jsonl(out, "dataset.jsonl", &d.instances)?,
        write_json(out, "provenance.json", &d.provenance)?,
    ])
}

fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let data = RunConfig::required(&cfg.data, "data")?;
    let d = load_dataset(data, format_of(data), TokenPolicy::Extend, None).map_err(CliError::data)?;
    let dim = cfg.dim.unwrap_or(16);
    let seed = cfg.seed();
    let model = if d.is_table_qa() {
        Model::TableQa(TableQaModel::random(d.vocab.clone(), dim, seed))
    } else {
        Model::Classifier(ClassifierModel::random(d.vocab.clone(), d.classes(), dim, seed))
    };
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        lr: cfg.lr.unwrap_or(defaults.lr),
        epochs: cfg.epochs.unwrap_or(defaults.epochs),
        batch: cfg.batch.unwrap_or(defaults.batch),
        seed,
    };
    let trained = train(model, &d.instances, &tc).map_err(CliError::data)?;
    save_model(&trained.model, &out.join("model.json")).map_err(CliError::data)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in trained.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    Ok(vec!["model.json".into(), write_text(out, "losses.csv", &csv)?])
}

fn eval(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let (model, d) = model_and_data(cfg)?;
    let preds = d
        .instances
        .par_iter()
        .map(|i| model.predict(i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::data)?;
    let rows: Vec<_> = preds
        .iter()
        .zip(&d.instances)
        .map(|(p, i)| {
            json!({
                "id": i.id,
                "correct": p.is_correct(&i.gold_answer),
                "answer": p.answer,
                "program": p.program,
                "class": p.class,
            })
        })
        .collect();
    let correct = rows.iter().filter(|r| r["correct"] == true).count();
    let n = rows.len();
    let summary = json!({
        "n": n,
        "correct": correct,
        "accuracy": if n == 0 { 0.0 } else { correct as f64 / n as f64 },
    });
    Ok(vec![
        write_jsonl(out, "predictions.jsonl", &rows)?,
        write_json(out, "eval.json", &summary)?,
    ])
}

/// Classifier reports for the predicted class, or the 2·T selection
/// reports of each table instance.
fn compute_reports(model: &Model, d: &Dataset, ig: &IGConfig) -> Result<Vec<AttributionReport>, CliError> {
    match model {
        Model::Classifier(_) => attribute_all(model, &d.instances, ig)
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(CliError::data),
        Model::TableQa(m) => {
            let per: Vec<Vec<AttributionReport>> = d
                .instances
                .par_iter()
                .map(|i| step_reports(m, i, ig))
                .collect::<Result<_, _>>()
                .map_err(CliError::data)?;
            Ok(per.into_iter().flatten().collect())
        }
    }
}

fn reports_for(cfg: &RunConfig, model: &Model, d: &Dataset) -> Result<Vec<AttributionReport>, CliError> {
    match &cfg.reports {
        Some(p) => load_jsonl(p).map_err(CliError::data),
        None => compute_reports(model, d, &ig_config(cfg)?),
    }
}

fn attribute(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let (model, d) = model_and_data(cfg)?;
    let reports = compute_reports(&model, &d, &ig_config(cfg)?)?;
    let max_residual = reports.iter().map(|r| r.residual).fold(0.0, f64::max);
    let summary = json!({
        "reports": reports.len(),
        "omitted": reports.iter().filter(|r| r.omitted).count(),
        "max_residual": max_residual,
    });
    Ok(vec![
        write_jsonl(out, "attributions.jsonl", &reports)?,
        write_json(out, "attribution_summary.json", &summary)?,
    ])
}

fn parse_sizes(text: &str, full: usize) -> Result<Vec<usize>, CliError> {
    let mut sizes = vec![0, full];
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k = if part == "all" {
            full
        } else {
            part.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--sizes: {part:?} is not a size")))?
        };
        if k > full {
            return Err(CliError::Usage(format!("--sizes: {k} exceeds the vocabulary size {full}")));
        }
        sizes.push(k);
    }
    sizes.sort_unstable();
    sizes.dedup();
    Ok(sizes)
}

fn overstability(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let (model, d) = model_and_data(cfg)?;
    let reports = reports_for(cfg, &model, &d)?;
    let ranked = match top_attributed_vocab(&reports, cfg.top_k.unwrap_or(1)) {
        Ok(r) => r,
        Err(RobustnessError::AllOmitted) => Vec::new(),
        Err(e) => return Err(CliError::data(e)),
    };
    let full = full_ranking(&ranked, &d).len();
    let sizes = parse_sizes(cfg.sizes.as_deref().unwrap_or("0,1,2,5,10,all"), full)?;
    let curve = overstability_curve(&model, &d, &ranked, &sizes).map_err(CliError::data)?;
    Ok(vec![
        write_json(out, "curve.json", &curve)?,
        write_text(out, "curve.csv", &curve.to_csv().map_err(CliError::data)?)?,
    ])
}

fn attack(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let kind = RunConfig::required(&cfg.kind, "kind")?.clone();
    let (model, d) = model_and_data(cfg)?;
    let w = word_lists(cfg)?;
    let mut results: Vec<AttackResult> = Vec::new();
    let mut files = Vec::new();
    match kind.as_str() {
        "concat" => {
            let phrases = match &cfg.phrase {
                Some(p) => p.clone(),
                None if d.is_table_qa() => w.attack_phrases.clone(),
                None => w.vqa_prefixes.clone(),
            };
            let position = match cfg.position {
                Some(PositionArg::Suffix) => Position::Suffix,
                _ => Position::Prefix,
            };
            for p in &phrases {
                let tokens = Instance::tokenize(p);
                if tokens.is_empty() {
                    return Err(CliError::Usage("--phrase must not be empty".into()));
                }
                results.push(concat_attack(&model, &d.instances, &tokens, position).map_err(CliError::data)?);
            }
            let union = union_accuracy(&results).map_err(CliError::data)?;
            files.push(write_json(out, "union.json", &json!({ "phrases": phrases, "union_accuracy": union }))?);
        }
        "stopword" => {
            results.push(stopword_deletion_attack(&model, &d.instances, &w.stopwords).map_err(CliError::data)?);
        }
        "reorder" => {
            let mode = match cfg.mode {
                Some(ModeArg::AnswerFirst) => ReorderMode::AnswerFirst,
                Some(ModeArg::AnswerLast) => ReorderMode::AnswerLast,
                _ => ReorderMode::Shuffle,
            };
            results.push(
                row_reorder_attack(&model, &d.instances, mode, cfg.seed(), &w.order_words).map_err(CliError::data)?,
            );
        }
        "subject" => {
            let r = subject_ablation_attack(&model, &d.instances, &w.subject_nouns).map_err(CliError::data)?;
            files.push(write_json(out, "subject_ablation.json", &r)?);
            return Ok(files);
        }
        other => {
            return Err(CliError::Usage(format!(
                "attack --kind must be concat, stopword, subject or reorder, got {other:?}"
            )))
        }
    }
    files.push(write_jsonl(out, "attack.jsonl", &results)?);
    files.push(write_text(out, "summary.csv", &summary_csv(&results).map_err(CliError::data)?)?);
    Ok(files)
}

fn default_programs(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let (model, d) = model_and_data(cfg)?;
    let m = table_model(&model)?;
    let a = default_program_analysis(m, &d.instances, &ig_config(cfg)?).map_err(CliError::data)?;
    Ok(vec![write_json(out, "default_programs.json", &a)?])
}

fn triggers(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let (model, d) = model_and_data(cfg)?;
    table_model(&model)?;
    let reports = reports_for(cfg, &model, &d)?;
    Ok(vec![write_json(out, "triggers.json", &operator_trigger_table(&reports))?])
}

fn efficacy(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let path = RunConfig::required(&cfg.records, "records")?;
    let records: Vec<EfficacyRecord> = load_jsonl(path).map_err(CliError::data)?;
    let defaults = ThresholdPolicy::default();
    let policy = ThresholdPolicy {
        fraction: cfg.threshold.unwrap_or(defaults.fraction),
        absolute: !cfg.signed.unwrap_or(!defaults.absolute),
    };
    let split = attack_efficacy_split(&records, policy).map_err(CliError::data)?;
    Ok(vec![write_json(out, "efficacy.json", &json!({ "policy": policy, "split": split }))?])
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn render(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let path = RunConfig::required(&cfg.reports, "reports")?;
    let reports: Vec<AttributionReport> = load_jsonl(path).map_err(CliError::data)?;
    let mut files = Vec::new();
    match cfg.format.unwrap_or(RenderFormat::Html) {
        f @ (RenderFormat::Html | RenderFormat::Ansi) => {
            let (mode, ext) = if f == RenderFormat::Html {
                (TextMode::Html, "html")
            } else {
                (TextMode::Ansi, "ansi")
            };
            for (i, r) in reports.iter().enumerate() {
                let name = format!("{i:04}-{}.{ext}", file_stem(&r.instance_id));
                files.push(write_text(out, &name, &render_text(r, mode))?);
            }
        }
        RenderFormat::Alignment => {
            let chunk = 2 * attriq::models::STEPS;
            for group in reports.chunks(chunk) {
                let (csv, svg) = render_alignment(group).map_err(CliError::data)?;
                let stem = file_stem(&group[0].instance_id);
                files.push(write_text(out, &format!("{stem}.csv"), &csv)?);
                files.push(write_text(out, &format!("{stem}.svg"), &svg)?);
            }
        }
    }
    Ok(files)
}
