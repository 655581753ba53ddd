//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{open, RunConfig};
use super::{
    AppError, Command, EvaluateArgs, ExtractArgs, Fixture, GenerateArgs, KfoldArgs, LabelSource, NoiseModel, TrainArgs,
    TrainOverrides, TruthSource,
};
use crate::cnlp::ClinicalTag;
use crate::eval::bootstrap::BootstrapConfig;
use crate::eval::confusion::ConfusionMatrix;
use crate::eval::render::{evaluation_text, summary_table};
use crate::eval::report::{
    disposition_table, evaluate_rater, mean_accuracy, subgroup_report, Evaluation, Grouper, Rater, RaterOutput, RecordContext,
};
use crate::features::{FeatureVector, TextField};
use crate::gbdt::{fit, BoostedEnsemble, TrainConfig};
use crate::ingest::{filter_usable, parse_encounters, write_encounters, TriageEncounter};
use crate::labeling::{apply_verified_labels, kfold_disagreements_vectors, parse_review, KFoldConfig};
use crate::provenance::Provenance;
use crate::synth::{default_noise_matrix, generate, identity_noise_matrix};
use crate::Esi;

pub fn dispatch(command: &Command, config: &RunConfig, seed: u64) -> Result<(), AppError> {
    match command {
        Command::Generate(args) => cmd_generate(args, config, seed),
        Command::Extract(args) => cmd_extract(args, config, seed),
        Command::Train(args) => cmd_train(args, config, seed),
        Command::Evaluate(args) => cmd_evaluate(args, config, seed),
        Command::KfoldReview(args) => cmd_kfold_review(args, config, seed),
    }
}

/// `corpus.jsonl` -> `corpus.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn create(path: &Path) -> Result<BufWriter<File>, AppError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| AppError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_text(path, &text)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), AppError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).expect("output serializes");
        w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn write_manifest(artifact: &Path, command: &str, provenance: &Provenance, details: serde_json::Value) -> Result<(), AppError> {
    write_json(&manifest_path(artifact), &json!({ "command": command, "provenance": provenance, "details": details }))
}

fn input_path<'a>(flag: &'a Option<PathBuf>, config: &'a RunConfig) -> Result<&'a Path, AppError> {
    flag.as_deref()
        .or(config.paths.data.as_deref())
        .ok_or_else(|| AppError::Usage("an input corpus is required (--input or paths.data)".into()))
}

/// Parse a corpus; malformed lines are reported on stderr and skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<TriageEncounter>, AppError> {
    let parsed = parse_encounters(open(path)?).map_err(|e| AppError::io(path, std::io::Error::other(e.to_string())))?;
    for err in &parsed.errors {
        eprintln!("warning: {}: {err}", path.display());
    }
    if !parsed.errors.is_empty() {
        log::warn!("{} malformed lines skipped in {}", parsed.errors.len(), path.display());
    }
    Ok(parsed.encounters)
}

fn esi_counts(labels: impl IntoIterator<Item = Option<Esi>>) -> [usize; 5] {
    let mut counts = [0; 5];
    for esi in labels.into_iter().flatten() {
        counts[esi.class()] += 1;
    }
    counts
}

fn cmd_generate(args: &GenerateArgs, config: &RunConfig, seed: u64) -> Result<(), AppError> {
    let mut g = config.generator.clone().unwrap_or_default();
    match (args.n, &config.generator) {
        (Some(n), _) => g.n_records = n,
        (None, Some(_)) => {}
        (None, None) => return Err(AppError::Usage("--n is required (or a [generator] section with n_records)".into())),
    }
    g.seed = seed;
    if let Some(site) = &args.site {
        g.site = site.clone();
    }
    match args.noise {
        Some(NoiseModel::Default) => g.noise_matrix = default_noise_matrix(),
        Some(NoiseModel::None) => g.noise_matrix = identity_noise_matrix(),
        None => {}
    }
    if let Some(f) = args.violation_fraction {
        g.violation_fraction = f;
    }
    g.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    let corpus = generate(&g).map_err(|e| AppError::Data(e.to_string()))?;
    let w = create(&args.out)?;
    write_encounters(w, &corpus).map_err(|e| AppError::io(&args.out, std::io::Error::other(e.to_string())))?;
    let provenance = Provenance::new(&g, seed);
    let details = json!({
        "records": corpus.len(),
        "true_esi_counts": esi_counts(corpus.iter().map(|e| e.gold_esi)),
        "nurse_esi_counts": esi_counts(corpus.iter().map(|e| e.nurse_esi)),
        "violations": ((g.n_records as f64) * g.violation_fraction).round() as usize,
        "generator": g,
    });
    write_manifest(&args.out, "generate", &provenance, details)?;
    println!("wrote {} records to {}", corpus.len(), args.out.display());
    Ok(())
}

type FieldTags = BTreeMap<&'static str, Vec<ClinicalTag>>;

#[derive(Serialize)]
struct TagLine<'a> {
    id: &'a str,
    tags: FieldTags,
}

#[derive(Debug, Default, Clone, Copy, Serialize)]
struct ExtractCounters {
    records: usize,
    words: usize,
    noun_phrases: usize,
    tags: usize,
    reason_for_visit_tags: usize,
    average_tags_per_encounter: f64,
    average_reason_for_visit_tags_per_encounter: f64,
}

fn cmd_extract(args: &ExtractArgs, config: &RunConfig, seed: u64) -> Result<(), AppError> {
    let input = input_path(&args.input, config)?;
    let featurizer = config.featurizer(args.dictionary.as_deref())?;
    let corpus = read_corpus(input)?;
    let pipeline = &featurizer.pipeline;
    let results: Vec<(FieldTags, usize, usize)> = corpus
        .par_iter()
        .map(|enc| {
            let (mut words, mut nps) = (0, 0);
            let mut tags = BTreeMap::new();
            for field in TextField::ALL {
                let ex = pipeline.extract(field.text(enc), Some(field.term_type()));
                words += ex.words;
                nps += ex.noun_phrases;
                if !ex.tags.is_empty() {
                    tags.insert(field.name(), ex.tags);
                }
            }
            (tags, words, nps)
        })
        .collect();
    let mut c = ExtractCounters { records: corpus.len(), ..Default::default() };
    for (tags, words, nps) in &results {
        c.words += words;
        c.noun_phrases += nps;
        c.tags += tags.values().map(Vec::len).sum::<usize>();
        c.reason_for_visit_tags += tags.get(TextField::ReasonForVisit.name()).map_or(0, Vec::len);
    }
    if c.records > 0 {
        c.average_tags_per_encounter = c.tags as f64 / c.records as f64;
        c.average_reason_for_visit_tags_per_encounter = c.reason_for_visit_tags as f64 / c.records as f64;
    }
    write_jsonl(&args.out, corpus.iter().zip(results).map(|(enc, (tags, _, _))| TagLine { id: &enc.id, tags }))?;
    let settings = json!({ "command": "extract", "dictionary_entries": pipeline.dictionary().len(), "match": pipeline.config() });
    write_manifest(
        &args.out,
        "extract",
        &Provenance::new(&settings, seed),
        serde_json::to_value(c).expect("counters serialize"),
    )?;
    println!("records                                  {}", c.records);
    println!("total free text words processed          {}", c.words);
    println!("noun phrases                             {}", c.noun_phrases);
    println!("clinical features extracted              {}", c.tags);
    println!("average clinical features per encounter  {:.2}", c.average_tags_per_encounter);
    println!("average reason-for-visit features        {:.2}", c.average_reason_for_visit_tags_per_encounter);
    Ok(())
}

fn train_config(config: &RunConfig, overrides: &TrainOverrides, seed: u64) -> Result<(TrainConfig, usize), AppError> {
    let mut tc = config.train;
    tc.seed = seed;
    if let Some(r) = overrides.rounds {
        tc.n_rounds = r;
    }
    if let Some(d) = overrides.max_depth {
        tc.max_depth = d;
    }
    if let Some(lr) = overrides.learning_rate {
        tc.learning_rate = lr;
    }
    tc.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    Ok((tc, overrides.min_frequency.unwrap_or(config.features.min_frequency)))
}

fn removal_counts(removed: &[(TriageEncounter, crate::ingest::RemovalReason)]) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::new();
    for (_, reason) in removed {
        *counts.entry(reason.as_str()).or_insert(0) += 1;
    }
    counts
}

fn cmd_train(args: &TrainArgs, config: &RunConfig, seed: u64) -> Result<(), AppError> {
    let input = input_path(&args.input, config)?;
    let model_path = args
        .model
        .clone()
        .or_else(|| config.paths.output_dir.as_ref().map(|d| d.join("model.json")))
        .ok_or_else(|| AppError::Usage("an output model path is required (--model or paths.output_dir)".into()))?;
    let (tc, min_frequency) = train_config(config, &args.train, seed)?;
    let featurizer = config.featurizer(None)?;
    let corpus = read_corpus(input)?;
    let n_input = corpus.len();
    let filtered = filter_usable(corpus, &featurizer.vital_ranges);
    let mut usable = filtered.usable;

    let mut update = None;
    let mut deleted = 0;
    if let Some(path) = &args.use_verified_labels {
        let review = parse_review(open(path)?).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
        let u = apply_verified_labels(&mut usable, &review.verified).map_err(|e| AppError::Data(e.to_string()))?;
        let before = usable.len();
        usable.retain(|e| !review.deleted.contains_key(&e.id));
        deleted = before - usable.len();
        println!("verified labels: {} changed, {} confirmed, {} records deleted", u.changed, u.confirmed, deleted);
        update = Some(u);
    }

    let label = |e: &TriageEncounter| match args.label {
        LabelSource::Training => e.training_label(),
        LabelSource::Nurse => e.nurse_esi,
        LabelSource::Verified => e.verified_esi,
        LabelSource::Gold => e.gold_esi,
    };
    let labeled: Vec<&TriageEncounter> = usable.iter().filter(|e| label(e).is_some()).collect();
    let skipped = usable.len() - labeled.len();
    if labeled.is_empty() {
        return Err(AppError::Data("degenerate dataset: no usable records carry the requested label".into()));
    }
    let labels: Vec<Esi> = labeled.iter().map(|e| label(e).expect("filtered")).collect();
    let encounters: Vec<TriageEncounter> = labeled.into_iter().cloned().collect();
    let vectors: Vec<FeatureVector> = featurizer.featurize_all(&encounters, None).into_iter().map(|f| f.vector).collect();
    let refs: Vec<&FeatureVector> = vectors.iter().collect();
    let mut model = fit(&refs, &labels, min_frequency, &tc).map_err(|e| AppError::Data(format!("degenerate dataset: {e}")))?;

    let settings = json!({
        "command": "train",
        "train": tc,
        "min_frequency": min_frequency,
        "label": args.label,
        "verified_labels": args.use_verified_labels.is_some(),
    });
    let provenance = Provenance::new(&settings, seed);
    model.provenance = Some(provenance.clone());
    write_text(&model_path, &model.to_json())?;
    let mut loss = String::from("round\tlog_loss\n");
    for (i, l) in model.training_log_loss.iter().enumerate() {
        loss.push_str(&format!("{}\t{l}\n", i + 1));
    }
    write_text(&model_path.with_extension("loss.tsv"), &loss)?;
    let details = json!({
        "records_input": n_input,
        "records_removed": removal_counts(&filtered.removed),
        "records_deleted_by_review": deleted,
        "records_without_label": skipped,
        "records_trained": labels.len(),
        "label_counts": esi_counts(labels.iter().copied().map(Some)),
        "label_update": update,
        "features": model.feature_names.len(),
        "trees": model.n_trees(),
        "final_log_loss": model.training_log_loss.last(),
    });
    write_manifest(&model_path, "train", &provenance, details)?;
    println!(
        "trained on {} records, {} features, {} trees; final training log-loss {:.6}",
        labels.len(),
        model.feature_names.len(),
        model.n_trees(),
        model.training_log_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn split_named(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let name = path.file_stem().map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalLabel {
    id: String,
    esi: Esi,
}

fn read_external(path: &Path) -> Result<BTreeMap<String, Esi>, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let label: ExternalLabel =
            serde_json::from_str(line).map_err(|e| AppError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.insert(label.id, label.esi);
    }
    Ok(out)
}

fn bootstrap_config(args: &EvaluateArgs, config: &RunConfig, seed: u64) -> Result<BootstrapConfig, AppError> {
    let b = BootstrapConfig {
        n_resamples: args.resamples.unwrap_or(config.eval.n_resamples),
        seed,
        level: args.level.unwrap_or(config.eval.level),
    };
    if !(b.level > 0.0 && b.level < 1.0) {
        return Err(AppError::Usage(format!("--level must lie in (0, 1), got {}", b.level)));
    }
    Ok(b)
}

fn write_evaluation(eval: &Evaluation, out_dir: Option<&Path>, details: serde_json::Value) -> Result<String, AppError> {
    let text = evaluation_text(eval);
    if let Some(dir) = out_dir {
        let json_path = dir.join("report.json");
        write_json(&json_path, eval)?;
        write_text(&dir.join("report.txt"), &text)?;
        let provenance = eval.provenance.clone().expect("evaluation carries provenance");
        write_manifest(&json_path, "evaluate", &provenance, details)?;
    }
    Ok(text)
}

fn cmd_evaluate(args: &EvaluateArgs, config: &RunConfig, seed: u64) -> Result<(), AppError> {
    let bootstrap = bootstrap_config(args, config, seed)?;
    let out_dir = args.out_dir.as_deref().or(config.paths.output_dir.as_deref());
    if let Some(Fixture::SuppTable2) = args.fixture {
        let m = ConfusionMatrix::supp_table_2();
        let mut truth = Vec::new();
        let mut nurse = Vec::new();
        for (t, row) in m.counts.iter().enumerate() {
            for (a, &count) in row.iter().enumerate() {
                truth.extend(std::iter::repeat_n(Esi::ALL[t], count as usize));
                nurse.extend(std::iter::repeat_n(Esi::ALL[a], count as usize));
            }
        }
        let rater = Rater { name: "nurse".into(), output: RaterOutput::Labels(nurse) };
        let report = evaluate_rater(&truth, &rater, &bootstrap).map_err(|e| AppError::Data(e.to_string()))?;
        let settings = json!({ "command": "evaluate", "fixture": "supp-table-2", "bootstrap": bootstrap });
        println!("accuracy {:.5}", report.accuracy.value);
        let eval = Evaluation {
            provenance: Some(Provenance::new(&settings, seed)),
            truth: "verified (supp-table-2 fixture)".into(),
            n_records: truth.len(),
            bootstrap,
            raters: vec![report],
            external_mean_accuracy: None,
            subgroups: Vec::new(),
            disposition: Vec::new(),
        };
        let text = write_evaluation(&eval, out_dir, json!({ "fixture": "supp-table-2", "records": truth.len() }))?;
        print!("{text}");
        return Ok(());
    }

    let input = input_path(&args.input, config)?;
    let groupers = args
        .subgroups
        .iter()
        .chain(if args.subgroups.is_empty() { config.eval.subgroups.iter() } else { [].iter() })
        .map(|s| {
            Grouper::parse(s)
                .ok_or_else(|| AppError::Usage(format!("unknown subgroup {s:?}; use site, age, high_risk or disposition")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let featurizer = config.featurizer(None)?;
    let truth_of = |e: &TriageEncounter| match args.truth {
        TruthSource::Gold => e.gold_esi,
        TruthSource::Verified => e.verified_esi,
    };
    let records: Vec<TriageEncounter> = read_corpus(input)?.into_iter().filter(|e| truth_of(e).is_some()).collect();
    if records.is_empty() {
        return Err(AppError::Data(format!("no records in {} carry a {:?} label", input.display(), args.truth)));
    }
    let truth: Vec<Esi> = records.iter().map(|e| truth_of(e).expect("filtered")).collect();

    let mut raters = Vec::new();
    let mut model_names = Vec::new();
    let featurized = featurizer.featurize_all(&records, None);
    for arg in &args.models {
        let (name, path) = split_named(arg);
        let text = std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
        let model = BoostedEnsemble::from_json(&text).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
        let proba: Vec<[f64; 5]> = featurized
            .par_iter()
            .map(|f| {
                let p = model.predict_vector(&f.vector).1;
                [p[0], p[1], p[2], p[3], p[4]]
            })
            .collect();
        model_names.push(name.clone());
        raters.push(Rater { name, output: RaterOutput::Probabilities(proba) });
    }
    if !args.no_nurse {
        let nurse: Vec<Esi> = records
            .iter()
            .map(|e| e.nurse_esi.ok_or_else(|| AppError::Data(format!("record {} has no nurse ESI; pass --no-nurse", e.id))))
            .collect::<Result<_, _>>()?;
        raters.push(Rater { name: "nurse".into(), output: RaterOutput::Labels(nurse) });
    }
    let mut external_names = Vec::new();
    for arg in &args.raters {
        let (name, path) = split_named(arg);
        let labels = read_external(&path)?;
        let assigned: Vec<Esi> = records
            .iter()
            .map(|e| {
                labels.get(&e.id).copied().ok_or_else(|| AppError::Data(format!("rater {name} has no label for record {}", e.id)))
            })
            .collect::<Result<_, _>>()?;
        external_names.push(name.clone());
        raters.push(Rater { name, output: RaterOutput::Labels(assigned) });
    }
    if raters.is_empty() {
        return Err(AppError::Usage("nothing to evaluate: give --model, --rater or keep the nurse column".into()));
    }

    let reports = raters
        .iter()
        .map(|r| evaluate_rater(&truth, r, &bootstrap))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AppError::Data(e.to_string()))?;
    let contexts: Vec<RecordContext> = records
        .iter()
        .zip(&featurized)
        .map(|(e, f)| RecordContext {
            site: e.site.clone(),
            age_years: e.age_years,
            high_risk: f.high_risk_flags.clone(),
            disposition: e.disposition,
        })
        .collect();
    let subgroups = subgroup_report(&truth, &contexts, &raters, &groupers, config.eval.min_subgroup, &bootstrap)
        .map_err(|e| AppError::Data(e.to_string()))?;
    let dispositions: Vec<_> = records.iter().map(|e| e.disposition).collect();
    let disposition = if dispositions.iter().any(Option::is_some) {
        let mut tables = vec![disposition_table(&format!("{:?}", args.truth).to_lowercase(), &truth, &dispositions)];
        tables.extend(raters.iter().map(|r| disposition_table(&r.name, &r.output.assigned(), &dispositions)));
        tables
    } else {
        Vec::new()
    };
    let external_mean_accuracy = mean_accuracy(reports.iter().filter(|r| external_names.contains(&r.rater)));
    let settings = json!({
        "command": "evaluate",
        "truth": args.truth,
        "models": model_names,
        "nurse": !args.no_nurse,
        "external": external_names,
        "subgroups": groupers,
        "min_subgroup": config.eval.min_subgroup,
        "bootstrap": bootstrap,
    });
    let eval = Evaluation {
        provenance: Some(Provenance::new(&settings, seed)),
        truth: format!("{:?}", args.truth).to_lowercase(),
        n_records: records.len(),
        bootstrap,
        raters: reports,
        external_mean_accuracy,
        subgroups,
        disposition,
    };
    let text = write_evaluation(&eval, out_dir, json!({ "records": records.len(), "raters": eval.raters.len() }))?;
    if out_dir.is_some() {
        print!("{}", summary_table(&eval.raters));
    } else {
        print!("{text}");
    }
    Ok(())
}

fn cmd_kfold_review(args: &KfoldArgs, config: &RunConfig, seed: u64) -> Result<(), AppError> {
    let input = input_path(&args.input, config)?;
    let (tc, min_frequency) = train_config(config, &args.train, seed)?;
    let kc = KFoldConfig {
        k: args.k.unwrap_or(config.kfold.k),
        seed,
        stratified: config.kfold.stratified && !args.no_stratify,
        min_frequency,
    };
    let featurizer = config.featurizer(None)?;
    let filtered = filter_usable(read_corpus(input)?, &featurizer.vital_ranges);
    let usable = filtered.usable;
    let vectors: Vec<FeatureVector> = featurizer.featurize_all(&usable, None).into_iter().map(|f| f.vector).collect();
    let queue = kfold_disagreements_vectors(&usable, &vectors, &tc, &kc).map_err(|e| AppError::Data(e.to_string()))?;
    write_jsonl(&args.out, &queue.entries)?;
    let mut per_fold = vec![0usize; kc.k];
    for e in &queue.entries {
        per_fold[e.fold] += 1;
    }
    let settings = json!({ "command": "kfold-review", "train": tc, "kfold": kc });
    let details = json!({
        "records": queue.n_records,
        "records_removed": removal_counts(&filtered.removed),
        "queued": queue.entries.len(),
        "queued_per_fold": per_fold,
        "queued_by_nurse_esi": esi_counts(queue.entries.iter().map(|e| Some(e.nurse_esi))),
    });
    write_manifest(&args.out, "kfold-review", &Provenance::new(&settings, seed), details)?;
    println!("queued {} of {} records for review ({} folds)", queue.entries.len(), queue.n_records, kc.k);
    Ok(())
}
