use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gig_core::data::{
    parse_ontology, serialize_ontology, synthesize_corpus, tokenize, DatasetSplit, SynthConfig, TermId,
    Vocabulary,
};
use gig_core::eval::{export_attention, score_corpus, ScoreReport};
use gig_core::experiment::{
    evaluate, gradient_suite, metric_suite, run_ablation, run_cross_domain, Corpus, RunSpec, TrainedRun,
};
use gig_core::model::{ExampleBuilder, GenerationModel, ModelConfig, Setting, Strategy};
use gig_core::tensor::GradCheckConfig;
use gig_core::training::Trainer;
use serde::{Deserialize, Serialize};

use crate::config::{output_path, ExperimentConfig};
use crate::error::CliError;
use crate::manifest::OutDir;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable value")
}

fn strategy(beam: Option<usize>) -> Strategy {
    match beam {
        Some(k) if k > 1 => Strategy::Beam(k),
        _ => Strategy::Greedy,
    }
}

// ---------------------------------------------------------------- build-data

#[derive(Debug, Serialize)]
pub struct BuildArgs {
    pub corpus: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    pub synth_seed: u64,
    pub split_seed: u64,
    pub min_count: usize,
    pub out: PathBuf,
}

pub fn build_data(args: &BuildArgs) -> Result<(), CliError> {
    let ontology = match (&args.corpus, &args.synth) {
        (Some(path), None) => {
            let text = read(path)?;
            parse_ontology(text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        (None, Some(cfg)) => synthesize_corpus(cfg, args.synth_seed)?,
        _ => return Err(CliError::Usage("build-data needs exactly one of --corpus or --synth".into())),
    };
    let name = args
        .out
        .file_name()
        .map_or_else(|| "corpus".to_string(), |n| n.to_string_lossy().into_owned());
    let corpus = Corpus::prepare(&name, ontology, args.split_seed, args.min_count)?;
    let stats = corpus.ontology.stats();
    let mut out = OutDir::create(&output_path(&args.out))?;
    out.write("corpus.txt", serialize_ontology(&corpus.ontology).as_bytes())?;
    out.write_json("split.json", &corpus.split)?;
    out.write("vocab.txt", corpus.vocab.to_text().as_bytes())?;
    out.write_json("stats.json", &stats)?;
    println!(
        "{} terms, {} genes, {} described, {} is-a edges, mean description length {:.2}",
        stats.terms, stats.genes, stats.described_terms, stats.isa_edges, stats.mean_description_length
    );
    println!(
        "split {}/{}/{}, vocabulary {} tokens (min count {})",
        corpus.split.train.len(),
        corpus.split.validation.len(),
        corpus.split.test.len(),
        corpus.vocab.len(),
        args.min_count
    );
    println!("wrote {}", out.path().display());
    out.finish("build-data", args, vec![args.split_seed])
}

/// Reads a directory written by `build-data`.
pub fn load_data(dir: &Path) -> Result<Corpus, CliError> {
    let corpus_path = dir.join("corpus.txt");
    let text = read(&corpus_path)?;
    let ontology = parse_ontology(text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", corpus_path.display())))?;
    let split: DatasetSplit = serde_json::from_str(&read(&dir.join("split.json"))?)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.join("split.json").display())))?;
    let vocab = Vocabulary::from_text(&read(&dir.join("vocab.txt"))?)?;
    let name = dir
        .file_name()
        .map_or_else(|| "corpus".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Corpus {
        name,
        ontology,
        split,
        vocab,
    })
}

fn split_ids(corpus: &Corpus, split: &str) -> Result<Vec<TermId>, CliError> {
    match split {
        "train" => Ok(corpus.split.train.clone()),
        "validation" => Ok(corpus.split.validation.clone()),
        "test" => Ok(corpus.split.test.clone()),
        "all" => Ok(corpus.ontology.described_terms()),
        other => Err(CliError::Usage(format!(
            "unknown split {other:?} (expected train, validation, test or all)"
        ))),
    }
}

// ---------------------------------------------------------------- models on disk

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    config: ModelConfig,
    vocab_size: usize,
    seed: u64,
}

fn save_model(out: &mut OutDir, run: &TrainedRun, seed: u64, prefix: &str) -> Result<(), CliError> {
    let mut params = Vec::new();
    run.model.write_params(&mut params)?;
    out.write(&format!("{prefix}params.bin"), &params)?;
    out.write_json(
        &format!("{prefix}model.json"),
        &ModelMeta {
            config: run.model.config().clone(),
            vocab_size: run.model.vocab_size(),
            seed,
        },
    )?;
    out.write(&format!("{prefix}history.jsonl"), run.history.as_bytes())?;
    out.write_json(&format!("{prefix}summary.json"), &run.summary)?;
    Ok(())
}

pub fn load_model(dir: &Path, vocab: &Vocabulary) -> Result<GenerationModel, CliError> {
    let meta_path = dir.join("model.json");
    let meta: ModelMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", meta_path.display())))?;
    if meta.vocab_size != vocab.len() {
        return Err(CliError::Data(format!(
            "model was trained with {} vocabulary entries, data directory has {}",
            meta.vocab_size,
            vocab.len()
        )));
    }
    let mut model = GenerationModel::new(meta.config, meta.vocab_size, meta.seed)?;
    let params = dir.join("params.bin");
    let file = fs::File::open(&params).map_err(|e| CliError::io(&params, e))?;
    model.read_params(std::io::BufReader::new(file))?;
    Ok(model)
}

// ---------------------------------------------------------------- train

pub struct TrainArgs {
    pub config: ExperimentConfig,
    pub setting: Option<Setting>,
    pub seed: Option<u64>,
    pub resume: bool,
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = &args.config;
    let corpus = load_data(&cfg.data[0])?;
    let seed = args.seed.unwrap_or(cfg.seeds[0]);
    let mut model_cfg = cfg.model.clone();
    if let Some(s) = args.setting {
        model_cfg = model_cfg.with_setting(s);
    }
    let spec = RunSpec {
        model: model_cfg,
        train: gig_core::training::TrainConfig {
            seed,
            ..cfg.train.clone()
        },
    };
    let mut out = OutDir::create(&cfg.output_dir())?;
    let train_ex = corpus.examples(&spec.model, &corpus.split.train)?;
    let val_ex = corpus.examples(&spec.model, &corpus.split.validation)?;
    let model = GenerationModel::new(spec.model.clone(), corpus.vocab.len(), seed)?;
    let state_path = out.path().join("trainer.bin");
    let mut trainer = if args.resume {
        let file = fs::File::open(&state_path).map_err(|e| CliError::io(&state_path, e))?;
        Trainer::resume(
            model,
            spec.train.clone(),
            corpus.vocab.clone(),
            train_ex,
            val_ex,
            std::io::BufReader::new(file),
        )?
    } else {
        Trainer::new(model, spec.train.clone(), corpus.vocab.clone(), train_ex, val_ex)?
    };
    while !trainer.is_done() {
        let r = trainer.step()?;
        if let Some(v) = &r.validation {
            println!(
                "step {} epoch {} validation loss {:.4} BLEU {:.2}",
                v.step,
                v.epoch,
                v.loss,
                v.bleu.unwrap_or(f64::NAN)
            );
            let mut state = Vec::new();
            trainer.save_checkpoint(&mut state)?;
            out.write("trainer.bin", &state)?;
        }
    }
    let mut state = Vec::new();
    trainer.save_checkpoint(&mut state)?;
    out.write("trainer.bin", &state)?;
    trainer.restore_best()?;
    let summary = trainer.summary();
    let history = trainer.history_jsonl();
    let run = TrainedRun {
        model: trainer.into_model(),
        summary,
        history,
    };
    save_model(&mut out, &run, seed, "")?;
    println!(
        "trained {} steps over {} epochs{}; best {:?}",
        run.summary.steps,
        run.summary.epochs,
        if run.summary.stopped_early { " (early stop)" } else { "" },
        run.summary.best
    );
    out.finish("train", &spec, vec![seed])
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Serialize)]
pub struct GenerateArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    pub split: String,
    pub terms: Vec<String>,
    pub beam: Option<usize>,
    pub attention: bool,
    pub top_k: usize,
    pub out: Option<PathBuf>,
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let corpus = load_data(&args.data)?;
    let model = load_model(&args.model, &corpus.vocab)?;
    let ids: Vec<TermId> = if args.terms.is_empty() {
        split_ids(&corpus, &args.split)?
    } else {
        args.terms.iter().map(|t| TermId::from(t.as_str())).collect()
    };
    let builder = ExampleBuilder::new(&corpus.ontology, &corpus.vocab, model.config());
    let strat = strategy(args.beam);
    let mut lines = String::new();
    let mut attention = String::new();
    let mut stdout = std::io::stdout().lock();
    for id in &ids {
        let ex = builder.prepare(id)?;
        let g = model.generate(&ex, strat)?;
        let text = corpus.vocab.decode(&g.tokens).join(" ");
        let _ = writeln!(stdout, "{id}\t{text}");
        lines.push_str(&format!("{id}\t{text}\n"));
        if args.attention {
            for rec in export_attention(&model, &builder, id, args.top_k, strat)? {
                let nodes: Vec<String> = rec.nodes.iter().map(|n| format!("{} ({:.3})", n.label, n.weight)).collect();
                let _ = writeln!(stdout, "  {:>3} {:<16} {}", rec.position, rec.token, nodes.join(", "));
                attention.push_str(&to_json(&rec));
                attention.push('\n');
            }
        }
    }
    let out_dir = args
        .out
        .clone()
        .map(|p| output_path(&p))
        .unwrap_or_else(|| args.model.join(format!("generate-{}", args.split)));
    let mut out = OutDir::create(&out_dir)?;
    out.write("generations.tsv", lines.as_bytes())?;
    if args.attention {
        out.write("attention.jsonl", attention.as_bytes())?;
    }
    out.finish("generate", args, vec![])
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Serialize)]
pub struct EvalArgs {
    pub data: PathBuf,
    pub model: Option<PathBuf>,
    pub hypotheses: Option<PathBuf>,
    pub split: String,
    pub beam: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Reads `term<TAB>text` lines.
fn read_hypotheses(path: &Path) -> Result<Vec<(String, Vec<String>)>, CliError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, hyp) = line
            .split_once('\t')
            .ok_or_else(|| CliError::Data(format!("{}:{}: expected term<TAB>text", path.display(), i + 1)))?;
        out.push((id.trim().to_string(), tokenize(hyp)));
    }
    Ok(out)
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let corpus = load_data(&args.data)?;
    let report: ScoreReport = match (&args.model, &args.hypotheses) {
        (Some(dir), None) => {
            let model = load_model(dir, &corpus.vocab)?;
            let ids = split_ids(&corpus, &args.split)?;
            let label = dir.display().to_string();
            evaluate(&model, &corpus.vocab, &corpus.ontology, &ids, strategy(args.beam), &label, &args.split, 0)?
        }
        (None, Some(path)) => {
            let mut items = Vec::new();
            for (id, hyp) in read_hypotheses(path)? {
                let term = corpus.ontology.term(&TermId::from(id.as_str()))?;
                let reference = term
                    .description
                    .clone()
                    .ok_or_else(|| CliError::Data(format!("term {id} has no description")))?;
                items.push((id, hyp, reference));
            }
            score_corpus(&items, &path.display().to_string(), &args.split, 0)?
        }
        _ => return Err(CliError::Usage("eval needs exactly one of --model or --hypotheses".into())),
    };
    println!("{}", report.summary_line());
    let out_dir = match (&args.out, &args.model, &args.hypotheses) {
        (Some(p), _, _) => output_path(p),
        (None, Some(m), _) => m.join(format!("eval-{}", args.split)),
        (None, None, Some(h)) => h.with_extension("eval"),
        _ => unreachable!("checked above"),
    };
    let mut out = OutDir::create(&out_dir)?;
    out.write("report.jsonl", report.to_jsonl().as_bytes())?;
    out.write("report.txt", format!("{}\n", report.summary_line()).as_bytes())?;
    out.finish("eval", args, vec![])
}

// ---------------------------------------------------------------- ablate

pub fn ablate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let corpus = load_data(&cfg.data[0])?;
    let settings = cfg.parsed_settings()?;
    let base = RunSpec {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
    };
    let mut out = OutDir::create(&cfg.output_dir())?;
    let mut runs = String::new();
    let report = run_ablation(&corpus, &base, &settings, &cfg.seeds, |outcome, run| {
        let prefix = format!("runs/{}-seed{}/", outcome.setting.label(), outcome.seed);
        save_model(&mut out, run, outcome.seed, &prefix).map_err(|e| gig_core::experiment::ExperimentError::Config(e.to_string()))?;
        out.write(&format!("{prefix}report.jsonl"), outcome.report.to_jsonl().as_bytes())
            .map_err(|e| gig_core::experiment::ExperimentError::Config(e.to_string()))?;
        println!(
            "{:<8} seed {:<3} BLEU {:6.2}  ROUGE-L {:6.2}  METEOR {:6.2}  ({} steps)",
            outcome.setting.label(),
            outcome.seed,
            outcome.report.bleu,
            outcome.report.rouge_l,
            outcome.report.meteor,
            outcome.summary.steps
        );
        let mut record = outcome.clone();
        record.report.examples.clear();
        runs.push_str(&to_json(&record));
        runs.push('\n');
        Ok(())
    })?;
    let table = report.to_table();
    print!("{table}");
    out.write("runs.jsonl", runs.as_bytes())?;
    out.write_json("ablation.json", &report)?;
    out.write("ablation.txt", table.as_bytes())?;
    out.finish("ablate", cfg, cfg.seeds.clone())
}

// ---------------------------------------------------------------- cross-domain

pub fn cross_domain(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.data.len() < 2 {
        return Err(CliError::Usage("cross-domain needs at least two data directories".into()));
    }
    let corpora = cfg.data.iter().map(|d| load_data(d)).collect::<Result<Vec<_>, _>>()?;
    let seed = cfg.seeds[0];
    let spec = RunSpec {
        model: cfg.model.clone(),
        train: gig_core::training::TrainConfig {
            seed,
            ..cfg.train.clone()
        },
    };
    let mut out = OutDir::create(&cfg.output_dir())?;
    let matrix = run_cross_domain(&corpora, &spec, |source, run| {
        save_model(&mut out, run, seed, &format!("models/{}/", source.name))
            .map_err(|e| gig_core::experiment::ExperimentError::Config(e.to_string()))
    })?;
    let table = matrix.to_table();
    print!("{table}");
    let records: String = matrix.records().iter().map(|r| to_json(r) + "\n").collect();
    out.write("cells.jsonl", records.as_bytes())?;
    out.write_json("matrix.json", &matrix)?;
    out.write("matrix.txt", table.as_bytes())?;
    out.finish("cross-domain", cfg, vec![seed])
}

// ---------------------------------------------------------------- selftest

pub fn selftest() -> Result<(), CliError> {
    let mut outcomes = metric_suite()?;
    outcomes.extend(gradient_suite(GradCheckConfig::default())?);
    let mut failed = 0;
    for o in &outcomes {
        println!("{} {:<28} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} self-test checks failed")));
    }
    println!("all {} checks passed", outcomes.len());
    Ok(())
}

pub fn load_synth(path: &Path) -> Result<SynthConfig, CliError> {
    toml::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
