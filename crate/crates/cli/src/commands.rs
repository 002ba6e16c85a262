use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use serde_json::json;
use viassist_core::backend::mock::{
    FixtureDetector, HashEmbedder, MockAnswerer, OneHotEmbedder, TemplateParaphraser, UnreachableBackend,
};
use viassist_core::backend::wire::{read_sidecar, sidecar_path};
use viassist_core::backend::{build_prompt, Answerer, Detector, Embedder, HttpBackend, Paraphraser};
use viassist_core::config::Settings;
use viassist_core::dataset::{
    augment_questions, dataset_stats, load_dataset_root, save_dataset, DatasetRecord, LoadOptions, MANIFEST_FILE,
};
use viassist_core::eval::{evaluate, parse_predictions, reference_text, tokenize, EvalError};
use viassist_core::pipeline::{AttemptOutcome, Pipeline, PipelineError, SessionStore};
use viassist_core::sim::{generate_corpus, ClosedLoop, SimulationReport};
use viassist_core::{BoundingBox, ImageBuffer};

use crate::{AnswerArgs, AssessArgs, Cli, Command, DatasetCommand, EvalArgs, Format, GenCorpusArgs, ServeArgs, SimulateArgs};

pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

type CliResult<T = ()> = Result<T, CliError>;

fn bad(error: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: EXIT_BAD_INPUT,
        error: error.into(),
    }
}

fn backend(error: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: EXIT_BACKEND,
        error: error.into(),
    }
}

pub fn run(cli: Cli) -> CliResult {
    let settings = match &cli.config {
        Some(path) => Settings::load(path).map_err(bad)?,
        None => Settings::default(),
    }
    .with_env();
    match cli.command {
        Command::Serve(a) => serve(&settings, a),
        Command::Assess(a) => assess(&settings, a),
        Command::Answer(a) => answer(&settings, a),
        Command::Dataset(c) => dataset(&settings, c),
        Command::Eval(a) => eval(&settings, a),
        Command::Simulate(a) => simulate(&settings, a),
        Command::GenCorpus(a) => gen_corpus(a),
    }
}

fn http(settings: &Settings, url: &str) -> CliResult<Arc<HttpBackend>> {
    Ok(Arc::new(HttpBackend::new(settings.backend(url)).map_err(bad)?))
}

fn detector(settings: &Settings) -> CliResult<Arc<dyn Detector>> {
    Ok(match &settings.detector_url {
        Some(url) => http(settings, url)?,
        None => Arc::new(UnreachableBackend),
    })
}

fn answerer(settings: &Settings, mock: Option<String>) -> CliResult<Arc<dyn Answerer>> {
    Ok(match (mock, &settings.mllm_url) {
        (Some(text), _) => Arc::new(MockAnswerer::always(text)),
        (None, Some(url)) => http(settings, url)?,
        (None, None) => Arc::new(UnreachableBackend),
    })
}

fn load_image(path: &Path) -> CliResult<ImageBuffer> {
    ImageBuffer::open(path).map_err(bad)
}

fn load_annotations(path: Option<&Path>) -> CliResult<Option<Vec<BoundingBox>>> {
    path.map(|p| {
        read_sidecar(p)
            .map(|d| d.boxes)
            .with_context(|| format!("annotations {}", p.display()))
            .map_err(bad)
    })
    .transpose()
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn print_outcome(o: &AttemptOutcome, format: Format) {
    match format {
        Format::Json => {
            let mut v = json!({ "report": o.report, "response": o.response });
            if !o.warnings.is_empty() {
                v["warnings"] = json!(o.warnings);
            }
            print_json(&v);
        }
        Format::Text => {
            println!("mode: {}", o.report.mode);
            println!("{}", o.response.description);
            if let Some(s) = &o.response.suggestion {
                println!("{s}");
            }
            if let Some(a) = &o.response.answer {
                println!("answer: {a}");
            }
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
        }
    }
}

fn serve(settings: &Settings, a: ServeArgs) -> CliResult {
    let mut store = SessionStore::new(a.seed);
    if let Some(path) = &a.journal {
        store = store
            .with_journal(path)
            .with_context(|| format!("journal {}", path.display()))
            .map_err(bad)?;
    }
    let detector: Arc<dyn Detector> = match &a.fixtures {
        Some(dir) => {
            let f = FixtureDetector::from_dir(dir).map_err(bad)?;
            eprintln!("loaded {} fixtures from {}", f.len(), dir.display());
            Arc::new(f)
        }
        None => detector(settings)?,
    };
    let pipeline = Pipeline::new(settings.quality)
        .with_detector(detector)
        .with_answerer(answerer(settings, a.mock_answer)?)
        .with_store(store)
        .with_default_max_attempts(settings.max_attempts);
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", a.host, a.port))
        .map_err(bad)?;
    let rt = tokio::runtime::Runtime::new().map_err(bad)?;
    rt.block_on(viassist_server::serve(Arc::new(pipeline), addr))
        .context("server failed")
        .map_err(bad)
}

fn assess(settings: &Settings, a: AssessArgs) -> CliResult {
    let img = load_image(&a.image)?;
    let annotations = load_annotations(a.annotations.as_deref())?;
    let pipeline = Pipeline::new(settings.quality).with_detector(detector(settings)?);
    let outcome = pipeline.assess(&img, &a.question, annotations).map_err(bad)?;
    print_outcome(&outcome, a.format);
    Ok(())
}

fn answer(settings: &Settings, a: AnswerArgs) -> CliResult {
    let img = load_image(&a.image)?;
    let answerer = answerer(settings, a.mock_answer)?;
    if a.baseline {
        let prompt = build_prompt(&a.question, true).map_err(bad)?;
        let ans = answerer.answer(&prompt, &img).map_err(backend)?;
        match a.format {
            Format::Json => print_json(&json!({ "prompt": prompt.rendered_prompt, "answer": ans.text })),
            Format::Text => println!("{}", ans.text),
        }
        return Ok(());
    }
    let annotations = load_annotations(a.annotations.as_deref())?;
    let pipeline = Pipeline::new(settings.quality)
        .with_detector(detector(settings)?)
        .with_answerer(answerer);
    let session = pipeline.open_session(&a.question, Some(1)).map_err(bad)?;
    match pipeline.submit_attempt(&session.id, &img, annotations) {
        Ok(o) => {
            print_outcome(&o, a.format);
            Ok(())
        }
        Err(PipelineError::BackendUnavailable { error, outcome }) => {
            print_outcome(&outcome, a.format);
            Err(backend(error))
        }
        Err(e) => Err(bad(e)),
    }
}

fn dataset(settings: &Settings, c: DatasetCommand) -> CliResult {
    match c {
        DatasetCommand::Validate { root, skip_images } => {
            let records = load_dataset_root(
                &root,
                LoadOptions {
                    check_images: !skip_images,
                },
            )
            .map_err(bad)?;
            println!("ok: {} records", records.len());
            Ok(())
        }
        DatasetCommand::Stats { root } => {
            let records = load_dataset_root(&root, LoadOptions::default()).map_err(bad)?;
            print_json(&dataset_stats(&records));
            Ok(())
        }
        DatasetCommand::Augment { root, n, out, offline } => {
            let records = load_dataset_root(&root, LoadOptions::default()).map_err(bad)?;
            let paraphraser: Arc<dyn Paraphraser> = match (offline, &settings.mllm_url) {
                (true, _) => Arc::new(TemplateParaphraser),
                (false, Some(url)) => http(settings, url)?,
                (false, None) => return Err(bad(anyhow!("no answer backend configured; pass --offline"))),
            };
            let mut all = Vec::with_capacity(records.len() * (n + 1));
            for r in &records {
                all.push(r.clone());
                all.extend(augment_questions(paraphraser.as_ref(), r, n).map_err(backend)?);
            }
            copy_images(&root, &out, &records)?;
            save_dataset(&all, &out.join(MANIFEST_FILE)).map_err(bad)?;
            println!("wrote {} records ({} new) to {}", all.len(), all.len() - records.len(), out.display());
            Ok(())
        }
    }
}

fn copy_images(from: &Path, to: &Path, records: &[DatasetRecord]) -> CliResult {
    let images: BTreeSet<&str> = records.iter().map(|r| r.image.as_str()).collect();
    for rel in images {
        let src = from.join(rel);
        let dst = to.join(rel);
        if let Some(parent) = dst.parent() {
            fs::create_dir_all(parent).map_err(bad)?;
        }
        if src.is_file() {
            fs::copy(&src, &dst)
                .with_context(|| format!("copy {}", src.display()))
                .map_err(bad)?;
            let side = sidecar_path(&src);
            if side.is_file() {
                fs::copy(&side, sidecar_path(&dst)).map_err(bad)?;
            }
        }
    }
    fs::create_dir_all(to).map_err(bad)
}

fn eval(settings: &Settings, a: EvalArgs) -> CliResult {
    let records = load_dataset_root(&a.dataset, LoadOptions::default()).map_err(bad)?;
    let text = fs::read_to_string(&a.predictions)
        .with_context(|| format!("predictions {}", a.predictions.display()))
        .map_err(bad)?;
    let predictions = parse_predictions(&text).map_err(bad)?;
    let embedder: Arc<dyn Embedder> = match a.embeddings.as_str() {
        "mock" => Arc::new(HashEmbedder::default()),
        "one-hot" => {
            let mut vocab = BTreeSet::new();
            for r in &records {
                vocab.extend(tokenize(&reference_text(r)).tokens().iter().cloned());
            }
            for p in predictions.values() {
                vocab.extend(tokenize(p).tokens().iter().cloned());
            }
            Arc::new(OneHotEmbedder::new(vocab))
        }
        "url" => match &settings.embed_url {
            Some(url) => http(settings, url)?,
            None => return Err(bad(anyhow!("no embed_url configured"))),
        },
        url if url.starts_with("http://") || url.starts_with("https://") => http(settings, url)?,
        other => return Err(bad(anyhow!("unknown embeddings provider {other:?}"))),
    };
    let report = evaluate(&records, &predictions, embedder.as_ref()).map_err(|e| match e {
        EvalError::Backend(_) => backend(e),
        _ => bad(e),
    })?;
    write_or_print(a.out.as_deref(), &report.to_json())?;
    eprintln!(
        "{} records: bertscore {:.4}, rouge-1 {:.4}, rouge-l {:.4}",
        report.overall.count, report.overall.bertscore_f1, report.overall.rouge1_f1, report.overall.rouge_l_f1
    );
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, format!("{text}\n"))
            .with_context(|| format!("write {}", path.display()))
            .map_err(bad),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn simulate(settings: &Settings, a: SimulateArgs) -> CliResult {
    let looper = ClosedLoop::new(settings.quality, a.max_steps);
    let report = SimulationReport::run(a.seed, a.trials, &looper);
    if let Some(dir) = &a.traces {
        fs::create_dir_all(dir).map_err(bad)?;
        for run in &report.runs {
            let path: PathBuf = dir.join(format!("trace-{:04}.json", run.trial));
            let text = serde_json::to_string_pretty(run).expect("serializable");
            fs::write(&path, text).with_context(|| format!("write {}", path.display())).map_err(bad)?;
        }
    }
    if let Some(path) = &a.report {
        let text = serde_json::to_string_pretty(&report).expect("serializable");
        write_or_print(Some(path), &text)?;
    }
    println!(
        "converged {}/{} ({:.1}%) within {} steps",
        report.converged,
        report.trials,
        report.convergence_rate * 100.0,
        report.max_steps
    );
    Ok(())
}

fn gen_corpus(a: GenCorpusArgs) -> CliResult {
    if a.n == 0 {
        return Err(bad(anyhow!("--n must be at least 1")));
    }
    let records = generate_corpus(a.seed, a.n, &a.out).map_err(bad)?;
    println!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}
