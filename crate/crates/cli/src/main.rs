use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kpix::corpus::io::{annotations_to_string, parse_annotations};
use kpix::corpus::{
    generate_synthetic_corpus, read_annotations, split_corpus, tokenize_words, Document, GeneratorConfig, Sentence,
    Splits, REFERENCE_RATIOS,
};
use kpix::evaluation::{evaluate, render_comparison};
use kpix::relations::output::{parse_predictions, write_predictions};
use kpix::training::search::{default_seeds, render_search};
use kpix::training::trainer::{predict_all, prepare_all};
use kpix::training::{grid_search, multi_seed_with, train, JointModel, SearchSpace, TrainConfig};
use kpix::{Error, Result};

const SPLIT_FILES: [&str; 3] = ["train.jsonl", "validation.jsonl", "test.jsonl"];

#[derive(Debug, Parser)]
#[command(name = "kpix", version, about = "Joint KPI entity and relation extraction")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Training config (TOML). `default` or no value uses the built-in defaults.
    #[arg(long, global = true, env = "KPIX_CONFIG")]
    config: Option<String>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one config field, e.g. `--set masking=false`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus split into train/validation/test.
    GenerateCorpus {
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML); defaults apply to missing fields.
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        documents: Option<usize>,
    },
    /// Train one model; writes a checkpoint, the metrics log and the test report.
    Train {
        /// Directory with train.jsonl, validation.jsonl and test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every configuration of the search space and rank by validation relation F1.
    Gridsearch {
        #[arg(long, required_unless_present = "print_space")]
        data: Option<PathBuf>,
        /// Comma-separated subset of axes to search; all axes by default.
        #[arg(long, value_delimiter = ',')]
        axes: Vec<String>,
        /// List the search space and exit.
        #[arg(long)]
        print_space: bool,
        /// Directory for `ranking.txt` and `ranking.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain on train+validation with several seeds and report mean and std on test.
    Multiseed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Directory for `multiseed.txt` and `multiseed.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict entities and relations with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Annotation file whose words are tagged (gold labels are ignored).
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        input: Option<PathBuf>,
        /// Plain text, one sentence per line.
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction file against gold annotations.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an annotation or prediction file against its schema.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = FileKind::Auto)]
        kind: FileKind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FileKind {
    Auto,
    Annotations,
    Predictions,
}

fn load_config(global: &GlobalArgs) -> Result<TrainConfig> {
    let mut config = match global.config.as_deref() {
        None | Some("default") => TrainConfig::default(),
        Some(path) => TrainConfig::from_toml(&kpix::io::read_to_string(Path::new(path))?)?,
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    for kv in &global.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(k.trim(), v.trim())?;
    }
    config.validate()?;
    Ok(config)
}

/// Provenance header written at the top of every artifact.
fn header(command: &str, body: &str) -> String {
    format!("kpix {} {command}\n{body}", env!("CARGO_PKG_VERSION"))
}

fn read_splits(dir: &Path) -> Result<Splits> {
    let read = |name: &str, required: bool| -> Result<Vec<Document>> {
        let path = dir.join(name);
        if !required && !path.exists() {
            return Ok(vec![]);
        }
        read_annotations(&path)
    };
    Ok(Splits {
        train: read(SPLIT_FILES[0], true)?,
        validation: read(SPLIT_FILES[1], false)?,
        test: read(SPLIT_FILES[2], false)?,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    kpix::io::write_atomic(path, text.as_bytes())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.global)?;
    match cli.command {
        Command::GenerateCorpus {
            out,
            generator,
            documents,
        } => {
            let mut gen = match generator {
                Some(p) => GeneratorConfig::from_toml(&kpix::io::read_to_string(&p)?)?,
                None => GeneratorConfig::default(),
            };
            if let Some(n) = documents {
                gen.documents = n;
            }
            let docs = generate_synthetic_corpus(&gen, config.seed)?;
            let splits = split_corpus(docs, REFERENCE_RATIOS, config.seed)?;
            let head = header("generate-corpus", &format!("seed = {}\n{}", config.seed, gen.to_toml()));
            for (name, docs) in SPLIT_FILES.iter().zip([&splits.train, &splits.validation, &splits.test]) {
                write(&out.join(name), &annotations_to_string(docs, &head))?;
            }
            write(&out.join("generator.toml"), &gen.to_toml())?;
            println!(
                "wrote {} / {} / {} sentences to {}",
                Splits::num_sentences(&splits.train),
                Splits::num_sentences(&splits.validation),
                Splits::num_sentences(&splits.test),
                out.display()
            );
        }
        Command::Train { data, out } => {
            let splits = read_splits(&data)?;
            let result = train(&config, &splits, |e| eprintln!("{}", e.log_line()))?;
            let head = kpix::corpus::io::comment_block(&header("train", &config.to_toml()));
            result.model.save(&out, result.steps)?;
            write(&out.join("metrics.log"), &(head.clone() + &result.metrics_log()))?;
            let mut summary = format!("best_epoch = {}\n", result.best_epoch);
            if let Some(test) = &result.test {
                summary.push_str(&test.render());
            }
            write(&out.join("report.txt"), &(head + &summary))?;
            print!("{summary}");
        }
        Command::Gridsearch {
            data,
            axes,
            print_space,
            out,
        } => {
            let full = SearchSpace::full();
            let space = if axes.is_empty() {
                full
            } else {
                full.subset(&axes.iter().map(String::as_str).collect::<Vec<_>>())?
            };
            if print_space {
                print!("{}", space.render());
                return Ok(());
            }
            let splits = read_splits(&data.expect("clap requires --data"))?;
            let results = grid_search(&config, &space, &splits, |r| {
                let cfg: Vec<String> = r.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
                eprintln!("{} val_relation_f1={:.4}", cfg.join(" "), r.validation.relation[2]);
            })?;
            let table = render_search(&results);
            print!("{table}");
            if let Some(dir) = out {
                let head = kpix::corpus::io::comment_block(&header("gridsearch", &config.to_toml()));
                write(&dir.join("ranking.txt"), &(head + &table))?;
                let records: String = results
                    .iter()
                    .map(|r| serde_json::to_string(r).expect("result serializes") + "\n")
                    .collect();
                write(&dir.join("ranking.jsonl"), &records)?;
            }
        }
        Command::Multiseed { data, runs, out } => {
            let splits = read_splits(&data)?;
            let seeds = default_seeds(config.seed, runs);
            let report = multi_seed_with(&config, &splits, &seeds, |seed, s| {
                eprintln!("seed={seed} entity_f1={:.4} relation_f1={:.4}", s.entity[2], s.relation[2]);
            })?;
            let table = render_comparison(std::slice::from_ref(&report.summary));
            print!("{table}");
            if let Some(dir) = out {
                let head = kpix::corpus::io::comment_block(&header("multiseed", &config.to_toml()));
                write(&dir.join("multiseed.txt"), &(head + &table))?;
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                write(&dir.join("multiseed.json"), &(json + "\n"))?;
            }
        }
        Command::Predict {
            checkpoint,
            input,
            text,
            out,
        } => {
            let model = JointModel::load(&checkpoint)?;
            let docs = match (input, text) {
                (Some(p), _) => read_annotations(&p)?
                    .into_iter()
                    .map(|mut d| {
                        for s in &mut d.sentences {
                            s.entities.clear();
                            s.relations.clear();
                        }
                        d
                    })
                    .collect(),
                (None, Some(p)) => vec![text_document(&p)?],
                (None, None) => unreachable!("clap requires --input or --text"),
            };
            let prepared = prepare_all(&model, &docs)?;
            let predictions = predict_all(&model, &prepared)?;
            let head = header(
                "predict",
                &format!("checkpoint = {:?}\n{}", checkpoint.display().to_string(), model.config.to_toml()),
            );
            write_predictions(&out, &predictions, &head)?;
            println!("wrote {} predictions to {}", predictions.len(), out.display());
        }
        Command::Evaluate { predictions, gold, out } => {
            let preds = kpix::relations::output::read_predictions(&predictions)?;
            let gold = read_annotations(&gold)?;
            let report = evaluate(&preds, &gold)?.render();
            print!("{report}");
            if let Some(path) = out {
                write(&path, &report)?;
            }
        }
        Command::Validate { file, kind } => {
            let text = kpix::io::read_to_string(&file)?;
            let kind = match kind {
                FileKind::Auto => sniff(&text),
                k => k,
            };
            match kind {
                FileKind::Predictions => {
                    let n = parse_predictions(&file, &text)?.len();
                    println!("ok predictions sentences={n}");
                }
                _ => {
                    let docs = parse_annotations(&file, &text)?;
                    println!(
                        "ok annotations documents={} sentences={}",
                        docs.len(),
                        Splits::num_sentences(&docs)
                    );
                }
            }
        }
    }
    Ok(())
}

/// Annotation records carry `words`; prediction records do not.
fn sniff(text: &str) -> FileKind {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
    match first.and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok()) {
        Some(v) if v.get("words").is_none() => FileKind::Predictions,
        _ => FileKind::Annotations,
    }
}

fn text_document(path: &Path) -> Result<Document> {
    let text = kpix::io::read_to_string(path)?;
    let sentences = text
        .lines()
        .map(tokenize_words)
        .filter(|w| !w.is_empty())
        .map(Sentence::new)
        .collect();
    let id = path
        .file_stem()
        .map_or_else(|| "text".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Document { id, sentences })
}

fn usage_error(e: &Error) -> bool {
    match e {
        Error::Config(_) => true,
        Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
        _ => false,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("kpix: error[usage]: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kpix: error[{}]: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(if usage_error(&e) { 2 } else { 1 })
        }
    }
}
