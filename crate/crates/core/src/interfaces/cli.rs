//! `campaign` command line.
//!
//! Exit status is 0 on success, 1 on data or storage errors and 2 on usage
//! errors. `--format json` prints one JSON document; `--format csv` is
//! available where the output is tabular.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::{Problem, Result, RuleFormat, TrainSpec};
use crate::cart::Criterion;
use crate::dataset::Dialect;
use crate::kb::{ArtifactKind, Store};
use crate::metrics::ModelKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    /// One JSON document per line; lists put one element on each line.
    JsonLines,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "campaign", version, about = "Decision support for bank telemarketing campaigns")]
pub struct Cli {
    /// Knowledge-base directory.
    #[arg(long, global = true, env = "CAMPAIGN_STORE", default_value = "store")]
    pub store: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Field delimiter of CSV inputs.
    #[arg(long, global = true, default_value = ";")]
    pub delimiter: char,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct ModelArg {
    /// Store artifact id, model file path, `fixture` or `fixture-rules`.
    #[arg(long)]
    pub model: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load and validate a CSV file and print a summary.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        /// Also count records matching this evidence.
        #[arg(long)]
        evidence: Option<String>,
    },
    /// Fit a model and save it to the store.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "dt", value_parser = parse_kind)]
        kind: ModelKind,
        #[arg(long, default_value = "gini")]
        criterion: Criterion,
        #[arg(long, default_value_t = 10)]
        min_parent: usize,
        #[arg(long, default_value_t = 1)]
        min_leaf: usize,
        #[arg(long)]
        max_depth: Option<usize>,
        /// Neighbours for k-NN.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Weight classes equally (LR and k-NN).
        #[arg(long)]
        balanced: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Store directory; overrides `--store`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply weakest-link pruning steps and save the result.
    Prune {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        level: usize,
    },
    /// Export the if-then rules of a tree or rule model.
    Rules {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Classify one encoded record.
    Predict {
        #[command(flatten)]
        model: ModelArg,
        /// Sixteen comma-separated codes.
        #[arg(long)]
        record: String,
    },
    /// Rank campaign strategies toward YES for partial evidence.
    Advise {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        data: PathBuf,
        /// e.g. `poutcome=success; age>=30`
        #[arg(long, default_value = "")]
        evidence: String,
        /// Comma-separated attribute names.
        #[arg(long, value_delimiter = ',')]
        actionable: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        prospective: Option<Vec<String>>,
    },
    /// Re-run a customer with some attributes changed.
    Whatif {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        record: String,
        /// `name=value`, repeatable; values may be labels or codes.
        #[arg(long = "set", value_parser = parse_override)]
        set: Vec<(String, String)>,
    },
    /// Decision path of a record, or reachable paths for evidence.
    Paths {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, conflicts_with = "evidence")]
        record: Option<String>,
        #[arg(long)]
        evidence: Option<String>,
    },
    /// Confusion matrix and rates of a model on a dataset.
    Evaluate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        data: PathBuf,
    },
    /// Holdout comparison of several model kinds.
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "dt,nb,lr,knn")]
        models: String,
        #[arg(long, default_value_t = 0.4)]
        test_fraction: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Knowledge-base artifacts.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "CAMPAIGN_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        /// Dataset used when a request names none.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Holdout seed for comparisons that name none.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
pub enum KbAction {
    /// List artifacts, newest first.
    List {
        #[arg(long)]
        kind: Option<ArtifactKind>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Print an artifact's payload.
    Get { id: String },
    /// Store a file as a new artifact.
    Put {
        #[arg(long)]
        kind: ArtifactKind,
        #[arg(long)]
        file: PathBuf,
        #[arg(long = "tag")]
        tags: Vec<String>,
    },
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model kind `{s}` (dt, nb, lr, knn)"))
}

fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("output serializes") + "\n"
}

fn dialect(c: char) -> Result<Dialect> {
    let d = u8::try_from(c).map_err(|_| Problem::usage("delimiter must be ASCII", "delimiter"))?;
    Ok(Dialect { delimiter: d, ..Default::default() })
}

fn no_csv(format: Format, what: &str) -> Result<()> {
    if format == Format::Csv {
        return Err(Problem::usage(format!("{what} has no csv output"), "format"));
    }
    Ok(())
}

/// Parses `args` (program name first) and runs one subcommand.
pub fn run<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return (code, e.to_string());
        }
    };
    match execute(cli) {
        Ok(out) => (0, out),
        Err(p) => (p.exit_code(), format!("error: {p}\n")),
    }
}

fn open_store(path: &PathBuf) -> Result<Store> {
    Ok(Store::open(path)?)
}

/// Store for read-only lookups; a missing directory is not created.
fn peek_store(path: &PathBuf) -> Result<Option<Store>> {
    if path.is_dir() {
        Ok(Some(open_store(path)?))
    } else {
        Ok(None)
    }
}

pub fn execute(cli: Cli) -> Result<String> {
    let lines = cli.format == Format::JsonLines;
    let format = if lines { Format::Json } else { cli.format };
    let dia = dialect(cli.delimiter)?;
    match cli.command {
        Command::Ingest { data, evidence } => {
            no_csv(format, "ingest")?;
            let ds = super::load_dataset(&data, dia)?;
            let s = super::summarize(&ds, evidence.as_deref())?;
            Ok(match format {
                Format::Json => json(&s),
                _ => {
                    let mut out = format!("{} records ({} yes, {} no)\ndigest {}\n", s.rows, s.yes, s.no, s.digest);
                    if let Some(m) = s.evidence_matches {
                        out.push_str(&format!("{m} records match the evidence\n"));
                    }
                    out
                }
            })
        }
        Command::Train { data, kind, criterion, min_parent, min_leaf, max_depth, k, balanced, seed, out } => {
            no_csv(format, "train")?;
            let ds = super::load_dataset(&data, dia)?;
            let spec = TrainSpec { kind, criterion, min_parent, min_leaf, max_depth, k, balanced, seed };
            let model = super::train(&ds, &spec)?;
            let mut store = open_store(out.as_ref().unwrap_or(&cli.store))?;
            let id = super::store_model(&mut store, &model, Some(ds.provenance.digest.clone()), None)?;
            Ok(match format {
                Format::Json => json(&serde_json::json!({ "id": id, "kind": model.kind() })),
                _ => format!("{id}\n"),
            })
        }
        Command::Prune { model, level } => {
            no_csv(format, "prune")?;
            let mut store = open_store(&cli.store)?;
            let loaded = super::resolve_model(Some(&store), &model.model)?;
            let pruned = super::prune(&loaded, level)?;
            let id = super::store_model(&mut store, &pruned, loaded.dataset_digest.clone(), None)?;
            let leaves = pruned.tree().map_or(0, |t| t.leaf_count());
            Ok(match format {
                Format::Json => json(&serde_json::json!({ "id": id, "leaves": leaves })),
                _ => format!("{id}\n"),
            })
        }
        Command::Rules { model } => {
            no_csv(format, "rules")?;
            let loaded = super::resolve_model(peek_store(&cli.store)?.as_ref(), &model.model)?;
            let f = if format == Format::Json { RuleFormat::Json } else { RuleFormat::Text };
            let mut out = super::export_rules(&loaded, f)?;
            if !out.ends_with('\n') {
                out.push('\n');
            }
            Ok(out)
        }
        Command::Predict { model, record } => {
            no_csv(format, "predict")?;
            let loaded = super::resolve_model(peek_store(&cli.store)?.as_ref(), &model.model)?;
            let schema = loaded.model.schema().cloned().unwrap_or_else(crate::dataset::Schema::bank);
            let x = super::parse_record(&record, &schema)?;
            let p = super::predict(&loaded, &x)?;
            Ok(match format {
                Format::Json => json(&p),
                _ => {
                    let mut s = p.label.to_string();
                    if let Some(id) = &p.rule_id {
                        s.push_str(&format!(" (rule \"{id}\", outcome {})", p.outcome.map_or("-", |o| o.as_str())));
                    }
                    if let Some(score) = p.score {
                        s.push_str(&format!(" (score {score:.4})"));
                    }
                    s + "\n"
                }
            })
        }
        Command::Advise { model, data, evidence, actionable, prospective } => {
            no_csv(format, "advise")?;
            let loaded = super::resolve_model(peek_store(&cli.store)?.as_ref(), &model.model)?;
            let ds = super::load_dataset(&data, dia)?;
            let ev = super::parse_evidence(&evidence, &ds.schema)?;
            let panel = super::panel(ev, &ds.schema, &super::PanelOptions { actionable, prospective })?;
            let report = super::advise(&loaded, &ds, &panel)?;
            Ok(match format {
                Format::Json => json(&report),
                _ => report.text,
            })
        }
        Command::Whatif { model, record, set } => {
            no_csv(format, "whatif")?;
            let loaded = super::resolve_model(peek_store(&cli.store)?.as_ref(), &model.model)?;
            let tree = super::tree_of(&loaded, "whatif")?;
            let x = super::parse_record(&record, &tree.schema)?;
            let overrides: BTreeMap<String, String> = set.into_iter().collect();
            let w = super::what_if(&loaded, &x, &overrides)?;
            Ok(match format {
                Format::Json => json(&w),
                _ => format!(
                    "{} (rule \"{}\") -> {} (rule \"{}\"){}\n",
                    w.base_label,
                    w.base_rule_id,
                    w.label,
                    w.rule_id,
                    if w.changed { ", changed" } else { ", unchanged" }
                ),
            })
        }
        Command::Paths { model, record, evidence } => {
            no_csv(format, "paths")?;
            let loaded = super::resolve_model(peek_store(&cli.store)?.as_ref(), &model.model)?;
            let tree = super::tree_of(&loaded, "paths")?;
            let report = match (record, evidence) {
                (Some(r), _) => super::paths(&loaded, Some(&super::parse_record(&r, &tree.schema)?), None)?,
                (None, ev) => {
                    let ev = super::parse_evidence(ev.as_deref().unwrap_or(""), &tree.schema)?;
                    let p = super::panel(ev, &tree.schema, &Default::default())?;
                    super::paths(&loaded, None, Some(&p))?
                }
            };
            Ok(match format {
                Format::Json => json(&report),
                _ => render_paths(&report),
            })
        }
        Command::Evaluate { model, data } => {
            no_csv(format, "evaluate")?;
            let loaded = super::resolve_model(peek_store(&cli.store)?.as_ref(), &model.model)?;
            let ds = super::load_dataset(&data, dia)?;
            let e = super::evaluate(&loaded, &ds)?;
            Ok(match format {
                Format::Json => json(&e),
                _ => e.to_text(),
            })
        }
        Command::Compare { data, models, test_fraction, seed } => {
            let kinds = super::parse_kinds(&models)?;
            let ds = super::load_dataset(&data, dia)?;
            let c = super::compare(&ds, &kinds, test_fraction, seed)?;
            Ok(match format {
                Format::Json | Format::JsonLines => json(&c),
                Format::Csv => c.to_csv(),
                Format::Text => c.to_text(),
            })
        }
        Command::Kb { action } => {
            let mut store = open_store(&cli.store)?;
            match action {
                KbAction::List { kind, tag } => {
                    let list = store.query(kind, tag.as_deref());
                    Ok(match format {
                        Format::Json | Format::JsonLines if lines => list.iter().map(json).collect(),
                        Format::Json | Format::JsonLines => json(&list),
                        Format::Csv => {
                            let mut w = csv::Writer::from_writer(Vec::new());
                            w.write_record(["id", "kind", "revision", "updated", "size", "tags"]).expect("in-memory");
                            for m in &list {
                                let tags: Vec<&str> = m.tags.iter().map(String::as_str).collect();
                                w.write_record([
                                    m.id.as_str(),
                                    m.kind.as_str(),
                                    &m.revision.to_string(),
                                    &m.updated,
                                    &m.size.to_string(),
                                    &tags.join(" "),
                                ])
                                .expect("in-memory");
                            }
                            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
                        }
                        Format::Text => list
                            .iter()
                            .map(|m| format!("{}  {:<13} r{}  {}\n", m.id, m.kind.as_str(), m.revision, m.updated))
                            .collect(),
                    })
                }
                KbAction::Get { id } => {
                    let a = store.get(&id)?;
                    Ok(match format {
                        Format::Json => json(&serde_json::json!({ "meta": a.meta, "payload": String::from_utf8_lossy(&a.payload) })),
                        _ => String::from_utf8_lossy(&a.payload).into_owned(),
                    })
                }
                KbAction::Put { kind, file, tags } => {
                    let bytes = std::fs::read(&file)
                        .map_err(|e| Problem::not_found(format!("{}: {e}", file.display()), "file"))?;
                    let id = store.put(kind, &bytes, tags.into_iter().collect())?;
                    Ok(match format {
                        Format::Json => json(&serde_json::json!({ "id": id })),
                        _ => format!("{id}\n"),
                    })
                }
            }
        }
        Command::Serve { bind, data, seed } => {
            let config = super::http::ServiceConfig { bind, store: cli.store, dataset: data, dialect: dia, seed };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Problem::new("io", e.to_string(), None))?;
            rt.block_on(super::http::serve(config)).map_err(|e| Problem::new("io", e.to_string(), Some("bind")))?;
            Ok(String::new())
        }
    }
}

fn render_paths(report: &super::PathsReport) -> String {
    use crate::advisor::PathSegment;
    let seg = |s: &PathSegment| match s.branch {
        Some(b) => format!("{}{}", s.node, if b == crate::cart::Side::Left { "L" } else { "R" }),
        None => format!("{}", s.node),
    };
    match report {
        super::PathsReport::Decision { segments, rule_id } => {
            format!("{} => rule \"{rule_id}\"\n", segments.iter().map(seg).collect::<Vec<_>>().join(" > "))
        }
        super::PathsReport::Reachable { paths } => paths
            .iter()
            .map(|p| {
                let steps: Vec<String> = p
                    .segments
                    .iter()
                    .map(|s| format!("{}{}", seg(s), if s.status == crate::advisor::Status::Suggested { "*" } else { "" }))
                    .collect();
                format!("{} => {} \"{}\"\n", steps.join(" > "), p.outcome, p.rule_id)
            })
            .collect(),
    }
}
