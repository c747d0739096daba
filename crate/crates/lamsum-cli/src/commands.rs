//! Subcommand implementations. All artifact writes go through a temp file in
//! the destination directory and an atomic rename, so readers never observe a
//! partial summary, manifest, or results table.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Deserialize;

use lamsum::calibration;
use lamsum::config::{Mode, VotingRule};
use lamsum::corpus::{self, CorpusFormat, TextualUnit};
use lamsum::evaluation::{score_summary, EvalReport};
use lamsum::manifest::{CorpusInfo, RunManifest};
use lamsum::orchestrator::{self, SummarySelection};
use lamsum::{Corpus, Error, PipelineConfig, UnitId};

use crate::settings::{self, CliConfig};

/// Pipeline flags shared by summarize and ablate; unset flags defer to the
/// config file, which defers to built-in defaults.
#[derive(Debug, Args)]
pub struct PipelineFlags {
    /// Number of units in the final summary
    #[arg(long)]
    pub k: Option<usize>,
    /// Chunk size in units
    #[arg(long)]
    pub s: Option<usize>,
    /// Units each chunk is reduced to
    #[arg(long)]
    pub q: Option<usize>,
    /// Shuffled prompt variants per chunk
    #[arg(long)]
    pub m: Option<usize>,
    /// Seed for all shuffle randomness
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pipeline mode: lamsum or vanilla
    #[arg(long)]
    pub mode: Option<String>,
    /// Voting rule: plurality, pav-sequential, pav-exact, or borda
    #[arg(long)]
    pub voting: Option<String>,
    /// Normalized edit-distance threshold for matching model output to units
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Stopword file (one word per line) for keyword matching
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

impl PipelineFlags {
    fn apply(&self, config: &mut PipelineConfig) -> Result<(), Error> {
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(s) = self.s {
            config.s = s;
        }
        if let Some(q) = self.q {
            config.q = q;
        }
        if let Some(m) = self.m {
            config.m = m;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = &self.mode {
            config.mode = settings::parse_mode(mode)?;
        }
        if let Some(voting) = &self.voting {
            config.voting_rule = settings::parse_voting(voting)?;
        }
        if let Some(epsilon) = self.epsilon {
            config.calibration.epsilon = epsilon;
        }
        if let Some(path) = &self.stopwords {
            config.calibration.stopwords = calibration::load_stopwords(path)?;
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct BackendFlags {
    /// Backend: http or mock:<behavior>
    #[arg(long)]
    pub backend: Option<String>,
    /// Chat-completions endpoint URL (http backend)
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent with each request (http backend)
    #[arg(long)]
    pub model: Option<String>,
}

impl BackendFlags {
    fn apply(&self, settings: &mut settings::BackendSettings) {
        if let Some(kind) = &self.backend {
            settings.kind = kind.clone();
        }
        if let Some(endpoint) = &self.endpoint {
            settings.endpoint = endpoint.clone();
        }
        if let Some(model) = &self.model {
            settings.model = model.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Corpus file, .jsonl or .csv
    #[arg(long)]
    pub corpus: PathBuf,
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference summaries (JSONL); when given, the summary is also scored
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Directory for summary.jsonl, manifest.json, and eval.json
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    #[command(flatten)]
    pub backend: BackendFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Corpus file the summary was drawn from
    #[arg(long)]
    pub corpus: PathBuf,
    /// Summary to score (summary.jsonl from a previous run)
    #[arg(long)]
    pub summary: PathBuf,
    /// Reference summaries (JSONL)
    #[arg(long)]
    pub references: PathBuf,
    /// Where to write the JSON report; stdout table is always printed
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Corpus file, .jsonl or .csv
    #[arg(long)]
    pub corpus: PathBuf,
    /// TOML config file providing the base configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference summaries; when given, ROUGE columns are filled in
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Directory for ablation.csv
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Per-chunk targets to sweep (default: the configured q)
    #[arg(long, value_delimiter = ',')]
    pub q_values: Vec<usize>,
    /// Modes to sweep (default: lamsum,vanilla)
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<String>,
    /// Voting rules to sweep (default: plurality,pav-sequential,borda)
    #[arg(long, value_delimiter = ',')]
    pub voting_rules: Vec<String>,
    /// Seeds to sweep (default: the configured seed)
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    #[command(flatten)]
    pub backend: BackendFlags,
}

/// Writes through a sibling temp file and renames into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn load_corpus(path: &Path) -> Result<(Corpus, CorpusFormat), Error> {
    let format = CorpusFormat::from_path(path);
    let corpus = corpus::load_corpus(path, format)?;
    Ok((corpus, format))
}

fn format_name(format: CorpusFormat) -> &'static str {
    match format {
        CorpusFormat::Jsonl => "jsonl",
        CorpusFormat::Csv => "csv",
    }
}

fn build_config(
    config_path: Option<&Path>,
    pipeline: &PipelineFlags,
    backend: &BackendFlags,
) -> Result<CliConfig, Error> {
    let mut config = settings::load_config(config_path)?;
    pipeline.apply(&mut config.pipeline)?;
    backend.apply(&mut config.backend);
    Ok(config)
}

fn manifest_for(
    corpus_path: &Path,
    format: CorpusFormat,
    corpus: &Corpus,
    selection: &SummarySelection,
    elapsed_ms: u128,
) -> RunManifest {
    RunManifest {
        corpus: CorpusInfo {
            path: corpus_path.display().to_string(),
            format: format_name(format).to_string(),
            n_units: corpus.len(),
        },
        config: selection.config.clone(),
        backend: selection.backend_name.clone(),
        levels: selection.levels.len(),
        level_sizes: selection.level_sizes(),
        api: selection.api,
        calibration: selection.calibration,
        tie_events: selection.tie_events,
        summary_unit_ids: selection.unit_ids.iter().map(|id| id.0).collect(),
        elapsed_ms,
        call_records: selection.call_records.clone(),
    }
}

pub fn run_summarize(args: SummarizeArgs) -> Result<(), Error> {
    let config = build_config(args.config.as_deref(), &args.pipeline, &args.backend)?;
    let (corpus, format) = load_corpus(&args.corpus)?;
    let backend = settings::build_backend(&config.backend)?;

    let start = Instant::now();
    let selection = orchestrator::summarize(&corpus, &config.pipeline, backend.as_ref())?;
    let elapsed_ms = start.elapsed().as_millis();

    fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;

    let summary_path = args.out_dir.join("summary.jsonl");
    let units: Vec<TextualUnit> = selection
        .unit_ids
        .iter()
        .map(|&id| corpus.unit(id).clone())
        .collect();
    let mut buf = Vec::new();
    corpus::write_units_jsonl(&units, &mut buf, &summary_path)?;
    write_atomic(&summary_path, &buf)?;

    let manifest_path = args.out_dir.join("manifest.json");
    let manifest = manifest_for(&args.corpus, format, &corpus, &selection, elapsed_ms);
    let mut manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_json.push(b'\n');
    write_atomic(&manifest_path, &manifest_json)?;

    println!(
        "selected {} of {} units in {} levels ({} llm calls, {} ms)",
        selection.unit_ids.len(),
        corpus.len(),
        selection.levels.len(),
        selection.api.calls,
        elapsed_ms
    );
    println!("wrote {}", summary_path.display());
    println!("wrote {}", manifest_path.display());

    if let Some(references_path) = &args.references {
        let references = corpus::load_references(references_path, &corpus)?;
        let report = score_summary(&corpus, &selection.unit_ids, &references);
        let eval_path = args.out_dir.join("eval.json");
        write_report(&eval_path, &report)?;
        println!("wrote {}", eval_path.display());
        print!("{}", report.render());
    }
    Ok(())
}

fn write_report(path: &Path, report: &EvalReport) -> Result<(), Error> {
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    write_atomic(path, &json)
}

/// Reads a summary.jsonl back and resolves it to unit ids, insisting that
/// every line's text still matches the corpus.
fn read_summary_ids(path: &Path, corpus: &Corpus) -> Result<Vec<UnitId>, Error> {
    #[derive(Deserialize)]
    struct Row {
        id: u32,
        text: String,
    }
    let contents = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    for (lineno, line) in contents.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let id = UnitId(row.id);
        if !corpus.contains(id) {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("unit id {id} is not in the corpus ({} units)", corpus.len()),
            });
        }
        if corpus.text(id) != row.text {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("text of unit {id} does not match the corpus"),
            });
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 0,
            message: "summary file contains no units".into(),
        });
    }
    Ok(ids)
}

pub fn run_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let (corpus, _) = load_corpus(&args.corpus)?;
    let summary_ids = read_summary_ids(&args.summary, &corpus)?;
    let references = corpus::load_references(&args.references, &corpus)?;
    let report = score_summary(&corpus, &summary_ids, &references);
    if let Some(out) = &args.out {
        write_report(out, &report)?;
        println!("wrote {}", out.display());
    }
    print!("{}", report.render());
    Ok(())
}

fn ablation_row(
    config: &PipelineConfig,
    voting: &str,
    selection: &SummarySelection,
    report: Option<&EvalReport>,
) -> Vec<String> {
    let rouge = |f: fn(&EvalReport) -> f64| {
        report.map(|r| format!("{:.4}", f(r))).unwrap_or_default()
    };
    vec![
        settings::mode_name(config.mode).to_string(),
        voting.to_string(),
        config.k.to_string(),
        config.s.to_string(),
        config.q.to_string(),
        match config.mode {
            Mode::Lamsum => config.m.to_string(),
            Mode::Vanilla => "1".to_string(),
        },
        config.seed.to_string(),
        selection.levels.len().to_string(),
        selection.api.calls.to_string(),
        selection.unit_ids.len().to_string(),
        rouge(|r| r.rouge1.f1),
        rouge(|r| r.rouge2.f1),
        rouge(|r| r.rouge_lsum.f1),
    ]
}

pub fn run_ablate(args: AblateArgs) -> Result<(), Error> {
    let base = build_config(args.config.as_deref(), &args.pipeline, &args.backend)?;
    let (corpus, _) = load_corpus(&args.corpus)?;
    let backend = settings::build_backend(&base.backend)?;
    let references = match &args.references {
        Some(path) => Some(corpus::load_references(path, &corpus)?),
        None => None,
    };

    let modes: Vec<Mode> = if args.modes.is_empty() {
        vec![Mode::Lamsum, Mode::Vanilla]
    } else {
        args.modes
            .iter()
            .map(|m| settings::parse_mode(m))
            .collect::<Result<_, _>>()?
    };
    let rules: Vec<VotingRule> = if args.voting_rules.is_empty() {
        vec![
            VotingRule::Plurality,
            VotingRule::PavSequential,
            VotingRule::Borda,
        ]
    } else {
        args.voting_rules
            .iter()
            .map(|v| settings::parse_voting(v))
            .collect::<Result<_, _>>()?
    };
    let q_values = if args.q_values.is_empty() {
        vec![base.pipeline.q]
    } else {
        args.q_values.clone()
    };
    let seeds = if args.seeds.is_empty() {
        vec![base.pipeline.seed]
    } else {
        args.seeds.clone()
    };

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "mode",
            "voting",
            "k",
            "s",
            "q",
            "m",
            "seed",
            "levels",
            "llm_calls",
            "summary_size",
            "rouge1",
            "rouge2",
            "rouge_lsum",
        ])
        .expect("writing to memory cannot fail");

    let mut rows = 0usize;
    for &mode in &modes {
        // Vanilla has no election, so the rule axis collapses to one row.
        let rule_axis: Vec<Option<VotingRule>> = match mode {
            Mode::Lamsum => rules.iter().copied().map(Some).collect(),
            Mode::Vanilla => vec![None],
        };
        for rule in &rule_axis {
            for &q in &q_values {
                for &seed in &seeds {
                    let mut config = base.pipeline.clone();
                    config.mode = mode;
                    config.q = q;
                    config.seed = seed;
                    if let Some(rule) = rule {
                        config.voting_rule = *rule;
                    }
                    let selection =
                        orchestrator::summarize(&corpus, &config, backend.as_ref())?;
                    let report = references
                        .as_ref()
                        .map(|refs| score_summary(&corpus, &selection.unit_ids, refs));
                    let voting = match rule {
                        Some(rule) => settings::voting_name(*rule),
                        None => "-",
                    };
                    let row = ablation_row(&config, voting, &selection, report.as_ref());
                    writer.write_record(&row).expect("writing to memory cannot fail");
                    rows += 1;
                    log::info!(
                        "ablation row {rows}: mode={} voting={voting} q={q} seed={seed}",
                        settings::mode_name(mode)
                    );
                }
            }
        }
    }

    fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let csv_path = args.out_dir.join("ablation.csv");
    let contents = writer.into_inner().expect("writing to memory cannot fail");
    write_atomic(&csv_path, &contents)?;
    println!("wrote {} rows to {}", rows, csv_path.display());
    Ok(())
}
