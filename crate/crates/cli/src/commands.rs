use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use disfluency::annotation::{serialize, write_bio, AnnotatedUtterance, Token, TokenKind};
use disfluency::corpus::{
    build_pairs, compute_stats, jsonl_line, read_corpus, split_corpus, CorpusFormat,
};
use disfluency::eval::{evaluate, read_embeddings, two_sample_ttest_with, TestMethod};
use disfluency::inserter::{
    insert_batch, train_model, EventType, GenerationConfig, InsertionModel, MAX_TARGET_RATE,
};
use disfluency::llm_backend::{
    export_finetune_config, FinetuneOverrides, LlmError, RemoteClient, RemoteEndpoint,
    ENDPOINT_ENV, TOKEN_ENV,
};
use disfluency::render::{export_jsonl, render_tts, RenderStyle};

use crate::manifest::{digest_file, sha256_hex, RunManifest};
use crate::{data, usage, Cli, CliError, Command, CorpusInput};

/// Inputs read and files written by one command.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Io {
    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
        self.inputs.push(path.to_path_buf());
        Ok(text)
    }

    fn write(&mut self, out: Option<&Path>, content: &str) -> Result<(), CliError> {
        match out {
            Some(path) => {
                std::fs::write(path, content)
                    .map_err(|e| data(format!("{}: {e}", path.display())))?;
                self.outputs.push(path.to_path_buf());
            }
            None => print!("{content}"),
        }
        Ok(())
    }

    fn corpus(&mut self, input: &CorpusInput) -> Result<Vec<AnnotatedUtterance>, CliError> {
        let format = corpus_format(input.format.as_deref(), &input.input)?;
        self.corpus_as(&input.input, format)
    }

    fn corpus_as(
        &mut self,
        path: &Path,
        format: CorpusFormat,
    ) -> Result<Vec<AnnotatedUtterance>, CliError> {
        let text = self.read(path)?;
        read_corpus(&text, format).map_err(|e| data(format!("{}: {e}", path.display())))
    }

    /// One utterance per non-empty line, whitespace-tokenized.
    fn fluent_lines(&mut self, path: &Path) -> Result<Vec<Vec<Token>>, CliError> {
        let text = self.read(path)?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let tokens = line
                .split_whitespace()
                .map(|w| Token::new(w, TokenKind::Word))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| data(format!("{}:{}: {e}", path.display(), i + 1)))?;
            out.push(tokens);
        }
        Ok(out)
    }
}

fn corpus_format(explicit: Option<&str>, path: &Path) -> Result<CorpusFormat, CliError> {
    if let Some(f) = explicit {
        return f.parse().map_err(usage);
    }
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => CorpusFormat::Jsonl,
        Some("bio" | "tsv") => CorpusFormat::Bio,
        _ => CorpusFormat::Markup,
    })
}

fn format_corpus(utterances: &[AnnotatedUtterance], to: &str) -> Result<String, CliError> {
    let format: CorpusFormat = to.parse().map_err(usage)?;
    Ok(match format {
        CorpusFormat::Bio => write_bio(utterances),
        CorpusFormat::Markup => utterances.iter().map(|u| serialize(u) + "\n").collect(),
        CorpusFormat::Jsonl => utterances.iter().map(|u| jsonl_line(u) + "\n").collect(),
    })
}

fn numbers(text: &str, path: &Path) -> Result<Vec<f64>, CliError> {
    text.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| data(format!("{}: {s:?}: {e}", path.display())))
        })
        .collect()
}

fn collect_batch<E: std::fmt::Display>(
    results: Vec<Result<AnnotatedUtterance, E>>,
    what: &str,
) -> Result<Vec<AnnotatedUtterance>, CliError> {
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| data(format!("{what} {}: {e}", i + 1))))
        .collect()
}

pub(crate) fn dispatch(cli: Cli, argv: &[String], resolved: &[String]) -> Result<(), CliError> {
    if let Command::Replay(args) = &cli.command {
        return replay(&args.manifest);
    }
    let settings = serde_json::to_string(&(cli.seed, &cli.command)).expect("arguments serialize");
    let mut io = Io::default();
    execute(&cli, &mut io)?;
    if io.outputs.is_empty() {
        return Ok(());
    }
    let manifest = RunManifest {
        tool: "disfluency".to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        argv: argv.to_vec(),
        resolved_argv: resolved.to_vec(),
        config_hash: sha256_hex(settings.as_bytes()),
        seed: cli.seed,
        inputs: io
            .inputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<_, _>>()?,
        outputs: io
            .outputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<_, _>>()?,
    };
    manifest.write_siblings()
}

fn execute(cli: &Cli, io: &mut Io) -> Result<(), CliError> {
    match &cli.command {
        Command::Parse(a) => {
            let corpus = io.corpus(&a.corpus)?;
            let text = format_corpus(&corpus, &a.to)?;
            io.write(a.out.as_deref(), &text)
        }
        Command::Stats(a) => {
            let corpus = io.corpus(&a.corpus)?;
            let set = build_pairs(&corpus);
            let stats = compute_stats(&set.pairs).map_err(data)?;
            let text = if a.json {
                serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n"
            } else {
                let mut t = stats.to_string();
                if set.dropped_empty > 0 {
                    t.push_str(&format!(
                        "{:<42}{:>12}\n",
                        "Dropped (empty fluent side)", set.dropped_empty
                    ));
                }
                t
            };
            io.write(a.out.as_deref(), &text)
        }
        Command::Split(a) => {
            let corpus = io.corpus(&a.corpus)?;
            let (train, test) = split_corpus(&corpus, a.test_fraction, cli.seed).map_err(usage)?;
            let train_text = format_corpus(&train, &a.to)?;
            let test_text = format_corpus(&test, &a.to)?;
            io.write(Some(&a.train_out), &train_text)?;
            io.write(Some(&a.test_out), &test_text)
        }
        Command::Train(a) => {
            let corpus = io.corpus(&a.corpus)?;
            let model = train_model(&build_pairs(&corpus).pairs).map_err(data)?;
            io.write(Some(&a.out), &(model.to_json() + "\n"))
        }
        Command::Insert(a) => {
            let model_text = io.read(&a.model)?;
            let model = InsertionModel::from_json(&model_text)
                .map_err(|e| data(format!("{}: {e}", a.model.display())))?;
            let allow_kinds: BTreeSet<EventType> = if a.allow_kinds.is_empty() {
                EventType::ALL.into_iter().collect()
            } else {
                a.allow_kinds
                    .iter()
                    .map(|k| {
                        EventType::from_name(k.trim())
                            .ok_or_else(|| usage(format!("unknown event kind {k:?}")))
                    })
                    .collect::<Result<_, _>>()?
            };
            let config = GenerationConfig {
                seed: cli.seed,
                target_rate: a
                    .target_rate
                    .unwrap_or(model.trained_rate.min(MAX_TARGET_RATE)),
                max_events_per_utterance: a.max_events,
                allow_kinds,
            };
            config.validate().map_err(usage)?;
            let fluent = io.fluent_lines(&a.input)?;
            let out = collect_batch(insert_batch(&model, &fluent, &config), "utterance")?;
            let text = format_corpus(&out, &a.to)?;
            io.write(a.out.as_deref(), &text)
        }
        Command::Eval(a) => {
            let gen_format = corpus_format(a.format.as_deref(), &a.generated)?;
            let ref_format = corpus_format(a.format.as_deref(), &a.reference)?;
            let generated = io.corpus_as(&a.generated, gen_format)?;
            let references = io.corpus_as(&a.reference, ref_format)?;
            let embeddings = match (&a.hyp_embeddings, &a.ref_embeddings) {
                (Some(h), Some(r)) => {
                    let h_text = io.read(h)?;
                    let r_text = io.read(r)?;
                    Some((
                        read_embeddings(&h_text)
                            .map_err(|e| data(format!("{}: {e}", h.display())))?,
                        read_embeddings(&r_text)
                            .map_err(|e| data(format!("{}: {e}", r.display())))?,
                    ))
                }
                _ => None,
            };
            let report = evaluate(
                &generated,
                &references,
                embeddings
                    .as_ref()
                    .map(|(h, r)| (h.as_slice(), r.as_slice())),
                a.reference_rate,
            )
            .map_err(data)?;
            io.write(a.out.as_deref(), &(report.to_json() + "\n"))
        }
        Command::Ttest(a) => {
            let ta = io.read(&a.a)?;
            let tb = io.read(&a.b)?;
            let method = if a.welch {
                TestMethod::WelchT
            } else {
                TestMethod::StudentT
            };
            let result = two_sample_ttest_with(&numbers(&ta, &a.a)?, &numbers(&tb, &a.b)?, method)
                .map_err(data)?;
            let text = serde_json::to_string_pretty(&result).expect("results serialize") + "\n";
            io.write(a.out.as_deref(), &text)
        }
        Command::Render(a) => {
            let corpus = io.corpus(&a.corpus)?;
            let style = RenderStyle {
                silent_pause_surface: a.pause_surface.clone(),
                keep_filler_tokens: !a.drop_fillers,
                fragment_hyphen: !a.no_fragment_hyphen,
            };
            style.validate().map_err(usage)?;
            let text: String = corpus
                .iter()
                .map(|u| render_tts(u, &style) + "\n")
                .collect();
            io.write(a.out.as_deref(), &text)?;
            if let Some(path) = &a.jsonl_out {
                export_jsonl(&corpus, path).map_err(data)?;
                io.outputs.push(path.clone());
            }
            Ok(())
        }
        Command::FinetuneConfig(a) => {
            let overrides = FinetuneOverrides {
                base_model: a.base_model.clone(),
                lora_rank: a.lora_rank,
                lora_alpha: a.lora_alpha,
                lora_dropout: a.lora_dropout,
                learning_rate: a.learning_rate,
                max_seq_len: a.max_seq_len,
                batch_size: a.batch_size,
                grad_accum_steps: a.grad_accum_steps,
            };
            let config = export_finetune_config(&overrides).map_err(usage)?;
            io.write(a.out.as_deref(), &(config.to_json() + "\n"))
        }
        Command::InsertRemote(a) => {
            if !(a.timeout.is_finite() && a.timeout > 0.0) {
                return Err(usage("--timeout must be a positive number of seconds"));
            }
            let timeout = Duration::from_secs_f64(a.timeout);
            let mut endpoint = match &a.endpoint {
                Some(url) => RemoteEndpoint::new(url, timeout, a.retries),
                None => RemoteEndpoint::from_env(timeout, a.retries),
            }
            .map_err(|e| match e {
                LlmError::InvalidEndpoint(m) => {
                    usage(format!("{m} (pass --endpoint or set {ENDPOINT_ENV})"))
                }
                other => data(other),
            })?;
            if endpoint.bearer_token.is_none() {
                endpoint.bearer_token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
            }
            let fluent = io.fluent_lines(&a.input)?;
            let client = RemoteClient::new(endpoint);
            let out = collect_batch(client.insert_many(&fluent, a.max_in_flight), "utterance")?;
            let text = format_corpus(&out, &a.to)?;
            io.write(a.out.as_deref(), &text)
        }
        Command::Replay(_) => unreachable!("handled by dispatch"),
    }
}

fn replay(manifest_path: &Path) -> Result<(), CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    if manifest.command == "replay" {
        return Err(data("a manifest cannot record a replay"));
    }
    for input in &manifest.inputs {
        let now = digest_file(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(data(format!(
                "input {} changed since the recorded run",
                input.path.display()
            )));
        }
    }
    let (cli, resolved) = crate::parse(&manifest.resolved_argv)?;
    dispatch(cli, &manifest.argv, &resolved)?;
    for output in &manifest.outputs {
        let now = digest_file(&output.path)?;
        if now.sha256 != output.sha256 {
            return Err(data(format!(
                "{} differs from the recorded output",
                output.path.display()
            )));
        }
        println!("reproduced {}", output.path.display());
    }
    Ok(())
}
