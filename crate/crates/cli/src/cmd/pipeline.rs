// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use netreason_core::{build_tag_graph, emit_verilog, parse_netlist, CellLibrary};
use netreason_eval::bundle::{labels_path, load_bundles, load_labels, BenchTask};
use netreason_llm::{ChatMessage, EndpointConfig, LlmClient, MockResponse, MockServer};
use netreason_model::embed::{generate, DecodeConfig, Decoding, Task};
use netreason_model::pred::{
    annotate_netlist, build_cot_prompt, classify_gates, prediction_map, AnnotatedNetlist,
    PromptOptions, PromptTemplate,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{load_aligned, load_pred_model};
use super::{corpus_netlists, parse_task};
use crate::args::{AnnotateArgs, GenerateArgs, PromptArgs};
use crate::error::{CliError, Result};
use crate::manifest::{
    files_with_ext, prepare_out_dir, read_json, read_text, require_dir, require_file, stem,
    write_bytes, write_json, Manifest, Staging,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

pub fn annotate(a: &AnnotateArgs) -> Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.model];
    let lib = CellLibrary::builtin();
    let designs = match &a.corpus {
        Some(c) => {
            require_dir(c, "corpus")?;
            inputs.push(c);
            corpus_netlists(c, BenchTask::Rtl)?
        }
        None => {
            let mut v = Vec::new();
            for p in &a.netlists {
                require_file(p, "netlist")?;
                inputs.push(p);
                let n = parse_netlist(&read_text(p)?, &lib)?;
                v.push((n.name.clone(), n));
            }
            v
        }
    };
    let (enc, head) = load_pred_model(&a.model)?;
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let out = staging.path();
    let mut m = Manifest::new(
        "annotate",
        None,
        &serde_json::json!({ "with_confidence": !a.no_confidence }),
        &inputs,
    )?;
    let results: Vec<(String, AnnotatedNetlist, BTreeMap<String, (String, f64)>)> = designs
        .par_iter()
        .map(|(name, n)| -> Result<_> {
            let preds = classify_gates(&build_tag_graph(n, &lib)?, &enc, &head)?;
            let map = prediction_map(&preds);
            let annotated = annotate_netlist(n, &map, !a.no_confidence)?;
            let plain = map
                .into_iter()
                .map(|(k, (l, p))| (k, (l.name().to_string(), p)))
                .collect();
            Ok((name.clone(), annotated, plain))
        })
        .collect::<Result<_>>()?;
    let mut per_design = BTreeMap::new();
    let mut total = Accuracy::default();
    for (name, annotated, preds) in &results {
        write_bytes(&out.join(format!("{name}.v")), annotated.text.as_bytes())?;
        write_json(&out.join(format!("{name}.pred.json")), preds)?;
        m.artifacts.push(format!("{name}.v"));
        m.artifacts.push(format!("{name}.pred.json"));
        if let Some(c) = &a.corpus {
            if labels_path(c, name).is_file() {
                let truth = load_labels(c, name)?;
                let correct = preds
                    .iter()
                    .filter(|(k, (l, _))| truth.get(*k).is_some_and(|t| t.name() == l))
                    .count();
                let n = preds.keys().filter(|k| truth.contains_key(*k)).count();
                total.correct += correct;
                total.total += n;
                per_design.insert(
                    name.clone(),
                    Accuracy {
                        correct,
                        total: n,
                        accuracy: if n > 0 {
                            correct as f64 / n as f64
                        } else {
                            0.0
                        },
                    },
                );
            }
        }
    }
    if total.total > 0 {
        total.accuracy = total.correct as f64 / total.total as f64;
        log::info!("gate accuracy against corpus labels: {:.4}", total.accuracy);
        write_json(
            &out.join("accuracy.json"),
            &serde_json::json!({ "overall": total, "designs": per_design }),
        )?;
        m.artifacts.push("accuracy.json".into());
    }
    m.write(out)?;
    staging.commit()
}

pub fn prompt(a: &PromptArgs) -> Result<()> {
    if a.annotated.is_none() && !a.no_annotation {
        return Err(CliError::usage(
            "prompts from --corpus carry no annotations; pass --annotated <dir> or --no-annotation",
        ));
    }
    if a.annotated.is_some() && a.corpus.is_some() {
        return Err(CliError::usage(
            "give either --annotated or --corpus, not both",
        ));
    }
    let mut inputs: Vec<&Path> = Vec::new();
    let sources: Vec<AnnotatedNetlist> = match (&a.annotated, &a.corpus) {
        (Some(dir), _) => {
            require_dir(dir, "annotated")?;
            inputs.push(dir);
            files_with_ext(dir, "v")?
                .iter()
                .map(|p| -> Result<_> {
                    Ok(AnnotatedNetlist {
                        module: stem(p),
                        text: read_text(p)?,
                    })
                })
                .collect::<Result<_>>()?
        }
        (None, Some(c)) => {
            require_dir(c, "corpus")?;
            inputs.push(c);
            corpus_netlists(c, BenchTask::Rtl)?
                .into_iter()
                .map(|(name, n)| AnnotatedNetlist {
                    module: name,
                    text: emit_verilog(&n),
                })
                .collect()
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if sources.is_empty() {
        return Err(CliError::usage("no netlists found to build prompts from"));
    }
    let template = match &a.template {
        Some(p) => {
            inputs.push(p);
            PromptTemplate::load(p)?
        }
        None => PromptTemplate::default(),
    };
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let out = staging.path();
    let opts = PromptOptions {
        annotations: !a.no_annotation,
    };
    let mut m = Manifest::new(
        "prompt",
        None,
        &serde_json::json!({ "options": opts, "template": template }),
        &inputs,
    )?;
    for s in &sources {
        let messages = build_cot_prompt(s, &opts, &template);
        write_json(&out.join(format!("{}.json", s.module)), &messages)?;
        m.artifacts.push(format!("{}.json", s.module));
    }
    m.write(out)?;
    staging.commit()
}

/// `<design>.json` in a `generate` directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedOutputs {
    pub design: String,
    pub samples: Vec<String>,
}

/// Mock endpoint answering each chat request with the reply of the design
/// whose module name appears in the prompt.
fn mock_endpoint(replies: BTreeMap<String, String>) -> Result<MockServer> {
    let mut keyed: Vec<(String, String)> = replies.into_iter().collect();
    keyed.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    MockServer::start(move |req| {
        if !req.path.ends_with("/chat/completions") {
            return MockResponse::status(404);
        }
        let prompt = req.prompt_text();
        let hit = keyed.iter().find(|(name, _)| {
            prompt.contains(&format!("`{name}`")) || prompt.contains(&format!("module {name}"))
        });
        MockResponse::chat(hit.map_or("", |(_, r)| r.as_str()))
    })
    .map_err(|e| CliError::io(Path::new("mock endpoint"), e))
}

pub fn endpoint_client(endpoint: &Path) -> Result<LlmClient> {
    require_file(endpoint, "endpoint config")?;
    let cfg = EndpointConfig::load(endpoint)?;
    Ok(LlmClient::from_env(cfg))
}

pub fn mock_client(server: &MockServer) -> LlmClient {
    let cfg = EndpointConfig {
        base_url: server.url().to_string(),
        max_attempts: 1,
        ..EndpointConfig::default()
    };
    LlmClient::new(cfg, Some("mock".to_string()))
}

pub fn generate_cmd(a: &GenerateArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(CliError::usage("--samples must be at least 1"));
    }
    match (&a.prompts, &a.model) {
        (Some(p), None) => generate_llm(a, p),
        (None, Some(m)) => generate_local(a, m),
        _ => Err(CliError::usage(
            "give --prompts (LLM endpoint) or --model with --corpus (local decoder)",
        )),
    }
}

fn write_outputs(staging: Staging, outputs: &[GeneratedOutputs], m: &mut Manifest) -> Result<()> {
    let out = staging.path();
    for o in outputs {
        write_json(&out.join(format!("{}.json", o.design)), o)?;
        m.artifacts.push(format!("{}.json", o.design));
    }
    m.write(out)?;
    staging.commit()
}

fn generate_llm(a: &GenerateArgs, prompts: &Path) -> Result<()> {
    require_dir(prompts, "prompts")?;
    let mut inputs: Vec<&Path> = vec![prompts];
    let files = files_with_ext(prompts, "json")?;
    if files.is_empty() {
        return Err(CliError::usage(format!(
            "no prompt files in {}",
            prompts.display()
        )));
    }
    let (server, endpoint_desc) = match (&a.endpoint, &a.mock_golden, &a.mock_replies) {
        (Some(p), _, _) => {
            inputs.push(p);
            (None, p.display().to_string())
        }
        (None, Some(c), _) => {
            require_dir(c, "corpus")?;
            inputs.push(c);
            let replies = load_bundles(c, BenchTask::Rtl)?
                .into_iter()
                .map(|b| (b.design, format!("Step 1: the netlist implements the function below.\n```verilog\n{}```\n", b.golden)))
                .collect();
            (Some(mock_endpoint(replies)?), "mock-golden".to_string())
        }
        (None, None, Some(f)) => {
            require_file(f, "mock replies")?;
            inputs.push(f);
            (
                Some(mock_endpoint(read_json(f)?)?),
                "mock-replies".to_string(),
            )
        }
        (None, None, None) => {
            return Err(CliError::usage(
                "LLM generation needs --endpoint, --mock-golden or --mock-replies",
            ))
        }
    };
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let mut client = match (&server, &a.endpoint) {
        (Some(s), _) => mock_client(s),
        (None, Some(p)) => endpoint_client(p)?,
        (None, None) => unreachable!(),
    };
    if let Some(log) = &a.audit_log {
        client = client.with_audit_log(log)?;
    }
    let work: Vec<(String, Vec<ChatMessage>)> = files
        .iter()
        .map(|p| -> Result<_> { Ok((stem(p), read_json(p)?)) })
        .collect::<Result<_>>()?;
    let outputs: Vec<GeneratedOutputs> = work
        .par_iter()
        .map(|(design, messages)| -> Result<_> {
            let samples = (0..a.samples)
                .map(|_| client.complete(messages).map_err(CliError::from))
                .collect::<Result<_>>()?;
            Ok(GeneratedOutputs {
                design: design.clone(),
                samples,
            })
        })
        .collect::<Result<_>>()?;
    let cfg = serde_json::json!({
        "mode": "llm",
        "endpoint": endpoint_desc,
        "samples": a.samples,
        "model": client.config().model,
        "temperature": client.config().temperature,
    });
    let mut m = Manifest::new("generate", None, &cfg, &inputs)?;
    write_outputs(staging, &outputs, &mut m)
}

fn generate_local(a: &GenerateArgs, model_dir: &Path) -> Result<()> {
    let corpus: PathBuf = a
        .corpus
        .clone()
        .ok_or_else(|| CliError::usage("--model needs --corpus"))?;
    require_dir(&corpus, "corpus")?;
    if a.endpoint.is_some() || a.mock_golden.is_some() || a.mock_replies.is_some() {
        return Err(CliError::usage(
            "endpoint options apply to --prompts mode only",
        ));
    }
    let bench = parse_task(&a.task)?;
    let task = match bench {
        BenchTask::FuncDesc => Task::FuncDesc,
        BenchTask::ImplDetail => Task::ImplDetail,
        BenchTask::Rtl => {
            return Err(CliError::usage(
                "the local decoder answers text tasks 1 and 2 only",
            ))
        }
    };
    if a.temperature < 0.0 {
        return Err(CliError::usage("--temperature must be non-negative"));
    }
    let inputs: Vec<&Path> = vec![model_dir, &corpus];
    let (_, model) = load_aligned(model_dir)?;
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let lib = CellLibrary::builtin();
    let designs = corpus_netlists(&corpus, bench)?;
    let outputs: Vec<GeneratedOutputs> = designs
        .par_iter()
        .enumerate()
        .map(|(k, (name, n))| -> Result<_> {
            let samples = (0..a.samples)
                .map(|i| {
                    let decoding = if a.temperature == 0.0 {
                        Decoding::Greedy
                    } else {
                        Decoding::Sample {
                            temperature: a.temperature,
                            seed: a.seed.wrapping_add((k * a.samples + i) as u64),
                        }
                    };
                    let dc = DecodeConfig {
                        decoding,
                        max_len: a.max_len,
                    };
                    generate(n, &lib, task, &model, &dc).map_err(CliError::from)
                })
                .collect::<Result<_>>()?;
            Ok(GeneratedOutputs {
                design: name.clone(),
                samples,
            })
        })
        .collect::<Result<_>>()?;
    let cfg = serde_json::json!({
        "mode": "local-decoder",
        "task": task.as_str(),
        "samples": a.samples,
        "temperature": a.temperature,
        "max_len": a.max_len,
    });
    let mut m = Manifest::new("generate", Some(a.seed), &cfg, &inputs)?;
    write_outputs(staging, &outputs, &mut m)
}
