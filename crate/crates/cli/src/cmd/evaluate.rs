// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use netreason_eval::bundle::{load_bundles, load_manifest};
use netreason_eval::similarity::JudgeTemplate;
use netreason_eval::{evaluate_run, MetricsConfig, RunReport, Scorers, SimConfig};
use netreason_llm::MockServer;
use serde::Serialize;

use super::parse_task;
use super::pipeline::{endpoint_client, mock_client, GeneratedOutputs};
use crate::args::{EvalArgs, ReportArgs};
use crate::error::{CliError, Result};
use crate::manifest::{
    prepare_out_dir, read_json, read_text, require_dir, require_file, write_bytes, Manifest,
};

pub fn eval(a: &EvalArgs, jobs: usize) -> Result<()> {
    require_dir(&a.corpus, "corpus")?;
    require_dir(&a.outputs, "outputs")?;
    let task = parse_task(&a.task)?;
    if a.judge && a.endpoint.is_none() && a.mock_judge.is_none() {
        return Err(CliError::usage("--judge needs --endpoint or --mock-judge"));
    }
    if a.remote_embed && a.endpoint.is_none() {
        return Err(CliError::usage("--remote-embed needs --endpoint"));
    }
    if a.mock_judge.is_some() && !a.judge {
        return Err(CliError::usage("--mock-judge only applies with --judge"));
    }
    if a.timeout == 0 {
        return Err(CliError::usage("--timeout must be at least 1 second"));
    }
    let mut inputs: Vec<&Path> = vec![&a.corpus, &a.outputs];
    if let Some(p) = &a.endpoint {
        require_file(p, "endpoint config")?;
        inputs.push(p);
    }
    let template = match &a.judge_template {
        Some(p) => {
            inputs.push(p);
            JudgeTemplate::load(p)?
        }
        None => JudgeTemplate::default(),
    };
    let bundles = load_bundles(&a.corpus, task)?;
    let mut outputs = BTreeMap::new();
    for b in &bundles {
        let p = a.outputs.join(format!("{}.json", b.design));
        if p.is_file() {
            let o: GeneratedOutputs = read_json(&p)?;
            outputs.insert(b.design.clone(), o.samples);
        }
    }
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let out = staging.path();

    let mock = match &a.mock_judge {
        Some(reply) => Some(
            MockServer::canned(reply).map_err(|e| CliError::io(Path::new("mock endpoint"), e))?,
        ),
        None => None,
    };
    let client = match (&mock, &a.endpoint) {
        (Some(s), _) => Some(mock_client(s)),
        (None, Some(p)) => Some(endpoint_client(p)?),
        (None, None) => None,
    };
    let scorers = Scorers {
        embed_client: if a.remote_embed {
            client.as_ref()
        } else {
            None
        },
        judge: match (&client, a.judge) {
            (Some(c), true) => Some((c, template.clone())),
            _ => None,
        },
    };
    let cfg = MetricsConfig {
        sim: SimConfig {
            command: a.sim_cmd.clone(),
            timeout_secs: a.timeout,
        },
        jobs,
        log_dir: (!task.is_text()).then(|| out.join("logs")),
        run_label: a.label.clone(),
        ..MetricsConfig::default()
    };
    let mut report = evaluate_run(&bundles, &outputs, &cfg, &scorers)?;
    report.corpus = load_manifest(&a.corpus)
        .map(|m| m.corpus)
        .unwrap_or_else(|_| "external".into());
    for r in report.samples.iter_mut().filter_map(|s| s.rtl.as_mut()) {
        r.log_path = r
            .log_path
            .as_ref()
            .and_then(|p| p.strip_prefix(out).ok())
            .map(|p| p.to_path_buf());
    }
    report.write(out)?;
    print!("{}", report.summary());
    let manifest_cfg = serde_json::json!({
        "task": task.dir_name(),
        "label": a.label,
        "metrics": { "max_n": cfg.max_n, "sim": cfg.sim },
        "judge": a.judge.then(|| serde_json::json!({ "template": template, "mock": a.mock_judge })),
        "embeddings": if a.remote_embed { "remote" } else { "local-tfidf" },
    });
    let mut m = Manifest::new("eval", None, &manifest_cfg, &inputs)?;
    m.artifacts = ["samples.csv", "designs.csv", "summary.txt", "report.json"]
        .map(String::from)
        .to_vec();
    if cfg.log_dir.is_some() {
        m.artifacts.push("logs".into());
    }
    m.write(out)?;
    staging.commit()
}

#[derive(Serialize)]
struct TrainRow {
    dir: String,
    stage: String,
    steps: Option<usize>,
    final_loss: Option<f64>,
    tail_mean_loss: Option<f64>,
    no_align: Option<bool>,
}

/// Mean of the last tenth of the logged losses (at least one).
fn tail_mean(losses_csv: &str) -> Option<f64> {
    let losses: Vec<f64> = losses_csv
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(1)?.parse().ok())
        .collect();
    if losses.is_empty() {
        return None;
    }
    let k = (losses.len() / 10).max(1);
    let tail = &losses[losses.len() - k..];
    Some(tail.iter().sum::<f64>() / k as f64)
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn report(a: &ReportArgs) -> Result<()> {
    if a.runs.is_empty() && a.trains.is_empty() {
        return Err(CliError::usage(
            "give at least one --run or --train directory",
        ));
    }
    for d in a.runs.iter().chain(&a.trains) {
        require_dir(d, "input")?;
    }
    let inputs: Vec<&Path> = a
        .runs
        .iter()
        .chain(&a.trains)
        .map(|p| p.as_path())
        .collect();
    let runs: Vec<RunReport> = a
        .runs
        .iter()
        .map(|d| RunReport::load(d).map_err(CliError::from))
        .collect::<Result<_>>()?;
    let trains: Vec<TrainRow> = a
        .trains
        .iter()
        .map(|d| -> Result<_> {
            let m = Manifest::load(d)?;
            let losses = d.join("losses.csv");
            let no_align = m
                .config
                .pointer("/model/no_align")
                .and_then(|v| v.as_bool());
            Ok(TrainRow {
                dir: d.display().to_string(),
                stage: m.stage,
                steps: m.steps,
                final_loss: m.final_loss,
                tail_mean_loss: if losses.is_file() {
                    tail_mean(&read_text(&losses)?)
                } else {
                    None
                },
                no_align,
            })
        })
        .collect::<Result<_>>()?;
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let out = staging.path();

    let mut csv = String::from(
        "run,task,corpus,designs,samples,bleu,rouge1_f1,rouge2_f1,rougeL_f1,emb_sim,gpt_score,syntax_rate,success_rate_macro,success_rate_micro,pass_at_1,pass_at_5\n",
    );
    let mut summary = String::new();
    for r in &runs {
        let t = r.macro_avg.text;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run_label,
            r.task.dir_name(),
            r.corpus,
            r.designs.len(),
            r.samples.len(),
            cell(t.map(|t| t.bleu)),
            cell(t.map(|t| t.rouge1.f1)),
            cell(t.map(|t| t.rouge2.f1)),
            cell(t.map(|t| t.rouge_l.f1)),
            cell(t.map(|t| t.emb_sim)),
            cell(t.and_then(|t| t.gpt_score)),
            cell(r.macro_avg.syntax_rate),
            cell(r.macro_avg.success_rate),
            cell(r.micro_avg.success_rate),
            cell(r.macro_avg.pass_at_1),
            cell(r.macro_avg.pass_at_5),
        );
        let _ = writeln!(summary, "== {} ({}) ==", r.run_label, r.task.dir_name());
        summary.push_str(&r.summary());
    }
    let mut tcsv = String::from("dir,stage,no_align,steps,final_loss,tail_mean_loss\n");
    for t in &trains {
        let _ = writeln!(
            tcsv,
            "{},{},{},{},{},{}",
            t.dir,
            t.stage,
            t.no_align.map_or(String::new(), |b| b.to_string()),
            t.steps.map_or(String::new(), |s| s.to_string()),
            cell(t.final_loss),
            cell(t.tail_mean_loss)
        );
        let _ = writeln!(
            summary,
            "train {} [{}{}]: steps {} final loss {} tail mean {}",
            t.dir,
            t.stage,
            if t.no_align == Some(true) {
                ", no-align"
            } else {
                ""
            },
            t.steps.unwrap_or(0),
            cell(t.final_loss),
            cell(t.tail_mean_loss)
        );
    }
    let mut m = Manifest::new(
        "report",
        None,
        &serde_json::json!({ "runs": a.runs, "trains": a.trains }),
        &inputs,
    )?;
    if !runs.is_empty() {
        write_bytes(&out.join("comparison.csv"), csv.as_bytes())?;
        m.artifacts.push("comparison.csv".into());
    }
    if !trains.is_empty() {
        write_bytes(&out.join("training.csv"), tcsv.as_bytes())?;
        m.artifacts.push("training.csv".into());
    }
    write_bytes(&out.join("summary.txt"), summary.as_bytes())?;
    m.artifacts.push("summary.txt".into());
    print!("{summary}");
    m.write(out)?;
    staging.commit()
}
