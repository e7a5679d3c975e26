// SPDX-License-Identifier: Apache-2.0

//! Scoring of generated outputs against benchmark bundles and report
//! emission (CSV tables plus a plain-text summary).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use netreason_llm::LlmClient;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{atomic_write, BenchTask, BenchmarkBundle};
use crate::error::{EvalError, Result};
use crate::passk::pass_at_k;
use crate::rtl::{extract_rtl, run_testbench, RtlResult, SimConfig};
use crate::similarity::{embed_similarity, gpt_score, EmbeddingProvider, JudgeTemplate, TfIdf};
use crate::text::{bleu, rouge_l, rouge_n, Prf};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TextScore {
    pub bleu: f64,
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
    pub emb_sim: f64,
    pub gpt_score: Option<f64>,
}

impl TextScore {
    fn mean(scores: &[TextScore]) -> TextScore {
        let n = scores.len().max(1) as f64;
        let avg = |f: &dyn Fn(&TextScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
        let prf = |f: &dyn Fn(&TextScore) -> Prf| Prf {
            precision: avg(&|s| f(s).precision),
            recall: avg(&|s| f(s).recall),
            f1: avg(&|s| f(s).f1),
        };
        let judged: Vec<f64> = scores.iter().filter_map(|s| s.gpt_score).collect();
        TextScore {
            bleu: avg(&|s| s.bleu),
            rouge1: prf(&|s| s.rouge1),
            rouge2: prf(&|s| s.rouge2),
            rouge_l: prf(&|s| s.rouge_l),
            emb_sim: avg(&|s| s.emb_sim),
            gpt_score: (!judged.is_empty())
                .then(|| judged.iter().sum::<f64>() / judged.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub max_n: usize,
    pub sim: SimConfig,
    /// Worker threads for scoring and simulation; 0 picks the rayon default.
    pub jobs: usize,
    /// Directory for per-run simulator logs.
    pub log_dir: Option<PathBuf>,
    /// Free-form run label copied into the report, e.g. `aligned`.
    pub run_label: String,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            max_n: 4,
            sim: SimConfig::default(),
            jobs: 0,
            log_dir: None,
            run_label: "default".into(),
        }
    }
}

/// External scorers. Without an embedding client the TF-IDF fallback is
/// fitted on the bundle golden texts.
#[derive(Default)]
pub struct Scorers<'a> {
    pub embed_client: Option<&'a LlmClient>,
    pub judge: Option<(&'a LlmClient, JudgeTemplate)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub design: String,
    pub run: usize,
    pub text: Option<TextScore>,
    pub rtl: Option<RtlResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: String,
    pub samples: usize,
    pub text: Option<TextScore>,
    pub syntax_rate: Option<f64>,
    pub success_rate: Option<f64>,
    pub pass_at_1: Option<f64>,
    pub pass_at_5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub text: Option<TextScore>,
    pub syntax_rate: Option<f64>,
    pub success_rate: Option<f64>,
    pub pass_at_1: Option<f64>,
    pub pass_at_5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: BenchTask,
    pub run_label: String,
    pub corpus: String,
    pub samples: Vec<SampleRecord>,
    pub designs: Vec<DesignSummary>,
    /// Mean of per-design values.
    pub macro_avg: Aggregate,
    /// Mean over all samples pooled.
    pub micro_avg: Aggregate,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn score_text(
    out: &str,
    golden: &str,
    cfg: &MetricsConfig,
    embed: &EmbeddingProvider<'_>,
    scorers: &Scorers<'_>,
) -> Result<TextScore> {
    Ok(TextScore {
        bleu: bleu(out, golden, cfg.max_n)?,
        rouge1: rouge_n(out, golden, 1)?,
        rouge2: rouge_n(out, golden, 2)?,
        rouge_l: rouge_l(out, golden)?,
        emb_sim: embed_similarity(out, golden, embed)?,
        gpt_score: match &scorers.judge {
            Some((client, t)) => Some(gpt_score(out, golden, client, t)?),
            None => None,
        },
    })
}

fn score_rtl(
    b: &BenchmarkBundle,
    out: &str,
    run: usize,
    cfg: &MetricsConfig,
    scorers: &Scorers<'_>,
) -> Result<RtlResult> {
    let tb = b.testbench.as_deref().ok_or_else(|| EvalError::Bundle {
        design: b.design.clone(),
        detail: "task 3 bundle has no testbench".into(),
    })?;
    let log = match &cfg.log_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Some(d.join(format!("{}.run{run}.log", b.design)))
        }
        None => None,
    };
    let mut r = run_testbench(&extract_rtl(out), tb, &cfg.sim, log.as_deref())?;
    if let Some((client, t)) = &scorers.judge {
        r.gpt_score = Some(gpt_score(out, &b.golden, client, t)?);
    }
    Ok(r)
}

fn aggregate_rtl(results: &[&RtlResult]) -> (Option<f64>, Option<f64>) {
    let rate = |f: fn(&RtlResult) -> bool| mean(results.iter().map(|r| f(r) as u8 as f64));
    (rate(|r| r.syntax_pass), rate(|r| r.function_pass))
}

/// Scores every output. `outputs` maps a design name to its generated
/// samples; every bundle needs at least one entry.
pub fn evaluate_run(
    bundles: &[BenchmarkBundle],
    outputs: &BTreeMap<String, Vec<String>>,
    cfg: &MetricsConfig,
    scorers: &Scorers<'_>,
) -> Result<RunReport> {
    let task = bundles.first().map_or(BenchTask::FuncDesc, |b| b.task);
    if let Some(b) = bundles.iter().find(|b| b.task != task) {
        return Err(EvalError::Bundle {
            design: b.design.clone(),
            detail: "bundles from different tasks in one run".into(),
        });
    }
    for b in bundles {
        if outputs.get(&b.design).map_or(true, |v| v.is_empty()) {
            return Err(EvalError::MissingOutput(b.design.clone()));
        }
    }
    let embed = match scorers.embed_client {
        Some(c) => EmbeddingProvider::Remote(c),
        None => {
            EmbeddingProvider::LocalTfIdf(TfIdf::fit(bundles.iter().map(|b| b.golden.as_str())))
        }
    };
    let jobs: Vec<(&BenchmarkBundle, usize, &str)> = bundles
        .iter()
        .flat_map(|b| {
            outputs[&b.design]
                .iter()
                .enumerate()
                .map(move |(i, o)| (b, i, o.as_str()))
        })
        .collect();
    let score_one = |(b, run, out): &(&BenchmarkBundle, usize, &str)| -> Result<SampleRecord> {
        let mut rec = SampleRecord {
            design: b.design.clone(),
            run: *run,
            text: None,
            rtl: None,
        };
        if task.is_text() {
            rec.text = Some(score_text(out, &b.golden, cfg, &embed, scorers)?);
        } else {
            rec.rtl = Some(score_rtl(b, out, *run, cfg, scorers)?);
        }
        Ok(rec)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| EvalError::Rtl(format!("worker pool: {e}")))?;
    let samples: Vec<SampleRecord> =
        pool.install(|| jobs.par_iter().map(score_one).collect::<Result<_>>())?;

    let mut designs = Vec::with_capacity(bundles.len());
    for b in bundles {
        let mine: Vec<&SampleRecord> = samples.iter().filter(|s| s.design == b.design).collect();
        let texts: Vec<TextScore> = mine.iter().filter_map(|s| s.text).collect();
        let rtls: Vec<&RtlResult> = mine.iter().filter_map(|s| s.rtl.as_ref()).collect();
        let (syntax_rate, success_rate) = aggregate_rtl(&rtls);
        let n = rtls.len() as u64;
        let c = rtls.iter().filter(|r| r.function_pass).count() as u64;
        let pk = |k: u64| -> Result<Option<f64>> {
            if rtls.is_empty() || n < k {
                Ok(None)
            } else {
                pass_at_k(n, c, k).map(Some)
            }
        };
        designs.push(DesignSummary {
            design: b.design.clone(),
            samples: mine.len(),
            text: (!texts.is_empty()).then(|| TextScore::mean(&texts)),
            syntax_rate,
            success_rate,
            pass_at_1: pk(1)?,
            pass_at_5: pk(5)?,
        });
    }

    let design_texts: Vec<TextScore> = designs.iter().filter_map(|d| d.text).collect();
    let macro_avg = Aggregate {
        text: (!design_texts.is_empty()).then(|| TextScore::mean(&design_texts)),
        syntax_rate: mean(designs.iter().filter_map(|d| d.syntax_rate)),
        success_rate: mean(designs.iter().filter_map(|d| d.success_rate)),
        pass_at_1: mean(designs.iter().filter_map(|d| d.pass_at_1)),
        pass_at_5: mean(designs.iter().filter_map(|d| d.pass_at_5)),
    };
    let all_texts: Vec<TextScore> = samples.iter().filter_map(|s| s.text).collect();
    let all_rtl: Vec<&RtlResult> = samples.iter().filter_map(|s| s.rtl.as_ref()).collect();
    let (syntax_rate, success_rate) = aggregate_rtl(&all_rtl);
    let micro_avg = Aggregate {
        text: (!all_texts.is_empty()).then(|| TextScore::mean(&all_texts)),
        syntax_rate,
        success_rate,
        pass_at_1: success_rate.filter(|_| !all_rtl.is_empty()),
        pass_at_5: None,
    };
    Ok(RunReport {
        task,
        run_label: cfg.run_label.clone(),
        corpus: String::new(),
        samples,
        designs,
        macro_avg,
        micro_avg,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn text_cells(t: Option<TextScore>) -> Vec<String> {
    match t {
        None => vec![String::new(); TEXT_COLS.len()],
        Some(t) => vec![
            format!("{:.6}", t.bleu),
            format!("{:.6}", t.rouge1.precision),
            format!("{:.6}", t.rouge1.recall),
            format!("{:.6}", t.rouge1.f1),
            format!("{:.6}", t.rouge2.f1),
            format!("{:.6}", t.rouge_l.f1),
            format!("{:.6}", t.emb_sim),
            opt(t.gpt_score),
        ],
    }
}

const TEXT_COLS: [&str; 8] = [
    "bleu",
    "rouge1_p",
    "rouge1_r",
    "rouge1_f1",
    "rouge2_f1",
    "rougeL_f1",
    "emb_sim",
    "gpt_score",
];

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| EvalError::Io(e.into_error()))
}

impl RunReport {
    pub fn samples_csv(&self) -> Result<Vec<u8>> {
        let mut header = vec!["design", "run"];
        header.extend(TEXT_COLS);
        header.extend(["syntax_pass", "function_pass", "log_path"]);
        let rows = self
            .samples
            .iter()
            .map(|s| {
                let mut r = vec![s.design.clone(), s.run.to_string()];
                let mut t = text_cells(s.text);
                if let (None, Some(x)) = (s.text, &s.rtl) {
                    t[7] = opt(x.gpt_score);
                }
                r.extend(t);
                match &s.rtl {
                    Some(x) => r.extend([
                        x.syntax_pass.to_string(),
                        x.function_pass.to_string(),
                        x.log_path
                            .as_ref()
                            .map(|p| p.display().to_string())
                            .unwrap_or_default(),
                    ]),
                    None => r.extend([String::new(), String::new(), String::new()]),
                }
                r
            })
            .collect();
        csv_bytes(&header, rows)
    }

    pub fn designs_csv(&self) -> Result<Vec<u8>> {
        let mut header = vec!["design", "samples"];
        header.extend(TEXT_COLS);
        header.extend(["syntax_rate", "success_rate", "pass_at_1", "pass_at_5"]);
        let row = |name: &str, samples: String, text: Option<TextScore>, a: [Option<f64>; 4]| {
            let mut r = vec![name.to_string(), samples];
            r.extend(text_cells(text));
            r.extend(a.iter().map(|x| opt(*x)));
            r
        };
        let mut rows: Vec<Vec<String>> = self
            .designs
            .iter()
            .map(|d| {
                row(
                    &d.design,
                    d.samples.to_string(),
                    d.text,
                    [d.syntax_rate, d.success_rate, d.pass_at_1, d.pass_at_5],
                )
            })
            .collect();
        for (name, a) in [("MACRO", &self.macro_avg), ("MICRO", &self.micro_avg)] {
            rows.push(row(
                name,
                self.samples.len().to_string(),
                a.text,
                [a.syntax_rate, a.success_rate, a.pass_at_1, a.pass_at_5],
            ));
        }
        csv_bytes(&header, rows)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task: {}", self.task.dir_name());
        let _ = writeln!(s, "run: {}", self.run_label);
        if !self.corpus.is_empty() {
            let _ = writeln!(s, "corpus: {}", self.corpus);
        }
        let _ = writeln!(
            s,
            "designs: {}  samples: {}",
            self.designs.len(),
            self.samples.len()
        );
        let _ = writeln!(s, "text tokenization: lowercase, whitespace and punctuation split; BLEU add-eps smoothing (1e-9)");
        for (name, a) in [("macro", &self.macro_avg), ("micro", &self.micro_avg)] {
            if let Some(t) = a.text {
                let _ = writeln!(
                    s,
                    "{name}: bleu {:.4}  rouge1 {:.4}  rouge2 {:.4}  rougeL {:.4}  emb_sim {:.4}  gpt_score {}",
                    t.bleu,
                    t.rouge1.f1,
                    t.rouge2.f1,
                    t.rouge_l.f1,
                    t.emb_sim,
                    t.gpt_score.map_or("n/a".into(), |g| format!("{g:.4}"))
                );
            }
            if let Some(rate) = a.success_rate {
                let _ = writeln!(
                    s,
                    "{name}: syntax {:.4}  success {:.4}  pass@1 {}  pass@5 {}",
                    a.syntax_rate.unwrap_or(0.0),
                    rate,
                    a.pass_at_1.map_or("n/a".into(), |g| format!("{g:.4}")),
                    a.pass_at_5.map_or("n/a".into(), |g| format!("{g:.4}"))
                );
            }
        }
        s
    }

    /// Writes `samples.csv`, `designs.csv`, `summary.txt` and `report.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        atomic_write(&dir.join("samples.csv"), &self.samples_csv()?)?;
        atomic_write(&dir.join("designs.csv"), &self.designs_csv()?)?;
        atomic_write(&dir.join("summary.txt"), self.summary().as_bytes())?;
        atomic_write(
            &dir.join("report.json"),
            serde_json::to_string_pretty(self)?.as_bytes(),
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(
            dir.join("report.json"),
        )?)?)
    }
}
