// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use netreason_core::CellLibrary;
use netreason_eval::bundle::*;
use netreason_eval::corpus::{generate_synthetic_corpus, CorpusConfig, GeneratedDesign};
use netreason_eval::similarity::{embed_similarity, gpt_score, EmbeddingProvider, JudgeTemplate};
use netreason_eval::text::{bleu, rouge_l, rouge_n};
use netreason_eval::{evaluate_run, EvalError, MetricsConfig, RunReport, Scorers};
use netreason_llm::mock::{MockResponse, MockServer};
use netreason_llm::{EndpointConfig, LlmClient};

fn corpus(n: usize) -> Vec<GeneratedDesign> {
    let cfg = CorpusConfig {
        designs: n,
        seed: 5,
        ..CorpusConfig::default()
    };
    generate_synthetic_corpus(&cfg, &CellLibrary::builtin()).unwrap()
}

fn bundles(designs: &[GeneratedDesign], task: BenchTask) -> Vec<BenchmarkBundle> {
    designs
        .iter()
        .map(|d| BenchmarkBundle::from_design(task, d))
        .collect()
}

fn client(server: &MockServer) -> LlmClient {
    let cfg = EndpointConfig {
        base_url: server.url().to_string(),
        max_attempts: 1,
        backoff_ms: 1,
        ..EndpointConfig::default()
    };
    LlmClient::new(cfg, Some("test-key".into()))
}

#[test]
fn bundles_round_trip_through_disk() {
    let designs = corpus(6);
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig {
        designs: 6,
        seed: 5,
        ..CorpusConfig::default()
    };
    let manifest = write_corpus(dir.path(), &cfg, &designs).unwrap();
    assert_eq!(manifest.corpus, SYNTHETIC_CORPUS_KIND);
    assert_eq!(load_manifest(dir.path()).unwrap(), manifest);
    for task in BenchTask::ALL {
        let loaded = load_bundles(dir.path(), task).unwrap();
        let mut want = bundles(&designs, task);
        want.sort_by(|a, b| a.design.cmp(&b.design));
        assert_eq!(loaded, want);
        for b in &loaded {
            let d = b.dir(dir.path());
            assert!(d.join("netlist.v").is_file() && d.join("prompt.txt").is_file());
            assert!(d.join(task.golden_file()).is_file());
            assert_eq!(d.join("tb.v").is_file(), task == BenchTask::Rtl);
        }
    }
    for d in &designs {
        assert_eq!(load_labels(dir.path(), d.name()).unwrap(), d.label_map());
    }
    let victim = dir
        .path()
        .join("task3")
        .join(designs[0].name())
        .join("tb.v");
    std::fs::write(&victim, "").unwrap();
    assert!(matches!(
        load_bundles(dir.path(), BenchTask::Rtl),
        Err(EvalError::Bundle { .. })
    ));
}

#[test]
fn bundle_validation() {
    let d = &corpus(1)[0];
    let mut b = BenchmarkBundle::from_design(BenchTask::Rtl, d);
    b.validate().unwrap();
    b.testbench = Some("module tb; endmodule".into());
    assert!(b.validate().is_err());
    let mut t = BenchmarkBundle::from_design(BenchTask::FuncDesc, d);
    t.golden = " \n".into();
    assert!(t.validate().is_err());
}

#[test]
fn ground_truth_outputs_score_perfectly() {
    let designs = corpus(4);
    for task in [BenchTask::FuncDesc, BenchTask::ImplDetail] {
        let bs = bundles(&designs, task);
        let outs: BTreeMap<String, Vec<String>> = bs
            .iter()
            .map(|b| (b.design.clone(), vec![b.golden.clone()]))
            .collect();
        let r = evaluate_run(&bs, &outs, &MetricsConfig::default(), &Scorers::default()).unwrap();
        let t = r.macro_avg.text.unwrap();
        assert!((t.bleu - 1.0).abs() < 1e-12 && (t.rouge_l.f1 - 1.0).abs() < 1e-12);
        assert!((t.emb_sim - 1.0).abs() < 1e-12);
        assert!(t.gpt_score.is_none());
    }
    let bs = bundles(&designs, BenchTask::Rtl);
    let outs: BTreeMap<String, Vec<String>> = bs
        .iter()
        .map(|b| {
            (
                b.design.clone(),
                vec![format!("```verilog\n{}```", b.golden); 5],
            )
        })
        .collect();
    let logs = tempfile::tempdir().unwrap();
    let cfg = MetricsConfig {
        log_dir: Some(logs.path().to_path_buf()),
        jobs: 2,
        ..MetricsConfig::default()
    };
    let r = evaluate_run(&bs, &outs, &cfg, &Scorers::default()).unwrap();
    assert_eq!(r.macro_avg.success_rate, Some(1.0));
    assert_eq!(r.micro_avg.syntax_rate, Some(1.0));
    assert_eq!(r.macro_avg.pass_at_5, Some(1.0));
    assert!(r
        .samples
        .iter()
        .all(|s| s.rtl.as_ref().unwrap().log_path.as_ref().unwrap().is_file()));
}

#[test]
fn empty_outputs_score_zero() {
    let designs = corpus(2);
    let bs = bundles(&designs, BenchTask::FuncDesc);
    let outs: BTreeMap<String, Vec<String>> = bs
        .iter()
        .map(|b| (b.design.clone(), vec![String::new()]))
        .collect();
    let r = evaluate_run(&bs, &outs, &MetricsConfig::default(), &Scorers::default()).unwrap();
    let t = r.micro_avg.text.unwrap();
    assert_eq!(
        (t.bleu, t.rouge1.f1, t.rouge2.f1, t.rouge_l.f1, t.emb_sim),
        (0.0, 0.0, 0.0, 0.0, 0.0)
    );
    let bs = bundles(&designs, BenchTask::Rtl);
    let outs: BTreeMap<String, Vec<String>> = bs
        .iter()
        .map(|b| (b.design.clone(), vec![String::new()]))
        .collect();
    let r = evaluate_run(&bs, &outs, &MetricsConfig::default(), &Scorers::default()).unwrap();
    assert_eq!(r.micro_avg.success_rate, Some(0.0));
    assert_eq!(r.micro_avg.syntax_rate, Some(0.0));
}

#[test]
fn missing_output_is_reported() {
    let designs = corpus(2);
    let bs = bundles(&designs, BenchTask::FuncDesc);
    let mut outs = BTreeMap::new();
    outs.insert(bs[0].design.clone(), vec!["x".to_string()]);
    match evaluate_run(&bs, &outs, &MetricsConfig::default(), &Scorers::default()) {
        Err(EvalError::MissingOutput(d)) => assert_eq!(d, bs[1].design),
        other => panic!("{other:?}"),
    }
}

#[test]
fn aggregates_match_hand_averages() {
    let designs = corpus(3);
    let bs = bundles(&designs, BenchTask::FuncDesc);
    let picks: [Vec<String>; 3] = [
        vec!["the design adds two numbers".into()],
        vec![
            "interface inputs a and b".into(),
            "unrelated words".into(),
            String::new(),
        ],
        vec![bs[2].golden.clone(), "purpose".into()],
    ];
    let outs: BTreeMap<String, Vec<String>> = bs
        .iter()
        .zip(picks.iter())
        .map(|(b, o)| (b.design.clone(), o.clone()))
        .collect();
    let r = evaluate_run(&bs, &outs, &MetricsConfig::default(), &Scorers::default()).unwrap();
    let mut per_design = Vec::new();
    let mut all = Vec::new();
    for (b, outs) in bs.iter().zip(&picks) {
        let vals: Vec<[f64; 4]> = outs
            .iter()
            .map(|o| {
                [
                    bleu(o, &b.golden, 4).unwrap(),
                    rouge_n(o, &b.golden, 1).unwrap().f1,
                    rouge_n(o, &b.golden, 2).unwrap().f1,
                    rouge_l(o, &b.golden).unwrap().f1,
                ]
            })
            .collect();
        let avg: Vec<f64> = (0..4)
            .map(|i| vals.iter().map(|v| v[i]).sum::<f64>() / vals.len() as f64)
            .collect();
        per_design.push(avg);
        all.extend(vals);
    }
    for (k, d) in r.designs.iter().enumerate() {
        let t = d.text.unwrap();
        let got = [t.bleu, t.rouge1.f1, t.rouge2.f1, t.rouge_l.f1];
        for i in 0..4 {
            assert!((got[i] - per_design[k][i]).abs() < 1e-12);
        }
    }
    let m = r.macro_avg.text.unwrap();
    let u = r.micro_avg.text.unwrap();
    let (mg, ug) = (
        [m.bleu, m.rouge1.f1, m.rouge2.f1, m.rouge_l.f1],
        [u.bleu, u.rouge1.f1, u.rouge2.f1, u.rouge_l.f1],
    );
    for i in 0..4 {
        let macro_want = per_design.iter().map(|v| v[i]).sum::<f64>() / 3.0;
        let micro_want = all.iter().map(|v| v[i]).sum::<f64>() / all.len() as f64;
        assert!((mg[i] - macro_want).abs() < 1e-12);
        assert!((ug[i] - micro_want).abs() < 1e-12);
    }
}

#[test]
fn rtl_aggregates_macro_and_micro() {
    let designs = corpus(2);
    let bs = bundles(&designs, BenchTask::Rtl);
    let wrong = |b: &BenchmarkBundle| b.golden.replacen("assign y0 = t", "assign y0 = ~t", 1);
    let outs: BTreeMap<String, Vec<String>> = [
        (
            bs[0].design.clone(),
            vec![
                bs[0].golden.clone(),
                wrong(&bs[0]),
                wrong(&bs[0]),
                bs[0].golden.clone(),
                "garbage".into(),
            ],
        ),
        (bs[1].design.clone(), vec![bs[1].golden.clone()]),
    ]
    .into_iter()
    .collect();
    let r = evaluate_run(&bs, &outs, &MetricsConfig::default(), &Scorers::default()).unwrap();
    let d0 = r.designs.iter().find(|d| d.design == bs[0].design).unwrap();
    assert_eq!(d0.success_rate, Some(0.4));
    assert_eq!(d0.syntax_rate, Some(0.8));
    assert_eq!(d0.pass_at_1, Some(0.4));
    assert!((d0.pass_at_5.unwrap() - 1.0).abs() < 1e-12);
    assert!((r.macro_avg.success_rate.unwrap() - 0.7).abs() < 1e-12);
    assert!((r.micro_avg.success_rate.unwrap() - 0.5).abs() < 1e-12);
    assert!(r.samples.iter().all(|s| s
        .rtl
        .as_ref()
        .map_or(true, |x| !x.function_pass || x.syntax_pass)));

    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path()).unwrap();
    assert_eq!(RunReport::load(dir.path()).unwrap(), r);
    let designs_csv = std::fs::read_to_string(dir.path().join("designs.csv")).unwrap();
    assert!(
        designs_csv.lines().any(|l| l.starts_with("MACRO,"))
            && designs_csv.lines().any(|l| l.starts_with("MICRO,"))
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("samples.csv"))
            .unwrap()
            .lines()
            .count(),
        7
    );
    assert!(std::fs::read_to_string(dir.path().join("summary.txt"))
        .unwrap()
        .contains("success"));
}

#[test]
fn judge_and_remote_embeddings_use_the_endpoint() {
    let server = MockServer::canned("0.62").unwrap();
    let c = client(&server);
    assert_eq!(
        gpt_score("gen", "ref", &c, &JudgeTemplate::default()).unwrap(),
        0.62
    );
    let prompt = server.requests()[0].prompt_text();
    assert!(prompt.contains("between 0 and 1") && prompt.contains("ref") && prompt.contains("gen"));

    let high = MockServer::canned("Score: 1.3").unwrap();
    assert_eq!(
        gpt_score("g", "r", &client(&high), &JudgeTemplate::default()).unwrap(),
        1.0
    );
    let none = MockServer::canned("cannot say").unwrap();
    assert!(matches!(
        gpt_score("g", "r", &client(&none), &JudgeTemplate::default()),
        Err(EvalError::UnparseableJudgment(_))
    ));

    let emb = MockServer::start(|_| {
        MockResponse::embeddings(&[vec![1.0, 2.0, 2.0], vec![2.0, 0.0, 1.0]])
    })
    .unwrap();
    let ec = client(&emb);
    let got = embed_similarity("a", "b", &EmbeddingProvider::Remote(&ec)).unwrap();
    assert!((got - 4.0 / (3.0 * 5f64.sqrt())).abs() < 1e-12);

    let down = MockServer::start(|_| MockResponse::status(503)).unwrap();
    let dc = client(&down);
    assert!(matches!(
        embed_similarity("a", "b", &EmbeddingProvider::Remote(&dc)),
        Err(EvalError::ProviderUnavailable(_))
    ));

    let designs = corpus(2);
    let bs = bundles(&designs, BenchTask::FuncDesc);
    let outs: BTreeMap<String, Vec<String>> = bs
        .iter()
        .map(|b| (b.design.clone(), vec!["an adder".into()]))
        .collect();
    let scorers = Scorers {
        embed_client: None,
        judge: Some((&c, JudgeTemplate::default())),
    };
    let r = evaluate_run(&bs, &outs, &MetricsConfig::default(), &scorers).unwrap();
    assert_eq!(r.macro_avg.text.unwrap().gpt_score, Some(0.62));
}
