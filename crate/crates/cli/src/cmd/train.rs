// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use netreason_core::{build_tag_graph, CellLibrary};
use netreason_eval::bundle::{load_bundles, load_labels, BenchTask};
use netreason_model::embed::{
    train_stage, AlignConfig, AlignExample, AlignedModel, Stage, Task, TrainConfig,
};
use netreason_model::params::{load_checkpoint, save_checkpoint};
use netreason_model::pred::{
    train_head_from, HeadConfig, HeadParams, HeadTrainConfig, LabeledGraph,
};
use netreason_model::{EncoderConfig, EncoderParams};
use serde::{Deserialize, Serialize};

use super::{corpus_netlists, parse_task};
use crate::args::{EncoderChoice, TrainAlignArgs, TrainPredArgs};
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out_dir, read_json, require_dir, write_bytes, write_json, Manifest};

/// `pred.json` in a `train-pred` directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
}

pub fn load_pred_model(dir: &Path) -> Result<(EncoderParams, HeadParams)> {
    require_dir(dir, "model")?;
    let cfg: PredModelConfig = read_json(&dir.join("pred.json"))?;
    let enc = load_checkpoint(
        &dir.join("encoder.ckpt"),
        &EncoderParams::init(&cfg.encoder),
    )?;
    let head = load_checkpoint(
        &dir.join("head.ckpt"),
        &HeadParams::init(cfg.encoder.d_enc, &cfg.head),
    )?;
    Ok((enc, head))
}

fn load_encoder(dir: &Path) -> Result<(EncoderConfig, EncoderParams)> {
    require_dir(dir, "encoder checkpoint")?;
    let cfg: PredModelConfig = read_json(&dir.join("pred.json"))?;
    let enc = load_checkpoint(
        &dir.join("encoder.ckpt"),
        &EncoderParams::init(&cfg.encoder),
    )?;
    Ok((cfg.encoder, enc))
}

#[derive(Serialize)]
struct PredRunConfig<'a> {
    model: &'a PredModelConfig,
    train: &'a HeadTrainConfig,
    encoder_init: Option<String>,
}

pub fn train_pred(a: &TrainPredArgs) -> Result<()> {
    require_dir(&a.corpus, "corpus")?;
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(CliError::usage("--holdout must be in [0, 1)"));
    }
    if a.encoder_ckpt.is_some() && a.encoder == EncoderChoice::Weak {
        return Err(CliError::usage(
            "--encoder weak builds a fresh encoder; drop --encoder-ckpt",
        ));
    }
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    if let Some(p) = &a.encoder_ckpt {
        inputs.push(p);
    }
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let out = staging.path();

    let (encoder_cfg, mut enc) = match (&a.encoder_ckpt, a.encoder) {
        (Some(p), _) => load_encoder(p)?,
        (None, EncoderChoice::Weak) => {
            let c = EncoderConfig::weak(a.d_enc, a.seed);
            (c.clone(), EncoderParams::init(&c))
        }
        (None, EncoderChoice::Trained) => {
            let c = EncoderConfig {
                d_enc: a.d_enc,
                seed: a.seed,
                ..EncoderConfig::default()
            };
            (c.clone(), EncoderParams::init(&c))
        }
    };
    let model_cfg = PredModelConfig {
        encoder: encoder_cfg,
        head: HeadConfig {
            hidden: a.hidden,
            seed: a.seed.wrapping_add(7),
            ..HeadConfig::default()
        },
    };
    let cfg = HeadTrainConfig {
        head: model_cfg.head.clone(),
        lr: a.lr,
        epochs: a.epochs,
        steps: a.steps,
        seed: a.seed,
        co_train: !a.frozen_encoder,
        holdout_fraction: a.holdout,
        ..HeadTrainConfig::default()
    };

    let lib = CellLibrary::builtin();
    let mut data = Vec::new();
    for (name, n) in corpus_netlists(&a.corpus, BenchTask::Rtl)? {
        let labels = load_labels(&a.corpus, &name)?;
        let per_gate: Vec<_> = n
            .gates
            .iter()
            .map(|g| labels.get(&g.instance_name).copied())
            .collect();
        data.push(LabeledGraph::from_gate_labels(
            &name,
            build_tag_graph(&n, &lib)?,
            &per_gate,
        ));
    }
    let mut head = HeadParams::init(enc.d_enc(), &model_cfg.head);
    let report = train_head_from(&data, &mut enc, &mut head, &cfg)?;
    log::info!(
        "train accuracy {:.4}, held-out accuracy {}",
        report.train_accuracy,
        report
            .holdout_accuracy
            .map_or("n/a".into(), |x| format!("{x:.4}"))
    );

    write_json(&out.join("pred.json"), &model_cfg)?;
    save_checkpoint(&enc, &out.join("encoder.ckpt"))?;
    save_checkpoint(&head, &out.join("head.ckpt"))?;
    write_json(&out.join("report.json"), &report)?;
    let mut csv = String::from("step,loss\n");
    for (s, l) in &report.losses {
        csv.push_str(&format!("{s},{l}\n"));
    }
    write_bytes(&out.join("losses.csv"), csv.as_bytes())?;
    let run_cfg = PredRunConfig {
        model: &model_cfg,
        train: &cfg,
        encoder_init: a.encoder_ckpt.as_ref().map(|p| p.display().to_string()),
    };
    let mut m = Manifest::new("train-pred", Some(a.seed), &run_cfg, &inputs)?;
    m.steps = Some(report.losses.len());
    m.final_loss = report.losses.last().map(|(_, l)| *l);
    m.artifacts = [
        "pred.json",
        "encoder.ckpt",
        "head.ckpt",
        "report.json",
        "losses.csv",
    ]
    .map(String::from)
    .to_vec();
    m.write(out)?;
    staging.commit()
}

pub fn save_aligned(dir: &Path, cfg: &AlignConfig, model: &AlignedModel) -> Result<()> {
    write_json(&dir.join("align.json"), cfg)?;
    save_checkpoint(&model.encoder, &dir.join("encoder.ckpt"))?;
    save_checkpoint(&model.connector, &dir.join("connector.ckpt"))?;
    save_checkpoint(&model.decoder, &dir.join("decoder.ckpt"))?;
    Ok(())
}

pub fn load_aligned(dir: &Path) -> Result<(AlignConfig, AlignedModel)> {
    require_dir(dir, "model")?;
    let cfg: AlignConfig = read_json(&dir.join("align.json"))?;
    let template = AlignedModel::init(&cfg);
    let model = AlignedModel {
        encoder: load_checkpoint(&dir.join("encoder.ckpt"), &template.encoder)?,
        connector: load_checkpoint(&dir.join("connector.ckpt"), &template.connector)?,
        decoder: load_checkpoint(&dir.join("decoder.ckpt"), &template.decoder)?,
        no_align: cfg.no_align,
    };
    Ok((cfg, model))
}

/// Cuts `s` to at most `max` bytes on a character boundary.
pub fn truncate_bytes(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

#[derive(Serialize)]
struct AlignRunConfig<'a> {
    model: &'a AlignConfig,
    train: &'a TrainConfig,
    task: &'a str,
    limit: Option<usize>,
    max_target_bytes: Option<usize>,
    encoder_init: Option<String>,
    init: Option<String>,
}

pub fn train_align(a: &TrainAlignArgs, stage: Stage) -> Result<()> {
    require_dir(&a.corpus, "corpus")?;
    let task = match parse_task(&a.task)? {
        BenchTask::FuncDesc => Task::FuncDesc,
        BenchTask::ImplDetail => Task::ImplDetail,
        BenchTask::Rtl => {
            return Err(CliError::usage(
                "alignment trains on text tasks 1 and 2 only",
            ))
        }
    };
    match (stage, &a.init) {
        (Stage::One, Some(_)) => {
            return Err(CliError::usage(
                "train-align1 starts from scratch; --init is for train-align2",
            ))
        }
        (Stage::Two, None) => {
            return Err(CliError::usage(
                "train-align2 needs --init <train-align1 output>",
            ))
        }
        (Stage::Two, Some(_))
            if a.config.is_some()
                || a.encoder_ckpt.is_some()
                || a.no_align
                || a.encoder == EncoderChoice::Weak =>
        {
            return Err(CliError::usage(
                "model options come from --init; drop --config/--encoder/--encoder-ckpt/--no-align",
            ))
        }
        _ => {}
    }
    if a.encoder_ckpt.is_some() && a.encoder == EncoderChoice::Weak {
        return Err(CliError::usage(
            "--encoder weak builds a fresh encoder; drop --encoder-ckpt",
        ));
    }
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    for p in [&a.init, &a.config, &a.encoder_ckpt].into_iter().flatten() {
        inputs.push(p);
    }
    let staging = prepare_out_dir(&a.out, &inputs, false)?;
    let out = staging.path();

    let (cfg, mut model) = match &a.init {
        Some(dir) => load_aligned(dir)?,
        None => {
            let mut cfg: AlignConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => AlignConfig::default(),
            };
            cfg.no_align |= a.no_align;
            let mut loaded = None;
            match (&a.encoder_ckpt, a.encoder) {
                (Some(p), _) => {
                    let (ec, enc) = load_encoder(p)?;
                    cfg.encoder = ec;
                    loaded = Some(enc);
                }
                (None, EncoderChoice::Weak) => {
                    cfg.encoder = EncoderConfig::weak(cfg.encoder.d_enc, cfg.encoder.seed)
                }
                (None, EncoderChoice::Trained) => {}
            }
            let cfg = cfg.normalized();
            let mut model = AlignedModel::init(&cfg);
            if let Some(enc) = loaded {
                model.encoder = enc;
            }
            (cfg, model)
        }
    };

    let lib = CellLibrary::builtin();
    let bench = match task {
        Task::FuncDesc => BenchTask::FuncDesc,
        Task::ImplDetail => BenchTask::ImplDetail,
    };
    let mut bundles = load_bundles(&a.corpus, bench)?;
    if let Some(k) = a.limit {
        bundles.truncate(k);
    }
    let mut data = Vec::with_capacity(bundles.len());
    for b in &bundles {
        let n = netreason_core::parse_netlist(&b.netlist, &lib)?;
        let target = match a.max_target_bytes {
            Some(m) => truncate_bytes(b.golden.trim_end(), m),
            None => b.golden.trim_end(),
        };
        data.push(AlignExample::new(&n, &lib, task, target)?);
    }
    let base = match stage {
        Stage::One => TrainConfig::stage1(),
        Stage::Two => TrainConfig::stage2(),
    };
    let tcfg = TrainConfig {
        lr: a.lr.unwrap_or(base.lr),
        epochs: a.epochs,
        steps: a.steps,
        seed: a.seed,
        ..base
    };
    let report = train_stage(stage, &data, &mut model, &tcfg)?;
    save_aligned(out, &cfg, &model)?;
    write_bytes(&out.join("losses.csv"), report.to_csv().as_bytes())?;
    write_json(&out.join("report.json"), &report)?;
    let run_cfg = AlignRunConfig {
        model: &cfg,
        train: &tcfg,
        task: task.as_str(),
        limit: a.limit,
        max_target_bytes: a.max_target_bytes,
        encoder_init: a.encoder_ckpt.as_ref().map(|p| p.display().to_string()),
        init: a.init.as_ref().map(|p| p.display().to_string()),
    };
    let stage_name = match stage {
        Stage::One => "train-align1",
        Stage::Two => "train-align2",
    };
    let mut m = Manifest::new(stage_name, Some(a.seed), &run_cfg, &inputs)?;
    m.steps = Some(report.losses.len());
    m.final_loss = report.final_loss();
    m.artifacts = [
        "align.json",
        "encoder.ckpt",
        "connector.ckpt",
        "decoder.ckpt",
        "losses.csv",
        "report.json",
    ]
    .map(String::from)
    .to_vec();
    log::info!(
        "{stage_name}: {} steps, final loss {:?}",
        report.losses.len(),
        report.final_loss()
    );
    m.write(out)?;
    staging.commit()
}
