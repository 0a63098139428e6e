use std::path::{Path, PathBuf};

use linkprobe::analysis::{
    attribute_instance, curve_area, layerwise_head_order, probe_mac, probe_maw, pruning_curve, IgConfig,
};
use linkprobe::dataset::{
    build_vocabulary, filter_instances, generate_synthetic, synthetic_graph, to_jsonl_string,
    GenerationConfig, SyntheticGraphConfig, VocabOptions,
};
use linkprobe::encoder::{EncoderConfig, ModelParams};
use linkprobe::metrics::{a2q_link_weight, cls_link_weight, LinkSource};
use linkprobe::trainer::{
    checkpoint_to_bytes, evaluate_accuracy, train, TrainConfig, TrainMeta, TrainMode,
};
use serde::Serialize;

use crate::args::{
    AttributeArgs, Common, DataFlags, EvalArgs, GenDataArgs, LayerSweepArgs, ProbeArgs,
    PruneArgs, ReportArgs, SourceArg, TrainArgs,
};
use crate::config::{AnalysisSettings, FileConfig, PruneSettings};
use crate::data::{
    Dataset, LoadedCheckpoint, Provenance, DEV_FILE, DROPS_FILE, GRAPH_FILE, TRAIN_FILE,
    VOCAB_FILE,
};
use crate::error::{CliError, CliResult};
use crate::report::{merge_fragments, Fragment, FragmentBody, ReportBundle};
use crate::run::{num, Run};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train.json";
pub const EVAL_FILE: &str = "eval.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MAW_FILE: &str = "maw.json";
pub const MAC_FILE: &str = "mac.json";
pub const ATTRIBUTION_FILE: &str = "attributions.csv";
pub const COMPLETENESS_FILE: &str = "completeness.csv";
pub const PRUNING_FILE: &str = "pruning.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const LAYERS_FILE: &str = "layers.json";
pub const LAYERS_CSV: &str = "layers.csv";

fn config_input(c: &Common) -> Vec<PathBuf> {
    c.config.iter().cloned().collect()
}

fn paths(v: &[PathBuf]) -> Vec<&Path> {
    v.iter().map(PathBuf::as_path).collect()
}

pub fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = file.seed(a.common.seed);
    let (graph_cfg, gen_cfg) = file.data(a, seed);
    #[derive(Serialize)]
    struct Snapshot<'a> {
        graph: &'a SyntheticGraphConfig,
        generation: &'a GenerationConfig,
    }
    let inputs = config_input(&a.common);
    let run = Run::start(
        &a.common.out,
        "gen-data",
        &Snapshot {
            graph: &graph_cfg,
            generation: &gen_cfg,
        },
        &paths(&inputs),
        vec![seed],
        &[GRAPH_FILE, TRAIN_FILE, DEV_FILE, VOCAB_FILE, DROPS_FILE],
    )?;
    let kg = synthetic_graph(&graph_cfg)?;
    let split = generate_synthetic(&kg, &gen_cfg)?;
    let vocab = build_vocabulary([&split.train[..], &split.dev[..]], &VocabOptions::default());
    let (train, train_drops) = filter_instances(&split.train, &vocab);
    let (dev, dev_drops) = filter_instances(&split.dev, &vocab);
    run.write(GRAPH_FILE, kg.to_tsv().as_bytes())?;
    run.write(TRAIN_FILE, to_jsonl_string(&train).as_bytes())?;
    run.write(DEV_FILE, to_jsonl_string(&dev).as_bytes())?;
    let mut tokens = vocab.tokens().join("\n");
    tokens.push('\n');
    run.write(VOCAB_FILE, tokens.as_bytes())?;
    run.write_json(
        DROPS_FILE,
        &serde_json::json!({ "train": train_drops, "dev": dev_drops }),
    )
}

#[derive(Serialize)]
struct TrainSummary {
    mode: TrainMode,
    epochs: usize,
    steps: usize,
    final_loss: Option<f64>,
    train_accuracy: f64,
    dev_accuracy: f64,
    encoder_checksum: String,
}

pub fn train_cmd(a: &TrainArgs) -> CliResult<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = file.seed(a.common.seed);
    let data = Dataset::load(&a.data)?;
    let mut inputs: Vec<PathBuf> = Dataset::files(&a.data).into();
    let params = match &a.init {
        Some(p) => {
            let m = &a.model;
            if [m.layers, m.heads, m.model_width, m.key_width, m.ff_width, m.max_seq_len]
                .iter()
                .any(Option::is_some)
            {
                return Err(CliError::usage("model shape flags cannot be combined with --init"));
            }
            inputs.push(p.clone());
            LoadedCheckpoint::load(p, &data)?.checkpoint.params
        }
        None => ModelParams::init(file.model(&a.model, data.vocab.len(), seed))?,
    };
    let cfg = file.train(&a.optim, a.mode, seed)?;
    if !a.init_only {
        cfg.validate(params.config.num_layers)?;
    }
    inputs.extend(config_input(&a.common));
    #[derive(Serialize)]
    struct Snapshot<'a> {
        model: &'a EncoderConfig,
        train: Option<&'a TrainConfig>,
        init: Option<String>,
    }
    let run = Run::start(
        &a.common.out,
        "train",
        &Snapshot {
            model: &params.config,
            train: (!a.init_only).then_some(&cfg),
            init: a.init.as_ref().map(|p| p.display().to_string()),
        },
        &paths(&inputs),
        vec![seed],
        &[CHECKPOINT_FILE, LOSS_FILE, TRAIN_SUMMARY_FILE],
    )?;
    let (trained, losses, mode, epochs) = if a.init_only {
        (params, Vec::new(), TrainMode::Full, 0)
    } else {
        let out = train(&params, &data.train, &cfg)?;
        (out.params, out.losses, cfg.mode, cfg.epochs)
    };
    let dev = evaluate_accuracy(&trained, &data.dev)?;
    let train_eval = evaluate_accuracy(&trained, &data.train)?;
    let meta = TrainMeta {
        mode,
        seed,
        epoch: epochs,
        dev_accuracy: Some(dev.accuracy),
    };
    run.write(CHECKPOINT_FILE, &checkpoint_to_bytes(&trained, &meta)?)?;
    let rows: Vec<Vec<String>> = losses
        .iter()
        .map(|p| vec![p.step.to_string(), p.epoch.to_string(), num(p.loss), num(p.learning_rate)])
        .collect();
    run.write_csv(LOSS_FILE, &["step", "epoch", "loss", "learning_rate"], &rows)?;
    run.write_json(
        TRAIN_SUMMARY_FILE,
        &TrainSummary {
            mode,
            epochs,
            steps: losses.len(),
            final_loss: losses.last().map(|p| p.loss),
            train_accuracy: train_eval.accuracy,
            dev_accuracy: dev.accuracy,
            encoder_checksum: trained.encoder_checksum(),
        },
    )
}

/// Dataset, checkpoint, and the input list for the manifest.
fn load_model(d: &DataFlags, c: &Common) -> CliResult<(Dataset, LoadedCheckpoint, Vec<PathBuf>)> {
    let data = Dataset::load(&d.data)?;
    let ckpt = LoadedCheckpoint::load(&d.checkpoint, &data)?;
    let mut inputs: Vec<PathBuf> = Dataset::files(&d.data).into();
    inputs.push(d.checkpoint.clone());
    inputs.extend(config_input(c));
    Ok((data, ckpt, inputs))
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = file.seed(a.common.seed);
    let settings = file.analysis(None, SourceArg::Attention, None, a.data.split, a.data.limit, None);
    let (data, ckpt, inputs) = load_model(&a.data, &a.common)?;
    let run = Run::start(
        &a.common.out,
        "eval",
        &settings,
        &paths(&inputs),
        vec![seed],
        &[EVAL_FILE, PREDICTIONS_FILE],
    )?;
    let split = data.split(settings.split, settings.limit)?;
    let ev = evaluate_accuracy(&ckpt.checkpoint.params, split)?;
    let frag = Fragment::new(
        Provenance::new(&data, &ckpt),
        settings.split,
        split.len(),
        FragmentBody::Eval {
            accuracy: ev.accuracy,
        },
    );
    run.write_json(EVAL_FILE, &frag)?;
    let rows: Vec<Vec<String>> = split
        .iter()
        .zip(&ev.predictions)
        .zip(&ev.logits)
        .map(|((inst, p), l)| {
            let mut r = vec![
                inst.id.clone(),
                inst.gold_index.to_string(),
                p.to_string(),
                (*p == inst.gold_index).to_string(),
            ];
            r.extend(l.iter().map(|&x| num(x)));
            r
        })
        .collect();
    run.write_csv(
        PREDICTIONS_FILE,
        &["id", "gold", "prediction", "correct", "logit_1", "logit_2", "logit_3", "logit_4", "logit_5"],
        &rows,
    )
}

fn ig_for(s: &AnalysisSettings) -> (IgConfig, Option<usize>) {
    let steps = (s.source == LinkSource::Attribution).then_some(s.ig_steps);
    (IgConfig::with_steps(s.ig_steps), steps)
}

pub fn probe(a: &ProbeArgs, mac: bool) -> CliResult<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = file.seed(a.common.seed);
    let settings = file.analysis(
        a.source,
        SourceArg::Attention,
        a.ig_steps,
        a.data.split,
        a.data.limit,
        a.min_relation_count,
    );
    let (data, ckpt, inputs) = load_model(&a.data, &a.common)?;
    let (name, output) = if mac {
        ("probe-mac", MAC_FILE)
    } else {
        ("probe-maw", MAW_FILE)
    };
    let run = Run::start(&a.common.out, name, &settings, &paths(&inputs), vec![seed], &[output])?;
    let split = data.split(settings.split, settings.limit)?;
    let params = &ckpt.checkpoint.params;
    let (ig, ig_steps) = ig_for(&settings);
    let body = if mac {
        FragmentBody::Mac {
            ig_steps,
            probe: probe_mac(split, params, settings.source, &ig)?,
        }
    } else {
        FragmentBody::Maw {
            ig_steps,
            probe: probe_maw(split, params, settings.source, &ig, settings.min_relation_count)?,
        }
    };
    let frag = Fragment::new(Provenance::new(&data, &ckpt), settings.split, split.len(), body);
    run.write_json(output, &frag)
}

pub fn attribute(a: &AttributeArgs) -> CliResult<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = file.seed(a.common.seed);
    let settings = file.analysis(
        Some(SourceArg::Attribution),
        SourceArg::Attribution,
        a.ig_steps,
        a.data.split,
        a.data.limit,
        None,
    );
    let (data, ckpt, inputs) = load_model(&a.data, &a.common)?;
    let run = Run::start(
        &a.common.out,
        "attribute",
        &settings,
        &paths(&inputs),
        vec![seed],
        &[ATTRIBUTION_FILE, COMPLETENESS_FILE],
    )?;
    let split = data.split(settings.split, settings.limit)?;
    let params = &ckpt.checkpoint.params;
    let ig = IgConfig::with_steps(settings.ig_steps);
    let mut heads = Vec::new();
    let mut totals = Vec::new();
    for inst in split {
        for (c, (atr, span)) in attribute_instance(inst, params, &ig)?
            .iter()
            .zip(&inst.spans)
            .enumerate()
        {
            let cand = (c + 1).to_string();
            for (h, m) in atr.scores.iter() {
                heads.push(vec![
                    inst.id.clone(),
                    cand.clone(),
                    h.layer.to_string(),
                    h.head.to_string(),
                    num(m.sum()),
                    num(a2q_link_weight(m, span)?),
                    num(cls_link_weight(m, span)?),
                ]);
            }
            totals.push(vec![
                inst.id.clone(),
                cand,
                num(atr.output),
                num(atr.baseline_output),
                num(atr.total()),
                num(atr.completeness_residual()),
            ]);
        }
    }
    run.write_csv(
        ATTRIBUTION_FILE,
        &["id", "candidate", "layer", "head", "total", "a2q", "cls"],
        &heads,
    )?;
    run.write_csv(
        COMPLETENESS_FILE,
        &["id", "candidate", "output", "baseline_output", "attribution_sum", "residual"],
        &totals,
    )
}

pub fn prune_sweep(a: &PruneArgs) -> CliResult<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = file.seed(a.common.seed);
    let settings = PruneSettings {
        analysis: file.analysis(
            a.source,
            SourceArg::Attribution,
            a.ig_steps,
            a.data.split,
            a.data.limit,
            None,
        ),
        order: a.order,
    };
    let (data, ckpt, inputs) = load_model(&a.data, &a.common)?;
    let run = Run::start(
        &a.common.out,
        "prune-sweep",
        &settings,
        &paths(&inputs),
        vec![seed],
        &[PRUNING_FILE, CURVE_FILE],
    )?;
    let s = &settings.analysis;
    let split = data.split(s.split, s.limit)?;
    let params = &ckpt.checkpoint.params;
    let (ig, ig_steps) = ig_for(s);
    let mac = probe_mac(split, params, s.source, &ig)?;
    let descending = a.order == crate::args::PruneOrder::DescendingMac;
    let order = layerwise_head_order(&mac.mac.overlap_grid(), descending);
    let curve = pruning_curve(params, split, &order)?;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| {
            let head = p
                .pruned
                .checked_sub(1)
                .map_or(String::new(), |i| order[i].to_string());
            vec![p.pruned.to_string(), head, num(p.accuracy)]
        })
        .collect();
    let frag = Fragment::new(
        Provenance::new(&data, &ckpt),
        s.split,
        split.len(),
        FragmentBody::Pruning {
            source: s.source,
            ig_steps,
            order: a.order,
            head_order: order,
            area: curve_area(&curve),
            curve,
        },
    );
    run.write_json(PRUNING_FILE, &frag)?;
    run.write_csv(CURVE_FILE, &["pruned", "last_head", "accuracy"], &rows)
}

pub fn layer_sweep(a: &LayerSweepArgs) -> CliResult<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = file.seed(a.common.seed);
    let settings = file.analysis(None, SourceArg::Attention, None, a.data.split, a.data.limit, None);
    let (data, ckpt, inputs) = load_model(&a.data, &a.common)?;
    let params = &ckpt.checkpoint.params;
    let base = file.train(&a.optim, Some(TrainMode::OutputOnly), seed)?;
    base.validate(params.config.num_layers)?;
    #[derive(Serialize)]
    struct Snapshot<'a> {
        evaluation: &'a AnalysisSettings,
        probe_training: &'a TrainConfig,
    }
    let run = Run::start(
        &a.common.out,
        "layer-sweep",
        &Snapshot {
            evaluation: &settings,
            probe_training: &base,
        },
        &paths(&inputs),
        vec![seed],
        &[LAYERS_FILE, LAYERS_CSV],
    )?;
    let split = data.split(settings.split, settings.limit)?;
    let accuracy = (0..params.config.num_layers)
        .map(|k| {
            let cfg = TrainConfig {
                mode: TrainMode::ProbeAtLayer(k),
                ..base
            };
            let out = train(params, &data.train, &cfg)?;
            Ok(evaluate_accuracy(&out.params, split)?.accuracy)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let rows: Vec<Vec<String>> = accuracy
        .iter()
        .enumerate()
        .map(|(k, &acc)| vec![k.to_string(), num(acc)])
        .collect();
    let frag = Fragment::new(
        Provenance::new(&data, &ckpt),
        settings.split,
        split.len(),
        FragmentBody::Layers { accuracy },
    );
    run.write_json(LAYERS_FILE, &frag)?;
    run.write_csv(LAYERS_CSV, &["layer", "accuracy"], &rows)
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    FileConfig::load(a.common.config.as_deref())?;
    if a.fragments.is_empty() {
        return Err(CliError::validation("report needs at least one fragment"));
    }
    let fragments = a
        .fragments
        .iter()
        .map(|p| Fragment::load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let report = merge_fragments(&fragments)?;
    let bundle = ReportBundle::build(report, !a.no_svg)?;
    let mut inputs = a.fragments.clone();
    inputs.extend(config_input(&a.common));
    let seeds = bundle.report.runs.iter().map(|r| r.seed).collect();
    let run = Run::start(
        &a.common.out,
        "report",
        &serde_json::json!({ "svg": !a.no_svg, "fragments": a.fragments.len() }),
        &paths(&inputs),
        seeds,
        &bundle.names(),
    )?;
    for (name, bytes) in &bundle.files {
        run.write(name, bytes)?;
    }
    Ok(())
}
