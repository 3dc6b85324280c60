use qscorer_core::data::{
    generate_synthetic, load_csv, normalize_mos, split, Dataset, Generator, SynthSpec,
};
use qscorer_core::neural::OptimizerConfig;
use qscorer_core::pipeline::{
    compare_heads, evaluate, train_and_track, HeadKind, LrSchedule, ModelCheckpoint, ModelConfig,
    TrainConfig,
};
use serde::Serialize;

use crate::args::{
    CompareArgs, DataArgs, EvalArgs, ModelArgs, Schedule, SplitPart, TrainArgs, TrainOpts,
};
use crate::exit::CliError;
use crate::output::{print_line, OutDir};

pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";
pub const COMPARE_CSV: &str = "compare.csv";

/// Without `--data`, the linear synthetic generator is the default source.
fn with_default_source(mut d: DataArgs) -> DataArgs {
    if d.synth.is_none() && d.data.is_none() {
        d.synth = Some(Generator::Linear);
    }
    d
}

/// Loads or generates the full dataset on the `[1, 5]` MOS scale.
pub fn load_dataset(d: &DataArgs) -> Result<Dataset, CliError> {
    if !(d.train_frac > 0.0 && d.train_frac < 1.0) {
        return Err(CliError::Usage(format!(
            "--train-frac must lie in (0, 1), got {}",
            d.train_frac
        )));
    }
    match (&d.synth, &d.data) {
        (Some(g), None) => {
            if d.n < 2 {
                return Err(CliError::Usage("--n must be >= 2".into()));
            }
            Ok(generate_synthetic(&SynthSpec::new(
                d.n, *g, d.noise, d.seed,
            ))?)
        }
        (None, Some(path)) => {
            let [lo, hi] = d.mos_range[..] else {
                return Err(CliError::Usage(
                    "--mos-range takes exactly two values lo,hi".into(),
                ));
            };
            let ds = load_csv(path, (lo, hi))
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            if ds.feature_dim() == 0 {
                return Err(CliError::Usage(format!(
                    "{} has no feature columns",
                    path.display()
                )));
            }
            Ok(normalize_mos(&ds)?)
        }
        (Some(_), Some(_)) => Err(CliError::Usage(
            "--synth and --data are mutually exclusive".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "a dataset is required: --synth <generator> or --data <csv>".into(),
        )),
    }
}

pub fn model_config(
    head: HeadKind,
    m: &ModelArgs,
    feature_dim: usize,
) -> Result<ModelConfig, CliError> {
    let mut c = ModelConfig::new(feature_dim, head);
    c.hidden_dim = m.hidden_dim;
    c.encoder_hidden = m.encoder_hidden.clone();
    c.head_hidden = m.head_hidden.clone();
    c.fusion = m.fusion;
    c.regressor = m.regressor;
    c.single_token = m.single_token;
    c.predict_sigma = m.predict_sigma;
    c.validate()?;
    Ok(c)
}

pub fn train_config(head: HeadKind, t: &TrainOpts, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::for_head(head, seed);
    c.epochs = t.epochs;
    c.batch_size = t.batch_size;
    c.optimizer = OptimizerConfig {
        lr: t.lr,
        weight_decay: t.weight_decay,
        ..OptimizerConfig::adamw(t.lr)
    };
    c.lr_schedule = match t.lr_schedule {
        Schedule::Cosine => LrSchedule::DEFAULT,
        Schedule::Constant => LrSchedule::Constant,
    };
    let w = &mut c.weights;
    for (slot, v) in [
        (&mut w.ce, t.w_ce),
        (&mut w.score, t.w_score),
        (&mut w.kl, t.w_kl),
        (&mut w.fidelity, t.w_fidelity),
        (&mut w.norm_in_norm, t.w_norm_in_norm),
        (&mut w.ranking, t.w_ranking),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    c.ranking_margin = t.ranking_margin;
    c.fidelity_variant = t.fidelity_variant;
    c.teacher_forcing = !t.no_teacher_forcing;
    c.fallback_sigma = t.fallback_sigma;
    c
}

fn summary(label: &str, plcc: Option<f64>, srcc: Option<f64>) {
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    print_line(&format!("{label}: plcc {} srcc {}", fmt(plcc), fmt(srcc)));
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let a = &TrainArgs {
        data: with_default_source(a.data.clone()),
        ..a.clone()
    };
    let data = load_dataset(&a.data)?;
    let model_cfg = model_config(a.head, &a.model, data.feature_dim())?;
    let train_cfg = train_config(a.head, &a.train, a.data.seed);
    train_cfg.validate(&model_cfg)?;
    let (tr, te) = split(&data, a.data.train_frac, a.data.seed)?;
    let out = OutDir::create(&a.out.out_dir)?;
    out.manifest("train", a)?;
    let (model, run) = train_and_track(&model_cfg, &train_cfg, &tr, &te)?;
    ModelCheckpoint::from_model(&model).save(out.path(MODEL_FILE))?;
    out.csv(LOSS_TRACE_FILE, &run.report.loss_trace)?;
    out.json(REPORT_FILE, &run.report)?;
    summary(&format!("{} held-out", a.head), run.plcc, run.srcc);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let a = &EvalArgs {
        data: with_default_source(a.data.clone()),
        ..a.clone()
    };
    let path = a
        .model
        .as_ref()
        .ok_or_else(|| CliError::Usage("--model <checkpoint> is required".into()))?;
    let ckpt = ModelCheckpoint::load(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let model = ckpt.to_model::<f64>()?;
    let data = load_dataset(&a.data)?;
    if data.feature_dim() != model.config.feature_dim {
        return Err(CliError::Usage(format!(
            "dataset has {} features, model expects {}",
            data.feature_dim(),
            model.config.feature_dim
        )));
    }
    let part = match a.split {
        SplitPart::All => data,
        SplitPart::Train => split(&data, a.data.train_frac, a.data.seed)?.0,
        SplitPart::Test => split(&data, a.data.train_frac, a.data.seed)?.1,
    };
    let out = OutDir::create(&a.out.out_dir)?;
    out.manifest("eval", a)?;
    let report = evaluate(&model, &part, vec![])?;
    out.json(REPORT_FILE, &report)?;
    summary(
        &format!("{} on {}", report.head, part.name),
        report.plcc,
        report.srcc,
    );
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    head: HeadKind,
    plcc: Option<f64>,
    srcc: Option<f64>,
    token_accuracy: f64,
    degenerate: bool,
    epochs_to_threshold: Option<usize>,
}

#[derive(Serialize)]
struct CurveRow {
    head: HeadKind,
    epoch: usize,
    plcc: Option<f64>,
    train_loss: f64,
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let a = &CompareArgs {
        data: with_default_source(a.data.clone()),
        ..a.clone()
    };
    if a.heads.is_empty() {
        return Err(CliError::Usage("--heads needs at least one head".into()));
    }
    let t = &a.train;
    if [
        t.w_ce,
        t.w_score,
        t.w_kl,
        t.w_fidelity,
        t.w_norm_in_norm,
        t.w_ranking,
    ]
    .iter()
    .any(Option::is_some)
    {
        return Err(CliError::Usage(
            "compare trains each head with its own losses; --w-* flags apply to train only".into(),
        ));
    }
    let data = load_dataset(&a.data)?;
    let base_model = model_config(HeadKind::QScorer, &a.model, data.feature_dim())?;
    let base_train = train_config(HeadKind::QScorer, t, a.data.seed);
    base_train.validate(&base_model)?;
    let (tr, te) = split(&data, a.data.train_frac, a.data.seed)?;
    let out = OutDir::create(&a.out.out_dir)?;
    out.manifest("compare", a)?;
    let rows = compare_heads(&tr, &te, &base_model, &base_train, &a.heads)?;
    let table: Vec<CompareRow> = rows
        .iter()
        .map(|r| CompareRow {
            head: r.head,
            plcc: r.plcc,
            srcc: r.srcc,
            token_accuracy: r.report.token_accuracy,
            degenerate: r.report.degenerate,
            epochs_to_threshold: r.epochs_to_plcc(a.plcc_threshold),
        })
        .collect();
    let curves: Vec<CurveRow> = rows
        .iter()
        .flat_map(|r| {
            r.epoch_plcc
                .iter()
                .zip(&r.report.loss_trace)
                .map(|(p, l)| CurveRow {
                    head: r.head,
                    epoch: l.epoch + 1,
                    plcc: *p,
                    train_loss: l.total,
                })
        })
        .collect();
    out.csv(COMPARE_CSV, &table)?;
    out.csv("compare_curves.csv", &curves)?;
    out.json("compare.json", &rows)?;
    for r in &rows {
        summary(r.head.name(), r.plcc, r.srcc);
    }
    Ok(())
}
