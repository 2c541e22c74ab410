use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use amc_core::dataset::{
    build_count_table, generate, load_vqacp_annotations, make_shift_config, prune_vocab,
    read_dataset, write_dataset, Record, StoredDataset,
};
use amc_core::evaluate::{evaluate_model, export_embeddings};
use amc_core::io::{atomic_write, write_json};
use amc_core::losses::{LossConfig, LossKind, DEFAULT_SCALE};
use amc_core::margin::{
    ideal_config_probability, scale_bound_closed_form, scale_bound_exact, BoundQuery, MarginTable,
    DEFAULT_EPSILON,
};
use amc_core::numerics::Rng;
use amc_core::trainer::{
    gradcheck_with, init_model, load_checkpoint, margin_sweep, save_checkpoint, train, Checkpoint,
    GradcheckSpec, SweepSettings, TrainConfig,
};
use serde::Serialize;

use crate::args::{
    EvalArgs, ExportArgs, GradcheckArgs, LossArgs, OptimArgs, ScaleboundArgs, SplitArg, StatsArgs,
    SweepArgs, SynthArgs, TrainArgs,
};
use crate::manifest::{digest_dataset, digest_file};
use crate::Failure;

/// What a finished command hands back for the run manifest.
pub struct Run {
    pub seed: Option<u64>,
    pub digests: BTreeMap<String, String>,
    pub out: Option<PathBuf>,
    /// `Err` when a verification command's check did not pass.
    pub check: Result<(), String>,
}

impl Run {
    fn new(out: Option<&Path>, seed: Option<u64>) -> Self {
        Run {
            seed,
            digests: BTreeMap::new(),
            out: out.map(Path::to_path_buf),
            check: Ok(()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))
}

fn load_data(dir: &Path, run: &mut Run) -> Result<StoredDataset, Failure> {
    let data = read_dataset(dir)?;
    let m = &data.manifest;
    digest_dataset(&mut run.digests, dir, &[&m.train_file, &m.test_file])?;
    Ok(data)
}

fn split_records(data: &StoredDataset, split: SplitArg) -> &[Record] {
    match split {
        SplitArg::Train => &data.train,
        SplitArg::Test => &data.test,
    }
}

/// Builds the loss configuration and margin-table epsilon, rejecting flags
/// that do not apply to the chosen loss.
fn loss_config(args: &LossArgs) -> Result<(LossConfig, f64), Failure> {
    let kind = LossKind::from(args.loss);
    if kind == LossKind::Ce && args.scale.is_some() {
        return Err(usage("--scale does not apply to --loss ce"));
    }
    if kind != LossKind::Adavqa && args.epsilon.is_some() {
        return Err(usage(format!(
            "--epsilon only applies to --loss adavqa, not {kind}"
        )));
    }
    if kind != LossKind::Lmc && args.fixed_margin.is_some() {
        return Err(usage(format!(
            "--fixed-margin only applies to --loss lmc, not {kind}"
        )));
    }
    if kind != LossKind::Adavqa && args.entropy_threshold.is_some() {
        return Err(usage(format!(
            "--entropy-threshold only applies to --loss adavqa, not {kind}"
        )));
    }
    if kind == LossKind::Lmc && args.fixed_margin.is_none() {
        return Err(usage("--loss lmc requires --fixed-margin"));
    }
    let config = match kind {
        LossKind::Ce => LossConfig::ce(),
        _ => LossConfig::new(
            kind,
            args.scale.unwrap_or(DEFAULT_SCALE),
            args.fixed_margin,
            args.entropy_threshold,
        )?,
    };
    let epsilon = args.epsilon.unwrap_or(DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(usage(format!("--epsilon must be positive, got {epsilon}")));
    }
    Ok((config, epsilon))
}

fn check_optim(o: &OptimArgs) -> Result<(), Failure> {
    if !(o.lr >= 0.0 && o.lr.is_finite()) {
        return Err(usage(format!(
            "--lr must be a non-negative number, got {}",
            o.lr
        )));
    }
    if o.epochs == 0 || o.batch_size == 0 {
        return Err(usage("--epochs and --batch-size must be positive"));
    }
    if o.hidden == Some(0) {
        return Err(usage("--hidden must be positive"));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<(), Failure> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--epsilon must be positive, got {epsilon}")))
    }
}

#[derive(Serialize)]
struct MarginsFile<'a> {
    answers: &'a [String],
    qtypes: &'a [String],
    table: &'a MarginTable,
}

pub fn stats(args: &StatsArgs) -> Result<Run, Failure> {
    check_epsilon(args.epsilon)?;
    let mut run = Run::new(Some(&args.out), None);
    let loaded = load_vqacp_annotations(open(&args.questions)?, open(&args.annotations)?)?;
    digest_file(&mut run.digests, &args.questions)?;
    digest_file(&mut run.digests, &args.annotations)?;
    let loaded = prune_vocab(loaded, args.min_count);
    let counts = build_count_table(&loaded.records, &loaded.vocab, &loaded.registry)?;
    let table = MarginTable::from_counts(&counts, args.epsilon)?;
    atomic_write(
        &args.out.join("report.txt"),
        table
            .render_report(&loaded.vocab, &loaded.registry)
            .as_bytes(),
    )?;
    write_json(
        &args.out.join("margins.json"),
        &MarginsFile {
            answers: loaded.vocab.names(),
            qtypes: loaded.registry.names(),
            table: &table,
        },
    )?;
    println!(
        "{} questions, {} answers, {} question types -> {}",
        loaded.records.len(),
        loaded.vocab.len(),
        loaded.registry.len(),
        args.out.display()
    );
    Ok(run)
}

pub fn synth(args: &SynthArgs) -> Result<Run, Failure> {
    let mut config = make_shift_config(&args.preset)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n_train {
        config.n_train = n;
    }
    if let Some(n) = args.n_test {
        config.n_test = n;
    }
    if let Some(s) = args.sigma {
        config.evidence_noise_sigma = s;
    }
    config.validate()?;
    let run = Run::new(Some(&args.out), Some(config.seed));
    let data = StoredDataset::from_synthetic(generate(&config)?);
    write_dataset(&args.out, &data)?;
    println!(
        "{} train / {} test records -> {}",
        data.train.len(),
        data.test.len(),
        args.out.display()
    );
    Ok(run)
}

pub fn train_cmd(args: &TrainArgs) -> Result<Run, Failure> {
    let (loss, epsilon) = loss_config(&args.loss)?;
    check_optim(&args.optim)?;
    let mut run = Run::new(Some(&args.out), Some(args.seed));
    let data = load_data(&args.data, &mut run)?;

    let mut config = TrainConfig::new(loss, args.seed);
    config.learning_rate = args.optim.lr;
    config.epochs = args.optim.epochs;
    config.batch_size = args.optim.batch_size;
    if loss.kind == LossKind::Adavqa {
        let counts = build_count_table(&data.train, &data.vocab, &data.registry)?;
        let table = MarginTable::from_counts(&counts, epsilon)?;
        write_json(
            &args.out.join("margins.json"),
            &MarginsFile {
                answers: data.vocab.names(),
                qtypes: data.registry.names(),
                table: &table,
            },
        )?;
        config.margin_table = Some(table);
    }
    let model = init_model(
        data.manifest.feature_dim,
        data.vocab.len(),
        args.optim.hidden,
        &mut Rng::new(args.seed).substream("init"),
    )?;
    let (model, log) = train(model, &data.train, &config)?;
    save_checkpoint(
        &args.out.join("checkpoint.json"),
        &Checkpoint::from_model(&model, loss, args.seed),
    )?;
    write_json(&args.out.join("train_log.json"), &log)?;
    if let Some(last) = log.epochs.last() {
        println!(
            "{}: {} epochs, final mean loss {:.6}, train accuracy {:.4}",
            loss.kind,
            log.epochs.len(),
            last.mean_loss,
            last.train_accuracy
        );
    }
    Ok(run)
}

pub fn eval(args: &EvalArgs) -> Result<Run, Failure> {
    let mut run = Run::new(Some(&args.out), None);
    let data = load_data(&args.data, &mut run)?;
    digest_file(&mut run.digests, &args.checkpoint)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    run.seed = Some(ckpt.seed);
    let model = ckpt.to_model()?;
    let report = evaluate_model(
        &model,
        split_records(&data, args.split),
        ckpt.loss.kind,
        data.categories(),
        &data.registry,
    )?;
    let text = report.render();
    atomic_write(&args.out.join("report.txt"), text.as_bytes())?;
    write_json(&args.out.join("report.json"), &report)?;
    print!("{text}");
    Ok(run)
}

pub fn sweep(args: &SweepArgs) -> Result<Run, Failure> {
    check_optim(&args.optim)?;
    check_epsilon(args.epsilon)?;
    if args.seeds.is_empty() || args.fixed_margins.is_empty() {
        return Err(usage("--seeds and --fixed-margins must be non-empty"));
    }
    LossConfig::adavqa(args.scale, args.entropy_threshold)?;
    for &m in &args.fixed_margins {
        LossConfig::lmc(args.scale, m)?;
    }
    let mut run = Run::new(Some(&args.out), args.seeds.first().copied());
    let data = load_data(&args.data, &mut run)?;
    let settings = SweepSettings {
        scale: args.scale,
        entropy_threshold: args.entropy_threshold,
        epsilon: args.epsilon,
        learning_rate: args.optim.lr,
        epochs: args.optim.epochs,
        batch_size: args.optim.batch_size,
        hidden_dim: args.optim.hidden,
    };
    let report = margin_sweep(
        &data.train,
        &data.test,
        &data.vocab,
        &data.registry,
        &settings,
        &args.fixed_margins,
        &args.seeds,
    )?;
    let text = report.render();
    atomic_write(&args.out.join("sweep.tsv"), text.as_bytes())?;
    write_json(&args.out.join("sweep.json"), &report)?;
    print!("{text}");
    Ok(run)
}

fn parse_dims(spec: &str) -> Result<(usize, usize), Failure> {
    let bad = || usage(format!("--dims entries look like 64x50, got {spec:?}"));
    let (d, c) = spec.trim().split_once('x').ok_or_else(bad)?;
    let d: usize = d.parse().map_err(|_| bad())?;
    let c: usize = c.parse().map_err(|_| bad())?;
    if d == 0 || c == 0 {
        return Err(bad());
    }
    Ok((d, c))
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<Run, Failure> {
    if !(args.tol > 0.0 && args.tol.is_finite()) {
        return Err(usage(format!("--tol must be positive, got {}", args.tol)));
    }
    if args.trials == 0 || args.hidden == Some(0) {
        return Err(usage("--trials and --hidden must be positive"));
    }
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(usage(format!(
            "--scale must be positive, got {}",
            args.scale
        )));
    }
    let dims = args
        .dims
        .iter()
        .map(|s| parse_dims(s))
        .collect::<Result<Vec<_>, _>>()?;
    let kinds: Vec<LossKind> = if args.kind.is_empty() {
        LossKind::ALL.to_vec()
    } else {
        args.kind.iter().map(|&k| k.into()).collect()
    };
    let mut run = Run::new(args.out.as_deref(), Some(args.seed));
    let mut text = String::from("kind\tmax_rel_error\tstatus\n");
    let mut failed = Vec::new();
    for kind in kinds {
        let mut worst: f64 = 0.0;
        for &(d, c) in &dims {
            let mut spec = GradcheckSpec::new(kind, d, c, args.trials);
            spec.hidden_dim = args.hidden;
            spec.scale = args.scale;
            worst = worst.max(gradcheck_with(&spec, &mut Rng::new(args.seed))?);
        }
        let ok = worst <= args.tol;
        if !ok {
            failed.push(format!("{kind} ({worst:.3e})"));
        }
        let _ = writeln!(
            text,
            "{kind}\t{worst:.3e}\t{}",
            if ok { "ok" } else { "FAIL" }
        );
    }
    print!("{text}");
    if let Some(out) = &args.out {
        atomic_write(&out.join("gradcheck.tsv"), text.as_bytes())?;
    }
    if !failed.is_empty() {
        run.check = Err(format!(
            "relative error above {:e}: {}",
            args.tol,
            failed.join(", ")
        ));
    }
    Ok(run)
}

pub fn scalebound(args: &ScaleboundArgs) -> Result<Run, Failure> {
    let q = BoundQuery::new(args.target, args.margins.clone(), args.p)?;
    let run = Run::new(args.out.as_deref(), None);
    let exact = scale_bound_exact(&q)?;
    let mut text = String::new();
    match scale_bound_closed_form(&q) {
        Ok(closed) => {
            let _ = writeln!(text, "closed_form_bound\t{closed:.6}");
            let _ = writeln!(text, "exact_bound\t{exact:.6}");
            let _ = writeln!(
                text,
                "probability_at_closed_form_bound\t{:.9}",
                ideal_config_probability(&q, closed)
            );
        }
        Err(e) => {
            let _ = writeln!(text, "closed_form_bound\tundefined ({e})");
            let _ = writeln!(text, "exact_bound\t{exact:.6}");
        }
    }
    let _ = writeln!(
        text,
        "probability_at_exact_bound\t{:.9}",
        ideal_config_probability(&q, exact)
    );
    print!("{text}");
    if let Some(out) = &args.out {
        atomic_write(&out.join("scalebound.tsv"), text.as_bytes())?;
    }
    Ok(run)
}

pub fn export(args: &ExportArgs) -> Result<Run, Failure> {
    let mut run = Run::new(Some(&args.out), None);
    let data = load_data(&args.data, &mut run)?;
    digest_file(&mut run.digests, &args.checkpoint)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    run.seed = Some(ckpt.seed);
    let model = ckpt.to_model()?;
    let path = args.out.join("embeddings.csv");
    let dump = export_embeddings(
        &model,
        split_records(&data, args.split),
        &data.vocab,
        &data.registry,
        &path,
    )?;
    println!("{} rows -> {}", dump.rows.len(), path.display());
    Ok(run)
}
