//! Command implementations. Each returns the process exit code.

use crate::{
    BootstrapArgs, CurveArgs, DecomposeArgs, ExperimentArgs, GroupByArg, Loss, ModeArg, OutputArgs, TrainToyArgs,
    TrainerArg,
};
use bvdual::estimators::fresh_set_estimate;
use bvdual::io::{fmt_sig, parse_labels, sha256_hex, PredictionLog, Report, Table};
use bvdual::toylab::{decompose_log, run_experiment, Analysis, ExperimentSpec, ToyModelConfig, ToyTrainer, ToyWorld};
use bvdual::{
    conditional_estimate, counterexample_report, double_bootstrap_estimate, ensemble_curve, BvError, Dataset,
    EnsembleMode, GroupBy, Result, Sampling, SimplexPointF64, Trainer,
};
use serde_json::json;
use std::fmt::Display;
use std::path::{Path, PathBuf};

/// Builds the `# replay:` command line with every option spelled out.
struct Replay(Vec<String>);

fn quote(s: &str) -> String {
    let plain = !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "_-./=:+,@".contains(c));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

impl Replay {
    fn new(cmd: &str) -> Self {
        Self(vec!["bv".into(), cmd.into()])
    }

    fn opt(mut self, name: &str, value: impl Display) -> Self {
        self.0.push(format!("--{name}"));
        self.0.push(quote(&value.to_string()));
        self
    }

    fn path(self, name: &str, p: &Path) -> Self {
        self.opt(name, p.display())
    }

    fn maybe_path(self, name: &str, p: &Option<PathBuf>) -> Self {
        match p {
            Some(p) => self.path(name, p),
            None => self,
        }
    }

    fn switch(mut self, name: &str, on: bool) -> Self {
        if on {
            self.0.push(format!("--{name}"));
        }
        self
    }

    fn output(self, o: &OutputArgs) -> Self {
        self.opt("precision", o.precision).maybe_path("report", &o.report)
    }

    fn line(&self) -> String {
        self.0.join(" ")
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| BvError::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| BvError::Parse {
        line: 0,
        message: format!("{} is not UTF-8", path.display()),
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| BvError::Io(format!("{}: {e}", path.display())))
}

fn emit(report: &Report, out: &OutputArgs) -> Result<()> {
    print!("{}", report.render_text());
    if let Some(p) = &out.report {
        write(p, &report.to_json())?;
    }
    Ok(())
}

fn group_by(g: Option<GroupByArg>) -> Option<GroupBy> {
    g.map(|g| match g {
        GroupByArg::Seed => GroupBy::Seed,
        GroupByArg::TrainId => GroupBy::TrainId,
        GroupByArg::Group => GroupBy::Group,
    })
}

fn group_name(g: GroupByArg) -> &'static str {
    match g {
        GroupByArg::Seed => "seed",
        GroupByArg::TrainId => "train_id",
        GroupByArg::Group => "group",
    }
}

struct Inputs {
    log: PredictionLog,
    labels: Vec<usize>,
    digests: [(String, String); 2],
}

fn load_inputs(log: &Path, labels: &Path) -> Result<Inputs> {
    let log_bytes = read(log)?;
    let label_bytes = read(labels)?;
    let parsed = PredictionLog::parse(std::str::from_utf8(&log_bytes).map_err(|_| BvError::Parse {
        line: 0,
        message: "log is not UTF-8".into(),
    })?)?;
    let labels_parsed = parse_labels(std::str::from_utf8(&label_bytes).map_err(|_| BvError::Parse {
        line: 0,
        message: "label file is not UTF-8".into(),
    })?)?;
    Ok(Inputs {
        log: parsed,
        labels: labels_parsed,
        digests: [
            ("log".into(), sha256_hex(&log_bytes)),
            ("labels".into(), sha256_hex(&label_bytes)),
        ],
    })
}

pub fn decompose(a: &DecomposeArgs) -> Result<u8> {
    let inputs = load_inputs(&a.log, &a.labels)?;
    let loss = match a.loss {
        Loss::Kl => "kl",
        Loss::Mse => "mse",
    };
    let d = decompose_log(&inputs.log, &inputs.labels, loss, group_by(a.group_by))?;
    let f = |x: f64| fmt_sig(x, a.out.precision);

    let mut replay = Replay::new("decompose")
        .path("log", &a.log)
        .path("labels", &a.labels)
        .opt("loss", loss);
    if let Some(g) = a.group_by {
        replay = replay.opt("group-by", group_name(g));
    }
    let replay = replay.output(&a.out);
    let config = json!({
        "log": a.log, "labels": a.labels, "loss": loss,
        "group_by": a.group_by.map(group_name), "precision": a.out.precision,
    });
    let mut report = Report::new(replay.line(), config, None);
    report.provenance.input_digests.extend(inputs.digests);

    let mut cols = vec!["example", "label", "bayes", "bias", "variance", "total"];
    if a.group_by.is_some() {
        cols.extend(["cond_bias", "cond_variance", "gap"]);
    }
    let mut per = Table::new("per_example", &cols);
    for (e, (dec, cond)) in d.per_example.iter().enumerate() {
        let mut row = vec![
            e.to_string(),
            inputs.labels[e].to_string(),
            f(dec.bayes_error),
            f(dec.bias),
            f(dec.variance),
            f(dec.total),
        ];
        if let Some(c) = cond {
            row.extend([f(c.conditional_bias), f(c.conditional_variance), f(c.gap)]);
        }
        per.push(row);
    }
    let mut agg = Table::new("aggregate", &cols[2..]);
    let mut row = vec![
        f(d.aggregate.bayes_error),
        f(d.aggregate.bias),
        f(d.aggregate.variance),
        f(d.aggregate.total),
    ];
    if let Some(c) = &d.conditional {
        row.extend([f(c.conditional_bias), f(c.conditional_variance), f(c.gap)]);
    }
    agg.push(row);
    report.tables = vec![per, agg];
    emit(&report, &a.out)?;
    Ok(0)
}

pub fn curve(a: &CurveArgs) -> Result<u8> {
    let inputs = load_inputs(&a.log, &a.labels)?;
    let pool = inputs.log.to_pool()?;
    let m = pool.n_models();
    if a.k_max == 0 {
        return Err(BvError::usage("--k-max must be at least 1"));
    }
    if !a.with_replacement && a.k_max > m {
        return Err(BvError::usage(format!(
            "--k-max {} exceeds the pool size {m}; pass --with-replacement to allow repeats",
            a.k_max
        )));
    }
    let sampling = if a.with_replacement {
        Sampling::WithReplacement
    } else {
        Sampling::WithoutReplacement
    };
    let modes: &[EnsembleMode] = match a.mode {
        ModeArg::Primal => &[EnsembleMode::Primal],
        ModeArg::Dual => &[EnsembleMode::Dual],
        ModeArg::Both => &[EnsembleMode::Primal, EnsembleMode::Dual],
    };
    let mode_name = match a.mode {
        ModeArg::Primal => "primal",
        ModeArg::Dual => "dual",
        ModeArg::Both => "both",
    };
    let ks: Vec<usize> = (1..=a.k_max).collect();
    let f = |x: f64| fmt_sig(x, a.out.precision);

    let replay = Replay::new("curve")
        .path("log", &a.log)
        .path("labels", &a.labels)
        .opt("mode", mode_name)
        .opt("k-max", a.k_max)
        .opt("draws", a.draws)
        .opt("seed", a.seed)
        .switch("with-replacement", a.with_replacement)
        .maybe_path("plot-data", &a.plot_data)
        .output(&a.out);
    let config = json!({
        "log": a.log, "labels": a.labels, "mode": mode_name, "k_max": a.k_max, "draws": a.draws,
        "seed": a.seed, "sampling": sampling, "precision": a.out.precision,
    });
    let mut report = Report::new(replay.line(), config, Some(a.seed));
    report.provenance.input_digests.extend(inputs.digests);

    let mut table = Table::new(
        "curve",
        &[
            "mode",
            "k",
            "bias",
            "variance",
            "nll",
            "bias_se",
            "variance_se",
            "nll_se",
            "enumerated",
            "drift_sigmas",
            "bias_flat",
        ],
    );
    for &mode in modes {
        let c = ensemble_curve(&pool, &inputs.labels, mode, &ks, a.draws, a.seed, sampling)?;
        for i in 0..ks.len() {
            let diff = (c.bias[i] - c.bias[0]).abs();
            let se = (c.bias_se[i].powi(2) + c.bias_se[0].powi(2)).sqrt();
            let z = if se > 0.0 {
                diff / se
            } else if diff > 1e-9 {
                f64::INFINITY
            } else {
                0.0
            };
            table.push(vec![
                mode.to_string(),
                ks[i].to_string(),
                f(c.bias[i]),
                f(c.variance[i]),
                f(c.nll[i]),
                f(c.bias_se[i]),
                f(c.variance_se[i]),
                f(c.nll_se[i]),
                c.enumerated[i].to_string(),
                f(z),
                if z <= 3.0 { "yes" } else { "no" }.into(),
            ]);
        }
        if mode == EnsembleMode::Dual && c.max_bias_drift_sigmas() > 3.0 {
            report.warnings.push(format!(
                "dual bias drifts by {:.2}σ across k",
                c.max_bias_drift_sigmas()
            ));
        }
    }
    if let Some(p) = &a.plot_data {
        write(p, &table.to_tsv())?;
    }
    report.tables = vec![table];
    emit(&report, &a.out)?;
    Ok(0)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, field: &str) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| BvError::validation(field, e.to_string()))
}

pub fn bootstrap(a: &BootstrapArgs) -> Result<u8> {
    let world: ToyWorld = match &a.world {
        Some(p) => read_json(p, "world")?,
        None => ToyWorld::default(),
    };
    let model: ToyModelConfig = match &a.model {
        Some(p) => read_json(p, "model")?,
        None => ToyModelConfig::default(),
    };
    world.validate()?;
    model.validate()?;
    let sample = world.make()?;
    let toy = ToyTrainer {
        config: model.clone(),
        n_classes: world.n_classes,
        eval_inputs: sample.eval.inputs.clone(),
    };
    let n_eval = sample.eval.len();
    let c = world.n_classes;
    let constant = move |_: &Dataset, _: u64| Ok(vec![SimplexPointF64::uniform(c); n_eval]);
    let trainer: &dyn Trainer = match a.trainer {
        TrainerArg::Toy => &toy,
        TrainerArg::Constant => &constant,
    };
    let trainer_name = match a.trainer {
        TrainerArg::Toy => "toy",
        TrainerArg::Constant => "constant",
    };
    let labels = &sample.eval_labels;
    let est = double_bootstrap_estimate(trainer, &sample.train, a.b, a.k, labels, a.seed)?;
    let cond = conditional_estimate(trainer, &sample.train, a.n_seeds, a.k, labels, a.seed)?;
    let truth = if a.truth_sets > 0 {
        let draw = |s: u64| world.fresh_training_set(s);
        Some(fresh_set_estimate(trainer, &draw, a.truth_sets, a.k, labels, a.seed)?)
    } else {
        None
    };

    let f = |x: f64| fmt_sig(x, a.out.precision);
    let replay = Replay::new("bootstrap")
        .opt("B", a.b)
        .opt("k", a.k)
        .opt("seed", a.seed)
        .maybe_path("world", &a.world)
        .maybe_path("model", &a.model)
        .opt("trainer", trainer_name)
        .opt("n-seeds", a.n_seeds)
        .opt("truth-sets", a.truth_sets)
        .output(&a.out);
    let config = json!({
        "B": a.b, "k": a.k, "seed": a.seed, "world": world, "model": model, "trainer": trainer_name,
        "n_seeds": a.n_seeds, "truth_sets": a.truth_sets, "precision": a.out.precision,
    });
    let mut report = Report::new(replay.line(), config, Some(a.seed));
    for (name, p) in [("world", &a.world), ("model", &a.model)] {
        if let Some(p) = p {
            report
                .provenance
                .input_digests
                .insert(name.into(), sha256_hex(&read(p)?));
        }
    }

    let mut cols = vec!["quantity", "b1", "b2", "t", "b0", "degenerate", "conditional"];
    if truth.is_some() {
        cols.push("truth");
    }
    let mut table = Table::new("bootstrap", &cols);
    for (name, e, cv, tv) in [
        ("bias", &est.bias, cond.bias, truth.map(|t| t.bias)),
        ("variance", &est.variance, cond.variance, truth.map(|t| t.variance)),
    ] {
        let mut row = vec![
            name.to_string(),
            f(e.b1),
            f(e.b2),
            f(e.t),
            f(e.b0),
            e.degenerate.to_string(),
            f(cv),
        ];
        if let Some(t) = tv {
            row.push(f(t));
        }
        table.push(row);
        if e.degenerate {
            report.warnings.push(format!(
                "{name}: level-2 estimate is zero, correction not applied (b0 = b1)"
            ));
        }
    }
    let mut budget = Table::new("budget", &["models_trained"]);
    budget.push(vec![est.models_trained.to_string()]);
    report.tables = vec![table, budget];
    emit(&report, &a.out)?;
    Ok(0)
}

pub fn counterexample(a: &OutputArgs) -> Result<u8> {
    let r = counterexample_report()?;
    let f = |x: f64| fmt_sig(x, a.precision);
    let pair = |v: &[f64]| format!("({:.5}, {:.5})", v[0], v[1]);
    let replay = Replay::new("counterexample").output(a);
    let mut report = Report::new(replay.line(), json!({ "precision": a.precision }), None);
    let mut t = Table::new("counterexample", &["quantity", "single", "ensemble"]);
    t.push(vec![
        "dual_mean".into(),
        pair(&r.dual_mean_single),
        pair(&r.dual_mean_ensemble),
    ]);
    t.push(vec![
        "bias_class0".into(),
        f(r.bias_class0_single),
        f(r.bias_class0_ensemble),
    ]);
    t.push(vec![
        "bias_class1".into(),
        f(r.bias_class1_single),
        f(r.bias_class1_ensemble),
    ]);
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" }.to_string();
    let mut checks = Table::new("checks", &["check", "result"]);
    checks.push(vec!["dual means differ".into(), verdict(r.dual_means_differ())]);
    checks.push(vec![
        "bias moves in opposite directions".into(),
        verdict(r.opposite_directions()),
    ]);
    report.tables = vec![t, checks];
    emit(&report, a)?;
    println!("\n{}", verdict(r.passes()));
    Ok(if r.passes() { 0 } else { 1 })
}

fn load_spec(path: &Path) -> Result<(ExperimentSpec, Vec<u8>)> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| BvError::validation("spec", "not UTF-8"))?;
    Ok((ExperimentSpec::from_json(text)?, bytes))
}

pub fn train_toy(a: &TrainToyArgs) -> Result<u8> {
    let (mut spec, bytes) = match &a.spec {
        Some(p) => {
            let (s, b) = load_spec(p)?;
            (s, Some(b))
        }
        None => (ExperimentSpec::default(), None),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    spec.analysis = Analysis::None;
    let out = run_experiment(&spec, Some(&a.out))?;

    let mut replay = Replay::new("train-toy").maybe_path("spec", &a.spec).path("out", &a.out);
    if let Some(seed) = a.seed {
        replay = replay.opt("seed", seed);
    }
    let replay = replay.output(&a.output);
    let mut report = Report::new(
        replay.line(),
        serde_json::to_value(&spec).expect("spec serialises"),
        Some(spec.seed),
    );
    if let Some(b) = bytes {
        report.provenance.input_digests.insert("spec".into(), sha256_hex(&b));
    }
    let mut t = Table::new(
        "logs",
        &["pool", "rep", "file", "n_models", "n_examples", "n_classes", "sha256"],
    );
    for run in &out.runs {
        let file = format!("{}_r{}.predlog", run.name, run.repetition);
        let h = &run.log.header;
        t.push(vec![
            run.name.clone(),
            run.repetition.to_string(),
            file,
            h.n_models.to_string(),
            h.n_examples.to_string(),
            h.n_classes.to_string(),
            sha256_hex(run.log.render().as_bytes()),
        ]);
    }
    report.tables = vec![t];
    write(&a.out.join("report.json"), &report.to_json())?;
    emit(&report, &a.output)?;
    Ok(0)
}

pub fn experiment(a: &ExperimentArgs) -> Result<u8> {
    let (spec, bytes) = load_spec(&a.spec)?;
    let out = run_experiment(&spec, a.out.as_deref())?;
    let mut report = out.report;
    // Digits follow --precision only for reports printed here; the library
    // report is already at the default precision.
    report.command = Replay::new("experiment")
        .path("spec", &a.spec)
        .maybe_path("out", &a.out)
        .output(&a.output)
        .line();
    report
        .provenance
        .input_digests
        .insert("spec_file".into(), sha256_hex(&bytes));
    if let Some(dir) = &a.out {
        write(&dir.join("report.json"), &report.to_json())?;
    }
    emit(&report, &a.output)?;
    Ok(0)
}
