use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use ligbind::complex::{Complex, VdwRadii};
use ligbind::evaluation::{audit_csv, invariance_audit, ranking_power, Cluster, ClusterMember, MetricsReport};
use ligbind::physics::format_explain;
use ligbind::training::{
    end_to_end_check, format_history, gen_synthetic, load_checkpoint, read_clusters, read_complex, save_checkpoint,
    train_model_logged, ClusterSpec, CheckpointMeta, Dataset, Entry, Split, SynthConfig, CLUSTERS_FILE, MANIFEST_FILE,
};
use ligbind::Model;
use ligbind_tensor::suite::primitive_suite;

use crate::config::{parse_override, resolve};
use crate::{
    CheckInvarianceArgs, Command, EvaluateArgs, ExplainArgs, Fail, GradCheckArgs, PredictArgs, RankArgs, SplitArg,
    SynthArgs, TrainArgs,
};

pub fn run_command(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Rank(a) => rank(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Explain(a) => explain(a),
        Command::Synth(a) => synth(a),
        Command::CheckInvariance(a) => check_invariance(a),
        Command::GradCheck(a) => grad_check(a),
    }
}

fn lib<T>(r: ligbind::Result<T>) -> std::result::Result<T, Fail> {
    r.map_err(Fail::from)
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Fail::Data(format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, text).map_err(|e| Fail::Data(format!("{}: {e}", p.display())))?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    let ckpt = lib(load_checkpoint(path)).with_context(|| format!("loading checkpoint {}", path.display()))?;
    lib(ckpt.to_model()).with_context(|| format!("rebuilding model from {}", path.display()))
}

/// A dataset directory: its manifest when present, otherwise every `*.json`
/// file in name order (excluding the cluster file), tagged `test`.
fn load_dir_any(dir: &Path) -> Result<Dataset> {
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(lib(Dataset::load_dir(dir))?);
    }
    let listing = fs::read_dir(dir).map_err(|e| Fail::Data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != CLUSTERS_FILE))
        .collect();
    files.sort();
    let complexes = files.iter().map(|p| lib(read_complex(p))).collect::<std::result::Result<Vec<_>, _>>()?;
    let unlabeled: Vec<&str> = complexes.iter().filter(|c| c.affinity.is_none()).map(|c| c.id.as_str()).collect();
    if !unlabeled.is_empty() {
        // unlabeled complexes are still usable for audits
        return Ok(Dataset {
            entries: complexes.into_iter().map(|complex| Entry { complex, split: Split::Test }).collect(),
            clusters: Vec::new(),
        });
    }
    Ok(lib(Dataset::with_split(complexes, Split::Test))?)
}

fn train(a: TrainArgs) -> Result<i32> {
    let mut overrides = Vec::new();
    for s in &a.overrides {
        overrides.push(parse_override(s)?);
    }
    let flag = |k: &str, v: serde_json::Value| (k.to_string(), v);
    if let Some(d) = &a.data {
        overrides.push(flag("paths.data", d.to_string_lossy().into()));
    }
    if let Some(o) = &a.out {
        overrides.push(flag("paths.out", o.to_string_lossy().into()));
    }
    if let Some(h) = &a.history {
        overrides.push(flag("paths.history", h.to_string_lossy().into()));
    }
    if let Some(s) = a.seed {
        overrides.push(flag("train.seed", s.into()));
    }
    if let Some(e) = a.epochs {
        overrides.push(flag("train.max_epochs", e.into()));
    }
    let resolved = resolve(a.config.as_deref(), &overrides)?;
    if a.print_config {
        eprint!("{}", resolved.provenance_report());
        emit(None, &resolved.to_json())?;
        return Ok(0);
    }
    let cfg = &resolved.config;
    let data_dir = cfg.paths.data.as_ref().ok_or_else(|| Fail::Config("no dataset directory (use --data)".into()))?;
    let out = cfg.paths.out.as_ref().ok_or_else(|| Fail::Config("no checkpoint path (use --out)".into()))?;
    let data = lib(Dataset::load_dir(data_dir))?;
    eprintln!("loaded {} complexes from {}", data.len(), data_dir.display());

    let model = lib(Model::new(cfg.model.clone(), cfg.physics.clone(), cfg.train.seed))?;
    let outcome = lib(train_model_logged(model, &data, &cfg.train, &mut |r| {
        eprintln!(
            "epoch {} lr {} loss {} data {} physics {} val_rmse {}",
            r.epoch, r.lr, r.loss_total, r.loss_data, r.loss_physics, r.val_rmse
        );
    }))?;
    let ckpt = ligbind::training::ModelCheckpoint {
        meta: CheckpointMeta {
            seed: cfg.train.seed,
            ..outcome.checkpoint.meta.clone()
        },
        ..outcome.checkpoint.clone()
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Fail::Data(format!("{}: {e}", dir.display())))?;
    }
    lib(save_checkpoint(&ckpt, out))?;
    if let Some(h) = resolved.config.history_path() {
        emit(Some(&h), &format_history(&outcome.history))?;
    }
    eprintln!(
        "best epoch {} sigma {} -> {}",
        outcome.best_epoch,
        outcome.model.sigma_value(),
        out.display()
    );
    Ok(0)
}

fn predict(a: PredictArgs) -> Result<i32> {
    let model = load_model(&a.ckpt)?;
    let results: Vec<std::result::Result<(String, f64), Fail>> = a
        .inputs
        .par_iter()
        .map(|p| {
            let c = lib(read_complex(p))?;
            let y = lib(model.predict(&c)).map_err(|f| match f {
                Fail::Numerical(m) => Fail::Numerical(format!("{}: {m}", p.display())),
                Fail::Data(m) => Fail::Data(format!("{}: {m}", p.display())),
                other => other,
            })?;
            Ok((c.id, y))
        })
        .collect();
    let mut csv = String::from("complex_id,predicted_pk\n");
    let mut code = 0;
    for r in results {
        match r {
            Ok((id, y)) => csv.push_str(&format!("{id},{y}\n")),
            Err(f) => {
                eprintln!("error: {f}");
                code = code.max(f.exit_code());
            }
        }
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(code)
}

fn rank(a: RankArgs) -> Result<i32> {
    let model = load_model(&a.ckpt)?;
    let specs: Vec<ClusterSpec> = lib(read_clusters(&a.clusters))?;
    let dir = match &a.data {
        Some(d) => d.clone(),
        None => a.clusters.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let data = load_dir_any(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir })?;
    let mut clusters = Vec::with_capacity(specs.len());
    for s in &specs {
        let members = s
            .complex_ids
            .par_iter()
            .map(|id| {
                let c = data
                    .get(id)
                    .ok_or_else(|| Fail::Data(format!("cluster `{}` names unknown complex `{id}`", s.target_id)))?;
                let affinity = c.affinity.ok_or_else(|| Fail::Data(format!("complex `{id}` has no affinity label")))?;
                Ok(ClusterMember {
                    complex_id: id.clone(),
                    affinity,
                    predicted: lib(model.predict(c))?,
                })
            })
            .collect::<std::result::Result<Vec<_>, Fail>>()?;
        clusters.push(Cluster {
            target_id: s.target_id.clone(),
            members,
        });
    }
    for c in &clusters {
        eprintln!("cluster {} spearman {}", c.target_id, lib(c.spearman())?);
    }
    let rp = lib(ranking_power(&clusters))?;
    emit(a.out.as_deref(), &format!("metric,value\nranking_power,{rp}\nclusters,{}\n", clusters.len()))?;
    Ok(0)
}

fn evaluate(a: EvaluateArgs) -> Result<i32> {
    let model = load_model(&a.ckpt)?;
    let data = load_dir_any(&a.data)?;
    let selected: Vec<&Complex> = match a.split {
        SplitArg::All => data.entries.iter().map(|e| &e.complex).collect(),
        SplitArg::Train => data.split(Split::Train),
        SplitArg::Validation => data.split(Split::Validation),
        SplitArg::Test => data.split(Split::Test),
    };
    let labels = selected
        .iter()
        .map(|c| c.affinity.ok_or_else(|| Fail::Data(format!("complex `{}` has no affinity label", c.id))))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let preds = selected
        .par_iter()
        .map(|c| lib(model.predict(c)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let report = lib(MetricsReport::compute(&labels, &preds))?;
    emit(a.out.as_deref(), &report.to_csv())?;
    Ok(0)
}

fn explain(a: ExplainArgs) -> Result<i32> {
    let model = load_model(&a.ckpt)?;
    let c = lib(read_complex(&a.input))?;
    let report = lib(model.explain(&c, a.fraction))?;
    emit(a.out.as_deref(), &format_explain(&report))?;
    Ok(0)
}

fn synth(a: SynthArgs) -> Result<i32> {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        cluster_size: a.cluster_size.unwrap_or(defaults.cluster_size),
        minima_fraction: a.minima_fraction.unwrap_or(defaults.minima_fraction),
        jitter: a.jitter.unwrap_or(defaults.jitter),
        ..defaults
    };
    if a.test > a.n {
        return Err(Fail::Config(format!("--test {} exceeds --n {}", a.test, a.n)).into());
    }
    let s = lib(gen_synthetic(a.seed, a.n, &cfg, &VdwRadii::default()))?;
    let n_train = a.n - a.test;
    let entries = s
        .complexes
        .into_iter()
        .enumerate()
        .map(|(i, complex)| Entry {
            complex,
            split: if i < n_train { Split::Train } else { Split::Test },
        })
        .collect();
    let data = lib(Dataset::new(entries, s.clusters))?;
    lib(data.write_dir(&a.out))?;
    eprintln!("wrote {} complexes to {}", data.len(), a.out.display());
    Ok(0)
}

fn check_invariance(a: CheckInvarianceArgs) -> Result<i32> {
    if !(a.tolerance >= 0.0) {
        return Err(Fail::Config("--tolerance must be non-negative".into()).into());
    }
    let model = load_model(&a.ckpt)?;
    let data = load_dir_any(&a.data)?;
    let complexes: Vec<Complex> = data.entries.into_iter().map(|e| e.complex).collect();
    let rows = lib(invariance_audit(&model, &complexes, a.transforms, a.seed))?;
    emit(a.out.as_deref(), &audit_csv(&rows))?;
    let worst = rows.iter().map(|r| r.max_abs_deviation).fold(0.0, f64::max);
    eprintln!("max deviation {worst} over {} complexes x {} motions", rows.len(), a.transforms);
    if worst > a.tolerance || worst.is_nan() {
        eprintln!("error: deviation exceeds tolerance {}", a.tolerance);
        return Ok(3);
    }
    Ok(0)
}

fn grad_check(a: GradCheckArgs) -> Result<i32> {
    if a.seeds == 0 {
        return Err(Fail::Config("--seeds must be at least 1".into()).into());
    }
    let mut worst: f64 = 0.0;
    let mut failed = 0usize;
    for seed in a.seed..a.seed + a.seeds {
        let suite = primitive_suite(seed).map_err(|e| Fail::Numerical(e.to_string()))?;
        for (name, r) in &suite {
            worst = worst.max(r.max_rel_error);
            if !r.passed() {
                failed += 1;
                eprintln!("seed {seed} {name}: {} of {} entries failed", r.failures, r.checked);
            }
        }
        let e2e = lib(end_to_end_check(seed))?;
        worst = worst.max(e2e.max_rel_error);
        eprintln!(
            "seed {seed} objective: {} entries, {} failures, max relative error {}",
            e2e.checked, e2e.failures, e2e.max_rel_error
        );
        if !e2e.passed() {
            failed += 1;
        }
    }
    emit(None, &format!("max relative error: {worst}\n"))?;
    if failed > 0 {
        eprintln!("error: {failed} gradient checks failed");
        return Ok(3);
    }
    Ok(0)
}
