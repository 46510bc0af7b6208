use std::io::Write;
use std::path::{Path, PathBuf};

use dirlin::config::RunConfig;
use dirlin::directional::DirLinObservation;
use dirlin::dpspn::run;
use dirlin::hdp::{fit_mechanism, pattern_log_likelihood, GroupedData, MechanismJson, MechanismModel};
use dirlin::metrics::{adjusted_rand_index, rand_index, salso, voi, Partition};
use dirlin::pipeline::color::{label_map, load_png, save_png};
use dirlin::pipeline::io::{self, read_observations, write_jsonl, write_observations, write_partition};
use dirlin::pipeline::segment::segment_image;
use dirlin::pipeline::synthetic::{generate as generate_mixture, SyntheticSpec};
use dirlin::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::GlobalArgs;

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.mcmc.seed = seed;
    }
    if let Some(t) = g.threads {
        cfg.mcmc.threads = t;
    }
    Ok(cfg)
}

fn out_dir(g: &GlobalArgs, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = g
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.io.output.clone()))
        .ok_or_else(|| Error::Config("an output directory is required (--out or io.output)".into()))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn input_path(arg: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf> {
    arg.map(Path::to_path_buf)
        .or_else(|| cfg.io.input.clone())
        .ok_or_else(|| Error::Config("an input file is required (--data or io.input)".into()))
}

fn ensure_finite(logliks: impl IntoIterator<Item = f64>) -> Result<()> {
    if logliks.into_iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("a chain produced a non-finite log-likelihood".into()));
    }
    Ok(())
}

pub fn generate(g: &GlobalArgs) -> Result<()> {
    let path = g.config.as_ref().ok_or_else(|| Error::Config("generate needs --config with a synthetic spec".into()))?;
    let text = std::fs::read_to_string(path)?;
    let mut spec: SyntheticSpec = serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid synthetic spec: {e}")))?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let out = out_dir(g, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = generate_mixture(&spec, &mut rng)?;
    write_observations(io::create(&out.join("observations.csv"))?, &data.observations, None, None)?;
    write_partition(io::create(&out.join("truth.csv"))?, &data.labels)?;
    io::write_json(&out.join("truth_params.json"), &json!({ "weights": data.weights, "components": data.components }))?;
    io::write_json(&out.join("metadata.json"), &json!({ "spec": spec }))?;
    println!("wrote {} observations to {}", data.observations.len(), out.display());
    Ok(())
}

pub fn fit(g: &GlobalArgs, data: Option<&Path>) -> Result<()> {
    let cfg = load_config(g)?;
    let table = read_observations(io::open(&input_path(data, &cfg)?)?)?;
    let dp = cfg.dp_config::<f64>(table.p(), table.q())?;
    let out = out_dir(g, Some(&cfg))?;
    let output = run(&table.observations, &dp)?;
    ensure_finite(output.draws().map(|d| d.loglik))?;
    write_jsonl(io::create(&out.join("draws.jsonl"))?, output.draws())?;
    let n_draws = output.draws().count();
    let mean_k = output.draws().map(|d| d.k as f64).sum::<f64>() / n_draws.max(1) as f64;
    io::write_json(
        &out.join("diagnostics.json"),
        &json!({
            "chains": output.chains.len(),
            "retained_draws": n_draws,
            "gelman_rubin": output.gelman_rubin,
            "mean_clusters": mean_k,
        }),
    )?;
    match output.gelman_rubin {
        Some(r) => println!("gelman_rubin {r:.4}"),
        None => println!("gelman_rubin n/a"),
    }
    Ok(())
}

pub fn hdp_fit(g: &GlobalArgs, data: Option<&Path>, split: f64, split_seed: u64) -> Result<()> {
    if !(split > 0.0 && split <= 1.0) {
        return Err(Error::Config(format!("split must lie in (0, 1], got {split}")));
    }
    let cfg = load_config(g)?;
    let table = read_observations(io::open(&input_path(data, &cfg)?)?)?;
    let mut groups = table.groups()?;
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let n_train = ((split * groups.len() as f64).round() as usize).clamp(1, groups.len());
    let (train, test) = groups.split_at(n_train);
    let hdp = cfg.hdp_config::<f64>(table.p(), table.q())?;
    let out = out_dir(g, Some(&cfg))?;
    let grouped = GroupedData::new(train.iter().map(|(_, obs)| obs.clone()).collect())?;
    let fit = fit_mechanism(&grouped, &hdp)?;
    ensure_finite(fit.chains.iter().flatten().map(|d| d.loglik))?;
    io::write_json(&out.join("mechanism.json"), &fit.model.to_json())?;
    write_jsonl(io::create(&out.join("draws.jsonl"))?, fit.chains.iter().flatten())?;
    io::write_json(
        &out.join("diagnostics.json"),
        &json!({
            "train_patterns": train.len(),
            "test_patterns": test.len(),
            "alpha": fit.model.alpha,
            "atoms": fit.model.k(),
            "dropped_mass": fit.dropped_mass,
            "gelman_rubin": fit.gelman_rubin,
        }),
    )?;
    write_patterns(&out.join("train_patterns.csv"), train)?;
    if !test.is_empty() {
        write_patterns(&out.join("test_patterns.csv"), test)?;
    }
    let mut w = io::create(&out.join("split.csv"))?;
    writeln!(w, "pattern_id,set")?;
    for (id, _) in train {
        writeln!(w, "{id},train")?;
    }
    for (id, _) in test {
        writeln!(w, "{id},test")?;
    }
    w.flush()?;
    println!("atoms {} alpha {:.4}", fit.model.k(), fit.model.alpha);
    Ok(())
}

fn write_patterns(path: &Path, groups: &[(String, Vec<DirLinObservation<f64>>)]) -> Result<()> {
    let obs: Vec<_> = groups.iter().flat_map(|(_, o)| o.iter().cloned()).collect();
    let ids: Vec<String> = groups.iter().flat_map(|(id, o)| std::iter::repeat_n(id.clone(), o.len())).collect();
    write_observations(io::create(path)?, &obs, Some(&ids), None)
}

/// Any draw record with a `labels` field.
#[derive(Deserialize)]
struct LabelsOnly {
    labels: Vec<usize>,
}

pub fn consensus(g: &GlobalArgs, draws: &Path) -> Result<()> {
    let cfg = load_config(g)?;
    let records: Vec<LabelsOnly> = io::read_jsonl(io::open(draws)?)?;
    let partitions: Vec<Partition> = records.iter().map(|r| Partition::from_labels(&r.labels)).collect();
    let out = out_dir(g, Some(&cfg))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mcmc.seed);
    let result = salso(&partitions, &cfg.consensus.salso(), &mut rng)?;
    write_partition(io::create(&out.join("partition.csv"))?, result.partition.labels())?;
    io::write_json(
        &out.join("consensus.json"),
        &json!({
            "draws": partitions.len(),
            "clusters": result.partition.num_clusters(),
            "objective": result.objective,
        }),
    )?;
    println!("clusters {} objective {:.6}", result.partition.num_clusters(), result.objective);
    Ok(())
}

#[derive(Serialize)]
struct Metrics {
    ari: f64,
    rand_index: f64,
    voi: f64,
}

pub fn eval(g: &GlobalArgs, partition: &Path, truth: &Path) -> Result<()> {
    let a = Partition::from_labels(&io::read_partition(io::open(partition)?)?);
    let b = Partition::from_labels(&io::read_partition(io::open(truth)?)?);
    let m = Metrics { ari: adjusted_rand_index(&a, &b)?, rand_index: rand_index(&a, &b)?, voi: voi(&a, &b)? };
    println!("{}", serde_json::to_string(&m)?);
    if g.out.is_some() {
        io::write_json(&out_dir(g, None)?.join("metrics.json"), &m)?;
    }
    Ok(())
}

pub fn segment(g: &GlobalArgs, image: &Path) -> Result<()> {
    let cfg = load_config(g)?;
    let img = load_png(image)?;
    let out = out_dir(g, Some(&cfg))?;
    let seg = segment_image(&img, &cfg)?;
    ensure_finite(seg.output.draws().map(|d| d.loglik))?;
    let (w, h) = img.dimensions();
    save_png(&label_map(w, h, seg.labels.labels())?, &out.join("labels.png"))?;
    write_partition(io::create(&out.join("partition.csv"))?, seg.labels.labels())?;
    io::write_json(&out.join("metadata.json"), &seg.metadata)?;
    println!("segments {}", seg.metadata.clusters);
    Ok(())
}

fn load_model(path: &Path, p: usize) -> Result<MechanismModel<f64>> {
    let json: MechanismJson = io::read_json(path)?;
    MechanismModel::from_json(&json, p)
}

/// Writes `pattern_id,n,<column>` rows to `<out>/<file>` or stdout.
fn emit_table(g: &GlobalArgs, file: &str, column: &str, rows: &[(String, usize, f64)]) -> Result<()> {
    let mut text = format!("pattern_id,n,{column}\n");
    for (id, n, v) in rows {
        text.push_str(&format!("{id},{n},{v}\n"));
    }
    match &g.out {
        Some(_) => std::fs::write(out_dir(g, None)?.join(file), text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn loglik(g: &GlobalArgs, patterns: &Path, model: &Path, mc_draws: Option<usize>) -> Result<()> {
    let cfg = load_config(g)?;
    let table = read_observations(io::open(patterns)?)?;
    let model = load_model(model, table.p())?;
    let draws = mc_draws.unwrap_or(cfg.hdp.mc_draws);
    let rows = table
        .groups()?
        .into_iter()
        .map(|(id, obs)| Ok((id, obs.len(), pattern_log_likelihood(&obs, &model, draws, cfg.mcmc.seed)?)))
        .collect::<Result<Vec<_>>>()?;
    emit_table(g, "loglik.csv", "loglik", &rows)
}

pub fn lr(g: &GlobalArgs, patterns: &Path, model1: &Path, model2: &Path, mc_draws: Option<usize>) -> Result<()> {
    let cfg = load_config(g)?;
    let table = read_observations(io::open(patterns)?)?;
    let m1 = load_model(model1, table.p())?;
    let m2 = load_model(model2, table.p())?;
    let draws = mc_draws.unwrap_or(cfg.hdp.mc_draws);
    let rows = table
        .groups()?
        .into_iter()
        .map(|(id, obs)| {
            let l1 = pattern_log_likelihood(&obs, &m1, draws, cfg.mcmc.seed)?;
            let l2 = pattern_log_likelihood(&obs, &m2, draws, cfg.mcmc.seed)?;
            Ok((id, obs.len(), l1 - l2))
        })
        .collect::<Result<Vec<_>>>()?;
    emit_table(g, "lr.csv", "log_lr", &rows)
}
