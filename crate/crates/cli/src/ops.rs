//! Subcommand implementations. Every handler that writes artifacts finishes
//! by dropping a manifest next to them so a run can be reproduced from
//! (config fingerprint, seed, inputs) alone.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clicksim_core::action::{render_turn, ParsedTurn, TurnPayload};
use clicksim_core::codec::{decode_image_png, decode_mask_png};
use clicksim_core::config::{load_config, Config, ConfigError, ConfigSource, SegmenterKind};
use clicksim_core::datagen::{self, BuildParams, DatagenError, RejectReason, Sample};
use clicksim_core::env::{run_episode, EnvError, EpisodeFailure, EpisodeLimits, EpisodeSetup};
use clicksim_core::grpo::{train_toy_policy, GrpoError, ToyPolicyParams, ToyTask, ToyTrainOptions};
use clicksim_core::jsonl::{read_jsonl, write_jsonl};
use clicksim_core::mask::Mask;
use clicksim_core::metrics;
use clicksim_core::policy::{OraclePolicy, ScriptedPolicy};
use clicksim_core::records::{
    DatasetRecord, RewardRecord, RewardStepRecord, RunManifest, SampleRecord, StepRecord,
    TrajectoryRecord,
};
use clicksim_core::rewards;
use clicksim_core::seed;
use clicksim_core::segment::{DiscSegmenter, SeededSegmenter, Segmenter, SegmenterError};
use clicksim_core::store::{BlobStore, DirStore};
use clicksim_core::templates::instantiate_question;
use clicksim_core::traj::{Termination, Trajectory};
use clicksim_core::Real;
use clicksim_remote::{MockSegmenterServer, RemoteSegmenter};

/// Failure classes map one-to-one onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Transport(String),
}

impl CliError {
    pub fn report(&self) -> ExitCode {
        let (code, kind, msg) = match self {
            CliError::Usage(m) => (1, "usage", m),
            CliError::Data(m) => (2, "error", m),
            CliError::Transport(m) => (3, "transport", m),
        };
        eprintln!("clicksim: {kind}: {msg}");
        ExitCode::from(code)
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn classify_config(e: ConfigError) -> CliError {
    match e {
        ConfigError::MissingEndpoint(_) | ConfigError::NotLocal(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Data(other.to_string()),
    }
}

fn classify_datagen(e: DatagenError) -> CliError {
    match e {
        DatagenError::BadConfig(_) | DatagenError::BadShapeParams(_) => {
            CliError::Usage(e.to_string())
        }
        // Reflective synthesis replays episodes; a remote segmenter dying
        // mid-replay surfaces here as an episode failure string.
        DatagenError::Episode(msg) if msg.contains("transport failure") => {
            CliError::Transport(msg)
        }
        other => CliError::Data(other.to_string()),
    }
}

fn classify_episode(id: &str, f: EpisodeFailure) -> CliError {
    let msg = format!("episode {id}: {}", f.source);
    match f.source {
        EnvError::Segmenter(SegmenterError::Transport { .. }) => CliError::Transport(msg),
        _ => CliError::Data(msg),
    }
}

pub struct Context {
    pub config: Config,
    pub fingerprint: String,
    pub source: ConfigSource,
    pub seed: u64,
}

impl Context {
    pub fn load(flag: Option<&Path>, seed: u64) -> Result<Context, CliError> {
        let (config, source) = load_config(flag).map_err(classify_config)?;
        let fingerprint = config.fingerprint();
        Ok(Context { config, fingerprint, source, seed })
    }

    fn manifest(&self, subcommand: &str, t0: Instant) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            config_fingerprint: self.fingerprint.clone(),
            seed: self.seed,
            inputs: vec![],
            outputs: vec![],
            duration_ms: t0.elapsed().as_millis() as u64,
            counts: BTreeMap::new(),
        }
    }
}

/// Floats print through serde_json so the console shows the same shortest
/// round-trip form the JSONL files carry (1.0, not 1.0000).
fn jnum(v: f64) -> String {
    serde_json::to_string(&v).expect("json number")
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(data)?;
    text.push('\n');
    write_text(&dir.join("manifest.json"), &text)
}

fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// The blob store accompanying an input file: --store wins, otherwise the
/// file's sibling "store" directory (which is where the producing run put it).
fn input_store(input: &Path, flag: Option<&Path>) -> Result<DirStore, CliError> {
    let root: PathBuf = match flag {
        Some(p) => p.to_path_buf(),
        None => input.parent().unwrap_or(Path::new(".")).join("store"),
    };
    DirStore::create(&root).map_err(data)
}

fn load_samples(path: &Path, store: &DirStore) -> Result<Vec<Sample>, CliError> {
    let records: Vec<SampleRecord> = read_jsonl(path).map_err(data)?;
    records
        .iter()
        .map(|r| {
            let image =
                decode_image_png(&store.get(&r.image_ref).map_err(data)?).map_err(data)?;
            let gt = decode_mask_png(&store.get(&r.gt_ref).map_err(data)?).map_err(data)?;
            Ok(Sample {
                id: r.id.clone(),
                image,
                gt,
                object_name: r.object_name.clone(),
                modality: r.modality.clone(),
            })
        })
        .collect()
}

/// disc | seeded | remote | remote:URL, defaulting to the config's segmenter
/// section. The endpoint rides on the flag, not in the config, so runs
/// against different segmenters share a config fingerprint.
fn pick_segmenter(ctx: &Context, flag: Option<&str>) -> Result<Box<dyn Segmenter>, CliError> {
    let sc = &ctx.config.segmenter;
    let spec = flag.unwrap_or(match sc.kind {
        SegmenterKind::Disc => "disc",
        SegmenterKind::Seeded => "seeded",
        SegmenterKind::Remote => "remote",
    });
    match spec {
        "disc" => Ok(Box::new(DiscSegmenter::new(sc.disc_radius))),
        "seeded" => Ok(Box::new(SeededSegmenter::new(sc.prior_bonus))),
        "remote" => {
            let url = sc.endpoint().map_err(classify_config)?;
            Ok(Box::new(RemoteSegmenter::new(url)))
        }
        other => match other.strip_prefix("remote:") {
            Some(url) if !url.is_empty() => Ok(Box::new(RemoteSegmenter::new(url))),
            _ => Err(CliError::Usage(format!(
                "unknown segmenter '{other}' (expected disc, seeded, or remote[:URL])"
            ))),
        },
    }
}

pub fn gen_synthetic(ctx: &Context, n: usize, out: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let samples = datagen::make_synthetic_corpus(n, ctx.seed, &ctx.config.datagen.shape)
        .map_err(classify_datagen)?;
    ensure_dir(out)?;
    let store = DirStore::create(out.join("store")).map_err(data)?;
    let records = datagen::sample_records(&samples, &store).map_err(classify_datagen)?;
    let samples_path = out.join("samples.jsonl");
    write_jsonl(&samples_path, &records).map_err(data)?;
    let mut manifest = ctx.manifest("gen-synthetic", t0);
    manifest.outputs = vec!["samples.jsonl".into(), "store".into()];
    manifest.counts = counts(&[("samples", records.len() as u64)]);
    write_manifest(out, &manifest)?;
    println!("wrote {} samples to {}", records.len(), path_str(&samples_path));
    Ok(())
}

pub fn simulate(
    ctx: &Context,
    samples_path: &Path,
    seg_flag: Option<&str>,
    store_flag: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let t0 = Instant::now();
    let in_store = input_store(samples_path, store_flag)?;
    let samples = load_samples(samples_path, &in_store)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!("{}: no samples", samples_path.display())));
    }
    let seg = pick_segmenter(ctx, seg_flag)?;
    ensure_dir(out)?;
    let out_store = DirStore::create(out.join("store")).map_err(data)?;
    let cfg = &ctx.config;
    let mut records = Vec::with_capacity(samples.len());
    let (mut sum_iou, mut sum_dsc, mut sum_len) = (0.0, 0.0, 0usize);
    let mut converged = 0usize;
    for (i, s) in samples.iter().enumerate() {
        let mut rng = seed::rng(ctx.seed, "question", i as u64);
        let question =
            instantiate_question(&s.object_name, &s.modality, &mut rng, &cfg.datagen.ratios)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut policy = OraclePolicy::new(
            s.gt.clone(),
            s.object_name.clone(),
            s.object_name.clone(),
            cfg.oracle.clone(),
            seed::substream(ctx.seed, "policy", i as u64),
        );
        let setup = EpisodeSetup {
            id: &s.id,
            question: &question,
            image: &s.image,
            initial_mask: None,
            gt: Some(&s.gt),
            limits: cfg.limits.clone(),
            overlay_alpha: cfg.overlay_alpha,
            store: Some(&out_store),
        };
        let traj =
            run_episode(&setup, &mut policy, seg.as_ref()).map_err(|f| classify_episode(&s.id, f))?;
        let empty = Mask::new(s.gt.width(), s.gt.height());
        let final_mask = traj.final_mask().unwrap_or(&empty);
        let fin_iou = metrics::iou::<Real>(final_mask, &s.gt).map_err(data)?;
        let fin_dsc = metrics::dsc::<Real>(final_mask, &s.gt).map_err(data)?;
        sum_iou += fin_iou;
        sum_dsc += fin_dsc;
        sum_len += traj.interaction_len();
        if fin_iou >= cfg.oracle.tau_iou {
            converged += 1;
        }
        records.push(TrajectoryRecord::from_trajectory(&traj, &ctx.fingerprint));
    }
    let traj_path = out.join("trajectories.jsonl");
    write_jsonl(&traj_path, &records).map_err(data)?;
    let n = records.len();
    let mut manifest = ctx.manifest("simulate", t0);
    manifest.inputs = vec![path_str(samples_path)];
    manifest.outputs = vec!["trajectories.jsonl".into(), "store".into()];
    manifest.counts =
        counts(&[("episodes", n as u64), ("converged", converged as u64)]);
    write_manifest(out, &manifest)?;
    println!(
        "episodes={} converged={} mean_final_iou={:.4} mean_final_dsc={:.4} mean_length={:.2}",
        n,
        converged,
        sum_iou / n as f64,
        sum_dsc / n as f64,
        sum_len as f64 / n as f64,
    );
    Ok(())
}

pub fn build_dataset(
    ctx: &Context,
    samples_path: &Path,
    seg_flag: Option<&str>,
    store_flag: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let t0 = Instant::now();
    let in_store = input_store(samples_path, store_flag)?;
    let samples = load_samples(samples_path, &in_store)?;
    let seg = pick_segmenter(ctx, seg_flag)?;
    ensure_dir(out)?;
    let out_store = DirStore::create(out.join("store")).map_err(data)?;
    let dg = &ctx.config.datagen;
    let params = BuildParams {
        oracle: dg.oracle.clone(),
        filter: dg.filter.clone(),
        ratios: dg.ratios,
        self_correction_fraction: dg.self_correction_fraction,
        inconsistency_fraction: dg.inconsistency_fraction,
        overlay_alpha: ctx.config.overlay_alpha,
        store: &out_store,
    };
    let built = datagen::build_cold_start(&samples, seg.as_ref(), &params, ctx.seed)
        .map_err(classify_datagen)?;
    // Per-sample segmenter faults become rejects so one flaky episode cannot
    // sink a long build; a build that produced nothing at all is still an
    // error, classified from the first such reject.
    if built.records.is_empty() {
        if let Some(rej) =
            built.rejects.iter().find(|r| matches!(r.reason, RejectReason::SegmenterFailure))
        {
            let msg = format!("no records survived; sample {}: {}", rej.sample_id, rej.detail);
            return Err(if rej.detail.contains("transport failure") {
                CliError::Transport(msg)
            } else {
                CliError::Data(msg)
            });
        }
    }
    write_jsonl(&out.join("dataset.jsonl"), &built.records).map_err(data)?;
    write_jsonl(&out.join("rejects.jsonl"), &built.rejects).map_err(data)?;
    let mut stats_json = serde_json::to_string_pretty(&built.stats).map_err(data)?;
    stats_json.push('\n');
    write_text(&out.join("stats.json"), &stats_json)?;
    let mut manifest = ctx.manifest("build-dataset", t0);
    manifest.inputs = vec![path_str(samples_path)];
    manifest.outputs =
        vec!["dataset.jsonl".into(), "rejects.jsonl".into(), "stats.json".into(), "store".into()];
    manifest.counts = counts(&[
        ("samples", samples.len() as u64),
        ("records", built.records.len() as u64),
        ("rejects", built.rejects.len() as u64),
    ]);
    write_manifest(out, &manifest)?;
    print!("{}", datagen::render_stats_table(&built.stats));
    println!("records={} rejects={}", built.records.len(), built.rejects.len());
    Ok(())
}

/// Re-executes a recorded trajectory's turns against a live segmenter so the
/// reward model sees masks, not just text. The answering turn is rebuilt from
/// the stored final answer.
fn replay_trajectory(
    ctx: &Context,
    rec: &TrajectoryRecord,
    sample: &Sample,
    seg: &dyn Segmenter,
) -> Result<Trajectory, CliError> {
    let mut turns: Vec<String> = rec.steps.iter().map(|s| s.action_raw.clone()).collect();
    if let Some(ans) = &rec.final_answer {
        turns.push(render_turn(&ParsedTurn {
            think: "replay".into(),
            payload: TurnPayload::Answer(ans.clone()),
        }));
    }
    // Exactly the planned turns; an unanswered record replays to its original
    // turn-limit ending instead of querying past the script.
    let limits = EpisodeLimits { max_turns: turns.len(), ..ctx.config.limits.clone() };
    let mut policy = ScriptedPolicy::new(turns);
    let setup = EpisodeSetup {
        id: &rec.id,
        question: &rec.question,
        image: &sample.image,
        initial_mask: None,
        gt: Some(&sample.gt),
        limits,
        overlay_alpha: ctx.config.overlay_alpha,
        store: None,
    };
    run_episode(&setup, &mut policy, seg).map_err(|f| classify_episode(&rec.id, f))
}

pub fn eval_rewards(
    ctx: &Context,
    traj_path: &Path,
    gt_path: &Path,
    seg_flag: Option<&str>,
    store_flag: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let t0 = Instant::now();
    let in_store = input_store(gt_path, store_flag)?;
    let samples = load_samples(gt_path, &in_store)?;
    let recs: Vec<TrajectoryRecord> = read_jsonl(traj_path).map_err(data)?;
    let seg = pick_segmenter(ctx, seg_flag)?;
    ensure_dir(out)?;
    let mut out_records = Vec::with_capacity(recs.len());
    let mut sum_total = 0.0;
    for rec in &recs {
        let sample = samples.iter().find(|s| s.id == rec.id).ok_or_else(|| {
            CliError::Data(format!(
                "trajectory {} has no sample in {}",
                rec.id,
                gt_path.display()
            ))
        })?;
        let traj = replay_trajectory(ctx, rec, sample, seg.as_ref())?;
        let mut b = rewards::aggregate(&traj, Some(&sample.gt), None, &ctx.config.rewards)
            .map_err(data)?;
        // A malformed turn is not persisted, so the replay cannot re-parse
        // it; the recorded termination still carries the format penalty.
        if rec.termination == Termination::FormatError {
            b.s_format = 0.0;
            b.total = (b.s_format + b.s_ans + b.s_click + b.s_pseg + b.s_len) / 5.0;
        }
        sum_total += b.total;
        out_records.push(RewardRecord {
            id: rec.id.clone(),
            s_format: b.s_format,
            s_ans: b.s_ans,
            s_click: b.s_click,
            s_pseg: b.s_pseg,
            s_len: b.s_len,
            total: b.total,
            per_step: b
                .per_step
                .iter()
                .map(|s| RewardStepRecord { click: s.click, pseg: s.pseg, iou: s.iou })
                .collect(),
            config_fingerprint: ctx.fingerprint.clone(),
        });
    }
    write_jsonl(&out.join("rewards.jsonl"), &out_records).map_err(data)?;
    let mut manifest = ctx.manifest("eval-rewards", t0);
    manifest.inputs = vec![path_str(traj_path), path_str(gt_path)];
    manifest.outputs = vec!["rewards.jsonl".into()];
    manifest.counts = counts(&[("records", out_records.len() as u64)]);
    write_manifest(out, &manifest)?;
    let mean = if out_records.is_empty() { 0.0 } else { sum_total / out_records.len() as f64 };
    println!("records={} mean_total={}", out_records.len(), jnum(mean));
    Ok(())
}

pub fn score(ctx: &Context, pred: &Path, gt: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let read_mask = |p: &Path| -> Result<Mask, CliError> {
        let bytes = std::fs::read(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
        decode_mask_png(&bytes).map_err(|e| data(format!("{}: {e}", p.display())))
    };
    let (pm, gm) = (read_mask(pred)?, read_mask(gt)?);
    let i = metrics::iou::<Real>(&pm, &gm).map_err(data)?;
    let d = metrics::dsc::<Real>(&pm, &gm).map_err(data)?;
    println!("iou={} dsc={}", jnum(i), jnum(d));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut manifest = ctx.manifest("score", t0);
        manifest.inputs = vec![path_str(pred), path_str(gt)];
        write_manifest(dir, &manifest)?;
    }
    Ok(())
}

pub fn train_toy(
    ctx: &Context,
    tasks: usize,
    iters: usize,
    group_size: usize,
    step_size: f64,
    out: &Path,
) -> Result<(), CliError> {
    let t0 = Instant::now();
    // Training tasks are synthetic blobs from the same generator the corpus
    // uses; only their count is a flag.
    let corpus = datagen::make_synthetic_corpus(tasks, ctx.seed, &ctx.config.datagen.shape)
        .map_err(classify_datagen)?;
    let toy_tasks: Vec<ToyTask> =
        corpus.into_iter().map(|s| ToyTask { image: s.image, gt: s.gt }).collect();
    let opts = ToyTrainOptions {
        iterations: iters,
        group_size,
        step_size,
        rewards: ctx.config.rewards.clone(),
        ..ToyTrainOptions::default()
    };
    let result =
        train_toy_policy(&toy_tasks, ToyPolicyParams::default(), &opts, ctx.seed).map_err(|e| {
            match e {
                GrpoError::BadSetup(m) => CliError::Usage(m.to_string()),
                other => CliError::Data(other.to_string()),
            }
        })?;
    ensure_dir(out)?;
    let mut csv = String::from("iteration,mean_reward,sigma,stop_bias\n");
    for p in &result.curve {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            p.iteration,
            jnum(p.mean_reward),
            jnum(p.sigma),
            jnum(p.stop_bias)
        ));
    }
    write_text(&out.join("curve.csv"), &csv)?;
    let mut result_json = serde_json::to_string_pretty(&result).map_err(data)?;
    result_json.push('\n');
    write_text(&out.join("result.json"), &result_json)?;
    let mut manifest = ctx.manifest("train-toy", t0);
    manifest.outputs = vec!["curve.csv".into(), "result.json".into()];
    manifest.counts = counts(&[
        ("tasks", tasks as u64),
        ("iterations", iters as u64),
        ("group_size", group_size as u64),
    ]);
    write_manifest(out, &manifest)?;
    match (result.curve.first(), result.curve.last()) {
        (Some(a), Some(b)) => println!(
            "initial_mean_reward={} final_mean_reward={}",
            jnum(a.mean_reward),
            jnum(b.mean_reward)
        ),
        _ => println!("no iterations run"),
    }
    Ok(())
}

/// Both trajectory and dataset records carry the same step schema; accept
/// either file, matched per line.
fn load_record(path: &Path, id: Option<&str>) -> Result<(String, Vec<StepRecord>), CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (rid, steps) = if let Ok(t) = serde_json::from_str::<TrajectoryRecord>(line) {
            (t.id, t.steps)
        } else if let Ok(d) = serde_json::from_str::<DatasetRecord>(line) {
            (d.id, d.steps)
        } else {
            return Err(CliError::Data(format!(
                "{} line {}: neither a trajectory nor a dataset record",
                path.display(),
                lineno + 1
            )));
        };
        if id.is_none_or(|want| want == rid) {
            return Ok((rid, steps));
        }
    }
    Err(CliError::Data(match id {
        Some(want) => format!("no record '{want}' in {}", path.display()),
        None => format!("{}: no records", path.display()),
    }))
}

pub fn render(
    ctx: &Context,
    traj_path: &Path,
    id: Option<&str>,
    store_flag: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let t0 = Instant::now();
    let store = input_store(traj_path, store_flag)?;
    let (rid, steps) = load_record(traj_path, id)?;
    ensure_dir(out)?;
    let mut frames = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let obs_ref = step.obs_ref.as_ref().ok_or_else(|| {
            CliError::Data(format!(
                "record {rid} step {i} has no stored observation (recorded without a blob store)"
            ))
        })?;
        let bytes = store.get(obs_ref).map_err(data)?;
        let name = format!("step_{i:03}.png");
        write_text_bytes(&out.join(&name), &bytes)?;
        frames.push(name);
    }
    let mut manifest = ctx.manifest("render", t0);
    manifest.inputs = vec![path_str(traj_path)];
    manifest.outputs = frames.clone();
    manifest.counts = counts(&[("frames", frames.len() as u64)]);
    write_manifest(out, &manifest)?;
    println!("wrote {} frames for record {} to {}", frames.len(), rid, path_str(out));
    Ok(())
}

fn write_text_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn serve_mock_segmenter(ctx: &Context, port: u16) -> Result<(), CliError> {
    let seg = ctx.config.segmenter.build_local().map_err(classify_config)?;
    let kind = seg.kind().to_string();
    let server = MockSegmenterServer::start(seg, port)
        .map_err(|e| CliError::Transport(e.to_string()))?;
    println!("config: {}", ctx.source);
    println!("serving {kind} segmenter at {}", server.url());
    // The URL line is the startup handshake for callers that scrape it.
    std::io::stdout().flush().ok();
    server.serve_forever();
    Ok(())
}

pub fn stats(ctx: &Context, dataset: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let records: Vec<DatasetRecord> = read_jsonl(dataset).map_err(data)?;
    let s = datagen::dataset_stats(&records);
    print!("{}", datagen::render_stats_table(&s));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut json = serde_json::to_string_pretty(&s).map_err(data)?;
        json.push('\n');
        write_text(&dir.join("stats.json"), &json)?;
        let mut manifest = ctx.manifest("stats", t0);
        manifest.inputs = vec![path_str(dataset)];
        manifest.outputs = vec!["stats.json".into()];
        manifest.counts = counts(&[("records", records.len() as u64)]);
        write_manifest(dir, &manifest)?;
    }
    Ok(())
}
