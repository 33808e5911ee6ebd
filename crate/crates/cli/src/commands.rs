use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ntb::classifier::GradientConfig;
use ntb::detect::{
    detect_rearming, detect_with_rules, trace_rows, Criteria, DetectionVerdict, Verdict,
};
use ntb::eval::{
    abnormality_metrics, auc, class_list, group_metrics, roc_sweep, split_dataset, EvalReport,
};
use ntb::grid::{timed_route_from_trajectory, SceneConfig, Trajectory};
use ntb::group::{
    calibrate_threshold, classify_pair, crowd_detect, extract_pair_features, flows_by_frame,
    train_group_classifier, window_energies, GroupClassifierModel,
};
use ntb::io::{self, FeatureRow, ModelFile};
use ntb::network::relative::{EwrScheme, RelativeNetworkSpec};
use ntb::routemap::{prune_route_map, sbip, to_dot};
use ntb::synth::{
    gen_abnormality_corpus, gen_casia_corpus, gen_crowd_flows, gen_group_corpus, CrowdMode,
    CrowdScenarioConfig, GroupCorpus, GroupScenarioConfig, ScenarioConfig,
};
use ntb::training::{
    train, train_with_classifier, Label, LogisticProbabilityClassifier, TrainingConfig,
    TrainingSample,
};
use ntb::NtbError;
use serde::Serialize;

use crate::{
    Cli, Command, CriteriaArg, CrowdArgs, DetectArgs, EvalArgs, EvalKind, GroupCommand,
    GroupExtractArgs, RouteMapArgs, SchemeArg, SplitArgs, SynthArgs, SynthKind, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<NtbError> for CliError {
    fn from(e: NtbError) -> Self {
        match e {
            NtbError::NegativeEnergy(..) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult {
    fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", cli.out.display())))?;
    match &cli.command {
        Command::Train(a) => cmd_train(cli, a),
        Command::Detect(a) => cmd_detect(cli, a),
        Command::RouteMap(a) => cmd_route_map(cli, a),
        Command::Group(GroupCommand::Extract(a)) => cmd_group_extract(cli, a),
        Command::Group(GroupCommand::Train(a)) => cmd_group_train(cli, &a.features),
        Command::Group(GroupCommand::Classify(a)) => cmd_group_classify(cli, &a.model, &a.features),
        Command::Crowd(a) => cmd_crowd(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Split(a) => cmd_split(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
    }
}

fn require_scene(cli: &Cli) -> CliResult<SceneConfig> {
    let path = cli
        .scene
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --scene <file>".into()))?;
    Ok(io::read_scene(path)?)
}

fn out(cli: &Cli, name: &str) -> PathBuf {
    cli.out.join(name)
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CliResult {
    let scene = require_scene(cli)?;
    let mut cfg: TrainingConfig = match &a.config {
        Some(p) => io::read_json(p)?,
        None => TrainingConfig::default(),
    };
    if let Some(n) = a.max_iters {
        cfg.max_iters = n;
    }
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    let tracks = io::read_trajectories(&a.tracks)?;
    let labels = io::read_labels(&a.labels)?;
    let by_id: BTreeMap<u64, &Trajectory> = tracks.iter().map(|t| (t.track_id, t)).collect();
    let missing: Vec<u64> = labels
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "labelled tracks missing from {}: {missing:?}",
            a.tracks.display()
        )));
    }
    let unlabelled = tracks.len() - labels.len();
    if unlabelled > 0 {
        log::info!("{unlabelled} tracks have no label and are not used for training");
    }
    let samples = labels
        .iter()
        .map(|&(id, label)| {
            Ok(TrainingSample {
                track_id: id,
                route: timed_route_from_trajectory(by_id[&id], &scene)?.route,
                label,
            })
        })
        .collect::<Result<Vec<_>, NtbError>>()?;
    let model = if a.classifier_loop {
        let mut clf = LogisticProbabilityClassifier::default();
        train_with_classifier(&samples, &scene, &mut clf, &cfg)?
    } else {
        train(&samples, &scene, &cfg)?
    };
    let metadata = BTreeMap::from([
        (
            "generator".to_string(),
            format!("ntb {}", env!("CARGO_PKG_VERSION")),
        ),
        (
            "training".to_string(),
            if a.classifier_loop {
                "classifier_loop"
            } else {
                "rules"
            }
            .to_string(),
        ),
        ("samples".to_string(), samples.len().to_string()),
    ]);
    let mut file = ModelFile::from_model(&model, metadata);
    file.log_file = Some("iterations.csv".into());
    io::write_iteration_log(&out(cli, "iterations.csv"), &model.log)?;
    file.save(&out(cli, "model.json"))?;
    println!(
        "trained on {} routes: {} iterations, converged {}, T1 {}, alpha {}",
        samples.len(),
        model.iterations(),
        model.converged,
        model.t1,
        model.alpha
    );
    Ok(())
}

#[derive(Serialize)]
struct TrackReport {
    track_id: u64,
    #[serde(flatten)]
    verdict: Verdict,
    first_flag_frame: Option<i64>,
    final_energy: f64,
    final_e_min: f64,
    #[serde(rename = "T1")]
    t1: f64,
    #[serde(rename = "T2")]
    t2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    windows: Option<Vec<Verdict>>,
}

#[derive(Serialize)]
struct OnlineStep {
    track_id: u64,
    step: usize,
    frame: i64,
    patch: usize,
    #[serde(rename = "E")]
    energy: f64,
    #[serde(rename = "E_min")]
    e_min: f64,
    #[serde(rename = "T2")]
    t2: f64,
    flagged: bool,
}

fn verdict_label(v: &DetectionVerdict) -> Label {
    match v.verdict {
        Verdict::Normal => Label::Normal,
        Verdict::Abnormal { kind, .. } => Label::Abnormal(kind),
    }
}

fn cmd_detect(cli: &Cli, a: &DetectArgs) -> CliResult {
    let model = ModelFile::load(&a.model)?.to_model()?;
    if let Some(p) = &cli.scene {
        let scene = io::read_scene(p)?;
        if scene != model.scene {
            return Err(CliError::Data(format!(
                "scene {} does not match the model's scene",
                p.display()
            )));
        }
    }
    let criteria = match a.criteria {
        CriteriaArg::Both => Criteria::Both,
        CriteriaArg::T1 => Criteria::T1Only,
        CriteriaArg::T2 => Criteria::T2Only,
    };
    let rules = model.rules().with_criteria(criteria);
    let tracks = io::read_trajectories(&a.tracks)?;
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    let mut reports = Vec::with_capacity(tracks.len());
    let mut traces = Vec::new();
    let mut predictions = Vec::with_capacity(tracks.len());
    for t in &tracks {
        let timed = timed_route_from_trajectory(t, &model.scene)?;
        let v = detect_with_rules(&timed.route, &model, &rules)?;
        let frame_of = |step: usize| {
            if step == 0 {
                t.samples[0].frame
            } else {
                timed.transition_frames[step - 1]
            }
        };
        if a.online {
            for s in &v.steps {
                let line = serde_json::to_string(&OnlineStep {
                    track_id: t.track_id,
                    step: s.step,
                    frame: frame_of(s.step),
                    patch: s.patch,
                    energy: s.energy,
                    e_min: s.e_min,
                    t2: s.t2,
                    flagged: s.flagged,
                })
                .map_err(|e| CliError::Internal(e.to_string()))?;
                writeln!(stdout, "{line}").map_err(|e| CliError::Data(e.to_string()))?;
            }
        }
        let windows = match a.rearm {
            Some(w) => Some(
                detect_rearming(&timed.route, &model, w)?
                    .into_iter()
                    .map(|d| d.verdict)
                    .collect(),
            ),
            None => None,
        };
        let first_flag_frame = match v.verdict {
            Verdict::Abnormal {
                first_flag_step, ..
            } => Some(frame_of(first_flag_step)),
            Verdict::Normal => None,
        };
        predictions.push((t.track_id, verdict_label(&v)));
        if a.trace {
            traces.push((t.track_id, trace_rows(&v)));
        }
        reports.push(TrackReport {
            track_id: t.track_id,
            verdict: v.verdict,
            first_flag_frame,
            final_energy: v.final_energy,
            final_e_min: v.final_e_min,
            t1: v.t1,
            t2: v.t2_final,
            windows,
        });
    }
    // everything is computed before the first file is written
    if a.trace {
        let dir = out(cli, "traces");
        fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        for (id, rows) in &traces {
            io::write_trace(&dir.join(format!("track_{id}.csv")), rows)?;
        }
    }
    io::write_json(&out(cli, "verdicts.json"), &reports)?;
    io::write_labels(&out(cli, "predictions.csv"), &predictions)?;
    let abnormal = predictions.iter().filter(|(_, l)| l.is_abnormal()).count();
    eprintln!("{} tracks, {abnormal} abnormal", predictions.len());
    Ok(())
}

fn cmd_route_map(cli: &Cli, a: &RouteMapArgs) -> CliResult {
    let model = ModelFile::load(&a.model)?.to_model()?;
    let sources: Vec<usize> = if a.source.is_empty() {
        model.scene.entrance_patches.iter().copied().collect()
    } else {
        a.source.clone()
    };
    if sources.is_empty() {
        return Err(CliError::Usage(
            "no --source given and the scene has no entrances".into(),
        ));
    }
    let mut outputs = Vec::new();
    for &u in &sources {
        let map = sbip(&model.network, u)?;
        let edges = match a.prune {
            Some(th) => prune_route_map(&map, &model.network, th)?,
            None => map.tree_edges(&model.network),
        };
        outputs.push((u, to_dot(&map, &edges), map.to_csv()));
    }
    for (u, dot, csv) in outputs {
        io::atomic_write(&out(cli, &format!("route_map_{u}.dot")), dot.as_bytes())?;
        io::atomic_write(&out(cli, &format!("route_map_{u}.csv")), csv.as_bytes())?;
    }
    Ok(())
}

fn cmd_group_extract(cli: &Cli, a: &GroupExtractArgs) -> CliResult {
    let scene = require_scene(cli)?;
    let tracks = io::read_trajectories(&a.tracks)?;
    let pairs = io::read_group_labels(&a.pairs)?;
    let field = match &a.field {
        Some(p) => Some(io::read_motion_field(p, &scene)?),
        None => None,
    };
    let scheme = match a.scheme {
        SchemeArg::Head => EwrScheme::Head,
        SchemeArg::Tail => EwrScheme::Tail,
    };
    let spec = RelativeNetworkSpec::new(a.r_max, scheme);
    let by_id: BTreeMap<u64, &Trajectory> = tracks.iter().map(|t| (t.track_id, t)).collect();
    let unknown: BTreeSet<u64> = pairs
        .iter()
        .flat_map(|p| [p.track_id_1, p.track_id_2])
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::Data(format!(
            "pairs reference unknown tracks: {unknown:?}"
        )));
    }
    let rows = pairs
        .iter()
        .map(|p| {
            let f = extract_pair_features(
                by_id[&p.track_id_1],
                by_id[&p.track_id_2],
                &scene,
                &spec,
                field.as_ref(),
            )?;
            Ok(FeatureRow {
                pair_id: p.pair_id.clone(),
                label: p.label.clone(),
                features: f,
            })
        })
        .collect::<Result<Vec<_>, NtbError>>()?;
    io::write_features(&out(cli, "features.csv"), &rows)?;
    Ok(())
}

fn cmd_group_train(cli: &Cli, features: &Path) -> CliResult {
    let rows = io::read_features(features)?;
    let x: Vec<_> = rows.iter().map(|r| r.features).collect();
    let y: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    let model = train_group_classifier(&x, &y, &GradientConfig::default())?;
    io::write_json(&out(cli, "group_model.json"), &model)?;
    eprintln!("{} pairs, classes {:?}", rows.len(), model.classes());
    Ok(())
}

fn cmd_group_classify(cli: &Cli, model: &Path, features: &Path) -> CliResult {
    let model: GroupClassifierModel = io::read_json(model)?;
    let rows = io::read_features(features)?;
    let preds = rows
        .iter()
        .map(|r| Ok((r.pair_id.clone(), classify_pair(&r.features, &model)?.0)))
        .collect::<Result<Vec<_>, NtbError>>()?;
    io::write_pair_labels(&out(cli, "group_predictions.csv"), &preds)?;
    Ok(())
}

fn parse_range(s: &str) -> CliResult<(i64, i64)> {
    let bad = || CliError::Usage(format!("expected FIRST:LAST, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

#[derive(Serialize)]
struct CrowdSummary {
    theta: f64,
    windows: usize,
    abnormal_windows: usize,
    abnormal_frames: usize,
    auc: Option<f64>,
}

fn cmd_crowd(cli: &Cli, a: &CrowdArgs) -> CliResult {
    let scene = require_scene(cli)?;
    let flows = io::read_flows(&a.flows)?;
    if flows.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no flow vectors",
            a.flows.display()
        )));
    }
    let truth = match &a.truth {
        Some(p) => Some(io::read_frame_labels(p)?),
        None => None,
    };
    let by_frame = flows_by_frame(&flows);
    let mut frames = (
        *by_frame.keys().next().unwrap(),
        *by_frame.keys().last().unwrap(),
    );
    if let Some(t) = &truth {
        if let (Some(&lo), Some(&hi)) = (t.keys().next(), t.keys().last()) {
            frames = (frames.0.min(lo), frames.1.max(hi));
        }
    }
    let center = (
        f64::from(scene.image_width) / 2.0,
        f64::from(scene.image_height) / 2.0,
    );
    let cell = f64::from(scene.patch_size);
    let spec = RelativeNetworkSpec::new(a.r_max, EwrScheme::Head);
    let theta = match (a.theta, &a.calibrate) {
        (Some(t), _) => t,
        (None, Some(r)) => {
            let range = parse_range(r)?;
            let calib: Vec<f64> =
                window_energies(&by_frame, range, a.window, a.stride, center, cell, &spec)?
                    .into_iter()
                    .map(|(_, _, e)| e)
                    .collect();
            calibrate_threshold(&calib, a.k)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "give --calibrate FIRST:LAST or --theta".into(),
            ))
        }
    };
    let report = crowd_detect(
        &by_frame, frames, a.window, a.stride, theta, center, cell, &spec,
    )?;
    let auc_value = match &truth {
        Some(t) => {
            let (scores, positive): (Vec<f64>, Vec<bool>) = t
                .iter()
                .map(|(f, &abn)| (-report.frame_energy.get(f).copied().unwrap_or(0.0), abn))
                .unzip();
            io::write_roc(&out(cli, "roc.csv"), &roc_sweep(&scores, &positive)?)?;
            Some(auc(&scores, &positive)?)
        }
        None => None,
    };
    let summary = CrowdSummary {
        theta,
        windows: report.windows.len(),
        abnormal_windows: report.windows.iter().filter(|w| w.abnormal).count(),
        abnormal_frames: report.frame_abnormal.values().filter(|&&a| a).count(),
        auc: auc_value,
    };
    io::write_windows(&out(cli, "crowd_windows.csv"), &report.windows)?;
    io::write_json(&out(cli, "crowd_report.json"), &report)?;
    println!(
        "{}",
        serde_json::to_string(&summary).map_err(|e| CliError::Internal(e.to_string()))?
    );
    Ok(())
}

fn restrict<K: Ord + Clone, V: Clone>(
    preds: BTreeMap<K, V>,
    truth: &BTreeMap<K, V>,
    ignore_extra: bool,
) -> BTreeMap<K, V> {
    if !ignore_extra {
        return preds;
    }
    let n = preds.len();
    let kept: BTreeMap<K, V> = preds
        .into_iter()
        .filter(|(k, _)| truth.contains_key(k))
        .collect();
    if kept.len() < n {
        log::info!(
            "ignoring {} predictions without ground truth",
            n - kept.len()
        );
    }
    kept
}

fn write_report(cli: &Cli, report: &EvalReport) -> CliResult {
    let table = report.to_table();
    io::write_json(&out(cli, "report.json"), report)?;
    io::atomic_write(&out(cli, "report.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> CliResult {
    let report = match a.kind {
        EvalKind::Abnormality => {
            let truth: BTreeMap<u64, Label> = io::read_labels(&a.truth)?.into_iter().collect();
            let preds: BTreeMap<u64, Label> =
                io::read_labels(&a.predictions)?.into_iter().collect();
            abnormality_metrics(&restrict(preds, &truth, a.ignore_extra), &truth)?
        }
        EvalKind::Group => {
            let truth: BTreeMap<String, String> = io::read_group_labels(&a.truth)?
                .into_iter()
                .map(|p| (p.pair_id, p.label))
                .collect();
            let preds = io::read_pair_labels(&a.predictions)?;
            let classes = class_list(truth.values().chain(preds.values()));
            group_metrics(&restrict(preds, &truth, a.ignore_extra), &truth, &classes)?
        }
    };
    write_report(cli, &report)
}

fn cmd_split(cli: &Cli, a: &SplitArgs) -> CliResult {
    let labels = io::read_labels(&a.labels)?;
    let classes: Vec<Label> = labels.iter().map(|(_, l)| *l).collect();
    let (train_idx, test_idx) = split_dataset(&classes, a.fraction, cli.seed.unwrap_or(0))?;
    let pick = |idx: &[usize]| idx.iter().map(|&k| labels[k]).collect::<Vec<_>>();
    io::write_labels(&out(cli, "train_labels.csv"), &pick(&train_idx))?;
    io::write_labels(&out(cli, "test_labels.csv"), &pick(&test_idx))?;
    Ok(())
}

fn write_group_corpus(cli: &Cli, corpus: &GroupCorpus) -> CliResult {
    io::write_json(&out(cli, "scene.json"), &corpus.scene)?;
    io::write_trajectories(&out(cli, "tracks.csv"), &corpus.trajectories)?;
    io::write_group_labels(&out(cli, "pairs.csv"), &corpus.pairs)?;
    if let Some(f) = &corpus.field {
        io::write_motion_field(&out(cli, "field.csv"), f, &corpus.scene)?;
    }
    Ok(())
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> CliResult {
    match a.kind {
        SynthKind::Abnormality => {
            let mut cfg: ScenarioConfig = load_or_default(a.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(ps) = a.patch_size {
                cfg.patch_size = ps;
            }
            let corpus = gen_abnormality_corpus(&cfg);
            io::write_json(&out(cli, "scene.json"), &cfg.scene(cfg.patch_size))?;
            io::write_trajectories(&out(cli, "tracks.csv"), &corpus.trajectories)?;
            io::write_labels(&out(cli, "labels.csv"), &corpus.labels)?;
        }
        SynthKind::Group | SynthKind::Casia => {
            let mut cfg: GroupScenarioConfig = load_or_default(a.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let corpus = match a.kind {
                SynthKind::Group => gen_group_corpus(&cfg),
                _ => gen_casia_corpus(&cfg),
            };
            write_group_corpus(cli, &corpus)?;
        }
        SynthKind::Crowd => {
            let mut cfg: CrowdScenarioConfig = load_or_default(a.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let seq = gen_crowd_flows(&cfg, CrowdMode::NormalThenEscape);
            let scene = SceneConfig::new(
                cfg.image_width,
                cfg.image_height,
                a.patch_size.unwrap_or(48),
            );
            io::write_json(&out(cli, "scene.json"), &scene)?;
            io::write_flows(&out(cli, "flows.csv"), &seq.flows)?;
            io::write_frame_labels(&out(cli, "truth.csv"), &seq.abnormal)?;
        }
    }
    Ok(())
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    Ok(match path {
        Some(p) => io::read_json(p)?,
        None => T::default(),
    })
}
