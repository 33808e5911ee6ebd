//! File formats: CSV tables for bulk data, JSON for scenes, configs, models
//! and reports.
//!
//! | file | columns |
//! |------|---------|
//! | trajectories | `track_id,frame,x,y` |
//! | labels | `track_id,label` (`normal`, `I`, `II`, `III`) |
//! | motion field | `frame,patch_row,patch_col,magnitude` |
//! | flows | `frame,x,y,dx,dy` |
//! | group labels | `pair_id,track_id_1,track_id_2,label` |
//! | pair predictions | `pair_id,label` |
//! | crowd ground truth | `frame,abnormal` |
//! | crowd windows | `start,end,energy,abnormal` |
//! | features | `pair_id,label,E1,E2,ENR,EWR[,EMI1,EMI2]` |
//! | iteration log | `iter,T1,alpha,err_fa,err_miss` |
//! | trace | `step,patch,E,T1,T2,flag` |
//! | ROC | `threshold,tpr,fpr` |
//!
//! Readers report the 1-based line of the offending row. Every writer goes
//! through [`atomic_write`], so a failed run never leaves a half-written file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detect::TraceRow;
use crate::error::{NtbError, Result};
use crate::eval::RocPoint;
use crate::grid::{PatchIndex, Sample, SceneConfig, Trajectory};
use crate::group::{FlowVector, GroupFeatureVector, WindowResult};
use crate::network::motion::MotionField;
use crate::network::TransmissionNetwork;
use crate::synth::GroupPair;
use crate::training::{IterationRecord, Label, TrainedAbnormalityModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| NtbError::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(file_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    serde_json::from_str(&text).map_err(|e| NtbError::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_scene(path: &Path) -> Result<SceneConfig> {
    let scene: SceneConfig = read_json(path)?;
    scene.validate()?;
    Ok(scene)
}

fn parse_err(name: &str, line: u64, msg: impl Into<String>) -> NtbError {
    NtbError::Parse {
        path: name.to_string(),
        line,
        msg: msg.into(),
    }
}

// Deserializes every row, checking that the header holds `expected` in order.
fn read_rows<T: DeserializeOwned, R: Read>(
    reader: R,
    name: &str,
    expected: &[&str],
) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(name, 1, e.to_string()))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(parse_err(
            name,
            1,
            format!(
                "expected header {}, found {}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(name, line, e.to_string()))?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> NtbError + '_ {
    move |source| NtbError::File {
        path: path.display().to_string(),
        source,
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(file_err(path))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| NtbError::Format(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| NtbError::Format(e.to_string()))?;
    atomic_write(path, &bytes)
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRow {
    track_id: u64,
    frame: i64,
    x: f64,
    y: f64,
}

/// Tracks in order of first appearance. Rows of one track may be interleaved
/// with other tracks but must have increasing frames.
pub fn parse_trajectories<R: Read>(reader: R, name: &str) -> Result<Vec<Trajectory>> {
    let rows: Vec<(u64, TrajectoryRow)> =
        read_rows(reader, name, &["track_id", "frame", "x", "y"])?;
    let mut order = Vec::new();
    let mut by_id: BTreeMap<u64, Vec<Sample>> = BTreeMap::new();
    for (line, r) in rows {
        if !r.x.is_finite() || !r.y.is_finite() {
            return Err(parse_err(name, line, "non-finite coordinate"));
        }
        let samples = by_id.entry(r.track_id).or_insert_with(|| {
            order.push(r.track_id);
            Vec::new()
        });
        if samples.last().is_some_and(|s| s.frame >= r.frame) {
            return Err(parse_err(
                name,
                line,
                format!("track {}: frame {} does not increase", r.track_id, r.frame),
            ));
        }
        samples.push(Sample {
            frame: r.frame,
            x: r.x,
            y: r.y,
        });
    }
    order
        .into_iter()
        .map(|id| Trajectory::new(id, by_id.remove(&id).unwrap_or_default()))
        .collect()
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    parse_trajectories(open(path)?, &path.display().to_string())
}

pub fn write_trajectories(path: &Path, tracks: &[Trajectory]) -> Result<()> {
    write_rows(
        path,
        tracks.iter().flat_map(|t| {
            t.samples.iter().map(|s| TrajectoryRow {
                track_id: t.track_id,
                frame: s.frame,
                x: s.x,
                y: s.y,
            })
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    track_id: u64,
    label: String,
}

pub fn parse_labels<R: Read>(reader: R, name: &str) -> Result<Vec<(u64, Label)>> {
    let rows: Vec<(u64, LabelRow)> = read_rows(reader, name, &["track_id", "label"])?;
    let mut seen = BTreeSet::new();
    rows.into_iter()
        .map(|(line, r)| {
            if !seen.insert(r.track_id) {
                return Err(parse_err(
                    name,
                    line,
                    format!("duplicate track_id {}", r.track_id),
                ));
            }
            let label = r
                .label
                .parse()
                .map_err(|e: NtbError| parse_err(name, line, e.to_string()))?;
            Ok((r.track_id, label))
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<(u64, Label)>> {
    parse_labels(open(path)?, &path.display().to_string())
}

pub fn write_labels(path: &Path, labels: &[(u64, Label)]) -> Result<()> {
    write_rows(
        path,
        labels.iter().map(|(id, l)| LabelRow {
            track_id: *id,
            label: l.to_string(),
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct FieldRow {
    frame: i64,
    patch_row: usize,
    patch_col: usize,
    magnitude: f64,
}

pub fn parse_motion_field<R: Read>(
    reader: R,
    name: &str,
    scene: &SceneConfig,
) -> Result<MotionField> {
    let rows: Vec<(u64, FieldRow)> = read_rows(
        reader,
        name,
        &["frame", "patch_row", "patch_col", "magnitude"],
    )?;
    let mut field = MotionField::new();
    for (line, r) in rows {
        if r.patch_row >= scene.rows() || r.patch_col >= scene.columns() {
            return Err(parse_err(
                name,
                line,
                format!(
                    "patch ({}, {}) outside the {}x{} grid",
                    r.patch_row,
                    r.patch_col,
                    scene.rows(),
                    scene.columns()
                ),
            ));
        }
        field
            .insert(
                r.frame,
                scene.index_of(r.patch_row, r.patch_col),
                r.magnitude,
            )
            .map_err(|e| parse_err(name, line, e.to_string()))?;
    }
    Ok(field)
}

pub fn read_motion_field(path: &Path, scene: &SceneConfig) -> Result<MotionField> {
    parse_motion_field(open(path)?, &path.display().to_string(), scene)
}

pub fn write_motion_field(path: &Path, field: &MotionField, scene: &SceneConfig) -> Result<()> {
    write_rows(
        path,
        field.iter().map(|(frame, p, magnitude)| {
            let (patch_row, patch_col) = scene.row_col(p);
            FieldRow {
                frame,
                patch_row,
                patch_col,
                magnitude,
            }
        }),
    )
}

pub fn parse_flows<R: Read>(reader: R, name: &str) -> Result<Vec<FlowVector>> {
    let rows: Vec<(u64, FlowVector)> = read_rows(reader, name, &["frame", "x", "y", "dx", "dy"])?;
    rows.into_iter()
        .map(|(line, f)| {
            if [f.x, f.y, f.dx, f.dy].iter().all(|v| v.is_finite()) {
                Ok(f)
            } else {
                Err(parse_err(name, line, "non-finite flow component"))
            }
        })
        .collect()
}

pub fn read_flows(path: &Path) -> Result<Vec<FlowVector>> {
    parse_flows(open(path)?, &path.display().to_string())
}

pub fn write_flows(path: &Path, flows: &[FlowVector]) -> Result<()> {
    write_rows(path, flows)
}

pub fn parse_group_labels<R: Read>(reader: R, name: &str) -> Result<Vec<GroupPair>> {
    let rows: Vec<(u64, GroupPair)> = read_rows(
        reader,
        name,
        &["pair_id", "track_id_1", "track_id_2", "label"],
    )?;
    let mut seen = BTreeSet::new();
    rows.into_iter()
        .map(|(line, p)| {
            if p.track_id_1 == p.track_id_2 {
                return Err(parse_err(name, line, "a pair needs two different tracks"));
            }
            if !seen.insert(p.pair_id.clone()) {
                return Err(parse_err(
                    name,
                    line,
                    format!("duplicate pair_id {}", p.pair_id),
                ));
            }
            Ok(p)
        })
        .collect()
}

pub fn read_group_labels(path: &Path) -> Result<Vec<GroupPair>> {
    parse_group_labels(open(path)?, &path.display().to_string())
}

pub fn write_group_labels(path: &Path, pairs: &[GroupPair]) -> Result<()> {
    write_rows(path, pairs)
}

#[derive(Serialize, Deserialize)]
struct PairLabelRow {
    pair_id: String,
    label: String,
}

/// `pair_id -> label`; duplicate ids are an error.
pub fn parse_pair_labels<R: Read>(reader: R, name: &str) -> Result<BTreeMap<String, String>> {
    let rows: Vec<(u64, PairLabelRow)> = read_rows(reader, name, &["pair_id", "label"])?;
    let mut out = BTreeMap::new();
    for (line, r) in rows {
        if out.insert(r.pair_id.clone(), r.label).is_some() {
            return Err(parse_err(
                name,
                line,
                format!("duplicate pair_id {}", r.pair_id),
            ));
        }
    }
    Ok(out)
}

pub fn read_pair_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_pair_labels(open(path)?, &path.display().to_string())
}

pub fn write_pair_labels(path: &Path, labels: &[(String, String)]) -> Result<()> {
    write_rows(
        path,
        labels.iter().map(|(pair_id, label)| PairLabelRow {
            pair_id: pair_id.clone(),
            label: label.clone(),
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct FrameLabelRow {
    frame: i64,
    abnormal: u8,
}

/// Per-frame ground truth, `abnormal` being `0` or `1`.
pub fn parse_frame_labels<R: Read>(reader: R, name: &str) -> Result<BTreeMap<i64, bool>> {
    let rows: Vec<(u64, FrameLabelRow)> = read_rows(reader, name, &["frame", "abnormal"])?;
    let mut out = BTreeMap::new();
    for (line, r) in rows {
        let v = match r.abnormal {
            0 => false,
            1 => true,
            other => {
                return Err(parse_err(
                    name,
                    line,
                    format!("abnormal must be 0 or 1, got {other}"),
                ))
            }
        };
        if out.insert(r.frame, v).is_some() {
            return Err(parse_err(
                name,
                line,
                format!("duplicate frame {}", r.frame),
            ));
        }
    }
    Ok(out)
}

pub fn read_frame_labels(path: &Path) -> Result<BTreeMap<i64, bool>> {
    parse_frame_labels(open(path)?, &path.display().to_string())
}

pub fn write_frame_labels(path: &Path, labels: &BTreeMap<i64, bool>) -> Result<()> {
    write_rows(
        path,
        labels.iter().map(|(&frame, &a)| FrameLabelRow {
            frame,
            abnormal: u8::from(a),
        }),
    )
}

pub fn write_windows(path: &Path, windows: &[WindowResult]) -> Result<()> {
    write_rows(path, windows)
}

/// One row of a feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub pair_id: String,
    pub label: String,
    pub features: GroupFeatureVector,
}

pub fn parse_features<R: Read>(reader: R, name: &str) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(name, 1, e.to_string()))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    let dim = got.len().saturating_sub(2);
    let names = &GroupFeatureVector::NAMES;
    if !(dim == 4 || dim == 6) || got[..2] != ["pair_id", "label"] || got[2..] != names[..dim] {
        return Err(parse_err(
            name,
            1,
            format!(
                "expected header pair_id,label,{}[,EMI1,EMI2]",
                names[..4].join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| parse_err(name, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let values = rec
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(name, line, format!("bad feature value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(FeatureRow {
            pair_id: rec[0].to_string(),
            label: rec[1].to_string(),
            features: GroupFeatureVector::from_slice(&values)
                .map_err(|e| parse_err(name, line, e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    parse_features(open(path)?, &path.display().to_string())
}

/// All rows must have the same dimension.
pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let dim = rows.first().map_or(4, |r| r.features.dim());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["pair_id", "label"];
    header.extend(&GroupFeatureVector::NAMES[..dim]);
    let fmt = |e: csv::Error| NtbError::Format(e.to_string());
    w.write_record(&header).map_err(fmt)?;
    for r in rows {
        if r.features.dim() != dim {
            return Err(NtbError::DimensionMismatch {
                expected: dim,
                got: r.features.dim(),
            });
        }
        let mut rec = vec![r.pair_id.clone(), r.label.clone()];
        rec.extend(r.features.to_vec().iter().map(f64::to_string));
        w.write_record(&rec).map_err(fmt)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| NtbError::Format(e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn write_iteration_log(path: &Path, log: &[IterationRecord]) -> Result<()> {
    write_rows(path, log)
}

pub fn parse_iteration_log<R: Read>(reader: R, name: &str) -> Result<Vec<IterationRecord>> {
    let rows = read_rows(reader, name, &["iter", "T1", "alpha", "err_fa", "err_miss"])?;
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_roc(path: &Path, points: &[RocPoint]) -> Result<()> {
    write_rows(path, points)
}

/// On-disk form of a trained abnormality model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub scene: SceneConfig,
    pub node_count: usize,
    pub directed: bool,
    /// Row-major `node_count × node_count` DT energies.
    pub energies: Vec<f64>,
    #[serde(rename = "L")]
    pub large_value: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    pub alpha: f64,
    pub entrance_patches: Vec<PatchIndex>,
    pub converged: bool,
    pub log: Vec<IterationRecord>,
    /// Path of the iteration log CSV written next to the model, if any.
    #[serde(default)]
    pub log_file: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn from_model(model: &TrainedAbnormalityModel, metadata: BTreeMap<String, String>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            scene: model.scene.clone(),
            node_count: model.network.node_count(),
            directed: model.network.is_directed(),
            energies: model.network.row_major().to_vec(),
            large_value: model.network.large_value(),
            t1: model.t1,
            alpha: model.alpha,
            entrance_patches: model.scene.entrance_patches.iter().copied().collect(),
            converged: model.converged,
            log: model.log.clone(),
            log_file: None,
            metadata,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(NtbError::Format(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.scene.validate()?;
        if self.node_count != self.scene.node_count() {
            return Err(NtbError::Format(format!(
                "node_count {} does not match the {}-patch scene",
                self.node_count,
                self.scene.node_count()
            )));
        }
        if self.energies.len() != self.node_count * self.node_count {
            return Err(NtbError::Format(format!(
                "energy matrix has {} entries, expected {}",
                self.energies.len(),
                self.node_count * self.node_count
            )));
        }
        if let Some(e) = self
            .energies
            .iter()
            .find(|e| !(e.is_finite() && **e >= 0.0))
        {
            return Err(NtbError::Format(format!(
                "energy {e} is not a finite non-negative number"
            )));
        }
        let entrances: BTreeSet<PatchIndex> = self.entrance_patches.iter().copied().collect();
        if entrances != self.scene.entrance_patches {
            return Err(NtbError::Format(
                "entrance_patches disagree with the scene".into(),
            ));
        }
        if !self.t1.is_finite() || !self.alpha.is_finite() {
            return Err(NtbError::Format("thresholds must be finite".into()));
        }
        Ok(())
    }

    pub fn to_model(&self) -> Result<TrainedAbnormalityModel> {
        self.validate()?;
        let net = TransmissionNetwork::from_row_major(
            self.node_count,
            self.directed,
            self.large_value,
            self.energies.clone(),
        )?;
        TrainedAbnormalityModel::from_parts(
            self.scene.clone(),
            net,
            self.t1,
            self.alpha,
            self.log.clone(),
            self.converged,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses and validates; the version is checked before any other field.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(NtbError::Format(format!(
                    "unsupported format_version {v} (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(NtbError::Format("missing format_version".into())),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| NtbError::Format(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(file_err(path))?;
        Self::from_json(&text).map_err(|e| NtbError::Format(format!("{}: {e}", path.display())))
    }
}
