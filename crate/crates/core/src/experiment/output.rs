//! Output files: trajectory logs, CSV tables and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::eval::{Dominance, MethodRun, MethodSpec, StepAggregate};
use crate::traversal::{Trajectory, TrajectoryStatus};

/// Formats a float with 17 significant digits, enough for an exact round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON formatter writing every `f64` with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct RoundTripFloats;

impl serde_json::ser::Formatter for RoundTripFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
}

pub fn to_json_line<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTripFloats);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// An output directory that records a checksum for every file written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `contents` to `relative` (forward slashes) under the root.
    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.files.push(FileEntry {
            path: relative.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    seed_index: u64,
    path_index: u64,
    selector: &'a str,
    method: &'a str,
    status: TrajectoryStatus,
    fallbacks: usize,
    points: Vec<&'a [f64]>,
    seed_direction: Option<&'a [f64]>,
    sq_dy: BTreeMap<&'a str, Vec<f64>>,
    cos_dy: BTreeMap<&'a str, Vec<f64>>,
    sq_dx: Vec<f64>,
    step_dx: Vec<f64>,
    skip_dx: Vec<Option<f64>>,
}

/// One JSON object per trajectory, in the given order.
pub fn trajectories_jsonl(trajectories: &[Trajectory], fixed_names: &[String]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for t in trajectories {
        let per_feature = |pick: fn(&crate::eval::StepRecord, usize) -> f64| {
            fixed_names
                .iter()
                .enumerate()
                .map(|(j, name)| (name.as_str(), t.records.iter().map(|r| pick(r, j)).collect()))
                .collect::<BTreeMap<_, _>>()
        };
        let line = TrajectoryLine {
            seed_index: t.seed_index,
            path_index: t.path_id,
            selector: t.selector.as_str(),
            method: t.method.as_str(),
            status: t.status,
            fallbacks: t.fallbacks,
            points: t.points.iter().map(|p| p.as_slice()).collect(),
            seed_direction: t.seed_direction.as_ref().map(|v| v.as_slice()),
            sq_dy: per_feature(|r, j| r.sq_dy[j]),
            cos_dy: per_feature(|r, j| r.cos_dy[j]),
            sq_dx: t.records.iter().map(|r| r.sq_dx).collect(),
            step_dx: t.records.iter().map(|r| r.step_dx).collect(),
            skip_dx: t.records.iter().map(|r| r.skip_dx).collect(),
        };
        out.extend(to_json_line(&line)?);
    }
    Ok(out)
}

/// `method,step,mean_sq_dy_<name>...,mean_sq_dx,count`.
pub fn summary_csv(runs: &[(MethodSpec, &[StepAggregate])], fixed_names: &[String]) -> String {
    let mut s = String::from("method,step");
    for n in fixed_names {
        write!(s, ",mean_sq_dy_{n}").unwrap();
    }
    s.push_str(",mean_sq_dx,count\n");
    for (spec, aggregates) in runs {
        for a in *aggregates {
            write!(s, "{},{}", spec.name(), a.step).unwrap();
            for v in &a.mean_sq_dy {
                write!(s, ",{}", fmt_f64(*v)).unwrap();
            }
            writeln!(s, ",{},{}", fmt_f64(a.mean_sq_dx), a.count).unwrap();
        }
    }
    s
}

/// Per-method, per-step log-scale table.
pub fn comparison_csv(runs: &[MethodRun], fixed_names: &[String]) -> String {
    let mut s = String::from("method,step");
    for n in fixed_names {
        write!(s, ",mean_log10_sq_dy_{n}").unwrap();
    }
    s.push_str(",mean_log10_sq_dx,count,floored\n");
    for r in runs {
        for a in &r.aggregates {
            write!(s, "{},{}", r.spec.name(), a.step).unwrap();
            for v in &a.mean_log10_sq_dy {
                write!(s, ",{}", fmt_f64(*v)).unwrap();
            }
            writeln!(s, ",{},{},{}", fmt_f64(a.mean_log10_sq_dx), a.count, a.floored).unwrap();
        }
    }
    s
}

pub fn dominance_csv(rows: &[Dominance], fixed_names: &[String]) -> String {
    let mut s = String::from("a,b,step");
    for n in fixed_names {
        write!(s, ",delta_log10_sq_dy_{n}").unwrap();
    }
    s.push_str(",delta_log10_sq_dx,a_dominates\n");
    for d in rows {
        write!(s, "{},{},{}", d.a, d.b, d.step).unwrap();
        for v in &d.delta_log10_sq_dy {
            write!(s, ",{}", fmt_f64(*v)).unwrap();
        }
        writeln!(s, ",{},{}", fmt_f64(d.delta_log10_sq_dx), d.a_dominates).unwrap();
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryStatusEntry {
    pub method: String,
    pub seed_index: u64,
    pub path_index: u64,
    pub status: TrajectoryStatus,
    pub steps: usize,
}

impl TrajectoryStatusEntry {
    pub fn of(t: &Trajectory, method: &str) -> Self {
        Self {
            method: method.to_string(),
            seed_index: t.seed_index,
            path_index: t.path_id,
            status: t.status,
            steps: t.steps_reached(),
        }
    }
}

/// `manifest.json`: everything needed to audit a run. The manifest does not
/// list itself.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_name: String,
    pub config_sha256: String,
    pub wall_clock_seconds: f64,
    pub statuses: Vec<TrajectoryStatusEntry>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
