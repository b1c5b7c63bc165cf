//! File formats: pipeline JSON, curve CSVs, operating-point CSVs and run
//! manifests.
//!
//! Numbers are written with Rust's shortest round-trip `Display` form,
//! which never uses exponent notation and does not depend on locale.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bd::{OperatingPoint, RateQualityCurve};
use crate::error::{Error, Result};
use crate::pipeline::{LayeredPipeline, PipelineSpec};
use crate::rd::{RdCurve, RdPoint, SolverConfig};

pub const RD_CURVE_HEADER: [&str; 3] = ["distortion", "rate_bits", "beta"];
pub const RATE_QUALITY_HEADER: [&str; 2] = ["rate_bpp", "quality"];
pub const OPERATING_POINT_HEADER: [&str; 4] = ["rate", "d_enh", "d_base", "label"];

/// Metric name used when a curve file carries none.
pub const DEFAULT_QUALITY_METRIC: &str = "quality";

/// Name of the generator every random draw goes through.
pub const RNG_NAME: &str = "ChaCha8Rng";

fn parse_error(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Deserializes JSON, naming the offending key path and position on error.
pub fn from_json_str<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            parse_error(origin, inner)
        } else {
            parse_error(origin, format!("at `{path}`: {inner}"))
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json_str(&fs::read_to_string(path)?, path)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn parse_pipeline(text: &str, origin: &Path) -> Result<LayeredPipeline> {
    from_json_str::<PipelineSpec>(text, origin)?.into_pipeline()
}

/// Reads and validates a pipeline file.
pub fn load_pipeline(path: &Path) -> Result<LayeredPipeline> {
    parse_pipeline(&fs::read_to_string(path)?, path)
}

pub fn save_pipeline(pipeline: &LayeredPipeline, path: &Path) -> Result<()> {
    write_json(&pipeline.to_spec(), path)
}

fn number_field(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        parse_error(
            path,
            format!("line {line}: `{name}` is not a number: `{raw}`"),
        )
    })
}

fn check_header(
    path: &Path,
    reader: &mut csv::Reader<impl Read>,
    expected: &[&str],
    required: usize,
) -> Result<()> {
    let header = reader.headers().map_err(|e| parse_error(path, e))?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    let ok = found.len() >= required
        && found.len() <= expected.len()
        && found.iter().zip(expected).all(|(a, b)| a == b);
    if !ok {
        return Err(parse_error(
            path,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                found.join(",")
            ),
        ));
    }
    Ok(())
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input)
}

fn csv_writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output)
}

fn finish<W: Write>(writer: csv::Writer<W>) -> Result<()> {
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?
        .flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_rd_curve_csv<W: Write>(curve: &RdCurve, output: W) -> Result<()> {
    let mut w = csv_writer(output);
    w.write_record(RD_CURVE_HEADER).map_err(csv_io)?;
    for p in curve.points() {
        w.write_record([
            p.distortion.to_string(),
            p.rate.to_string(),
            p.beta.to_string(),
        ])
        .map_err(csv_io)?;
    }
    finish(w)
}

pub fn save_rd_curve(curve: &RdCurve, path: &Path) -> Result<()> {
    write_rd_curve_csv(curve, fs::File::create(path)?)
}

pub fn read_rd_curve_csv<R: Read>(input: R, origin: &Path, label: &str) -> Result<RdCurve> {
    let mut r = csv_reader(input);
    check_header(origin, &mut r, &RD_CURVE_HEADER, 3)?;
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_error(origin, e))?;
        let line = i as u64 + 2;
        points.push(RdPoint {
            distortion: number_field(origin, line, "distortion", &rec[0])?,
            rate: number_field(origin, line, "rate_bits", &rec[1])?,
            beta: number_field(origin, line, "beta", &rec[2])?,
        });
    }
    RdCurve::new(points, label).map_err(|e| parse_error(origin, e))
}

pub fn load_rd_curve(path: &Path, label: &str) -> Result<RdCurve> {
    read_rd_curve_csv(fs::File::open(path)?, path, label)
}

/// Metric and label stored beside a rate-quality CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSidecar {
    pub quality_metric: String,
    pub curve_label: String,
}

/// `curve.csv` -> `curve.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_rate_quality_csv<W: Write>(curve: &RateQualityCurve, output: W) -> Result<()> {
    let mut w = csv_writer(output);
    w.write_record(RATE_QUALITY_HEADER).map_err(csv_io)?;
    for (rate, q) in curve.points() {
        w.write_record([rate.to_string(), q.to_string()])
            .map_err(csv_io)?;
    }
    finish(w)
}

/// Writes the CSV and its sidecar.
pub fn save_rate_quality_curve(curve: &RateQualityCurve, path: &Path) -> Result<()> {
    write_rate_quality_csv(curve, fs::File::create(path)?)?;
    write_json(
        &CurveSidecar {
            quality_metric: curve.quality_metric().to_string(),
            curve_label: curve.curve_label().to_string(),
        },
        &sidecar_path(path),
    )
}

pub fn read_rate_quality_csv<R: Read>(
    input: R,
    origin: &Path,
    quality_metric: &str,
    curve_label: &str,
) -> Result<RateQualityCurve> {
    let mut r = csv_reader(input);
    check_header(origin, &mut r, &RATE_QUALITY_HEADER, 2)?;
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_error(origin, e))?;
        let line = i as u64 + 2;
        points.push((
            number_field(origin, line, "rate_bpp", &rec[0])?,
            number_field(origin, line, "quality", &rec[1])?,
        ));
    }
    RateQualityCurve::new(points, quality_metric, curve_label).map_err(|e| parse_error(origin, e))
}

/// Loads a rate-quality CSV. The metric and label come from the arguments
/// when given, else from the sidecar if one exists, else default to
/// [`DEFAULT_QUALITY_METRIC`] and the file stem.
pub fn load_rate_quality_curve(
    path: &Path,
    quality_metric: Option<&str>,
    curve_label: Option<&str>,
) -> Result<RateQualityCurve> {
    let side = sidecar_path(path);
    let sidecar: Option<CurveSidecar> = if side.is_file() {
        Some(read_json(&side)?)
    } else {
        None
    };
    let metric = quality_metric
        .map(str::to_string)
        .or_else(|| sidecar.as_ref().map(|s| s.quality_metric.clone()))
        .unwrap_or_else(|| DEFAULT_QUALITY_METRIC.to_string());
    let label = curve_label
        .map(str::to_string)
        .or_else(|| sidecar.as_ref().map(|s| s.curve_label.clone()))
        .unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
    read_rate_quality_csv(fs::File::open(path)?, path, &metric, &label)
}

/// Operating points with header `rate,d_enh,d_base[,label]`.
pub fn read_operating_points<R: Read>(input: R, origin: &Path) -> Result<Vec<OperatingPoint>> {
    let mut r = csv_reader(input);
    check_header(origin, &mut r, &OPERATING_POINT_HEADER, 3)?;
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_error(origin, e))?;
        let line = i as u64 + 2;
        let point = OperatingPoint::new(
            number_field(origin, line, "rate", &rec[0])?,
            number_field(origin, line, "d_enh", &rec[1])?,
            number_field(origin, line, "d_base", &rec[2])?,
            rec.get(3).unwrap_or("").to_string(),
        )
        .map_err(|e| parse_error(origin, format!("line {line}: {e}")))?;
        points.push(point);
    }
    Ok(points)
}

pub fn load_operating_points(path: &Path) -> Result<Vec<OperatingPoint>> {
    read_operating_points(fs::File::open(path)?, path)
}

pub fn write_operating_points<W: Write>(points: &[OperatingPoint], output: W) -> Result<()> {
    let mut w = csv_writer(output);
    w.write_record(OPERATING_POINT_HEADER).map_err(csv_io)?;
    for p in points {
        w.write_record([
            p.rate.to_string(),
            p.d_enh.to_string(),
            p.d_base.to_string(),
            p.label.clone(),
        ])
        .map_err(csv_io)?;
    }
    finish(w)
}

/// Provenance record written beside the outputs of every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: SolverConfig,
    pub seed: u64,
    pub rng: String,
    pub tool_version: String,
    /// RFC 3339 timestamps.
    pub started: String,
    pub finished: String,
}
