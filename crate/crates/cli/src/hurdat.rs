//! HURDAT2 best-track files.
//!
//! Each storm is a header line `AL092011,              IRENE,     39,`
//! followed by exactly that many fix lines:
//!
//! ```text
//! 20110821, 0000,  , TS, 15.0N,  59.0W,  45, 1006,  100,   50, ...
//! ```
//!
//! Only date, time, record identifier, status, position and maximum wind are
//! kept. Pressure and wind radii are written back as missing (`-999`).

use std::fmt::Write as _;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use dkappa_core::basis::{lat_lon_from_unit, unit_from_lat_lon};
use dkappa_core::heatkde::SampleSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    pub time: NaiveDateTime,
    /// Record identifier (`L` landfall, `I` intensity peak, ...), if any.
    pub record: Option<char>,
    /// System status such as `HU`, `TS`, `EX`.
    pub status: String,
    pub lat: f64,
    /// Degrees east in `(-180, 180]`.
    pub lon: f64,
    /// Maximum sustained wind in knots; `None` when recorded as `-99`.
    pub wind: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StormTrack {
    pub id: String,
    pub name: String,
    pub fixes: Vec<Fix>,
}

impl StormTrack {
    pub fn year(&self) -> Option<i32> {
        self.id.get(4..8).and_then(|y| y.parse().ok())
    }

    pub fn duration_hours(&self) -> f64 {
        match (self.fixes.first(), self.fixes.last()) {
            (Some(a), Some(b)) => hours_between(a.time, b.time),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HurdatErrorKind {
    #[error("malformed storm header: {0}")]
    MalformedHeader(String),
    #[error("header declares {declared} fixes, found {found}")]
    FixCountMismatch { declared: usize, found: usize },
    #[error("unparseable {field} field {value:?}")]
    BadCoordinate { field: &'static str, value: String },
    #[error("malformed fix line: {0}")]
    MalformedFix(String),
    #[error("fix is not later than the previous one")]
    OutOfOrder,
    #[error("fix line before any storm header")]
    OrphanFix,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct HurdatError {
    /// 1-based line number in the input.
    pub line: usize,
    pub kind: HurdatErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Abort on the first error.
    Strict,
    /// Skip storms with errors and report them.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseReport {
    pub tracks: Vec<StormTrack>,
    /// Errors of skipped storms (lenient mode only).
    pub skipped: Vec<HurdatError>,
}

struct Block<'a> {
    header_line: usize,
    header: &'a str,
    fixes: Vec<(usize, &'a str)>,
}

fn is_header(line: &str) -> bool {
    let id = line.split(',').next().unwrap_or("").trim();
    id.len() == 8 && id[..2].bytes().all(|b| b.is_ascii_alphabetic()) && id[2..].bytes().all(|b| b.is_ascii_digit())
}

pub fn parse_hurdat2(text: &str, mode: ParseMode) -> Result<ParseReport, HurdatError> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut orphans = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        // anything that does not start with a date is treated as a header
        let starts_with_date = line.len() >= 8 && line.as_bytes()[..8].iter().all(u8::is_ascii_digit);
        if starts_with_date {
            match blocks.last_mut() {
                Some(b) => b.fixes.push((i + 1, line)),
                None => orphans.push(i + 1),
            }
        } else {
            blocks.push(Block {
                header_line: i + 1,
                header: line,
                fixes: Vec::new(),
            });
        }
    }
    let mut report = ParseReport::default();
    if let Some(&line) = orphans.first() {
        let err = HurdatError {
            line,
            kind: HurdatErrorKind::OrphanFix,
        };
        if mode == ParseMode::Strict {
            return Err(err);
        }
        report.skipped.push(err);
    }
    for block in blocks {
        match parse_block(&block) {
            Ok(t) => report.tracks.push(t),
            Err(e) if mode == ParseMode::Strict => return Err(e),
            Err(e) => report.skipped.push(e),
        }
    }
    Ok(report)
}

fn parse_block(block: &Block) -> Result<StormTrack, HurdatError> {
    let header_err = |msg: &str| HurdatError {
        line: block.header_line,
        kind: HurdatErrorKind::MalformedHeader(msg.to_string()),
    };
    if !is_header(block.header) {
        return Err(header_err("expected a basin+number+year id such as AL092011"));
    }
    let fields: Vec<&str> = block.header.split(',').map(str::trim).collect();
    if fields.len() < 3 {
        return Err(header_err("expected id, name and fix count"));
    }
    let declared: usize = fields[2].parse().map_err(|_| header_err("fix count is not a number"))?;
    if declared != block.fixes.len() {
        return Err(HurdatError {
            line: block.header_line,
            kind: HurdatErrorKind::FixCountMismatch {
                declared,
                found: block.fixes.len(),
            },
        });
    }
    let mut fixes: Vec<Fix> = Vec::with_capacity(declared);
    for &(line, text) in &block.fixes {
        let fix = parse_fix(text).map_err(|kind| HurdatError { line, kind })?;
        if fixes.last().is_some_and(|prev| prev.time >= fix.time) {
            return Err(HurdatError {
                line,
                kind: HurdatErrorKind::OutOfOrder,
            });
        }
        fixes.push(fix);
    }
    Ok(StormTrack {
        id: fields[0].to_string(),
        name: fields[1].to_string(),
        fixes,
    })
}

fn parse_fix(line: &str) -> Result<Fix, HurdatErrorKind> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() < 7 {
        return Err(HurdatErrorKind::MalformedFix(format!("{} fields, need at least 7", f.len())));
    }
    let bad = |what: &str| HurdatErrorKind::MalformedFix(what.to_string());
    let date = NaiveDate::parse_from_str(f[0].trim(), "%Y%m%d").map_err(|_| bad("bad date"))?;
    let hhmm = f[1].trim();
    if hhmm.len() != 4 {
        return Err(bad("bad time"));
    }
    let hour: u32 = hhmm[..2].parse().map_err(|_| bad("bad time"))?;
    let minute: u32 = hhmm[2..].parse().map_err(|_| bad("bad time"))?;
    let time = date.and_hms_opt(hour, minute, 0).ok_or_else(|| bad("bad time"))?;
    let record = match f[2].trim() {
        "" => None,
        r if r.len() == 1 => r.chars().next(),
        _ => return Err(bad("record identifier longer than one character")),
    };
    let status = f[3].trim().to_string();
    let lat = parse_coordinate(f[4], 'N', 'S', 90.0).ok_or_else(|| HurdatErrorKind::BadCoordinate {
        field: "latitude",
        value: f[4].trim().to_string(),
    })?;
    let lon = parse_coordinate(f[5], 'E', 'W', 360.0).ok_or_else(|| HurdatErrorKind::BadCoordinate {
        field: "longitude",
        value: f[5].trim().to_string(),
    })?;
    let wind = match f[6].trim().parse::<i32>() {
        Ok(w) if w < 0 => None,
        Ok(w) => Some(w as u32),
        Err(_) => return Err(bad("bad maximum wind")),
    };
    Ok(Fix {
        time,
        record,
        status,
        lat,
        lon: normalize_lon(lon),
        wind,
    })
}

/// `"28.0N"` -> `28.0`, `"94.8W"` -> `-94.8`.
fn parse_coordinate(field: &str, pos: char, neg: char, limit: f64) -> Option<f64> {
    let s = field.trim();
    let hemi = s.chars().last()?;
    let value: f64 = s[..s.len() - hemi.len_utf8()].parse().ok()?;
    if !(value.is_finite() && (0.0..=limit).contains(&value)) {
        return None;
    }
    match hemi {
        h if h == pos => Some(value),
        h if h == neg => Some(-value),
        _ => None,
    }
}

/// Maps any longitude onto `(-180, 180]`.
pub fn normalize_lon(lon: f64) -> f64 {
    if lon > -180.0 && lon <= 180.0 {
        return lon;
    }
    let r = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if r <= -180.0 {
        r + 360.0
    } else {
        r
    }
}

fn format_coordinate(value: f64, pos: char, neg: char) -> String {
    // positions are stored to 0.1 degree; -0.0 prints as 0.0N/E
    let hemi = if value < 0.0 { neg } else { pos };
    format!("{:.1}{hemi}", value.abs())
}

/// Writes tracks in HURDAT2 layout; parses back to the same tracks.
pub fn serialize_hurdat2(tracks: &[StormTrack]) -> String {
    let mut out = String::new();
    for t in tracks {
        let _ = writeln!(out, "{:<8},{:>19},{:>7},", t.id, t.name, t.fixes.len());
        for f in &t.fixes {
            let wind = f.wind.map_or(-99, |w| w as i64);
            let _ = write!(
                out,
                "{}, {:02}{:02}, {}, {:>2}, {:>5}, {:>6}, {:>3}, {:>4},",
                f.time.format("%Y%m%d"),
                f.time.hour(),
                f.time.minute(),
                f.record.unwrap_or(' '),
                f.status,
                format_coordinate(f.lat, 'N', 'S'),
                format_coordinate(f.lon, 'E', 'W'),
                wind,
                -999,
            );
            for _ in 0..13 {
                out.push_str(" -999,");
            }
            out.push('\n');
        }
    }
    out
}

fn hours_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    (b - a).num_seconds() as f64 / 3600.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "stage")]
pub enum Stage {
    Start,
    AfterHours { hours: f64 },
    End,
}

impl Stage {
    pub fn name(&self) -> String {
        match self {
            Stage::Start => "start".into(),
            Stage::AfterHours { hours } => format!("after_{hours}h"),
            Stage::End => "end".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExclusionReport {
    pub used: usize,
    /// Ids of tracks that ended before the requested time.
    pub too_short: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("no tracks given")]
    NoTracks,
    #[error("no track lasts long enough for stage {0}")]
    AllExcluded(String),
    #[error("track {0} has no fixes")]
    EmptyTrack(String),
    #[error("{0}")]
    Core(#[from] dkappa_core::Error),
}

/// Spherical linear interpolation between two unit vectors.
fn slerp(a: &[f64; 3], b: &[f64; 3], s: f64) -> [f64; 3] {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    let (wa, wb) = if omega < 1e-12 {
        (1.0 - s, s)
    } else {
        let so = omega.sin();
        (((1.0 - s) * omega).sin() / so, (s * omega).sin() / so)
    };
    let v = [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Position of a track at `stage` as a unit vector; `None` if the track is too short.
pub fn stage_position(track: &StormTrack, stage: Stage) -> Result<Option<[f64; 3]>, SelectionError> {
    let first = track.fixes.first().ok_or_else(|| SelectionError::EmptyTrack(track.id.clone()))?;
    let last = track.fixes.last().expect("nonempty");
    let unit = |f: &Fix| unit_from_lat_lon(f.lat, f.lon);
    Ok(match stage {
        Stage::Start => Some(unit(first)),
        Stage::End => Some(unit(last)),
        Stage::AfterHours { hours } => {
            let target = first.time + Duration::milliseconds((hours * 3.6e6).round() as i64);
            if target > last.time {
                return Ok(None);
            }
            let k = track.fixes.partition_point(|f| f.time < target);
            let hi = &track.fixes[k];
            if hi.time == target || k == 0 {
                Some(unit(hi))
            } else {
                let lo = &track.fixes[k - 1];
                let s = hours_between(lo.time, target) / hours_between(lo.time, hi.time);
                Some(slerp(&unit(lo), &unit(hi), s))
            }
        }
    })
}

/// One sphere sample per track at the given stage.
pub fn tracks_to_samples(tracks: &[StormTrack], stage: Stage) -> Result<(SampleSet, ExclusionReport), SelectionError> {
    if tracks.is_empty() {
        return Err(SelectionError::NoTracks);
    }
    let mut points = Vec::new();
    let mut report = ExclusionReport::default();
    for t in tracks {
        match stage_position(t, stage)? {
            Some(p) => points.push(p),
            None => report.too_short.push(t.id.clone()),
        }
    }
    report.used = points.len();
    if points.is_empty() {
        return Err(SelectionError::AllExcluded(stage.name()));
    }
    Ok((SampleSet::sphere(points)?.with_label(stage.name()), report))
}

/// Track filter on the first fix and the season year.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFilter {
    /// Inclusive latitude bounds of the first fix.
    pub lat: Option<[f64; 2]>,
    /// Inclusive longitude bounds of the first fix; `lo > hi` wraps across 180.
    pub lon: Option<[f64; 2]>,
    /// Inclusive season-year bounds.
    pub years: Option<[i32; 2]>,
}

impl TrackFilter {
    pub fn accepts(&self, track: &StormTrack) -> bool {
        let Some(first) = track.fixes.first() else {
            return false;
        };
        if let Some([lo, hi]) = self.lat {
            if !(lo..=hi).contains(&first.lat) {
                return false;
            }
        }
        if let Some([lo, hi]) = self.lon {
            let inside = if lo <= hi {
                (lo..=hi).contains(&first.lon)
            } else {
                first.lon >= lo || first.lon <= hi
            };
            if !inside {
                return false;
            }
        }
        if let Some([lo, hi]) = self.years {
            let year = track.year().unwrap_or_else(|| first.time.year());
            if !(lo..=hi).contains(&year) {
                return false;
            }
        }
        true
    }
}

/// Latitude/longitude of a stage position, for reporting.
pub fn position_lat_lon(p: &[f64; 3]) -> (f64, f64) {
    lat_lon_from_unit(p)
}
