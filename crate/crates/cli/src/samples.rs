//! Sample files: one point per CSV row, layout declared by the header.
//!
//! | header | meaning |
//! |--------|---------|
//! | `theta` | circle angle in radians, `[-pi, pi)` |
//! | `x` | real-line value, wrapped onto the circle before estimation |
//! | `lat,lon` | sphere point in degrees |
//! | `x,y,z` | sphere point as a unit vector |

use std::f64::consts::PI;
use std::io::{Read, Write};

use dkappa_core::basis::{lat_lon_from_unit, unit_from_lat_lon, Point};
use dkappa_core::heatkde::SampleSet;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Angle,
    Line,
    LatLon,
    Xyz,
}

impl Layout {
    fn from_header(fields: &[&str]) -> Option<Self> {
        match fields {
            ["theta"] => Some(Layout::Angle),
            ["x"] => Some(Layout::Line),
            ["lat", "lon"] => Some(Layout::LatLon),
            ["x", "y", "z"] => Some(Layout::Xyz),
            _ => None,
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            Layout::Angle => &["theta"],
            Layout::Line => &["x"],
            Layout::LatLon => &["lat", "lon"],
            Layout::Xyz => &["x", "y", "z"],
        }
    }
}

/// Contents of a sample file before any wrapping.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleData {
    Line(Vec<f64>),
    Points(SampleSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub layout: Layout,
    pub data: SampleData,
}

const UNIT_TOL: f64 = 1e-6;

pub fn read_samples(reader: impl Read, source: &str) -> Result<SampleFile, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let bad = |line: u64, msg: String| CliError::Samples {
        file: source.to_string(),
        line,
        msg,
    };
    let headers = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let layout = Layout::from_header(&names)
        .ok_or_else(|| bad(1, format!("unknown header {names:?}; expected theta, x, lat,lon or x,y,z")))?;
    let mut values: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(line, format!("non-numeric value in {:?}", rec.iter().collect::<Vec<_>>())))?;
        match layout {
            Layout::Angle if !(-PI..PI).contains(&row[0]) => {
                return Err(bad(line, format!("angle {} outside [-pi, pi)", row[0])))
            }
            Layout::LatLon if row[0].abs() > 90.0 => return Err(bad(line, format!("latitude {} beyond 90", row[0]))),
            Layout::Xyz => {
                let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (n - 1.0).abs() > UNIT_TOL {
                    return Err(bad(line, format!("vector norm {n} is not 1")));
                }
            }
            _ => {}
        }
        values.push(row);
    }
    if values.is_empty() {
        return Err(bad(1, "no samples".into()));
    }
    let label = source.to_string();
    let data = match layout {
        Layout::Line => SampleData::Line(values.into_iter().map(|r| r[0]).collect()),
        Layout::Angle => SampleData::Points(SampleSet::circle(values.into_iter().map(|r| r[0]).collect())?.with_label(label)),
        Layout::LatLon => SampleData::Points(
            SampleSet::sphere(values.into_iter().map(|r| unit_from_lat_lon(r[0], r[1])).collect())?.with_label(label),
        ),
        Layout::Xyz => SampleData::Points(
            SampleSet::sphere(
                values
                    .into_iter()
                    .map(|r| {
                        let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
                        [r[0] / n, r[1] / n, r[2] / n]
                    })
                    .collect(),
            )?
            .with_label(label),
        ),
    };
    Ok(SampleFile { layout, data })
}

pub fn read_samples_path(path: &std::path::Path) -> Result<SampleFile, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_samples(file, &path.display().to_string())
}

/// Writes a point set; sphere points use `layout` (`LatLon` or `Xyz`).
pub fn write_samples(set: &SampleSet, layout: Layout, writer: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(layout.header())?;
    for p in set.points() {
        let row: Vec<f64> = match (p, layout) {
            (Point::Angle(t), Layout::Angle) => vec![*t],
            (Point::Unit(x), Layout::LatLon) => {
                let (lat, lon) = lat_lon_from_unit(x);
                vec![lat, lon]
            }
            (Point::Unit(x), Layout::Xyz) => x.to_vec(),
            _ => return Err(CliError::Validation(format!("cannot write {:?} points as {layout:?}", set.domain()))),
        };
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(std::path::Path::new("<output>"), e))?;
    Ok(())
}
