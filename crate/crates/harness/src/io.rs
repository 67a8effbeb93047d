//! Reading and writing datasets and correspondences.
//!
//! Formats:
//! - regression data: CSV, one datum per line, `x_1, ..., x_d, y`;
//! - two-view matches: CSV with four columns `u_x, u_y, v_x, v_y`;
//! - tracks: JSON `{"observations": [{"x": [..2], "camera": [[..4] x3]}]}`.
//!
//! Blank lines and lines starting with `#` are skipped in CSV input.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use maxcon::reformulate::{CorrespondenceSet, PointMatch, TrackObservation};
use maxcon::RegressionDataset;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrespondenceFormat {
    Matches,
    Track,
}

#[derive(Serialize, Deserialize)]
struct TrackFile {
    observations: Vec<TrackObservation>,
}

fn numeric_rows(text: &str, arity: Option<usize>) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut width = arity;
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                let x: f64 = f
                    .parse()
                    .map_err(|_| anyhow!("line {line_no}: cannot parse `{f}` as a number"))?;
                if !x.is_finite() {
                    bail!("line {line_no}: non-finite value `{f}`");
                }
                Ok(x)
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            Some(w) if w != values.len() => {
                bail!("line {line_no}: expected {w} columns, found {}", values.len())
            }
            None => width = Some(values.len()),
            _ => {}
        }
        rows.push((line_no, values));
    }
    if rows.is_empty() {
        bail!("no data rows");
    }
    Ok(rows)
}

pub fn parse_matches(text: &str) -> Result<Vec<PointMatch>> {
    Ok(numeric_rows(text, Some(4))?
        .into_iter()
        .map(|(_, r)| PointMatch {
            u: [r[0], r[1]],
            v: [r[2], r[3]],
        })
        .collect())
}

pub fn parse_track(text: &str) -> Result<Vec<TrackObservation>> {
    let file: TrackFile = serde_json::from_str(text)
        .map_err(|e| anyhow!("line {}: {e}", e.line()))?;
    if file.observations.is_empty() {
        bail!("track has no observations");
    }
    for (k, o) in file.observations.iter().enumerate() {
        let finite = o.x.iter().chain(o.camera.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            bail!("observation {k}: non-finite value");
        }
    }
    Ok(file.observations)
}

pub fn parse_regression(text: &str) -> Result<RegressionDataset> {
    let rows = numeric_rows(text, None)?;
    let width = rows[0].1.len();
    if width < 2 {
        bail!("line {}: need at least one regressor and a target", rows[0].0);
    }
    let d = width - 1;
    let mut xs = Vec::with_capacity(rows.len() * d);
    let mut ys = Vec::with_capacity(rows.len());
    for (_, r) in rows {
        xs.extend_from_slice(&r[..d]);
        ys.push(r[d]);
    }
    Ok(RegressionDataset::from_rows(d, xs, ys)?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_correspondences(path: &Path, format: CorrespondenceFormat) -> Result<CorrespondenceSet> {
    let text = read(path)?;
    let set = match format {
        CorrespondenceFormat::Matches => CorrespondenceSet::Matches(parse_matches(&text)?),
        CorrespondenceFormat::Track => CorrespondenceSet::Track(parse_track(&text)?),
    };
    Ok(set)
}

pub fn load_regression(path: &Path) -> Result<RegressionDataset> {
    parse_regression(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_regression(out: &mut dyn Write, data: &RegressionDataset) -> Result<()> {
    for j in 0..data.len() {
        let mut fields: Vec<String> = data.x(j).iter().map(|v| v.to_string()).collect();
        fields.push(data.y(j).to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn write_matches(out: &mut dyn Write, matches: &[PointMatch]) -> Result<()> {
    for m in matches {
        writeln!(out, "{},{},{},{}", m.u[0], m.u[1], m.v[0], m.v[1])?;
    }
    Ok(())
}

pub fn write_track(out: &mut dyn Write, observations: &[TrackObservation]) -> Result<()> {
    let file = TrackFile {
        observations: observations.to_vec(),
    };
    serde_json::to_writer_pretty(&mut *out, &file)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_parse_and_reject() {
        let m = parse_matches("# header\n1,2,3,4\n\n5, 6, 7, 8\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].v, [7.0, 8.0]);
        let err = parse_matches("1,2,3,4\n1,2,3\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_matches("1,2,x,4\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(parse_matches("").is_err());
        assert!(parse_matches("1,2,NaN,4\n").is_err());
    }

    #[test]
    fn regression_round_trip() {
        let data = RegressionDataset::from_rows(2, vec![0.1, 1.0, -0.3, 1.0], vec![2.5, -1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_regression(&mut buf, &data).unwrap();
        let back = parse_regression(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn track_round_trip() {
        let obs = vec![TrackObservation {
            x: [1.0, 2.0],
            camera: [[1.0, 0.0, 0.0, 0.5], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 4.0]],
        }];
        let mut buf = Vec::new();
        write_track(&mut buf, &obs).unwrap();
        assert_eq!(parse_track(std::str::from_utf8(&buf).unwrap()).unwrap(), obs);
        assert!(parse_track("{\"observations\": []}").is_err());
        let err = parse_track("{\n\"observations\": [\n{\"x\": [1]}]}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
