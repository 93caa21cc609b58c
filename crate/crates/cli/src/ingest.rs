//! Track CSV reading and writing.
//!
//! Format: header `path_id,t,x,y`, one observation per row, `#` comment
//! lines allowed anywhere. Values are written with 17 significant digits so
//! a write/read cycle is lossless.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use diffmig_core::{TrackObservation, TrackSeries};

use crate::error::{io_err, CliError, CliResult};

pub const HEADER: [&str; 4] = ["path_id", "t", "x", "y"];

/// Kilometres per degree of latitude (and of longitude at the equator).
pub const KM_PER_DEGREE: f64 = 111.32;

/// Planar offset and optional lon/lat projection applied while reading.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IngestOptions {
    pub project_lonlat: bool,
    /// Subtracted after projection so the domain's lower corner is the origin.
    pub offset: (f64, f64),
}

fn parse_field(value: &str, source: &str, line: u64, name: &str) -> CliResult<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Data(format!("{source}: line {line}: cannot parse {name}")))
}

/// Reads tracks from any reader. `source` prefixes error messages.
pub fn parse_tracks<R: Read>(reader: R, source: &str, opts: &IngestOptions) -> CliResult<Vec<TrackSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{source}: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(CliError::Data(format!(
            "{source}: line 1: expected header {}",
            HEADER.join(",")
        )));
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, f64, f64, u64)>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Data(format!("{source}: line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record[0].to_owned();
        if id.is_empty() {
            return Err(CliError::Data(format!("{source}: line {line}: empty path_id")));
        }
        let parse = |k: usize| parse_field(&record[k], source, line, HEADER[k]);
        let (t, x, y) = (parse(1)?, parse(2)?, parse(3)?);
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((t, x, y, line));
    }

    let scale_x = if opts.project_lonlat {
        let all: Vec<f64> = rows.values().flatten().map(|r| r.2).collect();
        let mean_lat = all.iter().sum::<f64>() / all.len().max(1) as f64;
        mean_lat.to_radians().cos() * KM_PER_DEGREE
    } else {
        1.0
    };
    let scale_y = if opts.project_lonlat { KM_PER_DEGREE } else { 1.0 };

    let mut tracks = Vec::new();
    for id in order {
        let mut r = rows.remove(&id).unwrap_or_default();
        r.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = r.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(CliError::Data(format!(
                "{source}: line {}: duplicate time {} for path {id}",
                w[1].3, w[1].0
            )));
        }
        if r.len() < 2 {
            log::warn!("{source}: path {id} has fewer than 2 rows; skipped");
            continue;
        }
        let obs = r
            .into_iter()
            .map(|(t, x, y, _)| {
                TrackObservation::new(id.clone(), t, x * scale_x - opts.offset.0, y * scale_y - opts.offset.1)
            })
            .collect();
        tracks.push(TrackSeries::new(id.clone(), obs)?);
    }
    Ok(tracks)
}

pub fn read_tracks(path: &Path, opts: &IngestOptions) -> CliResult<Vec<TrackSeries>> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_tracks(file, &path.display().to_string(), opts)
}

/// Writes tracks in the ingestion format, preceded by `# ` comment lines.
pub fn write_tracks<W: Write>(out: W, tracks: &[TrackSeries], comments: &[String]) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    writeln!(out, "{}", HEADER.join(","))?;
    for tr in tracks {
        for o in tr.observations() {
            writeln!(out, "{},{:.16e},{:.16e},{:.16e}", o.path_id, o.t, o.x, o.y)?;
        }
    }
    out.flush()
}

pub fn write_tracks_file(path: &Path, tracks: &[TrackSeries], comments: &[String]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_tracks(file, tracks, comments).map_err(|e| io_err(path, e))
}
