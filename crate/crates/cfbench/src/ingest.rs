//! Raw trajectory files: delimited text with a header row.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use cfbench_core::dataio::RawObservation;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header names of the trajectory columns. Speed columns are optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub t: String,
    pub x_leader: String,
    pub x_follower: String,
    pub v_leader: Option<String>,
    pub v_follower: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            t: "t".into(),
            x_leader: "x_leader".into(),
            x_follower: "x_follower".into(),
            v_leader: None,
            v_follower: None,
        }
    }
}

impl ColumnMapping {
    /// Parses `key=column` pairs separated by commas, e.g.
    /// `t=time,x_leader=lead_pos`.
    pub fn parse_overrides(&mut self, spec: &str) -> Result<()> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("column mapping `{part}` is not key=column")))?;
            let v = v.trim().to_string();
            match k.trim() {
                "t" => self.t = v,
                "x_leader" => self.x_leader = v,
                "x_follower" => self.x_follower = v,
                "v_leader" => self.v_leader = Some(v),
                "v_follower" => self.v_follower = Some(v),
                other => return Err(Error::Config(format!("unknown column key `{other}`"))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReadStats {
    pub rows: usize,
    /// Rows with an empty or non-numeric / non-finite value.
    pub dropped_invalid: usize,
    /// Rows whose timestamp does not exceed the previous kept row.
    pub dropped_non_monotone: usize,
}

pub fn read_observations(path: &Path, mapping: &ColumnMapping, delimiter: u8) -> Result<(Vec<RawObservation>, ReadStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let it = col(&mapping.t)?;
    let ixl = col(&mapping.x_leader)?;
    let ixf = col(&mapping.x_follower)?;
    let ivl = mapping.v_leader.as_deref().map(col).transpose()?;
    let ivf = mapping.v_follower.as_deref().map(col).transpose()?;

    let mut out = Vec::new();
    let mut stats = ReadStats::default();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        stats.rows += 1;
        let num = |i: usize| -> Option<f64> { rec.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()) };
        let (Some(t), Some(xl), Some(xf)) = (num(it), num(ixl), num(ixf)) else {
            stats.dropped_invalid += 1;
            continue;
        };
        let vl = match ivl {
            Some(i) => match num(i) {
                Some(v) => Some(v),
                None => {
                    stats.dropped_invalid += 1;
                    continue;
                }
            },
            None => None,
        };
        let vf = match ivf {
            Some(i) => match num(i) {
                Some(v) => Some(v),
                None => {
                    stats.dropped_invalid += 1;
                    continue;
                }
            },
            None => None,
        };
        if out.last().is_some_and(|p: &RawObservation| t <= p.t) {
            stats.dropped_non_monotone += 1;
            continue;
        }
        out.push(RawObservation {
            t,
            x_leader: xl,
            x_follower: xf,
            v_leader: vl,
            v_follower: vf,
        });
    }
    if stats.rows == 0 {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok((out, stats))
}

/// Writes `t,x_leader,x_follower` rows (the default mapping).
pub fn write_observations(path: &Path, obs: &[RawObservation]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("t,x_leader,x_follower\n");
    for o in obs {
        body.push_str(&format!("{},{},{}\n", o.t, o.x_leader, o.x_follower));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}
