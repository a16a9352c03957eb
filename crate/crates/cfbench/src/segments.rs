//! Segment dataset file: one row per sample, tagged with segment id and split.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use cfbench_core::dataio::{DatasetSplit, Sample, TrajectorySegment};

use crate::error::{Error, Result};

const HEADER: [&str; 9] = ["segment_id", "split", "t", "x_l", "v_l", "a_l", "x_f", "v_f", "a_f"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [SplitName::Train, SplitName::Validation, SplitName::Test]
            .into_iter()
            .find(|n| n.as_str() == s)
    }
}

pub fn write_dataset(path: &Path, split: &DatasetSplit) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", HEADER.join(",")).map_err(io)?;
    for (name, segs) in [
        (SplitName::Train, &split.train),
        (SplitName::Validation, &split.validation),
        (SplitName::Test, &split.test),
    ] {
        for seg in segs {
            for s in &seg.samples {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    seg.id,
                    name.as_str(),
                    s.t,
                    s.x_l,
                    s.v_l,
                    s.a_l,
                    s.x_f,
                    s.v_f,
                    s.a_f
                )
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<DatasetSplit> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    for h in HEADER {
        if !headers.iter().any(|x| x == h) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                column: h.to_string(),
            });
        }
    }
    let idx: Vec<usize> = HEADER.iter().map(|h| headers.iter().position(|x| x == *h).unwrap()).collect();
    let mut out = DatasetSplit::default();
    let mut current: Option<(String, SplitName, Vec<Sample>)> = None;
    let flush = |cur: Option<(String, SplitName, Vec<Sample>)>, out: &mut DatasetSplit| {
        if let Some((id, split, samples)) = cur {
            let seg = TrajectorySegment::new(id, samples);
            match split {
                SplitName::Train => out.train.push(seg),
                SplitName::Validation => out.validation.push(seg),
                SplitName::Test => out.test.push(seg),
            }
        }
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |m: String| Error::format(path, format!("row {}: {m}", line + 2));
        let id = rec.get(idx[0]).unwrap_or_default().to_string();
        let split_s = rec.get(idx[1]).unwrap_or_default();
        let split = SplitName::parse(split_s).ok_or_else(|| bad(format!("unknown split `{split_s}`")))?;
        let mut v = [0.0f64; 7];
        for (k, slot) in v.iter_mut().enumerate() {
            let s = rec.get(idx[k + 2]).unwrap_or_default();
            *slot = s
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("invalid {} value `{s}`", HEADER[k + 2])))?;
        }
        let sample = Sample {
            t: v[0],
            x_l: v[1],
            v_l: v[2],
            a_l: v[3],
            x_f: v[4],
            v_f: v[5],
            a_f: v[6],
        };
        match &mut current {
            Some((cid, csplit, samples)) if *cid == id => {
                if *csplit != split {
                    return Err(bad(format!("segment `{id}` spans two splits")));
                }
                samples.push(sample);
            }
            _ => {
                flush(current.take(), &mut out);
                current = Some((id, split, vec![sample]));
            }
        }
    }
    flush(current, &mut out);
    if out.train.is_empty() && out.validation.is_empty() && out.test.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: &str, t0: f64, n: usize) -> TrajectorySegment {
        let samples = (0..n)
            .map(|k| {
                let t = t0 + k as f64;
                Sample {
                    t,
                    x_l: 30.0 + 5.0 * t + 0.1,
                    v_l: 5.0,
                    a_l: 0.0,
                    x_f: 5.0 * t / 3.0,
                    v_f: 5.0 / 3.0,
                    a_f: -1e-17,
                }
            })
            .collect();
        TrajectorySegment::new(id, samples)
    }

    #[test]
    fn dataset_round_trips_bit_exactly() {
        let d = tempfile::tempdir().unwrap();
        let split = DatasetSplit {
            train: vec![seg("seg-0000", 0.0, 5), seg("seg-0002", 20.0, 3)],
            validation: vec![seg("seg-0001", 10.0, 4)],
            test: vec![seg("seg-0003", 30.0, 6)],
        };
        let p = d.path().join("segments.csv");
        write_dataset(&p, &split).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), split);
    }

    #[test]
    fn bad_split_name_is_reported() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("s.csv");
        std::fs::write(&p, "segment_id,split,t,x_l,v_l,a_l,x_f,v_f,a_f\na,holdout,0,1,1,0,0,1,0\n").unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format { .. })));
    }
}
