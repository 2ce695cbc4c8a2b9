use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 5] = ["index", "amplitude_V", "width_s", "resistance_ohm", "energy_J"];

/// One read after a stimulus. Index 0 of a trace is the baseline read
/// before the first pulse, with zero amplitude and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub index: usize,
    pub amplitude: f64,
    pub width: f64,
    pub resistance: f64,
    /// Programming energy accumulated up to and including this pulse.
    pub energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentTrace {
    pub records: Vec<TraceRecord>,
}

/// Scientific notation with 17 significant digits.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

impl ExperimentTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resistances(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.resistance).collect()
    }

    fn run_from(&self, start: usize, increasing: bool) -> ExperimentTrace {
        let mut records = vec![self.records[start]];
        for r in &self.records[start + 1..] {
            let prev = records.last().unwrap().amplitude;
            let keep = if increasing { r.amplitude > prev } else { r.amplitude < prev };
            if !keep {
                break;
            }
            records.push(*r);
        }
        ExperimentTrace { records }
    }

    /// Leading switching branch of one polarity: the monotone amplitude ramp
    /// starting from the record just before the first pulse of that sign.
    pub fn branch(&self, positive: bool) -> Option<ExperimentTrace> {
        let first = self
            .records
            .iter()
            .position(|r| if positive { r.amplitude > 0.0 } else { r.amplitude < 0.0 })?;
        let start = first.saturating_sub(1);
        Some(self.run_from(start, positive))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.index.to_string(),
                fmt_sig17(r.amplitude),
                fmt_sig17(r.width),
                fmt_sig17(r.resistance),
                fmt_sig17(r.energy),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.iter().ne(TRACE_HEADER) {
            return Err(Error::Parse { path: "<trace>".into(), line: 1, message: format!("unexpected header {headers:?}") });
        }
        let mut records = Vec::new();
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let bad = |what: &str| Error::Parse { path: "<trace>".into(), line: line + 2, message: format!("bad {what}") };
            let num = |k: usize| row[k].parse::<f64>().map_err(|_| bad(TRACE_HEADER[k]));
            records.push(TraceRecord {
                index: row[0].parse().map_err(|_| bad("index"))?,
                amplitude: num(1)?,
                width: num(2)?,
                resistance: num(3)?,
                energy: num(4)?,
            });
        }
        Ok(Self { records })
    }
}
