//! JSONL trace emission: a header record carrying the configuration and
//! seeds, then one record per sample.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::json;

use super::{PairSample, TraceSample};

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new<C: Serialize>(mut out: W, config: &C) -> io::Result<Self> {
        let header = json!({ "type": "header", "config": config });
        writeln!(out, "{header}")?;
        Ok(Self { out })
    }

    pub fn single(&mut self, s: &TraceSample) -> io::Result<()> {
        let rec = json!({
            "t": s.t,
            "x": [s.position.x, s.position.y, s.position.z],
            "l": s.local_time,
        });
        writeln!(self.out, "{rec}")
    }

    pub fn pair(&mut self, s: &PairSample) -> io::Result<()> {
        let rec = json!({
            "t": s.t,
            "x": [s.x.x, s.x.y, s.x.z],
            "l": s.lx,
            "y": [s.y.x, s.y.y, s.y.z],
            "ly": s.ly,
        });
        writeln!(self.out, "{rec}")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
