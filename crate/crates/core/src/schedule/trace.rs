//! Iteration traces: which block completed at each `k` and how stale its read was.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One completed update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub block: usize,
    /// `j(k, b)` for every block `b`.
    pub delays: Vec<usize>,
    pub t_read: f64,
    pub t_complete: f64,
}

impl TraceRecord {
    /// The current delay `j(k) = max_b j(k, b)`.
    pub fn j_max(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }
}

/// Ordered update records produced by the simulator, by delay injection, or
/// measured on real threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub num_blocks: usize,
    pub records: Vec<TraceRecord>,
}

pub(crate) const TRACE_HEADER: [&str; 6] = ["k", "i_k", "j_max", "j_vec", "t_read", "t_complete"];

pub(crate) fn join_delays(d: &[usize]) -> String {
    let mut s = String::with_capacity(d.len() * 2);
    for (n, j) in d.iter().enumerate() {
        if n > 0 {
            s.push(';');
        }
        s.push_str(&j.to_string());
    }
    s
}

pub(crate) fn split_delays(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad j_vec entry {t:?}")))
        })
        .collect()
}

impl EventTrace {
    pub fn new(num_blocks: usize) -> Self {
        Self {
            num_blocks,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn blocks(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.block).collect()
    }

    pub fn current_delays(&self) -> Vec<usize> {
        self.records.iter().map(TraceRecord::j_max).collect()
    }

    pub fn max_delay(&self) -> usize {
        self.records.iter().map(TraceRecord::j_max).max().unwrap_or(0)
    }

    /// Prefix of the first `horizon` records.
    pub fn truncated(&self, horizon: usize) -> Self {
        Self {
            num_blocks: self.num_blocks,
            records: self.records[..horizon.min(self.len())].to_vec(),
        }
    }

    /// Checks `k = 0, 1, 2, …`, `0 ≤ j(k,b) ≤ k`, block indices in range and
    /// nondecreasing completion times.
    pub fn validate(&self) -> Result<()> {
        let mut last_t = f64::NEG_INFINITY;
        for (n, r) in self.records.iter().enumerate() {
            if r.k != n {
                return Err(Error::InvalidArgument(format!("record {n} has k = {}", r.k)));
            }
            if r.block >= self.num_blocks {
                return Err(Error::BlockOutOfRange {
                    index: r.block,
                    num_blocks: self.num_blocks,
                });
            }
            if r.delays.len() != self.num_blocks {
                return Err(Error::DimensionMismatch {
                    expected: self.num_blocks,
                    got: r.delays.len(),
                });
            }
            if let Some(&j) = r.delays.iter().find(|&&j| j > r.k) {
                return Err(Error::InvalidArgument(format!("j = {j} exceeds k = {} in record {n}", r.k)));
            }
            if r.t_complete < last_t {
                return Err(Error::InvalidArgument(format!("completion time decreases at k = {n}")));
            }
            last_t = r.t_complete;
        }
        Ok(())
    }

    /// CSV with header `k,i_k,j_max,j_vec,t_read,t_complete`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.block.to_string(),
                r.j_max().to_string(),
                join_delays(&r.delays),
                r.t_read.to_string(),
                r.t_complete.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, num_blocks: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().take(6).ne(TRACE_HEADER) {
            return Err(Error::InvalidArgument(format!("unexpected trace header {header:?}")));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or_default();
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad number {:?}", field(i))))
            };
            let int = |i: usize| -> Result<usize> {
                field(i)
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad integer {:?}", field(i))))
            };
            let delays = split_delays(field(3))?;
            let rec = TraceRecord {
                k: int(0)?,
                block: int(1)?,
                delays,
                t_read: num(4)?,
                t_complete: num(5)?,
            };
            if rec.j_max() != int(2)? {
                return Err(Error::InvalidArgument(format!("j_max column disagrees with j_vec at k = {}", rec.k)));
            }
            records.push(rec);
        }
        let t = Self { num_blocks, records };
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventTrace {
        EventTrace {
            num_blocks: 2,
            records: vec![
                TraceRecord {
                    k: 0,
                    block: 1,
                    delays: vec![0, 0],
                    t_read: 0.0,
                    t_complete: 1.5,
                },
                TraceRecord {
                    k: 1,
                    block: 0,
                    delays: vec![1, 0],
                    t_read: 0.25,
                    t_complete: 2.0,
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,i_k,j_max,j_vec,t_read,t_complete\n0,1,0,0;0,0,1.5\n"));
        let back = EventTrace::read_csv(buf.as_slice(), 2).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn validation_catches_bad_traces() {
        let mut t = sample();
        t.records[1].delays[0] = 2;
        assert!(t.validate().is_err());
        let mut t = sample();
        t.records[1].t_complete = 1.0;
        assert!(t.validate().is_err());
        let mut t = sample();
        t.records[1].k = 5;
        assert!(t.validate().is_err());
    }
}
