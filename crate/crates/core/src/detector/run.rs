use std::io::{self, Write};

use crate::error::Result;
use crate::scalar::Scalar;

/// Anything that consumes a stream one sample at a time.
pub trait StreamMonitor<F> {
    fn observe(&mut self, x: &[F]) -> Result<Observation>;
}

/// What a monitor reports after one sample. Batch monitors only carry a
/// statistic on the last sample of each batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: u64,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub detected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub statistic: f64,
    pub threshold: f64,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub detected: bool,
    /// First `t` with `T_t > h_t`, in samples.
    pub t_star: Option<u64>,
    /// Samples consumed.
    pub samples: u64,
    pub trace: Option<Vec<TraceRow>>,
}

/// Feed `stream` to `monitor` until it detects or the stream ends.
pub fn run_stream<F, M, I, X>(monitor: &mut M, stream: I, capture_trace: bool) -> Result<RunOutcome>
where
    F: Scalar,
    M: StreamMonitor<F> + ?Sized,
    I: IntoIterator<Item = X>,
    X: AsRef<[F]>,
{
    let mut trace = capture_trace.then(Vec::new);
    let mut samples = 0;
    for x in stream {
        let obs = monitor.observe(x.as_ref())?;
        samples += 1;
        if let (Some(rows), Some(statistic)) = (trace.as_mut(), obs.statistic) {
            rows.push(TraceRow {
                t: obs.t,
                statistic,
                threshold: obs.threshold.unwrap_or(f64::NAN),
                detected: obs.detected,
            });
        }
        if obs.detected {
            return Ok(RunOutcome {
                detected: true,
                t_star: Some(obs.t),
                samples,
                trace,
            });
        }
    }
    Ok(RunOutcome {
        detected: false,
        t_star: None,
        samples,
        trace,
    })
}

/// Delimited trace: a `t,statistic,threshold,detected` header, then one row
/// per evaluated statistic.
pub fn write_trace<W: Write>(rows: &[TraceRow], mut out: W) -> io::Result<()> {
    writeln!(out, "t,statistic,threshold,detected")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.t, r.statistic, r.threshold, u8::from(r.detected))?;
    }
    Ok(())
}
