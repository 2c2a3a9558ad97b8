//! Run traces and their JSONL / CSV forms.
//!
//! JSONL holds one [`StepRecord`] per line; wall time is left out so that
//! identical runs give byte-identical files. The epoch CSV shares the record
//! header `s,t,f,grad_norm_sq,v_norm_sq,psi_tilde,clip_active,evals`, with one
//! row per epoch: `t` is the number of inner steps, the float columns are
//! epoch means, `clip_active` counts clipped steps and `evals` is the
//! cumulative counter at the end of the epoch.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "s,t,f,grad_norm_sq,v_norm_sq,psi_tilde,clip_active,evals";

/// State at inner step `t` of epoch `s`: the iterate `w_t` and its direction `V_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub s: usize,
    pub t: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub v_norm_sq: f64,
    pub psi_tilde: f64,
    pub clip_active: bool,
    /// Component-gradient evaluations so far, including this step's.
    pub evals: u64,
    /// Seconds since the start of the run.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub s: usize,
    pub steps: usize,
    pub mean_f: f64,
    pub mean_grad_norm_sq: f64,
    pub mean_v_norm_sq: f64,
    pub mean_psi_tilde: f64,
    pub clipped: usize,
    pub evals: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputOption {
    /// Option 1: the final snapshot.
    LastIterate,
    /// Option 2: one of the `m S` inner iterates, uniformly.
    UniformRandom,
}

/// Which point was returned and its objective values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub option: OutputOption,
    /// Epoch and inner index of the returned point; `t = m` for the final snapshot.
    pub s: usize,
    pub t: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
    pub selection: Option<Selection>,
}

impl RunTrace {
    pub(crate) fn push(&mut self, r: StepRecord) {
        debug_assert!(self.records.last().is_none_or(|p| (p.s, p.t) < (r.s, r.t) && p.evals < r.evals));
        self.records.push(r);
    }

    pub(crate) fn close_epoch(&mut self, s: usize) {
        let rs: Vec<&StepRecord> = self.records.iter().filter(|r| r.s == s).collect();
        if rs.is_empty() {
            return;
        }
        let k = rs.len() as f64;
        let mean = |g: fn(&StepRecord) -> f64| rs.iter().map(|r| g(r)).sum::<f64>() / k;
        self.epochs.push(EpochSummary {
            s,
            steps: rs.len(),
            mean_f: mean(|r| r.f),
            mean_grad_norm_sq: mean(|r| r.grad_norm_sq),
            mean_v_norm_sq: mean(|r| r.v_norm_sq),
            mean_psi_tilde: mean(|r| r.psi_tilde),
            clipped: rs.iter().filter(|r| r.clip_active).count(),
            evals: rs.last().map_or(0, |r| r.evals),
        });
    }

    pub fn total_evals(&self) -> u64 {
        self.records.last().map_or(0, |r| r.evals)
    }

    /// Mean `|grad f|^2` over all recorded iterates, i.e. the expectation
    /// over the uniform output choice.
    pub fn mean_grad_norm_sq(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.records.iter().map(|r| r.grad_norm_sq).sum::<f64>() / self.records.len() as f64
    }

    /// Equality of everything except wall time.
    pub fn same_path(&self, other: &RunTrace) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.s == b.s
                    && a.t == b.t
                    && a.f.to_bits() == b.f.to_bits()
                    && a.grad_norm_sq.to_bits() == b.grad_norm_sq.to_bits()
                    && a.v_norm_sq.to_bits() == b.v_norm_sq.to_bits()
                    && a.psi_tilde.to_bits() == b.psi_tilde.to_bits()
                    && a.clip_active == b.clip_active
                    && a.evals == b.evals
            })
            && self.selection == other.selection
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(|e| Error::Parse(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_epochs_csv(&self, mut w: impl Write) -> Result<()> {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.s, e.steps, e.mean_f, e.mean_grad_norm_sq, e.mean_v_norm_sq, e.mean_psi_tilde, e.clipped, e.evals
            )
            .expect("writing to a String");
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_epochs_csv(r: impl BufRead) -> Result<Vec<EpochSummary>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected epoch CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", k + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad("column count"));
        }
        let float = |i: usize| cols[i].trim().parse::<f64>().map_err(|_| bad("number"));
        let int = |i: usize| cols[i].trim().parse::<u64>().map_err(|_| bad("integer"));
        out.push(EpochSummary {
            s: int(0)? as usize,
            steps: int(1)? as usize,
            mean_f: float(2)?,
            mean_grad_norm_sq: float(3)?,
            mean_v_norm_sq: float(4)?,
            mean_psi_tilde: float(5)?,
            clipped: int(6)? as usize,
            evals: int(7)?,
        });
    }
    Ok(out)
}
