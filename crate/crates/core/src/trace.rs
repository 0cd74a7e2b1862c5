//! Time-indexed episode records and their CSV form.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Estimate;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Start,
    PassThrough,
    FallbackEngaged,
    Halted,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Start => "start",
            Action::PassThrough => "pass-through",
            Action::FallbackEngaged => "fallback-engaged",
            Action::Halted => "halted",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Some(match s {
            "start" => Action::Start,
            "pass-through" => Action::PassThrough,
            "fallback-engaged" => Action::FallbackEngaged,
            "halted" => Action::Halted,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run: usize,
    pub step: usize,
    pub time: f64,
    /// Ground-truth state after the step.
    pub state: State,
    /// Measured value per measured variable.
    pub measured: BTreeMap<String, f64>,
    /// Plant effect on each measured variable over the step.
    pub effect: BTreeMap<String, f64>,
    pub estimate: Option<Estimate>,
    pub conformant: bool,
    pub action: Action,
    /// Model monitor verdict for the transition into this row.
    pub verdict: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn runs(&self) -> BTreeSet<usize> {
        self.rows.iter().map(|r| r.run).collect()
    }

    /// Rows of one run in step order.
    pub fn run(&self, run: usize) -> Vec<&TraceRow> {
        self.rows.iter().filter(|r| r.run == run).collect()
    }

    fn columns(&self) -> (Vec<String>, Vec<String>, Vec<String>) {
        let mut vars = BTreeSet::new();
        let mut measured = BTreeSet::new();
        let mut effect = BTreeSet::new();
        for r in &self.rows {
            vars.extend(r.state.names().map(String::from));
            measured.extend(r.measured.keys().cloned());
            effect.extend(r.effect.keys().cloned());
        }
        (vars.into_iter().collect(), measured.into_iter().collect(), effect.into_iter().collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let (vars, measured, effect) = self.columns();
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = vec!["step".into(), "time".into()];
        header.extend(vars.iter().cloned());
        header.extend(measured.iter().map(|m| format!("measured_{m}")));
        header.extend(effect.iter().map(|m| format!("effect_{m}")));
        header.extend(["est_l", "est_u", "run", "conformant", "action", "verdict"].map(String::from));
        out.write_record(&header).map_err(csv_err)?;
        let num = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            let mut rec: Vec<String> = vec![r.step.to_string(), format!("{}", r.time)];
            rec.extend(vars.iter().map(|v| num(r.state.try_get(v))));
            rec.extend(measured.iter().map(|m| num(r.measured.get(m).copied())));
            rec.extend(effect.iter().map(|m| num(r.effect.get(m).copied())));
            rec.push(num(r.estimate.map(|e| e.l)));
            rec.push(num(r.estimate.map(|e| e.u)));
            rec.push(r.run.to_string());
            rec.push(r.conformant.to_string());
            rec.push(r.action.as_str().to_string());
            rec.push(match r.verdict {
                Some(true) => "satisfied".into(),
                Some(false) => "violated".into(),
                None => String::new(),
            });
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Trace(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Trace> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let find = |name: &str| header.iter().position(|h| h == name);
        let step_i = find("step").ok_or_else(|| Error::Trace("missing column `step`".into()))?;
        let time_i = find("time").ok_or_else(|| Error::Trace("missing column `time`".into()))?;
        let fixed = ["step", "time", "est_l", "est_u", "run", "conformant", "action", "verdict"];
        let mut rows = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let parse_f = |i: usize| -> Result<Option<f64>> {
                let s = field(i);
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Trace(format!("row {}: `{}` is not a number in `{}`", line + 1, s, header[i])))
            };
            let mut row = TraceRow {
                run: 0,
                step: field(step_i).parse().map_err(|_| Error::Trace(format!("row {}: bad step", line + 1)))?,
                time: parse_f(time_i)?.unwrap_or(0.0),
                state: State::new(),
                measured: BTreeMap::new(),
                effect: BTreeMap::new(),
                estimate: None,
                conformant: true,
                action: Action::PassThrough,
                verdict: None,
            };
            let (mut l, mut u) = (None, None);
            for (i, h) in header.iter().enumerate() {
                if let Some(m) = h.strip_prefix("measured_") {
                    if let Some(v) = parse_f(i)? {
                        row.measured.insert(m.to_string(), v);
                    }
                } else if let Some(m) = h.strip_prefix("effect_") {
                    if let Some(v) = parse_f(i)? {
                        row.effect.insert(m.to_string(), v);
                    }
                } else if !fixed.contains(&h.as_str()) {
                    if let Some(v) = parse_f(i)? {
                        row.state.set(h.clone(), v);
                    }
                }
            }
            if let Some(i) = find("est_l") {
                l = parse_f(i)?;
            }
            if let Some(i) = find("est_u") {
                u = parse_f(i)?;
            }
            if let (Some(l), Some(u)) = (l, u) {
                row.estimate = Some(Estimate::new(l, u));
            }
            if let Some(i) = find("run") {
                row.run = field(i).parse().unwrap_or(0);
            }
            if let Some(i) = find("conformant") {
                row.conformant = field(i) != "false";
            }
            if let Some(i) = find("action") {
                row.action = Action::parse(field(i)).unwrap_or(Action::PassThrough);
            }
            if let Some(i) = find("verdict") {
                row.verdict = match field(i) {
                    "satisfied" | "true" => Some(true),
                    "violated" | "false" => Some(false),
                    _ => None,
                };
            }
            rows.push(row);
        }
        Ok(Trace { rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Trace(e.to_string())
}
