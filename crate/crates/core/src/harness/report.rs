//! Success-rate matrices: (source model × attack) rows against target
//! model columns.
//!
//! Cells keep the raw counts, so both serializations round-trip exactly.
//! CSV is long-format for machines:
//!
//! ```text
//! # denominator=clean-correct
//! source,attack,target,hits,total,rate
//! (clean),accuracy,cnn-b,97,100,0.97
//! cnn,ti-dim,cnn-b,41,97,0.422680412371134
//! ```
//!
//! Markdown is a wide table in percent with the counts in parentheses.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which test examples count towards a success rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DenominatorPolicy {
    /// Only examples the target classifies correctly in clean form.
    #[default]
    CleanCorrect,
    /// Every test example.
    All,
}

impl fmt::Display for DenominatorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenominatorPolicy::CleanCorrect => "clean-correct",
            DenominatorPolicy::All => "all",
        })
    }
}

impl FromStr for DenominatorPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean-correct" => Ok(DenominatorPolicy::CleanCorrect),
            "all" => Ok(DenominatorPolicy::All),
            _ => Err(Error::Config(format!("unknown denominator policy '{s}' (clean-correct | all)"))),
        }
    }
}

/// `hits` out of `total`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Count {
    pub hits: usize,
    pub total: usize,
}

impl Count {
    /// `hits / total`, or 0 when nothing was counted.
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub source: String,
    pub attack: String,
    /// One cell per target, in column order.
    pub cells: Vec<Count>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub policy: DenominatorPolicy,
    pub targets: Vec<String>,
    /// Clean accuracy of each target on the evaluated examples.
    pub clean: Vec<Count>,
    pub rows: Vec<ReportRow>,
}

const CLEAN_SOURCE: &str = "(clean)";
const CLEAN_ATTACK: &str = "accuracy";

impl EvalReport {
    /// Checks label uniqueness, row widths and `hits ≤ total`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::format("report", m));
        for (i, t) in self.targets.iter().enumerate() {
            if self.targets[..i].contains(t) {
                return bad(format!("duplicate target '{t}'"));
            }
        }
        if self.clean.len() != self.targets.len() {
            return bad("clean accuracy row width differs from target count".into());
        }
        for (i, r) in self.rows.iter().enumerate() {
            if self.rows[..i].iter().any(|p| p.source == r.source && p.attack == r.attack) {
                return bad(format!("duplicate row ({}, {})", r.source, r.attack));
            }
            if r.cells.len() != self.targets.len() {
                return bad(format!("row ({}, {}) has {} cells", r.source, r.attack, r.cells.len()));
            }
        }
        let all = self.clean.iter().chain(self.rows.iter().flat_map(|r| r.cells.iter()));
        for c in all {
            if c.hits > c.total {
                return bad(format!("count {}/{} exceeds its total", c.hits, c.total));
            }
        }
        Ok(())
    }

    fn target_index(&self, target: &str) -> Option<usize> {
        self.targets.iter().position(|t| t == target)
    }

    pub fn cell(&self, source: &str, attack: &str, target: &str) -> Option<Count> {
        let j = self.target_index(target)?;
        self.rows
            .iter()
            .find(|r| r.source == source && r.attack == attack)
            .map(|r| r.cells[j])
    }

    pub fn rate(&self, source: &str, attack: &str, target: &str) -> Option<f64> {
        self.cell(source, attack, target).map(|c| c.rate())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["source", "attack", "target", "hits", "total", "rate"])
            .expect("in-memory write");
        let mut put = |s: &str, a: &str, t: &str, c: &Count| {
            w.write_record([s, a, t, &c.hits.to_string(), &c.total.to_string(), &c.rate().to_string()])
                .expect("in-memory write");
        };
        for (t, c) in self.targets.iter().zip(&self.clean) {
            put(CLEAN_SOURCE, CLEAN_ATTACK, t, c);
        }
        for r in &self.rows {
            for (t, c) in self.targets.iter().zip(&r.cells) {
                put(&r.source, &r.attack, t, c);
            }
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input");
        format!("# denominator={}\n{body}", self.policy)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let policy = first
            .trim_end()
            .strip_prefix("# denominator=")
            .ok_or_else(|| Error::format("report", "first line must be '# denominator=<policy>'"))?
            .parse()?;
        let mut reader = csv::Reader::from_reader(rest.as_bytes());
        let mut report = EvalReport {
            policy,
            targets: Vec::new(),
            clean: Vec::new(),
            rows: Vec::new(),
        };
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::format("report", format!("line {}: {e}", i + 3)))?;
            if rec.len() != 6 {
                return Err(Error::format("report", format!("line {}: expected 6 fields", i + 3)));
            }
            let num = |k: usize| {
                rec[k]
                    .parse::<usize>()
                    .map_err(|_| Error::format("report", format!("line {}: bad count '{}'", i + 3, &rec[k])))
            };
            let count = Count {
                hits: num(3)?,
                total: num(4)?,
            };
            let (source, attack, target) = (&rec[0], &rec[1], &rec[2]);
            if source == CLEAN_SOURCE && attack == CLEAN_ATTACK {
                report.targets.push(target.to_string());
                report.clean.push(count);
                continue;
            }
            let j = report
                .target_index(target)
                .ok_or_else(|| Error::format("report", format!("line {}: unknown target '{target}'", i + 3)))?;
            let row = match report.rows.iter_mut().find(|r| r.source == source && r.attack == attack) {
                Some(r) => r,
                None => {
                    report.rows.push(ReportRow {
                        source: source.to_string(),
                        attack: attack.to_string(),
                        cells: Vec::new(),
                    });
                    report.rows.last_mut().expect("just pushed")
                }
            };
            if row.cells.len() != j {
                return Err(Error::format("report", format!("line {}: cells out of column order", i + 3)));
            }
            row.cells.push(count);
        }
        report.validate()?;
        Ok(report)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Success rates (%), denominator: {}", self.policy);
        s.push('\n');
        let _ = write!(s, "| Source | Attack |");
        for t in &self.targets {
            let _ = write!(s, " {t} |");
        }
        s.push('\n');
        s.push_str("|---|---|");
        for _ in &self.targets {
            s.push_str("---:|");
        }
        s.push('\n');
        let mut row = |source: &str, attack: &str, cells: &[Count]| {
            let _ = write!(s, "| {source} | {attack} |");
            for c in cells {
                let _ = write!(s, " {:.1} ({}/{}) |", 100.0 * c.rate(), c.hits, c.total);
            }
            s.push('\n');
        };
        row(CLEAN_SOURCE, CLEAN_ATTACK, &self.clean);
        for r in &self.rows {
            row(&r.source, &r.attack, &r.cells);
        }
        s
    }

    pub fn from_markdown(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let policy = lines
            .next()
            .and_then(|l| l.strip_prefix("Success rates (%), denominator: "))
            .ok_or_else(|| Error::format("report", "missing markdown title line"))?
            .trim()
            .parse()?;
        let table: Vec<Vec<String>> = lines
            .filter(|l| l.starts_with('|'))
            .map(|l| {
                l.trim()
                    .trim_matches('|')
                    .split('|')
                    .map(|c| c.trim().to_string())
                    .collect()
            })
            .collect();
        if table.len() < 3 {
            return Err(Error::format("report", "markdown table needs header, rule and clean row"));
        }
        let targets: Vec<String> = table[0][2..].to_vec();
        let parse_cell = |c: &str| -> Result<Count> {
            let inner = c
                .split_once('(')
                .and_then(|(_, r)| r.strip_suffix(')'))
                .and_then(|r| r.split_once('/'))
                .ok_or_else(|| Error::format("report", format!("bad cell '{c}'")))?;
            let p = |v: &str| v.parse::<usize>().map_err(|_| Error::format("report", format!("bad cell '{c}'")));
            Ok(Count {
                hits: p(inner.0)?,
                total: p(inner.1)?,
            })
        };
        let parse_row = |r: &[String]| -> Result<Vec<Count>> {
            if r.len() != targets.len() + 2 {
                return Err(Error::format("report", format!("row '{}' has the wrong width", r.join("|"))));
            }
            r[2..].iter().map(|c| parse_cell(c)).collect()
        };
        let clean_row = &table[2];
        if clean_row[0] != CLEAN_SOURCE {
            return Err(Error::format("report", "first data row must be the clean accuracy row"));
        }
        let clean = parse_row(clean_row)?;
        let rows = table[3..]
            .iter()
            .map(|r| {
                Ok(ReportRow {
                    source: r[0].clone(),
                    attack: r.get(1).cloned().unwrap_or_default(),
                    cells: parse_row(r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let report = EvalReport {
            policy,
            targets,
            clean,
            rows,
        };
        report.validate()?;
        Ok(report)
    }
}

/// Mean rate of one (source, attack, target) cell across several reports,
/// e.g. one report per seed. Errors when a report lacks the cell.
pub fn mean_rate(reports: &[EvalReport], source: &str, attack: &str, target: &str) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("mean over zero reports".into()));
    }
    let mut sum = 0.0;
    for r in reports {
        sum += r
            .rate(source, attack, target)
            .ok_or_else(|| Error::InvalidArgument(format!("no cell ({source}, {attack}, {target})")))?;
    }
    Ok(sum / reports.len() as f64)
}
