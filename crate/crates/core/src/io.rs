//! File formats: prediction logs, label files, reports and plot tables.
//!
//! A prediction log is tab-separated text. Line 1 is a JSON header, line 2
//! names the columns, and each further line holds one (model, example) pair:
//!
//! ```text
//! {"format":"bvdual-predlog","version":1,"n_models":2,"n_examples":1,"n_classes":2,"generator":"kl","tags":["seed","train_id","group"]}
//! model	example	seed	train_id	group	lp0	lp1
//! 0	0	17	train	-	-2.231435513142097e-1	-1.6094379124341003e0
//! ```
//!
//! Log-probabilities are written in shortest round-trip form so that a file
//! read back reproduces the in-memory values exactly. `-` marks a missing group.

use crate::bregman::SimplexPoint;
use crate::ensembling::ModelPool;
use crate::error::{BvError, Result};
use crate::moments::{PredictionSet, Tag};
use crate::numerics::logsumexp;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const PREDLOG_FORMAT: &str = "bvdual-predlog";
pub const PREDLOG_VERSION: u32 = 1;
const TAG_COLUMNS: [&str; 3] = ["seed", "train_id", "group"];
/// Row normalisation tolerance on read.
pub const ROW_LSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub n_models: usize,
    pub n_examples: usize,
    pub n_classes: usize,
    pub generator: String,
    pub tags: Vec<String>,
}

/// Per-model, per-example log-probabilities with per-model provenance tags.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    pub header: LogHeader,
    pub model_tags: Vec<Tag>,
    /// `log_probs[model][example][class]`.
    pub log_probs: Vec<Vec<Vec<f64>>>,
}

fn check_token(field: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(BvError::validation(
            field,
            format!("`{s}` must be non-empty without whitespace"),
        ));
    }
    Ok(())
}

impl PredictionLog {
    pub fn from_pool(pool: &ModelPool<f64>, model_tags: Vec<Tag>) -> Result<Self> {
        if model_tags.len() != pool.n_models() {
            return Err(BvError::validation("tags", "one tag per model required"));
        }
        for t in &model_tags {
            check_token("train_id", &t.train_id)?;
            if let Some(g) = &t.group {
                check_token("group", g)?;
            }
        }
        Ok(Self {
            header: LogHeader {
                format: PREDLOG_FORMAT.into(),
                version: PREDLOG_VERSION,
                n_models: pool.n_models(),
                n_examples: pool.n_examples(),
                n_classes: pool.n_classes(),
                generator: "kl".into(),
                tags: TAG_COLUMNS.iter().map(|s| s.to_string()).collect(),
            },
            model_tags,
            log_probs: pool
                .models()
                .iter()
                .map(|m| m.iter().map(|p| p.log_probs().to_vec()).collect())
                .collect(),
        })
    }

    pub fn to_pool(&self) -> Result<ModelPool<f64>> {
        let preds = self
            .log_probs
            .iter()
            .map(|m| {
                m.iter()
                    .map(|lp| SimplexPoint::from_log_probs(lp))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ModelPool::new(preds)
    }

    /// Predictions of every model for example `e`, as probability vectors
    /// carrying the model tags.
    pub fn example_set(&self, e: usize) -> Result<PredictionSet<f64>> {
        let points = self
            .log_probs
            .iter()
            .map(|m| SimplexPoint::from_log_probs(&m[e]).map(SimplexPoint::into_probs))
            .collect::<Result<Vec<_>>>()?;
        PredictionSet::with_tags(points, None, self.model_tags.clone())
    }

    pub fn render(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serialises");
        out.push('\n');
        out.push_str("model\texample\tseed\ttrain_id\tgroup");
        for j in 0..self.header.n_classes {
            let _ = write!(out, "\tlp{j}");
        }
        out.push('\n');
        for (m, rows) in self.log_probs.iter().enumerate() {
            let t = &self.model_tags[m];
            for (e, lp) in rows.iter().enumerate() {
                let _ = write!(
                    out,
                    "{m}\t{e}\t{}\t{}\t{}",
                    t.seed,
                    t.train_id,
                    t.group.as_deref().unwrap_or("-")
                );
                for v in lp {
                    let _ = write!(out, "\t{v:e}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or(BvError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let header: LogHeader = serde_json::from_str(head).map_err(|e| BvError::Parse {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
        if header.format != PREDLOG_FORMAT || header.version != PREDLOG_VERSION {
            return Err(BvError::Schema(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        if header.tags != TAG_COLUMNS {
            return Err(BvError::Schema(format!("unexpected tag schema {:?}", header.tags)));
        }
        if header.n_models == 0 || header.n_examples == 0 || header.n_classes == 0 {
            return Err(BvError::Schema("header counts must be positive".into()));
        }
        let (nm, ne, nc) = (header.n_models, header.n_examples, header.n_classes);
        match lines.next() {
            Some((_, cols)) if cols.starts_with("model\texample") => {}
            Some((i, _)) => {
                return Err(BvError::Parse {
                    line: i + 1,
                    message: "missing column header".into(),
                })
            }
            None => return Err(BvError::Schema("no rows".into())),
        }

        let mut log_probs: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; ne]; nm];
        let mut tags: Vec<Option<Tag>> = vec![None; nm];
        let mut rows = 0usize;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let perr = |message: String| BvError::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 + nc {
                return Err(perr(format!("expected {} fields, found {}", 5 + nc, fields.len())));
            }
            let m: usize = fields[0]
                .parse()
                .map_err(|_| perr(format!("bad model index `{}`", fields[0])))?;
            let e: usize = fields[1]
                .parse()
                .map_err(|_| perr(format!("bad example index `{}`", fields[1])))?;
            if m >= nm || e >= ne {
                return Err(perr(format!("index ({m}, {e}) outside header counts")));
            }
            let seed: u64 = fields[2]
                .parse()
                .map_err(|_| perr(format!("bad seed `{}`", fields[2])))?;
            let tag = Tag {
                seed,
                train_id: fields[3].to_string(),
                group: (fields[4] != "-").then(|| fields[4].to_string()),
            };
            let lp = fields[5..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| perr(format!("bad number `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            let lse = logsumexp(&lp);
            if !(lse.abs() <= ROW_LSE_TOLERANCE) {
                return Err(perr(format!("row not normalised: logsumexp = {lse}")));
            }
            match &tags[m] {
                Some(t) if *t != tag => return Err(perr(format!("tags of model {m} change between rows"))),
                Some(_) => {}
                None => tags[m] = Some(tag),
            }
            if log_probs[m][e].replace(lp).is_some() {
                return Err(perr(format!("duplicate row for ({m}, {e})")));
            }
            rows += 1;
        }
        if rows != nm * ne {
            return Err(BvError::Schema(format!("{rows} rows, header implies {}", nm * ne)));
        }
        Ok(Self {
            header,
            model_tags: tags.into_iter().map(Option::unwrap).collect(),
            log_probs: log_probs
                .into_iter()
                .map(|m| m.into_iter().map(Option::unwrap).collect())
                .collect(),
        })
    }
}

/// One class index per line; blank lines and `#` comments are ignored.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        out.push(s.parse().map_err(|_| BvError::Parse {
            line: i + 1,
            message: format!("bad class index `{s}`"),
        })?);
    }
    if out.is_empty() {
        return Err(BvError::Schema("label file has no labels".into()));
    }
    Ok(out)
}

pub fn render_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// Formats `x` with `sig` significant digits, using a `.` decimal point and
/// scientific notation for very large or small magnitudes.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{:.*e}", sig - 1, x)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A named results table with string cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Tab-separated rendering with a header line, for plotting tools.
    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub version: String,
    pub input_digests: BTreeMap<String, String>,
}

/// Machine-readable result of a command or experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Complete command line that reproduces `tables`.
    pub command: String,
    pub config: serde_json::Value,
    pub tables: Vec<Table>,
    pub provenance: Provenance,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: impl Into<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            config,
            tables: Vec::new(),
            provenance: Provenance {
                seed,
                version: env!("CARGO_PKG_VERSION").into(),
                input_digests: BTreeMap::new(),
            },
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Human-readable rendering: replay line, tables, warnings.
    pub fn render_text(&self) -> String {
        let mut out = format!("# replay: {}\n", self.command);
        for t in &self.tables {
            let _ = writeln!(out, "\n[{}]", t.name);
            let widths: Vec<usize> = (0..t.columns.len())
                .map(|c| {
                    t.rows
                        .iter()
                        .map(|r| r[c].len())
                        .chain(std::iter::once(t.columns[c].len()))
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: &[String]| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(out, "{}", line(&t.columns));
            for r in &t.rows {
                let _ = writeln!(out, "{}", line(r));
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "\nwarning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> PredictionLog {
        let pool = ModelPool::new(vec![
            vec![
                SimplexPoint::new(vec![0.8, 0.2]).unwrap(),
                SimplexPoint::new(vec![0.1, 0.9]).unwrap(),
            ],
            vec![
                SimplexPoint::new(vec![0.6, 0.4]).unwrap(),
                SimplexPoint::new(vec![0.3, 0.7]).unwrap(),
            ],
        ])
        .unwrap();
        let tags = vec![
            Tag {
                seed: 3,
                train_id: "t0".into(),
                group: Some("a".into()),
            },
            Tag {
                seed: 4,
                train_id: "t0".into(),
                group: None,
            },
        ];
        PredictionLog::from_pool(&pool, tags).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let log = sample_log();
        let back = PredictionLog::parse(&log.render()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = sample_log().render();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replace("\t-", "\t-\tx");
        let bad = lines.join("\n");
        match PredictionLog::parse(&bad) {
            Err(BvError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = "0\t0\t3\tt0\ta\t0\t0".into();
        assert!(matches!(
            PredictionLog::parse(&lines.join("\n")),
            Err(BvError::Parse { line: 3, .. })
        ));
        let truncated: Vec<&str> = text.lines().take(4).collect();
        assert!(matches!(
            PredictionLog::parse(&truncated.join("\n")),
            Err(BvError::Schema(_))
        ));
        let wrong = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(PredictionLog::parse(&wrong), Err(BvError::Schema(_))));
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("# header\n0\n2 # two\n\n1\n").unwrap(), vec![0, 2, 1]);
        assert!(matches!(parse_labels("0\nx\n"), Err(BvError::Parse { line: 2, .. })));
        assert!(parse_labels("").is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.366_984_587_5, 6), "0.366985");
        assert_eq!(fmt_sig(1.0, 6), "1.00000");
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(-12.345678, 3), "-12.3");
        assert_eq!(fmt_sig(1.5e-9, 3), "1.50e-9");
    }

    #[test]
    fn sha_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
