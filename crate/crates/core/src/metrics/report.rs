//! Tabular output: per-class metric CSV and the per-case summary CSV with
//! wall / right atrium / left atrium column pairs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{LEFT_ATRIUM, RIGHT_ATRIUM, WALL};

use super::EmptyFlag;

pub const METRIC_COLUMNS: [&str; 5] = ["case_id", "class", "dice", "hd95_mm", "flags"];
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "case_id", "status", "wall_dice", "wall_hd95", "ra_dice", "ra_hd95", "la_dice", "la_hd95",
];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub case_id: String,
    pub class_name: String,
    /// In `[0, 1]`.
    pub dice: f64,
    pub hd95_mm: f64,
    pub hd_mm: f64,
    pub flag: Option<EmptyFlag>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl EmptyFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            EmptyFlag::BothEmpty => "both_empty",
            EmptyFlag::OneEmpty => "one_empty",
        }
    }
}

/// Dice as a fraction (shortest exact form) or as a percentage rounded to
/// six decimals with trailing zeros dropped.
pub fn format_dice(dice: f64, percent: bool) -> String {
    if percent {
        trim_fixed(dice * 100.0)
    } else {
        format!("{dice}")
    }
}

pub fn format_mm(mm: f64) -> String {
    if mm.is_infinite() {
        "inf".to_string()
    } else {
        format!("{mm}")
    }
}

fn trim_fixed(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 fields"))
}

impl MetricReport {
    pub fn extend(&mut self, other: MetricReport) {
        self.rows.extend(other.rows);
    }

    pub fn row(&self, case_id: &str, class_name: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.case_id == case_id && r.class_name == class_name)
    }

    pub fn to_csv(&self, percent: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(METRIC_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.case_id.as_str(),
                r.class_name.as_str(),
                &format_dice(r.dice, percent),
                &format_mm(r.hd95_mm),
                r.flag.map_or("", EmptyFlag::as_str),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, percent: bool) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(percent)?).map_err(|e| Error::io(path, e))
    }
}

/// One line of the batch summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub case_id: String,
    pub status: String,
    /// `(dice, hd95_mm)` for wall, right atrium, left atrium, when ground
    /// truth was available.
    pub scores: Option<[(f64, f64); 3]>,
}

impl SummaryRow {
    pub fn from_report(case_id: &str, status: &str, report: Option<&MetricReport>) -> Self {
        let scores = report.and_then(|r| {
            let get = |name| r.row(case_id, name).map(|row| (row.dice, row.hd95_mm));
            Some([get(WALL)?, get(RIGHT_ATRIUM)?, get(LEFT_ATRIUM)?])
        });
        SummaryRow {
            case_id: case_id.to_string(),
            status: status.to_string(),
            scores,
        }
    }
}

pub fn summary_csv(rows: &[SummaryRow], percent: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.case_id.clone(), r.status.clone()];
        match r.scores {
            Some(s) => {
                for (d, h) in s {
                    rec.push(format_dice(d, percent));
                    rec.push(format_mm(h));
                }
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}
