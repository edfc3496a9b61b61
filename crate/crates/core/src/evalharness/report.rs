use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::aggregate::{Aggregates, MeanSd};
use super::agreement::AgreementStats;
use super::metrics::{Prf1, Scores};
use super::EvalError;

/// One line of the results table: an app, or the average of the app rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub scores: Scores,
    pub aggregates: Option<Aggregates>,
}

const HEADER: [&str; 26] = [
    "app",
    "met_req_p", "met_req_r", "met_req_f1",
    "unmet_req_p", "unmet_req_r", "unmet_req_f1",
    "partial_req_p", "partial_req_r", "partial_req_f1",
    "met_ac_p", "met_ac_r", "met_ac_f1",
    "unmet_ac_p", "unmet_ac_r", "unmet_ac_f1",
    "steps_mean", "steps_sd",
    "time_s_mean", "time_s_sd",
    "in_tok_k_mean", "in_tok_k_sd",
    "out_tok_k_mean", "out_tok_k_sd",
    "cost_mean", "cost_sd",
];

impl ReportRow {
    fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(25);
        for p in self.scores.as_array() {
            v.extend([p.precision, p.recall, p.f1]);
        }
        let a = self.aggregates.unwrap_or_default();
        for (m, scale) in [(a.steps, 1.0), (a.time_secs, 1.0), (a.input_tokens, 1e3), (a.output_tokens, 1e3), (a.cost, 1.0)] {
            v.extend([m.mean / scale, m.sd / scale]);
        }
        v
    }

    fn from_values(name: String, v: &[f64]) -> Self {
        let prf = |i: usize| Prf1 { precision: v[3 * i], recall: v[3 * i + 1], f1: v[3 * i + 2] };
        let ms = |i: usize, scale: f64| MeanSd { mean: v[15 + 2 * i] * scale, sd: v[16 + 2 * i] * scale };
        Self {
            name,
            scores: Scores::from_array([prf(0), prf(1), prf(2), prf(3), prf(4)]),
            aggregates: Some(Aggregates {
                runs: 0,
                steps: ms(0, 1.0),
                time_secs: ms(1, 1.0),
                input_tokens: ms(2, 1e3),
                output_tokens: ms(3, 1e3),
                cost: ms(4, 1.0),
            }),
        }
    }

    /// Unweighted mean of the app rows, column by column.
    pub fn average(rows: &[ReportRow]) -> ReportRow {
        let cols = rows.iter().map(ReportRow::values).fold(vec![0.0; 25], |acc, v| {
            acc.iter().zip(v).map(|(a, b)| a + b).collect()
        });
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = cols.iter().map(|c| c / n).collect();
        let mut avg = ReportRow::from_values("Avg".into(), &mean);
        avg.aggregates.as_mut().unwrap().runs = rows.iter().filter_map(|r| r.aggregates).map(|a| a.runs).sum();
        avg
    }
}

/// Results table as CSV, Table-1 column order, with an `Avg` row appended.
/// Token columns are in thousands.
pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    let avg = ReportRow::average(rows);
    for row in rows.iter().chain(std::iter::once(&avg)) {
        let mut rec = vec![row.name.clone()];
        rec.extend(row.values().iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Reads back a CSV produced by [`render_csv`], `Avg` row included.
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| EvalError::Insufficient(format!("bad number '{s}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != 25 {
            return Err(EvalError::Insufficient(format!("expected 25 values, got {}", vals.len())));
        }
        out.push(ReportRow::from_values(rec[0].to_string(), &vals));
    }
    Ok(out)
}

/// Fixed-width rendering of the same table plus agreement figures.
pub fn render_text(rows: &[ReportRow], agreement: Option<&AgreementStats>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} | {:^17} | {:^17} | {:^17} | {:^17} | {:^17} | {:>13} | {:>13} | {:>13} | {:>13} | {:>13}",
        "", "Met (Req)", "Unmet (Req)", "Partial (Req)", "Met (AC)", "Unmet (AC)", "Steps", "Time (s)", "In-tok (k)", "Out-tok (k)", "Cost"
    );
    let avg = ReportRow::average(rows);
    for row in rows.iter().chain(std::iter::once(&avg)) {
        let v = row.values();
        let _ = write!(s, "{:<8}", row.name);
        for k in 0..5 {
            let _ = write!(s, " | {:.3} {:.3} {:.3}", v[3 * k], v[3 * k + 1], v[3 * k + 2]);
        }
        for k in 0..5 {
            let _ = write!(s, " | {:>6.3} {:>6.3}", v[15 + 2 * k], v[16 + 2 * k]);
        }
        s.push('\n');
    }
    if let Some(a) = agreement {
        let _ = writeln!(
            s,
            "alpha (ordinal) = {:.3} [{:.3}, {:.3}]; kappa (pooled) = {:.3}; observed agreement = {:.4}",
            a.alpha, a.ci_low, a.ci_high, a.kappa, a.observed_agreement
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, f: f64) -> ReportRow {
        let p = Prf1::from_pr(f, f);
        ReportRow {
            name: name.into(),
            scores: Scores::from_array([p; 5]),
            aggregates: Some(Aggregates {
                runs: 2,
                steps: MeanSd { mean: 20.0, sd: 10.0 },
                input_tokens: MeanSd { mean: 189_700.0, sd: 0.0 },
                ..Aggregates::default()
            }),
        }
    }

    #[test]
    fn csv_round_trips_and_averages() {
        let rows = vec![row("App-1", 0.5), row("App-2", 1.0)];
        let csv = render_csv(&rows);
        assert!(csv.starts_with("app,met_req_p,met_req_r,met_req_f1,unmet_req_p"));
        let back = parse_report_csv(&csv).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].scores, rows[0].scores);
        assert_eq!(back[2].name, "Avg");
        assert!((back[2].scores.req_met.f1 - 0.75).abs() < 1e-9);
        assert!((back[1].aggregates.unwrap().input_tokens.mean - 189_700.0).abs() < 1e-6);
    }

    #[test]
    fn empty_class_renders_zeros() {
        let mut r = row("A", 1.0);
        r.scores.req_partial = Prf1::default();
        let csv = render_csv(&[r]);
        let line = csv.lines().nth(1).unwrap();
        assert!(line.contains("0.000000,0.000000,0.000000"));
        assert!(render_text(&parse_report_csv(&csv).unwrap()[..1], None).contains("Partial (Req)"));
    }
}
