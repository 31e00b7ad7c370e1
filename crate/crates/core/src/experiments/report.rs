//! Aggregation of sweep trials into PD and RMSE tables, CSV files and SVG
//! bar charts.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::metrics::{doa_rmse, is_anomalous, mean_std, probability_of_detection};
use crate::experiments::sweep::{SceneFailure, SweepReport, TrialResult};
use crate::pipeline::Method;

/// Per-run PD and RMSE of one (method, T60, SNR) cell, averaged over runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub method: Method,
    pub t60_s: f64,
    pub snr_db: f64,
    /// Runs that produced at least one block.
    pub runs: usize,
    pub blocks: usize,
    pub pd_mean: f64,
    pub pd_std: f64,
    /// Over runs with at least one nonanomalous block; `None` if there are none.
    pub rmse_mean_deg: Option<f64>,
    pub rmse_std_deg: Option<f64>,
    pub failed_runs: usize,
}

pub fn summarize(
    trials: &[TrialResult],
    failures: &[SceneFailure],
    methods: &[Method],
    t60s: &[f64],
    snrs: &[f64],
) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &method in methods {
        for &t60_s in t60s {
            for &snr_db in snrs {
                let cell: Vec<&TrialResult> = trials
                    .iter()
                    .filter(|t| t.method == method && t.t60_s == t60_s && t.snr_db == snr_db)
                    .collect();
                let mut runs: Vec<usize> = cell.iter().map(|t| t.run).collect();
                runs.sort_unstable();
                runs.dedup();
                let mut pds = Vec::new();
                let mut rmses = Vec::new();
                for &run in &runs {
                    let errs: Vec<f64> = cell.iter().filter(|t| t.run == run).map(|t| t.psi_e_deg).collect();
                    pds.push(probability_of_detection(&errs).expect("run has blocks"));
                    if let Some(r) = doa_rmse(&errs) {
                        rmses.push(r);
                    }
                }
                let (pd_mean, pd_std) = mean_std(&pds).unwrap_or((f64::NAN, f64::NAN));
                let rmse = mean_std(&rmses);
                out.push(CellSummary {
                    method,
                    t60_s,
                    snr_db,
                    runs: runs.len(),
                    blocks: cell.len(),
                    pd_mean,
                    pd_std,
                    rmse_mean_deg: rmse.map(|r| r.0),
                    rmse_std_deg: rmse.map(|r| r.1),
                    failed_runs: failures.iter().filter(|f| f.t60_s == t60_s && f.snr_db == snr_db).count(),
                })
            }
        }
    }
    out
}

pub const TRIAL_CSV_HEADER: [&str; 7] = ["method", "t60_s", "snr_db", "run", "block", "psi_e_deg", "anomalous"];

pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_CSV_HEADER)?;
    for t in trials {
        w.write_record([
            t.method.tag().to_string(),
            t.t60_s.to_string(),
            t.snr_db.to_string(),
            t.run.to_string(),
            t.block.to_string(),
            // shortest round-trip form, so that re-reading is exact
            t.psi_e_deg.to_string(),
            u8::from(t.anomalous).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(TRIAL_CSV_HEADER) {
        return Err(Error::config(format!("trial CSV header must be {}", TRIAL_CSV_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::config(format!("trial CSV row {}: bad {what}", line + 1));
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        let int = |i: usize, what: &str| rec[i].parse::<usize>().map_err(|_| bad(what));
        let psi_e_deg = num(5, "psi_e_deg")?;
        let anomalous = match &rec[6] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("anomalous flag")),
        };
        if anomalous != is_anomalous(psi_e_deg) {
            return Err(bad("anomalous flag (disagrees with psi_e_deg)"));
        }
        out.push(TrialResult {
            method: rec[0].parse()?,
            t60_s: num(1, "t60_s")?,
            snr_db: num(2, "snr_db")?,
            run: int(3, "run")?,
            block: int(4, "block")?,
            psi_e_deg,
            anomalous,
        });
    }
    Ok(out)
}

pub const SUMMARY_CSV_HEADER: [&str; 10] =
    ["method", "t60_s", "snr_db", "runs", "blocks", "pd_mean", "pd_std", "rmse_mean_deg", "rmse_std_deg", "failed_runs"];

pub fn write_summary_csv<W: Write>(out: W, cells: &[CellSummary]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_CSV_HEADER)?;
    for c in cells {
        w.write_record([
            c.method.tag().to_string(),
            c.t60_s.to_string(),
            c.snr_db.to_string(),
            c.runs.to_string(),
            c.blocks.to_string(),
            format!("{:.4}", c.pd_mean),
            format!("{:.4}", c.pd_std),
            opt(c.rmse_mean_deg),
            opt(c.rmse_std_deg),
            c.failed_runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartMetric {
    Pd,
    Rmse,
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Grouped bar chart of one metric against SNR for one T60, one bar per
/// method, with ±1 std whiskers. Cells without a value get no bar.
pub fn bar_chart_svg(cells: &[CellSummary], t60_s: f64, metric: ChartMetric) -> String {
    let cells: Vec<&CellSummary> = cells.iter().filter(|c| c.t60_s == t60_s).collect();
    let mut snrs: Vec<f64> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    for c in &cells {
        if !snrs.contains(&c.snr_db) {
            snrs.push(c.snr_db);
        }
        if !methods.contains(&c.method) {
            methods.push(c.method);
        }
    }
    let value = |c: &CellSummary| match metric {
        ChartMetric::Pd => Some((c.pd_mean, c.pd_std)).filter(|v| v.0.is_finite()),
        ChartMetric::Rmse => c.rmse_mean_deg.zip(c.rmse_std_deg),
    };
    let (title, y_label, mut y_max) = match metric {
        ChartMetric::Pd => ("Probability of detection", "PD", 1.0),
        ChartMetric::Rmse => ("DOA RMSE", "RMSE (deg)", 1.0),
    };
    if metric == ChartMetric::Rmse {
        let top = cells.iter().filter_map(|c| value(c)).map(|(m, s)| m + s).fold(0.0, f64::max);
        y_max = (top * 1.1).max(1.0).ceil();
    }

    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 70.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let y_of = |v: f64| top + plot_h * (1.0 - (v / y_max).clamp(0.0, 1.0));
    let group_w = plot_w / snrs.len().max(1) as f64;
    let bar_w = group_w * 0.8 / methods.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{title}, T60 = {t60_s} s</text>"#,
        w / 2.0
    );
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"##,
            w - right,
            left - 6.0,
            y + 4.0,
            trim_num(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle" font-family="sans-serif" font-size="12">{y_label}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    for (g, &snr) in snrs.iter().enumerate() {
        let x0 = left + g as f64 * group_w + group_w * 0.1;
        for (k, &m) in methods.iter().enumerate() {
            let Some(c) = cells.iter().find(|c| c.method == m && c.snr_db == snr) else { continue };
            let Some((mean, std)) = value(c) else { continue };
            let x = x0 + k as f64 * bar_w;
            let y = y_of(mean);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                bar_w * 0.9,
                top + plot_h - y,
                COLORS[k % COLORS.len()]
            );
            let xc = x + bar_w * 0.45;
            let _ = writeln!(
                s,
                r#"<line x1="{xc:.1}" y1="{:.1}" x2="{xc:.1}" y2="{:.1}" stroke="black"/>"#,
                y_of(mean - std),
                y_of(mean + std)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{} dB</text>"#,
            left + (g as f64 + 0.5) * group_w,
            top + plot_h + 16.0,
            trim_num(snr)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="black"/>"#,
        top + plot_h,
        w - right,
        top + plot_h
    );
    for (k, m) in methods.iter().enumerate() {
        let x = left + k as f64 * 220.0;
        let y = h - 22.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{y}" font-family="sans-serif" font-size="12">{}</text>"#,
            y - 10.0,
            COLORS[k % COLORS.len()],
            x + 18.0,
            m.label()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Writes `trials.csv`, `summary.csv` and one PD and one RMSE chart per T60
/// into `dir`. Returns the written paths.
pub fn write_report(dir: &Path, report: &SweepReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("trials.csv");
    write_trials_csv(std::fs::File::create(&path)?, &report.trials)?;
    written.push(path);
    let path = dir.join("summary.csv");
    write_summary_csv(std::fs::File::create(&path)?, &report.summary)?;
    written.push(path);
    let mut t60s: Vec<f64> = Vec::new();
    for c in &report.summary {
        if !t60s.contains(&c.t60_s) {
            t60s.push(c.t60_s);
        }
    }
    for t60 in t60s {
        for (metric, name) in [(ChartMetric::Pd, "pd"), (ChartMetric::Rmse, "rmse")] {
            let path = dir.join(format!("{name}_t60_{}s.svg", trim_num(t60)));
            std::fs::write(&path, bar_chart_svg(&report.summary, t60, metric))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(method: Method, run: usize, block: usize, psi: f64) -> TrialResult {
        TrialResult { method, t60_s: 0.5, snr_db: 10.0, run, block, psi_e_deg: psi, anomalous: is_anomalous(psi) }
    }

    fn sample() -> Vec<TrialResult> {
        vec![
            trial(Method::ShdLra, 0, 0, 1.0),
            trial(Method::ShdLra, 0, 1, 3.0),
            trial(Method::ShdLra, 1, 0, 4.0),
            trial(Method::ShdLra, 1, 1, 50.0),
            trial(Method::ShdMusic, 0, 0, 30.0),
            trial(Method::ShdMusic, 1, 0, 40.0),
        ]
    }

    #[test]
    fn per_run_then_mean() {
        let cells = summarize(&sample(), &[], &Method::ALL, &[0.5], &[10.0]);
        assert_eq!(cells.len(), 2);
        let lra = &cells[0];
        assert_eq!((lra.runs, lra.blocks), (2, 4));
        // run PDs 1.0 and 0.5
        assert!((lra.pd_mean - 0.75).abs() < 1e-12);
        assert!((lra.pd_std - 0.125f64.sqrt()).abs() < 1e-12);
        // run RMSEs sqrt(5) and 4
        let want = (5f64.sqrt() + 4.0) / 2.0;
        assert!((lra.rmse_mean_deg.unwrap() - want).abs() < 1e-12);
        let music = &cells[1];
        assert_eq!(music.pd_mean, 0.0);
        assert_eq!(music.rmse_mean_deg, None);
    }

    #[test]
    fn trial_csv_round_trip() {
        let trials = sample();
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &trials).unwrap();
        assert!(buf.starts_with(b"method,t60_s,snr_db,run,block,psi_e_deg,anomalous\n"));
        assert_eq!(read_trials_csv(&buf[..]).unwrap(), trials);
        let tampered = String::from_utf8(buf).unwrap().replace("50,1", "50,0");
        assert!(read_trials_csv(tampered.as_bytes()).is_err());
    }

    #[test]
    fn summary_csv_leaves_missing_rmse_empty() {
        let cells = summarize(&sample(), &[], &Method::ALL, &[0.5], &[10.0]);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &cells).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("shd-music,0.5,10,2,2,0.0000,0.0000,,,0"), "{text}");
    }

    #[test]
    fn charts_are_svg() {
        let cells = summarize(&sample(), &[], &Method::ALL, &[0.5], &[10.0]);
        let pd = bar_chart_svg(&cells, 0.5, ChartMetric::Pd);
        assert!(pd.starts_with("<svg") && pd.trim_end().ends_with("</svg>"));
        assert_eq!(pd.matches(r#"height="12""#).count(), 2);
        assert!(pd.contains("SHD-MUSIC (conventional)"));
        let rmse = bar_chart_svg(&cells, 0.5, ChartMetric::Rmse);
        assert!(rmse.contains("RMSE"));
    }
}
