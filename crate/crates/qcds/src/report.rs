//! Result persistence (CSV) and figure emission (SVG line charts laid out
//! like the four-panel loss/accuracy comparisons).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_rl::RlLoopRecord;
use crate::trainer::{EpochRecord, TrainHistory};

fn opt_to_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn field_to_opt(s: &str, path: &Path) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| csv_err(path, format!("bad numeric field {s:?}")))
}

fn csv_err(path: &Path, message: String) -> Error {
    Error::Plot(format!("{}: {message}", path.display()))
}

/// epoch,train_loss,train_acc,val_loss,val_acc,test_loss,test_acc
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "train_loss",
        "train_acc",
        "val_loss",
        "val_acc",
        "test_loss",
        "test_acc",
    ])?;
    for r in &history.records {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.train_acc.to_string(),
            opt_to_field(r.val_loss),
            opt_to_field(r.val_acc),
            opt_to_field(r.test_loss),
            opt_to_field(r.test_acc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<TrainHistory> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(path, e.to_string()))?;
        if row.len() != 7 {
            return Err(csv_err(
                path,
                format!("expected 7 columns, got {}", row.len()),
            ));
        }
        records.push(EpochRecord {
            epoch: row[0]
                .parse()
                .map_err(|_| csv_err(path, format!("bad epoch {:?}", &row[0])))?,
            train_loss: field_to_opt(&row[1], path)?
                .ok_or_else(|| csv_err(path, "missing train_loss".into()))?,
            train_acc: field_to_opt(&row[2], path)?
                .ok_or_else(|| csv_err(path, "missing train_acc".into()))?,
            val_loss: field_to_opt(&row[3], path)?,
            val_acc: field_to_opt(&row[4], path)?,
            test_loss: field_to_opt(&row[5], path)?,
            test_acc: field_to_opt(&row[6], path)?,
        });
    }
    Ok(TrainHistory { records })
}

/// One line of the ranked-survivors export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub design_path: String,
    pub val_loss: f64,
    pub val_acc: f64,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
}

/// rank,design,val_loss,val_acc,test_loss,test_acc
pub fn write_ranked_csv(path: &Path, entries: &[RankedEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "design", "val_loss", "val_acc", "test_loss", "test_acc"])?;
    for e in entries {
        w.write_record([
            e.rank.to_string(),
            e.design_path.clone(),
            e.val_loss.to_string(),
            e.val_acc.to_string(),
            opt_to_field(e.test_loss),
            opt_to_field(e.test_acc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// loop,controller_loss,metric_value
pub fn write_controller_csv(path: &Path, curve: &[RlLoopRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["loop", "controller_loss", "metric_value"])?;
    for r in curve {
        w.write_record([
            r.loop_index.to_string(),
            r.controller_loss.to_string(),
            r.metric_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_controller_csv(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(path, e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| csv_err(path, format!("bad field {:?}", &row[i])))
        };
        rows.push((parse(0)? as usize, parse(1)?, parse(2)?));
    }
    Ok(rows)
}

/// One line of the BO trace export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoTraceEntry {
    pub iteration: usize,
    pub design_path: String,
    pub val_loss: f64,
    pub incumbent_loss: f64,
}

/// iteration,design,val_loss,incumbent_loss
pub fn write_bo_csv(path: &Path, entries: &[BoTraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "design", "val_loss", "incumbent_loss"])?;
    for e in entries {
        w.write_record([
            e.iteration.to_string(),
            e.design_path.clone(),
            e.val_loss.to_string(),
            e.incumbent_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One labeled polyline of a chart.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 330.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 46.0;

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Render one chart panel at the given SVG offset.
fn render_panel(
    out: &mut String,
    ox: f64,
    oy: f64,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    with_legend: bool,
) {
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max - x_min < 1e-12 {
        x_max = x_min + 1.0;
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| ox + MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| oy + MARGIN_T + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"14\" font-weight=\"bold\">{}</text>\n",
        ox + PANEL_W / 2.0,
        oy + 18.0,
        escape_xml(title)
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        sx(x_min),
        sy(y_min),
        sx(x_max),
        sy(y_min)
    ));
    out.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        sx(x_min),
        sy(y_min),
        sx(x_min),
        sy(y_max)
    ));
    // ticks
    for i in 0..=4 {
        let xv = x_min + (x_max - x_min) * i as f64 / 4.0;
        let yv = y_min + (y_max - y_min) * i as f64 / 4.0;
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            sx(xv),
            sy(y_min),
            sx(xv),
            sy(y_min) + 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            sx(xv),
            sy(y_min) + 16.0,
            fmt_tick(xv)
        ));
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            sx(x_min) - 4.0,
            sy(yv),
            sx(x_min),
            sy(yv)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
            sx(x_min) - 6.0,
            sy(yv) + 3.0,
            fmt_tick(yv)
        ));
    }
    // axis labels
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        ox + MARGIN_L + plot_w / 2.0,
        oy + PANEL_H - 10.0,
        escape_xml(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 {:.1} {:.1})\">{}</text>\n",
        ox + 16.0,
        oy + MARGIN_T + plot_h / 2.0,
        ox + 16.0,
        oy + MARGIN_T + plot_h / 2.0,
        escape_xml(y_label)
    ));
    // series
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    if with_legend {
        let lx = ox + MARGIN_L + plot_w - 150.0;
        let mut ly = oy + MARGIN_T + 8.0;
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            out.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                lx,
                ly,
                lx + 20.0,
                ly
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>\n",
                lx + 26.0,
                ly + 3.5,
                escape_xml(&s.label)
            ));
            ly += 16.0;
        }
    }
}

fn svg_document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n\
         <rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Single-panel line chart.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut body = String::new();
    render_panel(&mut body, 0.0, 0.0, title, x_label, y_label, series, true);
    svg_document(PANEL_W, PANEL_H, &body)
}

/// Four-panel comparison of training histories: train loss, train accuracy,
/// test loss, test accuracy; one overlaid series per labeled run.
pub fn four_panel_svg(histories: &[(String, TrainHistory)]) -> Result<String> {
    if histories.is_empty() {
        return Err(Error::Plot("no histories to plot".into()));
    }
    let pick = |f: fn(&EpochRecord) -> Option<f64>| -> Vec<Series> {
        histories
            .iter()
            .map(|(label, h)| Series {
                label: label.clone(),
                points: h
                    .records
                    .iter()
                    .filter_map(|r| f(r).map(|v| (r.epoch as f64, v)))
                    .collect(),
            })
            .collect()
    };
    let panels: [(&str, &str, Vec<Series>); 4] = [
        ("Train loss", "loss", pick(|r| Some(r.train_loss))),
        ("Train accuracy", "accuracy", pick(|r| Some(r.train_acc))),
        ("Test loss", "loss", pick(|r| r.test_loss)),
        ("Test accuracy", "accuracy", pick(|r| r.test_acc)),
    ];
    let mut body = String::new();
    for (i, (title, y_label, series)) in panels.iter().enumerate() {
        let ox = (i % 2) as f64 * PANEL_W;
        let oy = (i / 2) as f64 * PANEL_H;
        render_panel(&mut body, ox, oy, title, "epoch", y_label, series, i == 0);
    }
    Ok(svg_document(2.0 * PANEL_W, 2.0 * PANEL_H, &body))
}
