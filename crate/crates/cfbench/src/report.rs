//! Report files written by the pipeline commands. Every writer is
//! deterministic: rows follow roster / enum order and floats use the
//! shortest round-trip representation.

use std::fmt::Write as _;
use std::path::Path;

use cfbench_core::calibration::{GaResult, TrialRecord, TrialStatus};
use cfbench_core::metrics::{MetricReport, Quantity};
use cfbench_core::scoring::{RankedModel, Scoreboard};
use cfbench_core::simulation::{RolloutFailure, SimulatedTrajectory};
use serde::Serialize;

use crate::error::{Error, Result};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Quotes a field if it contains a delimiter, quote or newline.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut s = String::from("model,quantity,metric,value,n_segments,flags\n");
    for r in reports {
        for ((q, m), cell) in &r.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                field(&r.model),
                q,
                m,
                opt(cell.value),
                cell.n_segments,
                field(&cell.flags.join(";"))
            );
        }
    }
    write(path, &s)
}

pub fn write_zscores(path: &Path, board: &Scoreboard) -> Result<()> {
    let z = &board.zscores;
    let mut s = String::from("model,quantity,metric,category,raw,directional,zscore\n");
    for (mi, model) in z.models.iter().enumerate() {
        for (ci, (q, m)) in z.columns.iter().enumerate() {
            let cat = board
                .categories
                .categories
                .iter()
                .find(|c| **c == m.category())
                .map(|c| c.as_str())
                .unwrap_or_else(|| m.category().as_str());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                field(model),
                q,
                m,
                cat,
                opt(board.raw.values[mi][ci]),
                opt(board.directional.values[mi][ci]),
                opt(z.values[mi][ci])
            );
        }
    }
    write(path, &s)
}

#[derive(Serialize)]
struct RadarModel<'a> {
    model: &'a str,
    rank: usize,
    final_score: Option<f64>,
    /// quantity -> category -> score
    quantities: Vec<RadarQuantity<'a>>,
    category_means: Vec<RadarCategory<'a>>,
}

#[derive(Serialize)]
struct RadarQuantity<'a> {
    quantity: &'a str,
    categories: Vec<RadarCategory<'a>>,
}

#[derive(Serialize)]
struct RadarCategory<'a> {
    category: &'a str,
    score: Option<f64>,
}

#[derive(Serialize)]
struct Radar<'a> {
    categories: Vec<&'a str>,
    constant_columns: Vec<String>,
    models: Vec<RadarModel<'a>>,
}

pub fn write_radar(path: &Path, board: &Scoreboard) -> Result<()> {
    let cs = &board.categories;
    let models = cs
        .models
        .iter()
        .enumerate()
        .map(|(mi, name)| {
            let ranked = board.ranking.iter().find(|r| &r.model == name);
            RadarModel {
                model: name,
                rank: ranked.map_or(0, |r| r.rank),
                final_score: ranked.map(|r| r.final_score).filter(|v| v.is_finite()),
                quantities: Quantity::ALL
                    .iter()
                    .map(|&q| RadarQuantity {
                        quantity: q.as_str(),
                        categories: cs
                            .categories
                            .iter()
                            .map(|&c| RadarCategory {
                                category: c.as_str(),
                                score: cs.get(mi, q, c),
                            })
                            .collect(),
                    })
                    .collect(),
                category_means: cs
                    .categories
                    .iter()
                    .map(|&c| RadarCategory {
                        category: c.as_str(),
                        score: cs.category_mean(mi, c),
                    })
                    .collect(),
            }
        })
        .collect();
    let radar = Radar {
        categories: cs.categories.iter().map(|c| c.as_str()).collect(),
        constant_columns: board
            .zscores
            .constant_columns
            .iter()
            .map(|(q, m)| format!("{q}.{m}"))
            .collect(),
        models,
    };
    let mut text = serde_json::to_string_pretty(&radar).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

pub fn write_ranking(path: &Path, ranking: &[RankedModel]) -> Result<()> {
    let mut s = String::from("rank,model,final_score,error_score\n");
    for r in ranking {
        let _ = writeln!(s, "{},{},{},{}", r.rank, field(&r.model), r.final_score, opt(r.error_score));
    }
    write(path, &s)
}

pub fn write_failures(path: &Path, failures: &[RolloutFailure]) -> Result<()> {
    let mut s = String::from("model,segment_id,message\n");
    for f in failures {
        let _ = writeln!(s, "{},{},{}", field(&f.model), field(&f.segment_id), field(&f.message));
    }
    write(path, &s)
}

pub fn write_trajectory(path: &Path, traj: &SimulatedTrajectory) -> Result<()> {
    let mut s = String::from("t,x_l,v_l,x_f_obs,v_f_obs,x_f_sim,v_f_sim,a_f_sim\n");
    for p in &traj.steps {
        let _ = writeln!(s, "{},{},{},{},{},{},{},{}", p.t, p.x_l, p.v_l, p.x_obs, p.v_obs, p.x, p.v, p.a);
    }
    write(path, &s)
}

pub fn write_ga_history(path: &Path, ga: &GaResult) -> Result<()> {
    let mut s = String::from("generation,best_fitness\n");
    for (g, f) in ga.history.iter().enumerate() {
        let _ = writeln!(s, "{g},{f}");
    }
    write(path, &s)
}

pub fn write_trials(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let mut s = String::from("trial,status,mean_loss,fold_losses,values,reason\n");
    for t in trials {
        let (status, reason) = match &t.status {
            TrialStatus::Complete => ("complete", ""),
            TrialStatus::Pruned => ("pruned", ""),
            TrialStatus::Failed(r) => ("failed", r.as_str()),
        };
        let folds: Vec<String> = t.fold_losses.iter().map(f64::to_string).collect();
        let values: Vec<String> = t.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            t.index,
            status,
            opt(t.mean_loss),
            folds.join(";"),
            values.join(";"),
            field(reason)
        );
    }
    write(path, &s)
}

/// Horizontal bar chart of final scores, best model on top.
pub fn write_ranking_svg(path: &Path, ranking: &[RankedModel]) -> Result<()> {
    let finite: Vec<f64> = ranking.iter().map(|r| r.final_score).filter(|v| v.is_finite()).collect();
    let span = finite.iter().fold(1e-9f64, |m, v| m.max(v.abs()));
    let (w, row, label, pad) = (640.0, 28.0, 120.0, 20.0);
    let half = (w - label - 2.0 * pad) / 2.0;
    let axis = label + pad + half;
    let h = pad * 2.0 + row * ranking.len() as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<line x1=\"{axis}\" y1=\"{pad}\" x2=\"{axis}\" y2=\"{}\" stroke=\"#333\"/>", h - pad);
    for (i, r) in ranking.iter().enumerate() {
        let y = pad + row * i as f64;
        let v = if r.final_score.is_finite() { r.final_score } else { 0.0 };
        let len = v.abs() / span * half;
        let x = if v < 0.0 { axis - len } else { axis };
        let colour = if v < 0.0 { "#2b8a3e" } else { "#c92a2a" };
        let name = r.model.replace('&', "&amp;").replace('<', "&lt;");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}. {name}</text>",
            label,
            y + row * 0.65,
            r.rank
        );
        let _ = writeln!(
            s,
            "<rect x=\"{x}\" y=\"{}\" width=\"{len}\" height=\"{}\" fill=\"{colour}\"><title>{}</title></rect>",
            y + 4.0,
            row - 8.0,
            r.final_score
        );
    }
    s.push_str("</svg>\n");
    write(path, &s)
}
