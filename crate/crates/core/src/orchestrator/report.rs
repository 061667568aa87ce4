//! SVG figures with sibling CSVs holding the exact plotted numbers.
//!
//! Every figure maps data to pixels through a [`Frame`] whose bounds are
//! written on the SVG root as `data-x-min`, `data-x-max`, `data-y-min` and
//! `data-y-max`, so the geometry can be rebuilt from the CSV alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model_zoo::{count_prunable_weights, InitScheme};
use crate::pruner::PruneTrajectory;
use crate::record::RunRecord;
use crate::stats::{compute_stats, kde, silverman_bandwidth, Bandwidth, StatsReport};

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 400.0;
pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_RIGHT: f64 = 160.0;
pub const MARGIN_TOP: f64 = 20.0;
pub const MARGIN_BOTTOM: f64 = 50.0;
/// KDE evaluation points across densities 0..=1.
pub const KDE_POINTS: usize = 201;
/// Bandwidth used when a size group has zero spread or a single run.
pub const KDE_FALLBACK_BANDWIDTH: f64 = 0.02;
/// Bar width in category units.
pub const BAR_WIDTH: f64 = 0.35;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Linear data-to-pixel mapping over the fixed plot area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT
            + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT
            - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Pixel coordinate as written into the SVG.
pub fn coord(v: f64) -> String {
    format!("{v:.3}")
}

fn upper_bound(max: f64) -> f64 {
    if max > 0.0 && max.is_finite() {
        max * 1.05
    } else {
        1.0
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn series_key(r: &RunRecord) -> String {
    format!(
        "{}/{}/{}",
        r.coords.family, r.coords.optimizer, r.coords.init
    )
}

/// Distinct `(series, size)` pairs in sorted order with their member runs.
fn size_groups(records: &[RunRecord]) -> Vec<(String, f64, Vec<&RunRecord>)> {
    let mut keys: Vec<(String, f64)> = records
        .iter()
        .map(|r| (series_key(r), r.coords.size))
        .collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(s, size)| {
            let members = records
                .iter()
                .filter(|r| series_key(r) == s && r.coords.size == size)
                .collect();
            (s, size, members)
        })
        .collect()
}

struct Svg {
    body: String,
    frame: Frame,
    legend: usize,
}

impl Svg {
    fn new(frame: Frame, title: &str, x_axis: XAxis, x_label: &str, y_label: &str) -> Self {
        let mut body = String::new();
        let (l, r) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (t, b) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            body,
            r##"<rect class="plot-area" x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        let x_ticks: Vec<(f64, String)> = match x_axis {
            XAxis::Numeric => nice_ticks(frame.x_min, frame.x_max)
                .into_iter()
                .map(|v| (v, tick_label(v)))
                .collect(),
            XAxis::Categories(names) => names
                .into_iter()
                .enumerate()
                .map(|(i, n)| (i as f64, n))
                .collect(),
        };
        for (fx, label) in x_ticks {
            let _ = writeln!(
                body,
                r#"<text class="tick" x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
                coord(frame.px(fx)),
                b + 14.0,
                escape(&label)
            );
        }
        for fy in nice_ticks(frame.y_min, frame.y_max) {
            let _ = writeln!(
                body,
                r#"<text class="tick" x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#,
                l - 4.0,
                coord(frame.py(fy) + 3.0),
                tick_label(fy)
            );
        }
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            body,
            r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(y_label)
        );
        let _ = writeln!(
            body,
            r#"<text x="{}" y="14" font-size="12" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            escape(title)
        );
        Self {
            body,
            frame,
            legend: 0,
        }
    }

    fn legend(&mut self, label: &str, color: &str) {
        let x = WIDTH - MARGIN_RIGHT + 10.0;
        let y = MARGIN_TOP + 10.0 + 16.0 * self.legend as f64;
        let _ = writeln!(
            self.body,
            r#"<rect class="legend" x="{x}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="10">{}</text>"#,
            y - 8.0,
            x + 14.0,
            y + 1.0,
            escape(label)
        );
        self.legend += 1;
    }

    fn points(&self, xy: impl Iterator<Item = (f64, f64)>) -> String {
        xy.map(|(x, y)| format!("{},{}", coord(self.frame.px(x)), coord(self.frame.py(y))))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn finish(self) -> String {
        let f = self.frame;
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
             data-x-min=\"{}\" data-x-max=\"{}\" data-y-min=\"{}\" data-y-max=\"{}\" \
             data-margin-left=\"{MARGIN_LEFT}\" data-margin-right=\"{MARGIN_RIGHT}\" data-margin-top=\"{MARGIN_TOP}\" data-margin-bottom=\"{MARGIN_BOTTOM}\">\n{}</svg>\n",
            f.x_min, f.x_max, f.y_min, f.y_max, self.body
        )
    }
}

enum XAxis {
    Numeric,
    /// One label per integer position `0..n`.
    Categories(Vec<String>),
}

/// Multiples of a 1, 2 or 5 step inside `[min, max]`, about five of them.
fn nice_ticks(min: f64, max: f64) -> Vec<f64> {
    let span = max - min;
    if span <= 0.0 || !span.is_finite() {
        return vec![min];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (min / step).ceil() as i64;
    let last = (max / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{}k", v / 1e3)
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn size_label(size: f64) -> String {
    format!("{size}x")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub struct Figure {
    pub name: &'static str,
    pub svg: String,
    pub csv: String,
}

/// Mean ± std validation accuracy (percent) against density (percent) per
/// size. Groups whose std is zero everywhere get a line without a band.
pub fn trajectory_figure(
    records: &[RunRecord],
    trajectories: &[PruneTrajectory],
) -> Result<Figure> {
    let mut csv = String::from("series,size,cycle,density_pct,mean_acc_pct,std_acc_pct,n\n");
    let mut rows: Vec<(String, f64, Vec<(f64, f64, f64)>)> = Vec::new();
    for (series, size, members) in size_groups(records) {
        let trajs: Vec<&PruneTrajectory> = members
            .iter()
            .map(|r| {
                trajectories
                    .iter()
                    .find(|t| t.run_id == r.run_id)
                    .ok_or_else(|| Error::invalid(format!("no trajectory for run {}", r.run_id)))
            })
            .collect::<Result<_>>()?;
        let cycles = trajs[0].cycles.len();
        if trajs.iter().any(|t| t.cycles.len() != cycles) {
            return Err(Error::invalid(format!(
                "trajectories of {series} {size}x differ in length"
            )));
        }
        let mut pts = Vec::with_capacity(cycles);
        for c in 0..cycles {
            let accs: Vec<f64> = trajs
                .iter()
                .map(|t| t.cycles[c].val_accuracy * 100.0)
                .collect();
            let (mean, std) = mean_std(&accs);
            let density = trajs[0].cycles[c].density * 100.0;
            let _ = writeln!(
                csv,
                "{series},{size},{c},{density},{mean},{std},{}",
                accs.len()
            );
            pts.push((density, mean, std));
        }
        rows.push((series, size, pts));
    }
    let y_max = rows
        .iter()
        .flat_map(|r| r.2.iter().map(|p| p.1 + p.2))
        .fold(0.0, f64::max);
    let frame = Frame {
        x_min: 0.0,
        x_max: 100.0,
        y_min: 0.0,
        y_max: upper_bound(y_max),
    };
    let mut svg = Svg::new(
        frame,
        "Pruning trajectories",
        XAxis::Numeric,
        "density (%)",
        "validation accuracy (%)",
    );
    for (i, (series, size, pts)) in rows.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let id = format!("{series}/{size}");
        if pts.iter().any(|p| p.2 > 0.0) {
            let band = svg.points(
                pts.iter()
                    .map(|p| (p.0, p.1 + p.2))
                    .chain(pts.iter().rev().map(|p| (p.0, p.1 - p.2))),
            );
            let _ = writeln!(
                svg.body,
                r#"<polygon class="band" data-series="{id}" points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#
            );
        }
        let line = svg.points(pts.iter().map(|p| (p.0, p.1)));
        let _ = writeln!(
            svg.body,
            r#"<polyline class="line" data-series="{id}" points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        svg.legend(&format!("{series} {}", size_label(*size)), color);
    }
    Ok(Figure {
        name: "trajectory",
        svg: svg.finish(),
        csv,
    })
}

/// Evaluation grid for the density KDE.
pub fn kde_grid() -> Vec<f64> {
    (0..KDE_POINTS)
        .map(|i| i as f64 / (KDE_POINTS - 1) as f64)
        .collect()
}

/// Gaussian KDE of effective density per size, Silverman bandwidth with a
/// fixed fallback for degenerate groups.
pub fn kde_figure(records: &[RunRecord]) -> Result<Figure> {
    let grid = kde_grid();
    let mut csv = String::from("series,size,bandwidth,x,density\n");
    let mut curves = Vec::new();
    for (series, size, members) in size_groups(records) {
        let eds: Vec<f64> = members.iter().map(|r| r.effective_density).collect();
        let h = silverman_bandwidth(&eds).unwrap_or(KDE_FALLBACK_BANDWIDTH);
        let ys = kde(&eds, &grid, Bandwidth::Fixed(h))?;
        for (x, y) in grid.iter().zip(&ys) {
            let _ = writeln!(csv, "{series},{size},{h},{x},{y}");
        }
        curves.push((
            format!("{series}/{size}"),
            format!("{series} {}", size_label(size)),
            ys,
        ));
    }
    let y_max = curves
        .iter()
        .flat_map(|c| c.2.iter().copied())
        .fold(0.0, f64::max);
    let frame = Frame {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: upper_bound(y_max),
    };
    let mut svg = Svg::new(
        frame,
        "Effective density",
        XAxis::Numeric,
        "effective density",
        "estimated frequency",
    );
    for (i, (id, label, ys)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let line = svg.points(grid.iter().copied().zip(ys.iter().copied()));
        let _ = writeln!(
            svg.body,
            r#"<polyline class="line" data-series="{id}" points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        svg.legend(label, color);
    }
    Ok(Figure {
        name: "ed_kde",
        svg: svg.finish(),
        csv,
    })
}

fn bar(
    svg: &mut Svg,
    id: &str,
    kind: &str,
    center: f64,
    value: f64,
    std: Option<f64>,
    color: &str,
) {
    let f = svg.frame;
    let (x0, x1) = (
        f.px(center - BAR_WIDTH / 2.0),
        f.px(center + BAR_WIDTH / 2.0),
    );
    let (top, base) = (f.py(value), f.py(0.0));
    let _ = writeln!(
        svg.body,
        r#"<rect class="bar" data-series="{id}" data-kind="{kind}" x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
        coord(x0),
        coord(top),
        coord(x1 - x0),
        coord(base - top)
    );
    if let Some(s) = std {
        let _ = writeln!(
            svg.body,
            r##"<line class="err" data-series="{id}" data-kind="{kind}" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#000"/>"##,
            coord(f.py(value - s)),
            coord(f.py(value + s)),
            x = coord(f.px(center))
        );
    }
}

/// Per size: mean absolute unpruned weight count (± std) next to the
/// architecture's total prunable count.
pub fn unpruned_figure(records: &[RunRecord]) -> Result<Figure> {
    let mut csv = String::from("category,series,size,arch_total,unpruned_mean,unpruned_std,n\n");
    let mut rows = Vec::new();
    for (i, (series, size, members)) in size_groups(records).into_iter().enumerate() {
        let total = count_prunable_weights(&members[0].coords.spec()) as f64;
        let counts: Vec<f64> = members.iter().map(|r| r.unpruned_count as f64).collect();
        let (mean, std) = mean_std(&counts);
        let _ = writeln!(
            csv,
            "{i},{series},{size},{total},{mean},{std},{}",
            counts.len()
        );
        rows.push((format!("{series}/{size}"), total, mean, std, size));
    }
    let y_max = rows.iter().map(|r| r.1.max(r.2 + r.3)).fold(0.0, f64::max);
    let series_count = {
        let mut s: Vec<&str> = rows
            .iter()
            .map(|r| r.0.rsplit_once('/').map_or("", |p| p.0))
            .collect();
        s.dedup();
        s.len()
    };
    let names = rows
        .iter()
        .map(|r| {
            if series_count > 1 {
                format!(
                    "{} {}",
                    r.0.rsplit_once('/').map_or("", |p| p.0),
                    size_label(r.4)
                )
            } else {
                size_label(r.4)
            }
        })
        .collect();
    let frame = Frame {
        x_min: -0.5,
        x_max: rows.len() as f64 - 0.5,
        y_min: 0.0,
        y_max: upper_bound(y_max),
    };
    let mut svg = Svg::new(
        frame,
        "Unpruned vs total weights",
        XAxis::Categories(names),
        "size",
        "weights",
    );
    for (i, (id, total, mean, std, _)) in rows.iter().enumerate() {
        let c = i as f64;
        bar(
            &mut svg,
            id,
            "total",
            c - BAR_WIDTH / 2.0,
            *total,
            None,
            "#bbbbbb",
        );
        bar(
            &mut svg,
            id,
            "unpruned",
            c + BAR_WIDTH / 2.0,
            *mean,
            Some(*std),
            PALETTE[0],
        );
    }
    svg.legend("architecture total", "#bbbbbb");
    svg.legend("unpruned at ED", PALETTE[0]);
    Ok(Figure {
        name: "unpruned",
        svg: svg.finish(),
        csv,
    })
}

/// Mean effective density (± std) per size for each init scheme side by side.
pub fn init_figure(records: &[RunRecord]) -> Result<Figure> {
    let mut cats: Vec<(String, f64)> = records
        .iter()
        .map(|r| {
            (
                format!("{}/{}", r.coords.family, r.coords.optimizer),
                r.coords.size,
            )
        })
        .collect();
    cats.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cats.dedup();
    let mut csv = String::from("category,group,size,init,ed_mean,ed_std,n\n");
    let mut bars = Vec::new();
    for (i, (group, size)) in cats.iter().enumerate() {
        for (j, init) in [InitScheme::Glorot, InitScheme::He].into_iter().enumerate() {
            let eds: Vec<f64> = records
                .iter()
                .filter(|r| {
                    format!("{}/{}", r.coords.family, r.coords.optimizer) == *group
                        && r.coords.size == *size
                        && r.coords.init == init
                })
                .map(|r| r.effective_density)
                .collect();
            if eds.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&eds);
            let _ = writeln!(csv, "{i},{group},{size},{init},{mean},{std},{}", eds.len());
            bars.push((i, j, format!("{group}/{size}"), init, mean, std));
        }
    }
    let y_max = bars.iter().map(|b| b.4 + b.5).fold(0.0, f64::max);
    let groups: Vec<&str> = {
        let mut g: Vec<&str> = cats.iter().map(|c| c.0.as_str()).collect();
        g.dedup();
        g
    };
    let names = cats
        .iter()
        .map(|(g, size)| {
            if groups.len() > 1 {
                format!("{g} {}", size_label(*size))
            } else {
                size_label(*size)
            }
        })
        .collect();
    let frame = Frame {
        x_min: -0.5,
        x_max: cats.len() as f64 - 0.5,
        y_min: 0.0,
        y_max: upper_bound(y_max),
    };
    let mut svg = Svg::new(
        frame,
        "Effective density by initialization",
        XAxis::Categories(names),
        "size",
        "effective density",
    );
    for (i, j, id, init, mean, std) in &bars {
        let center = *i as f64
            + if *j == 0 {
                -BAR_WIDTH / 2.0
            } else {
                BAR_WIDTH / 2.0
            };
        bar(
            &mut svg,
            id,
            init.as_str(),
            center,
            *mean,
            Some(*std),
            PALETTE[*j],
        );
    }
    for (j, init) in [InitScheme::Glorot, InitScheme::He].into_iter().enumerate() {
        if bars.iter().any(|b| b.3 == init) {
            svg.legend(init.as_str(), PALETTE[j]);
        }
    }
    Ok(Figure {
        name: "init_compare",
        svg: svg.finish(),
        csv,
    })
}

/// Writes `stats.json` and every figure (SVG plus CSV) under `out/figures`.
/// Returns the written paths.
pub fn emit_report(
    records: &[RunRecord],
    trajectories: &[PruneTrajectory],
    stats: &StatsReport,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::invalid("report needs at least one finished run"));
    }
    let dir = out.join("figures");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut written = Vec::new();
    let mut write = |path: PathBuf, text: &str| -> Result<()> {
        std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
        written.push(path);
        Ok(())
    };
    write(out.join("stats.json"), &stats.to_json()?)?;
    for fig in [
        trajectory_figure(records, trajectories)?,
        kde_figure(records)?,
        unpruned_figure(records)?,
        init_figure(records)?,
    ] {
        write(dir.join(format!("{}.svg", fig.name)), &fig.svg)?;
        write(dir.join(format!("{}.csv", fig.name)), &fig.csv)?;
    }
    Ok(written)
}

/// Loads runs, trajectories and statistics from a grid directory, then
/// calls [`emit_report`].
pub fn emit_report_from_dir(out: &Path, threshold_pp: f64) -> Result<Vec<PathBuf>> {
    let records = super::finished_records(out)?;
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "{} has no finished runs",
            out.join("runs.csv").display()
        )));
    }
    let trajectories = records
        .iter()
        .map(|r| super::load_trajectory(out, r))
        .collect::<Result<Vec<_>>>()?;
    let stats = compute_stats(&records, threshold_pp)?;
    emit_report(&records, &trajectories, &stats, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_zoo::Family;
    use crate::pruner::CycleRecord;
    use crate::record::RunCoordinates;
    use crate::trainer::OptimizerKind;

    fn record(size: f64, init_seed: u64, ed: f64) -> RunRecord {
        let coords = RunCoordinates {
            family: Family::Mlp,
            size,
            optimizer: OptimizerKind::Sgd,
            init: InitScheme::Glorot,
            init_seed,
            data_seed: 0,
        };
        let total = count_prunable_weights(&coords.spec());
        RunRecord {
            run_id: format!("r{size}-{init_seed}"),
            coords,
            stop_epoch: 1,
            baseline_accuracy: 0.95,
            baseline_loss: 0.2,
            effective_density: ed,
            unpruned_count: (ed * total as f64).round() as usize,
            prunable_count: total,
            checkpoint_path: String::new(),
            trajectory_path: String::new(),
        }
    }

    fn trajectory(run_id: &str, drop: f64) -> PruneTrajectory {
        PruneTrajectory {
            run_id: run_id.into(),
            baseline_accuracy: 0.95,
            baseline_loss: 0.2,
            cycles: (0..=3)
                .map(|c| CycleRecord {
                    cycle: c,
                    density: 1.0 - c as f64 / 3.0,
                    val_accuracy: 0.95 - drop * c as f64,
                    val_loss: 0.2,
                })
                .collect(),
        }
    }

    #[test]
    fn ticks_use_round_steps() {
        assert_eq!(
            nice_ticks(0.0, 100.0),
            vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0]
        );
        let labels: Vec<String> = nice_ticks(0.0, 0.7).into_iter().map(tick_label).collect();
        assert_eq!(labels, ["0", "0.2", "0.4", "0.6"]);
        assert_eq!(nice_ticks(-0.5, 2.5), vec![0.0, 1.0, 2.0]);
        assert_eq!(nice_ticks(3.0, 3.0), vec![3.0]);
        assert_eq!(tick_label(0.30000000000000004), "0.3");
        assert_eq!(tick_label(200_000.0), "200k");
    }

    #[test]
    fn frame_maps_corners() {
        let f = Frame {
            x_min: 0.0,
            x_max: 10.0,
            y_min: 0.0,
            y_max: 5.0,
        };
        assert_eq!(f.px(0.0), MARGIN_LEFT);
        assert_eq!(f.px(10.0), WIDTH - MARGIN_RIGHT);
        assert_eq!(f.py(0.0), HEIGHT - MARGIN_BOTTOM);
        assert_eq!(f.py(5.0), MARGIN_TOP);
    }

    #[test]
    fn single_record_has_line_without_band() {
        let r = record(0.1, 0, 0.5);
        let fig = trajectory_figure(&[r.clone()], &[trajectory(&r.run_id, 0.1)]).unwrap();
        assert_eq!(fig.svg.matches("<polyline").count(), 1);
        assert!(!fig.svg.contains("<polygon"));
    }

    #[test]
    fn two_records_have_band() {
        let (a, b) = (record(0.1, 0, 0.5), record(0.1, 1, 0.6));
        let fig = trajectory_figure(
            &[a.clone(), b.clone()],
            &[trajectory(&a.run_id, 0.1), trajectory(&b.run_id, 0.2)],
        )
        .unwrap();
        assert_eq!(fig.svg.matches("<polygon").count(), 1);
    }

    #[test]
    fn missing_trajectory_is_error() {
        assert!(trajectory_figure(&[record(0.1, 0, 0.5)], &[]).is_err());
    }

    #[test]
    fn degenerate_kde_uses_fallback_bandwidth() {
        let fig = kde_figure(&[record(0.1, 0, 0.5), record(0.1, 1, 0.5)]).unwrap();
        let line = fig.csv.lines().nth(1).unwrap();
        assert_eq!(
            line.split(',').nth(2).unwrap().parse::<f64>().unwrap(),
            KDE_FALLBACK_BANDWIDTH
        );
    }

    #[test]
    fn empty_input_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], &[], &StatsReport::default(), dir.path()).is_err());
    }

    #[test]
    fn emits_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = record(1.0, 0, 0.4);
        let files = emit_report(
            &[r.clone()],
            &[trajectory(&r.run_id, 0.1)],
            &StatsReport::default(),
            dir.path(),
        )
        .unwrap();
        assert_eq!(files.len(), 9);
        assert!(files.iter().all(|p| p.exists()));
    }
}
