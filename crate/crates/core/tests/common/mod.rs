//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use densitometer::nn::{cross_entropy_loss, BatchNorm, Mode, Network, RngStream, Tensor, Weighted};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_densitometer"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

pub fn run_cli(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Writes a small synthetic-data config into `dir` and returns its path.
pub fn synthetic_config(dir: &Path, extra_grid: &str, threads: usize) -> PathBuf {
    let text = format!(
        "[data]\ndataset = synthetic\nsynthetic_train = 300\nsynthetic_val = 100\nsynthetic_spread = 0.3\n\n\
         [grid]\nfamilies = mlp\nsizes = 0.1, 0.5\noptimizers = sgd\ninits = glorot, he\ninit_seeds = 0..2\ndata_seeds = 0\n{extra_grid}\n\
         [train]\nlearning_rate = 0.1\nepochs = 3\n\n[output]\ndir = out\n\n[run]\nthreads = {threads}\n"
    );
    let path = dir.join("grid.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn read_csv(path: &Path) -> Vec<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            header
                .iter()
                .cloned()
                .zip(l.split(',').map(str::to_string))
                .collect()
        })
        .collect()
}

fn f(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key]
        .parse()
        .unwrap_or_else(|_| panic!("column {key}: '{}'", row[key]))
}

/// Every `<tag .../>` element in document order.
pub fn elements<'a>(svg: &'a str, tag: &str) -> Vec<&'a str> {
    let open = format!("<{tag} ");
    let mut out = Vec::new();
    let mut rest = svg;
    while let Some(i) = rest.find(&open) {
        let end = rest[i..].find('>').unwrap() + i;
        out.push(&rest[i..=end]);
        rest = &rest[end..];
    }
    out
}

pub fn attr<'a>(element: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let i = element.find(&key)? + key.len();
    let j = element[i..].find('"')? + i;
    Some(&element[i..j])
}

fn num(element: &str, name: &str) -> f64 {
    attr(element, name).unwrap().parse().unwrap()
}

/// Pixel mapping reconstructed from the SVG root attributes.
pub struct Geometry {
    x: (f64, f64),
    y: (f64, f64),
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Geometry {
    pub fn from_svg(svg: &str) -> Self {
        let root = elements(svg, "svg")[0];
        let (w, h) = (num(root, "width"), num(root, "height"));
        Self {
            x: (num(root, "data-x-min"), num(root, "data-x-max")),
            y: (num(root, "data-y-min"), num(root, "data-y-max")),
            left: num(root, "data-margin-left"),
            right: w - num(root, "data-margin-right"),
            top: num(root, "data-margin-top"),
            bottom: h - num(root, "data-margin-bottom"),
        }
    }

    pub fn px(&self, v: f64) -> f64 {
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * (self.right - self.left)
    }

    pub fn py(&self, v: f64) -> f64 {
        self.bottom - (v - self.y.0) / (self.y.1 - self.y.0) * (self.bottom - self.top)
    }
}

const PX_TOL: f64 = 1e-3;

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= PX_TOL, "{what}: svg {a}, regenerated {b}");
}

fn parse_points(s: &str) -> Vec<(f64, f64)> {
    s.split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

fn assert_points(svg_points: &str, data: &[(f64, f64)], g: &Geometry, what: &str) {
    let pts = parse_points(svg_points);
    assert_eq!(pts.len(), data.len(), "{what}: point count");
    for ((sx, sy), (x, y)) in pts.iter().zip(data) {
        close(*sx, g.px(*x), what);
        close(*sy, g.py(*y), what);
    }
}

fn by_series<'a>(els: &[&'a str], id: &str) -> Vec<&'a str> {
    els.iter()
        .copied()
        .filter(|e| attr(e, "data-series") == Some(id))
        .collect()
}

fn group_rows(rows: &[HashMap<String, String>]) -> Vec<(String, Vec<&HashMap<String, String>>)> {
    let mut out: Vec<(String, Vec<&HashMap<String, String>>)> = Vec::new();
    for r in rows {
        let id = format!("{}/{}", r["series"], r["size"]);
        match out.iter_mut().find(|(k, _)| *k == id) {
            Some((_, v)) => v.push(r),
            None => out.push((id, vec![r])),
        }
    }
    out
}

fn check_bar(rect: &str, g: &Geometry, center: f64, width: f64, value: f64, what: &str) {
    close(num(rect, "x"), g.px(center - width / 2.0), what);
    close(num(rect, "y"), g.py(value), what);
    close(
        num(rect, "x") + num(rect, "width"),
        g.px(center + width / 2.0),
        what,
    );
    close(num(rect, "y") + num(rect, "height"), g.py(0.0), what);
}

fn check_err(line: &str, g: &Geometry, center: f64, mean: f64, std: f64, what: &str) {
    close(num(line, "x1"), g.px(center), what);
    close(num(line, "y1"), g.py(mean - std), what);
    close(num(line, "y2"), g.py(mean + std), what);
}

/// Rebuilds the plotted geometry of every figure from its sibling CSV and
/// compares it with the SVG. Returns the number of checked elements.
pub fn verify_figures(dir: &Path) -> usize {
    let mut checked = 0;
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();

    let svg = read("trajectory.svg");
    let g = Geometry::from_svg(&svg);
    let rows = read_csv(&dir.join("trajectory.csv"));
    let (lines, bands) = (elements(&svg, "polyline"), elements(&svg, "polygon"));
    let groups = group_rows(&rows);
    assert_eq!(lines.len(), groups.len());
    for (id, rs) in &groups {
        let line = by_series(&lines, id);
        assert_eq!(line.len(), 1, "{id}");
        let pts: Vec<(f64, f64)> = rs
            .iter()
            .map(|r| (f(r, "density_pct"), f(r, "mean_acc_pct")))
            .collect();
        assert_points(attr(line[0], "points").unwrap(), &pts, &g, id);
        let band = by_series(&bands, id);
        if rs.iter().any(|r| f(r, "std_acc_pct") > 0.0) {
            let mut ring: Vec<(f64, f64)> = rs
                .iter()
                .map(|r| {
                    (
                        f(r, "density_pct"),
                        f(r, "mean_acc_pct") + f(r, "std_acc_pct"),
                    )
                })
                .collect();
            ring.extend(rs.iter().rev().map(|r| {
                (
                    f(r, "density_pct"),
                    f(r, "mean_acc_pct") - f(r, "std_acc_pct"),
                )
            }));
            assert_points(attr(band[0], "points").unwrap(), &ring, &g, id);
            checked += 1;
        } else {
            assert!(band.is_empty(), "{id} has a band with zero std");
        }
        checked += 1;
    }

    let svg = read("ed_kde.svg");
    let g = Geometry::from_svg(&svg);
    let rows = read_csv(&dir.join("ed_kde.csv"));
    let lines = elements(&svg, "polyline");
    let groups = group_rows(&rows);
    assert_eq!(lines.len(), groups.len());
    for (id, rs) in &groups {
        let pts: Vec<(f64, f64)> = rs.iter().map(|r| (f(r, "x"), f(r, "density"))).collect();
        assert_points(
            attr(by_series(&lines, id)[0], "points").unwrap(),
            &pts,
            &g,
            id,
        );
        checked += 1;
    }

    let svg = read("unpruned.svg");
    let g = Geometry::from_svg(&svg);
    let rects: Vec<&str> = elements(&svg, "rect")
        .into_iter()
        .filter(|e| attr(e, "class") == Some("bar"))
        .collect();
    let errs = elements(&svg, "line");
    let width = densitometer::orchestrator::report::BAR_WIDTH;
    for r in read_csv(&dir.join("unpruned.csv")) {
        let id = format!("{}/{}", r["series"], r["size"]);
        let c = f(&r, "category");
        let bars = by_series(&rects, &id);
        let total = bars
            .iter()
            .find(|b| attr(b, "data-kind") == Some("total"))
            .unwrap();
        let unpruned = bars
            .iter()
            .find(|b| attr(b, "data-kind") == Some("unpruned"))
            .unwrap();
        check_bar(total, &g, c - width / 2.0, width, f(&r, "arch_total"), &id);
        check_bar(
            unpruned,
            &g,
            c + width / 2.0,
            width,
            f(&r, "unpruned_mean"),
            &id,
        );
        check_err(
            by_series(&errs, &id)[0],
            &g,
            c + width / 2.0,
            f(&r, "unpruned_mean"),
            f(&r, "unpruned_std"),
            &id,
        );
        checked += 3;
    }

    let svg = read("init_compare.svg");
    let g = Geometry::from_svg(&svg);
    let rects: Vec<&str> = elements(&svg, "rect")
        .into_iter()
        .filter(|e| attr(e, "class") == Some("bar"))
        .collect();
    let errs = elements(&svg, "line");
    for r in read_csv(&dir.join("init_compare.csv")) {
        let id = format!("{}/{}", r["group"], r["size"]);
        let offset = if r["init"] == "glorot" {
            -width / 2.0
        } else {
            width / 2.0
        };
        let c = f(&r, "category") + offset;
        let bar = rects
            .iter()
            .find(|b| {
                attr(b, "data-series") == Some(id.as_str())
                    && attr(b, "data-kind") == Some(r["init"].as_str())
            })
            .unwrap();
        let err = errs
            .iter()
            .find(|b| {
                attr(b, "data-series") == Some(id.as_str())
                    && attr(b, "data-kind") == Some(r["init"].as_str())
            })
            .unwrap();
        check_bar(bar, &g, c, width, f(&r, "ed_mean"), &id);
        check_err(err, &g, c, f(&r, "ed_mean"), f(&r, "ed_std"), &id);
        checked += 2;
    }
    checked
}

const REL_TOL: f64 = 1e-4;
const STEP: f64 = 1e-6;

pub fn weighted(name: &str, shape: &[usize], stream: &mut RngStream) -> Weighted<f64> {
    let fan_in: usize = shape[1..].iter().product();
    let bound = (3.0 / fan_in as f64).sqrt();
    Weighted {
        name: name.into(),
        weight: stream.uniform(-bound, bound, shape).unwrap(),
        bias: stream.uniform(-0.1, 0.1, &shape[..1]).unwrap(),
        mask: None,
    }
}

pub fn batch(stream: &mut RngStream, shape: &[usize]) -> (Tensor<f64>, Vec<usize>) {
    let x = stream.uniform(-1.0, 1.0, shape).unwrap();
    let labels = (0..shape[0]).map(|i| i % 10).collect();
    (x, labels)
}

pub fn loss(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let (logits, _) = net.forward(x, Mode::Train).unwrap();
    cross_entropy_loss(&logits, labels).unwrap().0
}

/// Compares analytic gradients with central differences on up to
/// `per_tensor` coordinates of every parameter tensor. Returns the number
/// of coordinates checked.
pub fn check_gradients(
    mut net: Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    per_tensor: usize,
) -> usize {
    let (logits, cache) = net.forward(x, Mode::Train).unwrap();
    let (_, dlogits) = cross_entropy_loss(&logits, labels).unwrap();
    let grads = net.backward(&cache, &dlogits).unwrap();
    let mut pick = RngStream::keyed("gradcheck-coords", 0, 0);
    let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
    let mut checked = 0;
    for (p, name) in names.iter().enumerate() {
        let len = net.parameters()[p].1.len();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor)
                .map(|_| pick.below(len as u64) as usize)
                .collect()
        };
        for &k in &coords {
            let orig = net.parameters()[p].1.data()[k];
            net.parameters_mut()[p].1.data_mut()[k] = orig + STEP;
            let up = loss(&net, x, labels);
            net.parameters_mut()[p].1.data_mut()[k] = orig - STEP;
            let down = loss(&net, x, labels);
            net.parameters_mut()[p].1.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads.tensors[p].data()[k];
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
            assert!(
                rel < REL_TOL || (numeric - analytic).abs() < 1e-9,
                "{name}[{k}]: analytic {analytic}, numeric {numeric}, rel {rel}"
            );
            checked += 1;
        }
    }
    checked
}

pub fn bn(name: &str, c: usize, s: &mut RngStream) -> BatchNorm<f64> {
    let mut b = BatchNorm::new(name, c);
    b.gamma = s.uniform(0.5, 1.5, &[c]).unwrap();
    b.beta = s.uniform(-0.2, 0.2, &[c]).unwrap();
    b
}
