//! Density aggregation, significance tests and kernel density estimates.

mod special;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model_zoo::{count_prunable_weights, Family};
use crate::record::RunRecord;
use crate::trainer::OptimizerKind;

pub use special::{f_upper_tail, ln_gamma, regularized_incomplete_beta, t_two_tailed};

/// Smallest reportable p-value.
pub const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DensitySample {
    pub init_seed: u64,
    pub data_seed: u64,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityGroup {
    pub family: Family,
    pub optimizer: OptimizerKind,
    pub size: f64,
    pub samples: Vec<DensitySample>,
}

impl DensityGroup {
    pub fn new(family: Family, optimizer: OptimizerKind, size: f64) -> Self {
        Self {
            family,
            optimizer,
            size,
            samples: Vec::new(),
        }
    }

    /// Adds a sample, rejecting densities outside `[0, 1]` and repeated seed pairs.
    pub fn push(&mut self, init_seed: u64, data_seed: u64, density: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::Stats(format!("density {density} outside [0, 1]")));
        }
        if self
            .samples
            .iter()
            .any(|s| s.init_seed == init_seed && s.data_seed == data_seed)
        {
            return Err(Error::Stats(format!(
                "duplicate seed pair ({init_seed}, {data_seed}) in size {} group",
                self.size
            )));
        }
        self.samples.push(DensitySample {
            init_seed,
            data_seed,
            density,
        });
        Ok(())
    }

    pub fn densities(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.density).collect()
    }
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn summarize(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Stats(format!(
            "standard deviation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    AnovaOneway,
    TTestUnpaired,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub kind: TestKind,
    /// F for ANOVA, t for the t-test.
    pub statistic: f64,
    /// `[k - 1, N - k]` for ANOVA, `[n_a + n_b - 2]` for the t-test.
    pub df: Vec<f64>,
    #[serde(serialize_with = "serialize_p")]
    pub p: f64,
    /// Set when the true p-value is below [`P_FLOOR`]; `p` then holds the floor.
    #[serde(skip)]
    pub floored: bool,
}

fn serialize_p<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if *p <= P_FLOOR {
        s.serialize_str("<1e-12")
    } else {
        s.serialize_f64(*p)
    }
}

fn floor_p(p: f64) -> (f64, bool) {
    if p < P_FLOOR {
        (P_FLOOR, true)
    } else {
        (p.min(1.0), false)
    }
}

/// Mean as an offset from the first sample, exact for constant input.
fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Classical one-way ANOVA.
pub fn anova_oneway(groups: &[&[f64]]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::Stats("ANOVA needs at least 2 groups".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::Stats(format!(
            "ANOVA needs at least 2 samples per group, got {}",
            g.len()
        )));
    }
    let k = groups.len() as f64;
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let n = n as f64;
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let grand = mean(&pooled);
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let (d1, d2) = (k - 1.0, n - k);
    let df = vec![d1, d2];
    if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(Error::Stats("ANOVA on all-identical data".into()));
        }
        return Ok(TestResult {
            kind: TestKind::AnovaOneway,
            statistic: f64::INFINITY,
            df,
            p: P_FLOOR,
            floored: true,
        });
    }
    let f = (ssb / d1) / (ssw / d2);
    let (p, floored) = floor_p(f_upper_tail(f, d1, d2)?);
    Ok(TestResult {
        kind: TestKind::AnovaOneway,
        statistic: f,
        df,
        p,
        floored,
    })
}

/// Student's equal-variance unpaired t-test, two-tailed.
pub fn t_test_unpaired(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats(format!(
            "t-test needs at least 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let ss: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>()
        + b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>();
    let df = na + nb - 2.0;
    let result = |statistic, p, floored| TestResult {
        kind: TestKind::TTestUnpaired,
        statistic,
        df: vec![df],
        p,
        floored,
    };
    if ss == 0.0 {
        return Ok(if ma == mb {
            result(0.0, 1.0, false)
        } else {
            let t = if ma > mb {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            result(t, P_FLOOR, true)
        });
    }
    let pooled = ss / df;
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let (p, floored) = floor_p(t_two_tailed(t, df)?);
    Ok(result(t, p, floored))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule, `1.06 · σ̂ · n^(-1/5)`.
    Auto,
    Fixed(f64),
}

pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let sigma = match samples.len() {
        0 => return Err(Error::Stats("KDE needs at least 1 sample".into())),
        1 => 0.0,
        _ => summarize(samples)?.1,
    };
    if sigma == 0.0 {
        return Err(Error::Stats(
            "samples have zero variance; pass an explicit bandwidth".into(),
        ));
    }
    Ok(1.06 * sigma * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate evaluated at each grid point.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: Bandwidth) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Stats("KDE needs at least 1 sample".into()));
    }
    let h = match bandwidth {
        Bandwidth::Auto => silverman_bandwidth(samples)?,
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::Stats(format!("bandwidth must be > 0, got {h}"))),
    };
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            let s: f64 = samples
                .iter()
                .map(|&xi| {
                    let u = (x - xi) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            s * norm
        })
        .collect())
}

/// Density the target would show if it kept exactly as many weights as its
/// seed-matched 1x counterpart, capped at 1.
pub fn null_hypothesis_density(target: &RunRecord, counterpart: &RunRecord) -> Result<f64> {
    if !target.coords.matches_except_size(&counterpart.coords) {
        return Err(Error::Stats(format!(
            "run {} and counterpart {} differ in family, optimizer, init or seeds",
            target.run_id, counterpart.run_id
        )));
    }
    if counterpart.coords.size != 1.0 {
        return Err(Error::Stats(format!(
            "counterpart {} has size {}, expected 1",
            counterpart.run_id, counterpart.coords.size
        )));
    }
    let total = count_prunable_weights(&target.coords.spec());
    Ok((counterpart.unpruned_count as f64 / total as f64).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeRow {
    pub size: f64,
    pub n: usize,
    pub observed_mean: f64,
    pub observed_std: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub t: f64,
    pub df: f64,
    #[serde(serialize_with = "serialize_p")]
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnovaSummary {
    #[serde(rename = "F")]
    pub f: f64,
    pub df: Vec<f64>,
    #[serde(serialize_with = "serialize_p")]
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupStats {
    pub family: Family,
    pub optimizer: OptimizerKind,
    pub init: crate::model_zoo::InitScheme,
    pub anova: Option<AnovaSummary>,
    pub sizes: Vec<SizeRow>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StatsReport {
    pub threshold_pp: f64,
    pub groups: Vec<GroupStats>,
}

impl StatsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Groups records by (family, optimizer, init), then by size, and runs the
/// ANOVA across sizes plus an observed-vs-null t-test per size. Sizes with
/// fewer than 2 runs, or without a 1x counterpart for every run, get no row.
pub fn compute_stats(records: &[RunRecord], threshold_pp: f64) -> Result<StatsReport> {
    let mut keys: Vec<(Family, OptimizerKind, crate::model_zoo::InitScheme)> = Vec::new();
    for r in records {
        let key = (r.coords.family, r.coords.optimizer, r.coords.init);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_by_key(|k| (k.0.as_str(), k.1.to_string(), k.2.as_str()));
    let mut groups = Vec::new();
    for (family, optimizer, init) in keys {
        let members: Vec<&RunRecord> = records
            .iter()
            .filter(|r| {
                r.coords.family == family
                    && r.coords.optimizer == optimizer
                    && r.coords.init == init
            })
            .collect();
        let mut sizes: Vec<f64> = members.iter().map(|r| r.coords.size).collect();
        sizes.sort_by(f64::total_cmp);
        sizes.dedup();
        let mut rows = Vec::new();
        let mut observed_groups: Vec<Vec<f64>> = Vec::new();
        for &size in &sizes {
            let mut runs: Vec<&RunRecord> = members
                .iter()
                .copied()
                .filter(|r| r.coords.size == size)
                .collect();
            runs.sort_by_key(|r| (r.coords.init_seed, r.coords.data_seed));
            let mut group = DensityGroup::new(family, optimizer, size);
            for r in &runs {
                group.push(r.coords.init_seed, r.coords.data_seed, r.effective_density)?;
            }
            let observed = group.densities();
            if observed.len() < 2 {
                continue;
            }
            observed_groups.push(observed.clone());
            let null: Option<Vec<f64>> = runs
                .iter()
                .map(|r| {
                    members
                        .iter()
                        .find(|c| c.coords.size == 1.0 && c.coords.matches_except_size(&r.coords))
                        .map(|c| null_hypothesis_density(r, c))
                })
                .collect::<Option<Result<Vec<f64>>>>()
                .transpose()?;
            let Some(null) = null else { continue };
            let (observed_mean, observed_std) = summarize(&observed)?;
            let (null_mean, null_std) = summarize(&null)?;
            let t = t_test_unpaired(&observed, &null)?;
            rows.push(SizeRow {
                size,
                n: observed.len(),
                observed_mean,
                observed_std,
                null_mean,
                null_std,
                t: t.statistic,
                df: t.df[0],
                p: t.p,
            });
        }
        let anova = if observed_groups.len() >= 2 {
            let refs: Vec<&[f64]> = observed_groups.iter().map(|g| g.as_slice()).collect();
            match anova_oneway(&refs) {
                Ok(a) => Some(AnovaSummary {
                    f: a.statistic,
                    df: a.df,
                    p: a.p,
                }),
                Err(_) => None,
            }
        } else {
            None
        };
        groups.push(GroupStats {
            family,
            optimizer,
            init,
            anova,
            sizes: rows,
        });
    }
    Ok(StatsReport {
        threshold_pp,
        groups,
    })
}
