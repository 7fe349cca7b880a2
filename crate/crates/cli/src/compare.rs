//! Paired comparison of two session reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use rbse_core::stats::mean;
use rbse_core::{wilcoxon_signed_rank, WilcoxonResult};

use crate::output::{fmt_float, Table};

pub const COMPARE_HEADER: [&str; 13] = [
    "metric",
    "n",
    "statistic",
    "p_two_sided",
    "mean_diff",
    "p_less",
    "p_greater",
    "arm_a",
    "arm_b",
    "manifest_hash_a",
    "seed_a",
    "manifest_hash_b",
    "seed_b",
];

#[derive(Debug, Clone, Deserialize)]
pub struct SessionCsvRow {
    pub manifest_hash: String,
    pub seed: u64,
    pub arm: String,
    pub user: usize,
    pub auc: String,
    pub rep: usize,
    pub slot: usize,
    pub phrase_id: usize,
    pub completed: u8,
    pub elapsed_ms: f64,
}

/// `(user, auc, rep, slot, phrase_id)`; AUC is compared as written.
type PairKey = (usize, String, usize, usize, usize);

fn key(r: &SessionCsvRow) -> PairKey {
    (r.user, r.auc.clone(), r.rep, r.slot, r.phrase_id)
}

/// Accepts a `sessions.csv` file or a directory containing one.
pub fn sessions_path(report: &Path) -> PathBuf {
    if report.is_dir() {
        report.join("sessions.csv")
    } else {
        report.to_path_buf()
    }
}

pub fn read_sessions(report: &Path) -> Result<Vec<SessionCsvRow>> {
    let path = sessions_path(report);
    let text = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut reader = csv::Reader::from_reader(text.as_slice());
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<SessionCsvRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Rows of one arm; the arm may be omitted when the report has only one.
pub fn select_arm(rows: Vec<SessionCsvRow>, arm: Option<&str>, label: &str) -> Result<(String, Vec<SessionCsvRow>)> {
    let arms: BTreeSet<String> = rows.iter().map(|r| r.arm.clone()).collect();
    let chosen = match arm {
        Some(a) if arms.contains(a) => a.to_string(),
        Some(a) => bail!("report {label} has no arm {a:?}; arms: {}", join(&arms)),
        None if arms.len() == 1 => arms.into_iter().next().expect("one arm"),
        None if arms.is_empty() => bail!("report {label} has no sessions"),
        None => bail!("report {label} has several arms ({}); choose one with --arm-{label}", join(&arms)),
    };
    let rows = rows.into_iter().filter(|r| r.arm == chosen).collect();
    Ok((chosen, rows))
}

fn join(items: &BTreeSet<String>) -> String {
    items.iter().cloned().collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucBand {
    pub min: f64,
    pub max: f64,
}

impl AucBand {
    fn contains(&self, auc: &str) -> Result<bool> {
        let v: f64 = auc.parse().with_context(|| format!("auc value {auc:?}"))?;
        Ok(v >= self.min && v <= self.max)
    }
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub metric: &'static str,
    pub mean_diff: f64,
    pub test: std::result::Result<WilcoxonResult, String>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub arm_a: String,
    pub arm_b: String,
    pub users: usize,
    pub metrics: Vec<MetricRow>,
    pub provenance_a: (String, u64),
    pub provenance_b: (String, u64),
}

fn provenance(rows: &[SessionCsvRow]) -> (String, u64) {
    rows.first().map(|r| (r.manifest_hash.clone(), r.seed)).unwrap_or_default()
}

/// Elapsed ms, completed phrases and phrase count of one session.
type SessionTotals = (f64, usize, usize);

/// Per-user mean session TTD (minutes) and mean phrase completion.
fn per_user(rows: &[SessionCsvRow]) -> BTreeMap<(usize, String), (f64, f64)> {
    let mut sessions: BTreeMap<(usize, String), BTreeMap<usize, SessionTotals>> = BTreeMap::new();
    for r in rows {
        let entry = sessions.entry((r.user, r.auc.clone())).or_default().entry(r.rep).or_default();
        entry.0 += r.elapsed_ms;
        entry.1 += usize::from(r.completed);
        entry.2 += 1;
    }
    sessions
        .into_iter()
        .map(|(user, reps)| {
            let ttd: Vec<f64> = reps.values().map(|s| s.0 / 60_000.0).collect();
            let done: usize = reps.values().map(|s| s.1).sum();
            let total: usize = reps.values().map(|s| s.2).sum();
            (user, (mean(&ttd), done as f64 / total as f64))
        })
        .collect()
}

pub fn compare(
    a: Vec<SessionCsvRow>,
    b: Vec<SessionCsvRow>,
    arm_a: Option<&str>,
    arm_b: Option<&str>,
    band: Option<AucBand>,
) -> Result<Comparison> {
    let (name_a, mut a) = select_arm(a, arm_a, "a")?;
    let (name_b, mut b) = select_arm(b, arm_b, "b")?;
    if let Some(band) = band {
        let keep = |rows: Vec<SessionCsvRow>| -> Result<Vec<SessionCsvRow>> {
            let mut out = Vec::with_capacity(rows.len());
            for r in rows {
                if band.contains(&r.auc)? {
                    out.push(r);
                }
            }
            Ok(out)
        };
        a = keep(a)?;
        b = keep(b)?;
    }
    let keys_a: BTreeSet<PairKey> = a.iter().map(key).collect();
    let keys_b: BTreeSet<PairKey> = b.iter().map(key).collect();
    if keys_a != keys_b {
        let missing: Vec<String> = keys_a
            .symmetric_difference(&keys_b)
            .take(10)
            .map(|(u, auc, rep, slot, id)| {
                let side = if keys_a.contains(&(*u, auc.clone(), *rep, *slot, *id)) { "b" } else { "a" };
                format!("missing in {side}: user={u} auc={auc} rep={rep} slot={slot} phrase_id={id}")
            })
            .collect();
        let total = keys_a.symmetric_difference(&keys_b).count();
        bail!("reports cannot be paired ({total} unmatched keys):\n  {}", missing.join("\n  "));
    }
    if keys_a.is_empty() {
        bail!("no sessions to compare");
    }
    let ua = per_user(&a);
    let ub = per_user(&b);
    let (ttd_a, ppc_a): (Vec<f64>, Vec<f64>) = ua.values().copied().unzip();
    let (ttd_b, ppc_b): (Vec<f64>, Vec<f64>) = ub.values().copied().unzip();
    let metric = |name: &'static str, x: &[f64], y: &[f64]| {
        let diffs: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        MetricRow { metric: name, mean_diff: mean(&diffs), test: wilcoxon_signed_rank(x, y).map_err(|e| e.to_string()) }
    };
    Ok(Comparison {
        users: ua.len(),
        metrics: vec![metric("ttd_minutes", &ttd_a, &ttd_b), metric("ppc", &ppc_a, &ppc_b)],
        provenance_a: provenance(&a),
        provenance_b: provenance(&b),
        arm_a: name_a,
        arm_b: name_b,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut t = Table::new(&COMPARE_HEADER)?;
        for m in &self.metrics {
            let (n, stat, p2, pl, pg) = match &m.test {
                Ok(w) => (
                    w.n.to_string(),
                    fmt_float(w.statistic),
                    fmt_float(w.p_two_sided),
                    fmt_float(w.p_less),
                    fmt_float(w.p_greater),
                ),
                Err(_) => ("0".into(), String::new(), String::new(), String::new(), String::new()),
            };
            t.row([
                m.metric.to_string(),
                n,
                stat,
                p2,
                fmt_float(m.mean_diff),
                pl,
                pg,
                self.arm_a.clone(),
                self.arm_b.clone(),
                self.provenance_a.0.clone(),
                self.provenance_a.1.to_string(),
                self.provenance_b.0.clone(),
                self.provenance_b.1.to_string(),
            ])?;
        }
        t.into_bytes()
    }

    /// Human-readable lines, one per metric.
    pub fn describe(&self) -> Vec<String> {
        self.metrics
            .iter()
            .map(|m| {
                let direction = if m.mean_diff < 0.0 {
                    "lower"
                } else if m.mean_diff > 0.0 {
                    "higher"
                } else {
                    "equal"
                };
                match &m.test {
                    Ok(w) => format!(
                        "{}: {} is {direction} than {} by {} on average over {} users (W={}, p={}, p_less={}, p_greater={})",
                        m.metric,
                        self.arm_a,
                        self.arm_b,
                        fmt_float(m.mean_diff.abs()),
                        self.users,
                        fmt_float(w.statistic),
                        fmt_float(w.p_two_sided),
                        fmt_float(w.p_less),
                        fmt_float(w.p_greater),
                    ),
                    Err(e) => format!("{}: no test possible: {e}", m.metric),
                }
            })
            .collect()
    }

    pub fn all_failed(&self) -> bool {
        self.metrics.iter().all(|m| m.test.is_err())
    }
}
