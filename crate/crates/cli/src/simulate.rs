//! Report files for a finished study.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;

use rbse_core::stats::{beta_fit_ci, mean, sample_sd};
use rbse_core::{SessionReport, StudyReport};

use crate::manifest::Manifest;
use crate::output::{fmt_float, Table};

/// Central mass of the PPC intervals.
pub const PPC_INTERVAL_MASS: f64 = 0.9;

pub const SESSIONS_HEADER: [&str; 15] = [
    "manifest_hash",
    "seed",
    "arm",
    "user",
    "auc",
    "rep",
    "slot",
    "phrase_id",
    "level",
    "completed",
    "outcome",
    "elapsed_ms",
    "epochs",
    "sequences",
    "trials",
];

pub struct Provenance {
    pub manifest_hash: String,
    pub seed: u64,
}

pub fn sessions_csv(report: &StudyReport, prov: &Provenance) -> Result<Vec<u8>> {
    let mut t = Table::new(&SESSIONS_HEADER)?;
    for row in &report.rows {
        let r = &row.record;
        let outcome = serde_json::to_value(r.outcome)?;
        t.row([
            prov.manifest_hash.clone(),
            prov.seed.to_string(),
            row.arm.clone(),
            row.user.to_string(),
            fmt_float(row.auc),
            row.rep.to_string(),
            row.slot.to_string(),
            r.phrase_id.to_string(),
            r.level.to_string(),
            u8::from(r.completed()).to_string(),
            outcome.as_str().unwrap_or_default().to_string(),
            fmt_float(r.elapsed_ms),
            r.epoch_count().to_string(),
            r.sequences.to_string(),
            r.trials.to_string(),
        ])?;
    }
    t.into_bytes()
}

#[derive(Debug, Clone, Serialize)]
pub struct Interval {
    pub mass: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmSummary {
    pub arm: String,
    pub sessions: usize,
    pub mean_ttd_minutes: f64,
    pub sd_ttd_minutes: f64,
    pub mean_ppc: f64,
    pub ppc_interval: Interval,
}

#[derive(Debug, Clone, Serialize)]
pub struct UserArm {
    pub arm: String,
    pub mean_ttd_minutes: f64,
    pub sd_ttd_minutes: f64,
    pub mean_ppc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UserSummary {
    pub user: usize,
    pub auc: f64,
    pub arms: Vec<UserArm>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub manifest_hash: &'a str,
    pub seed: u64,
    pub manifest: &'a Manifest,
    pub arms: Vec<ArmSummary>,
    pub users: Vec<UserSummary>,
}

fn ppc_interval(sessions: &[&SessionReport]) -> Result<Interval> {
    let ppc: Vec<f64> = sessions.iter().map(|s| s.ppc()).collect();
    if ppc.len() < 2 {
        let m = mean(&ppc);
        return Ok(Interval { mass: PPC_INTERVAL_MASS, lo: m, hi: m });
    }
    let fit = beta_fit_ci(&ppc, PPC_INTERVAL_MASS)?;
    Ok(Interval { mass: PPC_INTERVAL_MASS, lo: fit.lo, hi: fit.hi })
}

fn ttd(sessions: &[&SessionReport]) -> Vec<f64> {
    sessions.iter().map(|s| s.ttd_minutes()).collect()
}

fn ppc(sessions: &[&SessionReport]) -> Vec<f64> {
    sessions.iter().map(|s| s.ppc()).collect()
}

/// Arms in first-appearance order.
pub fn arm_names(report: &StudyReport) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for s in &report.sessions {
        if !names.contains(&s.arm) {
            names.push(s.arm.clone());
        }
    }
    names
}

fn users(report: &StudyReport) -> BTreeMap<usize, f64> {
    report.sessions.iter().map(|s| (s.user, s.auc)).collect()
}

fn cell<'a>(report: &'a StudyReport, arm: &str, user: usize) -> Vec<&'a SessionReport> {
    report.sessions_for(arm).filter(|s| s.user == user).collect()
}

pub fn summary_json(report: &StudyReport, manifest: &Manifest, prov: &Provenance) -> Result<Vec<u8>> {
    let names = arm_names(report);
    let mut arms = Vec::new();
    for name in &names {
        let sessions: Vec<&SessionReport> = report.sessions_for(name).collect();
        arms.push(ArmSummary {
            arm: name.clone(),
            sessions: sessions.len(),
            mean_ttd_minutes: mean(&ttd(&sessions)),
            sd_ttd_minutes: sample_sd(&ttd(&sessions)),
            mean_ppc: mean(&ppc(&sessions)),
            ppc_interval: ppc_interval(&sessions)?,
        });
    }
    let users = users(report)
        .into_iter()
        .map(|(user, auc)| UserSummary {
            user,
            auc,
            arms: names
                .iter()
                .map(|name| {
                    let s = cell(report, name, user);
                    UserArm {
                        arm: name.clone(),
                        mean_ttd_minutes: mean(&ttd(&s)),
                        sd_ttd_minutes: sample_sd(&ttd(&s)),
                        mean_ppc: mean(&ppc(&s)),
                    }
                })
                .collect(),
        })
        .collect();
    let summary = Summary { manifest_hash: &prov.manifest_hash, seed: prov.seed, manifest, arms, users };
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Per-user mean TTD of every non-adaptive arm against every adaptive arm.
pub fn ttd_scatter_csv(report: &StudyReport, adaptive: &[String], prov: &Provenance) -> Result<Vec<u8>> {
    let mut t = Table::new(&[
        "manifest_hash",
        "seed",
        "user",
        "auc",
        "baseline",
        "active",
        "baseline_ttd_mean",
        "baseline_ttd_sd",
        "active_ttd_mean",
        "active_ttd_sd",
    ])?;
    let names = arm_names(report);
    for baseline in names.iter().filter(|n| !adaptive.contains(n)) {
        for active in names.iter().filter(|n| adaptive.contains(n)) {
            for (user, auc) in users(report) {
                let b = ttd(&cell(report, baseline, user));
                let a = ttd(&cell(report, active, user));
                t.row([
                    prov.manifest_hash.clone(),
                    prov.seed.to_string(),
                    user.to_string(),
                    fmt_float(auc),
                    baseline.clone(),
                    active.clone(),
                    fmt_float(mean(&b)),
                    fmt_float(sample_sd(&b)),
                    fmt_float(mean(&a)),
                    fmt_float(sample_sd(&a)),
                ])?;
            }
        }
    }
    t.into_bytes()
}

/// Mean PPC with a Beta interval per arm and AUC level, pooling users
/// that share a level.
pub fn ppc_auc_csv(report: &StudyReport, prov: &Provenance) -> Result<Vec<u8>> {
    let mut t = Table::new(&[
        "manifest_hash",
        "seed",
        "arm",
        "auc",
        "users",
        "sessions",
        "mean_ppc",
        "interval_mass",
        "ppc_lo",
        "ppc_hi",
    ])?;
    let mut levels: Vec<f64> = report.sessions.iter().map(|s| s.auc).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    for name in arm_names(report) {
        for &auc in &levels {
            let sessions: Vec<&SessionReport> =
                report.sessions_for(&name).filter(|s| s.auc.to_bits() == auc.to_bits()).collect();
            let mut user_ids: Vec<usize> = sessions.iter().map(|s| s.user).collect();
            user_ids.dedup();
            let interval = ppc_interval(&sessions)?;
            t.row([
                prov.manifest_hash.clone(),
                prov.seed.to_string(),
                name.clone(),
                fmt_float(auc),
                user_ids.len().to_string(),
                sessions.len().to_string(),
                fmt_float(mean(&ppc(&sessions))),
                fmt_float(interval.mass),
                fmt_float(interval.lo),
                fmt_float(interval.hi),
            ])?;
        }
    }
    t.into_bytes()
}
