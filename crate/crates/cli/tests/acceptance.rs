//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbse_core::evidence::{
    auc, gaussian_evidence_model, rda_fit, sample_evidence, sigma_point_estimates, synth_calibration, Density,
    EvidenceModel,
};
use rbse_core::inference::posterior_update_log_ratios;
use rbse_core::language_model::{BUNDLED_CORPUS, BUNDLED_PHRASES};
use rbse_core::paradigms::{alp_codeword_pool, rcp_matrix, Paradigm};
use rbse_core::query::{discrete_derivative, greedy_select, q_value, CandidatePool, QueryObjective};
use rbse_core::stats::{beta_fit_ci, mean};
use rbse_core::{
    normalize, run_study, wilcoxon_signed_rank, ArmSpec, NgramModel, Pmf, PhrasePool, StudyConfig, StudyReport,
    Trial, Vocabulary,
};

/// Twelve simulated users: the six levels plus repeats of the mid-range.
const USERS: [f64; 12] = [0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.70, 0.75, 0.80, 0.85, 0.75, 0.80];
const STUDY_SEED: u64 = 2024;
const ALPHA: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn criterion(id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|_| verdict(false, "panicked"));
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = v.pass && in_time;
    let timing = if in_time { String::new() } else { format!(" (over time limit {limit:?})") };
    println!(
        "{} criterion {id} {name}: {} [{:.2}s]{timing}",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn random_posterior(rng: &mut ChaCha8Rng, n: usize) -> Pmf {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    normalize(&w).unwrap()
}

fn random_trials(rng: &mut ChaCha8Rng, n: usize, count: usize, max_size: usize) -> Vec<Trial> {
    let mut out: Vec<Trial> = Vec::with_capacity(count);
    while out.len() < count {
        let size = rng.random_range(1..=max_size);
        let mut s: Vec<usize> = (0..n).collect();
        s.shuffle(rng);
        let t = Trial::new(s[..size].iter().copied(), n).unwrap();
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn structural_constants() -> Verdict {
    let pool = alp_codeword_pool(6, 3).unwrap().len();
    let m = rcp_matrix(4, 7, 28).unwrap();
    let rows = m.rows();
    let weights_ok = (0..28).all(|x| m.row_weight(x) == 2);
    let mut max_overlap = 0;
    for a in 0..28 {
        for b in a + 1..28 {
            let shared = (0..m.codeword_length()).filter(|&j| rows[a][j] == 1 && rows[b][j] == 1).count();
            max_overlap = max_overlap.max(shared);
        }
    }
    let pass = pool == 41
        && rows.len() == 28
        && m.rows_distinct()
        && m.codeword_length() == 11
        && weights_ok
        && max_overlap <= 1;
    verdict(
        pass,
        format!(
            "ALP pool {pool}; RCP {} codewords, length {}, distinct {}, weight-2 {weights_ok}, max overlap {max_overlap}",
            rows.len(),
            m.codeword_length(),
            m.rows_distinct()
        ),
    )
}

fn objective_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_modular: f64 = 0.0;
    for _ in 0..500 {
        let obj = QueryObjective::new(random_posterior(&mut rng, 28), 1.0 + 20.0 * rng.random::<f64>()).unwrap();
        let trials = random_trials(&mut rng, 28, 12, 10);
        let in_a: Vec<bool> = (0..12).map(|_| rng.random()).collect();
        let in_b: Vec<bool> = (0..12).map(|_| rng.random()).collect();
        let pick = |f: &dyn Fn(usize) -> bool| -> Vec<Trial> {
            trials.iter().enumerate().filter(|(i, _)| f(*i)).map(|(_, t)| t.clone()).collect()
        };
        let lhs = q_value(&obj, &pick(&|i| in_a[i] || in_b[i])) + q_value(&obj, &pick(&|i| in_a[i] && in_b[i]));
        let rhs = q_value(&obj, &pick(&|i| in_a[i])) + q_value(&obj, &pick(&|i| in_b[i]));
        let base = pick(&|i| i < 11 && in_a[i]);
        let mut grown = base.clone();
        grown.push(trials[11].clone());
        let gain = discrete_derivative(&obj, &base, &trials[11]).unwrap();
        let increment = q_value(&obj, &grown) - q_value(&obj, &base);
        let alone = q_value(&obj, &trials[11..]) - q_value(&obj, &[]);
        worst_modular = worst_modular.max((lhs - rhs).abs()).max((gain - increment).abs()).max((gain - alone).abs());
    }
    let mut worst_monotone: f64 = 0.0;
    for _ in 0..500 {
        let obj = QueryObjective::new(random_posterior(&mut rng, 28), 1.0 + 20.0 * rng.random::<f64>()).unwrap();
        let mut prefix = Vec::new();
        let mut last = q_value(&obj, &prefix);
        for t in random_trials(&mut rng, 28, 10, 14) {
            prefix.push(t);
            let next = q_value(&obj, &prefix);
            worst_monotone = worst_monotone.max(last - next);
            last = next;
        }
    }
    let mut greedy_mismatches = 0;
    for _ in 0..200 {
        let obj = QueryObjective::new(random_posterior(&mut rng, 8), 1.0 + 20.0 * rng.random::<f64>()).unwrap();
        let size = rng.random_range(3..=36);
        let pool = CandidatePool::new(random_trials(&mut rng, 8, size, 8), 3, 3).unwrap();
        let c = pool.candidates();
        let mut best = f64::NEG_INFINITY;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                for k in j + 1..c.len() {
                    best = best.max(q_value(&obj, &[c[i].clone(), c[j].clone(), c[k].clone()]));
                }
            }
        }
        // Re-sum in pool order so the comparison is exact.
        let chosen = greedy_select(&obj, &pool).unwrap().into_trials();
        let in_pool_order: Vec<Trial> = c.iter().filter(|t| chosen.contains(t)).cloned().collect();
        if q_value(&obj, &in_pool_order) != best {
            greedy_mismatches += 1;
        }
    }
    let pass = worst_modular <= 1e-9 && worst_monotone <= 1e-9 && greedy_mismatches == 0;
    verdict(
        pass,
        format!(
            "modularity error {worst_modular:.2e}, monotonicity violation {worst_monotone:.2e}, \
             greedy mismatches {greedy_mismatches}/200"
        ),
    )
}

fn inference_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = gaussian_evidence_model(0.8).unwrap();
    let mut worst: f64 = 0.0;
    let mut rank_mismatches = 0;
    for _ in 0..200 {
        let n = 28;
        let prior = normalize(&(0..n).map(|_| rng.random::<f64>() + 0.01).collect::<Vec<_>>()).unwrap();
        let target = rng.random_range(0..n);
        let sequences: Vec<(Vec<Trial>, Vec<f64>)> = (0..rng.random_range(1..=8))
            .map(|_| {
                let trials = random_trials(&mut rng, n, 14, n / 2);
                let lr = trials
                    .iter()
                    .map(|t| model.log_ratio(model.sample(u8::from(t.contains(target)), &mut rng)))
                    .collect();
                (trials, lr)
            })
            .collect();
        let run = |seqs: &[(Vec<Trial>, Vec<f64>)]| {
            seqs.iter().fold(prior.clone(), |p, (t, lr)| posterior_update_log_ratios(&p, t, lr).unwrap())
        };
        let recursive = run(&sequences);
        let mut batch = prior.weights().to_vec();
        for (trials, lr) in &sequences {
            for (t, l) in trials.iter().zip(lr) {
                for &m in t.members() {
                    batch[m] *= l.exp();
                }
            }
        }
        let z: f64 = batch.iter().sum();
        for (a, b) in recursive.weights().iter().zip(&batch) {
            worst = worst.max((a - b / z).abs());
        }
    }
    // Permutation check stays clear of the probability floor, which is not
    // order-invariant once it binds.
    for _ in 0..200 {
        let n = 28;
        let prior = normalize(&(0..n).map(|_| rng.random::<f64>() + 0.01).collect::<Vec<_>>()).unwrap();
        let mut sequences: Vec<(Vec<Trial>, Vec<f64>)> = (0..4)
            .map(|_| {
                let trials = random_trials(&mut rng, n, 6, n / 2);
                let lr = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
                (trials, lr)
            })
            .collect();
        let run = |seqs: &[(Vec<Trial>, Vec<f64>)]| {
            seqs.iter().fold(prior.clone(), |p, (t, lr)| posterior_update_log_ratios(&p, t, lr).unwrap())
        };
        let forward = run(&sequences);
        sequences.shuffle(&mut rng);
        if run(&sequences).ranked() != forward.ranked() {
            rank_mismatches += 1;
        }
    }
    verdict(
        worst <= 1e-9 && rank_mismatches == 0,
        format!("max |recursive - batch| {worst:.2e}, rank-order mismatches {rank_mismatches}/200"),
    )
}

fn evidence_oracles() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for d in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let model = EvidenceModel::new(
            Density::Gaussian { mean: d / 2.0, sd: 1.0 },
            Density::Gaussian { mean: -d / 2.0, sd: 1.0 },
        )
        .unwrap();
        let s = sigma_point_estimates(&model);
        let rel = (s.sigma_plus / (d * d).exp() - 1.0).abs();
        let minus = (s.sigma_minus - 1.0).abs();
        pass &= rel < 0.01 && minus < 1e-3;
        details.push(format!("d={d}: rel {rel:.1e}, |s-1| {minus:.1e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for target in [0.6, 0.7, 0.8, 0.9] {
        let model = gaussian_evidence_model(target).unwrap();
        let t: Vec<f64> = (0..100_000).map(|_| sample_evidence(&model, 1, &mut rng)).collect();
        let n: Vec<f64> = (0..100_000).map(|_| sample_evidence(&model, 0, &mut rng)).collect();
        let a = auc(&t, &n);
        pass &= (a - target).abs() <= 0.01;
        details.push(format!("auc {target}->{a:.4}"));
    }
    verdict(pass, details.join("; "))
}

fn rda_edges() -> Verdict {
    let data = synth_calibration(6, 30, 40, 1.0, 5).unwrap();
    let g1 = rda_fit(&data, 0.4, 1.0).unwrap();
    let mut scalar = true;
    for class in [0u8, 1] {
        let c = g1.covariance(class);
        let diag = c[(0, 0)];
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                scalar &= c[(i, j)] == if i == j { diag } else { 0.0 };
            }
        }
    }
    let l1 = rda_fit(&data, 1.0, 0.3).unwrap();
    let equal = l1.covariance(0) == l1.covariance(1);
    verdict(scalar && equal, format!("gamma=1 scalar {scalar}, lambda=1 equal {equal}"))
}

fn fixtures() -> (NgramModel, PhrasePool) {
    let lm = NgramModel::train(&Vocabulary::english(), BUNDLED_CORPUS, 6).unwrap();
    let pool = PhrasePool::parse(&lm, BUNDLED_PHRASES).unwrap();
    (lm, pool)
}

fn study(active: Paradigm, baseline: Paradigm) -> StudyReport {
    let (lm, pool) = fixtures();
    let mut config =
        StudyConfig::from_auc_levels(vec![ArmSpec::new(baseline), ArmSpec::new(active)], &USERS, 20, STUDY_SEED)
            .unwrap();
    config.workers = Some(8);
    run_study(&config, &lm, &pool).unwrap()
}

/// Per-user mean session TTD and PPC of one arm, in user order.
fn per_user(report: &StudyReport, arm: &str, band: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    (0..USERS.len())
        .filter(|&u| USERS[u] >= band.0 - 1e-12 && USERS[u] <= band.1 + 1e-12)
        .map(|u| {
            let s: Vec<_> = report.sessions_for(arm).filter(|s| s.user == u).collect();
            (
                mean(&s.iter().map(|s| s.ttd_minutes()).collect::<Vec<_>>()),
                mean(&s.iter().map(|s| s.ppc()).collect::<Vec<_>>()),
            )
        })
        .unzip()
}

fn ttd_claim(report: &StudyReport, active: &str, baseline: &str) -> (bool, String) {
    let (ta, _) = per_user(report, active, (0.0, 1.0));
    let (tb, _) = per_user(report, baseline, (0.0, 1.0));
    match wilcoxon_signed_rank(&ta, &tb) {
        Ok(w) => {
            let ok = mean(&ta) < mean(&tb) && w.p_less < ALPHA;
            (ok, format!("TTD {:.2} vs {:.2} min, one-sided p {:.2e}", mean(&ta), mean(&tb), w.p_less))
        }
        Err(e) => (false, format!("TTD test failed: {e}")),
    }
}

fn rsvp_claims() -> Verdict {
    let report = study(Paradigm::Arsvp { trials_per_sequence: 14 }, Paradigm::RsvpRandom { trials_per_sequence: 14 });
    let (ttd_ok, ttd) = ttd_claim(&report, "arsvp", "rsvp_random");
    let (_, pa) = per_user(&report, "arsvp", (0.7, 0.9));
    let (_, pb) = per_user(&report, "rsvp_random", (0.7, 0.9));
    let (ppc_ok, ppc) = match wilcoxon_signed_rank(&pa, &pb) {
        Ok(w) => (
            mean(&pa) >= mean(&pb) && w.p_greater < ALPHA,
            format!("PPC[0.7,0.9] {:.3} vs {:.3}, one-sided p {:.2e}", mean(&pa), mean(&pb), w.p_greater),
        ),
        Err(e) => (false, format!("PPC test failed: {e}")),
    };
    verdict(ttd_ok && ppc_ok, format!("{ttd}; {ppc}"))
}

fn scp_claims() -> Verdict {
    let report = study(Paradigm::Ascp { trials_per_sequence: 14 }, Paradigm::Scp {});
    let (ok, detail) = ttd_claim(&report, "ascp", "scp");
    verdict(ok, detail)
}

fn matrix_claims() -> Verdict {
    let report =
        study(Paradigm::Alp { codeword_length: 6, max_weight: 3 }, Paradigm::Rcp { rows: 4, cols: 7 });
    let (ttd_ok, ttd) = ttd_claim(&report, "alp", "rcp");
    let (_, pa) = per_user(&report, "alp", (0.0, 1.0));
    let (_, pb) = per_user(&report, "rcp", (0.0, 1.0));
    let ppc_ok = mean(&pa) >= mean(&pb) - 0.02;
    verdict(ttd_ok && ppc_ok, format!("{ttd}; PPC {:.3} vs {:.3} (margin 0.02)", mean(&pa), mean(&pb)))
}

fn statistics() -> Verdict {
    let w = wilcoxon_signed_rank(&[3.0, 1.0, 4.0, 1.5, 5.0, 9.0], &[0.0; 6]).unwrap();
    let fit = beta_fit_ci(&[0.9, 0.7, 0.8, 1.0, 0.6, 0.85, 0.95, 0.75, 0.9, 0.8], 0.9).unwrap();
    let lo = fit.cdf(fit.lo).unwrap_or(f64::NAN);
    let hi = fit.cdf(fit.hi).unwrap_or(f64::NAN);
    let pass = w.p_two_sided == 0.03125 && (lo - 0.05).abs() <= 1e-6 && (hi - 0.95).abs() <= 1e-6;
    verdict(pass, format!("exact p {}, CDF at endpoints ({lo:.9}, {hi:.9})", w.p_two_sided))
}

fn rbse(args: &[&str], env_out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rbse"))
        .args(args)
        .env("ARBSE_OUT_DIR", env_out)
        .output()
        .expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let manifest: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", "rsvp.json"].iter().collect();
    let manifest = manifest.to_str().unwrap();
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let dir = root.path().join(run);
        std::fs::create_dir_all(&dir).unwrap();
        let sim = dir.join("sim");
        let sim_s = sim.to_str().unwrap().to_string();
        let steps: Vec<Vec<String>> = vec![
            vec!["simulate".into(), "--manifest".into(), manifest.into(), "--reps".into(), "3".into(), "--out".into(), sim_s.clone()],
            vec!["calibrate".into(), "--synth".into(), "--seed".into(), "4".into(), "--out".into(), dir.join("model.json").to_str().unwrap().into()],
            vec!["calibrate".into(), "--auc".into(), "0.8".into(), "--out".into(), dir.join("gauss.json").to_str().unwrap().into()],
            vec!["codebook".into(), "alp".into(), "--out".into(), dir.join("alp.csv").to_str().unwrap().into()],
            vec!["compare".into(), sim_s.clone(), sim_s.clone(), "--arm-a".into(), "arsvp".into(), "--arm-b".into(), "rsvp_random".into(), "--out".into(), dir.join("compare.csv").to_str().unwrap().into()],
        ];
        for step in &steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            let out = rbse(&args, &dir);
            if !out.status.success() {
                return verdict(false, format!("{} failed: {}", step[0], String::from_utf8_lossy(&out.stderr)));
            }
        }
        let mut files = read_dir_sorted(&dir);
        files.extend(read_dir_sorted(&sim).into_iter().map(|(n, b)| (format!("sim/{n}"), b)));
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    verdict(same && names.len() == 8, format!("{} files compared: {}", names.len(), names.join(", ")))
}

fn main() {
    let minute = Duration::from_secs(60);
    let results = [
        criterion(1, "structural constants", Duration::from_secs(1), structural_constants),
        criterion(2, "objective correctness", Duration::from_secs(30), objective_correctness),
        criterion(3, "inference correctness", Duration::from_secs(10), inference_correctness),
        criterion(4, "evidence oracles", Duration::from_secs(30), evidence_oracles),
        criterion(5, "RDA edge cases", Duration::from_secs(1), rda_edges),
        criterion(6, "ARSVP vs random RSVP", 10 * minute, rsvp_claims),
        criterion(7, "ASCP vs SCP", 10 * minute, scp_claims),
        criterion(8, "ALP vs RCP", 10 * minute, matrix_claims),
        criterion(9, "statistics", Duration::from_secs(1), statistics),
        criterion(10, "determinism", 10 * minute, determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
