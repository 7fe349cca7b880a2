/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (target, nontarget) pairs ordered correctly, ties counted one half.
///
/// Runs in `O(n log n)` using average ranks over the pooled sample.
pub fn auc(targets: &[f64], nontargets: &[f64]) -> f64 {
    assert!(!targets.is_empty() && !nontargets.is_empty(), "auc needs both classes");
    let mut pooled: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut target_rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks are 1-based; tied block i..=j shares the mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let hits = pooled[i..=j].iter().filter(|p| p.1).count();
        target_rank_sum += mean_rank * hits as f64;
        i = j + 1;
    }
    let n1 = targets.len() as f64;
    let n0 = nontargets.len() as f64;
    let u = target_rank_sum - n1 * (n1 + 1.0) / 2.0;
    u / (n1 * n0)
}
