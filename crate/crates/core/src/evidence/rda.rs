//! Regularized discriminant analysis over calibration feature vectors.
//!
//! Class covariances are shrunk toward the pooled covariance with weight
//! `lambda` and then blended toward a scaled identity with weight `gamma`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::auc::auc;
use crate::error::{Error, Result};

/// Labeled feature vectors; label 1 is target, 0 is nontarget.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub features: Vec<DVector<f64>>,
    pub labels: Vec<u8>,
}

impl CalibrationSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    fn subset(&self, indices: &[usize]) -> CalibrationSet {
        CalibrationSet {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Two unit-covariance Gaussian classes whose means differ by a vector of
/// norm `separation`. Targets come first.
pub fn synth_calibration(
    dims: usize,
    n_target: usize,
    n_nontarget: usize,
    separation: f64,
    seed: u64,
) -> Result<CalibrationSet> {
    if dims == 0 {
        return Err(Error::InvalidParameter("dims must be at least 1".into()));
    }
    if n_target < 2 || n_nontarget < 2 {
        return Err(Error::InvalidParameter("each class needs at least two samples".into()));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidParameter("separation must be finite and nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = separation / (dims as f64).sqrt();
    let mut features = Vec::with_capacity(n_target + n_nontarget);
    let mut labels = Vec::with_capacity(n_target + n_nontarget);
    for (label, count) in [(1u8, n_target), (0u8, n_nontarget)] {
        for _ in 0..count {
            let offset = if label == 1 { shift } else { 0.0 };
            features.push(DVector::from_fn(dims, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + offset
            }));
            labels.push(label);
        }
    }
    Ok(CalibrationSet { features, labels })
}

#[derive(Debug, Clone)]
struct ClassGaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    log_det: f64,
}

impl ClassGaussian {
    fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        let factor = covariance.clone().cholesky();
        let log_det = factor
            .as_ref()
            .map_or(f64::NAN, |c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>());
        let factor = factor.filter(|_| log_det.is_finite());
        Self { mean, covariance, factor, log_det }
    }

    fn log_pdf(&self, x: &DVector<f64>, class: u8) -> Result<f64> {
        let factor = self.factor.as_ref().ok_or(Error::SingularCovariance(class))?;
        let diff = x - &self.mean;
        let solved = factor.solve(&diff);
        let m = x.len() as f64;
        Ok(-0.5 * (diff.dot(&solved) + self.log_det + m * (2.0 * std::f64::consts::PI).ln()))
    }
}

/// Fitted class means and regularized covariances.
#[derive(Debug, Clone)]
pub struct RdaModel {
    lambda: f64,
    gamma: f64,
    nontarget: ClassGaussian,
    target: ClassGaussian,
}

impl RdaModel {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dims(&self) -> usize {
        self.target.mean.len()
    }

    pub fn mean(&self, class: u8) -> &DVector<f64> {
        &self.class(class).mean
    }

    pub fn covariance(&self, class: u8) -> &DMatrix<f64> {
        &self.class(class).covariance
    }

    fn class(&self, class: u8) -> &ClassGaussian {
        if class == 1 {
            &self.target
        } else {
            &self.nontarget
        }
    }

    /// Log ratio of the target to the nontarget Gaussian density.
    pub fn score(&self, feature: &DVector<f64>) -> Result<f64> {
        if feature.len() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: feature.len() });
        }
        Ok(self.target.log_pdf(feature, 1)? - self.nontarget.log_pdf(feature, 0)?)
    }
}

/// Maximum-likelihood mean and covariance (divided by the class count).
pub fn ml_moments(features: &[&DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let m = features[0].len();
    let n = features.len() as f64;
    let mut mean = DVector::zeros(m);
    for f in features {
        mean += *f;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(m, m);
    for f in features {
        let d = *f - &mean;
        cov += &d * d.transpose();
    }
    cov /= n;
    (mean, cov)
}

pub fn rda_fit(data: &CalibrationSet, lambda: f64, gamma: f64) -> Result<RdaModel> {
    if !(0.0..=1.0).contains(&lambda) || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter("lambda and gamma must lie in [0, 1]".into()));
    }
    if data.features.len() != data.labels.len() {
        return Err(Error::InvalidParameter("features and labels differ in length".into()));
    }
    let dims = data.dims();
    if let Some(f) = data.features.iter().find(|f| f.len() != dims) {
        return Err(Error::DimensionMismatch { expected: dims, got: f.len() });
    }
    let by_class = |class: u8| -> Vec<&DVector<f64>> {
        data.features.iter().zip(&data.labels).filter(|(_, &l)| l == class).map(|(f, _)| f).collect()
    };
    let classes = [by_class(0), by_class(1)];
    for (class, members) in classes.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::InsufficientClassSamples { class: class as u8, count: members.len() });
        }
    }
    let moments: Vec<(DVector<f64>, DMatrix<f64>)> = classes.iter().map(|c| ml_moments(c)).collect();
    let counts = [classes[0].len() as f64, classes[1].len() as f64];
    let scatter_total = &moments[0].1 * counts[0] + &moments[1].1 * counts[1];
    let n_total = counts[0] + counts[1];

    let regularize = |k: usize| -> ClassGaussian {
        let (mean, cov) = &moments[k];
        let shrunk = (cov * ((1.0 - lambda) * counts[k]) + &scatter_total * lambda)
            / ((1.0 - lambda) * counts[k] + lambda * n_total);
        let scale = shrunk.trace() / dims as f64;
        let blended = shrunk * (1.0 - gamma) + DMatrix::identity(dims, dims) * (gamma * scale);
        ClassGaussian::new(mean.clone(), blended)
    };
    Ok(RdaModel { lambda, gamma, nontarget: regularize(0), target: regularize(1) })
}

pub fn rda_score(model: &RdaModel, feature: &DVector<f64>) -> Result<f64> {
    model.score(feature)
}

/// Outcome of the cross-validated grid search.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CvSelection {
    pub lambda: f64,
    pub gamma: f64,
    pub mean_auc: f64,
}

/// Deterministic fold assignment: shuffled indices dealt round robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

fn has_both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

/// Scores every sample with a model fitted on the other folds. Returns
/// `None` for samples whose fold was skipped.
pub fn out_of_fold_scores(
    data: &CalibrationSet,
    lambda: f64,
    gamma: f64,
    folds: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("at least two folds are required".into()));
    }
    let assignment = fold_assignment(data.len(), folds, seed);
    let mut scores = vec![None; data.len()];
    let mut any = false;
    for fold in 0..folds {
        let test: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == fold).collect();
        let train: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != fold).collect();
        let test_set = data.subset(&test);
        if !has_both_classes(&test_set.labels) {
            continue;
        }
        let model = match rda_fit(&data.subset(&train), lambda, gamma) {
            Ok(m) => m,
            Err(Error::InsufficientClassSamples { .. }) => continue,
            Err(e) => return Err(e),
        };
        for &i in &test {
            scores[i] = Some(model.score(&data.features[i])?);
        }
        any = true;
    }
    if !any {
        return Err(Error::AllFoldsSkipped);
    }
    Ok(scores)
}

fn fold_mean_auc(data: &CalibrationSet, lambda: f64, gamma: f64, assignment: &[usize], folds: usize) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut used = 0usize;
    for fold in 0..folds {
        let test: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == fold).collect();
        let train: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != fold).collect();
        let test_labels: Vec<u8> = test.iter().map(|&i| data.labels[i]).collect();
        if !has_both_classes(&test_labels) {
            continue;
        }
        let model = match rda_fit(&data.subset(&train), lambda, gamma) {
            Ok(m) => m,
            Err(Error::InsufficientClassSamples { .. }) => continue,
            Err(e) => return Err(e),
        };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for &i in &test {
            match model.score(&data.features[i]) {
                Ok(s) if data.labels[i] == 1 => pos.push(s),
                Ok(s) => neg.push(s),
                // a singular candidate never wins the search
                Err(Error::SingularCovariance(_)) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        total += auc(&pos, &neg);
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllFoldsSkipped);
    }
    Ok(Some(total / used as f64))
}

/// Grid search over `(lambda, gamma)` maximizing mean fold AUC. Ties go to
/// the lexicographically smaller `(gamma, lambda)`.
pub fn cv_select(
    data: &CalibrationSet,
    lambda_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvSelection> {
    if folds < 2 {
        return Err(Error::InvalidParameter("at least two folds are required".into()));
    }
    if lambda_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::InvalidParameter("parameter grids must be nonempty".into()));
    }
    let assignment = fold_assignment(data.len(), folds, seed);
    let mut candidates: Vec<(f64, f64)> =
        gamma_grid.iter().flat_map(|&g| lambda_grid.iter().map(move |&l| (g, l))).collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut best: Option<CvSelection> = None;
    for (gamma, lambda) in candidates {
        let Some(mean_auc) = fold_mean_auc(data, lambda, gamma, &assignment, folds)? else {
            continue;
        };
        if best.is_none_or(|b| mean_auc > b.mean_auc) {
            best = Some(CvSelection { lambda, gamma, mean_auc });
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("every grid point produced a singular model".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_set() -> CalibrationSet {
        synth_calibration(4, 30, 40, 2.0, 5).unwrap()
    }

    #[test]
    fn gamma_one_gives_scaled_identity() {
        let model = rda_fit(&small_set(), 0.3, 1.0).unwrap();
        for class in [0, 1] {
            let c = model.covariance(class);
            let d = c[(0, 0)];
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(c[(i, j)], if i == j { d } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn lambda_one_equalizes_classes() {
        let model = rda_fit(&small_set(), 1.0, 0.2).unwrap();
        assert_eq!(model.covariance(0), model.covariance(1));
    }

    #[test]
    fn no_regularization_is_ml_covariance() {
        let data = small_set();
        let model = rda_fit(&data, 0.0, 0.0).unwrap();
        for class in [0u8, 1] {
            // direct computation with the unbiased helper rescaled to ML
            let members: Vec<&DVector<f64>> =
                data.features.iter().zip(&data.labels).filter(|(_, &l)| l == class).map(|(f, _)| f).collect();
            let n = members.len() as f64;
            let mean = members.iter().fold(DVector::zeros(4), |acc, f| acc + *f) / n;
            let mut cov = DMatrix::<f64>::zeros(4, 4);
            for i in 0..4 {
                for j in 0..4 {
                    cov[(i, j)] = members.iter().map(|f| (f[i] - mean[i]) * (f[j] - mean[j])).sum::<f64>() / n;
                }
            }
            assert_relative_eq!(model.covariance(class), &cov, epsilon = 1e-12);
        }
    }

    #[test]
    fn score_matches_direct_gaussian_evaluation() {
        let data = small_set();
        let model = rda_fit(&data, 0.4, 0.1).unwrap();
        let log_pdf = |x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>| {
            let inv = cov.clone().try_inverse().unwrap();
            let d = x - mean;
            let quad = (d.transpose() * inv * &d)[(0, 0)];
            -0.5 * (quad + cov.determinant().ln() + 4.0 * (2.0 * std::f64::consts::PI).ln())
        };
        for x in data.features.iter().take(10) {
            let expected = log_pdf(x, model.mean(1), model.covariance(1)) - log_pdf(x, model.mean(0), model.covariance(0));
            assert_relative_eq!(model.score(x).unwrap(), expected, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn identical_classes_score_zero() {
        let base = synth_calibration(3, 10, 10, 0.0, 2).unwrap();
        let mut features = base.features[..10].to_vec();
        features.extend(base.features[..10].iter().cloned());
        let labels = [vec![1u8; 10], vec![0u8; 10]].concat();
        let model = rda_fit(&CalibrationSet { features, labels }, 0.2, 0.2).unwrap();
        for x in &base.features {
            assert!(model.score(x).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn target_mean_scores_positive() {
        let model = rda_fit(&small_set(), 1.0, 0.5).unwrap();
        let mu1 = model.mean(1).clone();
        assert!(model.score(&mu1).unwrap() > 0.0);
    }

    #[test]
    fn singular_covariance_reported() {
        // three samples in four dimensions cannot span the space
        let data = synth_calibration(4, 3, 3, 1.0, 9).unwrap();
        let model = rda_fit(&data, 0.0, 0.0).unwrap();
        assert!(matches!(model.score(&data.features[0]), Err(Error::SingularCovariance(_))));
    }

    #[test]
    fn too_few_class_samples() {
        let mut data = small_set();
        let keep: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == 0 || i == 0).collect();
        data = data.subset(&keep);
        assert!(matches!(rda_fit(&data, 0.1, 0.1), Err(Error::InsufficientClassSamples { class: 1, count: 1 })));
    }

    #[test]
    fn symmetric_positive_definite_when_regularized() {
        let model = rda_fit(&synth_calibration(6, 4, 4, 1.0, 1).unwrap(), 0.0, 0.3).unwrap();
        for class in [0, 1] {
            let c = model.covariance(class);
            assert_relative_eq!(c, &c.transpose(), epsilon = 1e-14);
            let eig = c.clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn single_pair_grid_selected() {
        let sel = cv_select(&small_set(), &[0.3], &[0.7], 5, 1).unwrap();
        assert_eq!((sel.lambda, sel.gamma), (0.3, 0.7));
    }

    #[test]
    fn well_separated_selection_has_high_auc() {
        let data = synth_calibration(3, 60, 120, 3.0, 21).unwrap();
        let sel = cv_select(&data, &[0.0, 0.5, 1.0], &[0.0, 0.5], 10, 4).unwrap();
        assert!(sel.mean_auc >= 0.95, "{sel:?}");
    }

    #[test]
    fn cv_is_deterministic() {
        let data = small_set();
        let a = cv_select(&data, &[0.0, 0.5, 1.0], &[0.1, 0.5], 4, 8).unwrap();
        let b = cv_select(&data, &[0.0, 0.5, 1.0], &[0.1, 0.5], 4, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tie_goes_to_smaller_gamma_then_lambda() {
        // perfectly separated classes: every grid point reaches AUC 1
        let data = synth_calibration(2, 20, 20, 40.0, 2).unwrap();
        let sel = cv_select(&data, &[1.0, 0.5], &[0.9, 0.4], 4, 2).unwrap();
        assert_eq!(sel.mean_auc, 1.0);
        assert_eq!((sel.gamma, sel.lambda), (0.4, 0.5));
    }

    #[test]
    fn all_folds_skipped() {
        let data = synth_calibration(2, 2, 2, 1.0, 1).unwrap();
        // with four folds each test fold holds a single sample
        assert!(matches!(cv_select(&data, &[0.5], &[0.5], 4, 0), Err(Error::AllFoldsSkipped)));
    }
}
