//! Linear multi-class model: decision rule, pairwise margins, evaluation.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};

/// Weight matrix `W` (d×c, one column per class) and bias vector `b` (c).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub class_names: Vec<String>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(scores: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

impl LinearModel {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Self {
        let class_names = (0..bias.len()).map(|k| k.to_string()).collect();
        Self {
            weights,
            bias,
            class_names,
        }
    }

    pub fn zeros(d: usize, c: usize) -> Self {
        Self::new(Array2::zeros((d, c)), Array1::zeros(c))
    }

    pub fn d(&self) -> usize {
        self.weights.nrows()
    }

    pub fn c(&self) -> usize {
        self.weights.ncols()
    }

    /// `wₖᵀx + bₖ` for every class.
    pub fn decision_scores(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("sample length", self.d(), x.len())?;
        Ok(x.dot(&self.weights) + &self.bias)
    }

    /// Score matrix for every row of `x` (n×c).
    pub fn scores(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_dim("feature count", self.d(), x.ncols())?;
        Ok(x.dot(&self.weights) + &self.bias)
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize> {
        Ok(argmax(self.decision_scores(x)?.view()))
    }

    pub fn predict_batch(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        let s = self.scores(x)?;
        Ok(s.rows().into_iter().map(argmax).collect())
    }

    /// `2 / ‖wₖ − wₗ‖₂`.
    pub fn pairwise_margin(&self, k: usize, l: usize) -> Result<f64> {
        let c = self.c();
        if k >= c || l >= c || k == l {
            return Err(Error::Config(format!(
                "invalid class pair ({k}, {l}) for {c} classes"
            )));
        }
        let diff = &self.weights.column(k) - &self.weights.column(l);
        let norm = diff.dot(&diff).sqrt();
        if norm == 0.0 {
            return Err(Error::DegeneratePair {
                k: k.min(l),
                l: k.max(l),
            });
        }
        Ok(2.0 / norm)
    }

    pub fn margin_report(&self) -> Result<MarginReport> {
        let c = self.c();
        let mut pairs = Vec::with_capacity(c * (c - 1) / 2);
        for k in 0..c {
            for l in k + 1..c {
                pairs.push(PairMargin {
                    k,
                    l,
                    margin: self.pairwise_margin(k, l)?,
                });
            }
        }
        let argmin = pairs
            .iter()
            .enumerate()
            .fold(0, |best, (i, p)| if p.margin < pairs[best].margin { i } else { best });
        Ok(MarginReport {
            min_margin: pairs[argmin].margin,
            argmin_pair: (pairs[argmin].k, pairs[argmin].l),
            pair_margins: pairs,
        })
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<EvalReport> {
        check_dim("class count", self.c(), data.c())?;
        let predicted = self.predict_batch(data.features())?;
        Ok(EvalReport::from_predictions(data, &predicted))
    }

    /// Mean of each row of `W` (the component shared by all class columns)
    /// and the mean of `b`.
    pub fn translation_component(&self) -> (Array1<f64>, f64) {
        let c = self.c() as f64;
        (self.weights.sum_axis(Axis(1)) / c, self.bias.sum() / c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMargin {
    pub k: usize,
    pub l: usize,
    pub margin: f64,
}

/// All pairwise margins of a model and their minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub pair_margins: Vec<PairMargin>,
    pub min_margin: f64,
    pub argmin_pair: (usize, usize),
}

/// Accuracy and confusion matrix (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

impl EvalReport {
    pub fn from_predictions(data: &Dataset, predicted: &[usize]) -> Self {
        let c = data.c();
        let mut confusion = vec![vec![0; c]; c];
        for (&y, &p) in data.labels().iter().zip(predicted) {
            confusion[y][p] += 1;
        }
        let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
        let n = data.n();
        EvalReport {
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            confusion,
            n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scores_and_predictions() {
        let m = LinearModel::new(Array2::eye(2), Array1::zeros(2));
        let s = m.decision_scores(array![2.0, 3.0].view()).unwrap();
        assert_eq!(s, array![2.0, 3.0]);
        assert_eq!(m.predict(array![2.0, 3.0].view()).unwrap(), 1);
        assert_eq!(m.predict(array![7.0, 7.0].view()).unwrap(), 0);

        let m = LinearModel::new(Array2::eye(2), array![1.0, -1.0]);
        assert_eq!(m.decision_scores(array![0.0, 0.0].view()).unwrap(), array![1.0, -1.0]);
        assert!(matches!(
            m.decision_scores(array![1.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scores_match_dot_product_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let x = Array1::from_shape_fn(5, |_| rng.random_range(-2.0..2.0));
        let m = LinearModel::new(w.clone(), b.clone());
        let s = m.decision_scores(x.view()).unwrap();
        for k in 0..4 {
            let mut acc = b[k];
            for j in 0..5 {
                acc += w[[j, k]] * x[j];
            }
            assert!((s[k] - acc).abs() <= 1e-12);
        }
    }

    #[test]
    fn bias_shift_keeps_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let m = LinearModel::new(w.clone(), b.clone());
        let shifted = LinearModel::new(w, b + 0.75);
        for _ in 0..100 {
            let x = Array1::from_shape_fn(3, |_| rng.random_range(-3.0..3.0));
            assert_eq!(m.predict(x.view()).unwrap(), shifted.predict(x.view()).unwrap());
        }
    }

    #[test]
    fn margins() {
        let w = array![[3.0, 0.0, 1.0], [4.0, 0.0, 1.0]];
        let m = LinearModel::new(w, Array1::zeros(3));
        assert!((m.pairwise_margin(0, 1).unwrap() - 0.4).abs() < 1e-15);

        let report = m.margin_report().unwrap();
        assert_eq!(report.pair_margins.len(), 3);
        let brute = report
            .pair_margins
            .iter()
            .map(|p| p.margin)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.min_margin, brute);
        assert_eq!(report.argmin_pair, (0, 1));

        let scaled = LinearModel::new(&m.weights * 2.5, Array1::zeros(3));
        assert!((scaled.pairwise_margin(0, 1).unwrap() - 0.4 / 2.5).abs() < 1e-15);
    }

    #[test]
    fn identical_columns_are_degenerate() {
        let m = LinearModel::new(array![[1.0, 1.0], [2.0, 2.0]], Array1::zeros(2));
        assert!(matches!(
            m.pairwise_margin(0, 1),
            Err(Error::DegeneratePair { k: 0, l: 1 })
        ));
        assert!(m.margin_report().is_err());
    }

    #[test]
    fn evaluation_reports() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, 3.0]];
        let data = Dataset::new(x, vec![0, 1, 0, 1], 2).unwrap();
        let perfect = LinearModel::new(Array2::eye(2), Array1::zeros(2));
        let r = perfect.evaluate(&data).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 2]]);

        let x = Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
        let data = Dataset::new(x, (0..8).map(|i| i % 4).collect(), 4).unwrap();
        let constant = LinearModel::new(Array2::zeros((1, 4)), array![0.0, 0.0, 1.0, 0.0]);
        let r = constant.evaluate(&data).unwrap();
        assert_eq!(r.accuracy, 0.25);
        assert_eq!(r.confusion.iter().map(|row| row[2]).sum::<usize>(), 8);
    }
}
