//! Linear regression fitters used inside the feedback loop, plus the robust
//! line fit used for autonomy diagnostics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Sgd,
    RidgeExact,
    RidgeRegularized,
    HuberLine,
}

/// A fitted affine model `x·w + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub solver: Solver,
    pub regularization: f64,
    #[serde(default)]
    pub iterations_used: u32,
}

impl TrainedModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Row-wise predictions over a row-major matrix with `cols` columns.
    pub fn predict(&self, features: &[f64], cols: usize) -> Result<Vec<f64>> {
        if cols != self.weights.len() {
            return Err(Error::invalid(format!(
                "model has {} weights but features have {cols} columns",
                self.weights.len()
            )));
        }
        if cols == 0 || !features.len().is_multiple_of(cols) {
            return Err(Error::invalid("feature buffer is not a whole number of rows"));
        }
        Ok(features.chunks_exact(cols).map(|r| self.predict_row(r)).collect())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict(data.features(), data.cols())
    }

    /// Mean squared residual over `eval`.
    pub fn mse(&self, eval: &Dataset) -> Result<f64> {
        if eval.rows() == 0 {
            return Err(Error::invalid("mse over an empty dataset"));
        }
        let pred = self.predict_dataset(eval)?;
        Ok(pred
            .iter()
            .zip(eval.targets())
            .map(|(p, y)| (y - p).powi(2))
            .sum::<f64>()
            / eval.rows() as f64)
    }
}

/// Step-size schedule and budget for [`fit_sgd`].
///
/// The learning rate at update `t` (counted over all epochs) is
/// `eta0 / (1 + decay * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub max_iterations: u32,
    pub eta0: f64,
    pub decay: f64,
    /// Stop early once the largest coefficient change over a full pass is below this.
    pub tol: f64,
}

impl Default for SgdParams {
    fn default() -> Self {
        SgdParams {
            max_iterations: 50,
            eta0: 0.01,
            decay: 1e-3,
            tol: 1e-10,
        }
    }
}

/// Squared-loss linear regression by plain SGD, one shuffled pass per iteration.
///
/// Never fails on degenerate data: the result is whatever the updates reach.
pub fn fit_sgd(train: &Dataset, params: &SgdParams, seed: u64) -> Result<TrainedModel> {
    if train.rows() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: train.rows(),
        });
    }
    if params.max_iterations == 0 {
        return Err(Error::invalid("max_iterations must be at least 1"));
    }
    let d = train.cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..train.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0u64;
    let mut used = 0;
    let mut prev = vec![0.0; d + 1];
    for _ in 0..params.max_iterations {
        used += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let x = train.row(i);
            let err = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() - train.targets()[i];
            let eta = params.eta0 / (1.0 + params.decay * t as f64);
            let g = eta * err;
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj -= g * xj;
            }
            b -= g;
            t += 1;
        }
        if !(b.is_finite() && w.iter().all(|v| v.is_finite())) {
            break;
        }
        let delta = w
            .iter()
            .chain(std::iter::once(&b))
            .zip(&prev)
            .map(|(a, p)| (a - p).abs())
            .fold(0.0, f64::max);
        prev[..d].copy_from_slice(&w);
        prev[d] = b;
        if delta < params.tol {
            break;
        }
    }
    Ok(TrainedModel {
        weights: w,
        intercept: b,
        solver: Solver::Sgd,
        regularization: 0.0,
        iterations_used: used,
    })
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// (row-major, `n×n`). Fails when a pivot is not safely positive.
fn cholesky(a: &mut [f64], n: usize, rel_pivot_floor: f64) -> Result<()> {
    let scale = (0..n)
        .map(|i| a[i * n + i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > rel_pivot_floor * scale) {
            return Err(Error::RankDeficient {
                pivot: j,
                dim: n,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], n: usize, rhs: &mut [f64]) {
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * rhs[k];
        }
        rhs[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in i + 1..n {
            s -= l[k * n + i] * rhs[k];
        }
        rhs[i] = s / l[i * n + i];
    }
}

/// Exact minimizer of `‖y − Xw − b‖² + λ‖w‖²` with an unpenalized intercept.
///
/// The intercept is eliminated by centering, then the `d×d` normal equations
/// are solved by Cholesky.
pub fn fit_ridge(train: &Dataset, regularization: f64) -> Result<TrainedModel> {
    if train.rows() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: train.rows(),
        });
    }
    if !(regularization >= 0.0) || !regularization.is_finite() {
        return Err(Error::invalid(format!(
            "regularization must be finite and nonnegative, got {regularization}"
        )));
    }
    let (m, d) = (train.rows(), train.cols());
    let mut xm = vec![0.0; d];
    for i in 0..m {
        for (acc, v) in xm.iter_mut().zip(train.row(i)) {
            *acc += v;
        }
    }
    xm.iter_mut().for_each(|v| *v /= m as f64);
    let ym = train.targets().iter().sum::<f64>() / m as f64;

    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut xc = vec![0.0; d];
    for i in 0..m {
        for (c, (v, mu)) in xc.iter_mut().zip(train.row(i).iter().zip(&xm)) {
            *c = v - mu;
        }
        let yc = train.targets()[i] - ym;
        for r in 0..d {
            rhs[r] += xc[r] * yc;
            for c in 0..=r {
                gram[r * d + c] += xc[r] * xc[c];
            }
        }
    }
    for r in 0..d {
        gram[r * d + r] += regularization;
        for c in 0..r {
            gram[c * d + r] = gram[r * d + c];
        }
    }
    let mut l = gram;
    // A positive penalty makes the system definite, so only the unpenalized
    // solve applies a conditioning floor on the pivots.
    let floor = if regularization == 0.0 { 1e-12 } else { 0.0 };
    cholesky(&mut l, d, floor)?;
    cholesky_solve(&l, d, &mut rhs);
    let intercept = ym - rhs.iter().zip(&xm).map(|(w, mu)| w * mu).sum::<f64>();
    Ok(TrainedModel {
        weights: rhs,
        intercept,
        solver: if regularization == 0.0 {
            Solver::RidgeExact
        } else {
            Solver::RidgeRegularized
        },
        regularization,
        iterations_used: 0,
    })
}

/// Default Huber threshold, in units of the robust residual scale.
pub const HUBER_DELTA: f64 = 1.35;

fn weighted_line(t: &[f64], v: &[f64], wts: &[f64]) -> Result<(f64, f64)> {
    let sw: f64 = wts.iter().sum();
    let tm = t.iter().zip(wts).map(|(a, w)| a * w).sum::<f64>() / sw;
    let vm = v.iter().zip(wts).map(|(a, w)| a * w).sum::<f64>() / sw;
    let mut stt = 0.0;
    let mut stv = 0.0;
    for ((a, b), w) in t.iter().zip(v).zip(wts) {
        stt += w * (a - tm) * (a - tm);
        stv += w * (a - tm) * (b - vm);
    }
    if !(stt > 0.0) {
        return Err(Error::UndefinedSlope);
    }
    let slope = stv / stt;
    Ok((slope, vm - slope * tm))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Robust straight-line fit `v ≈ slope·t + intercept` under Huber loss.
///
/// Iteratively reweighted least squares starting from the OLS line. Residuals
/// are standardized by `MAD / 0.6745` at every iteration, so `delta` is in
/// units of that robust scale.
pub fn fit_huber_line(points: &[(f64, f64)], delta: f64) -> Result<TrainedModel> {
    if points.len() < 3 {
        return Err(Error::InsufficientSample {
            needed: 3,
            got: points.len(),
        });
    }
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("huber delta must be positive, got {delta}")));
    }
    let t: Vec<f64> = points.iter().map(|p| p.0).collect();
    let v: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut wts = vec![1.0; points.len()];
    let (mut slope, mut intercept) = weighted_line(&t, &v, &wts)?;
    let magnitude = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let resid: Vec<f64> = t.iter().zip(&v).map(|(a, b)| b - (slope * a + intercept)).collect();
        let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
        let scale = (median(&mut abs) / 0.6745).max(1e-12 * magnitude);
        for (w, r) in wts.iter_mut().zip(&resid) {
            let u = (r / scale).abs();
            *w = if u <= delta { 1.0 } else { delta / u };
        }
        let (s, i) = weighted_line(&t, &v, &wts)?;
        let change = (s - slope).abs().max((i - intercept).abs());
        slope = s;
        intercept = i;
        if change < 1e-10 {
            break;
        }
    }
    Ok(TrainedModel {
        weights: vec![slope],
        intercept,
        solver: Solver::HuberLine,
        regularization: 0.0,
        iterations_used: iterations,
    })
}

/// Ordinary least-squares line, used as the baseline for robust fits.
pub fn fit_ols_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let t: Vec<f64> = points.iter().map(|p| p.0).collect();
    let v: Vec<f64> = points.iter().map(|p| p.1).collect();
    weighted_line(&t, &v, &vec![1.0; points.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_linear;

    fn line_data(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64]).collect();
        let y = rows.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn sgd_recovers_line() {
        let ds = line_data(100);
        // Closed-form least squares on the same noiseless points is (2, 1).
        let ols = fit_ridge(&ds, 0.0).unwrap();
        let m = fit_sgd(&ds, &SgdParams::default(), 1).unwrap();
        assert!((m.weights[0] - ols.weights[0]).abs() < 0.05, "{m:?}");
        assert!((m.intercept - ols.intercept).abs() < 0.05, "{m:?}");
        assert!(m.iterations_used <= 50);
    }

    #[test]
    fn sgd_constant_target() {
        let ds = generate_linear(80, 3, 0.0, 2).unwrap();
        let ds = Dataset::from_rows(
            &(0..ds.rows()).map(|i| ds.row(i).to_vec()).collect::<Vec<_>>(),
            vec![4.5; ds.rows()],
        )
        .unwrap();
        let m = fit_sgd(&ds, &SgdParams::default(), 3).unwrap();
        assert!((m.intercept - 4.5).abs() < 0.05);
        assert!(m.weights.iter().all(|w| w.abs() < 0.05), "{m:?}");
    }

    #[test]
    fn sgd_is_deterministic_and_survives_degenerate_rows() {
        let ds = generate_linear(60, 2, 1.0, 8).unwrap();
        let p = SgdParams::default();
        assert_eq!(fit_sgd(&ds, &p, 5).unwrap(), fit_sgd(&ds, &p, 5).unwrap());

        let rows = vec![vec![1.0, 1.0]; 6];
        let bad = Dataset::from_rows(&rows, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let m = fit_sgd(&bad, &p, 0).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn ridge_two_point_exact_fit() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1.0, 2.0]).unwrap();
        let m = fit_ridge(&ds, 0.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-14);
        assert!(m.intercept.abs() < 1e-14);
        assert_eq!(m.solver, Solver::RidgeExact);
    }

    #[test]
    fn ridge_symmetric_points() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        let m = fit_ridge(&ds, 0.0).unwrap();
        assert!(m.weights[0].abs() < 1e-14);
        assert!((m.intercept - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ridge_matches_hand_solved_normal_equations() {
        // [[Σx²+λ, Σx], [Σx, n]] [w, b]ᵀ = [Σxy, Σy] with x = y = (1,2,3), λ = 0.1,
        // inverted explicitly as a 2×2 system.
        let (a, b, c, d) = (14.0 + 0.1, 6.0, 6.0, 3.0);
        let (r1, r2) = (14.0, 6.0);
        let det = a * d - b * c;
        let w_oracle = (d * r1 - b * r2) / det;
        let b_oracle = (-c * r1 + a * r2) / det;

        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![1.0, 2.0, 3.0]).unwrap();
        let m = fit_ridge(&ds, 0.1).unwrap();
        assert!((m.weights[0] - w_oracle).abs() < 1e-12);
        assert!((m.intercept - b_oracle).abs() < 1e-12);
        assert_eq!(m.solver, Solver::RidgeRegularized);
    }

    #[test]
    fn ridge_rank_deficiency_is_reported() {
        let ds = Dataset::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(fit_ridge(&ds, 0.0), Err(Error::RankDeficient { .. })));
        assert!(fit_ridge(&ds, 0.1).is_ok());
    }

    #[test]
    fn ridge_norm_shrinks_with_penalty() {
        let ds = generate_linear(200, 5, 1.0, 12).unwrap();
        let norms: Vec<f64> = [0.0, 0.1, 10.0, 1000.0, 1e5]
            .iter()
            .map(|&l| {
                fit_ridge(&ds, l)
                    .unwrap()
                    .weights
                    .iter()
                    .map(|w| w * w)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        assert!(norms.windows(2).all(|p| p[1] <= p[0]), "{norms:?}");
    }

    #[test]
    fn ridge_and_sgd_agree_on_clean_data() {
        let ds = generate_linear(400, 4, 0.0, 6).unwrap();
        let r = fit_ridge(&ds, 0.0).unwrap();
        let s = fit_sgd(&ds, &SgdParams::default(), 1).unwrap();
        for (a, b) in r.weights.iter().zip(&s.weights) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
        assert!((r.intercept - s.intercept).abs() < 0.05);
    }

    #[test]
    fn huber_exact_line() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 3.0 * i as f64 - 2.0)).collect();
        let m = fit_huber_line(&pts, HUBER_DELTA).unwrap();
        assert!((m.weights[0] - 3.0).abs() < 1e-8);
        assert!((m.intercept + 2.0).abs() < 1e-8);

        let three = [(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)];
        let m = fit_huber_line(&three, HUBER_DELTA).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-12 && (m.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huber_resists_outlier_better_than_ols() {
        let mut pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, i as f64)).collect();
        pts[40].1 += 100.0;
        let (ols_slope, _) = fit_ols_line(&pts).unwrap();
        let m = fit_huber_line(&pts, HUBER_DELTA).unwrap();
        assert!((m.weights[0] - 1.0).abs() < (ols_slope - 1.0).abs());
    }

    #[test]
    fn huber_undefined_slope() {
        let pts = [(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)];
        assert!(matches!(fit_huber_line(&pts, 1.35), Err(Error::UndefinedSlope)));
        assert!(fit_huber_line(&pts[..2], 1.35).is_err());
        assert!(fit_huber_line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], 0.0).is_err());
    }

    #[test]
    fn predict_and_mse() {
        let m = TrainedModel {
            weights: vec![2.0],
            intercept: 1.0,
            solver: Solver::RidgeExact,
            regularization: 0.0,
            iterations_used: 0,
        };
        assert_eq!(m.predict(&[3.0], 1).unwrap(), vec![7.0]);
        assert!(m.predict(&[3.0, 4.0], 2).is_err());

        let flat = TrainedModel {
            weights: vec![0.0, 0.0],
            intercept: 5.0,
            ..m.clone()
        };
        assert_eq!(flat.predict(&[1.0, -9.0, 100.0, 3.0], 2).unwrap(), vec![5.0, 5.0]);

        let zero = TrainedModel {
            weights: vec![0.0],
            intercept: 0.0,
            ..m.clone()
        };
        let two = Dataset::from_rows(&[vec![0.0], vec![0.0]], vec![1.0, -1.0]).unwrap();
        assert_eq!(zero.mse(&two).unwrap(), 1.0);
        let four = Dataset::from_rows(
            &[vec![0.0], vec![0.0], vec![0.0], vec![0.0]],
            vec![1.0, -1.0, 1.0, -1.0],
        )
        .unwrap();
        assert_eq!(zero.mse(&four).unwrap(), zero.mse(&two).unwrap());
    }

    #[test]
    fn ridge_residuals_vanish_on_noiseless_data() {
        let ds = generate_linear(100, 6, 0.0, 30).unwrap();
        let m = fit_ridge(&ds, 0.0).unwrap();
        assert!(m.mse(&ds).unwrap() < 1e-12);
        let pred = m.predict_dataset(&ds).unwrap();
        let worst = pred
            .iter()
            .zip(ds.targets())
            .map(|(p, y)| (p - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "max residual {worst}");
        let w = ds.meta.w.unwrap();
        for (a, b) in m.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn model_json_shape() {
        let m = fit_ridge(&line_data(10), 0.1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["solver"], "ridge_regularized");
        assert!(v.get("weights").is_some() && v.get("intercept").is_some() && v.get("regularization").is_some());
    }
}
