//! Exact envelope maps `f_t(x) = ψ_tⁿ · f₀(ψ_t · x)` and the quantities that
//! can be computed from them without simulation: weak-limit probes, moment
//! scaling, the multiplicative autonomy condition on `ψ`, and the
//! indicator-density lower bound on operator norms.

pub mod quad;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
pub use quad::Tolerance;

/// Base densities are truncated at this many standard deviations.
pub const GAUSSIAN_SUPPORT_SDS: f64 = 12.0;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A one-dimensional density with a finite support hint for quadrature.
#[derive(Clone)]
pub struct DensityFn {
    eval: ScalarFn,
    pub support: (f64, f64),
    /// Points where the density is not smooth; quadrature splits there.
    pub breakpoints: Vec<f64>,
    pub norm_tolerance: f64,
}

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFn")
            .field("support", &self.support)
            .field("breakpoints", &self.breakpoints)
            .field("norm_tolerance", &self.norm_tolerance)
            .finish()
    }
}

impl DensityFn {
    /// Wraps `eval` without checking normalization.
    pub fn from_fn(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
        breakpoints: Vec<f64>,
    ) -> Self {
        DensityFn {
            eval: Arc::new(eval),
            support,
            breakpoints,
            norm_tolerance: 1e-6,
        }
    }

    /// Wraps `eval` and checks that it integrates to one over `support`.
    pub fn new(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
        breakpoints: Vec<f64>,
        norm_tolerance: f64,
    ) -> Result<Self> {
        let mut f = DensityFn::from_fn(eval, support, breakpoints);
        f.norm_tolerance = norm_tolerance;
        let norm = f.norm()?;
        if (norm - 1.0).abs() > norm_tolerance {
            return Err(Error::invalid(format!("density integrates to {norm}, not 1")));
        }
        Ok(f)
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        let c = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
        DensityFn::from_fn(
            move |x| {
                let z = (x - mean) / sd;
                c * (-0.5 * z * z).exp()
            },
            (mean - GAUSSIAN_SUPPORT_SDS * sd, mean + GAUSSIAN_SUPPORT_SDS * sd),
            vec![mean],
        )
    }

    /// Uniform density on `[lo, hi]`; also the normalized indicator `1_A / λ(A)`.
    pub fn uniform(lo: f64, hi: f64) -> Self {
        let h = 1.0 / (hi - lo);
        DensityFn::from_fn(
            move |x| if (lo..=hi).contains(&x) { h } else { 0.0 },
            (lo, hi),
            vec![lo, hi],
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn integrate_over(&self, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
        let f = |x: f64| self.eval(x);
        quad::integrate(&f, a, b, &self.breakpoints, tol)
    }

    pub fn norm(&self) -> Result<f64> {
        self.integrate_over(self.support.0, self.support.1, Tolerance::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiTag {
    Power(f64),
    Linear,
    Custom(String),
}

/// Positive scaling sequence `t ↦ ψ_t`.
#[derive(Clone)]
pub struct PsiSequence {
    eval: Arc<dyn Fn(u64) -> f64 + Send + Sync>,
    pub tag: PsiTag,
}

impl fmt::Debug for PsiSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsiSequence").field("tag", &self.tag).finish()
    }
}

impl PsiSequence {
    /// `ψ_t = aᵗ`.
    pub fn power(a: f64) -> Self {
        PsiSequence {
            eval: Arc::new(move |t| a.powf(t as f64)),
            tag: PsiTag::Power(a),
        }
    }

    /// `ψ_t = t`.
    pub fn linear() -> Self {
        PsiSequence {
            eval: Arc::new(|t| t as f64),
            tag: PsiTag::Linear,
        }
    }

    /// `ψ_t = 1/t`.
    pub fn reciprocal() -> Self {
        PsiSequence::custom("reciprocal", |t| 1.0 / t as f64)
    }

    pub fn custom(name: &str, eval: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        PsiSequence {
            eval: Arc::new(eval),
            tag: PsiTag::Custom(name.to_string()),
        }
    }

    pub fn at(&self, t: u64) -> f64 {
        (self.eval)(t)
    }

    /// Parses `power:<a>`, `linear`, or `reciprocal`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(a) = spec.strip_prefix("power:") {
            let a: f64 = a
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad power base in `{spec}`")))?;
            if !(a > 0.0) {
                return Err(Error::invalid("power base must be positive"));
            }
            return Ok(PsiSequence::power(a));
        }
        match spec {
            "linear" => Ok(PsiSequence::linear()),
            "reciprocal" => Ok(PsiSequence::reciprocal()),
            other => Err(Error::invalid(format!("unknown psi sequence `{other}`"))),
        }
    }
}

/// The envelope family driven by a base density and a scaling sequence.
#[derive(Debug, Clone)]
pub struct AnalyticMap {
    pub base: DensityFn,
    pub psi: PsiSequence,
    /// Number of i.i.d. coordinates; the base is applied per coordinate.
    pub dimension: u32,
}

impl AnalyticMap {
    pub fn new(base: DensityFn, psi: PsiSequence) -> Self {
        AnalyticMap {
            base,
            psi,
            dimension: 1,
        }
    }

    /// `ψ_t · f₀(ψ_t · x)` in one dimension.
    pub fn apply(&self, t: u64, x: f64) -> f64 {
        let p = self.psi.at(t);
        p * self.base.eval(p * x)
    }

    /// `ψ_tⁿ · f₀(ψ_t · x)` for a product base density on `ℝⁿ`.
    pub fn apply_nd(&self, t: u64, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension as usize {
            return Err(Error::invalid(format!(
                "point has {} coordinates, map has {}",
                x.len(),
                self.dimension
            )));
        }
        let p = self.psi.at(t);
        Ok(p.powi(self.dimension as i32) * x.iter().map(|xi| self.base.eval(p * xi)).product::<f64>())
    }

    /// The one-step-from-origin transform `D_{1..t}` as a rescaling.
    pub fn transform_at(&self, t: u64) -> Rescale {
        Rescale { factor: self.psi.at(t) }
    }

    /// `f_t` as a standalone density with rescaled support.
    pub fn density_at_step(&self, t: u64) -> DensityFn {
        self.transform_at(t).apply(&self.base)
    }
}

/// A compactly supported test function.
#[derive(Clone)]
pub struct TestFunction {
    eval: ScalarFn,
    pub support: (f64, f64),
    pub breakpoints: Vec<f64>,
}

impl TestFunction {
    pub fn new(eval: impl Fn(f64) -> f64 + Send + Sync + 'static, support: (f64, f64), breakpoints: Vec<f64>) -> Self {
        TestFunction {
            eval: Arc::new(eval),
            support,
            breakpoints,
        }
    }

    /// `max(0, 1 − |x|)`.
    pub fn triangle() -> Self {
        TestFunction::new(|x| (1.0 - x.abs()).max(0.0), (-1.0, 1.0), vec![0.0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

/// `∫ f_t φ` for each `t`, to absolute tolerance 1e-8.
///
/// Values approach `φ(0)` when `ψ_t → ∞` and `0` when `ψ_t → 0`.
pub fn weak_limit_probe(map: &AnalyticMap, phi: &TestFunction, t_list: &[u64]) -> Result<Vec<f64>> {
    t_list
        .iter()
        .map(|&t| {
            let ft = map.density_at_step(t);
            let a = phi.support.0.max(ft.support.0);
            let b = phi.support.1.min(ft.support.1);
            if a >= b {
                return Ok(0.0);
            }
            let mut cuts = ft.breakpoints.clone();
            cuts.extend_from_slice(&phi.breakpoints);
            let g = |x: f64| ft.eval(x) * phi.eval(x);
            quad::integrate(&g, a, b, &cuts, Tolerance::default())
        })
        .collect()
}

/// Outcome of checking `ψ_{τ+κ} = ψ_τ · ψ_κ` on a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AutonomyCheck {
    pub autonomous: bool,
    /// Largest `|ψ_{τ+κ} − ψ_τψ_κ| / ψ_{τ+κ}` seen.
    pub max_violation: f64,
    pub worst_pair: (u64, u64),
}

/// Tests the multiplicative condition for all `τ, κ ≥ 1` with `τ + κ <= horizon`.
pub fn autonomy_check(psi: &PsiSequence, horizon: u64, rel_tol: f64) -> Result<AutonomyCheck> {
    if horizon < 2 {
        return Err(Error::invalid("autonomy check needs horizon >= 2"));
    }
    let vals: Vec<f64> = (0..=horizon).map(|t| psi.at(t)).collect();
    let mut worst = (0.0, (1, 1));
    for tau in 1..horizon {
        for kappa in 1..=(horizon - tau) {
            let lhs = vals[(tau + kappa) as usize];
            let v = (lhs - vals[tau as usize] * vals[kappa as usize]).abs() / lhs.abs();
            let v = if v.is_nan() { f64::INFINITY } else { v };
            if v > worst.0 {
                worst = (v, (tau, kappa));
            }
        }
    }
    Ok(AutonomyCheck {
        autonomous: worst.0 <= rel_tol,
        max_violation: worst.0,
        worst_pair: worst.1,
    })
}

/// Predicted `ν_k^t = ψ_t^{-k} · ν_k⁰` under the envelope map.
pub fn moment_scaling_predict(map: &AnalyticMap, k: u32, t: u64, nu_k_0: f64) -> f64 {
    nu_k_0 * map.psi.at(t).powi(-(k as i32))
}

/// Inequality form for even moments outside the exact envelope family:
/// `ν_{2k}^t <= ψ_t^{-2k} · ν_{2k}⁰`.
pub fn even_moment_bound_holds(observed: f64, psi_t: f64, order: u32, nu_0: f64) -> Result<bool> {
    if !order.is_multiple_of(2) {
        return Err(Error::invalid("bound applies to even orders only"));
    }
    Ok(observed <= nu_0 * psi_t.powi(-(order as i32)) * (1.0 + 1e-12))
}

/// `∫ x^k f_t(x) dx` by quadrature over the rescaled support.
pub fn quadrature_moment(map: &AnalyticMap, k: u32, t: u64) -> Result<f64> {
    // Odd moments cancel to roughly zero, so the error target is taken
    // relative to the absolute moment rather than to the signed result.
    let scale = quadrature_abs_moment(map, k, t)?;
    let ft = map.density_at_step(t);
    let (a, b) = ft.support;
    let g = |x: f64| x.powi(k as i32) * ft.eval(x);
    let tol = Tolerance {
        abs: (1e-12 * scale).max(f64::MIN_POSITIVE),
        rel: 0.0,
        max_intervals: 4000,
    };
    quad::integrate(&g, a, b, &ft.breakpoints, tol)
}

/// `∫ |x|^k f_t(x) dx`, the natural scale for judging odd moments near zero.
pub fn quadrature_abs_moment(map: &AnalyticMap, k: u32, t: u64) -> Result<f64> {
    let ft = map.density_at_step(t);
    let (a, b) = ft.support;
    let g = |x: f64| x.abs().powi(k as i32) * ft.eval(x);
    let tol = Tolerance {
        abs: f64::MIN_POSITIVE,
        rel: 1e-12,
        max_intervals: 4000,
    };
    quad::integrate(&g, a, b, &ft.breakpoints, tol)
}

/// `ln |ν_k|` of a centred Gaussian with standard deviation `sd`; `None` for
/// the vanishing odd moments.
pub fn gaussian_raw_moment_ln(sd: f64, k: u32) -> Option<f64> {
    if k % 2 == 1 {
        return None;
    }
    // (k-1)!! = 1·3·…·(k-1)
    let double_fact_ln: f64 = (1..k).step_by(2).map(|j| (j as f64).ln()).sum();
    Some(k as f64 * sd.ln() + double_fact_ln)
}

/// `ln Σ_{k=1..terms} ψ_t^{-k} |ν_k⁰|` evaluated in log space, so sums far
/// beyond the f64 range stay comparable. Returns `-∞` when all moments vanish.
pub fn predicted_moment_l1_ln(psi_t: f64, nu0_ln: &dyn Fn(u32) -> Option<f64>, terms: u32) -> f64 {
    let logs: Vec<f64> = (1..=terms)
        .filter_map(|k| nu0_ln(k).map(|l| l - k as f64 * psi_t.ln()))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// A one-step transformation of densities.
pub trait DensityTransform {
    fn apply(&self, f: &DensityFn) -> DensityFn;
}

#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl DensityTransform for Identity {
    fn apply(&self, f: &DensityFn) -> DensityFn {
        f.clone()
    }
}

/// `D(f)(x) = c · f(c · x)`.
#[derive(Debug, Clone, Copy)]
pub struct Rescale {
    pub factor: f64,
}

impl DensityTransform for Rescale {
    fn apply(&self, f: &DensityFn) -> DensityFn {
        let c = self.factor;
        let inner = f.clone();
        let (a, b) = (f.support.0 / c, f.support.1 / c);
        DensityFn {
            eval: Arc::new(move |x| c * inner.eval(c * x)),
            support: (a.min(b), a.max(b)),
            breakpoints: f.breakpoints.iter().map(|p| p / c).collect(),
            norm_tolerance: f.norm_tolerance,
        }
    }
}

/// Closure-backed transformation for ad hoc maps.
pub struct FnTransform<F>(pub F);

impl<F: Fn(&DensityFn) -> DensityFn> DensityTransform for FnTransform<F> {
    fn apply(&self, f: &DensityFn) -> DensityFn {
        (self.0)(f)
    }
}

/// `∫_A D(f_A)`, with `f_A` the normalized indicator of `A = [a, b]`.
///
/// This lower-bounds `‖D‖_q` for every `q ∈ [1, ∞]`; the value itself does not
/// depend on `q`, which is only validated.
pub fn operator_norm_lower_bound(map: &dyn DensityTransform, a: f64, b: f64, q: f64) -> Result<f64> {
    if !(b > a) || !(b - a).is_finite() {
        return Err(Error::invalid(format!(
            "interval [{a}, {b}] must have finite positive length"
        )));
    }
    if !(q >= 1.0) {
        return Err(Error::invalid(format!("q must lie in [1, ∞], got {q}")));
    }
    let image = map.apply(&DensityFn::uniform(a, b));
    let mut cuts = image.breakpoints.clone();
    cuts.push(image.support.0);
    cuts.push(image.support.1);
    let g = |x: f64| image.eval(x);
    quad::integrate(&g, a, b, &cuts, Tolerance::default())
}

/// Result of the two computable conditions for mapping densities to densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformationCheck {
    pub nonnegative: bool,
    pub norm: f64,
    pub is_transformation: bool,
}

/// Checks `D(f) >= 0` on a dense grid and `‖D(f)‖₁ = 1` by quadrature.
///
/// The condition on the inverse operator cannot be evaluated numerically and
/// is not part of this check.
pub fn verify_transformation(map: &dyn DensityTransform, f: &DensityFn) -> TransformationCheck {
    let g = map.apply(f);
    let (a, b) = g.support;
    let grid = 20_000;
    let mut nonnegative = (0..=grid).all(|i| g.eval(a + (b - a) * i as f64 / grid as f64) >= 0.0);
    nonnegative &= g.breakpoints.iter().all(|p| g.eval(*p) >= 0.0);
    let norm = g.norm().unwrap_or(f64::NAN);
    let ok = nonnegative && (norm - 1.0).abs() <= f.norm_tolerance;
    TransformationCheck {
        nonnegative,
        norm,
        is_transformation: ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    fn gauss_map(psi: PsiSequence) -> AnalyticMap {
        AnalyticMap::new(DensityFn::gaussian(0.0, 5.0), psi)
    }

    #[test]
    fn apply_map_examples() {
        let m = gauss_map(PsiSequence::linear());
        assert!((m.apply(5, 0.0) - INV_SQRT_2PI).abs() < 1e-12);

        let id = gauss_map(PsiSequence::power(1.0));
        for x in [-7.0, -1.0, 0.0, 0.3, 12.0] {
            assert_eq!(id.apply(17, x), id.base.eval(x));
        }

        let u = AnalyticMap::new(DensityFn::uniform(-2.5, 2.5), PsiSequence::linear());
        assert!((u.apply(10, 0.0) - 2.0).abs() < 1e-12);
        assert_eq!(u.apply(10, 0.3), 0.0);
    }

    #[test]
    fn apply_nd_uses_power_of_psi() {
        let mut m = gauss_map(PsiSequence::linear());
        m.dimension = 2;
        let v = m.apply_nd(3, &[0.0, 0.0]).unwrap();
        assert!((v - 9.0 * (INV_SQRT_2PI / 5.0).powi(2)).abs() < 1e-12);
        assert!(m.apply_nd(3, &[0.0]).is_err());
    }

    #[test]
    fn envelope_preserves_norm() {
        for psi in [
            PsiSequence::linear(),
            PsiSequence::reciprocal(),
            PsiSequence::power(1.1),
        ] {
            let m = gauss_map(psi);
            for t in [1, 2, 10, 50, 100] {
                let n = m.density_at_step(t).norm().unwrap();
                assert!((n - 1.0).abs() < 1e-6, "t={t}: {n}");
            }
        }
        let u = AnalyticMap::new(DensityFn::uniform(-2.5, 2.5), PsiSequence::linear());
        assert!((u.density_at_step(40).norm().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn weak_limit_delta_branch() {
        let m = gauss_map(PsiSequence::linear());
        let v = weak_limit_probe(&m, &TestFunction::triangle(), &[1, 10, 100]).unwrap();
        assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
        assert!((v[2] - 1.0).abs() < 0.05);
    }

    #[test]
    fn weak_limit_zero_branch() {
        let m = gauss_map(PsiSequence::reciprocal());
        let v = weak_limit_probe(&m, &TestFunction::triangle(), &[1, 10, 100]).unwrap();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
        assert!(v[2] < 0.05);
    }

    #[test]
    fn weak_limit_zero_test_function() {
        let m = gauss_map(PsiSequence::linear());
        let zero = TestFunction::new(|_| 0.0, (-1.0, 1.0), vec![]);
        assert_eq!(weak_limit_probe(&m, &zero, &[1, 5, 50]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn weak_limit_dichotomy_for_powers() {
        let phi = TestFunction::triangle();
        let t: Vec<u64> = (0..=60).step_by(10).collect();
        let up = weak_limit_probe(&gauss_map(PsiSequence::power(1.2)), &phi, &t).unwrap();
        let down = weak_limit_probe(&gauss_map(PsiSequence::power(0.8)), &phi, &t).unwrap();
        assert!(up.windows(2).all(|w| w[1] >= w[0]) && (up.last().unwrap() - 1.0).abs() < 1e-3);
        assert!(down.windows(2).all(|w| w[1] <= w[0]) && *down.last().unwrap() < 1e-3);
    }

    #[test]
    fn autonomy_examples() {
        assert!(autonomy_check(&PsiSequence::power(3.0), 10, 1e-9).unwrap().autonomous);
        let lin = autonomy_check(&PsiSequence::linear(), 2, 1e-9).unwrap();
        assert!(!lin.autonomous);
        assert_eq!(lin.worst_pair, (1, 1));
        assert!((lin.max_violation - 0.5).abs() < 1e-15);
        assert!(autonomy_check(&PsiSequence::power(1.0), 30, 0.0).unwrap().autonomous);
        assert!(autonomy_check(&PsiSequence::linear(), 1, 1e-9).is_err());
    }

    #[test]
    fn moment_prediction_examples() {
        let m = gauss_map(PsiSequence::linear());
        assert!((moment_scaling_predict(&m, 2, 5, 25.0) - 1.0).abs() < 1e-15);
        let q = quadrature_moment(&m, 2, 5).unwrap();
        assert!((q - 1.0).abs() < 1e-9);

        let id = gauss_map(PsiSequence::power(1.0));
        assert_eq!(moment_scaling_predict(&id, 7, 40, 3.5), 3.5);
        assert_eq!(moment_scaling_predict(&m, 3, 9, 0.0), 0.0);

        assert!(even_moment_bound_holds(0.5, 2.0, 2, 4.0).unwrap());
        assert!(!even_moment_bound_holds(1.5, 2.0, 2, 4.0).unwrap());
        assert!(even_moment_bound_holds(1.0, 2.0, 3, 4.0).is_err());
    }

    #[test]
    fn quadrature_moments_match_prediction() {
        let m = gauss_map(PsiSequence::power(1.1));
        for t in [1, 7, 25, 50, 100] {
            for k in 1..=6u32 {
                let nu0 = gaussian_raw_moment_ln(5.0, k).map_or(0.0, f64::exp);
                let pred = moment_scaling_predict(&m, k, t, nu0);
                let got = quadrature_moment(&m, k, t).unwrap();
                let scale = quadrature_abs_moment(&m, k, t).unwrap();
                assert!((got - pred).abs() <= 1e-6 * scale, "t={t} k={k}: {got} vs {pred}");
            }
        }
    }

    #[test]
    fn moment_l1_decays_for_growing_psi() {
        let nu0 = |k: u32| gaussian_raw_moment_ln(5.0, k);
        let seq = PsiSequence::power(2.0);
        let sums: Vec<f64> = (0..=40).map(|t| predicted_moment_l1_ln(seq.at(t), &nu0, 300)).collect();
        assert!(sums.windows(2).all(|w| w[1] <= w[0]));
        assert!(*sums.last().unwrap() < (1e-6f64).ln());
        assert_eq!(predicted_moment_l1_ln(3.0, &|_| None, 300), f64::NEG_INFINITY);
    }

    #[test]
    fn gaussian_moment_logs() {
        assert!((gaussian_raw_moment_ln(5.0, 2).unwrap() - 25f64.ln()).abs() < 1e-14);
        assert!((gaussian_raw_moment_ln(1.0, 4).unwrap() - 3f64.ln()).abs() < 1e-14);
        assert!((gaussian_raw_moment_ln(2.0, 6).unwrap() - (15.0 * 64.0f64).ln()).abs() < 1e-12);
        assert_eq!(gaussian_raw_moment_ln(2.0, 5), None);
    }

    #[test]
    fn operator_norm_examples() {
        assert!((operator_norm_lower_bound(&Identity, 0.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-6);
        let squeeze = Rescale { factor: 2.0 };
        assert!((operator_norm_lower_bound(&squeeze, 0.0, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-6);
        let stretch = Rescale { factor: 0.5 };
        assert!((operator_norm_lower_bound(&stretch, 0.0, 1.0, f64::INFINITY).unwrap() - 0.5).abs() < 1e-6);
        assert!(operator_norm_lower_bound(&Identity, 1.0, 1.0, 1.0).is_err());
        assert!(operator_norm_lower_bound(&Identity, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn verify_transformation_examples() {
        let m = gauss_map(PsiSequence::power(1.7));
        for t in [1, 3, 9] {
            assert!(verify_transformation(&m.transform_at(t), &DensityFn::gaussian(0.0, 5.0)).is_transformation);
        }
        let doubled = FnTransform(|f: &DensityFn| {
            let g = f.clone();
            DensityFn::from_fn(move |x| 2.0 * g.eval(x), f.support, f.breakpoints.clone())
        });
        let c = verify_transformation(&doubled, &DensityFn::gaussian(0.0, 1.0));
        assert!(!c.is_transformation && c.nonnegative && (c.norm - 2.0).abs() < 1e-6);

        let shifted = FnTransform(|f: &DensityFn| {
            let g = f.clone();
            let (a, b) = f.support;
            DensityFn::from_fn(move |x| g.eval(x) - 0.1, (a - 1.0, b + 1.0), f.breakpoints.clone())
        });
        let c = verify_transformation(&shifted, &DensityFn::uniform(0.0, 1.0));
        assert!(!c.is_transformation && !c.nonnegative);
    }

    #[test]
    fn checked_constructor_and_parse() {
        assert!(DensityFn::new(|x| (-x * x / 2.0).exp() * INV_SQRT_2PI, (-12.0, 12.0), vec![0.0], 1e-6).is_ok());
        assert!(DensityFn::new(|x| (-x * x / 2.0).exp(), (-12.0, 12.0), vec![0.0], 1e-6).is_err());
        assert_eq!(PsiSequence::parse("power:2").unwrap().at(3), 8.0);
        assert_eq!(PsiSequence::parse("linear").unwrap().at(3), 3.0);
        assert!(PsiSequence::parse("power:-1").is_err());
        assert!(PsiSequence::parse("nope").is_err());
    }

    proptest::proptest! {
        #[test]
        fn powers_are_always_autonomous(a in 0.05f64..20.0) {
            let c = autonomy_check(&PsiSequence::power(a), 50, 1e-9).unwrap();
            proptest::prop_assert!(c.autonomous, "a={} violation={}", a, c.max_violation);
        }
    }
}
