//! Synthetic regression data sets.
//!
//! Two generators are provided: a linear problem with Gaussian features and a
//! Friedman #1 problem with uniform features. Both are pure functions of their
//! parameters and seed, drawing from a ChaCha8 stream.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the generator family recorded in every manifest.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64, stream = repeat index";

/// Upper bound of the uniform law for ground-truth weights of the linear generator.
pub const LINEAR_WEIGHT_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Linear,
    Friedman1,
}

impl GeneratorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorTag::Linear => "linear",
            GeneratorTag::Friedman1 => "friedman1",
        }
    }
}

impl std::str::FromStr for GeneratorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(GeneratorTag::Linear),
            "friedman1" | "friedman" => Ok(GeneratorTag::Friedman1),
            other => Err(Error::invalid(format!("unknown generator `{other}`"))),
        }
    }
}

/// Generator parameters and the ground truth they produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator_tag: GeneratorTag,
    pub seed: u64,
    pub noise_variance: f64,
    /// Ground-truth weights; only present for the linear generator.
    pub w: Option<Vec<f64>>,
}

/// Row-major feature matrix plus target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    cols: usize,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Builds a dataset from row-major features. Used by the fitters' tests and
    /// by callers bringing their own data.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("dataset needs at least one row"));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::invalid("dataset needs at least one column"));
        }
        if rows.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let mut features = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            features.extend_from_slice(r);
        }
        Ok(Dataset {
            features,
            targets,
            cols,
            meta: DatasetMeta {
                generator_tag: GeneratorTag::Linear,
                seed: 0,
                noise_variance: 0.0,
                w: None,
            },
        })
    }

    pub(crate) fn from_parts(features: Vec<f64>, targets: Vec<f64>, cols: usize) -> Self {
        debug_assert_eq!(features.len(), targets.len() * cols);
        Dataset {
            features,
            targets,
            cols,
            meta: DatasetMeta {
                generator_tag: GeneratorTag::Linear,
                seed: 0,
                noise_variance: 0.0,
                w: None,
            },
        }
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Copies the listed rows, optionally with replacement targets.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.cols);
        let mut targets = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            features,
            targets,
            cols: self.cols,
            meta: self.meta.clone(),
        }
    }

    /// Writes `f0..f{d-1},y` CSV plus a JSON sidecar next to it.
    pub fn write_csv(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut out = String::new();
        let header: Vec<String> = (0..self.cols)
            .map(|j| format!("f{j}"))
            .chain(["y".to_string()])
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.rows() {
            let mut fields: Vec<String> = self.row(i).iter().map(|v| crate::harness::fmt_float(*v)).collect();
            fields.push(crate::harness::fmt_float(self.targets[i]));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;
        let mut f = fs::File::create(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
        let json = serde_json::to_string_pretty(&self.meta)?;
        f.write_all(json.as_bytes()).map_err(|e| Error::io(sidecar_path, e))?;
        f.write_all(b"\n").map_err(|e| Error::io(sidecar_path, e))?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write_csv`].
    pub fn read_csv(csv_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let cols = rdr.headers()?.len().saturating_sub(1);
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("{}: {e}", csv_path.display())))?;
            targets.push(vals[cols]);
            rows.push(vals[..cols].to_vec());
        }
        let mut ds = Dataset::from_rows(&rows, targets)?;
        let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
        ds.meta = serde_json::from_str(&text)?;
        Ok(ds)
    }
}

fn noise(noise_variance: f64) -> Result<Normal<f64>> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::invalid(format!(
            "noise variance must be finite and nonnegative, got {noise_variance}"
        )));
    }
    Normal::new(0.0, noise_variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))
}

/// Gaussian features, `y = X·w + ε` with `w` drawn uniformly on `[0, 100]`.
pub fn generate_linear(m: usize, d: usize, noise_variance: f64, seed: u64) -> Result<Dataset> {
    if m < 2 || d < 1 {
        return Err(Error::invalid(format!(
            "linear generator needs m >= 2 and d >= 1, got m={m}, d={d}"
        )));
    }
    let eps = noise(noise_variance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..LINEAR_WEIGHT_MAX)).collect();
    let mut features = Vec::with_capacity(m * d);
    let mut targets = Vec::with_capacity(m);
    for _ in 0..m {
        let start = features.len();
        features.extend((0..d).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        let x: &[f64] = &features[start..];
        let clean: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        targets.push(clean + eps.sample(&mut rng));
    }
    let mut ds = Dataset::from_parts(features, targets, d);
    ds.meta = DatasetMeta {
        generator_tag: GeneratorTag::Linear,
        seed,
        noise_variance,
        w: Some(w),
    };
    Ok(ds)
}

/// Noiseless Friedman #1 response on the first five coordinates.
pub fn friedman1_response(x: &[f64]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

/// Uniform features on `[0,1]^d`; only the first five enter the response.
pub fn generate_friedman1(m: usize, d: usize, noise_variance: f64, seed: u64) -> Result<Dataset> {
    if m < 1 || d < 5 {
        return Err(Error::invalid(format!(
            "friedman1 needs m >= 1 and d >= 5, got m={m}, d={d}"
        )));
    }
    let eps = noise(noise_variance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(m * d);
    let mut targets = Vec::with_capacity(m);
    for _ in 0..m {
        let start = features.len();
        features.extend((0..d).map(|_| rng.random::<f64>()));
        targets.push(friedman1_response(&features[start..]) + eps.sample(&mut rng));
    }
    let mut ds = Dataset::from_parts(features, targets, d);
    ds.meta = DatasetMeta {
        generator_tag: GeneratorTag::Friedman1,
        seed,
        noise_variance,
        w: None,
    };
    Ok(ds)
}

/// Dispatches on the generator tag.
pub fn generate(tag: GeneratorTag, m: usize, d: usize, noise_variance: f64, seed: u64) -> Result<Dataset> {
    match tag {
        GeneratorTag::Linear => generate_linear(m, d, noise_variance, seed),
        GeneratorTag::Friedman1 => generate_friedman1(m, d, noise_variance, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_shape_matches_request() {
        let ds = generate_linear(2000, 10, 1.0, 3).unwrap();
        assert_eq!(ds.rows(), 2000);
        assert_eq!(ds.cols(), 10);
        assert_eq!(ds.meta.w.as_ref().unwrap().len(), 10);
        assert!(ds.meta.w.as_ref().unwrap().iter().all(|w| (0.0..=100.0).contains(w)));
    }

    #[test]
    fn linear_rejects_degenerate_shapes() {
        assert!(generate_linear(0, 3, 1.0, 0).is_err());
        assert!(generate_linear(1, 3, 1.0, 0).is_err());
        assert!(generate_linear(10, 0, 1.0, 0).is_err());
        assert!(generate_linear(10, 2, -1.0, 0).is_err());
    }

    #[test]
    fn zero_noise_targets_are_exactly_linear() {
        let ds = generate_linear(10, 2, 0.0, 11).unwrap();
        let w = ds.meta.w.clone().unwrap();
        for i in 0..ds.rows() {
            let clean: f64 = ds.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
            assert_eq!(clean, ds.targets()[i]);
        }
    }

    #[test]
    fn noise_variance_within_chi_square_band() {
        // 99% chi-square interval for the variance of 1000 N(0,4) draws is
        // roughly [3.55, 4.48]; the band below contains it.
        let ds = generate_linear(1000, 3, 4.0, 5).unwrap();
        let w = ds.meta.w.clone().unwrap();
        let eps: Vec<f64> = (0..ds.rows())
            .map(|i| ds.targets()[i] - ds.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let mean = eps.iter().sum::<f64>() / eps.len() as f64;
        let var = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (eps.len() - 1) as f64;
        assert!((3.4..=4.6).contains(&var), "variance {var}");
    }

    #[test]
    fn linear_feature_columns_are_centered() {
        let m = 2000;
        let ds = generate_linear(m, 4, 1.0, 21).unwrap();
        for j in 0..4 {
            let mean = (0..m).map(|i| ds.row(i)[j]).sum::<f64>() / m as f64;
            assert!(mean.abs() < 4.0 / (m as f64).sqrt(), "column {j} mean {mean}");
        }
    }

    #[test]
    fn friedman_closed_form_points() {
        assert!((friedman1_response(&[0.5, 1.0, 0.5, 0.0, 0.0]) - 10.0).abs() < 1e-12);
        assert!((friedman1_response(&[0.0, 0.0, 0.5, 1.0, 1.0]) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn friedman_requires_five_columns() {
        assert!(generate_friedman1(10, 4, 1.0, 0).is_err());
        assert!(generate_friedman1(10, 5, 1.0, 0).is_ok());
    }

    #[test]
    fn friedman_noiseless_range() {
        let ds = generate_friedman1(5000, 7, 0.0, 2).unwrap();
        assert!(ds.targets().iter().all(|y| (-0.1..=30.1).contains(y)));
        assert!(ds.features().iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn friedman_target_mean_matches_monte_carlo() {
        // Independent Monte-Carlo oracle over 10^6 noiseless draws from a
        // different stream; expected mean is about 14.41.
        let mut rng = ChaCha8Rng::seed_from_u64(0xdead_beef);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>());
            acc += friedman1_response(&x);
        }
        let oracle = acc / n as f64;
        assert!((oracle - 14.41).abs() < 0.05, "oracle {oracle}");
        assert!((13.9..=14.9).contains(&oracle));

        let ds = generate_friedman1(2000, 10, 1.0, 9).unwrap();
        let mean = ds.targets().iter().sum::<f64>() / 2000.0;
        assert!((13.9..=14.9).contains(&mean), "mean {mean}");
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            generate_linear(50, 3, 1.0, 4).unwrap(),
            generate_linear(50, 3, 1.0, 4).unwrap()
        );
        assert_eq!(
            generate_friedman1(50, 6, 1.0, 4).unwrap(),
            generate_friedman1(50, 6, 1.0, 4).unwrap()
        );
        assert_ne!(
            generate_linear(50, 3, 1.0, 4).unwrap(),
            generate_linear(50, 3, 1.0, 5).unwrap()
        );
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_friedman1(20, 5, 0.5, 1).unwrap();
        let (c, j) = (dir.path().join("d.csv"), dir.path().join("d.json"));
        ds.write_csv(&c, &j).unwrap();
        let back = Dataset::read_csv(&c, &j).unwrap();
        assert_eq!(back, ds);
        let header = std::fs::read_to_string(&c).unwrap();
        assert!(header.starts_with("f0,f1,f2,f3,f4,y\n"));
    }
}
