//! Seeded synthetic point clouds, cost builders and graph ingestion.
//!
//! Every generator is a pure function of its parameters and seed.

mod graph;

pub use graph::{adjacency_cost, degree_marginal, heat_kernel, heat_kernel_cost, load_graph, parse_graph, GraphSpec};

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::cost::CostSpec;
use crate::error::{OtError, Result};

/// Noise on the two-moons half-circles.
pub const MOONS_NOISE: f64 = 0.1;
/// Radius of the ring carrying the eight Gaussian centers.
pub const RING_RADIUS: f64 = 5.0;
/// Standard deviation of each ring Gaussian (variance `√0.1`).
pub const RING_STD: f64 = 0.562_341_325_190_349_1;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Array2<f64>,
    /// Cluster ids in `[0, k)`, when the generator knows them.
    pub labels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if points.iter().any(|x| !x.is_finite()) {
            return Err(OtError::invalid("point coordinates must be finite"));
        }
        if let Some(l) = &labels {
            if l.len() != points.nrows() {
                return Err(OtError::shape(format!("{} labels for {} points", l.len(), points.nrows())));
            }
        }
        Ok(PointCloud { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite non-negative std")
}

/// Two-moons points: the usual interleaved unit half-circles (the lower one shifted by
/// `(1, −0.5)`) with Gaussian noise, then mapped by `z ↦ 3z − 1`. Labels are the moon.
pub fn gen_moons(m: usize, noise: f64, rng: &mut impl Rng) -> PointCloud {
    let outer = m / 2;
    let inner = m - outer;
    let angle = |i: usize, k: usize| if k > 1 { PI * i as f64 / (k - 1) as f64 } else { 0.0 };
    let mut points = Array2::zeros((m, 2));
    let mut labels = Vec::with_capacity(m);
    for i in 0..outer {
        let t = angle(i, outer);
        points[[i, 0]] = t.cos();
        points[[i, 1]] = t.sin();
        labels.push(0);
    }
    for i in 0..inner {
        let t = angle(i, inner);
        points[[outer + i, 0]] = 1.0 - t.cos();
        points[[outer + i, 1]] = 1.0 - t.sin() - 0.5;
        labels.push(1);
    }
    let dist = normal(noise);
    points.mapv_inplace(|x| 3.0 * (x + dist.sample(rng)) - 1.0);
    PointCloud { points, labels: Some(labels) }
}

/// Eight isotropic Gaussians centered on a ring; labels are the component.
pub fn gen_eight_gaussians(n: usize, radius: f64, std: f64, rng: &mut impl Rng) -> PointCloud {
    let dist = normal(std);
    let mut points = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for mut row in points.rows_mut() {
        let k = rng.random_range(0..8);
        let t = PI * k as f64 / 4.0;
        row[0] = radius * t.cos() + dist.sample(rng);
        row[1] = radius * t.sin() + dist.sample(rng);
        labels.push(k);
    }
    PointCloud { points, labels: Some(labels) }
}

/// The benchmark pair: `n` points from eight Gaussians and `m` two-moons points.
pub fn gen_moons_gaussians(n: usize, m: usize, seed: u64) -> Result<(PointCloud, PointCloud)> {
    if n < 8 || m < 8 {
        return Err(OtError::invalid(format!("need at least 8 points per cloud, got {n} and {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = gen_eight_gaussians(n, RING_RADIUS, RING_STD, &mut rng);
    let moons = gen_moons(m, MOONS_NOISE, &mut rng);
    Ok((gaussians, moons))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureSide {
    /// Three components at `(0,0)`, `(0,1)`, `(1,1)`.
    First,
    /// Two components at `(0.5,0.5)`, `(−0.5,0.5)`.
    Second,
}

/// Mixture means for the 2D / 10D Gaussian-mixture benchmarks (10D pads with zeros).
pub fn mixture_means(dim: usize, which: MixtureSide) -> Array2<f64> {
    let base: &[[f64; 2]] = match which {
        MixtureSide::First => &[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        MixtureSide::Second => &[[0.5, 0.5], [-0.5, 0.5]],
    };
    let mut means = Array2::zeros((base.len(), dim));
    for (k, c) in base.iter().enumerate() {
        means[[k, 0]] = c[0];
        means[[k, 1]] = c[1];
    }
    means
}

/// Equal-weight Gaussian mixture with covariance `0.05·I`.
pub fn gen_gaussian_mixture(dim: usize, n: usize, which: MixtureSide, seed: u64) -> Result<PointCloud> {
    if dim != 2 && dim != 10 {
        return Err(OtError::invalid(format!("mixture dimension must be 2 or 10, got {dim}")));
    }
    let means = mixture_means(dim, which);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = normal(0.05f64.sqrt());
    let mut points = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for mut row in points.rows_mut() {
        let k = rng.random_range(0..means.nrows());
        for (x, mu) in row.iter_mut().zip(means.row(k)) {
            *x = mu + dist.sample(&mut rng);
        }
        labels.push(k);
    }
    Ok(PointCloud { points, labels: Some(labels) })
}

/// Centers `radius·exp(2πik/n_roots)` as rows.
pub fn roots_of_unity(n_roots: usize, radius: f64) -> Array2<f64> {
    Array2::from_shape_fn((n_roots, 2), |(k, d)| {
        let t = 2.0 * PI * k as f64 / n_roots as f64;
        radius * if d == 0 { t.cos() } else { t.sin() }
    })
}

/// `samples` points, each from a uniformly chosen isotropic Gaussian centered at a
/// scaled root of unity.
pub fn gen_roots_of_unity(n_roots: usize, samples: usize, radius: f64, sigma: f64, seed: u64) -> Result<PointCloud> {
    if n_roots == 0 {
        return Err(OtError::invalid("need at least one root"));
    }
    let centers = roots_of_unity(n_roots, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((samples, 2));
    let mut labels = Vec::with_capacity(samples);
    for mut row in points.rows_mut() {
        let k = rng.random_range(0..n_roots);
        for (d, x) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = centers[[k, d]] + sigma * z;
        }
        labels.push(k);
    }
    Ok(PointCloud { points, labels: Some(labels) })
}

fn check_dims(z1: &Array2<f64>, z2: &Array2<f64>) -> Result<()> {
    if z1.ncols() != z2.ncols() {
        return Err(OtError::shape(format!("point dimensions differ: {} vs {}", z1.ncols(), z2.ncols())));
    }
    Ok(())
}

fn squared_norms(z: &Array2<f64>) -> Array1<f64> {
    z.map_axis(Axis(1), |row| row.dot(&row))
}

/// Pairwise squared distances, clamped at zero against cancellation.
pub fn pairwise_sq_distances(z1: &Array2<f64>, z2: &Array2<f64>) -> Result<Array2<f64>> {
    check_dims(z1, z2)?;
    let n1 = squared_norms(z1);
    let n2 = squared_norms(z2);
    let mut d = z1.dot(&z2.t());
    for ((i, j), x) in d.indexed_iter_mut() {
        *x = (n1[i] + n2[j] - 2.0 * *x).max(0.0);
    }
    Ok(d)
}

/// Dense matrix of pairwise Euclidean distances (or their squares).
pub fn euclidean_matrix(z1: &Array2<f64>, z2: &Array2<f64>, squared: bool) -> Result<Array2<f64>> {
    check_dims(z1, z2)?;
    let mut d = Array2::zeros((z1.nrows(), z2.nrows()));
    for (i, x) in z1.rows().into_iter().enumerate() {
        for (j, y) in z2.rows().into_iter().enumerate() {
            let s: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            d[[i, j]] = if squared { s } else { s.sqrt() };
        }
    }
    Ok(d)
}

/// Dense Euclidean cost `C_ij = ‖z1_i − z2_j‖` (or squared).
pub fn cost_euclidean(z1: &Array2<f64>, z2: &Array2<f64>, squared: bool) -> Result<CostSpec> {
    Ok(CostSpec::dense(euclidean_matrix(z1, z2, squared)?))
}

/// Exact rank-`(d+2)` factorization of the squared Euclidean cost:
/// `C₁ = [‖z1‖², 1, −2·z1]`, `C₂ = [1, ‖z2‖², z2]`.
pub fn cost_sqeuclidean_factored(z1: &Array2<f64>, z2: &Array2<f64>) -> Result<CostSpec> {
    check_dims(z1, z2)?;
    let d = z1.ncols();
    let mut left = Array2::ones((z1.nrows(), d + 2));
    left.column_mut(0).assign(&squared_norms(z1));
    left.slice_mut(s![.., 2..]).assign(&(z1 * -2.0));
    let mut right = Array2::ones((z2.nrows(), d + 2));
    right.column_mut(1).assign(&squared_norms(z2));
    right.slice_mut(s![.., 2..]).assign(z2);
    CostSpec::factored(left, right)
}

/// Divide a dense matrix by its largest entry (left untouched if that is not positive).
pub fn normalize_by_max(mut c: Array2<f64>) -> Array2<f64> {
    let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        c /= max;
    }
    c
}

/// Named benchmark pairs. Costs are Euclidean distances divided by their maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Eight Gaussians on a ring (source) against two moons (target).
    MoonsGaussians,
    /// Three-component against two-component mixture, in 2 or 10 dimensions.
    Mixture2d,
    Mixture10d,
    /// Ten Gaussians on the radius-3 circle against five on the unit circle.
    Roots,
    /// Uniform points in the unit square on both sides.
    Random2d,
}

pub const PRESET_NAMES: [&str; 5] = ["moons-gaussians", "mixture-2d", "mixture-10d", "roots", "random-2d"];

impl std::str::FromStr for Preset {
    type Err = OtError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moons-gaussians" => Ok(Preset::MoonsGaussians),
            "mixture-2d" => Ok(Preset::Mixture2d),
            "mixture-10d" => Ok(Preset::Mixture10d),
            "roots" => Ok(Preset::Roots),
            "random-2d" => Ok(Preset::Random2d),
            other => Err(OtError::invalid(format!(
                "unknown dataset preset '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }
}

/// Standard deviation of each roots-of-unity component.
pub const ROOTS_SIGMA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct PresetInstance {
    pub source: PointCloud,
    pub target: PointCloud,
    pub cost: CostSpec,
}

/// Build `preset` with `n` source and `m` target points from one seed.
pub fn build_preset(preset: Preset, n: usize, m: usize, seed: u64) -> Result<PresetInstance> {
    let (source, target) = match preset {
        Preset::MoonsGaussians => gen_moons_gaussians(n, m, seed)?,
        Preset::Mixture2d | Preset::Mixture10d => {
            let dim = if preset == Preset::Mixture2d { 2 } else { 10 };
            (
                gen_gaussian_mixture(dim, n, MixtureSide::First, seed)?,
                gen_gaussian_mixture(dim, m, MixtureSide::Second, seed.wrapping_add(1))?,
            )
        }
        Preset::Roots => (
            gen_roots_of_unity(10, n, 3.0, ROOTS_SIGMA, seed)?,
            gen_roots_of_unity(5, m, 1.0, ROOTS_SIGMA, seed.wrapping_add(1))?,
        ),
        Preset::Random2d => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cloud = |k: usize| Array2::from_shape_fn((k, 2), |_| rng.random::<f64>());
            let (z1, z2) = (cloud(n), cloud(m));
            (PointCloud::new(z1, None)?, PointCloud::new(z2, None)?)
        }
    };
    if source.is_empty() || target.is_empty() {
        return Err(OtError::invalid("presets need at least one point on each side"));
    }
    let cost = CostSpec::dense(normalize_by_max(euclidean_matrix(&source.points, &target.points, false)?));
    Ok(PresetInstance { source, target, cost })
}
