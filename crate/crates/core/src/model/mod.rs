//! Online Dirichlet-based Gaussian-process classifier.
//!
//! Each class gets an independent GP regressor on log-space targets obtained
//! from the Dirichlet transform of the one-hot label, with a heteroskedastic
//! diagonal noise term. Posterior predictive samples draw the latent value of
//! every class at a single context and push them through a softmax.
//!
//! States are immutable: [`ModelState::update`] returns a new state that is
//! equivalent to refitting on the enlarged training set. With a fixed
//! lengthscale the Cholesky factors are extended by one row; with the median
//! heuristic the lengthscale moves with the data, so the state is refit.

mod dirichlet;
mod kernel;

pub use dirichlet::dirichlet_transform;
pub use kernel::{median_heuristic, KernelSettings};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{self, Write};
use thiserror::Error;

use crate::domain::{ActionId, ContextVector, Example};
use kernel::rbf;

/// Jitter values tried after the configured one fails.
const JITTER_LADDER: [f64; 2] = [1e-4, 1e-2];

/// Tolerance on row sums of a sample set.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("missing class {0}: need at least one training example per class")]
    MissingClass(usize),
    #[error("label {label} out of range for {m} classes")]
    LabelOutOfRange { label: usize, m: usize },
    #[error("kernel factorization failed for class {class} (last jitter tried {jitter:e})")]
    Factorization { class: usize, jitter: f64 },
    #[error("context has dimension {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("sample row {row} is not a probability vector (sum {sum})")]
    InvalidRow { row: usize, sum: f64 },
}

/// An `s x m` matrix of posterior-sampled class probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSampleSet {
    data: Vec<f64>,
    m: usize,
    /// Number of latent variances clamped at zero while drawing these samples.
    pub variance_clamps: usize,
}

impl PredictiveSampleSet {
    /// Build from explicit rows, checking each is a probability vector.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * m);
        for (i, r) in rows.into_iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.len() != m
                || m == 0
                || (sum - 1.0).abs() > ROW_SUM_TOLERANCE
                || r.iter().any(|p| !(0.0..=1.0).contains(p))
            {
                return Err(ModelError::InvalidRow { row: i, sum });
            }
            data.extend(r);
        }
        Ok(Self {
            data,
            m,
            variance_clamps: 0,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.data.len().checked_div(self.m).unwrap_or(0)
    }

    pub fn num_classes(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.m.max(1))
    }

    /// Row-mean: the Monte-Carlo predictive marginal.
    pub fn mean(&self) -> Vec<f64> {
        let s = self.num_samples() as f64;
        let mut out = vec![0.0; self.m];
        for r in self.rows() {
            for (o, p) in out.iter_mut().zip(r) {
                *o += p;
            }
        }
        out.iter_mut().for_each(|o| *o /= s);
        out
    }
}

/// Per-class latent Gaussian at one context.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosterior {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub clamped: usize,
}

#[derive(Debug, Clone)]
struct ClassPosterior {
    /// Lower Cholesky factor of `K + diag(noise) + jitter I`.
    chol: DMatrix<f64>,
    /// `(K + diag(noise) + jitter I)^{-1} targets`.
    weights: DVector<f64>,
    targets: Vec<f64>,
    noise: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelState {
    settings: KernelSettings,
    m: usize,
    dim: usize,
    inputs: Vec<ContextVector>,
    labels: Vec<ActionId>,
    lengthscale: f64,
    jitter: f64,
    classes: Vec<ClassPosterior>,
}

impl ModelState {
    /// Fit on `examples`, which must cover every one of the `m` classes.
    pub fn fit(examples: &[Example], m: usize, settings: KernelSettings) -> Result<Self, ModelError> {
        let mut seen = vec![false; m];
        for (_, y) in examples {
            if y.0 >= m {
                return Err(ModelError::LabelOutOfRange { label: y.0, m });
            }
            seen[y.0] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(ModelError::MissingClass(k));
        }
        let dim = examples[0].0.len();
        if let Some((x, _)) = examples.iter().find(|(x, _)| x.len() != dim) {
            return Err(ModelError::Dimension {
                expected: dim,
                got: x.len(),
            });
        }
        let inputs: Vec<ContextVector> = examples.iter().map(|(x, _)| x.clone()).collect();
        let labels: Vec<ActionId> = examples.iter().map(|(_, y)| *y).collect();
        let lengthscale = settings.lengthscale.unwrap_or_else(|| median_heuristic(&inputs));

        let n = inputs.len();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            rbf(&inputs[i], &inputs[j], lengthscale, settings.signal_variance)
        });
        let transformed: Vec<(Vec<f64>, Vec<f64>)> = labels
            .iter()
            .map(|&y| dirichlet_transform(y, m, settings.alpha_eps))
            .collect();

        let ladder = std::iter::once(settings.jitter).chain(JITTER_LADDER.into_iter().filter(|&j| j > settings.jitter));
        let mut last = settings.jitter;
        for jitter in ladder {
            last = jitter;
            match factor_all(&gram, &transformed, m, jitter) {
                Some(classes) => {
                    if jitter != settings.jitter {
                        log::warn!("kernel factorization needed jitter {jitter:e}");
                    }
                    return Ok(Self {
                        settings,
                        m,
                        dim,
                        inputs,
                        labels,
                        lengthscale,
                        jitter,
                        classes,
                    });
                }
                None => log::warn!("kernel factorization failed at jitter {jitter:e}"),
            }
        }
        Err(ModelError::Factorization { class: 0, jitter: last })
    }

    /// The state after adding one labelled example.
    pub fn update(&self, example: &Example) -> Result<Self, ModelError> {
        let (x, y) = example;
        if y.0 >= self.m {
            return Err(ModelError::LabelOutOfRange { label: y.0, m: self.m });
        }
        if x.len() != self.dim {
            return Err(ModelError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.settings.lengthscale.is_some() {
            if let Some(next) = self.extend(example) {
                return Ok(next);
            }
        }
        self.refit_with(example)
    }

    fn refit_with(&self, example: &Example) -> Result<Self, ModelError> {
        let mut all = self.examples();
        all.push(example.clone());
        Self::fit(&all, self.m, self.settings)
    }

    /// Append one row to every class's Cholesky factor. `None` when the new
    /// pivot is not positive, in which case the caller refits.
    fn extend(&self, example: &Example) -> Option<Self> {
        let (x, y) = example;
        let n = self.inputs.len();
        let cross = self.cross_kernel(x);
        let (targets, noise) = dirichlet_transform(*y, self.m, self.settings.alpha_eps);
        let mut classes = Vec::with_capacity(self.m);
        for (k, cls) in self.classes.iter().enumerate() {
            let c = cls.chol.solve_lower_triangular(&cross)?;
            let pivot = self.settings.signal_variance + noise[k] + self.jitter - c.norm_squared();
            if pivot <= 0.0 || !pivot.is_finite() {
                return None;
            }
            let mut chol = cls.chol.clone().insert_row(n, 0.0).insert_column(n, 0.0);
            for j in 0..n {
                chol[(n, j)] = c[j];
            }
            chol[(n, n)] = pivot.sqrt();
            let mut tk = cls.targets.clone();
            tk.push(targets[k]);
            let mut nk = cls.noise.clone();
            nk.push(noise[k]);
            let weights = solve_with_factor(&chol, &tk)?;
            classes.push(ClassPosterior {
                chol,
                weights,
                targets: tk,
                noise: nk,
            });
        }
        let mut inputs = self.inputs.clone();
        inputs.push(x.clone());
        let mut labels = self.labels.clone();
        labels.push(*y);
        Some(Self {
            inputs,
            labels,
            classes,
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> Self {
        Self {
            settings: self.settings,
            m: self.m,
            dim: self.dim,
            inputs: Vec::new(),
            labels: Vec::new(),
            lengthscale: self.lengthscale,
            jitter: self.jitter,
            classes: Vec::new(),
        }
    }

    fn cross_kernel(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| rbf(xi, x, self.lengthscale, self.settings.signal_variance)),
        )
    }

    /// Posterior mean and variance of every class's latent function at `x`.
    pub fn latent_posterior(&self, x: &[f64]) -> LatentPosterior {
        let cross = self.cross_kernel(x);
        let mut means = Vec::with_capacity(self.m);
        let mut variances = Vec::with_capacity(self.m);
        let mut clamped = 0;
        for cls in &self.classes {
            means.push(cross.dot(&cls.weights));
            let v = cls
                .chol
                .solve_lower_triangular(&cross)
                .expect("stored Cholesky factor has a positive diagonal");
            let mut var = self.settings.signal_variance - v.norm_squared();
            if var < 0.0 {
                clamped += 1;
                var = 0.0;
            }
            variances.push(var);
        }
        LatentPosterior {
            means,
            variances,
            clamped,
        }
    }

    /// Draw `s` iid predictive probability vectors at `x`.
    pub fn sample_predictives<R: Rng + ?Sized>(&self, x: &[f64], s: usize, rng: &mut R) -> PredictiveSampleSet {
        let latent = self.latent_posterior(x);
        if latent.clamped > 0 {
            log::warn!("clamped {} negative latent variance(s)", latent.clamped);
        }
        sample_from_latent(&latent, s, rng)
    }

    /// Monte-Carlo predictive marginal: the row-mean of `s` samples.
    pub fn predict_marginal<R: Rng + ?Sized>(&self, x: &[f64], s: usize, rng: &mut R) -> Vec<f64> {
        self.sample_predictives(x, s, rng).mean()
    }

    pub fn num_classes(&self) -> usize {
        self.m
    }

    pub fn num_examples(&self) -> usize {
        self.inputs.len()
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn settings(&self) -> &KernelSettings {
        &self.settings
    }

    pub fn examples(&self) -> Vec<Example> {
        self.inputs.iter().cloned().zip(self.labels.iter().copied()).collect()
    }

    /// Plain-text debugging dump. Format, one item per line:
    ///
    /// ```text
    /// odm-model-snapshot v1
    /// classes <m> dim <d> examples <n>
    /// lengthscale <l> signal_variance <v> jitter <j> alpha_eps <a>
    /// <label> <x_1> ... <x_d>        (n lines)
    /// ```
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "odm-model-snapshot v1")?;
        writeln!(w, "classes {} dim {} examples {}", self.m, self.dim, self.inputs.len())?;
        writeln!(
            w,
            "lengthscale {:e} signal_variance {:e} jitter {:e} alpha_eps {:e}",
            self.lengthscale, self.settings.signal_variance, self.jitter, self.settings.alpha_eps
        )?;
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            write!(w, "{}", y.0)?;
            for v in x {
                write!(w, " {v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Softmax of independent Gaussian latent draws, `s` times.
pub fn sample_from_latent<R: Rng + ?Sized>(latent: &LatentPosterior, s: usize, rng: &mut R) -> PredictiveSampleSet {
    assert!(s >= 1, "need at least one sample");
    let m = latent.means.len();
    let sd: Vec<f64> = latent.variances.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut data = Vec::with_capacity(s * m);
    let mut f = vec![0.0; m];
    for _ in 0..s {
        for k in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            f[k] = latent.means[k] + sd[k] * z;
        }
        let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        let mut total = 0.0;
        for v in &f {
            let e = (v - max).exp();
            total += e;
            data.push(e);
        }
        data[start..].iter_mut().for_each(|p| *p /= total);
    }
    PredictiveSampleSet {
        data,
        m,
        variance_clamps: latent.clamped,
    }
}

fn factor_all(
    gram: &DMatrix<f64>,
    transformed: &[(Vec<f64>, Vec<f64>)],
    m: usize,
    jitter: f64,
) -> Option<Vec<ClassPosterior>> {
    let n = gram.nrows();
    (0..m)
        .map(|k| {
            let noise: Vec<f64> = transformed.iter().map(|(_, v)| v[k]).collect();
            let targets: Vec<f64> = transformed.iter().map(|(t, _)| t[k]).collect();
            let mut a = gram.clone();
            for i in 0..n {
                a[(i, i)] += noise[i] + jitter;
            }
            let chol = a.cholesky()?.unpack();
            let weights = solve_with_factor(&chol, &targets)?;
            Some(ClassPosterior {
                chol,
                weights,
                targets,
                noise,
            })
        })
        .collect()
}

fn solve_with_factor(chol: &DMatrix<f64>, rhs: &[f64]) -> Option<DVector<f64>> {
    let b = DVector::from_column_slice(rhs);
    let z = chol.solve_lower_triangular(&b)?;
    chol.tr_solve_lower_triangular(&z)
}
