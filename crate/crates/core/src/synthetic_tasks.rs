//! One-dimensional binary classification tasks made by thresholding
//! Gaussian-process samples, with a balance filter and random splits.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const FORMAT_TAG: &str = "pblab-task";
const FORMAT_VERSION: u32 = 1;
const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub n: usize,
    pub lengthscale: f64,
    pub variance: f64,
    pub input_low: f64,
    pub input_high: f64,
    pub heldout_size: usize,
    pub balance_size: usize,
    /// Smallest accepted minority-class fraction on the balance set; 0
    /// disables the filter.
    pub balance_min_fraction: f64,
    pub jitter: f64,
    /// Draws attempted before giving up on the balance filter.
    pub max_draws: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n: 30,
            lengthscale: 0.7,
            variance: 1.0,
            input_low: -2.0,
            input_high: 2.0,
            heldout_size: 300,
            balance_size: 300,
            balance_min_fraction: 0.4,
            jitter: 1e-6,
            max_draws: 10_000,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 || self.heldout_size == 0 || self.balance_size == 0 || self.max_draws == 0 {
            return bad("task sizes and max_draws must be positive".into());
        }
        if !(self.lengthscale > 0.0 && self.variance > 0.0 && self.jitter > 0.0) {
            return bad("lengthscale, variance and jitter must be positive".into());
        }
        if !(self.input_low < self.input_high) {
            return bad(format!("empty input interval [{}, {}]", self.input_low, self.input_high));
        }
        if !(0.0..=0.5).contains(&self.balance_min_fraction) {
            return bad(format!("balance_min_fraction must lie in [0, 0.5], got {}", self.balance_min_fraction));
        }
        Ok(())
    }
}

/// A labelled input; `y` is `-1.0` or `+1.0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub dataset: Vec<Point>,
    pub heldout: Vec<Point>,
    /// Joint samples drawn until one passed the balance filter.
    pub draws_used: usize,
}

/// The RNG stream for task `index` under `seed`; streams are independent of
/// the order in which tasks are generated.
pub fn task_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exponentiated-quadratic Gram matrix `variance · exp(-(x - x')² / (2 ℓ²))`.
pub fn gram_matrix(xs: &[f64], lengthscale: f64, variance: f64) -> DMatrix<f64> {
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);
    DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
        let d = xs[i] - xs[j];
        variance * (-d * d * inv).exp()
    })
}

/// Lower Cholesky factor of `gram + jitter I`, escalating the jitter tenfold
/// up to 1e-4 on failure.
fn factor_with_jitter(gram: DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    let mut j = jitter;
    loop {
        let mut m = gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += j;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.l());
        }
        if j * 10.0 > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::Factorization { jitter: j });
        }
        log::debug!("Cholesky failed at jitter {j}; escalating");
        j *= 10.0;
    }
}

fn label(f: f64) -> f64 {
    if f < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Draws tasks until one passes the balance filter.
pub fn sample_task<R: Rng + ?Sized>(rng: &mut R, config: &TaskConfig) -> Result<Task> {
    config.validate()?;
    let total = config.n + config.heldout_size + config.balance_size;
    for draw in 1..=config.max_draws {
        let xs: Vec<f64> = (0..total).map(|_| rng.random_range(config.input_low..config.input_high)).collect();
        let chol = factor_with_jitter(gram_matrix(&xs, config.lengthscale, config.variance), config.jitter)?;
        let z = DVector::from_fn(total, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = chol * z;

        let balance = &f.as_slice()[config.n + config.heldout_size..];
        let positives = balance.iter().filter(|&&v| label(v) > 0.0).count();
        let minority = positives.min(balance.len() - positives) as f64 / balance.len() as f64;
        if minority < config.balance_min_fraction {
            continue;
        }
        let points: Vec<Point> = xs.iter().zip(f.iter()).map(|(&x, &v)| Point { x, y: label(v) }).collect();
        return Ok(Task {
            dataset: points[..config.n].to_vec(),
            heldout: points[config.n..config.n + config.heldout_size].to_vec(),
            draws_used: draw,
        });
    }
    Err(Error::TooManyRejections { draws: config.max_draws })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Prior set and risk set of a PAC-Bayes bound.
    PriorRisk,
    /// Train set and test set of a test-set bound.
    TrainTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub mode: SplitMode,
    pub proportion: f64,
    /// Prior or train indices, `round(proportion · n)` of them.
    pub first_part: Vec<usize>,
    /// Risk or test indices.
    pub second_part: Vec<usize>,
}

impl Split {
    pub fn first_points(&self, points: &[Point]) -> Vec<Point> {
        self.first_part.iter().map(|&i| points[i]).collect()
    }

    pub fn second_points(&self, points: &[Point]) -> Vec<Point> {
        self.second_part.iter().map(|&i| points[i]).collect()
    }
}

/// Uniformly random partition of the dataset indices.
pub fn split_dataset<R: Rng + ?Sized>(task: &Task, proportion: f64, mode: SplitMode, rng: &mut R) -> Result<Split> {
    if !(0.0..1.0).contains(&proportion) {
        return Err(Error::InvalidArgument(format!("proportion must lie in [0, 1), got {proportion}")));
    }
    let n = task.dataset.len();
    let k = (proportion * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let second_part = idx.split_off(k);
    Ok(Split { mode, proportion, first_part: idx, second_part })
}

impl Task {
    /// Line-oriented text: a tag line, the draw count, then `x y` lines under
    /// `[dataset]` and `[heldout]` headers. Round-trips bit-exactly.
    pub fn to_text(&self) -> String {
        let mut s = format!("{FORMAT_TAG} {FORMAT_VERSION}\ndraws {}\n", self.draws_used);
        for (name, points) in [("dataset", &self.dataset), ("heldout", &self.heldout)] {
            s.push_str(&format!("[{name}]\n"));
            for p in points {
                s.push_str(&format!("{:?} {:?}\n", p.x, p.y));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == format!("{FORMAT_TAG} {FORMAT_VERSION}") => {}
            Some((i, _)) => return Err(err(i, "missing or unsupported format tag")),
            None => return Err(err(0, "empty input")),
        }
        let draws_used = match lines.next() {
            Some((i, l)) => l
                .strip_prefix("draws")
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| err(i, "expected `draws <count>`"))?,
            None => return Err(err(1, "missing draw count")),
        };
        let mut task = Task { dataset: Vec::new(), heldout: Vec::new(), draws_used };
        let mut section: Option<&mut Vec<Point>> = None;
        for (i, line) in lines {
            match line.trim() {
                "[dataset]" => section = Some(&mut task.dataset),
                "[heldout]" => section = Some(&mut task.heldout),
                body => {
                    let target = section.as_mut().ok_or_else(|| err(i, "point outside a section"))?;
                    let mut parts = body.split_whitespace().map(str::parse::<f64>);
                    let (Some(Ok(x)), Some(Ok(y)), None) = (parts.next(), parts.next(), parts.next()) else {
                        return Err(err(i, "expected `x y`"));
                    };
                    if y != 1.0 && y != -1.0 {
                        return Err(err(i, "label must be -1 or 1"));
                    }
                    target.push(Point { x, y });
                }
            }
        }
        Ok(task)
    }
}
