//! Stochastic dynamics of the `N`-object system.
//!
//! [`simulate`] draws independent runs of the synchronous chain (each object
//! in state `i` jumps according to `K(M)` row `i`, independently) and
//! aggregates occupancy moments. The [`exact`] submodule builds the full
//! count-vector chain for small populations and serves as a ground-truth
//! oracle.

pub mod exact;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::population::{check_dim, OccupancyVector, PopulationModel};
use crate::refined::Functional;

pub use exact::{exact_stationary, exact_transient, exact_transient_moments, ExactChain, EXACT_STATE_LIMIT};

/// Runs are aggregated in fixed blocks of this size, so results do not depend
/// on how many threads execute them.
const RUN_BLOCK: usize = 1024;

/// Integer occupancy counts of an `N`-object system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountState {
    counts: Vec<u64>,
    n_objects: u64,
}

impl CountState {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidCountState("no states".into()));
        }
        let n_objects: u64 = counts.iter().sum();
        if n_objects == 0 {
            return Err(Error::InvalidCountState("population is empty".into()));
        }
        Ok(Self { counts, n_objects })
    }

    /// Converts fractions to counts summing to `n_objects`: floor of
    /// `n_objects * m_i`, then the remaining objects go to the largest
    /// fractional remainders (ties broken by lower state index).
    pub fn from_fractions(m: &OccupancyVector, n_objects: u64) -> Result<Self> {
        if n_objects == 0 {
            return Err(Error::InvalidCountState("population is empty".into()));
        }
        let scaled: Vec<f64> = m.iter().map(|x| x.max(0.0) * n_objects as f64).collect();
        let mut counts: Vec<u64> = scaled.iter().map(|x| x.floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
        });
        let missing = n_objects.saturating_sub(assigned) as usize;
        for &i in order.iter().cycle().take(missing) {
            counts[i] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_objects(&self) -> u64 {
        self.n_objects
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn occupancy(&self) -> OccupancyVector {
        OccupancyVector::from_counts(&self.counts).expect("counts are a valid population")
    }
}

/// Draws `Binomial(n, p)`, with `p` clamped to `[0, 1]`.
fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

/// One synchronous step: each source state splits its objects over the
/// destinations by a multinomial draw with probabilities `K(M)` row `i`,
/// sampled as a sequence of conditional binomials.
pub fn step<R: Rng + ?Sized>(model: &PopulationModel, state: &CountState, rng: &mut R) -> Result<CountState> {
    check_dim(model.dim(), state.dim())?;
    let k = model.kernel().eval_checked(&state.occupancy())?;
    let n = state.dim();
    let mut next = vec![0u64; n];
    for (i, &count) in state.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let last = (0..n).rev().find(|&j| k[(i, j)] > 0.0).expect("stochastic row has a positive entry");
        let mut remaining = count;
        let mut mass = 1.0;
        for j in 0..last {
            let p = k[(i, j)];
            if p <= 0.0 {
                continue;
            }
            let x = if mass > 0.0 { binomial(rng, remaining, p / mass) } else { 0 };
            next[j] += x;
            remaining -= x;
            mass -= p;
            if remaining == 0 {
                break;
            }
        }
        next[last] += remaining;
    }
    Ok(CountState {
        counts: next,
        n_objects: state.n_objects,
    })
}

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub t_max: usize,
    pub runs: usize,
    pub seed: u64,
    /// Functional whose mean `E[h(M(t))]` is estimated alongside the occupancy.
    pub functional: Option<Functional>,
    /// Per-run cap `min(h, clamp)`; singular evaluations count as `+inf`.
    pub clamp: Option<f64>,
}

impl SimulationOptions {
    pub fn new(t_max: usize, runs: usize, seed: u64) -> Self {
        Self {
            t_max,
            runs,
            seed,
            functional: None,
            clamp: None,
        }
    }

    pub fn with_functional(mut self, h: Functional, clamp: Option<f64>) -> Self {
        self.functional = Some(h);
        self.clamp = clamp;
        self
    }
}

/// Per-time empirical moments over independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub n_objects: u64,
    pub mean_trajectory: Vec<DVector<f64>>,
    /// Unbiased sample covariance of the occupancy (zero when `runs == 1`).
    pub covariance_trajectory: Vec<DMatrix<f64>>,
    pub functional_mean: Option<Vec<DVector<f64>>>,
    pub functional_stderr: Option<Vec<DVector<f64>>>,
    /// Runs left out of the functional mean at each time (non-finite `h`, no clamp).
    pub functional_excluded: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl SimulationSummary {
    /// Standard error of the occupancy mean at time `t`.
    pub fn stderr(&self, t: usize) -> DVector<f64> {
        let c = &self.covariance_trajectory[t];
        DVector::from_fn(c.nrows(), |i, _| (c[(i, i)].max(0.0) / self.runs as f64).sqrt())
    }
}

struct BlockSums {
    first: Vec<u64>,
    second: Vec<u128>,
    f_sum: Vec<f64>,
    f_sq: Vec<f64>,
    f_count: Vec<usize>,
}

/// Random stream of run `run`: the ChaCha8 key comes from `seed` and the run
/// index selects the stream, so distinct seeds never share runs.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Monte Carlo estimate of the occupancy moments (and optionally of
/// `E[h(M(t))]`). Run `r` draws from [`run_rng`]`(seed, r)` and aggregation
/// is by run index, so the output is bit-reproducible.
pub fn simulate(model: &PopulationModel, initial: &CountState, options: &SimulationOptions) -> Result<SimulationSummary> {
    let n = model.dim();
    check_dim(n, initial.dim())?;
    if options.runs == 0 {
        return Err(Error::InvalidArgument("at least one run is required".into()));
    }
    if let Some(h) = &options.functional {
        check_dim(n, h.arity())?;
    }
    if let Some(c) = options.clamp {
        if c.is_nan() {
            return Err(Error::InvalidArgument("clamp is NaN".into()));
        }
    }
    let t_len = options.t_max + 1;
    let p = options.functional.as_ref().map_or(0, |h| h.outputs());
    let n_blocks = options.runs.div_ceil(RUN_BLOCK);

    let blocks: Vec<Result<BlockSums>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut sums = BlockSums {
                first: vec![0; t_len * n],
                second: vec![0; t_len * n * n],
                f_sum: vec![0.0; t_len * p],
                f_sq: vec![0.0; t_len * p],
                f_count: vec![0; t_len],
            };
            let end = ((b + 1) * RUN_BLOCK).min(options.runs);
            for run in b * RUN_BLOCK..end {
                let mut rng = run_rng(options.seed, run);
                let mut state = initial.clone();
                for t in 0..t_len {
                    if t > 0 {
                        state = step(model, &state, &mut rng)?;
                    }
                    record(&mut sums, &state, t, n);
                    if let Some(h) = &options.functional {
                        record_functional(&mut sums, h, options.clamp, &state, t, p);
                    }
                }
            }
            Ok(sums)
        })
        .collect();

    let mut first = vec![0u64; t_len * n];
    let mut second = vec![0u128; t_len * n * n];
    let mut f_sum = vec![0.0; t_len * p];
    let mut f_sq = vec![0.0; t_len * p];
    let mut f_count = vec![0usize; t_len];
    for block in blocks {
        let block = block?;
        first.iter_mut().zip(&block.first).for_each(|(a, b)| *a += b);
        second.iter_mut().zip(&block.second).for_each(|(a, b)| *a += b);
        f_sum.iter_mut().zip(&block.f_sum).for_each(|(a, b)| *a += b);
        f_sq.iter_mut().zip(&block.f_sq).for_each(|(a, b)| *a += b);
        f_count.iter_mut().zip(&block.f_count).for_each(|(a, b)| *a += b);
    }

    let runs = options.runs as f64;
    let big_n = initial.n_objects() as f64;
    let mut mean_trajectory = Vec::with_capacity(t_len);
    let mut covariance_trajectory = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let s1 = &first[t * n..(t + 1) * n];
        mean_trajectory.push(DVector::from_fn(n, |i, _| s1[i] as f64 / (runs * big_n)));
        let cov = if options.runs > 1 {
            let r = options.runs as i128;
            DMatrix::from_fn(n, n, |i, j| {
                let (a, b) = (i.min(j), i.max(j));
                let s2 = second[(t * n + a) * n + b] as i128;
                let num = r * s2 - s1[i] as i128 * s1[j] as i128;
                num as f64 / (runs * (runs - 1.0) * big_n * big_n)
            })
        } else {
            DMatrix::zeros(n, n)
        };
        covariance_trajectory.push(cov);
    }

    let mut warnings = Vec::new();
    let functional_excluded: Vec<usize> = f_count.iter().map(|&c| if p > 0 { options.runs - c } else { 0 }).collect();
    let (functional_mean, functional_stderr) = if p > 0 {
        let total_excluded: usize = functional_excluded.iter().sum();
        if total_excluded > 0 {
            warnings.push(format!(
                "functional was non-finite in {total_excluded} run-steps; those runs were excluded at the affected times"
            ));
        }
        let mut means = Vec::with_capacity(t_len);
        let mut errs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let c = f_count[t] as f64;
            let mean = DVector::from_fn(p, |k, _| if c > 0.0 { f_sum[t * p + k] / c } else { f64::NAN });
            let err = DVector::from_fn(p, |k, _| {
                if c > 1.0 {
                    let var = (f_sq[t * p + k] - c * mean[k] * mean[k]) / (c - 1.0);
                    (var.max(0.0) / c).sqrt()
                } else {
                    f64::NAN
                }
            });
            means.push(mean);
            errs.push(err);
        }
        (Some(means), Some(errs))
    } else {
        (None, None)
    };

    Ok(SimulationSummary {
        n_objects: initial.n_objects(),
        mean_trajectory,
        covariance_trajectory,
        functional_mean,
        functional_stderr,
        functional_excluded,
        runs: options.runs,
        seed: options.seed,
        warnings,
    })
}

fn record(sums: &mut BlockSums, state: &CountState, t: usize, n: usize) {
    let c = &state.counts;
    for i in 0..n {
        sums.first[t * n + i] += c[i];
        if c[i] == 0 {
            continue;
        }
        for j in i..n {
            sums.second[(t * n + i) * n + j] += c[i] as u128 * c[j] as u128;
        }
    }
}

fn record_functional(sums: &mut BlockSums, h: &Functional, clamp: Option<f64>, state: &CountState, t: usize, p: usize) {
    let x = state.occupancy().into_vector();
    let value = match h.eval_raw(&x) {
        Ok(v) => v.map(|y| if y.is_nan() { f64::INFINITY } else { y }),
        Err(_) => DVector::from_element(p, f64::INFINITY),
    };
    let value = match clamp {
        Some(c) => value.map(|y| y.min(c)),
        None => value,
    };
    if value.iter().all(|y| y.is_finite()) {
        for k in 0..p {
            sums.f_sum[t * p + k] += value[k];
            sums.f_sq[t * p + k] += value[k] * value[k];
        }
        sums.f_count[t] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{self, TwoStateParams};
    use crate::population::trajectory;
    use crate::refined::gamma;

    #[test]
    fn fraction_rounding_uses_largest_remainder() {
        let m = OccupancyVector::new(vec![0.6, 0.0, 0.4, 0.0]).unwrap();
        assert_eq!(CountState::from_fractions(&m, 32).unwrap().counts(), &[19, 0, 13, 0]);
        assert_eq!(CountState::from_fractions(&m, 160).unwrap().counts(), &[96, 0, 64, 0]);
        let m = OccupancyVector::new(vec![1.0 / 3.0, 0.0, 0.0, 0.0, 2.0 / 3.0]).unwrap();
        assert_eq!(CountState::from_fractions(&m, 15).unwrap().counts(), &[5, 0, 0, 0, 10]);
        let m = OccupancyVector::new(vec![1.0 / 3.0; 3]).unwrap();
        assert_eq!(CountState::from_fractions(&m, 10).unwrap().counts(), &[4, 3, 3]);
    }

    #[test]
    fn deterministic_permutation_kernel() {
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let model = models::constant(perm).unwrap();
        let s = CountState::new(vec![5, 3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = step(&model, &s, &mut rng).unwrap();
        assert_eq!(next.counts(), &[2, 5, 3]);

        let summary = simulate(&model, &s, &SimulationOptions::new(7, 1, 99)).unwrap();
        let mf = trajectory(&model, &s.occupancy(), 7).unwrap();
        for t in 0..=7 {
            assert!((&summary.mean_trajectory[t] - mf[t].as_vector()).amax() < 1e-15);
            assert_eq!(summary.covariance_trajectory[t].amax(), 0.0);
        }
    }

    #[test]
    fn binomial_split_from_all_in_state_zero() {
        let alpha = 0.75;
        let model = models::two_state(&TwoStateParams { alpha }).unwrap();
        let n = 20u64;
        let s = CountState::new(vec![n, 0]).unwrap();
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        for _ in 0..draws {
            let next = step(&model, &s, &mut rng).unwrap();
            assert_eq!(next.counts().iter().sum::<u64>(), n);
            sum += next.counts()[1] as f64;
        }
        let mean = sum / draws as f64;
        let sd = (n as f64 * alpha * (1.0 - alpha) / draws as f64).sqrt();
        assert!((mean - n as f64 * alpha).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn one_step_covariance_matches_gamma() {
        let model = models::seir(&models::SeirParams::default()).unwrap();
        let n = 100u64;
        let s = CountState::new(vec![20, 20, 20, 40]).unwrap();
        let m = s.occupancy();
        let summary = simulate(&model, &s, &SimulationOptions::new(1, 1_000_000, 2024)).unwrap();
        let g = gamma(&model, &m).unwrap();
        let cov = &summary.covariance_trajectory[1] * n as f64;
        // variance of a sample covariance entry, bounded by a fourth-moment estimate
        for i in 0..4 {
            for j in 0..4 {
                let se = (g[(i, i)] * g[(j, j)] + g[(i, j)] * g[(i, j)]).sqrt() / (summary.runs as f64).sqrt();
                assert!((cov[(i, j)] - g[(i, j)]).abs() < 3.0 * se + 1e-12, "({i},{j}): {} vs {}", cov[(i, j)], g[(i, j)]);
            }
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let model = models::two_state(&TwoStateParams { alpha: 0.6 }).unwrap();
        let s = CountState::new(vec![7, 3]).unwrap();
        let opts = SimulationOptions::new(20, 3000, 17);
        let a = simulate(&model, &s, &opts).unwrap();
        let b = simulate(&model, &s, &opts).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, &s, &SimulationOptions::new(20, 3000, 18)).unwrap();
        assert_ne!(a.mean_trajectory, c.mean_trajectory);
        for m in &a.mean_trajectory {
            assert!((m.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn clamp_and_exclusion() {
        let p = models::WsnParams::default();
        let model = models::wsn(&p).unwrap();
        let h = models::response_time_functional(&p);
        let s = CountState::new(vec![5, 0, 0, 0, 10]).unwrap();
        let clamped = simulate(&model, &s, &SimulationOptions::new(60, 500, 1).with_functional(h.clone(), Some(100.0))).unwrap();
        assert!(clamped.functional_excluded.iter().all(|&e| e == 0));
        assert!(clamped.warnings.is_empty());
        for v in clamped.functional_mean.as_ref().unwrap() {
            assert!(v[0] <= 100.0);
        }
        let raw = simulate(&model, &s, &SimulationOptions::new(60, 500, 1).with_functional(h, None)).unwrap();
        let excluded: usize = raw.functional_excluded.iter().sum();
        assert!(excluded > 0);
        assert_eq!(raw.warnings.len(), 1);
        assert!(raw.functional_mean.unwrap().iter().all(|v| v[0].is_finite()));
    }

    #[test]
    fn zero_runs_is_an_error() {
        let model = models::two_state(&TwoStateParams { alpha: 0.6 }).unwrap();
        let s = CountState::new(vec![7, 3]).unwrap();
        assert!(simulate(&model, &s, &SimulationOptions::new(5, 0, 0)).is_err());
    }
}
