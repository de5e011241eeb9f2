//! Synthetic client objectives, their global and personalised mixtures,
//! bounded reward noise, and brute-force oracles over a dense grid.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Garland: `4x(1-x) * (3/4 + (1/4)(1 - sqrt|sin 60x|))`.
pub fn garland<T: Real>(x: T) -> T {
    let quarter = T::of(0.25);
    let envelope = T::of(4.0) * x * (T::one() - x);
    let ripple = (T::of(60.0) * x).sin().abs().sqrt();
    envelope * (T::of(0.75) + quarter * (T::one() - ripple))
}

/// `(sin 13x * sin 27x + 1) / 2`.
pub fn double_sine<T: Real>(x: T) -> T {
    ((T::of(13.0) * x).sin() * (T::of(27.0) * x).sin() + T::one()) / T::of(2.0)
}

/// Named one-dimensional base function on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BaseFunction {
    Garland,
    DoubleSine,
    /// `1 - |x - 1/2|`.
    Tent,
    Constant(f64),
}

impl BaseFunction {
    pub fn eval<T: Real>(self, x: T) -> T {
        match self {
            BaseFunction::Garland => garland(x),
            BaseFunction::DoubleSine => double_sine(x),
            BaseFunction::Tent => T::one() - (x - T::of(0.5)).abs(),
            BaseFunction::Constant(c) => T::of(c),
        }
    }
}

impl fmt::Display for BaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseFunction::Garland => f.write_str("garland"),
            BaseFunction::DoubleSine => f.write_str("double-sine"),
            BaseFunction::Tent => f.write_str("tent"),
            BaseFunction::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl From<BaseFunction> for String {
    fn from(b: BaseFunction) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for BaseFunction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for BaseFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "garland" => Ok(BaseFunction::Garland),
            "double-sine" | "doublesine" | "double_sine" => Ok(BaseFunction::DoubleSine),
            "tent" => Ok(BaseFunction::Tent),
            other => match other.strip_prefix("constant:") {
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|c| (0.0..=1.0).contains(c))
                    .map(BaseFunction::Constant)
                    .ok_or_else(|| Error::InvalidConfig(format!("bad constant objective {other:?}"))),
                None => Err(Error::InvalidConfig(format!("unknown objective {other:?}"))),
            },
        }
    }
}

/// Wraps `y` into `[0,1]`, leaving values already inside untouched.
fn wrap_unit<T: Real>(y: T) -> T {
    if y >= T::zero() && y <= T::one() {
        y
    } else {
        y - y.floor()
    }
}

/// Shift of client `m` (0-based) among `clients`: `s(2(m+1) - M - 1)/(2M)`.
pub fn client_shift<T: Real>(m: usize, clients: usize, spread: T) -> T {
    let num = T::of_usize(2 * (m + 1)) - T::of_usize(clients) - T::one();
    spread * num / T::of_usize(2 * clients)
}

/// One client's local objective: the base function under a cyclic shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalObjective<T> {
    pub base: BaseFunction,
    pub shift: T,
}

impl<T: Real> LocalObjective<T> {
    pub fn eval(&self, x: T) -> T {
        if self.shift == T::zero() {
            self.base.eval(x)
        } else {
            self.base.eval(wrap_unit(x + self.shift))
        }
    }
}

pub fn modulate<T: Real>(base: BaseFunction, m: usize, clients: usize, spread: T) -> LocalObjective<T> {
    LocalObjective { base, shift: client_shift(m, clients, spread) }
}

/// The `M` local objectives plus the global mean and personalised mixtures.
///
/// Points are `dim`-dimensional; only the first coordinate is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSuite<T> {
    base: BaseFunction,
    spread: T,
    dim: usize,
    locals: Vec<LocalObjective<T>>,
}

impl<T: Real> ObjectiveSuite<T> {
    pub fn new(base: BaseFunction, clients: usize, spread: T, dim: usize) -> Result<Self> {
        if clients == 0 {
            return Err(Error::InvalidConfig("at least one client required".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        let locals = (0..clients).map(|m| modulate(base, m, clients, spread)).collect();
        Ok(ObjectiveSuite { base, spread, dim, locals })
    }

    pub fn base(&self) -> BaseFunction {
        self.base
    }

    pub fn spread(&self) -> T {
        self.spread
    }

    pub fn clients(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn locals(&self) -> &[LocalObjective<T>] {
        &self.locals
    }

    pub fn local(&self, m: usize, x: &[T]) -> T {
        self.locals[m].eval(x[0])
    }

    /// Every client's local value at `x`, in client order.
    pub fn local_values(&self, x: &[T]) -> Vec<T> {
        self.locals.iter().map(|l| l.eval(x[0])).collect()
    }

    pub fn global(&self, x: &[T]) -> T {
        mean(&self.local_values(x))
    }

    pub fn personalised(&self, alpha: T, m: usize, x: &[T]) -> T {
        let locals = self.local_values(x);
        mix(alpha, locals[m], mean(&locals))
    }

    pub fn personalised_objective(&self, alpha: T, m: usize) -> PersonalisedObjective<'_, T> {
        PersonalisedObjective { suite: self, alpha, client: m }
    }
}

/// `alpha * local + (1 - alpha) * global`.
pub fn mix<T: Real>(alpha: T, local: T, global: T) -> T {
    alpha * local + (T::one() - alpha) * global
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of_usize(v.len())
}

/// Client `m`'s personalised objective as a standalone function.
#[derive(Debug, Clone, Copy)]
pub struct PersonalisedObjective<'a, T> {
    suite: &'a ObjectiveSuite<T>,
    alpha: T,
    client: usize,
}

impl<T: Real> PersonalisedObjective<'_, T> {
    pub fn eval(&self, x: &[T]) -> T {
        self.suite.personalised(self.alpha, self.client, x)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn client(&self) -> usize {
        self.client
    }
}

pub fn personalised_value<T: Real>(suite: &ObjectiveSuite<T>, alpha: T, m: usize, x: &[T]) -> T {
    suite.personalised(alpha, m, x)
}

/// Zero-mean noise, uniform on `[-b, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    pub half_width: T,
}

impl<T: Real> NoiseModel<T> {
    pub fn uniform(half_width: T) -> Result<Self> {
        if !(half_width >= T::zero()) || !half_width.is_finite() {
            return Err(Error::InvalidConfig(format!("noise half-width must be >= 0, got {half_width}")));
        }
        Ok(NoiseModel { half_width })
    }

    pub fn none() -> Self {
        NoiseModel { half_width: T::zero() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        if self.half_width == T::zero() {
            return T::zero();
        }
        let b = self.half_width.as_f64();
        T::of(rng.gen_range(-b..=b))
    }

    /// Variance of a single draw, `b^2 / 3`.
    pub fn variance(&self) -> T {
        self.half_width * self.half_width / T::of(3.0)
    }
}

/// One noisy observation `mu_m(x) + eps`, not clipped.
pub fn sample_reward<T: Real, R: Rng + ?Sized>(
    suite: &ObjectiveSuite<T>,
    noise: &NoiseModel<T>,
    m: usize,
    x: &[T],
    rng: &mut R,
) -> T {
    suite.local(m, x) + noise.sample(rng)
}

/// Brute-force grid settings for the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    /// Midpoint grid size on the first coordinate.
    pub resolution: usize,
    /// Re-scan `[x - 1/G, x + 1/G]` around each coarse argmax.
    pub refine: bool,
}

impl OracleGrid {
    pub const MIN_RESOLUTION: usize = 1_000;
    pub const REFINE_POINTS: usize = 20_001;
    /// Successive zooms around each maximiser.
    pub const REFINE_LEVELS: usize = 3;

    pub fn new(resolution: usize) -> Self {
        OracleGrid { resolution, refine: true }
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid::new(1_000_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum<T> {
    pub value: T,
    /// First coordinate of the maximiser.
    pub argmax: T,
}

impl<T: Real> Optimum<T> {
    fn offer(&mut self, x: T, v: T) {
        if v > self.value {
            self.value = v;
            self.argmax = x;
        }
    }

    /// Full point in `dim` dimensions; unused coordinates sit at 1/2.
    pub fn point(&self, dim: usize) -> Vec<T> {
        let mut p = vec![T::of(0.5); dim];
        p[0] = self.argmax;
        p
    }
}

/// Optima of every objective in a suite for one personalisation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport<T> {
    pub objective: BaseFunction,
    pub clients: usize,
    pub spread: T,
    pub alpha: T,
    pub grid: OracleGrid,
    pub personalised: Vec<Optimum<T>>,
    pub local: Vec<Optimum<T>>,
    pub global: Optimum<T>,
}

impl<T: Real> OracleReport<T> {
    /// Mean over clients of the best local value.
    pub fn best_local_mean(&self) -> T {
        mean(&self.local.iter().map(|o| o.value).collect::<Vec<_>>())
    }

    pub fn check_matches(&self, suite: &ObjectiveSuite<T>, alpha: T) -> Result<()> {
        if self.objective != suite.base() {
            return Err(Error::OracleMismatch(format!("objective {} vs {}", self.objective, suite.base())));
        }
        if self.clients != suite.clients() {
            return Err(Error::OracleMismatch(format!("clients {} vs {}", self.clients, suite.clients())));
        }
        if self.spread != suite.spread() || self.alpha != alpha {
            return Err(Error::OracleMismatch(format!(
                "spread/alpha ({}, {}) vs ({}, {})",
                self.spread,
                self.alpha,
                suite.spread(),
                alpha
            )));
        }
        Ok(())
    }
}

fn unset<T: Real>() -> Optimum<T> {
    Optimum { value: T::neg_infinity(), argmax: T::zero() }
}

/// Brute-force maxima of `mu'_m`, `mu_m` and `mu` over the midpoint grid,
/// optionally refined around each coarse maximiser.
pub fn oracle_optima<T: Real>(suite: &ObjectiveSuite<T>, alpha: T, grid: OracleGrid) -> Result<OracleReport<T>> {
    if grid.resolution < OracleGrid::MIN_RESOLUTION {
        return Err(Error::InvalidConfig(format!(
            "oracle grid resolution must be at least {}, got {}",
            OracleGrid::MIN_RESOLUTION,
            grid.resolution
        )));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let m = suite.clients();
    let mut personalised = vec![unset::<T>(); m];
    let mut local = vec![unset::<T>(); m];
    let mut global = unset::<T>();
    let mut values = vec![T::zero(); m];

    let mut scan = |x: T, personalised: &mut [Optimum<T>], local: &mut [Optimum<T>], global: &mut Optimum<T>| {
        for (v, l) in values.iter_mut().zip(suite.locals()) {
            *v = l.eval(x);
        }
        let g = mean(&values);
        global.offer(x, g);
        for k in 0..m {
            local[k].offer(x, values[k]);
            personalised[k].offer(x, mix(alpha, values[k], g));
        }
    };

    let g = T::of_usize(grid.resolution);
    let half = T::of(0.5);
    for k in 0..grid.resolution {
        let x = (T::of_usize(k) + half) / g;
        scan(x, &mut personalised, &mut local, &mut global);
    }

    if grid.refine {
        let n = OracleGrid::REFINE_POINTS;
        let mut half_width = T::one() / g;
        for _ in 0..OracleGrid::REFINE_LEVELS {
            let centres: Vec<T> = personalised
                .iter()
                .chain(&local)
                .chain(std::iter::once(&global))
                .map(|o| o.argmax)
                .collect();
            for c in dedup_sorted(centres) {
                let lo = (c - half_width).max(T::zero());
                let hi = (c + half_width).min(T::one());
                for j in 0..n {
                    let x = lo + (hi - lo) * T::of_usize(j) / T::of_usize(n - 1);
                    scan(x, &mut personalised, &mut local, &mut global);
                }
            }
            half_width = T::of(2.0) * half_width / T::of_usize(n - 1);
        }
    }

    Ok(OracleReport {
        objective: suite.base(),
        clients: m,
        spread: suite.spread(),
        alpha,
        grid,
        personalised,
        local,
        global,
    })
}

fn dedup_sorted<T: Real>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    v.dedup();
    v
}

/// Covering-count growth of one function's near-optimal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringFit<T> {
    pub dimension: T,
    pub epsilons: Vec<T>,
    /// Cells of side `nu1 * eps` meeting the eps-optimal set, per epsilon.
    pub counts: Vec<usize>,
}

/// Near-optimality dimension of every client's personalised objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearOptimalityEstimate<T> {
    pub per_client: Vec<CoveringFit<T>>,
    /// `max_m d_m`.
    pub d_prime: T,
    pub epsilons: Vec<T>,
    pub resolution: usize,
}

/// Fits the slope of `ln N(eps)` against `ln(1/eps)`, where `N(eps)` counts
/// cells of side `nu1 * eps` that meet `{x : f* - f(x) <= eps}` on a midpoint
/// grid of `resolution` points over `[0,1]`. Negative slopes clamp to zero;
/// a function whose whole grid is eps-optimal for every eps gets dimension 0.
pub fn estimate_near_optimality_dimension<T: Real>(
    f: impl Fn(T) -> T,
    nu1: T,
    epsilons: &[T],
    resolution: usize,
) -> Result<CoveringFit<T>> {
    if epsilons.len() < 2 {
        return Err(Error::DegenerateFit(epsilons.len()));
    }
    if epsilons.iter().any(|&e| !(e > T::zero())) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidEpsilonList);
    }
    if resolution == 0 {
        return Err(Error::InvalidConfig("resolution must be positive".into()));
    }
    let g = T::of_usize(resolution);
    let half = T::of(0.5);
    let xs: Vec<T> = (0..resolution).map(|k| (T::of_usize(k) + half) / g).collect();
    let ys: Vec<T> = xs.iter().map(|&x| f(x)).collect();
    let best = ys.iter().copied().fold(T::neg_infinity(), T::max);
    let worst = ys.iter().copied().fold(T::infinity(), T::min);

    let counts: Vec<usize> = epsilons
        .iter()
        .map(|&eps| {
            let side = nu1 * eps;
            let mut last = None;
            let mut count = 0usize;
            for (&x, &y) in xs.iter().zip(&ys) {
                if best - y <= eps {
                    let cell = (x / side).floor().to_u64().unwrap_or(u64::MAX);
                    if last != Some(cell) {
                        count += 1;
                        last = Some(cell);
                    }
                }
            }
            count
        })
        .collect();

    let smallest = *epsilons.last().expect("len >= 2");
    let dimension = if best - worst <= smallest {
        T::zero()
    } else {
        let pts: Vec<(T, T)> = epsilons
            .iter()
            .zip(&counts)
            .map(|(&e, &c)| ((T::one() / e).ln(), T::of_usize(c.max(1)).ln()))
            .collect();
        least_squares_slope(&pts).max(T::zero())
    };
    Ok(CoveringFit { dimension, epsilons: epsilons.to_vec(), counts })
}

fn least_squares_slope<T: Real>(pts: &[(T, T)]) -> T {
    let n = T::of_usize(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: T = pts.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == T::zero() {
        T::zero()
    } else {
        sxy / sxx
    }
}

/// Per-client estimate for every personalised objective of the suite.
pub fn estimate_suite_near_optimality<T: Real>(
    suite: &ObjectiveSuite<T>,
    alpha: T,
    nu1: T,
    epsilons: &[T],
    resolution: usize,
) -> Result<NearOptimalityEstimate<T>> {
    let dim = suite.dim();
    let per_client = (0..suite.clients())
        .map(|m| {
            let obj = suite.personalised_objective(alpha, m);
            estimate_near_optimality_dimension(
                |x| {
                    let mut p = vec![T::of(0.5); dim];
                    p[0] = x;
                    obj.eval(&p)
                },
                nu1,
                epsilons,
                resolution,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let d_prime = per_client.iter().map(|c| c.dimension).fold(T::zero(), T::max);
    Ok(NearOptimalityEstimate { per_client, d_prime, epsilons: epsilons.to_vec(), resolution })
}
