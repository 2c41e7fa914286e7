//! Exact outcome distributions, benefit curves and expected fitness for the
//! fixed-risk and social-risk models.
//!
//! An individual makes `n` interaction attempts. Each attempt targets the
//! in-group with probability `p` and the out-group otherwise; in-group attempts
//! succeed with probability `q_in`, out-group attempts with an effective
//! probability that is `q_out` (fixed risk) or `q_out * (1 - p_resident)`
//! (social risk). Fitness is a nonlinear function of the accumulated benefit
//! and the environment quality `theta`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit, Error, Result};

/// Largest interaction count for which binomial coefficients come from the
/// exact integer Pascal triangle and the expected fitness is the literal
/// triple sum over tallies. Above it, log-space coefficients and the
/// equivalent multinomial form over `(l_in, l_out)` are used.
pub const EXACT_N_MAX: u32 = 64;

/// Parameters of the interaction game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    pub b_in: f64,
    pub b_out: f64,
    pub q_in: f64,
    pub q_out: f64,
    pub n: u32,
}

impl Default for InteractionParams {
    fn default() -> Self {
        Self {
            b_in: 0.5,
            b_out: 1.0,
            q_in: 1.0,
            q_out: 0.6,
            n: 5,
        }
    }
}

impl InteractionParams {
    pub fn new(b_in: f64, b_out: f64, q_in: f64, q_out: f64, n: u32) -> Result<Self> {
        let params = Self {
            b_in,
            b_out,
            q_in,
            q_out,
            n,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("b_in", self.b_in)?;
        check_positive("b_out", self.b_out)?;
        check_unit("q_in", self.q_in)?;
        check_unit("q_out", self.q_out)?;
        if self.n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: 0.0,
                reason: "must be >= 1",
            });
        }
        Ok(())
    }

    /// True when out-group interactions pay more but fail more often.
    pub fn risk_reward_ordered(&self) -> bool {
        self.b_out > self.b_in && self.q_out < self.q_in
    }

    /// Largest accumulated benefit reachable in one evaluation.
    pub fn payoff_max(&self) -> f64 {
        f64::from(self.n) * self.b_in.max(self.b_out)
    }

    pub fn payoff(&self, l_in: u32, l_out: u32) -> f64 {
        f64::from(l_in) * self.b_in + f64::from(l_out) * self.b_out
    }
}

/// Probability of choosing an in-group interaction. `1` is maximal
/// polarization, `0` maximal diversity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Strategy(f64);

impl Strategy {
    pub const DIVERSE: Strategy = Strategy(0.0);
    pub const PAROCHIAL: Strategy = Strategy(1.0);

    pub fn new(p: f64) -> Result<Self> {
        check_unit("p", p)?;
        Ok(Self(p))
    }

    /// Clamps into `[0, 1]`. NaN maps to 0.
    pub fn clamped(p: f64) -> Self {
        if p.is_nan() {
            Self(0.0)
        } else {
            Self(p.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Environment quality; positive is good, negative adverse.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Environment(f64);

impl Environment {
    pub fn new(theta: f64) -> Self {
        Self(theta)
    }

    #[inline]
    pub fn theta(self) -> f64 {
        self.0
    }
}

impl From<f64> for Environment {
    fn from(theta: f64) -> Self {
        Self(theta)
    }
}

/// One realization of an evaluation round: `k` in-group attempts with
/// `l_in` successes, `n - k` out-group attempts with `l_out` successes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeTally {
    pub k: u32,
    pub l_in: u32,
    pub l_out: u32,
}

impl OutcomeTally {
    pub fn new(k: u32, l_in: u32, l_out: u32) -> Self {
        Self { k, l_in, l_out }
    }

    pub fn validate(&self, n: u32) -> Result<()> {
        if self.k > n || self.l_in > self.k || self.l_out > n - self.k {
            return Err(Error::InvalidTally {
                k: self.k,
                l_in: self.l_in,
                l_out: self.l_out,
                n,
            });
        }
        Ok(())
    }

    /// Every valid tally for `n` attempts, in summation order
    /// (k outer, l_in middle, l_out inner).
    pub fn all(n: u32) -> impl Iterator<Item = OutcomeTally> {
        (0..=n).flat_map(move |k| {
            (0..=k).flat_map(move |l_in| (0..=n - k).map(move |l_out| OutcomeTally { k, l_in, l_out }))
        })
    }
}

/// Which out-group success probability applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskModel {
    /// Out-group success probability is the constant `q_out`.
    Fixed,
    /// Out-group success probability is `q_out * (1 - p_partner)`.
    Social,
}

impl RiskModel {
    pub fn name(self) -> &'static str {
        match self {
            RiskModel::Fixed => "fixed",
            RiskModel::Social => "social",
        }
    }

    /// Effective out-group success probability against a resident population.
    #[inline]
    pub fn q_out_effective(self, params: &InteractionParams, resident: Strategy) -> f64 {
        match self {
            RiskModel::Fixed => params.q_out,
            RiskModel::Social => params.q_out * (1.0 - resident.value()),
        }
    }
}

impl std::str::FromStr for RiskModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(RiskModel::Fixed),
            "social" => Ok(RiskModel::Social),
            other => Err(Error::Usage(format!(
                "unknown model `{other}` (expected `fixed` or `social`)"
            ))),
        }
    }
}

/// Functional response mapping accumulated benefit and environment to fitness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BenefitCurve {
    /// `logistic(h (payoff + n theta) / n) * (1 + slope * payoff)`.
    SigmoidLinear { steepness: f64, slope: f64 },
    /// `((payoff + n theta) / n) ^ (10 ^ curvature_exp)`. With
    /// `clamp_negative` a negative base is treated as zero instead of
    /// raising a domain error.
    PowerCurvature { curvature_exp: f64, clamp_negative: bool },
    /// Raw accumulated benefit. Recovers the linear expected benefit.
    Linear,
}

impl BenefitCurve {
    /// Steep sigmoid-linear curve (h = 10, slope = 0.02).
    pub fn steep() -> Self {
        BenefitCurve::SigmoidLinear {
            steepness: 10.0,
            slope: 0.02,
        }
    }

    /// Shallow sigmoid-linear curve (h = 2, slope = 0.01), the configuration default.
    pub fn shallow() -> Self {
        BenefitCurve::SigmoidLinear {
            steepness: 2.0,
            slope: 0.01,
        }
    }

    pub fn power(curvature_exp: f64) -> Self {
        BenefitCurve::PowerCurvature {
            curvature_exp,
            clamp_negative: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BenefitCurve::SigmoidLinear { steepness, slope } => {
                check_positive("steepness", steepness)?;
                if !(slope.is_finite() && slope >= 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "slope",
                        value: slope,
                        reason: "must be finite and >= 0",
                    });
                }
                Ok(())
            }
            BenefitCurve::PowerCurvature { curvature_exp, .. } => {
                if !curvature_exp.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "curvature_exp",
                        value: curvature_exp,
                        reason: "must be finite",
                    });
                }
                Ok(())
            }
            BenefitCurve::Linear => Ok(()),
        }
    }

    /// Fitness for an accumulated benefit `payoff` after `n` attempts.
    pub fn evaluate(&self, payoff: f64, theta: f64, n: u32) -> Result<f64> {
        let n = f64::from(n);
        match *self {
            BenefitCurve::SigmoidLinear { steepness, slope } => {
                Ok(logistic(steepness * (payoff + n * theta) / n) * (1.0 + slope * payoff))
            }
            BenefitCurve::PowerCurvature {
                curvature_exp,
                clamp_negative,
            } => {
                let base = (payoff + n * theta) / n;
                if base < 0.0 {
                    if clamp_negative {
                        return Ok(0.0);
                    }
                    return Err(Error::Domain { argument: base });
                }
                Ok(base.powf(10f64.powf(curvature_exp)))
            }
            BenefitCurve::Linear => Ok(payoff),
        }
    }

    /// Whether the power curve sees a negative base for some tally at `theta`.
    /// The smallest reachable benefit is zero, so this is simply `theta < 0`.
    pub fn hits_negative_base(&self, theta: f64) -> bool {
        matches!(self, BenefitCurve::PowerCurvature { .. }) && theta < 0.0
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn pascal() -> &'static [Vec<u64>] {
    static TABLE: OnceLock<Vec<Vec<u64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows: Vec<Vec<u64>> = Vec::with_capacity(EXACT_N_MAX as usize + 1);
        for n in 0..=EXACT_N_MAX as usize {
            let mut row = vec![1u64; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        rows
    })
}

/// Natural log of `C(n, k)`.
pub fn ln_binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if n <= EXACT_N_MAX {
        return (pascal()[n as usize][k as usize] as f64).ln();
    }
    let k = k.min(n - k);
    (1..=k).map(|i| (f64::from(n - k + i) / f64::from(i)).ln()).sum()
}

/// `C(n, k)`; exact integer arithmetic for `n <= 64`.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        0.0
    } else if n <= EXACT_N_MAX {
        pascal()[n as usize][k as usize] as f64
    } else {
        ln_binomial(n, k).exp()
    }
}

/// `x^k` with the convention `0^0 = 1`.
#[inline]
fn pow_u(x: f64, k: u32) -> f64 {
    if k == 0 {
        1.0
    } else {
        x.powi(k as i32)
    }
}

/// Binomial probability mass `P(X = k)` for `X ~ Bin(n, q)`, exact at the
/// degenerate endpoints `q in {0, 1}`.
pub fn binomial_pmf(n: u32, k: u32, q: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= EXACT_N_MAX {
        return binomial(n, k) * pow_u(q, k) * pow_u(1.0 - q, n - k);
    }
    if q == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, k) + f64::from(k) * q.ln() + f64::from(n - k) * (1.0 - q).ln()).exp()
}

/// Full pmf vector `[P(X = 0), ..., P(X = n)]`.
pub fn binomial_pmf_vec(n: u32, q: f64) -> Vec<f64> {
    (0..=n).map(|k| binomial_pmf(n, k, q)).collect()
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Probability of `tally` for a player with strategy `p` and out-group
/// success probability `q_out_eff`.
pub fn outcome_probability(
    tally: OutcomeTally,
    p: Strategy,
    params: &InteractionParams,
    q_out_eff: f64,
) -> Result<f64> {
    check_unit("q_out_eff", q_out_eff)?;
    tally.validate(params.n)?;
    let n = params.n;
    Ok(binomial_pmf(n, tally.k, p.value())
        * binomial_pmf(tally.k, tally.l_in, params.q_in)
        * binomial_pmf(n - tally.k, tally.l_out, q_out_eff))
}

/// `n B_in q_in p + n B_out q_out (1 - p)`.
pub fn expected_linear_benefit(p: Strategy, params: &InteractionParams) -> f64 {
    let n = f64::from(params.n);
    let p = p.value();
    n * params.b_in * params.q_in * p + n * params.b_out * params.q_out * (1.0 - p)
}

/// Fitness of a single realized tally.
pub fn fitness_kernel(
    tally: OutcomeTally,
    theta: Environment,
    curve: &BenefitCurve,
    params: &InteractionParams,
) -> Result<f64> {
    tally.validate(params.n)?;
    curve.evaluate(params.payoff(tally.l_in, tally.l_out), theta.theta(), params.n)
}

/// Kernel values indexed `[l_in][l_out]` over the triangle `l_in + l_out <= n`.
fn kernel_table(theta: Environment, curve: &BenefitCurve, params: &InteractionParams) -> Result<Vec<Vec<f64>>> {
    let n = params.n;
    (0..=n)
        .map(|l_in| {
            (0..=n - l_in)
                .map(|l_out| curve.evaluate(params.payoff(l_in, l_out), theta.theta(), n))
                .collect()
        })
        .collect()
}

/// `sum_k weight[k] sum_{l_in} Bin(l_in; k, q_in) sum_{l_out} Bin(l_out; n-k, q_eff) K(l_in, l_out)`.
fn weighted_tally_sum(weights: &[f64], q_in: f64, q_out_eff: f64, kernel: &[Vec<f64>], n: u32) -> f64 {
    let mut acc = CompensatedSum::default();
    for k in 0..=n {
        let wk = weights[k as usize];
        if wk == 0.0 {
            continue;
        }
        let m = n - k;
        let out_pmf = binomial_row(m, q_out_eff);
        let in_pmf = binomial_row(k, q_in);
        for (l_in, &w_in) in in_pmf.iter().enumerate() {
            if w_in == 0.0 {
                continue;
            }
            // Inner terms share a sign, so a plain sum keeps full relative accuracy.
            let inner: f64 = out_pmf.iter().zip(&kernel[l_in]).map(|(a, b)| a * b).sum();
            acc.add(wk * w_in * inner);
        }
    }
    acc.total()
}

/// `Bin(k; n, q)` for all `k`, by the ratio recurrence anchored at the mode.
/// Avoids per-term logarithms for large `n`.
fn binomial_row(n: u32, q: f64) -> Vec<f64> {
    let len = n as usize + 1;
    let mut row = vec![0.0; len];
    if q <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if q >= 1.0 {
        row[n as usize] = 1.0;
        return row;
    }
    let mode = (((f64::from(n) + 1.0) * q).floor() as u32).min(n);
    row[mode as usize] = binomial_pmf(n, mode, q);
    let odds = q / (1.0 - q);
    for k in mode..n {
        row[k as usize + 1] = row[k as usize] * f64::from(n - k) / f64::from(k + 1) * odds;
    }
    for k in (1..=mode).rev() {
        row[k as usize - 1] = row[k as usize] * f64::from(k) / f64::from(n - k + 1) / odds;
    }
    row
}

/// Joint law of `(l_in, l_out)` among `n` attempts when each attempt is an
/// in-group success with probability `a`, an out-group success with
/// probability `b`, otherwise a failure. Indexed `[l_in][l_out]`.
fn multinomial_table(n: u32, a: f64, b: f64) -> Vec<Vec<f64>> {
    let in_row = binomial_row(n, a);
    // Given l_in, each remaining attempt is an out-group success with probability b / (1 - a).
    let cond = if a >= 1.0 { 0.0 } else { (b / (1.0 - a)).clamp(0.0, 1.0) };
    (0..=n)
        .map(|l_in| {
            let w = in_row[l_in as usize];
            binomial_row(n - l_in, cond).into_iter().map(|x| w * x).collect()
        })
        .collect()
}

fn collapsed_expectation(p: f64, q_in: f64, q_out_eff: f64, kernel: &[Vec<f64>], n: u32) -> f64 {
    let table = multinomial_table(n, p * q_in, (1.0 - p) * q_out_eff);
    let mut acc = CompensatedSum::default();
    for (row, k_row) in table.iter().zip(kernel) {
        acc.add(row.iter().zip(k_row).map(|(a, b)| a * b).sum());
    }
    acc.total()
}

fn collapsed_derivative(p: f64, q_in: f64, q_out_eff: f64, kernel: &[Vec<f64>], n: u32) -> f64 {
    let lower = multinomial_table(n - 1, p * q_in, (1.0 - p) * q_out_eff);
    let at = |i: usize, j: usize| -> f64 { lower.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0) };
    let nf = f64::from(n);
    let mut acc = CompensatedSum::default();
    for (l_in, k_row) in kernel.iter().enumerate() {
        for (l_out, &k) in k_row.iter().enumerate() {
            let base = at(l_in, l_out);
            let below_in = if l_in == 0 { 0.0 } else { at(l_in - 1, l_out) };
            let below_out = if l_out == 0 { 0.0 } else { at(l_in, l_out - 1) };
            let d = q_in * (below_in - base) - q_out_eff * (below_out - base);
            acc.add(nf * d * k);
        }
    }
    acc.total()
}

/// Expected fitness of strategy `p` facing out-group success probability
/// `q_out_eff`. The shared engine behind both risk models.
pub fn expected_fitness_with(
    p: Strategy,
    q_out_eff: f64,
    theta: Environment,
    curve: &BenefitCurve,
    params: &InteractionParams,
) -> Result<f64> {
    check_unit("q_out_eff", q_out_eff)?;
    let n = params.n;
    let kernel = kernel_table(theta, curve, params)?;
    if n > EXACT_N_MAX {
        return Ok(collapsed_expectation(p.value(), params.q_in, q_out_eff, &kernel, n));
    }
    let weights = binomial_pmf_vec(n, p.value());
    Ok(weighted_tally_sum(&weights, params.q_in, q_out_eff, &kernel, n))
}

/// Derivative of [`expected_fitness_with`] with respect to `p`, holding
/// `q_out_eff` fixed. Uses `d/dp Bin(k; n, p) = n [Bin(k-1; n-1, p) - Bin(k; n-1, p)]`,
/// which stays finite at `p in {0, 1}` and gives the one-sided limits there.
pub fn expected_fitness_derivative(
    p: Strategy,
    q_out_eff: f64,
    theta: Environment,
    curve: &BenefitCurve,
    params: &InteractionParams,
) -> Result<f64> {
    check_unit("q_out_eff", q_out_eff)?;
    let n = params.n;
    let kernel = kernel_table(theta, curve, params)?;
    if n > EXACT_N_MAX {
        return Ok(collapsed_derivative(p.value(), params.q_in, q_out_eff, &kernel, n));
    }
    let lower = binomial_pmf_vec(n - 1, p.value());
    let nf = f64::from(n);
    let weights: Vec<f64> = (0..=n as usize)
        .map(|k| {
            let below = if k == 0 { 0.0 } else { lower[k - 1] };
            let here = lower.get(k).copied().unwrap_or(0.0);
            nf * (below - here)
        })
        .collect();
    Ok(weighted_tally_sum(&weights, params.q_in, q_out_eff, &kernel, n))
}

/// Expected fitness under the fixed-risk model.
pub fn expected_fitness_fixed(
    p: Strategy,
    theta: Environment,
    curve: &BenefitCurve,
    params: &InteractionParams,
) -> Result<f64> {
    expected_fitness_with(p, params.q_out, theta, curve, params)
}

/// Expected fitness of a mutant in a resident population under the
/// social-risk model.
pub fn expected_fitness_social(
    p_mutant: Strategy,
    p_resident: Strategy,
    theta: Environment,
    curve: &BenefitCurve,
    params: &InteractionParams,
) -> Result<f64> {
    let q_eff = RiskModel::Social.q_out_effective(params, p_resident);
    expected_fitness_with(p_mutant, q_eff, theta, curve, params)
}

/// Expected fitness of `p_mutant` against `p_resident` under either model.
pub fn expected_fitness(
    model: RiskModel,
    p_mutant: Strategy,
    p_resident: Strategy,
    theta: Environment,
    curve: &BenefitCurve,
    params: &InteractionParams,
) -> Result<f64> {
    let q_eff = model.q_out_effective(params, p_resident);
    expected_fitness_with(p_mutant, q_eff, theta, curve, params)
}
