//! Deterministic adaptive-dynamics analysis: invasion fitness, selection
//! gradients, singular strategies and their stability, optimal strategies,
//! pairwise invasibility plots, gradient fields and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    expected_fitness_derivative, expected_fitness_with, BenefitCurve, Environment, InteractionParams, RiskModel,
    Strategy,
};

/// Default number of points for strategy and environment grids.
pub const DEFAULT_RESOLUTION: usize = 201;
/// Bisection stops once the bracket is narrower than this.
pub const ROOT_TOL: f64 = 1e-9;
/// Fitness values closer than this are treated as ties.
pub const VALUE_TOL: f64 = 1e-10;
/// Fitness differences at or below this magnitude have sign zero in a PIP.
pub const SIGN_TOL: f64 = 1e-12;
/// Default finite-difference step for second derivatives of invasion fitness.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Second derivatives within this band of zero are treated as zero when
/// classifying singular points; it sits above the finite-difference
/// round-off floor for `DEFAULT_FD_STEP`.
pub const CURVATURE_TOL: f64 = 1e-7;
/// Interior singular points must have a gradient below this magnitude.
pub const GRADIENT_TOL: f64 = 1e-6;

/// The model being analysed: risk structure, benefit curve and game parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: RiskModel,
    pub curve: BenefitCurve,
    pub params: InteractionParams,
}

impl Scenario {
    pub fn new(model: RiskModel, curve: BenefitCurve, params: InteractionParams) -> Result<Self> {
        curve.validate()?;
        params.validate()?;
        Ok(Self { model, curve, params })
    }

    /// Expected fitness of `mutant` in a population of `resident`.
    pub fn fitness(&self, mutant: Strategy, resident: Strategy, theta: Environment) -> Result<f64> {
        let q_eff = self.model.q_out_effective(&self.params, resident);
        expected_fitness_with(mutant, q_eff, theta, &self.curve, &self.params)
    }

    fn with_model(&self, model: RiskModel) -> Self {
        Self { model, ..*self }
    }
}

/// Invasion fitness `s(f, g) = w_f - w_g` of mutant `f` in resident `g`.
pub fn invasion_fitness(mutant: Strategy, resident: Strategy, theta: Environment, scenario: &Scenario) -> Result<f64> {
    if mutant == resident {
        return Ok(0.0);
    }
    let q_eff = scenario.model.q_out_effective(&scenario.params, resident);
    let w_f = expected_fitness_with(mutant, q_eff, theta, &scenario.curve, &scenario.params)?;
    let w_g = expected_fitness_with(resident, q_eff, theta, &scenario.curve, &scenario.params)?;
    Ok(w_f - w_g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GradientMethod {
    /// Closed-form derivative of the tally sum.
    Analytic,
    /// Finite difference on the mutant strategy; one-sided within `step` of a boundary.
    CentralDifference { step: f64 },
}

/// Selection gradient at resident strategy `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub p: Strategy,
    pub theta: Environment,
    pub value: f64,
}

/// Selection gradient `d s(f, p) / d f` at `f = p`.
pub fn selection_gradient(
    p: Strategy,
    theta: Environment,
    scenario: &Scenario,
    method: GradientMethod,
) -> Result<GradientSample> {
    let q_eff = scenario.model.q_out_effective(&scenario.params, p);
    let (curve, params) = (&scenario.curve, &scenario.params);
    let value = match method {
        GradientMethod::Analytic => expected_fitness_derivative(p, q_eff, theta, curve, params)?,
        GradientMethod::CentralDifference { step } => {
            let w = |x: f64| expected_fitness_with(Strategy::clamped(x), q_eff, theta, curve, params);
            let x = p.value();
            if x - step < 0.0 {
                (-3.0 * w(x)? + 4.0 * w(x + step)? - w(x + 2.0 * step)?) / (2.0 * step)
            } else if x + step > 1.0 {
                (3.0 * w(x)? - 4.0 * w(x - step)? + w(x - 2.0 * step)?) / (2.0 * step)
            } else {
                (w(x + step)? - w(x - step)?) / (2.0 * step)
            }
        }
    };
    Ok(GradientSample { p, theta, value })
}

fn analytic_gradient(p: f64, theta: Environment, scenario: &Scenario) -> Result<f64> {
    Ok(selection_gradient(Strategy::clamped(p), theta, scenario, GradientMethod::Analytic)?.value)
}

/// Strategy maximizing fixed-risk expected fitness: grid scan, then
/// golden-section refinement inside the winning cell. Ties within
/// [`VALUE_TOL`] go to the smallest `p`.
pub fn optimal_strategy(theta: Environment, scenario: &Scenario, grid_resolution: usize) -> Result<Strategy> {
    if grid_resolution < 2 {
        return Err(Error::Usage("grid_resolution must be >= 2".into()));
    }
    let fixed = scenario.with_model(RiskModel::Fixed);
    let w = |p: f64| fixed.fitness(Strategy::clamped(p), Strategy::DIVERSE, theta);
    let grid = unit_grid(grid_resolution);
    let values = grid.iter().map(|&p| w(p)).collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + VALUE_TOL {
            best = i;
        }
    }

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid_resolution - 1)];
    let (p_ref, w_ref) = golden_section_max(lo, hi, &w)?;
    if w_ref > values[best] + VALUE_TOL {
        Ok(Strategy::clamped(p_ref))
    } else {
        Ok(Strategy::clamped(grid[best]))
    }
}

fn golden_section_max(mut a: f64, mut b: f64, f: &impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-10 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// `n` evenly spaced points on `[0, 1]`, endpoints included.
pub fn unit_grid(n: usize) -> Vec<f64> {
    linspace(0.0, 1.0, n)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularKind {
    BoundaryLow,
    BoundaryHigh,
    Interior,
}

/// A zero of the selection gradient, or a strategy-space boundary.
///
/// For boundary points `ess` and `convergence_stable` are one-sided: both
/// hold when the gradient points out of the strategy space there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub p_star: Strategy,
    pub theta: Environment,
    pub ess: bool,
    pub convergence_stable: bool,
    pub kind: SingularKind,
    /// Selection gradient at `p_star` (one-sided at boundaries).
    pub gradient: f64,
    /// `d^2 s / d f^2` at `f = g = p_star`.
    pub s_ff: f64,
    /// `d^2 s / d g^2` at `f = g = p_star`.
    pub s_gg: f64,
}

impl SingularPoint {
    fn unclassified(p: f64, theta: Environment, kind: SingularKind) -> Self {
        Self {
            p_star: Strategy::clamped(p),
            theta,
            ess: false,
            convergence_stable: false,
            kind,
            gradient: f64::NAN,
            s_ff: f64::NAN,
            s_gg: f64::NAN,
        }
    }

    /// Gradual evolution from nearby residents converges here.
    pub fn attracting(&self) -> bool {
        self.convergence_stable
    }

    /// Slope of the selection gradient along the diagonal, `(s_ff - s_gg) / 2`.
    pub fn gradient_slope(&self) -> f64 {
        0.5 * (self.s_ff - self.s_gg)
    }
}

/// Second derivative of `g(x)` on `[0, 1]`; the stencil shifts inward near
/// the boundaries.
fn second_difference(x: f64, h: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let h2 = h * h;
    if x - h < 0.0 {
        Ok((g(x)? - 2.0 * g(x + h)? + g(x + 2.0 * h)?) / h2)
    } else if x + h > 1.0 {
        Ok((g(x)? - 2.0 * g(x - h)? + g(x - 2.0 * h)?) / h2)
    } else {
        Ok((g(x + h)? - 2.0 * g(x)? + g(x - h)?) / h2)
    }
}

/// Fills the stability flags of `point` from finite-difference second
/// derivatives of the invasion fitness (interior points) or the one-sided
/// gradient sign (boundary points).
pub fn classify_singular_point(point: SingularPoint, scenario: &Scenario, fd_step: f64) -> Result<SingularPoint> {
    let p = point.p_star.value();
    let theta = point.theta;
    let gradient = analytic_gradient(p, theta, scenario)?;
    let s = |f: f64, g: f64| invasion_fitness(Strategy::clamped(f), Strategy::clamped(g), theta, scenario);
    let s_ff = second_difference(p, fd_step, |f| s(f, p))?;
    let s_gg = second_difference(p, fd_step, |g| s(p, g))?;

    let (ess, convergence_stable) = match point.kind {
        SingularKind::Interior => (s_ff < -CURVATURE_TOL, s_gg - s_ff > CURVATURE_TOL),
        SingularKind::BoundaryLow => (gradient < 0.0, gradient < 0.0),
        SingularKind::BoundaryHigh => (gradient > 0.0, gradient > 0.0),
    };
    Ok(SingularPoint {
        ess,
        convergence_stable,
        gradient,
        s_ff,
        s_gg,
        ..point
    })
}

/// Sign-scans the selection gradient on `scan_resolution` points, refines
/// each interior sign change by bisection, and returns the interior roots
/// together with both boundaries, all classified and sorted by `p`.
pub fn find_singular_points(
    theta: Environment,
    scenario: &Scenario,
    scan_resolution: usize,
) -> Result<Vec<SingularPoint>> {
    if scan_resolution < 16 {
        return Err(Error::Usage("scan_resolution must be >= 16".into()));
    }
    let grid = unit_grid(scan_resolution);
    let grads = grid
        .iter()
        .map(|&p| analytic_gradient(p, theta, scenario))
        .collect::<Result<Vec<_>>>()?;

    let mut points = vec![SingularPoint::unclassified(0.0, theta, SingularKind::BoundaryLow)];
    for i in 0..scan_resolution - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let (ga, gb) = (grads[i], grads[i + 1]);
        if i > 0 && ga == 0.0 {
            points.push(SingularPoint::unclassified(a, theta, SingularKind::Interior));
        } else if ga * gb < 0.0 {
            let root = bisect(a, b, ga, |p| analytic_gradient(p, theta, scenario))?;
            if root > 0.0 && root < 1.0 {
                points.push(SingularPoint::unclassified(root, theta, SingularKind::Interior));
            }
        }
    }
    points.push(SingularPoint::unclassified(1.0, theta, SingularKind::BoundaryHigh));

    points
        .into_iter()
        .map(|pt| classify_singular_point(pt, scenario, DEFAULT_FD_STEP))
        .collect()
}

fn bisect(mut a: f64, mut b: f64, mut fa: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    while b - a > ROOT_TOL {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Attracting equilibria at `theta`, as strategies.
pub fn attracting_strategies(theta: Environment, scenario: &Scenario, scan_resolution: usize) -> Result<Vec<f64>> {
    Ok(find_singular_points(theta, scenario, scan_resolution)?
        .into_iter()
        .filter(SingularPoint::attracting)
        .map(|pt| pt.p_star.value())
        .collect())
}

/// Sign map of invasion fitness over a (mutant, resident) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipGrid {
    pub theta: Environment,
    pub mutant_axis: Vec<f64>,
    pub resident_axis: Vec<f64>,
    /// `sign[i][j]` is the sign of `s(mutant_axis[i], resident_axis[j])`.
    pub sign: Vec<Vec<i8>>,
}

/// Attractor of the grid-level invasion dynamics read off a PIP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipAttractor {
    /// Representative strategy (midpoint of `[p_low, p_high]`).
    pub p: f64,
    pub p_low: f64,
    pub p_high: f64,
    /// Number of grid residents whose local dynamics end here.
    pub basin_size: usize,
}

impl PipGrid {
    /// No mutant on the grid can invade resident `j`.
    pub fn uninvadable(&self, j: usize) -> bool {
        self.sign.iter().all(|row| row[j] <= 0)
    }

    /// Direction of gradual change for resident `j`: `+1` if only the next
    /// larger mutant invades, `-1` if only the next smaller one does, `0`
    /// if neither (or both) do.
    fn drift(&self, j: usize) -> i8 {
        let n = self.resident_axis.len();
        let up = j + 1 < n && self.sign[j + 1][j] > 0;
        let down = j > 0 && self.sign[j - 1][j] > 0;
        match (up, down) {
            (true, false) => 1,
            (false, true) => -1,
            _ => 0,
        }
    }

    /// Attractors of the nearest-neighbour invasion dynamics along the
    /// diagonal. A resident no neighbour can invade is a fixed point; two
    /// adjacent residents drifting toward each other bracket an interior
    /// attractor. Adjacent fixed points merge into one attractor. Only
    /// attractors reached from at least one other grid point are returned.
    pub fn stable_strategies(&self) -> Vec<PipAttractor> {
        let n = self.resident_axis.len();
        if n == 0 {
            return Vec::new();
        }
        let drift: Vec<i8> = (0..n).map(|j| self.drift(j)).collect();

        // Terminal index for each starting resident: the lower index of the
        // fixed point or converging pair where the walk stops.
        let terminal = |start: usize| -> usize {
            let mut j = start;
            loop {
                match drift[j] {
                    0 => return j,
                    1 if drift[j + 1] == -1 => return j,
                    1 => j += 1,
                    _ if drift[j - 1] == 1 => return j - 1,
                    _ => j -= 1,
                }
            }
        };

        let mut basin = vec![0usize; n];
        for j in 0..n {
            basin[terminal(j)] += 1;
        }

        let mut out: Vec<PipAttractor> = Vec::new();
        let mut j = 0;
        while j < n {
            if basin[j] == 0 {
                j += 1;
                continue;
            }
            let start = j;
            let mut size = 0;
            let end;
            if drift[j] == 1 {
                // converging pair (j, j + 1)
                size += basin[j];
                end = j + 1;
                j += 2;
            } else {
                // run of adjacent fixed points
                while j < n && drift[j] == 0 && basin[j] > 0 {
                    size += basin[j];
                    j += 1;
                }
                end = j - 1;
            }
            if size >= 2 {
                let (lo, hi) = (self.resident_axis[start], self.resident_axis[end]);
                out.push(PipAttractor {
                    p: 0.5 * (lo + hi),
                    p_low: lo,
                    p_high: hi,
                    basin_size: size,
                });
            }
        }
        out
    }
}

/// Pairwise invasibility plot on a `resolution x resolution` grid.
pub fn pip(theta: Environment, scenario: &Scenario, resolution: usize) -> Result<PipGrid> {
    if resolution < 8 {
        return Err(Error::Usage("PIP resolution must be >= 8".into()));
    }
    let axis = unit_grid(resolution);
    let columns: Vec<Vec<i8>> = axis
        .par_iter()
        .map(|&g| {
            let resident = Strategy::clamped(g);
            axis.iter()
                .map(|&f| {
                    let s = invasion_fitness(Strategy::clamped(f), resident, theta, scenario)?;
                    Ok(sign_of(s))
                })
                .collect::<Result<Vec<i8>>>()
        })
        .collect::<Result<_>>()?;
    let sign = (0..resolution)
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect();
    Ok(PipGrid {
        theta,
        mutant_axis: axis.clone(),
        resident_axis: axis,
        sign,
    })
}

fn sign_of(x: f64) -> i8 {
    if x > SIGN_TOL {
        1
    } else if x < -SIGN_TOL {
        -1
    } else {
        0
    }
}

/// Selection gradient at every `(theta, p)` cell; rows follow `theta_grid`.
pub fn gradient_field(theta_grid: &[f64], p_grid: &[f64], scenario: &Scenario) -> Result<Vec<Vec<GradientSample>>> {
    if theta_grid.is_empty() || p_grid.is_empty() {
        return Err(Error::Usage("gradient field grids must be non-empty".into()));
    }
    for &p in p_grid {
        Strategy::new(p)?;
    }
    theta_grid
        .par_iter()
        .map(|&theta| {
            p_grid
                .iter()
                .map(|&p| selection_gradient(Strategy::clamped(p), theta.into(), scenario, GradientMethod::Analytic))
                .collect()
        })
        .collect()
}

/// A scenario parameter that a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    QOut,
    QIn,
    BIn,
    /// `b_out - b_in`, with `b_in` held at its base value.
    BOutGap,
    N,
    Steepness,
    Slope,
    /// Switches to the power-curvature benefit curve.
    CurvatureExp,
    /// Varies `q_out` while adjusting `b_out` so that `q_out * b_out` stays at its base value.
    QOutWithFixedExpectation,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 9] = [
        SweepParameter::QOut,
        SweepParameter::QIn,
        SweepParameter::BIn,
        SweepParameter::BOutGap,
        SweepParameter::N,
        SweepParameter::Steepness,
        SweepParameter::Slope,
        SweepParameter::CurvatureExp,
        SweepParameter::QOutWithFixedExpectation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::QOut => "q_out",
            SweepParameter::QIn => "q_in",
            SweepParameter::BIn => "b_in",
            SweepParameter::BOutGap => "b_out_gap",
            SweepParameter::N => "n",
            SweepParameter::Steepness => "steepness",
            SweepParameter::Slope => "slope",
            SweepParameter::CurvatureExp => "curvature_exp",
            SweepParameter::QOutWithFixedExpectation => "q_out_with_fixed_expectation",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut sc = *base;
        let p = &mut sc.params;
        match self {
            SweepParameter::QOut => p.q_out = value,
            SweepParameter::QIn => p.q_in = value,
            SweepParameter::BIn => p.b_in = value,
            SweepParameter::BOutGap => p.b_out = p.b_in + value,
            SweepParameter::N => {
                // Tolerate grid rounding such as 2.9999999999999996.
                let rounded = value.round();
                if !(rounded >= 1.0 && (value - rounded).abs() <= 1e-9 && rounded <= f64::from(u32::MAX)) {
                    return Err(Error::InvalidParameter {
                        name: "n",
                        value,
                        reason: "must be a positive integer",
                    });
                }
                p.n = rounded as u32;
            }
            SweepParameter::Steepness | SweepParameter::Slope => match &mut sc.curve {
                BenefitCurve::SigmoidLinear { steepness, slope } => {
                    if self == SweepParameter::Steepness {
                        *steepness = value;
                    } else {
                        *slope = value;
                    }
                }
                _ => {
                    return Err(Error::Usage(format!(
                        "sweeping `{}` requires the sigmoid-linear benefit curve",
                        self.name()
                    )))
                }
            },
            SweepParameter::CurvatureExp => {
                sc.curve = BenefitCurve::PowerCurvature {
                    curvature_exp: value,
                    clamp_negative: true,
                };
            }
            SweepParameter::QOutWithFixedExpectation => {
                if value <= 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "q_out",
                        value,
                        reason: "must be > 0 when holding q_out * b_out fixed",
                    });
                }
                let expected_out = base.params.q_out * base.params.b_out;
                p.q_out = value;
                p.b_out = expected_out / value;
            }
        }
        sc.curve.validate()?;
        sc.params.validate()?;
        Ok(sc)
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Fitness-maximizing strategy (fixed model only).
    Optimal,
    /// Every attracting equilibrium of the gradual dynamics.
    StableSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub parameter_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    pub mode: SweepMode,
    /// `p_star[i][j]`: strategies at `parameter_values[i]`, `theta_values[j]`.
    /// Exactly one entry per cell in `Optimal` mode.
    pub p_star: Vec<Vec<Vec<f64>>>,
    /// Cells where the power curve met a negative base and was clamped at zero.
    pub clamped: Vec<Vec<bool>>,
    pub base: Scenario,
    pub resolution: usize,
}

/// Evaluates optimal or stable strategies over a parameter x environment grid.
pub fn sweep(
    parameter: SweepParameter,
    parameter_grid: &[f64],
    theta_grid: &[f64],
    base: &Scenario,
    mode: SweepMode,
    resolution: usize,
) -> Result<SweepResult> {
    if parameter_grid.is_empty() || theta_grid.is_empty() {
        return Err(Error::Usage("sweep grids must be non-empty".into()));
    }
    if mode == SweepMode::Optimal && base.model != RiskModel::Fixed {
        return Err(Error::Usage("optimal mode applies to the fixed-risk model only".into()));
    }
    let scenarios = parameter_grid
        .iter()
        .map(|&v| parameter.apply(base, v))
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(Vec<f64>, bool)> = scenarios
        .par_iter()
        .flat_map_iter(|sc| theta_grid.iter().map(move |&theta| (sc, theta)))
        .map(|(sc, theta)| {
            let mut sc = *sc;
            if let BenefitCurve::PowerCurvature { clamp_negative, .. } = &mut sc.curve {
                *clamp_negative = true;
            }
            let env = Environment::new(theta);
            let strategies = match mode {
                SweepMode::Optimal => vec![optimal_strategy(env, &sc, resolution)?.value()],
                SweepMode::StableSet => attracting_strategies(env, &sc, resolution.max(16))?,
            };
            Ok((strategies, sc.curve.hits_negative_base(theta)))
        })
        .collect::<Result<_>>()?;

    let width = theta_grid.len();
    let mut p_star = Vec::with_capacity(parameter_grid.len());
    let mut clamped = Vec::with_capacity(parameter_grid.len());
    for row in cells.chunks(width) {
        p_star.push(row.iter().map(|c| c.0.clone()).collect());
        clamped.push(row.iter().map(|c| c.1).collect());
    }
    Ok(SweepResult {
        parameter,
        parameter_values: parameter_grid.to_vec(),
        theta_values: theta_grid.to_vec(),
        mode,
        p_star,
        clamped,
        base: *base,
        resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2(model: RiskModel) -> Scenario {
        Scenario::new(model, BenefitCurve::steep(), InteractionParams::default()).unwrap()
    }

    fn s(p: f64) -> Strategy {
        Strategy::new(p).unwrap()
    }

    #[test]
    fn self_invasion_is_zero() {
        for model in [RiskModel::Fixed, RiskModel::Social] {
            let sc = fig2(model);
            for &p in &[0.0, 0.3, 1.0] {
                assert_eq!(invasion_fitness(s(p), s(p), 0.2.into(), &sc).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn diverse_invades_parochial_in_excellent_environment() {
        let sc = fig2(RiskModel::Fixed);
        assert!(invasion_fitness(s(0.0), s(1.0), 1.0.into(), &sc).unwrap() > 0.0);
    }

    #[test]
    fn social_parochial_resident_resists_nearby_mutants() {
        let sc = fig2(RiskModel::Social);
        for &f in &[0.99, 0.95, 0.9] {
            assert!(invasion_fitness(s(f), s(1.0), 1.0.into(), &sc).unwrap() < 0.0);
        }
    }

    #[test]
    fn saturated_gradients_follow_linear_part() {
        // Saturated sigmoid: w = 1 + slope * E[payoff], so the gradient is
        // n * slope * (q_in b_in - q_out (1 - p_res) b_out).
        let fixed = fig2(RiskModel::Fixed);
        let social = fig2(RiskModel::Social);
        let env = Environment::new(5.0);
        for &p in &[0.0, 0.25, 0.5, 1.0] {
            let g = selection_gradient(s(p), env, &fixed, GradientMethod::Analytic)
                .unwrap()
                .value;
            assert!((g - 5.0 * 0.02 * (0.5 - 0.6)).abs() < 1e-9, "fixed p={p}: {g}");
            let g = selection_gradient(s(p), env, &social, GradientMethod::Analytic)
                .unwrap()
                .value;
            let want = 5.0 * 0.02 * (0.5 - 0.6 * (1.0 - p));
            assert!((g - want).abs() < 1e-9, "social p={p}: {g} vs {want}");
        }
    }

    #[test]
    fn one_sided_difference_at_boundaries() {
        let sc = fig2(RiskModel::Social);
        for &p in &[0.0, 1.0] {
            let a = selection_gradient(s(p), 0.3.into(), &sc, GradientMethod::Analytic)
                .unwrap()
                .value;
            let fd = selection_gradient(s(p), 0.3.into(), &sc, GradientMethod::CentralDifference { step: 1e-5 })
                .unwrap()
                .value;
            assert!((a - fd).abs() < 1e-6 * a.abs().max(1e-8), "p={p}: {a} vs {fd}");
        }
    }

    #[test]
    fn optimal_strategy_examples() {
        let sc = fig2(RiskModel::Fixed);
        assert_eq!(optimal_strategy(0.9.into(), &sc, 201).unwrap().value(), 0.0);
        assert_eq!(optimal_strategy((-0.9).into(), &sc, 201).unwrap().value(), 0.0);
        assert_eq!(optimal_strategy((-0.2).into(), &sc, 201).unwrap().value(), 1.0);
        assert!(optimal_strategy(0.0.into(), &sc, 1).is_err());
    }

    #[test]
    fn saturated_social_interior_root_is_unstable() {
        let sc = fig2(RiskModel::Social);
        let pts = find_singular_points(5.0.into(), &sc, 201).unwrap();
        let interior: Vec<_> = pts.iter().filter(|p| p.kind == SingularKind::Interior).collect();
        assert_eq!(interior.len(), 1);
        let pt = interior[0];
        assert!((pt.p_star.value() - (1.0 - 0.5 / 0.6)).abs() < 1e-6);
        assert!(pt.gradient.abs() < GRADIENT_TOL);
        assert!(!pt.ess);
        assert!(!pt.convergence_stable);
        // diagonal slope of the gradient: n * slope * q_out * b_out
        assert!((pt.gradient_slope() - 0.06).abs() < 1e-4, "{}", pt.gradient_slope());
        let high = pts.last().unwrap();
        assert_eq!(high.kind, SingularKind::BoundaryHigh);
        assert!(high.attracting());
        // bistable: the diverse boundary attracts too
        assert!(pts[0].attracting());
    }

    #[test]
    fn fixed_excellent_environment_has_no_interior_root() {
        let sc = fig2(RiskModel::Fixed);
        let pts = find_singular_points(0.9.into(), &sc, 201).unwrap();
        assert!(pts.iter().all(|p| p.kind != SingularKind::Interior));
        assert!(pts[0].attracting());
        assert!(!pts[1].attracting());
    }

    #[test]
    fn singular_scan_rejects_coarse_grid() {
        assert!(find_singular_points(0.0.into(), &fig2(RiskModel::Fixed), 8).is_err());
    }

    #[test]
    fn pip_diagonal_and_antisymmetry() {
        let sc = fig2(RiskModel::Fixed);
        let grid = pip(0.0.into(), &sc, 21).unwrap();
        for i in 0..21 {
            assert_eq!(grid.sign[i][i], 0);
            for j in 0..21 {
                assert_eq!(grid.sign[i][j], -grid.sign[j][i]);
            }
        }
        assert!(pip(0.0.into(), &sc, 4).is_err());
    }

    #[test]
    fn pip_stable_strategies() {
        let fixed = fig2(RiskModel::Fixed);
        let g = pip(1.0.into(), &fixed, 41).unwrap();
        assert!(g.uninvadable(0));
        let st = g.stable_strategies();
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].p, 0.0);

        let social = fig2(RiskModel::Social);
        let g = pip((-0.2).into(), &social, 41).unwrap();
        let st = g.stable_strategies();
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].p, 1.0);
    }

    #[test]
    fn gradient_field_shape() {
        let sc = fig2(RiskModel::Fixed);
        let f = gradient_field(&[5.0], &[0.5], &sc).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].len(), 1);
        let f = gradient_field(&[-1.0, 0.0, 1.0], &unit_grid(11), &sc).unwrap();
        assert_eq!(f.len(), 3);
        assert!(f.iter().all(|row| row.len() == 11));
        assert!(gradient_field(&[], &[0.5], &sc).is_err());
    }

    #[test]
    fn sweep_parameter_names_round_trip() {
        for p in SweepParameter::ALL {
            assert_eq!(p.name().parse::<SweepParameter>().unwrap(), p);
        }
        assert!(matches!(
            "qo".parse::<SweepParameter>(),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn fixed_expectation_sweep_holds_product() {
        let base = fig2(RiskModel::Fixed);
        for &q in &[0.3, 0.6, 0.9] {
            let sc = SweepParameter::QOutWithFixedExpectation.apply(&base, q).unwrap();
            assert!((sc.params.q_out * sc.params.b_out - 0.6).abs() < 1e-15);
            assert_eq!(sc.params.q_in * sc.params.b_in, 0.5);
        }
    }

    #[test]
    fn sweep_rejects_optimal_for_social() {
        let sc = fig2(RiskModel::Social);
        assert!(sweep(SweepParameter::QOut, &[0.6], &[0.0], &sc, SweepMode::Optimal, 51).is_err());
    }

    #[test]
    fn curvature_sweep_flags_clamped_cells() {
        let base = fig2(RiskModel::Fixed);
        let r = sweep(
            SweepParameter::CurvatureExp,
            &[-0.5, 0.0],
            &[-0.5, 0.5],
            &base,
            SweepMode::Optimal,
            51,
        )
        .unwrap();
        assert_eq!(r.clamped, vec![vec![true, false], vec![true, false]]);
        // linear utility: the higher expected payoff (out-group) wins
        assert_eq!(r.p_star[1][1], vec![0.0]);
    }
}
