//! Error metrics, convergence-order fitting and the verification studies.
//!
//! Everything here consumes the solvers and produces plain numbers: time
//! norms of trajectory differences, least-squares order fits of error
//! against step size, the refinement study comparing the impulse and hold
//! approximations to a fine distributed baseline, and three standalone
//! decay experiments (source regularization, short-time window response,
//! mollified indicators).

use crate::error::{invalid, mismatch, Result};
use crate::heat::{BrokenTrajectory, SourceTrajectory, TimeGrid, Trajectory};
use crate::impulse::{embed_impulse_control, solve_impulse};
use crate::ocp::{solve_ocp, OcpConfig};
use crate::quadrature::composite_simpson;
use crate::real::Real;
use crate::rng::SplitMix64;
use crate::sampled::{solve_sampled, MIN_CELLS_PER_HOLD};
use crate::spectral::{
    coupling_matrix, indicator_samples, lp_norm_sampled, mollify_indicator, Domain1D,
    SpectralField,
};

fn check_exponent<S: Real>(p: S) -> Result<()> {
    if p.is_nan() || (!p.is_infinite() && !(p >= S::one())) || (p.is_infinite() && p < S::zero())
    {
        return Err(invalid("norm exponent must satisfy p >= 1 or be +infinity"));
    }
    Ok(())
}

/// `L^p(0, T; L^2)` norm of a nodal trajectory: composite trapezoid of the
/// nodal norms raised to `p`, or the nodal maximum for `p = infinity`.
pub fn lp_time_norm<S: Real>(traj: &Trajectory<S>, grid: &TimeGrid<S>, p: S) -> Result<S> {
    check_exponent(p)?;
    if traj.len() != grid.steps() + 1 {
        return Err(mismatch("trajectory does not match the grid"));
    }
    let norms: Vec<S> = traj.nodes().iter().map(|f| f.norm()).collect();
    lp_norm_sampled(&norms, grid.dt(), p)
}

/// `L^p(0, T; L^2)` distance between a nodal reference and a broken
/// trajectory on the same fine grid. Finite `p` integrates piece by piece
/// with one-sided values at the junction nodes; `p = infinity` takes the
/// nodal maximum carrying the post-jump value at each junction.
pub fn lp_time_distance_broken<S: Real>(
    reference: &Trajectory<S>,
    broken: &BrokenTrajectory<S>,
    grid: &TimeGrid<S>,
    p: S,
) -> Result<S> {
    check_exponent(p)?;
    let q = broken.cells_per_piece();
    if broken.piece_count() * q != grid.steps() || reference.len() != grid.steps() + 1 {
        return Err(mismatch("broken trajectory does not match the grid"));
    }
    if reference.modes() != broken.modes() {
        return Err(mismatch("trajectories disagree on mode count"));
    }
    if p.is_infinite() {
        let flat = broken.flatten_post_jump();
        let mut sup = S::zero();
        for (a, b) in reference.nodes().iter().zip(flat.nodes()) {
            sup = sup.max(a.sub(b).norm());
        }
        return Ok(sup);
    }
    let half = S::of(0.5);
    let mut total = S::zero();
    for (i, piece) in broken.pieces().iter().enumerate() {
        for (j, value) in piece.iter().enumerate() {
            let d = reference.node(i * q + j).sub(value).norm().powf(p);
            let w = if j == 0 || j == q { half } else { S::one() };
            total += w * d;
        }
    }
    Ok((total * grid.dt()).powf(S::one() / p))
}

/// Result of a least-squares order fit on a log-log cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit<S> {
    /// Slope of `log(error)` against `log(scale)`.
    pub slope: S,
    /// Points dropped because their error was exactly zero.
    pub excluded: usize,
    /// Points that entered the fit.
    pub used: usize,
}

/// Least-squares slope of `log(error)` versus `log(scale)` over
/// `(scale, error)` points. Zero errors are excluded (they carry no order
/// information); fewer than three surviving points is an error.
pub fn fit_order<S: Real>(points: &[(S, S)]) -> Result<OrderFit<S>> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    let mut excluded = 0;
    for &(scale, error) in points {
        if !(scale > S::zero()) || !scale.is_finite() || !error.is_finite() || error < S::zero()
        {
            return Err(invalid("order fits need finite scales > 0 and errors >= 0"));
        }
        if error == S::zero() {
            excluded += 1;
            continue;
        }
        xs.push(scale.ln());
        ys.push(error.ln());
    }
    if xs.len() < 3 {
        return Err(invalid(format!(
            "order fits need at least 3 nonzero points, got {} ({excluded} excluded)",
            xs.len()
        )));
    }
    let count = S::of_usize(xs.len());
    let x_mean = xs.iter().copied().sum::<S>() / count;
    let y_mean = ys.iter().copied().sum::<S>() / count;
    let mut cov = S::zero();
    let mut var = S::zero();
    for (x, y) in xs.iter().zip(&ys) {
        cov += (*x - x_mean) * (*y - y_mean);
        var += (*x - x_mean) * (*x - x_mean);
    }
    if !(var > S::zero()) {
        return Err(invalid("order fits need at least two distinct scales"));
    }
    Ok(OrderFit {
        slope: cov / var,
        excluded,
        used: xs.len(),
    })
}

// Fit that tolerates the all-zero case: None when every error vanished.
fn fit_or_flat<S: Real>(points: &[(S, S)]) -> Result<(Option<S>, usize)> {
    if points.iter().all(|&(_, e)| e == S::zero()) {
        return Ok((None, points.len()));
    }
    let fit = fit_order(points)?;
    Ok((Some(fit.slope), fit.excluded))
}

/// Which approximation a study record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Impulse,
    Sampled,
}

impl ProblemKind {
    pub fn label(self) -> &'static str {
        match self {
            ProblemKind::Impulse => "impulse",
            ProblemKind::Sampled => "sampled",
        }
    }
}

/// Errors of one approximate solve against the fine baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord<S> {
    pub problem: ProblemKind,
    pub subdivision: usize,
    pub h: S,
    pub control_error_l2: S,
    pub state_error_l2: S,
    pub state_error_l4: S,
    pub state_error_linf: S,
    /// `|J_n - J|` for impulse records; `J_n - J` (nonnegative by class
    /// inclusion) for hold records.
    pub cost_gap: S,
}

/// One fitted metric with its expected rate and acceptance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeCheck<S> {
    pub metric: &'static str,
    pub rate: S,
    pub threshold: S,
    pub slope: S,
    pub excluded: usize,
    pub pass: bool,
}

/// Scalar snapshot of the study configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySetup<S> {
    pub modes: usize,
    pub timesteps: usize,
    pub horizon: S,
    pub window: (S, S),
    pub cg_tol: S,
    pub n_values: Vec<usize>,
}

/// Full outcome of a refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<S> {
    pub setup: StudySetup<S>,
    pub baseline_cost: S,
    pub baseline_iterations: usize,
    pub records: Vec<ErrorRecord<S>>,
    pub slopes: Vec<SlopeCheck<S>>,
    /// Hold cost dominated the baseline cost at every subdivision.
    pub sampled_cost_dominates: bool,
    /// Every error vanished (zero target); no fits were attempted.
    pub degenerate: bool,
    pub pass: bool,
}

type MetricGetter<S> = fn(&ErrorRecord<S>) -> S;

fn metric_table<S: Real>() -> [(&'static str, ProblemKind, f64, f64, MetricGetter<S>); 10] {
    [
        ("impulse_control_l2", ProblemKind::Impulse, 0.5, 0.45, |r| r.control_error_l2),
        ("impulse_state_l2", ProblemKind::Impulse, 0.5, 0.45, |r| r.state_error_l2),
        ("impulse_state_l4", ProblemKind::Impulse, 0.25, 0.20, |r| r.state_error_l4),
        ("impulse_state_linf", ProblemKind::Impulse, 0.25, 0.20, |r| r.state_error_linf),
        ("impulse_cost", ProblemKind::Impulse, 0.5, 0.45, |r| r.cost_gap),
        ("sampled_control_l2", ProblemKind::Sampled, 1.0, 0.9, |r| r.control_error_l2),
        ("sampled_state_l2", ProblemKind::Sampled, 1.0, 0.9, |r| r.state_error_l2),
        ("sampled_state_l4", ProblemKind::Sampled, 1.0, 0.9, |r| r.state_error_l4),
        ("sampled_state_linf", ProblemKind::Sampled, 1.0, 0.9, |r| r.state_error_linf),
        ("sampled_cost", ProblemKind::Sampled, 1.0, 0.9, |r| r.cost_gap.abs()),
    ]
}

/// Solve the distributed problem once on the fine grid, then the impulse
/// and hold problems for every subdivision in `n_values`, and fit the
/// decay order of each error metric against `h = T / n`.
pub fn run_convergence_study<S: Real>(
    cfg: &OcpConfig<S>,
    n_values: &[usize],
) -> Result<ConvergenceReport<S>> {
    cfg.validate()?;
    let mut subdivisions = n_values.to_vec();
    subdivisions.sort_unstable();
    subdivisions.dedup();
    if subdivisions.len() < 4 {
        return Err(invalid("refinement studies need at least 4 distinct subdivisions"));
    }
    for &n in &subdivisions {
        if n < 2 {
            return Err(invalid("every subdivision must be at least 2"));
        }
        let q = cfg.grid.cells_per_piece(n)?;
        if q < MIN_CELLS_PER_HOLD {
            return Err(invalid(format!(
                "subdivision {n} leaves {q} cells per interval; need at least {MIN_CELLS_PER_HOLD}"
            )));
        }
    }

    let baseline = solve_ocp(cfg).map_err(|e| e.labeled("distributed baseline solve"))?;
    let two = S::of(2.0);
    let four = S::of(4.0);
    let inf = S::infinity();

    let mut impulse_records = Vec::with_capacity(subdivisions.len());
    let mut sampled_records = Vec::with_capacity(subdivisions.len());
    let mut dominates = true;
    let slack = S::of(1e-12) * (S::one() + baseline.cost.abs());

    for &n in &subdivisions {
        let h = cfg.grid.horizon() / S::of_usize(n);

        let imp =
            solve_impulse(cfg, n).map_err(|e| e.labeled(format!("impulse solve at n={n}")))?;
        let embedded = embed_impulse_control(&imp.impulses, &cfg.grid)?;
        impulse_records.push(ErrorRecord {
            problem: ProblemKind::Impulse,
            subdivision: n,
            h,
            control_error_l2: baseline
                .control
                .sub(&embedded)?
                .norm_l2_sq(&cfg.grid)
                .sqrt(),
            state_error_l2: lp_time_distance_broken(&baseline.state, &imp.state, &cfg.grid, two)?,
            state_error_l4: lp_time_distance_broken(&baseline.state, &imp.state, &cfg.grid, four)?,
            state_error_linf: lp_time_distance_broken(
                &baseline.state,
                &imp.state,
                &cfg.grid,
                inf,
            )?,
            cost_gap: (imp.cost - baseline.cost).abs(),
        });

        let smp =
            solve_sampled(cfg, n).map_err(|e| e.labeled(format!("hold solve at n={n}")))?;
        let state_diff = baseline.state.sub(&smp.state)?;
        let gap = smp.cost - baseline.cost;
        if gap < -slack {
            dominates = false;
        }
        sampled_records.push(ErrorRecord {
            problem: ProblemKind::Sampled,
            subdivision: n,
            h,
            control_error_l2: baseline
                .control
                .sub(&smp.control)?
                .norm_l2_sq(&cfg.grid)
                .sqrt(),
            state_error_l2: lp_time_norm(&state_diff, &cfg.grid, two)?,
            state_error_l4: lp_time_norm(&state_diff, &cfg.grid, four)?,
            state_error_linf: lp_time_norm(&state_diff, &cfg.grid, inf)?,
            cost_gap: gap,
        });
    }

    let mut records = impulse_records;
    records.append(&mut sampled_records);

    let setup = StudySetup {
        modes: cfg.modes,
        timesteps: cfg.grid.steps(),
        horizon: cfg.grid.horizon(),
        window: cfg.domain.control_window(),
        cg_tol: cfg.cg_tol,
        n_values: subdivisions,
    };

    let degenerate = records.iter().all(|r| {
        r.control_error_l2 == S::zero()
            && r.state_error_l2 == S::zero()
            && r.state_error_l4 == S::zero()
            && r.state_error_linf == S::zero()
            && r.cost_gap == S::zero()
    });
    if degenerate {
        return Ok(ConvergenceReport {
            setup,
            baseline_cost: baseline.cost,
            baseline_iterations: baseline.iterations,
            records,
            slopes: Vec::new(),
            sampled_cost_dominates: dominates,
            degenerate,
            pass: dominates,
        });
    }

    let mut slopes = Vec::with_capacity(10);
    for (metric, kind, rate, threshold, getter) in metric_table::<S>() {
        let points: Vec<(S, S)> = records
            .iter()
            .filter(|r| r.problem == kind)
            .map(|r| (r.h, getter(r)))
            .collect();
        let fit = fit_order(&points)
            .map_err(|e| invalid(format!("fit for {metric} failed: {e}")))?;
        let threshold = S::of(threshold);
        slopes.push(SlopeCheck {
            metric,
            rate: S::of(rate),
            threshold,
            slope: fit.slope,
            excluded: fit.excluded,
            pass: fit.slope >= threshold,
        });
    }
    let pass = dominates && slopes.iter().all(|s| s.pass);

    Ok(ConvergenceReport {
        setup,
        baseline_cost: baseline.cost,
        baseline_iterations: baseline.iterations,
        records,
        slopes,
        sampled_cost_dominates: dominates,
        degenerate,
        pass,
    })
}

/// Reference tracking target: first mode carries `1 + cos(2 pi t / T)`,
/// second mode `0.3 sin(2 pi t / T)`, sampled at cell midpoints.
pub fn default_target<S: Real>(modes: usize, grid: &TimeGrid<S>) -> Result<SourceTrajectory<S>> {
    if modes == 0 {
        return Err(invalid("target needs at least one mode"));
    }
    let two_pi = S::of(2.0) * S::PI();
    let half = S::of(0.5);
    let cells = (0..grid.steps())
        .map(|m| {
            let t = grid.dt() * (S::of_usize(m) + half);
            let phase = two_pi * t / grid.horizon();
            let mut coeffs = vec![S::zero(); modes];
            coeffs[0] = S::one() + phase.cos();
            if modes > 1 {
                coeffs[1] = S::of(0.3) * phase.sin();
            }
            SpectralField::from_coeffs(coeffs).expect("finite target coefficients")
        })
        .collect();
    SourceTrajectory::new(cells)
}

/// Seeded random tracking target with coefficients uniform in `(-1, 1)`,
/// drawn cell-major then mode-minor so the layout is reproducible across
/// platforms.
pub fn random_target<S: Real>(
    modes: usize,
    grid: &TimeGrid<S>,
    seed: u64,
) -> Result<SourceTrajectory<S>> {
    if modes == 0 {
        return Err(invalid("target needs at least one mode"));
    }
    let mut rng = SplitMix64::new(seed);
    let cells = (0..grid.steps())
        .map(|_| {
            let coeffs = (0..modes).map(|_| S::of(rng.uniform_signed())).collect();
            SpectralField::from_coeffs(coeffs).expect("finite random coefficients")
        })
        .collect();
    SourceTrajectory::new(cells)
}

/// One decaying error curve with its fitted order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve<S> {
    /// Time-norm exponent the errors were measured in.
    pub exponent: S,
    /// `(scale, error)` pairs in the order the scales were given.
    pub points: Vec<(S, S)>,
    /// Fitted order, or `None` when every error vanished.
    pub slope: Option<S>,
    pub excluded: usize,
}

// Geometrically refined boundaries covering [start, start + width]: the
// first cut sits at `finest`, then doubles. Resolves integrands that vary
// on scales much shorter than the window.
fn refined_boundaries<S: Real>(start: S, width: S, finest: S) -> Vec<S> {
    let mut cuts = vec![start];
    let mut offset = finest.min(width);
    while offset < width {
        cuts.push(start + offset);
        offset = offset * S::of(2.0);
    }
    cuts.push(start + width);
    cuts
}

const SEGMENT_PANELS: usize = 128;

// L^p(0, horizon) norm of t -> sqrt(sum_k d_k(t)^2) where each d_k is
// smooth except for scales ~1/lambda_k near 0 and near `delta`.
fn lp_of_modal_difference<S: Real>(
    lambdas: &[S],
    layer_flat: &[S],
    layer_decay: &[S],
    tail_decay: &[S],
    delta: S,
    horizon: S,
    p: S,
) -> Result<S> {
    let finest = (S::one() / (S::of(256.0) * lambdas[lambdas.len() - 1])).min(delta / S::of(8.0));
    let half_p = p * S::of(0.5);

    let layer = |t: S| {
        let mut sum = S::zero();
        for ((lam, a), c) in lambdas.iter().zip(layer_flat).zip(layer_decay) {
            let d = *a + *c * (-*lam * t).exp();
            sum += d * d;
        }
        sum.powf(half_p)
    };
    let tail = |t: S| {
        let mut sum = S::zero();
        for (lam, d0) in lambdas.iter().zip(tail_decay) {
            let d = *d0 * (-*lam * (t - delta)).exp();
            sum += d * d;
        }
        sum.powf(half_p)
    };

    let mut total = S::zero();
    for w in refined_boundaries(S::zero(), delta, finest).windows(2) {
        total += composite_simpson(w[0], w[1], SEGMENT_PANELS, layer)?;
    }
    for w in refined_boundaries(delta, horizon - delta, finest).windows(2) {
        total += composite_simpson(w[0], w[1], SEGMENT_PANELS, tail)?;
    }
    Ok(total.powf(S::one() / p))
}

/// Compare the state driven by a source spread uniformly over
/// `(t_start, t_start + delta)` with the state kicked instantaneously at
/// `t_start`, both windowed, both from rest. Reports the
/// `L^p(t_start, t_end; L^2)` distance for every `delta` and exponent,
/// with fitted decay orders.
pub fn experiment_compare3<S: Real>(
    control: &SpectralField<S>,
    domain: &Domain1D<S>,
    deltas: &[S],
    exponents: &[S],
    t_start: S,
    t_end: S,
) -> Result<Vec<DecayCurve<S>>> {
    if deltas.is_empty() || exponents.is_empty() {
        return Err(invalid("need at least one delta and one exponent"));
    }
    for &d in deltas {
        if !(d > S::zero()) || !d.is_finite() {
            return Err(invalid("every delta must be positive and finite"));
        }
        if !(t_start + d < t_end) {
            return Err(invalid("every averaging window must end before t_end"));
        }
    }
    for &p in exponents {
        check_exponent(p)?;
        if p.is_infinite() {
            return Err(invalid("this experiment uses finite exponents"));
        }
    }
    if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(invalid("need a nondegenerate time interval"));
    }

    let modes = control.modes();
    let coupling = coupling_matrix(domain, modes)?;
    let profile = coupling.apply(control)?;
    let lambdas: Vec<S> = (1..=modes).map(|k| domain.eigenvalue(k).unwrap()).collect();
    let horizon = t_end - t_start;

    let mut curves = Vec::with_capacity(exponents.len());
    for &p in exponents {
        let mut points = Vec::with_capacity(deltas.len());
        for &delta in deltas {
            // Within the layer the averaged state is a(1 - e^{-lambda t})
            // with a = g / (delta lambda) while the kicked state is
            // g e^{-lambda t}; past the layer both decay freely from their
            // offsets at delta.
            let mut layer_flat = Vec::with_capacity(modes);
            let mut layer_decay = Vec::with_capacity(modes);
            let mut tail_decay = Vec::with_capacity(modes);
            for (lam, g) in lambdas.iter().zip(profile.coeffs()) {
                let a = *g / (delta * *lam);
                let ramp_end = -(-*lam * delta).exp_m1();
                let decay_end = (-*lam * delta).exp();
                layer_flat.push(a);
                layer_decay.push(-(a + *g));
                tail_decay.push(a * ramp_end - *g * decay_end);
            }
            let err = if profile.norm() == S::zero() {
                S::zero()
            } else {
                lp_of_modal_difference(
                    &lambdas,
                    &layer_flat,
                    &layer_decay,
                    &tail_decay,
                    delta,
                    horizon,
                    p,
                )?
            };
            points.push((delta, err));
        }
        let (slope, excluded) = fit_or_flat(&points)?;
        curves.push(DecayCurve {
            exponent: p,
            points,
            slope,
            excluded,
        });
    }
    Ok(curves)
}

/// Minimum truncation accepted by [`experiment_intuitive`]; the windowed
/// initial state has slowly decaying coefficients, so short truncations
/// would pollute the measured short-time response.
pub const MIN_WINDOW_RESPONSE_MODES: usize = 256;

/// Short-time response of a windowed state under free evolution: the decay
/// of `||e^{s A}(window z0) - window z0||` as the span `s` shrinks. The
/// window roughens the state, so with a strict window the decay order
/// drops from 1 (smooth data) to about 1/4.
pub fn experiment_intuitive<S: Real>(
    initial: &SpectralField<S>,
    domain: &Domain1D<S>,
    spans: &[S],
    modes_large: usize,
) -> Result<DecayCurve<S>> {
    if modes_large < MIN_WINDOW_RESPONSE_MODES {
        return Err(invalid(format!(
            "short-time response needs at least {MIN_WINDOW_RESPONSE_MODES} modes, got {modes_large}"
        )));
    }
    if spans.is_empty() {
        return Err(invalid("need at least one span"));
    }
    for &s in spans {
        if !(s > S::zero()) || !s.is_finite() {
            return Err(invalid("every span must be positive and finite"));
        }
    }
    let padded = initial.padded(modes_large)?;
    let coupling = coupling_matrix(domain, modes_large)?;
    let windowed = coupling.apply(&padded)?;

    let mut points = Vec::with_capacity(spans.len());
    for &s in spans {
        let mut sum = S::zero();
        for (k, g) in windowed.coeffs().iter().enumerate() {
            let lam = domain.eigenvalue(k + 1)?;
            let shrink = (-lam * s).exp_m1();
            sum += shrink * shrink * *g * *g;
        }
        points.push((s, sum.sqrt()));
    }
    let (slope, excluded) = fit_or_flat(&points)?;
    Ok(DecayCurve {
        exponent: S::of(2.0),
        points,
        slope,
        excluded,
    })
}

/// Decay curves of the mollified window indicator: for each exponent, the
/// `L^p` distance to the sharp indicator and the `L^p` size of the
/// mollifier gradient, as functions of the smoothing width.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierStudy<S> {
    pub distance: Vec<DecayCurve<S>>,
    pub gradient: Vec<DecayCurve<S>>,
}

pub fn experiment_mollifier<S: Real>(
    domain: &Domain1D<S>,
    epsilons: &[S],
    exponents: &[S],
    grid_points: usize,
) -> Result<MollifierStudy<S>> {
    if epsilons.is_empty() || exponents.is_empty() {
        return Err(invalid("need at least one width and one exponent"));
    }
    for &p in exponents {
        check_exponent(p)?;
        if p.is_infinite() {
            return Err(invalid(
                "infinite exponents are degenerate here (distance plateaus, gradient scales exactly like 1/eps)",
            ));
        }
    }
    let sharp = indicator_samples(domain, grid_points)?;

    let mut distance_samples = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let moll = mollify_indicator(domain, eps, grid_points)?;
        let diff: Vec<S> = moll
            .values()
            .iter()
            .zip(&sharp)
            .map(|(v, s)| (*v - *s).abs())
            .collect();
        distance_samples.push((eps, diff, moll));
    }

    let mut distance = Vec::with_capacity(exponents.len());
    let mut gradient = Vec::with_capacity(exponents.len());
    for &p in exponents {
        let mut dist_points = Vec::with_capacity(epsilons.len());
        let mut grad_points = Vec::with_capacity(epsilons.len());
        for (eps, diff, moll) in &distance_samples {
            dist_points.push((*eps, lp_norm_sampled(diff, moll.spacing(), p)?));
            grad_points.push((*eps, lp_norm_sampled(moll.gradient(), moll.spacing(), p)?));
        }
        let (slope, excluded) = fit_or_flat(&dist_points)?;
        distance.push(DecayCurve {
            exponent: p,
            points: dist_points,
            slope,
            excluded,
        });
        let (slope, excluded) = fit_or_flat(&grad_points)?;
        gradient.push(DecayCurve {
            exponent: p,
            points: grad_points,
            slope,
            excluded,
        });
    }
    Ok(MollifierStudy { distance, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::{solve_impulse_periodic, ImpulseSequence};

    const PI: f64 = std::f64::consts::PI;

    fn random_trajectory(rng: &mut SplitMix64, modes: usize, nodes: usize) -> Trajectory<f64> {
        Trajectory::new(
            (0..nodes)
                .map(|_| {
                    SpectralField::from_coeffs(
                        (0..modes).map(|_| rng.uniform_signed()).collect(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn scale_trajectory(traj: &Trajectory<f64>, factor: f64) -> Trajectory<f64> {
        Trajectory::new(traj.nodes().iter().map(|n| n.scale(factor)).collect()).unwrap()
    }

    fn add_trajectories(a: &Trajectory<f64>, b: &Trajectory<f64>) -> Trajectory<f64> {
        Trajectory::new(
            a.nodes()
                .iter()
                .zip(b.nodes())
                .map(|(x, y)| x.add(y))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn time_norm_matches_frozen_examples() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let zero = Trajectory::new(vec![SpectralField::zeros(2); 17]).unwrap();
        assert_eq!(lp_time_norm(&zero, &grid, 2.0).unwrap(), 0.0);

        // Constant difference d: every L^p norm over (0, T) is T^{1/p} ||d||.
        let d = SpectralField::from_coeffs(vec![3.0, 4.0]).unwrap();
        let grid2 = TimeGrid::new(4.0, 16).unwrap();
        let constant = Trajectory::new(vec![d.clone(); 17]).unwrap();
        let got: f64 = lp_time_norm(&constant, &grid2, 2.0).unwrap();
        assert!((got - 2.0 * 5.0).abs() < 1e-12);
        let got = lp_time_norm(&constant, &grid2, f64::INFINITY).unwrap();
        assert!((got - 5.0).abs() < 1e-12);

        // Single decaying mode on (0, 1): closed-form L^2 norm.
        let grid3 = TimeGrid::new(1.0, 4096).unwrap();
        let lambda = PI * PI;
        let decay = Trajectory::new(
            (0..=4096)
                .map(|m| {
                    let t = m as f64 / 4096.0;
                    SpectralField::from_coeffs(vec![(-lambda * t).exp()]).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let got = lp_time_norm(&decay, &grid3, 2.0).unwrap();
        let expect = ((1.0 - (-2.0 * lambda).exp()) / (2.0 * lambda)).sqrt();
        assert!((expect - 0.22507907873820085).abs() < 1e-15);
        assert!((got - expect).abs() < 1e-5 * expect);
    }

    #[test]
    fn time_norm_satisfies_norm_axioms() {
        let grid = TimeGrid::new(1.5, 32).unwrap();
        let mut rng = SplitMix64::new(60);
        for &p in &[1.0, 2.0, 4.0, f64::INFINITY] {
            for _ in 0..5 {
                let a = random_trajectory(&mut rng, 3, 33);
                let b = random_trajectory(&mut rng, 3, 33);
                let na = lp_time_norm(&a, &grid, p).unwrap();
                let nb = lp_time_norm(&b, &grid, p).unwrap();
                assert!(na >= 0.0);
                let scaled = lp_time_norm(&scale_trajectory(&a, -2.5), &grid, p).unwrap();
                assert!((scaled - 2.5 * na).abs() <= 1e-12 * (1.0 + na));
                let sum = lp_time_norm(&add_trajectories(&a, &b), &grid, p).unwrap();
                assert!(sum <= na + nb + 1e-12);
            }
        }
    }

    #[test]
    fn broken_distance_matches_single_impulse_closed_form() {
        let domain = Domain1D::unit(0.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 4096).unwrap();
        let coupling = coupling_matrix(&domain, 1).unwrap();
        let impulses = ImpulseSequence::new(vec![SpectralField::basis(1, 1).unwrap()]).unwrap();
        let broken = solve_impulse_periodic(&domain, &impulses, &coupling, &grid).unwrap();
        let zero = Trajectory::new(vec![SpectralField::zeros(1); 4097]).unwrap();

        let lambda = PI * PI;
        let half = (-lambda * 0.5).exp();
        let full = half * half;
        let y0 = half / (1.0 - full);
        let z0 = y0 * half + 1.0;

        let got = lp_time_distance_broken(&zero, &broken, &grid, 2.0).unwrap();
        let expect = ((y0 * y0 + z0 * z0) * (1.0 - full) / (2.0 * lambda)).sqrt();
        assert!((got - expect).abs() <= 1e-5 * expect, "{got} vs {expect}");

        // The sup distance must see the post-jump value at the junction.
        let sup = lp_time_distance_broken(&zero, &broken, &grid, f64::INFINITY).unwrap();
        assert!((sup - z0).abs() <= 1e-12);
    }

    #[test]
    fn order_fit_recovers_exact_powers() {
        let hs = [0.5, 0.25, 0.125, 0.0625];
        let linear: Vec<(f64, f64)> = hs.iter().map(|&h| (h, h)).collect();
        assert!((fit_order(&linear).unwrap().slope - 1.0).abs() < 1e-12);
        let root: Vec<(f64, f64)> = hs.iter().map(|&h| (h, h.sqrt())).collect();
        assert!((fit_order(&root).unwrap().slope - 0.5).abs() < 1e-12);
        let quad: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert!((fit_order(&quad).unwrap().slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_fit_excludes_zeros_and_reports_underflow() {
        let points: [(f64, f64); 4] = [(0.5, 0.5), (0.25, 0.25), (0.125, 0.125), (0.0625, 0.0)];
        let fit = fit_order(&points).unwrap();
        assert_eq!(fit.excluded, 1);
        assert_eq!(fit.used, 3);
        assert!((fit.slope - 1.0).abs() < 1e-12);

        assert!(fit_order(&points[2..]).is_err());
        let flat = [(0.5, 1.0), (0.5, 2.0), (0.5, 3.0)];
        assert!(fit_order(&flat).is_err());
        let negative = [(0.5, 1.0), (0.25, -1.0), (0.125, 1.0)];
        assert!(fit_order(&negative).is_err());
    }

    #[test]
    fn default_target_samples_midpoints() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let target = default_target::<f64>(3, &grid).unwrap();
        let t0 = 1.0 / 16.0;
        let c = target.cell(0);
        assert!((c.coeff(1) - (1.0 + (2.0 * PI * t0).cos())).abs() < 1e-15);
        assert!((c.coeff(2) - 0.3 * (2.0 * PI * t0).sin()).abs() < 1e-15);
        assert_eq!(c.coeff(3), 0.0);
    }

    #[test]
    fn random_target_is_seed_deterministic() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let a = random_target::<f64>(3, &grid, 42).unwrap();
        let b = random_target::<f64>(3, &grid, 42).unwrap();
        let c = random_target::<f64>(3, &grid, 43).unwrap();
        assert_eq!(a, b);
        assert!(a != c);
        assert!(a.cells().iter().all(|f| f.coeffs().iter().all(|v| v.abs() < 1.0)));
    }

    #[test]
    fn study_populates_records_and_slopes() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let target = default_target(3, &grid).unwrap();
        let cfg = OcpConfig::new(domain, grid, 3, target).unwrap();
        let report = run_convergence_study(&cfg, &[2, 4, 8, 16]).unwrap();

        assert!(!report.degenerate);
        assert_eq!(report.records.len(), 8);
        assert_eq!(report.slopes.len(), 10);
        assert!(report.sampled_cost_dominates);
        assert!(report.baseline_cost > 0.0);
        for r in &report.records {
            assert!(r.h == 1.0 / r.subdivision as f64);
            assert!(r.control_error_l2 > 0.0);
            assert!(r.state_error_l2 > 0.0);
            assert!(r.state_error_l4 >= r.state_error_l2 * 0.1);
            assert!(r.state_error_linf >= r.state_error_l2 * 0.1);
            if r.problem == ProblemKind::Sampled {
                assert!(r.cost_gap >= 0.0);
            }
        }
        // Records come impulse-first, each block sorted by subdivision.
        let kinds: Vec<_> = report.records.iter().map(|r| r.problem).collect();
        assert_eq!(
            kinds,
            vec![
                ProblemKind::Impulse,
                ProblemKind::Impulse,
                ProblemKind::Impulse,
                ProblemKind::Impulse,
                ProblemKind::Sampled,
                ProblemKind::Sampled,
                ProblemKind::Sampled,
                ProblemKind::Sampled
            ]
        );
        let ns: Vec<_> = report.records[..4].iter().map(|r| r.subdivision).collect();
        assert_eq!(ns, vec![2, 4, 8, 16]);
    }

    #[test]
    fn study_flags_zero_target_as_degenerate() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let target = SourceTrajectory::zeros(2, 128);
        let cfg = OcpConfig::new(domain, grid, 2, target).unwrap();
        let report = run_convergence_study(&cfg, &[2, 4, 8, 16]).unwrap();
        assert!(report.degenerate);
        assert!(report.pass);
        assert!(report.slopes.is_empty());
        assert_eq!(report.baseline_cost, 0.0);
    }

    #[test]
    fn study_rejects_bad_subdivision_lists() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let target = default_target(2, &grid).unwrap();
        let cfg = OcpConfig::new(domain, grid, 2, target).unwrap();
        assert!(run_convergence_study(&cfg, &[2, 4, 8]).is_err());
        assert!(run_convergence_study(&cfg, &[2, 4, 8, 12]).is_err());
        assert!(run_convergence_study(&cfg, &[2, 4, 8, 32]).is_err());
        assert!(run_convergence_study(&cfg, &[1, 2, 4, 8]).is_err());
    }

    #[test]
    fn source_regularization_matches_exact_l2_integrals() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let modes = 16;
        let control = SpectralField::from_coeffs(
            (1..=modes).map(|k| 1.0 / k as f64).collect(),
        )
        .unwrap();
        let deltas = [1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0];
        let curves =
            experiment_compare3(&control, &domain, &deltas, &[2.0], 0.0, 1.0).unwrap();
        let curve = &curves[0];

        let coupling = coupling_matrix(&domain, modes).unwrap();
        let profile = coupling.apply(&control).unwrap();
        for (&delta, &(scale, got)) in deltas.iter().zip(&curve.points) {
            assert_eq!(scale, delta);
            let mut exact_sq = 0.0;
            for k in 1..=modes {
                let lam = domain.eigenvalue(k).unwrap();
                let g = profile.coeff(k);
                let a = g / (delta * lam);
                let b = g;
                let e_d = (-lam * delta).exp();
                // Layer: integral of (a - (a+b) e^{-lam t})^2 over (0, delta).
                let layer = a * a * delta - 2.0 * a * (a + b) * (1.0 - e_d) / lam
                    + (a + b) * (a + b) * (1.0 - e_d * e_d) / (2.0 * lam);
                // Tail: free decay from the offset at delta.
                let d0 = a * (1.0 - e_d) - b * e_d;
                let tail =
                    d0 * d0 * (1.0 - (-2.0 * lam * (1.0 - delta)).exp()) / (2.0 * lam);
                exact_sq += layer + tail;
            }
            let exact = exact_sq.sqrt();
            assert!(
                (got - exact).abs() <= 1e-7 * exact,
                "delta {delta}: {got} vs {exact}"
            );
        }
        // These deltas straddle the crossover where high modes still hold
        // delta-independent mass, so the order is only near its limit.
        let slope = curve.slope.unwrap();
        assert!((0.3..=0.55).contains(&slope), "crossover slope {slope}");
    }

    #[test]
    fn source_regularization_shows_the_limit_orders() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let control = SpectralField::basis(32, 1).unwrap();
        let deltas: Vec<f64> = (4..=10).map(|i| 0.5f64.powi(i)).collect();
        let curves =
            experiment_compare3(&control, &domain, &deltas, &[2.0, 4.0], 0.0, 1.0).unwrap();
        let slope2 = curves[0].slope.unwrap();
        assert!(slope2 >= 0.45, "p=2 slope {slope2}");
        let slope4 = curves[1].slope.unwrap();
        assert!(slope4 >= 0.20, "p=4 slope {slope4}");
        for curve in &curves {
            for w in curve.points.windows(2) {
                assert!(w[1].1 < w[0].1, "errors must shrink with delta");
            }
        }
    }

    #[test]
    fn source_regularization_handles_zero_control() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let control = SpectralField::zeros(4);
        let curves = experiment_compare3(
            &control,
            &domain,
            &[0.25, 0.125, 0.0625],
            &[2.0, 4.0],
            0.0,
            1.0,
        )
        .unwrap();
        for curve in curves {
            assert!(curve.slope.is_none());
            assert!(curve.points.iter().all(|&(_, e)| e == 0.0));
        }
    }

    #[test]
    fn source_regularization_validates_the_window() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let control = SpectralField::basis(4, 1).unwrap();
        assert!(experiment_compare3(&control, &domain, &[0.5], &[2.0], 0.6, 1.0).is_err());
        assert!(experiment_compare3(&control, &domain, &[0.25], &[f64::INFINITY], 0.0, 1.0)
            .is_err());
    }

    #[test]
    fn window_response_matches_single_mode_growth() {
        // Full window: the coupling is the identity, so the response of the
        // first basis mode is exactly |e^{-lambda_1 s} - 1|.
        let domain = Domain1D::unit(0.0, 1.0).unwrap();
        let z0 = SpectralField::basis(1, 1).unwrap();
        let spans = [1e-2, 1e-3, 1e-4];
        let curve = experiment_intuitive(&z0, &domain, &spans, 256).unwrap();
        for (&s, &(_, err)) in spans.iter().zip(&curve.points) {
            let exact = (-PI * PI * s).exp_m1().abs();
            assert!((err - exact).abs() <= 1e-12 * exact.max(1e-30));
        }
        let slope = curve.slope.unwrap();
        assert!(slope >= 0.45, "smooth response slope {slope}");
        assert!(slope <= 1.05, "smooth response slope {slope}");
    }

    #[test]
    fn window_response_slows_for_a_strict_window() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let z0 = SpectralField::basis(1, 1).unwrap();
        let spans: Vec<f64> = (0..7).map(|i| 1e-2 / 2f64.powi(i)).collect();
        let curve = experiment_intuitive(&z0, &domain, &spans, 384).unwrap();
        let slope = curve.slope.unwrap();
        assert!(slope >= 0.2, "windowed response slope {slope}");
        assert!(slope <= 0.6, "windowed response slope {slope}");
    }

    #[test]
    fn window_response_rejects_short_truncations() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let z0 = SpectralField::basis(1, 1).unwrap();
        assert!(experiment_intuitive(&z0, &domain, &[1e-3], 128).is_err());
    }

    #[test]
    fn mollifier_study_shows_the_expected_orders()  {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let epsilons: Vec<f64> = (4..=8).map(|i| 0.5f64.powi(i)).collect();
        let study =
            experiment_mollifier(&domain, &epsilons, &[1.0, 2.0], 8193).unwrap();

        let d1 = study.distance[0].slope.unwrap();
        assert!(d1 >= 0.95, "L1 distance slope {d1}");
        let d2 = study.distance[1].slope.unwrap();
        assert!(d2 >= 0.45, "L2 distance slope {d2}");

        let g1 = study.gradient[0].slope.unwrap();
        assert!(g1.abs() <= 0.05, "L1 gradient slope {g1}");
        let g2 = study.gradient[1].slope.unwrap();
        assert!(g2 <= -0.45, "L2 gradient slope {g2}");

        // Halving epsilon roughly halves the L1 distance.
        let pts = &study.distance[0].points;
        for w in pts.windows(2) {
            let ratio = w[1].1 / w[0].1;
            assert!((ratio - 0.5).abs() < 0.1, "L1 halving ratio {ratio}");
        }
    }

    #[test]
    fn mollifier_study_rejects_wide_kernels() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        assert!(experiment_mollifier(&domain, &[0.3], &[1.0], 1025).is_err());
        assert!(experiment_mollifier(&domain, &[0.01], &[f64::INFINITY], 1025).is_err());
    }
}
