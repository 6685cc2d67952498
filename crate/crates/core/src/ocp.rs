//! Periodic tracking control with a distributed control window.
//!
//! The optimality system couples the periodic state equation, the periodic
//! adjoint equation and the pointwise relation `u = (window) p`. Eliminating
//! the state and adjoint leaves one linear equation `A u = b` in the control
//! alone, where `A u = u - window(adjoint(state(u)))` is self-adjoint and
//! coercive (`<Au, u> >= ||u||^2`), so it is solved matrix-free with CG.
//!
//! One discretization detail makes `A` exactly self-adjoint rather than
//! self-adjoint up to `O(dt)`: the adjoint is driven by the nodal averages
//! of the state on each cell, and the control update reads the adjoint back
//! through the same averaging. With both averages in place the discrete
//! cost below is exactly the CG quadratic plus a constant, so CG iterates
//! descend the reported cost monotonically.

use crate::cg::{self, CgReport};
use crate::error::{invalid, mismatch, Result};
use crate::heat::{
    solve_periodic, solve_periodic_adjoint, SourceTrajectory, TimeGrid, Trajectory,
};
use crate::real::Real;
use crate::spectral::{coupling_matrix, CouplingMatrix, Domain1D, SpectralField};

/// Problem data for the periodic tracking problem and its impulse and
/// sample-hold approximations.
#[derive(Debug, Clone)]
pub struct OcpConfig<S> {
    pub domain: Domain1D<S>,
    pub grid: TimeGrid<S>,
    pub modes: usize,
    pub target: SourceTrajectory<S>,
    pub cg_tol: S,
    pub cg_max_iter: usize,
}

pub const DEFAULT_CG_TOL: f64 = 1e-10;
pub const DEFAULT_CG_MAX_ITER: usize = 500;

impl<S: Real> OcpConfig<S> {
    pub fn new(
        domain: Domain1D<S>,
        grid: TimeGrid<S>,
        modes: usize,
        target: SourceTrajectory<S>,
    ) -> Result<Self> {
        let cfg = Self {
            domain,
            grid,
            modes,
            target,
            cg_tol: S::of(DEFAULT_CG_TOL),
            cg_max_iter: DEFAULT_CG_MAX_ITER,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(invalid("mode count must be at least 1"));
        }
        if self.target.len() != self.grid.steps() {
            return Err(mismatch(format!(
                "target has {} cells, grid has {} steps",
                self.target.len(),
                self.grid.steps()
            )));
        }
        if self.target.modes() != self.modes {
            return Err(mismatch(format!(
                "target has {} modes, config asks for {}",
                self.target.modes(),
                self.modes
            )));
        }
        if !(self.cg_tol > S::zero() && self.cg_tol.is_finite()) {
            return Err(invalid("cg_tol must be positive and finite"));
        }
        if self.cg_max_iter == 0 {
            return Err(invalid("cg_max_iter must be at least 1"));
        }
        Ok(())
    }

    /// `L2(0,T; L2)` norm of the tracking target.
    pub fn target_norm(&self) -> S {
        self.target.norm_l2_sq(&self.grid).sqrt()
    }

    /// Residual threshold used by every solver in this crate:
    /// `cg_tol * (1 + ||y_d||)`.
    pub fn residual_threshold(&self, tol: S) -> S {
        tol * (S::one() + self.target_norm())
    }
}

/// Converged control, its trajectories and diagnostics.
#[derive(Debug, Clone)]
pub struct OcpSolution<S> {
    pub control: SourceTrajectory<S>,
    pub state: Trajectory<S>,
    pub adjoint: Trajectory<S>,
    pub cost: S,
    pub iterations: usize,
    pub residual: S,
}

/// Tracking cost `1/2 int ||y - y_d||^2 + 1/2 int ||u||^2`. The control and
/// target are cell functions and integrate exactly; the state enters through
/// its nodal cell averages, which matches the optimality system exactly (see
/// the module notes).
pub fn cost<S: Real>(
    state: &Trajectory<S>,
    control: &SourceTrajectory<S>,
    target: &SourceTrajectory<S>,
    grid: &TimeGrid<S>,
) -> Result<S> {
    if state.len() != grid.steps() + 1
        || control.len() != grid.steps()
        || target.len() != grid.steps()
    {
        return Err(mismatch("state, control and target must share the grid"));
    }
    if state.modes() != control.modes() || state.modes() != target.modes() {
        return Err(mismatch("state, control and target must share modes"));
    }
    let avg = state.cell_averages();
    let mut acc = S::zero();
    for m in 0..grid.steps() {
        let track = avg.cell(m).sub(target.cell(m));
        acc += track.dot(&track) + control.cell(m).dot(control.cell(m));
    }
    Ok(acc * grid.dt() * S::of(0.5))
}

// Cell source obtained by passing every cell through the window matrix.
pub(crate) fn window_cells<S: Real>(
    coupling: &CouplingMatrix<S>,
    cells: &SourceTrajectory<S>,
) -> Result<SourceTrajectory<S>> {
    SourceTrajectory::new(
        cells
            .cells()
            .iter()
            .map(|c| coupling.apply(c))
            .collect::<Result<_>>()?,
    )
}

// Windowed cell averages of the periodic adjoint driven by `rhs`.
pub(crate) fn windowed_adjoint_averages<S: Real>(
    domain: &Domain1D<S>,
    coupling: &CouplingMatrix<S>,
    grid: &TimeGrid<S>,
    rhs: &SourceTrajectory<S>,
) -> Result<SourceTrajectory<S>> {
    let adjoint = solve_periodic_adjoint(domain, rhs, grid)?;
    window_cells(coupling, &adjoint.cell_averages())
}

// The reduced map with a prebuilt coupling matrix.
pub(crate) fn apply_reduced<S: Real>(
    domain: &Domain1D<S>,
    coupling: &CouplingMatrix<S>,
    grid: &TimeGrid<S>,
    control: &SourceTrajectory<S>,
) -> Result<SourceTrajectory<S>> {
    let state = solve_periodic(domain, &window_cells(coupling, control)?, grid)?;
    let correction = windowed_adjoint_averages(domain, coupling, grid, &state.cell_averages())?;
    let mut out = control.clone();
    out.axpy(-S::one(), &correction);
    Ok(out)
}

/// Reduced optimality map `A(u) = u - window(adjoint(state(u)))`.
pub fn reduced_apply<S: Real>(
    control: &SourceTrajectory<S>,
    cfg: &OcpConfig<S>,
) -> Result<SourceTrajectory<S>> {
    cfg.validate()?;
    if control.len() != cfg.grid.steps() || control.modes() != cfg.modes {
        return Err(mismatch("control does not match the config grid"));
    }
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    apply_reduced(&cfg.domain, &coupling, &cfg.grid, control)
}

// Right-hand side of the reduced system: the windowed averages of the
// adjoint driven by -y_d.
pub(crate) fn reduced_rhs<S: Real>(
    cfg: &OcpConfig<S>,
    coupling: &CouplingMatrix<S>,
) -> Result<SourceTrajectory<S>> {
    windowed_adjoint_averages(
        &cfg.domain,
        coupling,
        &cfg.grid,
        &cfg.target.scale(-S::one()),
    )
}

pub(crate) fn flatten<S: Real>(src: &SourceTrajectory<S>) -> Vec<S> {
    let mut out = Vec::with_capacity(src.len() * src.modes());
    for cell in src.cells() {
        out.extend_from_slice(cell.coeffs());
    }
    out
}

pub(crate) fn unflatten<S: Real>(flat: &[S], modes: usize, cells: usize) -> SourceTrajectory<S> {
    debug_assert_eq!(flat.len(), modes * cells);
    SourceTrajectory::new(
        flat.chunks(modes)
            .map(|c| SpectralField::from_coeffs(c.to_vec()).expect("finite CG iterate"))
            .collect(),
    )
    .expect("nonempty control")
}

/// Solve the periodic tracking problem with CG on the reduced system.
pub fn solve_ocp<S: Real>(cfg: &OcpConfig<S>) -> Result<OcpSolution<S>> {
    solve_ocp_detailed(cfg, None, None)
}

/// [`solve_ocp`] with an optional initial guess and an optional record of
/// the CG control iterates (both used by verification code).
pub fn solve_ocp_detailed<S: Real>(
    cfg: &OcpConfig<S>,
    initial: Option<&SourceTrajectory<S>>,
    trace: Option<&mut Vec<SourceTrajectory<S>>>,
) -> Result<OcpSolution<S>> {
    cfg.validate()?;
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    let modes = cfg.modes;
    let cells = cfg.grid.steps();

    let rhs = flatten(&reduced_rhs(cfg, &coupling)?);
    let x0 = match initial {
        Some(guess) => {
            if guess.len() != cells || guess.modes() != modes {
                return Err(mismatch("initial guess does not match the config grid"));
            }
            flatten(guess)
        }
        None => vec![S::zero(); rhs.len()],
    };

    let apply = |flat: &[S]| {
        let control = unflatten(flat, modes, cells);
        let out = apply_reduced(&cfg.domain, &coupling, &cfg.grid, &control)
            .expect("shapes fixed by solver");
        flatten(&out)
    };

    let mut raw_trace = trace.map(|t| (t, Vec::new()));
    let (flat, report): (Vec<S>, CgReport<S>) = cg::solve(
        apply,
        &rhs,
        x0,
        cfg.grid.dt(),
        cfg.residual_threshold(cfg.cg_tol),
        cfg.cg_max_iter,
        raw_trace.as_mut().map(|(_, raw)| raw),
    )?;
    if let Some((out, raw)) = raw_trace {
        out.extend(raw.iter().map(|v| unflatten(v, modes, cells)));
    }

    let control = unflatten(&flat, modes, cells);
    finish_solution(cfg, &coupling, control, report)
}

// Rebuild state, adjoint and cost from a converged control. Uses exactly
// the code paths of the reduced map so that stored trajectories reproduce
// the fixed point bit for bit.
fn finish_solution<S: Real>(
    cfg: &OcpConfig<S>,
    coupling: &CouplingMatrix<S>,
    control: SourceTrajectory<S>,
    report: CgReport<S>,
) -> Result<OcpSolution<S>> {
    let state = solve_periodic(&cfg.domain, &window_cells(coupling, &control)?, &cfg.grid)?;
    let mut rhs = state.cell_averages();
    rhs.axpy(-S::one(), &cfg.target);
    let adjoint = solve_periodic_adjoint(&cfg.domain, &rhs, &cfg.grid)?;
    let cost = cost(&state, &control, &cfg.target, &cfg.grid)?;
    Ok(OcpSolution {
        control,
        state,
        adjoint,
        cost,
        iterations: report.iterations,
        residual: report.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    const PI: f64 = std::f64::consts::PI;

    fn random_target(rng: &mut SplitMix64, modes: usize, cells: usize) -> SourceTrajectory<f64> {
        SourceTrajectory::new(
            (0..cells)
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

    fn small_config(modes: usize, steps: usize, seed: u64) -> OcpConfig<f64> {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let mut rng = SplitMix64::new(seed);
        let target = random_target(&mut rng, modes, steps);
        OcpConfig::new(domain, grid, modes, target).unwrap()
    }

    fn weighted_dot(a: &SourceTrajectory<f64>, b: &SourceTrajectory<f64>, dt: f64) -> f64 {
        a.cells()
            .iter()
            .zip(b.cells())
            .map(|(x, y)| x.dot(y))
            .sum::<f64>()
            * dt
    }

    #[test]
    fn cost_matches_frozen_examples() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let target = SourceTrajectory::new(vec![
            SpectralField::basis(1, 1).unwrap();
            16
        ])
        .unwrap();
        let zero_state =
            Trajectory::new(vec![SpectralField::zeros(1); 17]).unwrap();
        let zero_control = SourceTrajectory::zeros(1, 16);
        let j: f64 = cost(&zero_state, &zero_control, &target, &grid).unwrap();
        assert!((j - 0.5).abs() < 1e-15);

        let tracking_state =
            Trajectory::new(vec![SpectralField::basis(1, 1).unwrap(); 17]).unwrap();
        let j = cost(&tracking_state, &zero_control, &target, &grid).unwrap();
        assert!(j.abs() < 1e-15);
    }

    #[test]
    fn cost_rejects_shape_mismatch() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let state = Trajectory::new(vec![SpectralField::zeros(1); 16]).unwrap();
        let control = SourceTrajectory::zeros(1, 16);
        let target = SourceTrajectory::zeros(1, 16);
        assert!(cost(&state, &control, &target, &grid).is_err());
    }

    #[test]
    fn reduced_map_fixes_zero() {
        let cfg = small_config(3, 24, 1);
        let zero = SourceTrajectory::zeros(3, 24);
        let out = reduced_apply(&zero, &cfg).unwrap();
        for cell in out.cells() {
            assert_eq!(cell.norm(), 0.0);
        }
    }

    #[test]
    fn reduced_map_is_self_adjoint_and_coercive() {
        let cfg = small_config(4, 32, 2);
        let dt = cfg.grid.dt();
        let mut rng = SplitMix64::new(1234);
        for _ in 0..20 {
            let u = random_target(&mut rng, 4, 32);
            let v = random_target(&mut rng, 4, 32);
            let au = reduced_apply(&u, &cfg).unwrap();
            let av = reduced_apply(&v, &cfg).unwrap();
            let lhs = weighted_dot(&au, &v, dt);
            let rhs = weighted_dot(&u, &av, dt);
            assert!(
                (lhs - rhs).abs() <= 1e-9 * (lhs.abs() + rhs.abs() + 1.0),
                "symmetry violated: {lhs} vs {rhs}"
            );
            let quad = weighted_dot(&au, &u, dt);
            let norm_sq = weighted_dot(&u, &u, dt);
            assert!(
                quad >= norm_sq * (1.0 - 1e-12),
                "coercivity violated: {quad} < {norm_sq}"
            );
        }
    }

    #[test]
    fn zero_target_gives_zero_control() {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let target = SourceTrajectory::<f64>::zeros(2, 16);
        let cfg = OcpConfig::new(domain, grid, 2, target).unwrap();
        let sol = solve_ocp(&cfg).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.cost.abs() < 1e-20);
        for cell in sol.control.cells() {
            assert_eq!(cell.norm(), 0.0);
        }
    }

    #[test]
    fn single_mode_full_window_matches_stationary_solution() {
        // K = 1, window = whole interval, y_d the constant first mode:
        // u = pi^2/(1+pi^4) phi_1 and y = 1/(1+pi^4) phi_1, exactly at the
        // discrete level because all quantities are time-constant.
        let domain = Domain1D::unit(0.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let target = SourceTrajectory::new(vec![
            SpectralField::basis(1, 1).unwrap();
            64
        ])
        .unwrap();
        let cfg = OcpConfig::new(domain, grid, 1, target).unwrap();
        let sol = solve_ocp(&cfg).unwrap();
        let u_expect = PI * PI / (1.0 + PI.powi(4));
        let y_expect = 1.0 / (1.0 + PI.powi(4));
        for cell in sol.control.cells() {
            assert!((cell.coeff(1) - u_expect).abs() < 1e-10);
        }
        for node in sol.state.nodes() {
            assert!((node.coeff(1) - y_expect).abs() < 1e-10);
        }
        assert!(sol.state.periodicity_residual() < 1e-12);
        assert!(sol.adjoint.periodicity_residual() < 1e-12);
    }

    #[test]
    fn pmp_residual_and_consistency_hold_after_solve() {
        let cfg = small_config(3, 40, 7);
        let sol = solve_ocp(&cfg).unwrap();

        // u* must equal the windowed adjoint averages up to the tolerance.
        let coupling = coupling_matrix(&cfg.domain, cfg.modes).unwrap();
        let windowed = window_cells(&coupling, &sol.adjoint.cell_averages()).unwrap();
        let diff = sol.control.sub(&windowed).unwrap();
        let residual = diff.norm_l2_sq(&cfg.grid).sqrt();
        assert!(residual <= cfg.residual_threshold(cfg.cg_tol));

        // Rebuilding the trajectories through the same code path reproduces
        // them bit for bit.
        let state = solve_periodic(
            &cfg.domain,
            &window_cells(&coupling, &sol.control).unwrap(),
            &cfg.grid,
        )
        .unwrap();
        assert_eq!(state, sol.state);
        let mut rhs = state.cell_averages();
        rhs.axpy(-1.0, &cfg.target);
        let adjoint = solve_periodic_adjoint(&cfg.domain, &rhs, &cfg.grid).unwrap();
        assert_eq!(adjoint, sol.adjoint);
    }

    #[test]
    fn cg_iterates_descend_the_cost() {
        let cfg = small_config(3, 32, 11);
        let mut iterates = Vec::new();
        let sol = solve_ocp_detailed(&cfg, None, Some(&mut iterates)).unwrap();
        assert!(iterates.len() >= 2, "expected several iterates");
        let coupling = coupling_matrix(&cfg.domain, cfg.modes).unwrap();
        let mut previous = f64::INFINITY;
        for u in &iterates {
            let state =
                solve_periodic(&cfg.domain, &window_cells(&coupling, u).unwrap(), &cfg.grid)
                    .unwrap();
            let j = cost(&state, u, &cfg.target, &cfg.grid).unwrap();
            assert!(
                j <= previous + 1e-12 * (1.0 + previous.abs()),
                "cost rose along CG iterates: {previous} -> {j}"
            );
            previous = j;
        }
        assert!(sol.cost <= previous + 1e-12 * (1.0 + previous.abs()));
    }

    #[test]
    fn solves_from_different_starts_agree() {
        let cfg = small_config(3, 32, 13);
        let from_zero = solve_ocp(&cfg).unwrap();
        let mut rng = SplitMix64::new(999);
        let guess = random_target(&mut rng, 3, 32);
        let from_random = solve_ocp_detailed(&cfg, Some(&guess), None).unwrap();
        let diff = from_zero
            .control
            .sub(&from_random.control)
            .unwrap()
            .norm_l2_sq(&cfg.grid)
            .sqrt();
        assert!(diff <= 10.0 * cfg.cg_tol * (1.0 + cfg.target_norm()));
    }

    #[test]
    fn control_scales_linearly_with_target() {
        let cfg = small_config(3, 32, 17);
        let mut doubled = cfg.clone();
        doubled.target = cfg.target.scale(2.0);
        let sol = solve_ocp(&cfg).unwrap();
        let sol2 = solve_ocp(&doubled).unwrap();
        let diff = sol2
            .control
            .sub(&sol.control.scale(2.0))
            .unwrap()
            .norm_l2_sq(&cfg.grid)
            .sqrt();
        let scale = sol2.control.norm_l2_sq(&cfg.grid).sqrt().max(1.0);
        assert!(diff <= 1e-8 * scale, "scaling broke linearity: {diff}");
    }

    #[test]
    fn config_validation_aggregates_shape_errors() {
        let domain = Domain1D::unit(0.3_f64, 0.8).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let target = SourceTrajectory::zeros(2, 15);
        assert!(OcpConfig::new(domain, grid, 2, target).is_err());
    }
}
