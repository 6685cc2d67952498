//! Zero-order-hold approximation of the periodic tracking problem.
//!
//! The control is held constant on each of `n` equal subintervals, so the
//! admissible class is the subspace of cell controls that are constant on
//! blocks of `q = N_t / n` cells. Holding a value and averaging back over
//! a block are adjoint to each other in the natural inner products (block
//! sums against `h = T/n` on one side, cell sums against `dt` on the
//! other), so the reduced optimality map inherits self-adjointness and
//! coercivity from the distributed problem by plain subspace restriction.
//! For the same reason the held cost equals the distributed cost of the
//! held control exactly, which gives the ordering
//! `J* <= J_hold* <= J(0) = 1/2 ||y_d||^2` and monotone improvement under
//! sampling refinement.

use crate::cg::{self, CgReport};
use crate::error::{invalid, mismatch, Result};
use crate::heat::{
    solve_periodic, solve_periodic_adjoint, SourceTrajectory, TimeGrid, Trajectory,
};
use crate::ocp::{self, OcpConfig};
use crate::real::Real;
use crate::spectral::{coupling_matrix, CouplingMatrix, Domain1D, SpectralField};

/// Minimum number of fine cells per sampling interval accepted by
/// [`solve_sampled`], so interval averages of the adjoint stay well
/// resolved.
pub const MIN_CELLS_PER_HOLD: usize = 8;

/// Converged held values, the trajectories they generate and diagnostics.
#[derive(Debug, Clone)]
pub struct SampledSolution<S> {
    /// One held value per sampling interval.
    pub holds: Vec<SpectralField<S>>,
    /// The held values expanded to the fine grid.
    pub control: SourceTrajectory<S>,
    pub state: Trajectory<S>,
    pub adjoint: Trajectory<S>,
    pub cost: S,
    pub iterations: usize,
    pub residual: S,
}

fn check_values<S: Real>(values: &[SpectralField<S>]) -> Result<usize> {
    let n = values.len();
    if n == 0 {
        return Err(invalid("a sampled control needs at least one held value"));
    }
    let modes = values[0].modes();
    if values.iter().any(|v| v.modes() != modes) {
        return Err(mismatch("held values disagree on mode count"));
    }
    Ok(modes)
}

/// Expand held values to a cell control on the fine grid; value `i` fills
/// the `i`-th block of `N_t / n` cells. The expansion is an isometry:
/// `||hold(V)||^2_{L2} = h sum_i ||v_i||^2`.
pub fn hold_control<S: Real>(
    values: &[SpectralField<S>],
    grid: &TimeGrid<S>,
) -> Result<SourceTrajectory<S>> {
    check_values(values)?;
    let q = grid.cells_per_piece(values.len())?;
    let mut cells = Vec::with_capacity(grid.steps());
    for value in values {
        for _ in 0..q {
            cells.push(value.clone());
        }
    }
    SourceTrajectory::new(cells)
}

// Per-block means of a cell function, the adjoint of hold_control.
fn block_means<S: Real>(cells: &SourceTrajectory<S>, blocks: usize) -> Vec<SpectralField<S>> {
    let q = cells.len() / blocks;
    let scale = S::one() / S::of_usize(q);
    (0..blocks)
        .map(|i| {
            let mut acc = SpectralField::zeros(cells.modes());
            for m in i * q..(i + 1) * q {
                acc.axpy(S::one(), cells.cell(m));
            }
            acc.scale(scale)
        })
        .collect()
}

// The reduced sampled map with a prebuilt coupling matrix.
pub(crate) fn apply_reduced_sampled<S: Real>(
    domain: &Domain1D<S>,
    coupling: &CouplingMatrix<S>,
    grid: &TimeGrid<S>,
    values: &[SpectralField<S>],
) -> Result<Vec<SpectralField<S>>> {
    let held = hold_control(values, grid)?;
    let state = solve_periodic(domain, &ocp::window_cells(coupling, &held)?, grid)?;
    let windowed =
        ocp::windowed_adjoint_averages(domain, coupling, grid, &state.cell_averages())?;
    let corrections = block_means(&windowed, values.len());
    Ok(values
        .iter()
        .zip(corrections)
        .map(|(v, c)| {
            let mut out = v.clone();
            out.axpy(-S::one(), &c);
            out
        })
        .collect())
}

/// Reduced optimality map for the hold problem with `n` intervals:
/// `A(V)_i = v_i - (1/h) window(integral of p over interval i)` with `p`
/// the periodic adjoint driven by the cell averages of the state generated
/// by the held control.
pub fn reduced_apply_sampled<S: Real>(
    values: &[SpectralField<S>],
    cfg: &OcpConfig<S>,
    subdivision: usize,
) -> Result<Vec<SpectralField<S>>> {
    cfg.validate()?;
    if values.len() != subdivision {
        return Err(mismatch("held value count must equal the subdivision"));
    }
    if check_values(values)? != cfg.modes {
        return Err(mismatch("held values do not match the config mode count"));
    }
    cfg.grid.cells_per_piece(subdivision)?;
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    apply_reduced_sampled(&cfg.domain, &coupling, &cfg.grid, values)
}

// Right-hand side of the reduced hold system: block means of the windowed
// adjoint averages driven by -y_d.
pub(crate) fn reduced_rhs_sampled<S: Real>(
    cfg: &OcpConfig<S>,
    coupling: &CouplingMatrix<S>,
    subdivision: usize,
) -> Result<Vec<SpectralField<S>>> {
    let windowed = ocp::windowed_adjoint_averages(
        &cfg.domain,
        coupling,
        &cfg.grid,
        &cfg.target.scale(-S::one()),
    )?;
    Ok(block_means(&windowed, subdivision))
}

pub(crate) fn flatten_fields<S: Real>(fields: &[SpectralField<S>]) -> Vec<S> {
    let mut out = Vec::with_capacity(fields.len() * fields[0].modes());
    for field in fields {
        out.extend_from_slice(field.coeffs());
    }
    out
}

pub(crate) fn unflatten_fields<S: Real>(flat: &[S], modes: usize) -> Vec<SpectralField<S>> {
    debug_assert_eq!(flat.len() % modes, 0);
    flat.chunks(modes)
        .map(|c| SpectralField::from_coeffs(c.to_vec()).expect("finite CG iterate"))
        .collect()
}

/// Solve the hold problem with `n` sampling intervals by CG on the reduced
/// system, in the `h`-weighted inner product.
pub fn solve_sampled<S: Real>(cfg: &OcpConfig<S>, subdivision: usize) -> Result<SampledSolution<S>> {
    cfg.validate()?;
    let q = cfg.grid.cells_per_piece(subdivision)?;
    if q < MIN_CELLS_PER_HOLD {
        return Err(invalid(format!(
            "need at least {MIN_CELLS_PER_HOLD} cells per sampling interval, got {q}"
        )));
    }
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    let modes = cfg.modes;
    let h = cfg.grid.horizon() / S::of_usize(subdivision);

    let rhs = flatten_fields(&reduced_rhs_sampled(cfg, &coupling, subdivision)?);
    let x0 = vec![S::zero(); rhs.len()];
    let apply = |flat: &[S]| {
        let values = unflatten_fields(flat, modes);
        let out = apply_reduced_sampled(&cfg.domain, &coupling, &cfg.grid, &values)
            .expect("shapes fixed by solver");
        flatten_fields(&out)
    };

    let (flat, report): (Vec<S>, CgReport<S>) = cg::solve(
        apply,
        &rhs,
        x0,
        h,
        cfg.residual_threshold(cfg.cg_tol),
        cfg.cg_max_iter,
        None,
    )?;

    let holds = unflatten_fields(&flat, modes);
    finish_solution(cfg, &coupling, holds, report)
}

fn finish_solution<S: Real>(
    cfg: &OcpConfig<S>,
    coupling: &CouplingMatrix<S>,
    holds: Vec<SpectralField<S>>,
    report: CgReport<S>,
) -> Result<SampledSolution<S>> {
    let control = hold_control(&holds, &cfg.grid)?;
    let state = solve_periodic(
        &cfg.domain,
        &ocp::window_cells(coupling, &control)?,
        &cfg.grid,
    )?;
    let mut rhs = state.cell_averages();
    rhs.axpy(-S::one(), &cfg.target);
    let adjoint = solve_periodic_adjoint(&cfg.domain, &rhs, &cfg.grid)?;
    let cost = ocp::cost(&state, &control, &cfg.target, &cfg.grid)?;
    Ok(SampledSolution {
        holds,
        control,
        state,
        adjoint,
        cost,
        iterations: report.iterations,
        residual: report.residual,
    })
}
