//! Dense cross-checks for the matrix-free solvers.
//!
//! Each reduced optimality system is small enough at verification sizes to
//! assemble explicitly: probing the reduced map with unit vectors yields
//! the dense matrix, the right-hand side comes from the same builders the
//! iterative solvers use, and an LU factorization solves the system by a
//! completely different route than CG. The reported deviation is the
//! relative Euclidean distance between the two solutions, which should sit
//! at the CG tolerance.

use crate::error::{invalid, Result};
use crate::heat::ImpulseSequence;
use crate::impulse;
use crate::ocp::{self, OcpConfig};
use crate::real::Real;
use crate::sampled;
use crate::spectral::coupling_matrix;

/// Largest flat dimension accepted for the distributed problem.
pub const DENSE_LIMIT_DISTRIBUTED: usize = 512;
/// Largest flat dimension accepted for the impulse and hold problems.
pub const DENSE_LIMIT_SUBDIVIDED: usize = 64;

/// Outcome of one dense cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport<S> {
    /// Flat dimension of the assembled system.
    pub dimension: usize,
    /// Relative Euclidean deviation between the CG and dense solutions.
    pub deviation: S,
}

// Assemble the dense matrix of a linear map by probing unit vectors.
fn assemble<S: Real>(dim: usize, mut apply: impl FnMut(&[S]) -> Result<Vec<S>>) -> Result<Vec<S>> {
    let mut matrix = vec![S::zero(); dim * dim];
    let mut probe = vec![S::zero(); dim];
    for j in 0..dim {
        probe[j] = S::one();
        let column = apply(&probe)?;
        probe[j] = S::zero();
        for i in 0..dim {
            matrix[i * dim + j] = column[i];
        }
    }
    Ok(matrix)
}

// Solve a dense linear system in place by LU with partial pivoting.
pub(crate) fn solve_dense<S: Real>(matrix: &mut [S], rhs: &mut [S]) -> Result<()> {
    let dim = rhs.len();
    if matrix.len() != dim * dim {
        return Err(invalid("dense system shape mismatch"));
    }
    for col in 0..dim {
        let mut pivot_row = col;
        let mut pivot_mag = matrix[col * dim + col].abs();
        for row in col + 1..dim {
            let mag = matrix[row * dim + col].abs();
            if mag > pivot_mag {
                pivot_row = row;
                pivot_mag = mag;
            }
        }
        if pivot_mag == S::zero() {
            return Err(invalid("dense factorization hit a zero pivot"));
        }
        if pivot_row != col {
            for k in 0..dim {
                matrix.swap(col * dim + k, pivot_row * dim + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = matrix[col * dim + col];
        for row in col + 1..dim {
            let factor = matrix[row * dim + col] / pivot;
            if factor == S::zero() {
                continue;
            }
            matrix[row * dim + col] = S::zero();
            for k in col + 1..dim {
                let update = matrix[col * dim + k] * factor;
                matrix[row * dim + k] -= update;
            }
            rhs[row] = rhs[row] - factor * rhs[col];
        }
    }
    for row in (0..dim).rev() {
        let mut acc = rhs[row];
        for k in row + 1..dim {
            acc -= matrix[row * dim + k] * rhs[k];
        }
        rhs[row] = acc / matrix[row * dim + row];
    }
    Ok(())
}

fn relative_deviation<S: Real>(candidate: &[S], reference: &[S]) -> S {
    let mut diff_sq = S::zero();
    let mut ref_sq = S::zero();
    for (c, r) in candidate.iter().zip(reference) {
        diff_sq += (*c - *r) * (*c - *r);
        ref_sq += *r * *r;
    }
    if ref_sq == S::zero() {
        diff_sq.sqrt()
    } else {
        (diff_sq / ref_sq).sqrt()
    }
}

/// Cross-check the distributed solver against a dense solve of the same
/// reduced system. Limited to `modes * steps <=` [`DENSE_LIMIT_DISTRIBUTED`].
pub fn verify_ocp<S: Real>(cfg: &OcpConfig<S>) -> Result<OracleReport<S>> {
    cfg.validate()?;
    let dim = cfg.modes * cfg.grid.steps();
    if dim > DENSE_LIMIT_DISTRIBUTED {
        return Err(invalid(format!(
            "dense check limited to {DENSE_LIMIT_DISTRIBUTED} unknowns, got {dim}"
        )));
    }
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    let cells = cfg.grid.steps();
    let mut matrix = assemble(dim, |flat| {
        let control = ocp::unflatten(flat, cfg.modes, cells);
        Ok(ocp::flatten(&ocp::apply_reduced(
            &cfg.domain,
            &coupling,
            &cfg.grid,
            &control,
        )?))
    })?;
    let mut dense = ocp::flatten(&ocp::reduced_rhs(cfg, &coupling)?);
    solve_dense(&mut matrix, &mut dense)?;
    let iterative = ocp::flatten(&ocp::solve_ocp(cfg)?.control);
    Ok(OracleReport {
        dimension: dim,
        deviation: relative_deviation(&iterative, &dense),
    })
}

/// Cross-check the impulse solver for a given subdivision. Limited to
/// `modes * (n - 1) <=` [`DENSE_LIMIT_SUBDIVIDED`].
pub fn verify_impulse<S: Real>(cfg: &OcpConfig<S>, subdivision: usize) -> Result<OracleReport<S>> {
    cfg.validate()?;
    impulse::piece_cells(&cfg.grid, subdivision)?;
    let dim = cfg.modes * (subdivision - 1);
    if dim > DENSE_LIMIT_SUBDIVIDED {
        return Err(invalid(format!(
            "dense check limited to {DENSE_LIMIT_SUBDIVIDED} unknowns, got {dim}"
        )));
    }
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    let mut matrix = assemble(dim, |flat| {
        let impulses: ImpulseSequence<S> = impulse::unflatten_impulses(flat, cfg.modes);
        Ok(impulse::flatten_impulses(&impulse::apply_reduced_impulse(
            &cfg.domain,
            &coupling,
            &cfg.grid,
            &impulses,
        )?))
    })?;
    let mut dense = impulse::flatten_impulses(&impulse::reduced_rhs_impulse(
        cfg,
        &coupling,
        subdivision,
    )?);
    solve_dense(&mut matrix, &mut dense)?;
    let iterative = impulse::flatten_impulses(&impulse::solve_impulse(cfg, subdivision)?.impulses);
    Ok(OracleReport {
        dimension: dim,
        deviation: relative_deviation(&iterative, &dense),
    })
}

/// Cross-check the hold solver for a given subdivision. Limited to
/// `modes * n <=` [`DENSE_LIMIT_SUBDIVIDED`].
pub fn verify_sampled<S: Real>(cfg: &OcpConfig<S>, subdivision: usize) -> Result<OracleReport<S>> {
    cfg.validate()?;
    cfg.grid.cells_per_piece(subdivision)?;
    let dim = cfg.modes * subdivision;
    if dim > DENSE_LIMIT_SUBDIVIDED {
        return Err(invalid(format!(
            "dense check limited to {DENSE_LIMIT_SUBDIVIDED} unknowns, got {dim}"
        )));
    }
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    let mut matrix = assemble(dim, |flat| {
        let values = sampled::unflatten_fields(flat, cfg.modes);
        Ok(sampled::flatten_fields(&sampled::apply_reduced_sampled(
            &cfg.domain,
            &coupling,
            &cfg.grid,
            &values,
        )?))
    })?;
    let mut dense = sampled::flatten_fields(&sampled::reduced_rhs_sampled(
        cfg,
        &coupling,
        subdivision,
    )?);
    solve_dense(&mut matrix, &mut dense)?;
    let iterative = sampled::flatten_fields(&sampled::solve_sampled(cfg, subdivision)?.holds);
    Ok(OracleReport {
        dimension: dim,
        deviation: relative_deviation(&iterative, &dense),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::{SourceTrajectory, TimeGrid};
    use crate::rng::SplitMix64;
    use crate::spectral::{Domain1D, SpectralField};

    fn random_config(modes: usize, steps: usize, seed: u64) -> OcpConfig<f64> {
        let domain = Domain1D::unit(0.3, 0.8).unwrap();
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let mut rng = SplitMix64::new(seed);
        let target = SourceTrajectory::new(
            (0..steps)
                .map(|_| {
                    SpectralField::from_coeffs(
                        (0..modes).map(|_| rng.uniform_signed()).collect(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        OcpConfig::new(domain, grid, modes, target).unwrap()
    }

    #[test]
    fn lu_reproduces_a_known_solution() {
        let mut rng = SplitMix64::new(12);
        let dim = 12;
        let mut matrix = vec![0.0; dim * dim];
        for (i, entry) in matrix.iter_mut().enumerate() {
            let diag = if i % (dim + 1) == 0 { 1.0 } else { 0.0 };
            *entry = diag + 0.05 * rng.uniform_signed();
        }
        let x_true: Vec<f64> = (0..dim).map(|i| (i as f64) - 5.5).collect();
        let mut rhs = vec![0.0; dim];
        for i in 0..dim {
            for j in 0..dim {
                rhs[i] += matrix[i * dim + j] * x_true[j];
            }
        }
        let mut work = matrix.clone();
        solve_dense(&mut work, &mut rhs).unwrap();
        for (got, want) in rhs.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn lu_rejects_singular_systems() {
        let mut matrix = vec![1.0, 2.0, 2.0, 4.0];
        let mut rhs = vec![1.0, 2.0];
        assert!(solve_dense(&mut matrix, &mut rhs).is_err());
    }

    #[test]
    fn assembly_reproduces_a_fixed_matrix() {
        let reference = [3.0, -1.0, 0.5, 2.0, 0.0, -2.5, 1.0, 4.0, 1.5];
        let matrix = assemble(3, |v: &[f64]| {
            Ok((0..3)
                .map(|i| (0..3).map(|j| reference[i * 3 + j] * v[j]).sum())
                .collect())
        })
        .unwrap();
        assert_eq!(matrix.as_slice(), reference.as_slice());
    }

    #[test]
    fn distributed_solver_matches_dense_solve() {
        let cfg = random_config(2, 16, 100);
        let report = verify_ocp(&cfg).unwrap();
        assert_eq!(report.dimension, 32);
        assert!(report.deviation <= 1e-8, "deviation {}", report.deviation);
    }

    #[test]
    fn impulse_solver_matches_dense_solve() {
        let cfg = random_config(2, 16, 101);
        let report = verify_impulse(&cfg, 4).unwrap();
        assert_eq!(report.dimension, 6);
        assert!(report.deviation <= 1e-8, "deviation {}", report.deviation);
    }

    #[test]
    fn hold_solver_matches_dense_solve() {
        let cfg = random_config(2, 32, 102);
        let report = verify_sampled(&cfg, 4).unwrap();
        assert_eq!(report.dimension, 8);
        assert!(report.deviation <= 1e-8, "deviation {}", report.deviation);
    }

    #[test]
    fn oversize_requests_are_rejected() {
        let cfg = random_config(3, 256, 103);
        assert!(verify_ocp(&cfg).is_err());
        assert!(verify_impulse(&cfg, 32).is_err());
        assert!(verify_sampled(&cfg, 32).is_err());
    }
}
