//! Run configuration: an optional TOML file merged with command-line
//! overrides, then validated up front so a bad run never writes partial
//! output. Validation aggregates every violation into one message.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

/// Raw contents of the configuration file. Every key is optional; absent
/// keys fall back to per-command defaults. Unknown keys are rejected so a
/// typo cannot silently run with defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub length: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub horizon: Option<f64>,
    pub modes: Option<usize>,
    pub timesteps: Option<usize>,
    pub subdivision: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
    pub target: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub deltas: Option<Vec<f64>>,
    pub lemma_exponents: Option<Vec<f64>>,
    pub spans: Option<Vec<f64>>,
    pub response_modes: Option<usize>,
    pub epsilons: Option<Vec<f64>>,
    pub mollifier_exponents: Option<Vec<f64>>,
    pub mollifier_grid: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("cannot parse config file {}: {e}", path.display()))
        })
    }
}

/// Command-line values that beat the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_list: Option<Vec<usize>>,
    pub modes: Option<usize>,
    pub timesteps: Option<usize>,
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Default,
    Zero,
    Random,
}

impl TargetKind {
    pub fn label(self) -> &'static str {
        match self {
            TargetKind::Default => "default",
            TargetKind::Zero => "zero",
            TargetKind::Random => "random",
        }
    }

    fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "default" => Ok(Self::Default),
            "zero" => Ok(Self::Zero),
            "random" => Ok(Self::Random),
            other => Err(CliError::Config(format!(
                "unknown target \"{other}\" (expected \"default\", \"zero\", or \"random\")"
            ))),
        }
    }
}

/// Parameters of the `lemmas` decay experiments.
#[derive(Debug, Clone)]
pub struct LemmaParams {
    /// Regularization spans for the impulse-vs-source comparison.
    pub deltas: Vec<f64>,
    /// Time-norm exponents for that comparison.
    pub exponents: Vec<f64>,
    /// Elapsed times for the short-time window response.
    pub spans: Vec<f64>,
    /// Mode count for the window response (needs many to resolve the
    /// indicator discontinuity).
    pub response_modes: usize,
    /// Kernel widths for the mollified indicator.
    pub epsilons: Vec<f64>,
    /// Space-norm exponents for the mollifier study.
    pub mollifier_exponents: Vec<f64>,
    /// Sampling resolution for the mollifier study.
    pub mollifier_grid: usize,
}

/// Fallback problem sizes. The oracle command uses small ones so its dense
/// factorizations stay inside their size limits.
pub struct SizeDefaults {
    pub modes: usize,
    pub timesteps: usize,
    pub subdivision: usize,
}

pub const SOLVER_SIZES: SizeDefaults = SizeDefaults {
    modes: 32,
    timesteps: 512,
    subdivision: 8,
};

pub const ORACLE_SIZES: SizeDefaults = SizeDefaults {
    modes: 4,
    timesteps: 64,
    subdivision: 4,
};

/// Fully resolved configuration a command runs with.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub length: f64,
    pub window: (f64, f64),
    pub horizon: f64,
    pub modes: usize,
    pub timesteps: usize,
    pub subdivision: usize,
    pub n_list: Vec<usize>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub target: TargetKind,
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,
    pub lemmas: LemmaParams,
}

/// Which config sections a command relies on; only those are validated, so
/// for example a bad `n_list` cannot block a plain solve.
pub struct Needs {
    pub subdivision: bool,
    pub hold: bool,
    pub n_list: bool,
    pub lemmas: bool,
}

impl Needs {
    pub const BASE: Needs = Needs {
        subdivision: false,
        hold: false,
        n_list: false,
        lemmas: false,
    };
    pub const IMPULSE: Needs = Needs {
        subdivision: true,
        ..Needs::BASE
    };
    pub const SAMPLED: Needs = Needs {
        subdivision: true,
        hold: true,
        ..Needs::BASE
    };
    /// The oracle runs all three solvers, so it needs the hold constraint
    /// too.
    pub const ORACLE: Needs = Needs::SAMPLED;
    pub const STUDY: Needs = Needs {
        n_list: true,
        ..Needs::BASE
    };
    pub const LEMMAS: Needs = Needs {
        lemmas: true,
        ..Needs::BASE
    };
}

impl RunConfig {
    pub fn resolve(
        file: FileConfig,
        over: Overrides,
        sizes: &SizeDefaults,
    ) -> Result<Self, CliError> {
        let horizon = file.horizon.unwrap_or(1.0);
        let target = match file.target.as_deref() {
            None => TargetKind::Default,
            Some(name) => TargetKind::parse(name)?,
        };
        let window = file.window.unwrap_or([0.3, 0.8]);
        let lemmas = LemmaParams {
            deltas: file
                .deltas
                .unwrap_or_else(|| (4..=10).map(|i| horizon * 0.5f64.powi(i)).collect()),
            exponents: file.lemma_exponents.unwrap_or_else(|| vec![2.0, 4.0]),
            spans: file
                .spans
                .unwrap_or_else(|| (0..7).map(|k| 1e-4 * 2.0f64.powi(k)).collect()),
            response_modes: file.response_modes.unwrap_or(384),
            epsilons: file
                .epsilons
                .unwrap_or_else(|| (4..=8).map(|i| 0.5f64.powi(i)).collect()),
            mollifier_exponents: file.mollifier_exponents.unwrap_or_else(|| vec![1.0, 2.0, 4.0]),
            mollifier_grid: file.mollifier_grid.unwrap_or(8193),
        };
        let out = match over.out {
            Some(dir) => dir,
            None => PathBuf::from(file.out.as_deref().unwrap_or("out")),
        };
        Ok(Self {
            length: file.length.unwrap_or(1.0),
            window: (window[0], window[1]),
            horizon,
            modes: over.modes.or(file.modes).unwrap_or(sizes.modes),
            timesteps: over.timesteps.or(file.timesteps).unwrap_or(sizes.timesteps),
            subdivision: file.subdivision.unwrap_or(sizes.subdivision),
            n_list: over.n_list.or(file.n_list).unwrap_or_else(|| vec![8, 16, 32, 64]),
            cg_tol: file.cg_tol.unwrap_or(1e-10),
            cg_max_iter: file.cg_max_iter.unwrap_or(500),
            target,
            seed: over.seed.or(file.seed).unwrap_or(42),
            out,
            quiet: over.quiet,
            lemmas,
        })
    }

    pub fn validate(&self, needs: &Needs) -> Result<(), CliError> {
        let mut violations: Vec<String> = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                violations.push(msg);
            }
        };

        check(
            self.length.is_finite() && self.length > 0.0,
            format!("length must be positive and finite, got {}", self.length),
        );
        let (a, b) = self.window;
        let window_ok =
            a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= self.length;
        check(
            window_ok,
            format!("window must satisfy 0 <= lo < hi <= length, got ({a}, {b})"),
        );
        check(
            self.horizon.is_finite() && self.horizon > 0.0,
            format!("horizon must be positive and finite, got {}", self.horizon),
        );
        check(self.modes >= 1, "modes must be at least 1".to_string());
        check(self.timesteps >= 1, "timesteps must be at least 1".to_string());
        check(
            self.cg_tol.is_finite() && self.cg_tol > 0.0,
            format!("cg_tol must be positive and finite, got {}", self.cg_tol),
        );
        check(self.cg_max_iter >= 1, "cg_max_iter must be at least 1".to_string());

        if needs.subdivision {
            check(
                self.subdivision >= 2,
                format!("subdivision must be at least 2, got {}", self.subdivision),
            );
            if self.subdivision >= 2 {
                let divides = self.timesteps % self.subdivision == 0;
                check(
                    divides,
                    format!(
                        "subdivision {} does not divide timesteps {}",
                        self.subdivision, self.timesteps
                    ),
                );
                if needs.hold && divides {
                    check(
                        self.timesteps / self.subdivision >= 8,
                        format!(
                            "hold problems need at least 8 cells per interval, got {}",
                            self.timesteps / self.subdivision
                        ),
                    );
                }
            }
        }

        if needs.n_list {
            let mut distinct = self.n_list.clone();
            distinct.sort_unstable();
            distinct.dedup();
            check(
                distinct.len() >= 4,
                format!(
                    "n_list needs at least 4 distinct entries, got {}",
                    distinct.len()
                ),
            );
            for &n in &distinct {
                if n < 2 {
                    check(false, format!("n_list entry {n} must be at least 2"));
                } else if self.timesteps % n != 0 {
                    check(
                        false,
                        format!("n_list entry {n} does not divide timesteps {}", self.timesteps),
                    );
                } else if self.timesteps / n < 8 {
                    check(
                        false,
                        format!(
                            "n_list entry {n} leaves fewer than 8 cells per interval (got {})",
                            self.timesteps / n
                        ),
                    );
                }
            }
        }

        if needs.lemmas {
            let l = &self.lemmas;
            check(!l.deltas.is_empty(), "deltas must not be empty".to_string());
            for &d in &l.deltas {
                check(
                    d.is_finite() && d > 0.0 && d < self.horizon,
                    format!("delta {d} must lie inside (0, horizon)"),
                );
            }
            check(
                !l.exponents.is_empty(),
                "lemma_exponents must not be empty".to_string(),
            );
            for &p in &l.exponents {
                check(
                    p.is_finite() && p >= 1.0,
                    format!("lemma exponent {p} must be finite and at least 1"),
                );
            }
            check(!l.spans.is_empty(), "spans must not be empty".to_string());
            for &s in &l.spans {
                check(
                    s.is_finite() && s > 0.0,
                    format!("span {s} must be positive and finite"),
                );
            }
            check(
                l.response_modes >= 256,
                format!(
                    "response_modes must be at least 256 to resolve the window edges, got {}",
                    l.response_modes
                ),
            );
            check(!l.epsilons.is_empty(), "epsilons must not be empty".to_string());
            for &e in &l.epsilons {
                let narrow_enough = !window_ok || e < (b - a) / 2.0;
                check(
                    e.is_finite() && e > 0.0 && narrow_enough,
                    format!("epsilon {e} must satisfy 0 < eps < half the window width"),
                );
            }
            check(
                !l.mollifier_exponents.is_empty(),
                "mollifier_exponents must not be empty".to_string(),
            );
            for &p in &l.mollifier_exponents {
                check(
                    p.is_finite() && p >= 1.0,
                    format!("mollifier exponent {p} must be finite and at least 1"),
                );
            }
            check(
                l.mollifier_grid >= 2,
                "mollifier_grid must be at least 2".to_string(),
            );
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "invalid configuration: {}",
                violations.join("; ")
            )))
        }
    }
}
