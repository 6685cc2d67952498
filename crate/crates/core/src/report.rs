//! Deterministic CSV and JSON emission.
//!
//! Every float is printed with 17 significant digits (`{:.16e}`), which
//! round-trips bit-exactly, so identical inputs always serialize to
//! identical bytes. JSON is hand-assembled with fixed key order for the
//! same reason; the builders here keep that assembly in one place.

use crate::analysis::{ConvergenceReport, DecayCurve, ErrorRecord};
use crate::error::Result;
use crate::heat::{ImpulseSequence, SourceTrajectory, TimeGrid, Trajectory};
use crate::real::Real;
use crate::spectral::SpectralField;

/// Shortest decimal form that round-trips every binary64 value: one digit
/// before the point, sixteen after.
pub fn sig17<S: Real>(x: S) -> String {
    format!("{:.16e}", x)
}

/// JSON string literal with the mandatory escapes.
pub fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// JSON number fragment (17 significant digits, `e` notation).
pub fn json_number<S: Real>(x: S) -> String {
    sig17(x)
}

/// JSON object fragment from pre-encoded values, keys kept in the order
/// given.
pub fn json_object(pairs: &[(&str, String)]) -> String {
    let body: Vec<String> = pairs
        .iter()
        .map(|(k, v)| format!("{}:{}", json_string(k), v))
        .collect();
    format!("{{{}}}", body.join(","))
}

/// JSON array fragment from pre-encoded values.
pub fn json_array<I: IntoIterator<Item = String>>(items: I) -> String {
    let body: Vec<String> = items.into_iter().collect();
    format!("[{}]", body.join(","))
}

/// Column order of the study CSV. Documented here and in the README; the
/// acceptance artifacts are diffed byte for byte, so this never changes
/// silently.
pub const RECORD_COLUMNS: &str =
    "problem,n,h,control_error_l2,state_error_l2,state_error_l4,state_error_linf,cost_gap";

/// Study records as CSV, one row per record, in the order given.
pub fn records_csv<S: Real>(records: &[ErrorRecord<S>]) -> String {
    let mut out = String::new();
    out.push_str(RECORD_COLUMNS);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.problem.label(),
            r.subdivision,
            sig17(r.h),
            sig17(r.control_error_l2),
            sig17(r.state_error_l2),
            sig17(r.state_error_l4),
            sig17(r.state_error_linf),
            sig17(r.cost_gap),
        ));
    }
    out
}

/// Full study report as a single-line JSON document.
pub fn report_json<S: Real>(report: &ConvergenceReport<S>) -> String {
    let setup = json_object(&[
        ("modes", report.setup.modes.to_string()),
        ("timesteps", report.setup.timesteps.to_string()),
        ("horizon", json_number(report.setup.horizon)),
        (
            "window",
            json_array([
                json_number(report.setup.window.0),
                json_number(report.setup.window.1),
            ]),
        ),
        ("cg_tol", json_number(report.setup.cg_tol)),
        (
            "n_values",
            json_array(report.setup.n_values.iter().map(|n| n.to_string())),
        ),
    ]);
    let baseline = json_object(&[
        ("cost", json_number(report.baseline_cost)),
        ("iterations", report.baseline_iterations.to_string()),
    ]);
    let records = json_array(report.records.iter().map(|r| {
        json_object(&[
            ("problem", json_string(r.problem.label())),
            ("n", r.subdivision.to_string()),
            ("h", json_number(r.h)),
            ("control_error_l2", json_number(r.control_error_l2)),
            ("state_error_l2", json_number(r.state_error_l2)),
            ("state_error_l4", json_number(r.state_error_l4)),
            ("state_error_linf", json_number(r.state_error_linf)),
            ("cost_gap", json_number(r.cost_gap)),
        ])
    }));
    let slopes = json_array(report.slopes.iter().map(|s| {
        json_object(&[
            ("metric", json_string(s.metric)),
            ("rate", json_number(s.rate)),
            ("threshold", json_number(s.threshold)),
            ("slope", json_number(s.slope)),
            ("excluded", s.excluded.to_string()),
            ("pass", s.pass.to_string()),
        ])
    }));
    json_object(&[
        ("setup", setup),
        ("baseline", baseline),
        ("records", records),
        ("slopes", slopes),
        (
            "sampled_cost_dominates",
            report.sampled_cost_dominates.to_string(),
        ),
        ("degenerate", report.degenerate.to_string()),
        ("pass", report.pass.to_string()),
    ])
}

/// Decay curves as CSV: one row per `(scale, error)` point.
pub fn curves_csv<S: Real>(rows: &[(&str, &DecayCurve<S>)]) -> String {
    let mut out = String::from("experiment,exponent,scale,error\n");
    for (name, curve) in rows {
        for &(scale, error) in &curve.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                name,
                sig17(curve.exponent),
                sig17(scale),
                sig17(error),
            ));
        }
    }
    out
}

/// Decay curves as a JSON array with fitted slopes (`null` when every
/// error vanished).
pub fn curves_json<S: Real>(rows: &[(&str, &DecayCurve<S>)]) -> String {
    json_array(rows.iter().map(|(name, curve)| {
        json_object(&[
            ("experiment", json_string(name)),
            ("exponent", json_number(curve.exponent)),
            (
                "slope",
                curve
                    .slope
                    .map_or_else(|| "null".to_string(), json_number),
            ),
            ("excluded", curve.excluded.to_string()),
            (
                "points",
                json_array(curve.points.iter().map(|&(scale, error)| {
                    json_object(&[
                        ("scale", json_number(scale)),
                        ("error", json_number(error)),
                    ])
                })),
            ),
        ])
    }))
}

fn mode_header(modes: usize) -> String {
    (1..=modes)
        .map(|k| format!("mode_{k}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn coeff_row<S: Real>(field: &SpectralField<S>) -> String {
    field
        .coeffs()
        .iter()
        .map(|c| sig17(*c))
        .collect::<Vec<_>>()
        .join(",")
}

/// Nodal trajectory as CSV: `node,t,mode_1..mode_K`.
pub fn trajectory_csv<S: Real>(traj: &Trajectory<S>, grid: &TimeGrid<S>) -> String {
    let mut out = format!("node,t,{}\n", mode_header(traj.modes()));
    for (m, node) in traj.nodes().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            m,
            sig17(grid.node_time(m)),
            coeff_row(node),
        ));
    }
    out
}

/// Cellwise source as CSV with midpoint times: `cell,t,mode_1..mode_K`.
pub fn source_csv<S: Real>(src: &SourceTrajectory<S>, grid: &TimeGrid<S>) -> String {
    let mut out = format!("cell,t,{}\n", mode_header(src.modes()));
    let half = S::of(0.5);
    for (m, cell) in src.cells().iter().enumerate() {
        let t = grid.dt() * (S::of_usize(m) + half);
        out.push_str(&format!("{},{},{}\n", m, sig17(t), coeff_row(cell)));
    }
    out
}

/// Impulse sequence as CSV with firing times `i T / n`:
/// `impulse,t,mode_1..mode_K`.
pub fn impulses_csv<S: Real>(
    impulses: &ImpulseSequence<S>,
    grid: &TimeGrid<S>,
    subdivision: usize,
) -> Result<String> {
    grid.cells_per_piece(subdivision)?;
    let h = grid.horizon() / S::of_usize(subdivision);
    let mut out = format!("impulse,t,{}\n", mode_header(impulses.modes()));
    for (i, v) in impulses.impulses().iter().enumerate() {
        let t = h * S::of_usize(i + 1);
        out.push_str(&format!("{},{},{}\n", i + 1, sig17(t), coeff_row(v)));
    }
    Ok(out)
}

/// Hold values as CSV with their intervals:
/// `interval,t_start,t_end,mode_1..mode_K`.
pub fn holds_csv<S: Real>(holds: &[SpectralField<S>], grid: &TimeGrid<S>) -> Result<String> {
    grid.cells_per_piece(holds.len())?;
    let h = grid.horizon() / S::of_usize(holds.len());
    let modes = holds.first().map_or(0, |f| f.modes());
    let mut out = format!("interval,t_start,t_end,{}\n", mode_header(modes));
    for (i, v) in holds.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i,
            sig17(h * S::of_usize(i)),
            sig17(h * S::of_usize(i + 1)),
            coeff_row(v),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ProblemKind;
    use crate::rng::SplitMix64;

    #[test]
    fn seventeen_digits_round_trip_exactly() {
        assert_eq!(sig17(1.0), "1.0000000000000000e0");
        assert_eq!(sig17(0.1), "1.0000000000000001e-1");
        assert_eq!(sig17(-2.5e-3), "-2.5000000000000001e-3");
        assert_eq!(sig17(-0.25e-2), sig17(-2.5e-3));
        assert_eq!(sig17(0.0), "0.0000000000000000e0");

        let mut rng = SplitMix64::new(7);
        for _ in 0..200 {
            let x = (rng.uniform_signed() * 1e6).exp() * rng.uniform_signed();
            let back: f64 = sig17(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x}");
        }
    }

    #[test]
    fn json_fragments_compose_with_fixed_ordering() {
        assert_eq!(json_string("a\"b\\c\nd"), "\"a\\\"b\\\\c\\nd\"");
        let obj = json_object(&[
            ("b", "1".to_string()),
            ("a", json_string("x")),
            ("c", json_array(["true".to_string(), "null".to_string()])),
        ]);
        assert_eq!(obj, "{\"b\":1,\"a\":\"x\",\"c\":[true,null]}");
    }

    #[test]
    fn record_csv_matches_the_documented_layout() {
        let records = vec![
            ErrorRecord {
                problem: ProblemKind::Impulse,
                subdivision: 4,
                h: 0.25,
                control_error_l2: 1.0,
                state_error_l2: 0.5,
                state_error_l4: 0.25,
                state_error_linf: 0.125,
                cost_gap: 0.0625,
            },
            ErrorRecord {
                problem: ProblemKind::Sampled,
                subdivision: 8,
                h: 0.125,
                control_error_l2: 2.0,
                state_error_l2: 1.0,
                state_error_l4: 0.5,
                state_error_linf: 0.25,
                cost_gap: 0.125,
            },
        ];
        let csv = records_csv(&records);
        let expect = "problem,n,h,control_error_l2,state_error_l2,state_error_l4,state_error_linf,cost_gap\n\
            impulse,4,2.5000000000000000e-1,1.0000000000000000e0,5.0000000000000000e-1,2.5000000000000000e-1,1.2500000000000000e-1,6.2500000000000000e-2\n\
            sampled,8,1.2500000000000000e-1,2.0000000000000000e0,1.0000000000000000e0,5.0000000000000000e-1,2.5000000000000000e-1,1.2500000000000000e-1\n";
        assert_eq!(csv, expect);
    }

    #[test]
    fn curve_serialization_handles_flat_curves() {
        let live = DecayCurve {
            exponent: 2.0,
            points: vec![(0.5, 0.25), (0.25, 0.125)],
            slope: Some(1.0),
            excluded: 0,
        };
        let flat = DecayCurve {
            exponent: 4.0,
            points: vec![(0.5, 0.0)],
            slope: None,
            excluded: 1,
        };
        let csv = curves_csv(&[("alpha", &live), ("beta", &flat)]);
        assert!(csv.starts_with("experiment,exponent,scale,error\n"));
        assert_eq!(csv.lines().count(), 4);
        let json = curves_json(&[("alpha", &live), ("beta", &flat)]);
        assert!(json.contains("\"slope\":null"));
        assert!(json.contains("\"slope\":1.0000000000000000e0"));
        assert!(json.starts_with('[') && json.ends_with(']'));
    }

    #[test]
    fn trajectory_tables_carry_times_and_modes() {
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let traj = Trajectory::new(
            (0..=4)
                .map(|m| SpectralField::from_coeffs(vec![m as f64, 1.0]).unwrap())
                .collect(),
        )
        .unwrap();
        let csv = trajectory_csv(&traj, &grid);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "node,t,mode_1,mode_2");
        assert_eq!(lines.len(), 6);
        assert!(lines[2].starts_with("1,5.0000000000000000e-1,1.0000000000000000e0"));

        let src = SourceTrajectory::zeros(2, 4);
        let csv = source_csv(&src, &grid);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cell,t,mode_1,mode_2");
        assert!(lines[1].starts_with("0,2.5000000000000000e-1,"));

        let impulses = ImpulseSequence::new(vec![
            SpectralField::from_coeffs(vec![1.0, 0.0]).unwrap(),
            SpectralField::from_coeffs(vec![0.0, 1.0]).unwrap(),
            SpectralField::from_coeffs(vec![2.0, 2.0]).unwrap(),
        ])
        .unwrap();
        let csv = impulses_csv(&impulses, &grid, 4).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "impulse,t,mode_1,mode_2");
        assert!(lines[1].starts_with("1,5.0000000000000000e-1,"));
        assert!(lines[3].starts_with("3,1.5000000000000000e0,"));

        let holds = vec![SpectralField::zeros(2), SpectralField::zeros(2)];
        let csv = holds_csv(&holds, &grid, ).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "interval,t_start,t_end,mode_1,mode_2");
        assert!(lines[2].starts_with("1,1.0000000000000000e0,2.0000000000000000e0,"));
    }
}
