//! Shipped benchmark problems, embedded so that the verification suite can
//! run from any working directory. The same JSON files live under
//! `benchmarks/` in the repository root for use with the CLI.

use crate::model::{problem_from_json, MotionProblem};

macro_rules! embedded {
    ($name:ident, $file:literal) => {
        pub fn $name() -> MotionProblem {
            problem_from_json(
                include_str!(concat!("../../../benchmarks/", $file)),
                $file,
            )
            .expect("embedded benchmark validates")
        }
    };
}

embedded!(two_bar_truss, "two_bar_truss.json");
embedded!(two_bar_truss_shifted, "two_bar_truss_shifted.json");
embedded!(high_two_bar_truss, "high_two_bar_truss.json");
embedded!(multi_snap_truss, "multi_snap_truss.json");
embedded!(kinematic_truss, "kinematic_truss.json");
embedded!(quad_fold, "quad_fold.json");
embedded!(arch_q1, "arch_q1.json");
embedded!(arch_eas, "arch_eas.json");
embedded!(staged_truss, "staged_truss.json");

/// All embedded benchmarks with their names.
pub fn all() -> Vec<(&'static str, MotionProblem)> {
    vec![
        ("two_bar_truss", two_bar_truss()),
        ("two_bar_truss_shifted", two_bar_truss_shifted()),
        ("high_two_bar_truss", high_two_bar_truss()),
        ("multi_snap_truss", multi_snap_truss()),
        ("kinematic_truss", kinematic_truss()),
        ("quad_fold", quad_fold()),
        ("arch_q1", arch_q1()),
        ("arch_eas", arch_eas()),
        ("staged_truss", staged_truss()),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_benchmarks_validate() {
        for (name, problem) in super::all() {
            problem.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn benchmarks_round_trip_through_serialization() {
        for (name, problem) in super::all() {
            let text = problem.to_json();
            let back = crate::model::problem_from_json(&text, name)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(problem, back, "{name} round trip");
        }
    }
}
