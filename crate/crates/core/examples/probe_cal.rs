use std::time::Instant;

use ticket_core::harness::{calibrate, CalibrationFormula, CalibrationSpec};
use ticket_core::init::InitFamily;
use ticket_core::subsum::GroundLaw;

fn main() {
    let specs = [
        CalibrationSpec {
            formula: CalibrationFormula::WidthLinear,
            law: None,
            init: Some(InitFamily::Uniform),
            eps_grid: vec![0.15, 0.1, 0.07],
            delta_grid: vec![0.1, 0.2, 0.3],
            m: 1.0,
            h: 1.0,
            alpha: 1.0,
            trials: 25,
            master_seed: 1,
            max_subset: 5,
        },
        CalibrationSpec {
            formula: CalibrationFormula::WidthUnivariate,
            law: None,
            init: Some(InitFamily::Uniform),
            eps_grid: vec![0.15, 0.1, 0.07],
            delta_grid: vec![0.1, 0.2, 0.3],
            m: 1.0,
            h: 1.0,
            alpha: 1.0,
            trials: 25,
            master_seed: 1,
            max_subset: 5,
        },
        CalibrationSpec {
            formula: CalibrationFormula::Ground,
            law: Some(GroundLaw::ProductUniform),
            init: None,
            eps_grid: vec![0.1, 0.03, 0.01],
            delta_grid: vec![0.05, 0.1, 0.2],
            m: 1.0,
            h: 1.0,
            alpha: 0.25,
            trials: 200,
            master_seed: 1,
            max_subset: 5,
        },
    ];
    for spec in specs {
        let start = Instant::now();
        match calibrate(&spec) {
            Ok(cal) => println!(
                "{}: c={} evals={} at_floor={} ({:.1}s)",
                cal.formula,
                cal.c,
                cal.evaluations,
                cal.at_floor,
                start.elapsed().as_secs_f64()
            ),
            Err(e) => println!("{:?} failed: {e} ({:.1}s)", spec.formula, start.elapsed().as_secs_f64()),
        }
    }
}
