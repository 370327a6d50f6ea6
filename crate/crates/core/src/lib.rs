//! Life-cycle retirement model with uncertain state pension age, solved under
//! rational expectations and under rational inattention, plus simulation,
//! belief tracking and the reduced-form regressions run on simulated panels.

mod bellman;
pub mod discretization;
pub mod econometrics;
pub mod error;
pub mod beliefs;
pub mod model;
pub mod re_solver;
pub mod ri_solver;
pub mod simulator;
pub mod space;
pub mod toys;

pub use error::{Error, Result};
pub use re_solver::{solve_re, SolutionRe};
pub use ri_solver::{solve_ri, SolutionRi};
pub use space::{Calibration, Decision, Model, SpaSlot, StateSpace, WPoint};
