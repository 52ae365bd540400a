pub mod bounds;
pub mod cuts;
pub mod engine;
pub mod error;
pub mod heuristic;
pub mod instance;
pub mod lp;
pub mod oracle;

pub use error::{Error, Result};
pub use instance::{DistanceMode, Instance, RadiusSet};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Instances, "instances.md");
    chapter!(Formulations, "formulations.md");
    chapter!(LiftedCuts, "lifted-cuts.md");
    chapter!(LowerBounds, "lower-bounds.md");
    chapter!(BranchAndCut, "branch-and-cut.md");
    chapter!(LpEngine, "lp-engine.md");
    chapter!(Cli, "cli.md");
}
