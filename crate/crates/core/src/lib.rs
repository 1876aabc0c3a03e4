pub mod dgp;
pub mod error;
pub mod estimators;
pub mod manifest;
pub mod missingness;
pub mod output;
pub mod prob;
pub mod rng;
pub mod runner;
pub mod samples;
pub mod scenario;
pub mod schedule;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/population.md")]
    mod population {}
    #[doc = include_str!("../../../book/src/missingness.md")]
    mod missingness {}
    #[doc = include_str!("../../../book/src/samples.md")]
    mod samples {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
    #[doc = include_str!("../../../book/src/schedules.md")]
    mod schedules {}
}
