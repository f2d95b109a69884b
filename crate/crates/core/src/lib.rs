pub mod agent;
pub mod env;
pub mod error;
pub mod fsio;
pub mod kv;
pub mod metrics;
pub mod population;
pub mod ppo;
pub mod probe;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/agent.md")]
    mod agent {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/probe.md")]
    mod probe {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
