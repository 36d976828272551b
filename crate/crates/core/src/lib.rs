pub mod error;
pub mod linalg;
mod optim;

pub use error::{Error, Result};
pub mod channelcore;

pub use channelcore::{apply_channel, choi_of_kraus, state_fidelity, worst_case_fidelity, Channel, HermitianMatrix, PureState};
pub mod freesets;
pub mod monotones;
pub mod scenarios;
pub mod superchannels;
pub mod tasks;
pub mod io;

pub use freesets::{DimClass, Exactness, FreeSetDescriptor};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/freesets.md")]
    mod freesets {}
    #[doc = include_str!("../../../book/src/monotones.md")]
    mod monotones {}
    #[doc = include_str!("../../../book/src/superchannels.md")]
    mod superchannels {}
    #[doc = include_str!("../../../book/src/tasks.md")]
    mod tasks {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
