//! Factor maps between Bernoulli shifts over the free group `F = ⟨a, b⟩`,
//! made computable on finite Cayley-ball windows.
//!
//! * [`freegroup`]: reduced words, shortlex balls.
//! * [`config`]: alphabets, distributions, configurations and the shift action.
//! * [`factormaps`]: the doubling map, iterated bit-plane expansion, star map.
//! * [`coinduce`]: sections, cocycles, coinduced actions for `⟨a⟩ ≤ F`.
//! * [`entropy`]: Shannon entropy and the entropy-boosting recursion.
//! * [`verify`]: exact and Monte Carlo pushforward checks, property drivers.
//! * [`pipeline`]: chain plans and execution.
//! * [`acceptance`]: the end-to-end criteria run by `fshift selftest`.

#![forbid(unsafe_code)]

pub mod acceptance;
pub mod coinduce;
pub mod config;
pub mod entropy;
pub mod factormaps;
pub mod freegroup;
pub mod pipeline;
pub mod verify;

pub use config::{Alphabet, Configuration, Distribution, Symbol};
pub use factormaps::{FactorMap, MapSpec, WindowCost};
pub use freegroup::{ball, GroupElement, Generator, SiteSet};
