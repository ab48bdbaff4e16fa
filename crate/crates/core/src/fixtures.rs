//! Bundled synthetic systems used by the tests and as CLI examples.

use crate::pipeline::System;

pub const DIMER: &str = include_str!("../data/dimer.json");
pub const HEXAMER: &str = include_str!("../data/hexamer.json");
/// The dimer's properties and gradients at its reference geometry, as
/// written by [`crate::model::write_tabulated`].
pub const DIMER_TABULATED: &str = include_str!("../data/dimer_tabulated.json");

/// Two monomers in a near head-to-tail arrangement, strongly enough coupled
/// that a one-Ry-per-wire entangler leaves large response terms.
pub fn dimer() -> System {
    System::parse_synthetic(DIMER).expect("bundled dimer parses")
}

/// Six monomers along a chain.
pub fn hexamer() -> System {
    System::parse_synthetic(HEXAMER).expect("bundled hexamer parses")
}
