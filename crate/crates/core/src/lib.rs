//! Single-qubit pure dephasing in a bosonic bath under instantaneous
//! bit-flip pulse sequences.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: bath spectral densities and the thermal kernel `eta(omega)`.
//! - [`quadrature`]: adaptive Gauss-Kronrod integration used by every
//!   frequency integral.
//! - [`decoherence`]: direct frequency-domain evaluation of the decoherence
//!   function (free, controlled, stroboscopic PDD, band-limited parts).
//! - [`recursion`]: the representation of controlled dephasing purely in
//!   terms of the free decoherence function, differential dephasing and
//!   its asymptotic value.
//! - [`sequences`]: protocol generators (PDD, CPDD, CDD, PCDD, UDD and
//!   interpolated CP sequences) on an exact tick lattice.
//! - [`magnus`]: first- and second-order Magnus coefficients of the toggled
//!   dephasing Hamiltonian.
//! - [`analysis`]: effective T2, long-time coherence model, protocol
//!   comparison and readout robustness.
//!
//! All internal computation uses natural units (`hbar = k_B = 1`). In the
//! physical unit system times are picoseconds and frequencies are rad/ps.

pub mod analysis;
pub mod decoherence;
pub mod error;
pub mod export;
pub mod magnus;
pub mod quadrature;
pub mod recursion;
pub mod sequences;
pub mod spectral;
pub mod units;

pub use error::{Error, Result};
