//! Magnetic-field maps of transition energies, field sensitivities,
//! transition probabilities and estimated coherence times for a spin-1
//! defect hyperfine-coupled to nuclear spins. The default system is the
//! negatively charged boron vacancy in hBN with its three first-shell ¹⁴N.

pub mod analytic;
pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod flags;
pub mod hamiltonian;
pub mod io;
pub mod response;
pub mod spectra;
pub mod spin;
pub mod sweep;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use flags::Flags;
pub use hamiltonian::{build_hamiltonian, default_vb_system, field_vector, FieldPoint, HamiltonianModel, NucleusSpec, SpinSystem};
pub use response::{estimate_t2, sensitivities, NoiseModel, ResponseOptions, Selector, SensitivityResult};
pub use spectra::{eigensystem, match_states, transitions, EigenSystem, TransitionRecord};
pub use spin::{embed, rotate_tensor_about_z, spin_operators, RankTwoTensor, SpinOperatorSet};
pub use sweep::{run_sweep, spectrum_sweep, Quantity, SweepDataset, SweepGrid, SweepSettings};
