pub mod four_state;
pub mod gaudin;
pub mod landau_zener;
pub mod tavis_cummings;

pub use four_state::{
    four_state_diabatic_energies, four_state_h0, four_state_h1, four_state_h_tau, four_state_h_tau_explicit,
    FourStateFamily, FourStateParams,
};
pub use gaudin::{gaudin_family, GaudinFamily, GaudinParams};
pub use landau_zener::{lz_two_state, LandauZenerFamily, LandauZenerParams};
pub use tavis_cummings::{tavis_cummings_family, TavisCummingsFamily, TcParams, TcSector};
