//! End-to-end link simulation: CP-OFDM reference, BER Monte-Carlo, PSD
//! estimation and results persistence.

mod analytic;
mod ber;
mod link;
mod psd;
mod results;

pub use analytic::{crossing_db, gap_db, q_function, qpsk_ber, qpsk_ber_mean};
pub use ber::{
    run_ber, run_point, BerRecord, ChannelSource, CsiMode, Scenario, ScenarioFile, StopReason, StopRule, SystemId,
};
pub use link::{cp_ofdm_reference, CpOfdmConfig, Detector, Link, UW_ENERGY_RATIO};
pub use psd::{run_psd, PsdCurve, PsdOptions, PSD_HEADER};
pub use results::{
    curves, export_results, load_results, parse_results, plot_data, write_results, CURVE_HEADER, RESULTS_HEADER,
};
