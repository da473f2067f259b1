//! Fixtures and property suites shared by the integration test targets.
#![allow(dead_code)]

pub mod props;

use purcellkit::{CoupledSystem, Directions, EmitterSpec, Preset, ResonatorSpec};

/// n_g·L of the fabricated ring (FSR ≈ 1.92 nm at 610 nm).
pub const RING_NG_L: f64 = 193_830.0;

pub fn ring(q_i: f64, q_c: f64, q_sc: Option<f64>, wavelength: f64) -> ResonatorSpec {
    ResonatorSpec {
        center_wavelength: wavelength,
        group_index_times_length: RING_NG_L,
        q_intrinsic: q_i,
        q_coupling: q_c,
        q_scatter: q_sc,
        mode_volume: 30.0,
        cavity_index: 1.95,
        reference_resonance: wavelength,
    }
}

/// The fabricated device: loaded Q 1512 from the 3560 / 9700 / 3605 budget,
/// room-temperature hBN, one collected port.
pub fn paper_device() -> CoupledSystem {
    let mut sys = CoupledSystem::new(
        ring(3560.0, 9700.0, Some(3605.0), 610.0),
        Preset::HbnRt.spec(),
    )
    .unwrap();
    sys.collection_directions = Directions::One;
    sys
}

/// `emitter` on a ring resonant at its ZPL with the given intrinsic Q and
/// loaded Q.
pub fn tuned_system(emitter: EmitterSpec, q_i: f64, q_loaded: f64) -> CoupledSystem {
    let res = ring(q_i, 1.0, None, emitter.zpl_wavelength)
        .with_loaded_q(q_loaded)
        .unwrap();
    CoupledSystem::new(res, emitter).unwrap()
}
