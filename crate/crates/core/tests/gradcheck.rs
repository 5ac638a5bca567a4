//! Backward passes against central finite differences of f64 reference
//! forwards.

mod common;

use bitexpand::model::BitNetConfig;
use common::checks::*;

const LAYER_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;

#[test]
fn conv2d_backward() {
    for (i, (s, d)) in [(1, 1), (1, 2), (2, 1), (2, 2)].into_iter().enumerate() {
        let e = conv_grad_case(false, s, d, 100 + i as u64);
        assert!(e < LAYER_TOL, "stride {s} dilation {d}: {e:.2e}");
    }
}

#[test]
fn transposed_conv2d_backward() {
    for seed in [7, 8, 9] {
        let e = conv_grad_case(true, 2, 1, seed);
        assert!(e < LAYER_TOL, "seed {seed}: {e:.2e}");
    }
}

#[test]
fn leaky_relu_backward() {
    assert!(leaky_grad_case(3) < LAYER_TOL);
}

#[test]
fn bilinear_backward() {
    for (i, (oh, ow)) in [(12, 12), (7, 11), (6, 6)].into_iter().enumerate() {
        let e = bilinear_grad_case(oh, ow, 40 + i as u64);
        assert!(e < LAYER_TOL, "{oh}x{ow}: {e:.2e}");
    }
}

#[test]
fn l1_backward() {
    assert!(l1_grad_case(5) < LAYER_TOL);
}

#[test]
fn end_to_end_default_small() {
    let r = end_to_end_case(BitNetConfig::with_widths(vec![4, 8]), 11, 3, FD_STEP, true);
    assert!(r.worst < MODEL_TOL, "worst {:.2e}", r.worst);
    assert!(
        r.checked >= 40,
        "only {} samples away from kinks",
        r.checked
    );
}

#[test]
fn end_to_end_without_msfi_and_bit_info() {
    let cfg = BitNetConfig {
        use_msfi: false,
        use_bit_info: false,
        r_d: 1,
        ..BitNetConfig::with_widths(vec![4, 8])
    };
    let r = end_to_end_case(cfg, 12, 2, FD_STEP, true);
    assert!(r.worst < MODEL_TOL, "worst {:.2e}", r.worst);
}

#[test]
fn end_to_end_partial_disconnection() {
    let cfg = BitNetConfig {
        msfi_disconnect_from_smallest: 1,
        r_u: 1,
        ..BitNetConfig::with_widths(vec![4, 8])
    };
    let r = end_to_end_case(cfg, 13, 2, FD_STEP, true);
    assert!(r.worst < MODEL_TOL, "worst {:.2e}", r.worst);
}

#[test]
fn end_to_end_chan_variant() {
    let cfg = BitNetConfig {
        variant: bitexpand::Variant::Chan,
        ..BitNetConfig::with_widths(vec![4, 8])
    };
    let r = end_to_end_case(cfg, 15, 2, FD_STEP, true);
    assert!(r.worst < MODEL_TOL, "worst {:.2e}", r.worst);
}

/// A step small enough that no pre-activation crosses zero reaches every
/// parameter tensor, including those a 1e-3 step always pushes over a kink.
#[test]
fn end_to_end_small_step_covers_every_tensor() {
    let r = end_to_end_case(BitNetConfig::with_widths(vec![4, 8]), 14, 2, 1e-6, false);
    assert_eq!(r.tensors_covered, r.tensors);
    assert!(r.worst < MODEL_TOL, "worst {:.2e}", r.worst);
}
