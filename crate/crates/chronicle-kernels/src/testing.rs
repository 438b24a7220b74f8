//! Fault-injection hooks for the verification harness.
//!
//! The `verify` command proves it can actually catch a broken kernel by
//! flipping one of these switches and expecting the matching suite to fail.
//! Faults are thread-local: arming one affects only the arming thread, so
//! parallel test runs stay isolated. Not intended for any other use.
#![doc(hidden)]

use std::cell::Cell;

thread_local! {
    static SWIGLU_BWD_SIGN_FLIP: Cell<bool> = const { Cell::new(false) };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the gate gradient inside `swiglu_bwd`.
    SwigluBwdSignFlip,
}

pub fn set_fault(fault: Fault, active: bool) {
    match fault {
        Fault::SwigluBwdSignFlip => SWIGLU_BWD_SIGN_FLIP.with(|f| f.set(active)),
    }
}

pub fn clear_faults() {
    set_fault(Fault::SwigluBwdSignFlip, false);
}

pub fn fault_active(fault: Fault) -> bool {
    match fault {
        Fault::SwigluBwdSignFlip => SWIGLU_BWD_SIGN_FLIP.with(Cell::get),
    }
}

/// Arm faults named in the given env-var value (comma separated). Used by
/// the CLI so an external process can exercise the mutation check.
pub fn arm_from_env(value: &str) {
    for name in value.split(',') {
        if name.trim() == "swiglu_bwd_sign_flip" {
            set_fault(Fault::SwigluBwdSignFlip, true);
        }
    }
}
