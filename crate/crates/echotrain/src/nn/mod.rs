//! Minimal deterministic neural-network toolkit.
//!
//! Everything runs in `f64` on the CPU with explicitly derived backward
//! passes. Layers cache what they need during `forward` and accumulate
//! parameter gradients during `backward`. All randomness (initialization,
//! dropout) flows through seeded ChaCha generators, so identical seeds give
//! bit-identical parameters and trajectories on the same platform.

pub mod adam;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod ops;

use ndarray::ArrayD;
use sha2::{Digest, Sha256};

/// Forward-pass mode. Train mode uses batch statistics and active dropout;
/// eval mode uses running statistics and disables dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// One named tensor inside a module: either a learnable parameter or
/// non-learned state (e.g. batch-norm running statistics).
pub enum Slot<'a> {
    Param(&'a mut Param),
    State(&'a mut ArrayD<f64>),
}

/// Anything with named parameters and state, visited in a stable order.
///
/// The visit order is part of the module's contract: optimizers key their
/// moment buffers by it and checkpoints serialize blobs in it.
pub trait NetModule {
    fn visit_slots(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_>));

    /// Number of learnable scalars.
    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_slots("", &mut |_, slot| {
            if let Slot::Param(p) = slot {
                n += p.len();
            }
        });
        n
    }

    /// Reset all parameter gradients to zero.
    fn zero_grads(&mut self) {
        self.visit_slots("", &mut |_, slot| {
            if let Slot::Param(p) = slot {
                p.zero_grad();
            }
        });
    }
}

/// SHA-256 over every named parameter and state tensor (names, shapes and
/// little-endian `f64` bytes). Identical checksums mean identical models.
pub fn checksum<M: NetModule + ?Sized>(model: &mut M) -> String {
    let mut hasher = Sha256::new();
    model.visit_slots("", &mut |name, slot| {
        let arr: &ArrayD<f64> = match slot {
            Slot::Param(p) => &p.value,
            Slot::State(s) => s,
        };
        hasher.update(name.as_bytes());
        for d in arr.shape() {
            hasher.update((*d as u64).to_le_bytes());
        }
        for v in arr.iter() {
            hasher.update(v.to_le_bytes());
        }
    });
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Checksum restricted to slots whose name matches `filter`.
pub fn checksum_filtered<M: NetModule + ?Sized>(
    model: &mut M,
    filter: &dyn Fn(&str) -> bool,
) -> String {
    let mut hasher = Sha256::new();
    model.visit_slots("", &mut |name, slot| {
        if !filter(name) {
            return;
        }
        let arr: &ArrayD<f64> = match slot {
            Slot::Param(p) => &p.value,
            Slot::State(s) => s,
        };
        hasher.update(name.as_bytes());
        for d in arr.shape() {
            hasher.update((*d as u64).to_le_bytes());
        }
        for v in arr.iter() {
            hasher.update(v.to_le_bytes());
        }
    });
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Join a visit prefix with a component name.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
