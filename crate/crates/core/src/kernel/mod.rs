//! Memory kernels, convex moduli, and their numerical certification.

mod cert;
mod memory;
mod modulus;
pub(crate) mod profile;

pub use cert::{certify_condition_h, certify_hyp1, CertReport, Clause};
pub use memory::{kernel_mass, KernelFamily, MemoryKernel, TailDecl};
pub use modulus::{young_inequality_check, ConvexModulus};
