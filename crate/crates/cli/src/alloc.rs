//! Analytic working-set estimates from declared transient buffers.

use std::fmt;

use crate::bench::{Kernel, Variant};

/// Symbolic buffer dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    /// Batch size.
    N,
    /// Embedding dimension.
    D,
    /// Group size.
    B,
    /// Number of groups, `ceil(d / b)`.
    Groups,
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Extent::N => "n",
            Extent::D => "d",
            Extent::B => "b",
            Extent::Groups => "g",
        })
    }
}

const F64: usize = 8;
const C64: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferDecl {
    pub name: &'static str,
    pub dims: &'static [Extent],
    pub elem_bytes: usize,
    /// Only allocated when gradients are requested.
    pub grad_only: bool,
}

impl BufferDecl {
    const fn new(name: &'static str, dims: &'static [Extent], elem_bytes: usize) -> Self {
        Self { name, dims, elem_bytes, grad_only: false }
    }

    const fn grad(name: &'static str, dims: &'static [Extent], elem_bytes: usize) -> Self {
        Self { name, dims, elem_bytes, grad_only: true }
    }

    pub fn bytes(&self, n: usize, d: usize, b: usize) -> u128 {
        let groups = d.div_ceil(b.max(1));
        self.dims.iter().fold(self.elem_bytes as u128, |acc, e| {
            acc * match e {
                Extent::N => n,
                Extent::D => d,
                Extent::B => b,
                Extent::Groups => groups,
            } as u128
        })
    }

    /// True when the buffer is `d x d` (or larger in `d`).
    pub fn is_quadratic_in_d(&self) -> bool {
        self.dims.iter().filter(|&&e| e == Extent::D).count() >= 2
    }
}

impl fmt::Display for BufferDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(ToString::to_string).collect();
        write!(f, "{}[{}]x{}B", self.name, dims.join("*"), self.elem_bytes)
    }
}

use Extent::{Groups, B, D, N};

const STD_PAIR: [BufferDecl; 2] = [BufferDecl::new("view_a", &[N, D], F64), BufferDecl::new("view_b", &[N, D], F64)];
const PAIR_GRADS: [BufferDecl; 2] =
    [BufferDecl::grad("grad_a", &[N, D], F64), BufferDecl::grad("grad_b", &[N, D], F64)];

/// Transient buffers a kernel allocates beyond its inputs.
pub fn declared_buffers(kernel: Kernel, variant: Variant) -> Vec<BufferDecl> {
    let mut out = Vec::new();
    match (kernel, variant) {
        (Kernel::RsumCross, Variant::Fft) => {
            out.extend(STD_PAIR);
            out.push(BufferDecl::new("spectra_a", &[N, Groups, B], C64));
            out.push(BufferDecl::new("spectra_b", &[N, Groups, B], C64));
            out.push(BufferDecl::new("accumulated", &[Groups, Groups, B], C64));
            out.push(BufferDecl::new("summaries", &[Groups, Groups, B], F64));
            out.push(BufferDecl::grad("summary_grad", &[Groups, Groups, B], F64));
            out.push(BufferDecl::grad("grad_spectra", &[N, Groups, B], C64));
            out.extend(PAIR_GRADS);
        }
        (Kernel::RsumCross, Variant::Naive) => {
            out.extend(STD_PAIR);
            out.push(BufferDecl::new("cross_correlation", &[D, D], F64));
            out.push(BufferDecl::new("summaries", &[Groups, Groups, B], F64));
            out.push(BufferDecl::grad("matrix_grad", &[D, D], F64));
            out.extend(PAIR_GRADS);
        }
        (Kernel::RsumCov, Variant::Fft) => {
            out.push(BufferDecl::new("centered", &[N, D], F64));
            out.push(BufferDecl::new("spectra", &[N, Groups, B], C64));
            out.push(BufferDecl::new("accumulated", &[Groups, Groups, B], C64));
            out.push(BufferDecl::new("summaries", &[Groups, Groups, B], F64));
            out.push(BufferDecl::grad("summary_grad", &[Groups, Groups, B], F64));
            out.push(BufferDecl::grad("grad_spectra", &[N, Groups, B], C64));
            out.push(BufferDecl::grad("grad", &[N, D], F64));
        }
        (Kernel::RsumCov, Variant::Naive) => {
            out.push(BufferDecl::new("centered", &[N, D], F64));
            out.push(BufferDecl::new("covariance", &[D, D], F64));
            out.push(BufferDecl::new("summaries", &[Groups, Groups, B], F64));
            out.push(BufferDecl::grad("matrix_grad", &[D, D], F64));
            out.push(BufferDecl::grad("matrix_grad_sym", &[D, D], F64));
            out.push(BufferDecl::grad("grad", &[N, D], F64));
        }
        (Kernel::RoffCross, _) => {
            out.extend(STD_PAIR);
            out.push(BufferDecl::new("cross_correlation", &[D, D], F64));
            out.extend(PAIR_GRADS);
        }
        (Kernel::RoffCov, _) => {
            out.push(BufferDecl::new("centered", &[N, D], F64));
            out.push(BufferDecl::new("covariance", &[D, D], F64));
            out.push(BufferDecl::grad("matrix_grad_sym", &[D, D], F64));
            out.push(BufferDecl::grad("grad", &[N, D], F64));
        }
        (Kernel::Rvar, Variant::Fft) => {
            out.push(BufferDecl::new("centered", &[N, D], F64));
            out.push(BufferDecl::new("variances", &[D], F64));
            out.push(BufferDecl::grad("grad", &[N, D], F64));
        }
        (Kernel::Rvar, Variant::Naive) => {
            out.push(BufferDecl::new("centered", &[N, D], F64));
            out.push(BufferDecl::new("covariance", &[D, D], F64));
            out.push(BufferDecl::grad("grad", &[N, D], F64));
        }
    }
    out
}

/// Sum of all declared buffers that are live for this configuration.
pub fn peak_bytes(kernel: Kernel, variant: Variant, n: usize, d: usize, b: usize, grad: bool) -> u128 {
    declared_buffers(kernel, variant).iter().filter(|x| grad || !x.grad_only).map(|x| x.bytes(n, d, b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_counts() {
        let x = BufferDecl::new("x", &[N, Groups, B], C64);
        // d = 10, b = 4 -> 3 groups
        assert_eq!(x.bytes(2, 10, 4), 16 * 2 * 3 * 4);
        assert!(!x.is_quadratic_in_d());
        assert!(BufferDecl::new("c", &[D, D], F64).is_quadratic_in_d());
        assert_eq!(x.to_string(), "x[n*g*b]x16B");
    }

    #[test]
    fn gradient_buffers_are_optional() {
        let with = peak_bytes(Kernel::RsumCross, Variant::Naive, 4, 8, 8, true);
        let without = peak_bytes(Kernel::RsumCross, Variant::Naive, 4, 8, 8, false);
        assert_eq!(with - without, (8 * 8 + 2 * 4 * 8) * 8);
    }
}
