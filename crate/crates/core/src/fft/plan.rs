//! Complex FFT plans: iterative radix-2 for power-of-two lengths, Bluestein's
//! chirp-z algorithm (on a power-of-two inner plan) for everything else.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Trivial,
    Radix2 {
        /// `exp(-2 pi i k / len)` for `k < len / 2`
        twiddles: Vec<Complex64>,
        bitrev: Vec<usize>,
    },
    Bluestein {
        inner: Box<FftPlan>,
        /// `exp(-pi i k^2 / len)` for `k < len`
        chirp: Vec<Complex64>,
        /// Forward transform of the zero-padded conjugate chirp, pre-scaled
        /// by `1 / inner_len`.
        kernel: Vec<Complex64>,
    },
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        let kind = if len <= 1 {
            Kind::Trivial
        } else if len.is_power_of_two() {
            let twiddles = (0..len / 2)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / len as f64))
                .collect();
            let bits = len.trailing_zeros();
            let bitrev = (0..len).map(|i| i.reverse_bits() >> (usize::BITS - bits)).collect();
            Kind::Radix2 { twiddles, bitrev }
        } else {
            let m = (2 * len - 1).next_power_of_two();
            let inner = FftPlan::new(m);
            // k^2 mod 2len keeps the phase argument small
            let chirp: Vec<Complex64> = (0..len)
                .map(|k| {
                    let k2 = (k as u128 * k as u128 % (2 * len as u128)) as f64;
                    Complex64::from_polar(1.0, -PI * k2 / len as f64)
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for k in 1..len {
                kernel[k] = chirp[k].conj();
                kernel[m - k] = chirp[k].conj();
            }
            inner.forward(&mut kernel);
            let s = 1.0 / m as f64;
            kernel.iter_mut().for_each(|x| *x *= s);
            Kind::Bluestein { inner: Box::new(inner), chirp, kernel }
        };
        Self { len, kind }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `X_k = sum_j x_j exp(-2 pi i jk / len)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2 { twiddles, bitrev } => radix2(buf, twiddles, bitrev),
            Kind::Bluestein { inner, chirp, kernel } => {
                let m = inner.len();
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for ((w, x), c) in work.iter_mut().zip(buf.iter()).zip(chirp) {
                    *w = x * c;
                }
                inner.forward(&mut work);
                for (w, k) in work.iter_mut().zip(kernel) {
                    *w = w.conj() * k.conj();
                }
                // inverse via conjugation; the 1/m factor is folded into `kernel`
                inner.forward(&mut work);
                for ((x, w), c) in buf.iter_mut().zip(&work).zip(chirp) {
                    *x = w.conj() * c;
                }
            }
        }
    }

    /// In-place normalized inverse transform.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        buf.iter_mut().for_each(|x| *x = x.conj());
        self.forward(buf);
        let s = 1.0 / self.len.max(1) as f64;
        buf.iter_mut().for_each(|x| *x = x.conj() * s);
    }
}

fn radix2(buf: &mut [Complex64], twiddles: &[Complex64], bitrev: &[usize]) {
    let n = buf.len();
    for (i, &r) in bitrev.iter().enumerate() {
        if i < r {
            buf.swap(i, r);
        }
    }
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for chunk in buf.chunks_exact_mut(size) {
            let (lo, hi) = chunk.split_at_mut(half);
            for (j, (u, v)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                let t = *v * twiddles[j * stride];
                *v = *u - t;
                *u += t;
            }
        }
        size *= 2;
    }
}
