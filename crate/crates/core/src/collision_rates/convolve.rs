//! Self-convolution of per-axis overlap tables for axes sharing a frequency.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Dense cube of side `d` holding `T(a, b, c)` at `(a·d + b)·d + c`.
#[derive(Debug, Clone)]
pub struct Cube {
    pub d: usize,
    pub data: Vec<f64>,
}

impl Cube {
    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.d + b) * self.d + c]
    }
}

/// Direct `fold`-fold self-convolution (reference implementation).
pub fn convolve_direct(p: &Cube, fold: usize) -> Cube {
    let d = p.d;
    let mut acc = p.clone();
    for _ in 1..fold {
        let mut out = vec![0.0; d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    if (a + b + c) % 2 == 1 {
                        continue;
                    }
                    let mut s = 0.0;
                    for x in 0..=a {
                        for y in 0..=b {
                            for z in 0..=c {
                                let u = acc.get(x, y, z);
                                if u != 0.0 {
                                    s += u * p.get(a - x, b - y, c - z);
                                }
                            }
                        }
                    }
                    out[(a * d + b) * d + c] = s;
                }
            }
        }
        acc = Cube { d, data: out };
    }
    acc
}

fn smooth_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for f in [2, 3, 5] {
            while m.is_multiple_of(f) {
                m /= f;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

fn fft_axis(buf: &mut [Complex<f64>], l: usize, axis: usize, fft: &dyn rustfft::Fft<f64>) {
    let stride = match axis {
        0 => l * l,
        1 => l,
        _ => 1,
    };
    let mut line = vec![Complex::new(0.0, 0.0); l];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for u in 0..l {
        for v in 0..l {
            let base = match axis {
                0 => u * l + v,
                1 => u * l * l + v,
                _ => (u * l + v) * l,
            };
            for (t, slot) in line.iter_mut().enumerate() {
                *slot = buf[base + t * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (t, slot) in line.iter().enumerate() {
                buf[base + t * stride] = *slot;
            }
        }
    }
}

/// `fold`-fold self-convolution by FFT on a periodic grid large enough to
/// avoid wrap-around; results below index `d` are returned. Entries with
/// odd index sum are set to zero exactly, negative round-off is clamped.
pub fn convolve_fft(p: &Cube, fold: usize) -> Cube {
    let d = p.d;
    if fold == 1 {
        return p.clone();
    }
    let l = smooth_size(fold * (d - 1) + 1);
    let mut buf = vec![Complex::new(0.0, 0.0); l * l * l];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                buf[(a * l + b) * l + c] = Complex::new(p.get(a, b, c), 0.0);
            }
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(l);
    let inv = planner.plan_fft_inverse(l);
    for axis in 0..3 {
        fft_axis(&mut buf, l, axis, fwd.as_ref());
    }
    for z in buf.iter_mut() {
        *z = z.powu(fold as u32);
    }
    for axis in 0..3 {
        fft_axis(&mut buf, l, axis, inv.as_ref());
    }
    let norm = 1.0 / (l * l * l) as f64;
    let mut data = vec![0.0; d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                if (a + b + c) % 2 == 1 {
                    continue;
                }
                let v = buf[(a * l + b) * l + c].re * norm;
                data[(a * d + b) * d + c] = v.max(0.0);
            }
        }
    }
    Cube { d, data }
}

/// Picks the direct method for small cubes and the FFT otherwise.
pub fn self_convolve(p: &Cube, fold: usize) -> Cube {
    if fold == 1 {
        p.clone()
    } else if p.d <= 12 {
        convolve_direct(p, fold)
    } else {
        convolve_fft(p, fold)
    }
}
