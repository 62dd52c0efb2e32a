//! Slice-level numeric kernels shared by the forward and backward passes.
//! All gemm variants accumulate into `c`.

use crate::real::Real;

/// `c[m x n] += a[m x k] * b[k x n]`
pub(crate) fn gemm_nn<F: Real>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av.is_zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m x n] += a[m x k] * b[n x k]^T`
pub(crate) fn gemm_nt<F: Real>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            c[i * n + j] += acc;
        }
    }
}

/// `c[m x n] += a[k x m]^T * b[k x n]`
pub(crate) fn gemm_tn<F: Real>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F]) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av.is_zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Geometry of a grouped 2-D convolution over `[B, C, H, W]` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    /// Patch length per group.
    pub fn patch(&self) -> usize {
        (self.in_channels / self.groups) * self.kernel_h * self.kernel_w
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }
}

/// Patch extraction: returns `[groups][rows][patch]`.
pub(crate) fn im2col<F: Real>(g: &ConvGeom, input: &[F]) -> Vec<F> {
    let cg = g.in_channels / g.groups;
    let patch = g.patch();
    let rows = g.rows();
    let mut cols = vec![F::zero(); g.groups * rows * patch];
    for grp in 0..g.groups {
        for b in 0..g.batch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let row = (b * g.out_h + oy) * g.out_w + ox;
                    let dst = &mut cols[(grp * rows + row) * patch..(grp * rows + row + 1) * patch];
                    for ci in 0..cg {
                        let ch = grp * cg + ci;
                        let plane = (b * g.in_channels + ch) * g.height * g.width;
                        for ky in 0..g.kernel_h {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.height as isize {
                                continue;
                            }
                            for kx in 0..g.kernel_w {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix >= g.width as isize {
                                    continue;
                                }
                                dst[(ci * g.kernel_h + ky) * g.kernel_w + kx] =
                                    input[plane + iy as usize * g.width + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im<F: Real>(g: &ConvGeom, cols: &[F], input_grad: &mut [F]) {
    let cg = g.in_channels / g.groups;
    let patch = g.patch();
    let rows = g.rows();
    for grp in 0..g.groups {
        for b in 0..g.batch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let row = (b * g.out_h + oy) * g.out_w + ox;
                    let src = &cols[(grp * rows + row) * patch..(grp * rows + row + 1) * patch];
                    for ci in 0..cg {
                        let ch = grp * cg + ci;
                        let plane = (b * g.in_channels + ch) * g.height * g.width;
                        for ky in 0..g.kernel_h {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.height as isize {
                                continue;
                            }
                            for kx in 0..g.kernel_w {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix >= g.width as isize {
                                    continue;
                                }
                                input_grad[plane + iy as usize * g.width + ix as usize] +=
                                    src[(ci * g.kernel_h + ky) * g.kernel_w + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| v as f64 * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        gemm_nn(2, 3, 4, &a, &b, &mut c);
        let bt: Vec<f64> = (0..12).map(|i| b[(i % 3) * 4 + i / 3]).collect(); // 4x3
        let mut c2 = vec![0.0; 8];
        gemm_nt(2, 3, 4, &a, &bt, &mut c2);
        let at: Vec<f64> = (0..6).map(|i| a[(i % 2) * 3 + i / 2]).collect(); // 3x2
        let mut c3 = vec![0.0; 8];
        gemm_tn(2, 3, 4, &at, &b, &mut c3);
        assert_eq!(c, c2);
        assert_eq!(c, c3);
        assert_eq!(c[0], 0.0 * 0.0 + 1.0 * 2.0 + 2.0 * 4.0);
    }
}
