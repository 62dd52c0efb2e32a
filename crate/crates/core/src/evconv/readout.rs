use super::{CountMap, ReadoutBank, ResponseMap};
use crate::error::{Error, Result};
use crate::real::Real;

/// Stride-`K` convolution of a count map: each `K x K` block is dotted with
/// the channel's kernel, and polarity channels are summed. Blocks never
/// overlap, so this is a blocked dot product. Sums run in `f64` and are
/// rounded to `F` once per output value.
pub fn strided_readout<F: Real>(cmap: &CountMap, bank: &ReadoutBank<F>) -> Result<ResponseMap<F>> {
    let k = cmap.kernel_size();
    if bank.size() != k {
        return Err(Error::arg(format!(
            "kernel size {} does not match count map K={k}",
            bank.size()
        )));
    }
    if bank.in_channels() != cmap.channels() {
        return Err(Error::arg(format!(
            "readout expects {} input channels, count map has {}",
            bank.in_channels(),
            cmap.channels()
        )));
    }
    let (h, w) = (cmap.height(), cmap.width());
    let gw = cmap.grid_width();
    let plane = cmap.grid_height() * gw;
    let counts = cmap.counts();
    let mut values = Vec::with_capacity(bank.out_channels() * h * w);
    for o in 0..bank.out_channels() {
        let mut acc = vec![0.0f64; h * w];
        for p in 0..cmap.channels() {
            let kern = bank.kernel_slice(o, p);
            if kern.iter().all(|v| v.is_zero()) {
                continue;
            }
            let base = p * plane;
            for i in 0..h {
                for j in 0..w {
                    let mut sum = 0.0f64;
                    for a in 0..k {
                        let line = base + (i * k + a) * gw + j * k;
                        for b in 0..k {
                            let n = counts[line + b];
                            if n != 0 {
                                sum += n as f64 * kern[a * k + b].as_f64();
                            }
                        }
                    }
                    acc[i * w + j] += sum;
                }
            }
        }
        values.extend(acc.into_iter().map(F::from_f64));
    }
    Ok(ResponseMap::from_values(bank.out_channels(), h, w, values).expect("sized above"))
}
