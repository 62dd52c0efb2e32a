use super::{Kernel, ResponseMap};
use crate::event::{EventStream, Polarity};
use crate::real::Real;

/// Direct event-by-event convolution: every event adds the kernel, centered
/// on its pixel, to its polarity's response channel. Stamps falling outside
/// the sensor are dropped. Accumulation follows stream order in `f64` and is
/// rounded to `F` once at the end.
pub fn event_conv_reference<F: Real>(stream: &EventStream, kernel: &Kernel<F>) -> ResponseMap<F> {
    let height = stream.height() as usize;
    let width = stream.width() as usize;
    let c = kernel.center() as isize;
    let mut acc = vec![0.0f64; Polarity::COUNT * height * width];
    for e in stream.events() {
        let ch = e.polarity.channel();
        for dr in -c..=c {
            let row = e.y as isize + dr;
            if row < 0 || row >= height as isize {
                continue;
            }
            for dc in -c..=c {
                let col = e.x as isize + dc;
                if col < 0 || col >= width as isize {
                    continue;
                }
                let w = kernel.get((c + dr) as usize, (c + dc) as usize);
                acc[(ch * height + row as usize) * width + col as usize] += w.as_f64();
            }
        }
    }
    let values = acc.into_iter().map(F::from_f64).collect();
    ResponseMap::from_values(Polarity::COUNT, height, width, values).expect("sized above")
}
