use super::EventStream;
use crate::error::{Error, Result};

/// First integer timestamp of bin `i` out of `t_steps`, i.e. `ceil(i * duration / t_steps)`.
pub(crate) fn bin_start(i: usize, duration: u32, t_steps: usize) -> u32 {
    let num = i as u64 * duration as u64;
    let den = t_steps as u64;
    num.div_ceil(den) as u32
}

/// Index of the half-open interval `[i*D/T, (i+1)*D/T)` holding `t`. A
/// timestamp equal to the duration goes to the final bin.
#[inline]
pub(crate) fn bin_index(t: u32, duration: u32, t_steps: usize) -> usize {
    if duration == 0 {
        return t_steps - 1;
    }
    let i = (t as u64 * t_steps as u64 / duration as u64) as usize;
    i.min(t_steps - 1)
}

/// Splits a stream into `t_steps` uniform time bins. Each bin is re-based so
/// its timestamps count from the bin's first integer microsecond.
pub fn bin_events(stream: &EventStream, t_steps: usize) -> Result<Vec<EventStream>> {
    if t_steps == 0 {
        return Err(Error::arg("t_steps must be at least 1"));
    }
    let duration = stream.duration();
    let starts: Vec<u32> = (0..=t_steps)
        .map(|i| bin_start(i, duration, t_steps))
        .collect();
    let mut bins: Vec<Vec<_>> = vec![Vec::new(); t_steps];
    for e in stream.events() {
        let i = bin_index(e.t, duration, t_steps);
        let mut rebased = *e;
        rebased.t -= starts[i];
        bins[i].push(rebased);
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(i, events)| {
            EventStream::from_parts_unchecked(
                stream.width(),
                stream.height(),
                starts[i + 1] - starts[i],
                events,
            )
        })
        .collect())
}

/// Keeps the events with `t < time_length`; the result's duration is
/// `min(time_length, duration)`.
pub fn truncate_prefix(stream: &EventStream, time_length: u32) -> Result<EventStream> {
    if time_length == 0 {
        return Err(Error::arg("time length must be positive"));
    }
    let events: Vec<_> = stream
        .events()
        .iter()
        .take_while(|e| e.t < time_length)
        .copied()
        .collect();
    Ok(EventStream::from_parts_unchecked(
        stream.width(),
        stream.height(),
        time_length.min(stream.duration()),
        events,
    ))
}
