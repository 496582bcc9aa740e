use std::sync::Arc;

use rayon::prelude::*;

use super::{Interpolator, PairContext};
use crate::error::{Error, Result};
use crate::raster::{EventSequence, RainMap};

/// Frame count after `depth` rounds of midpoint insertion on `n` frames.
pub fn upsampled_len(n: usize, depth: u32) -> usize {
    if n == 0 {
        0
    } else {
        (n - 1) * (1usize << depth) + 1
    }
}

/// Inserts a midpoint between every adjacent pair, `depth` times. Original
/// frames are kept (shared, not copied) at positions `k * 2^depth`; the
/// time step is divided by `2^depth`.
pub fn recursive_upsample(
    interp: &dyn Interpolator,
    event: &EventSequence,
    depth: u32,
) -> Result<EventSequence> {
    if depth == 0 {
        return Err(Error::Config("upsampling depth must be at least 1".into()));
    }
    if depth > 16 {
        return Err(Error::Config(format!(
            "upsampling depth {depth} is unreasonably large"
        )));
    }
    let mut frames: Vec<Arc<RainMap>> = event.frames().to_vec();
    for level in 0..depth {
        // Frame spacing at this level in units of the source event's frames.
        let spacing = 1.0 / (1u64 << level) as f64;
        let mids = frames
            .par_windows(2)
            .enumerate()
            .map(|(k, pair)| {
                let ctx = PairContext::new(
                    event.event_id.clone(),
                    k as f64 * spacing,
                    (k + 1) as f64 * spacing,
                );
                interp.interpolate(&pair[0], &pair[1], &ctx).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::with_capacity(frames.len() + mids.len());
        for (frame, mid) in frames.iter().zip(mids) {
            next.push(frame.clone());
            next.push(mid);
        }
        next.extend(frames.last().cloned());
        frames = next;
    }
    let step = event.step_minutes / (1u64 << depth) as f64;
    let mut out = EventSequence::from_shared(event.event_id.clone(), step, frames)?;
    out.start_time = event.start_time;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{NearestInterpolator, OracleInterpolator};
    use crate::synth::{gen_event, SynthConfig};

    fn two_frames() -> EventSequence {
        let a = RainMap::new(1, 2, vec![0.1, 0.7], true).unwrap();
        let b = RainMap::new(1, 2, vec![0.3, 0.0], true).unwrap();
        EventSequence::new("pair", 5.0, vec![a, b]).unwrap()
    }

    #[test]
    fn frame_counts_and_step() {
        let e = two_frames();
        let d1 = recursive_upsample(&NearestInterpolator, &e, 1).unwrap();
        assert_eq!(d1.len(), 3);
        let d3 = recursive_upsample(&NearestInterpolator, &e, 3).unwrap();
        assert_eq!(d3.len(), 9);
        assert_eq!(d3.len() - 2, (1 << 3) - 1);
        assert_eq!(d3.step_minutes, 0.625);
        assert_eq!(d3.frame(0), e.frame(0));
        assert_eq!(d3.frame(8), e.frame(1));
        assert!(recursive_upsample(&NearestInterpolator, &e, 0).is_err());
    }

    #[test]
    fn oracle_times_follow_levels() {
        let cfg = SynthConfig {
            rows: 12,
            cols: 12,
            n_frames: 3,
            seed: 2,
            ..Default::default()
        };
        let (e, oracle) = gen_event(&cfg).unwrap();
        let interp = OracleInterpolator::new([oracle.clone()]);
        let up = recursive_upsample(&interp, &e, 2).unwrap();
        assert_eq!(up.len(), upsampled_len(3, 2));
        for (k, f) in up.frames().iter().enumerate() {
            assert_eq!(f.as_ref(), &oracle.field_at(k as f64 / 4.0), "frame {k}");
        }
    }

    #[test]
    fn len_formula() {
        assert_eq!(upsampled_len(2, 3), 9);
        assert_eq!(upsampled_len(5, 1), 9);
        assert_eq!(upsampled_len(0, 4), 0);
    }
}
