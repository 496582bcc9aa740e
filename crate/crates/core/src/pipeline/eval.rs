//! The three scoring protocols: direct midpoint, skip-one (inputs two
//! frames away) and second iteration (midpoints of an estimated midpoint).

use rayon::prelude::*;

use super::{Interpolator, PairContext};
use crate::dataset::{make_gapped_triples, TripleSample};
use crate::error::{Error, Result};
use crate::metrics::{FrameScore, MetricsAccumulator, MetricsReport};
use crate::raster::{EventSequence, RainMap};

fn pool_scores(scores: Vec<FrameScore>) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    for s in &scores {
        acc.push_score(s)?;
    }
    acc.finish()
}

/// Predicts every target from its inputs and pools the scores.
pub fn eval_direct(
    interp: &dyn Interpolator,
    samples: &[TripleSample],
    threshold: f32,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let scores = samples
        .par_iter()
        .map(|s| {
            let (t0, t1) = s.provenance.input_times();
            let ctx = PairContext::new(s.provenance.event_id.clone(), t0, t1);
            let pred = interp.interpolate(&s.before, &s.after, &ctx)?;
            FrameScore::compute(&pred, &s.target, threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    pool_scores(scores)
}

/// `frame[s]` from `(frame[s-2], frame[s+2])` for every event.
pub fn eval_skip_one(
    interp: &dyn Interpolator,
    events: &[EventSequence],
    threshold: f32,
) -> Result<MetricsReport> {
    let samples: Vec<TripleSample> = events
        .iter()
        .flat_map(|e| make_gapped_triples(e, 2))
        .collect();
    if samples.is_empty() {
        return Err(Error::Config(
            "skip-one needs events with at least 5 frames".into(),
        ));
    }
    eval_direct(interp, &samples, threshold)
}

/// Second-iteration predictions for one event: for each centre `s`, the
/// estimate of `frame[s]` from `(frame[s-2], frame[s+2])` is used to
/// predict `frame[s-1]` and `frame[s+1]`. Returns `(prediction, truth)`
/// pairs in order.
pub fn second_iteration_pairs(
    interp: &dyn Interpolator,
    event: &EventSequence,
) -> Result<Vec<(RainMap, std::sync::Arc<RainMap>)>> {
    let f = event.frames();
    if f.len() < 5 {
        return Ok(Vec::new());
    }
    let id = &event.event_id;
    let per_centre = (2..f.len() - 2)
        .into_par_iter()
        .map(|s| {
            let t = s as f64;
            let centre = interp.interpolate(
                &f[s - 2],
                &f[s + 2],
                &PairContext::new(id.clone(), t - 2.0, t + 2.0),
            )?;
            let early = interp.interpolate(
                &f[s - 2],
                &centre,
                &PairContext::new(id.clone(), t - 2.0, t),
            )?;
            let late = interp.interpolate(
                &centre,
                &f[s + 2],
                &PairContext::new(id.clone(), t, t + 2.0),
            )?;
            Ok([(early, f[s - 1].clone()), (late, f[s + 1].clone())])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_centre.into_iter().flatten().collect())
}

pub fn eval_second_iteration(
    interp: &dyn Interpolator,
    events: &[EventSequence],
    threshold: f32,
) -> Result<MetricsReport> {
    let mut scores = Vec::new();
    for e in events {
        for (pred, truth) in second_iteration_pairs(interp, e)? {
            scores.push(FrameScore::compute(&pred, &truth, threshold)?);
        }
    }
    if scores.is_empty() {
        return Err(Error::Config(
            "second iteration needs events with at least 5 frames".into(),
        ));
    }
    pool_scores(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_triples;
    use crate::metrics::mae;
    use crate::pipeline::{NearestInterpolator, OracleInterpolator};
    use crate::synth::{gen_event, SynthConfig};

    fn event(n_frames: usize) -> (EventSequence, OracleInterpolator) {
        let cfg = SynthConfig {
            rows: 20,
            cols: 20,
            n_frames,
            seed: 5,
            ..Default::default()
        };
        let (e, o) = gen_event(&cfg).unwrap();
        (e, OracleInterpolator::new([o]))
    }

    #[test]
    fn nearest_on_static_event_is_perfect() {
        let frame = RainMap::new(2, 2, vec![0.5, 0.0, 0.2, 0.9], true).unwrap();
        let e = EventSequence::new("still", 5.0, vec![frame.clone(); 4]).unwrap();
        let r = eval_direct(&NearestInterpolator, &make_triples(&e), 0.0).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.pod, Some(1.0));
    }

    #[test]
    fn oracle_scores_zero_everywhere() {
        let (e, oracle) = event(7);
        let events = [e];
        let direct = eval_direct(&oracle, &make_triples(&events[0]), 0.0).unwrap();
        let skip = eval_skip_one(&oracle, &events, 0.0).unwrap();
        let second = eval_second_iteration(&oracle, &events, 0.0).unwrap();
        for r in [direct, skip, second] {
            assert!(r.mae < 1e-12, "{r:?}");
        }
        assert_eq!(skip.n_frames, 3);
        assert_eq!(second.n_frames, 6);
    }

    #[test]
    fn skip_one_counts_and_nearest_definition() {
        let (e, _) = event(5);
        let r = eval_skip_one(&NearestInterpolator, std::slice::from_ref(&e), 0.0).unwrap();
        assert_eq!(r.n_frames, 1);
        assert_eq!(r.mae, mae(e.frame(0), e.frame(2)).unwrap());
        let (short, _) = event(4);
        assert!(eval_skip_one(&NearestInterpolator, &[short], 0.0).is_err());
    }
}
