//! On-disk formats: RGRD golden bytes, bit-exact round trips, event
//! directories.

use proptest::prelude::*;

use rainres::raster::{
    read_event_dir, read_grid, read_grid_file, write_event_dir, write_grid, EventSequence, RainMap,
};
use rainres::Error;

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden_2x2.rgrd");

#[test]
fn golden_file_decodes() {
    let map = read_grid_file(GOLDEN).unwrap();
    assert_eq!(map.shape(), (2, 2));
    assert!(map.is_normalized());
    assert_eq!(map.values(), &[0.0, 0.5, 1.0, 0.25]);
}

#[test]
fn golden_file_reencodes_identically() {
    let bytes = std::fs::read(GOLDEN).unwrap();
    let mut out = Vec::new();
    let n = write_grid(&read_grid(&bytes[..]).unwrap(), &mut out).unwrap();
    assert_eq!(n, 13 + 4 * 4);
    assert_eq!(out, bytes);
}

#[test]
fn damaged_golden_files_are_rejected() {
    let bytes = std::fs::read(GOLDEN).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(read_grid(&bad_magic[..]), Err(Error::Format(_))));
    assert!(matches!(
        read_grid(&bytes[..bytes.len() - 1]),
        Err(Error::Truncated { .. })
    ));
    let mut out_of_range = bytes.clone();
    out_of_range[13..17].copy_from_slice(&2.0f32.to_le_bytes());
    assert!(matches!(
        read_grid(&out_of_range[..]),
        Err(Error::Domain(_))
    ));
}

fn any_map() -> impl Strategy<Value = RainMap> {
    (1usize..24, 1usize..24, any::<bool>()).prop_flat_map(|(r, c, normalized)| {
        let cell = if normalized {
            (0.0f32..=1.0).boxed()
        } else {
            (0.0f32..500.0).boxed()
        };
        proptest::collection::vec(cell, r * c)
            .prop_map(move |v| RainMap::new(r, c, v, normalized).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn grid_round_trip_is_bit_exact(map in any_map()) {
        let mut bytes = Vec::new();
        write_grid(&map, &mut bytes).unwrap();
        prop_assert_eq!(bytes.len(), 13 + 4 * map.len());
        let back = read_grid(&bytes[..]).unwrap();
        prop_assert_eq!(back.shape(), map.shape());
        prop_assert_eq!(back.is_normalized(), map.is_normalized());
        let same_bits = back.values().iter().zip(map.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
    }
}

#[test]
fn event_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<RainMap> = (0..4)
        .map(|k| {
            RainMap::new(
                3,
                5,
                (0..15).map(|i| ((i * k) % 7) as f32 / 7.0).collect(),
                true,
            )
            .unwrap()
        })
        .collect();
    let start = chrono::NaiveDate::from_ymd_opt(2017, 6, 1)
        .unwrap()
        .and_hms_opt(12, 0, 0)
        .unwrap();
    let event = EventSequence::new("storm", 5.0, frames.clone())
        .unwrap()
        .with_start_time(start);
    write_event_dir(&event, dir.path().join("storm")).unwrap();
    let back = read_event_dir(dir.path().join("storm")).unwrap();
    assert_eq!(back.event_id, "storm");
    assert_eq!(back.step_minutes, 5.0);
    assert_eq!(back.year(), Some(2017));
    for (a, b) in back.frames().iter().zip(&frames) {
        assert_eq!(a.as_ref(), b);
    }
}
