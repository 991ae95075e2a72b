use std::io::Cursor;

use nalgebra::DMatrix;
use pnr_core::histogram::{build_histogram, pair_events, Channel, TimestampRecord};
use pnr_core::table::Table;
use pnr_core::timestamps::{read_binary, read_text, write_binary, write_text};
use proptest::prelude::*;

fn stream() -> impl Strategy<Value = Vec<TimestampRecord>> {
    prop::collection::vec((0u8..3, 0i64..1_000_000), 0..200).prop_map(|mut v| {
        v.sort_by_key(|p| p.1);
        v.into_iter()
            .map(|(c, t)| TimestampRecord::new(Channel::from_id(c).unwrap(), t))
            .collect()
    })
}

proptest! {
    #[test]
    fn text_round_trip(records in stream()) {
        let mut buf = Vec::new();
        write_text(&mut buf, &records).unwrap();
        prop_assert_eq!(read_text(Cursor::new(buf)).unwrap(), records);
    }

    #[test]
    fn binary_round_trip(records in stream()) {
        let mut buf = Vec::new();
        write_binary(&mut buf, &records).unwrap();
        prop_assert_eq!(buf.len(), records.len() * 9);
        prop_assert_eq!(read_binary(Cursor::new(buf)).unwrap(), records);
    }

    #[test]
    fn pairing_is_stable(records in stream()) {
        let a = pair_events(&records, 5_000).unwrap();
        let b = pair_events(&records, 5_000).unwrap();
        prop_assert_eq!(a.trials(), records.iter().filter(|r| r.channel == Channel::Trigger).count() as u64);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn halving_then_merging_bins_is_exact(diffs in prop::collection::vec(-50.0..350.0f64, 0..500), width in 1u32..8) {
        let w = width as f64;
        let coarse = build_histogram(&diffs, diffs.len() as u64, w, (0.0, 40.0 * w)).unwrap();
        let fine = build_histogram(&diffs, diffs.len() as u64, w / 2.0, (0.0, 40.0 * w)).unwrap();
        let merged = fine.rebin(2).unwrap();
        prop_assert_eq!(merged.bin_edges, coarse.bin_edges);
        prop_assert_eq!(merged.counts, coarse.counts);
    }

    #[test]
    fn tables_round_trip(values in prop::collection::vec(-1e12..1e12f64, 12)) {
        let m = DMatrix::from_row_slice(3, 4, &values);
        let t = Table::from_matrix("povm", &m).with_meta("seed", 42);
        let back = Table::read(Cursor::new(t.to_string_lossless())).unwrap();
        prop_assert_eq!(back.to_matrix().unwrap(), m);
        prop_assert_eq!(back.meta_value("seed"), Some("42"));
    }
}

#[test]
fn bins_are_half_open() {
    let h = build_histogram(&[1.5, 1.5, 2.5], 3, 1.0, (0.0, 3.0)).unwrap();
    assert_eq!(h.counts, vec![0, 2, 1]);
    let h = build_histogram(&[1.0, 2.0], 2, 1.0, (0.0, 3.0)).unwrap();
    assert_eq!(h.counts, vec![0, 1, 1]);
}
