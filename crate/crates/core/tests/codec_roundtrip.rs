use demoforge_core::codec::{read_demo, write_demo};
use demoforge_core::matchgen::random_stream;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn read_inverts_write(seed in any::<u64>(), max_events in 0usize..400) {
        let (header, events) = random_stream(seed, max_events);
        let bytes = write_demo(&header, &events).unwrap();
        let (h, ev, skipped) = read_demo(&bytes).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(ev, events);
        prop_assert_eq!(skipped, 0);
    }

    #[test]
    fn encoding_is_a_function(seed in any::<u64>()) {
        let (header, events) = random_stream(seed, 50);
        prop_assert_eq!(write_demo(&header, &events).unwrap(), write_demo(&header, &events).unwrap());
    }

    #[test]
    fn any_single_byte_flip_is_caught_or_harmless(seed in any::<u64>(), at in any::<prop::sample::Index>(), bit in 0u8..8) {
        let (header, events) = random_stream(seed, 40);
        let mut bytes = write_demo(&header, &events).unwrap();
        let i = at.index(bytes.len());
        bytes[i] ^= 1 << bit;
        if let Ok((h, ev, _)) = read_demo(&bytes) {
            // A flip the reader accepts must still produce a stream that re-encodes.
            prop_assert!(write_demo(&h, &ev).is_ok());
        }
    }
}
