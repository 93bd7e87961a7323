use angmf::mapio::{
    read_kappa_map, read_normal_map, write_kappa_map, write_normal_map, KappaMap, NormalMap,
};
use angmf::rng::RngState;
use angmf::sampling::random_unit_vector;
use angmf::Error;
use proptest::prelude::*;

fn random_normal_map(seed: u64, w: usize, h: usize) -> NormalMap {
    let mut rng = RngState::new(seed);
    let dirs: Vec<_> = (0..w * h)
        .map(|_| (rng.next_f64() > 0.2).then(|| random_unit_vector(&mut rng)))
        .collect();
    NormalMap::from_directions(w, h, &dirs).unwrap()
}

fn random_kappa_map(seed: u64, w: usize, h: usize) -> KappaMap {
    let mut rng = RngState::new(seed);
    let values: Vec<_> = (0..w * h)
        .map(|_| (rng.next_f64() > 0.2).then(|| 1e3 * rng.next_f64().powi(3)))
        .collect();
    KappaMap::from_values(w, h, &values).unwrap()
}

proptest! {
    #[test]
    fn normal_maps_roundtrip(seed in any::<u64>(), w in 0usize..20, h in 0usize..20) {
        let m = random_normal_map(seed, w, h);
        let bytes = m.encode();
        prop_assert_eq!(bytes.len(), 13 + 12 * w * h);
        let back = NormalMap::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode(), bytes);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn kappa_maps_roundtrip(seed in any::<u64>(), w in 0usize..20, h in 0usize..20) {
        let m = random_kappa_map(seed, w, h);
        let bytes = m.encode();
        prop_assert_eq!(bytes.len(), 13 + 4 * w * h);
        let back = KappaMap::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode(), bytes);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn size_mismatch_is_rejected(seed in any::<u64>(), w in 1usize..10, h in 1usize..10, cut in 1usize..12) {
        let bytes = random_normal_map(seed, w, h).encode();
        let short = &bytes[..bytes.len() - cut];
        prop_assert!(
            matches!(NormalMap::decode(short), Err(Error::Format { .. })),
            "truncated file accepted"
        );
        let mut long = bytes.clone();
        long.extend(std::iter::repeat_n(0u8, cut));
        prop_assert!(
            matches!(NormalMap::decode(&long), Err(Error::Format { .. })),
            "oversized file accepted"
        );
    }
}

#[test]
fn files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let m = random_normal_map(11, 64, 64);
    let k = random_kappa_map(12, 64, 64);
    let (pn, pk) = (dir.path().join("n.snmp"), dir.path().join("k.skmp"));
    write_normal_map(&pn, &m).unwrap();
    write_kappa_map(&pk, &k).unwrap();
    assert_eq!(read_normal_map(&pn).unwrap(), m);
    assert_eq!(read_kappa_map(&pk).unwrap(), k);
    assert_eq!(std::fs::read(&pn).unwrap(), m.encode());
    assert!(matches!(
        read_normal_map(dir.path().join("missing")),
        Err(Error::Io(_))
    ));
}
