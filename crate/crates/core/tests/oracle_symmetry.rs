use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavebc::geometry::{build_grid, geodesic_distance_oracle, DomainSpec, SpeedField};

#[test]
fn distance_oracle_is_symmetric_on_a_fine_grid() {
    let g = build_grid(&DomainSpec::square(1.0, 61, SpeedField::Bump {
        c0: 1.0,
        amp: 0.4,
        center: [0.4, 0.6],
        width: 0.25,
    }))
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let sources: Vec<usize> = (0..12).map(|_| rng.random_range(0..g.len())).collect();
    let fields: Vec<Vec<f64>> = sources.iter().map(|&s| geodesic_distance_oracle(&g, s)).collect();
    let mut pairs = 0;
    for (i, &a) in sources.iter().enumerate() {
        for (j, &b) in sources.iter().enumerate().skip(i + 1) {
            let (dab, dba) = (fields[i][b], fields[j][a]);
            assert!((dab - dba).abs() <= 1e-12 * dab.max(1.0), "{a} -> {b}: {dab} vs {dba}");
            pairs += 1;
        }
    }
    // Triangle inequality through every third source.
    for i in 0..sources.len() {
        for j in 0..sources.len() {
            for k in 0..sources.len() {
                let (b, c) = (sources[j], sources[k]);
                assert!(fields[i][c] <= fields[i][b] + fields[j][c] + 1e-12);
            }
        }
    }
    assert!(pairs >= 66);
    // Node-to-node symmetry over a further batch of random pairs.
    for _ in 0..60 {
        let (a, b) = (rng.random_range(0..g.len()), rng.random_range(0..g.len()));
        let (dab, dba) = (geodesic_distance_oracle(&g, a)[b], geodesic_distance_oracle(&g, b)[a]);
        assert!((dab - dba).abs() <= 1e-12 * dab.max(1.0));
        pairs += 1;
    }
    assert!(pairs >= 100);
}
