use wavebc::geometry::{build_grid, DomainSpec, SpeedField};
use wavebc::wave::{assemble_response, read_response, read_response_for, write_response, BasisSpec};
use wavebc::Error;

#[test]
fn write_read_write_is_byte_identical() {
    let g = build_grid(&DomainSpec::square(1.0, 7, SpeedField::Linear { c0: 1.0, gx: 0.2, gy: 0.0 })).unwrap();
    let op = assemble_response(&g, &BasisSpec::with_stride(4), 0.5, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    write_response(&a, &op).unwrap();
    let back = read_response_for(&a, &g.hash()).unwrap();
    assert_eq!(back, op);
    write_response(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let bytes = std::fs::read(&a).unwrap();
    std::fs::write(&b, &bytes[..bytes.len() / 3]).unwrap();
    assert!(matches!(read_response(&b), Err(Error::CorruptFile(_))));

    let changed = build_grid(&DomainSpec::square(1.0, 7, SpeedField::Constant { c: 1.0 })).unwrap();
    assert!(matches!(read_response_for(&a, &changed.hash()), Err(Error::HashMismatch { .. })));
}
