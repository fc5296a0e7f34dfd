use pdlayout::io::{decode_features, decode_raster, encode_features, encode_pgm, read_feature_file, read_raster, write_feature_file};
use pdlayout::raster::{r_sub, AttentionMap};
use pdlayout::{BBox, Element, ElementKind, Error, Layout};

/// Bytes laid out the way an external writer packs them: `"LFV1"`, little-endian u32 rows
/// and dim, then row-major little-endian f32 values.
fn external_lfv1(rows: &[[f32; 3]]) -> Vec<u8> {
    let mut bytes = b"LFV1".to_vec();
    bytes.extend((rows.len() as u32).to_le_bytes());
    bytes.extend(3u32.to_le_bytes());
    for r in rows {
        for v in r {
            bytes.extend(v.to_le_bytes());
        }
    }
    bytes
}

#[test]
fn externally_written_feature_files_round_trip() {
    let rows = [[0.5f32, -1.25, 3.0e-7], [f32::MAX, f32::MIN_POSITIVE, -0.0]];
    let bytes = external_lfv1(&rows);
    assert_eq!(bytes.len(), 12 + 4 * 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vgg.lfv");
    std::fs::write(&path, &bytes).unwrap();

    let fs = read_feature_file(&path).unwrap();
    assert_eq!((fs.len(), fs.dim()), (2, 3));
    for (row, expected) in fs.rows().zip(rows) {
        for (v, e) in row.iter().zip(expected) {
            assert_eq!((*v as f32).to_bits(), e.to_bits());
        }
    }
    let again = dir.path().join("again.lfv");
    write_feature_file(&fs, &again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), bytes);
    assert_eq!(encode_features(&decode_features(&bytes).unwrap()), bytes);
}

#[test]
fn malformed_feature_files_report_offsets() {
    let bytes = external_lfv1(&[[1.0, 2.0, 3.0]]);
    match decode_features(&bytes[..bytes.len() - 1]) {
        Err(Error::FeatureFile { offset, reason }) => {
            assert_eq!(offset, bytes.len() as u64 - 1);
            assert!(reason.contains("truncated"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(decode_features(b""), Err(Error::FeatureFile { offset: 0, .. })));
}

#[test]
fn attention_pgm_feeds_r_sub() {
    // 8-bit attention map: all mass in the left half.
    let (w, h) = (8usize, 4usize);
    let mut bytes = format!("P5\n# attention\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h).map(|i| if i % w < w / 2 { 200u8 } else { 0 }));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("attn.pgm");
    std::fs::write(&path, &bytes).unwrap();

    let raster = read_raster(&path).unwrap();
    let reencoded = encode_pgm(&raster);
    assert_eq!(reencoded[reencoded.len() - w * h..], bytes[bytes.len() - w * h..]);
    assert_eq!(decode_raster(&reencoded).unwrap(), raster);
    let attn = AttentionMap::new(raster).unwrap();
    let left = Layout::new(vec![Element::new(ElementKind::Logo, BBox::new(0.0, 0.0, 0.5, 1.0).unwrap())]).unwrap();
    let right = Layout::new(vec![Element::new(ElementKind::Text, BBox::new(0.5, 0.0, 0.5, 1.0).unwrap())]).unwrap();
    assert!((r_sub(&attn, &left, 1.0).unwrap().unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(r_sub(&attn, &right, 1.0).unwrap(), Some(0.0));
}
