mod common;

use common::gaussian_matrix;
use sparsecode::io::{
    decode_matrix, encode_matrix, load_matrix, matrix_from_csv, matrix_to_csv, read_matrix,
    save_matrix, write_matrix, IoError,
};
use sparsecode::numerics::Matrix;

fn ulp_distance(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

#[test]
fn binary_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.scmx");
    let m = gaussian_matrix(16, 16, 1);
    write_matrix(&path, &m).unwrap();
    let back = read_matrix(&path).unwrap();
    assert!(m
        .as_slice()
        .iter()
        .zip(back.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(std::fs::read(&path).unwrap().len(), 24 + 16 * 16 * 8);
}

#[test]
fn payload_is_column_major_little_endian() {
    let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
    let b = encode_matrix(&m);
    assert_eq!(&b[8..16], &2u64.to_le_bytes());
    assert_eq!(&b[16..24], &3u64.to_le_bytes());
    let vals: Vec<f64> = b[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(vals, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
}

#[test]
fn csv_round_trip_within_one_ulp() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let m = gaussian_matrix(9, 13, 2);
    save_matrix(&path, &m).unwrap();
    let back = load_matrix(&path).unwrap();
    assert_eq!((back.rows(), back.cols()), (9, 13));
    for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
        assert!(ulp_distance(*a, *b) <= 1);
    }
    let text = matrix_to_csv(&m);
    assert!(text.starts_with("9,13\n"));
    assert_eq!(text.lines().count(), 10);
    assert_eq!(matrix_from_csv(&text).unwrap().rows(), 9);
}

#[test]
fn truncation_reports_expected_and_actual_lengths() {
    let bytes = encode_matrix(&gaussian_matrix(4, 4, 3));
    let cut = &bytes[..100];
    let err = decode_matrix(cut).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(
        err,
        IoError::Truncated {
            expected: 128,
            actual: 76,
            ..
        }
    ));
    assert!(msg.contains("128") && msg.contains("76"), "{msg}");

    let header_only = &bytes[..10];
    assert!(matches!(
        decode_matrix(header_only),
        Err(IoError::Truncated { .. })
    ));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_matrix(&dir.path().join("absent.scmx")).unwrap_err();
    assert!(matches!(err, IoError::Io { .. }));
}
